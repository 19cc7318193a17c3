#pragma once

#include "spinforge/channels.hpp"
#include "spinforge/noise.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace spinforge {

using GateList = std::vector<std::string>;

// prep, then germ repeated `power` times, then meas. An empty germ has power 0.
struct Circuit {
    GateList prep;
    GateList germ;
    int power = 0;
    GateList meas;

    GateList flatten() const;
    std::size_t length() const { return prep.size() + germ.size() * std::size_t(power) + meas.size(); }
    // prepFid|germ^p|measFid, ids joined by ':'
    std::string str() const;
    static Circuit parse(const std::string& text);

    bool operator==(const Circuit& o) const { return str() == o.str(); }
};

struct GstDesign {
    GateList gate_ids;
    std::vector<GateList> prep;
    std::vector<GateList> meas;
    std::vector<GateList> germs;
};

// Gi, Gx = X(pi/2), Gy = Y(pi/2); fiducials {}, X, Y, XX, XXX, YYY; 11 germs.
GstDesign default_design_1q();
// Xe Ye Xn Yn CRx; product fiducials from {}, X, Y, XX per qubit.
GstDesign default_design_2q();

// Germ-power circuits for depths 1, 2, 4, ..., max_depth (a power of two), power = floor(depth / |germ|).
std::vector<Circuit> design_experiment(const GateList& gate_ids, const std::vector<GateList>& prep,
                                       const std::vector<GateList>& meas, const std::vector<GateList>& germs,
                                       int max_depth);
std::vector<Circuit> design_experiment(const GstDesign& design, int max_depth);
// Fiducial sandwiches of nothing and of each gate, plus the bare-fiducial circuits LGST needs.
std::vector<Circuit> lgst_circuits(const GateList& gate_ids, const std::vector<GateList>& prep,
                                   const std::vector<GateList>& meas);
// lgst_circuits followed by design_experiment, without repeats.
std::vector<Circuit> full_design(const GstDesign& design, int max_depth);

std::string circuits_to_text(const std::vector<Circuit>& circuits);
std::vector<Circuit> circuits_from_text(const std::string& text);

// Gates as PTMs in the normalised Pauli basis, SPAM as Pauli vectors;
// p(k) = effects[k] . G_last ... G_first . rho.
struct GateSetEstimate {
    int n_qubits = 1;
    GateList labels;
    std::vector<RMat> gates;
    RVec rho;
    std::vector<RVec> effects;
    RMat gauge;  // accumulated T, estimate = T^-1 G T

    int dim2() const { return 1 << (2 * n_qubits); }
    int outcomes() const { return int(effects.size()); }
    int index(const std::string& label) const;  // ConfigError when absent
    const RMat& gate(const std::string& label) const { return gates[std::size_t(index(label))]; }
    RMat& gate(const std::string& label) { return gates[std::size_t(index(label))]; }
    PTM ptm(const std::string& label) const;
};

// Gi/Gx/Gy give the single-qubit set; gate names of the two-qubit library give the two-qubit set.
GateSetEstimate target_gate_set(const GateList& gate_ids);
GateSetEstimate with_ssro(const GateSetEstimate& gs, const SSROModel& model);
// Similarity transform: G -> T^-1 G T, rho -> T^-1 rho, E -> E T.
GateSetEstimate gauge_transform(const GateSetEstimate& gs, const RMat& T);
RVec circuit_probabilities(const GateSetEstimate& gs, const Circuit& c);
RVec sequence_probabilities(const GateSetEstimate& gs, const GateList& gates);
// Average gate fidelity of every gate against the target, same order as labels.
std::vector<double> gate_fidelities(const GateSetEstimate& est, const GateSetEstimate& target);
double spam_distance(const GateSetEstimate& a, const GateSetEstimate& b);
double gate_distance(const GateSetEstimate& a, const GateSetEstimate& b);  // max entrywise over gates

struct DatasetRow {
    Circuit circuit;
    std::vector<double> counts;  // probabilities when the dataset is exact
};

struct Dataset {
    int n_outcomes = 2;
    long shots = 0;  // 0: exact probabilities
    std::optional<SSROModel> ssro;
    std::vector<DatasetRow> rows;

    bool exact() const { return shots == 0; }
    std::map<std::string, std::size_t> index_by_circuit() const;
    std::vector<double> frequencies(const DatasetRow& row) const;
    double row_shots(const DatasetRow& row) const;
};

// Per-circuit truth, for data that no single gate set explains.
using CircuitTruth = std::function<GateSetEstimate(const Circuit&, std::size_t index)>;

// shots == 0 stores exact probabilities. Sampling uses a per-circuit stream
// derived from (seed, index), so results do not depend on threads.
Dataset simulate_dataset(const std::vector<Circuit>& circuits, const GateSetEstimate& truth, long shots,
                         std::uint64_t seed, const std::optional<SSROModel>& ssro = std::nullopt, unsigned threads = 0);
Dataset simulate_dataset(const std::vector<Circuit>& circuits, const CircuitTruth& truth, long shots,
                         std::uint64_t seed, const std::optional<SSROModel>& ssro = std::nullopt, unsigned threads = 0);

// CSV `circuit,outcome,count`; exact datasets use the header `circuit,outcome,probability`.
std::string dataset_to_csv(const Dataset& d);
Dataset dataset_from_csv(const std::string& text);

// Linear inversion, gauge-fixed to the target's fiducial states.
GateSetEstimate run_lgst(const Dataset& data, const std::vector<GateList>& prep, const std::vector<GateList>& meas,
                         const GateSetEstimate& target);

// Forces trace preservation and effect completeness.
GateSetEstimate tp_fix(const GateSetEstimate& gs);

// TP gauge (T = I + X with the first row of X zero) minimising the squared
// Frobenius distance to the target over gates and SPAM.
GateSetEstimate gauge_optimize(const GateSetEstimate& est, const GateSetEstimate& target);

// Trace-preserving parameter vector: rows 1.. of each gate, rho[1..], all effects but the last.
RVec pack_parameters(const GateSetEstimate& gs);
GateSetEstimate unpack_parameters(const RVec& x, const GateSetEstimate& shape);
int gauge_dimension(const GateSetEstimate& gs);

struct GstFitOptions {
    bool cptp = false;
    bool gauge_optimize = true;
    bool staged = true;  // fit growing germ depths in turn
    int max_iterations = 200;
    double tolerance = 1e-10;  // relative change of the objective
    // With sampled data, also stop once a step gains less than this fraction
    // of the statistic's spread sqrt(2k). Ill-conditioned directions otherwise crawl.
    double statistical_tolerance = 1e-3;
    unsigned threads = 0;
};

struct GstFit {
    GateSetEstimate estimate;       // gauge-optimised, projected when asked
    GateSetEstimate raw;            // optimiser output, before gauge moves and projection
    double two_delta_logl = 0.0;    // against the saturated model
    double two_delta_logl_unconstrained = 0.0;
    long k = 0;            // outcome degrees of freedom minus non-gauge parameters
    int n_params = 0;
    int n_gauge = 0;
    double n_sigma = 0.0;  // (2 dlogL - k) / sqrt(2k); 0 for exact data
    bool converged = false;
    int iterations = 0;
    std::string message;
    RMat covariance;  // over pack_parameters(raw)
};

// Poisson-deviance Levenberg-Marquardt over all circuits in the dataset.
GstFit run_long_sequence_fit(const Dataset& data, const GateSetEstimate& initial, const GstFitOptions& options = {},
                             const GateSetEstimate* target = nullptr);

// 2 dlogL of a gate set on a dataset.
double deviance(const Dataset& data, const GateSetEstimate& gs);

// Linear error propagation of a scalar function of the fitted gate set.
double propagated_stderr(const GstFit& fit, const std::function<double(const GateSetEstimate&)>& quantity,
                         double step = 1e-7);

nlohmann::json to_json(const GateSetEstimate& gs);
GateSetEstimate gate_set_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const GstFit& fit);
nlohmann::json to_json(const GstDesign& d);
GstDesign design_from_json(const nlohmann::json& doc, GstDesign base);

}  // namespace spinforge
