#pragma once

#include "spinforge/channels.hpp"
#include "spinforge/gates.hpp"
#include "spinforge/pulses.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace spinforge {

struct EnsembleMember {
    double detuning_e = 0.0;  // Hz
    double detuning_n = 0.0;  // Hz
    double weight = 0.0;
};

// Static detunings drawn once per shot. Gaussian ensembles with one non-zero
// width use Gauss-Hermite quadrature of order `sample_count`; with two
// non-zero widths (or monte_carlo set) they are sampled with `seed`.
struct QuasiStaticEnsemble {
    enum class Kind { gaussian, grid };
    Kind kind = Kind::gaussian;
    double sigma_e = 0.0;
    double sigma_n = 0.0;
    int sample_count = 21;
    bool monte_carlo = false;
    std::uint64_t seed = 0;
    std::vector<EnsembleMember> grid;  // Kind::grid

    static QuasiStaticEnsemble gaussian(double sigma_e, double sigma_n = 0.0, int order = 21);
    static QuasiStaticEnsemble fixed(double detuning_e, double detuning_n = 0.0);
    static QuasiStaticEnsemble from_grid(std::vector<EnsembleMember> members);

    void validate() const;
    std::vector<EnsembleMember> members() const;
};

// Nodes and weights (summing to one) for the standard normal density.
void gauss_hermite(int order, RVec& nodes, RVec& weights);

// Weighted mixture of per-member channels; members are evaluated in parallel
// and summed in a fixed order.
PTM average_channel(const QuasiStaticEnsemble& ensemble, const NoiseSpec& base,
                    const std::function<PTM(const NoiseSpec&)>& channel, unsigned threads = 0);
PTM average_channel(const SystemParams& params, const CalibrationSet& cal, GateId id,
                    const QuasiStaticEnsemble& ensemble, const NoiseSpec& base = {}, unsigned threads = 0);
// Arbitrary sequence scored on `context` levels, in its own simulation frame.
PTM average_channel(const SystemParams& params, const PulseSequence& seq, const QuasiStaticEnsemble& ensemble,
                    const std::vector<int>& context, const NoiseSpec& base = {}, unsigned threads = 0);

struct SSROModel {
    double F0 = 1.0;  // read 0 given 0
    double F1 = 1.0;  // read 1 given 1
    void validate() const;
    // P(read 0) for a state with population p0 in 0.
    double measured_zero(double p0) const { return F0 * p0 + (1.0 - F1) * (1.0 - p0); }
};

struct SSROCorrection {
    double p0 = 0.0;
    double p1 = 0.0;
    double stderr_ = 0.0;
};

// Central values are not clipped to [0, 1].
SSROCorrection ssro_correct(double m0, long shots, const SSROModel& model);

enum class FitModel { exponential_decay, stretched_exp, rb_decay, parabola, three_gaussian_dip };

std::string fit_model_name(FitModel m);
FitModel fit_model_from_name(const std::string& name);
std::vector<std::string> fit_parameter_names(FitModel m);
double fit_model_eval(FitModel m, const RVec& params, double x);

struct FitResult {
    FitModel model = FitModel::exponential_decay;
    std::vector<std::string> names;
    RVec params;
    RVec stderr_;
    RMat covariance;     // rescaled by chi2_reduced
    double chi2 = 0.0;
    double chi2_reduced = 0.0;
    int dof = 0;
    bool converged = false;
    std::string message;

    double value(const std::string& name) const;
    double error(const std::string& name) const;
};

// Weighted least squares. `initial` overrides the built-in starting guess.
//   exponential_decay  A exp(-x/T) + C                      (A, T, C)
//   stretched_exp      A exp(-(x/T)^n) + C                  (A, T, n, C)
//   rb_decay           0.5 + B p^x                          (B, p)
//   parabola           A + a (x - x0)^2                     (A, a, x0)
//   three_gaussian_dip a - sum_i A_i exp(-(x-x_i)^2/(2 s_i^2)) (a, A1, x1, s1, A2, x2, s2, A3, x3, s3)
FitResult fit_curve(const std::vector<double>& xs, const std::vector<double>& ys, const std::vector<double>& sigmas,
                    FitModel model, const std::vector<double>& initial = {});

nlohmann::json to_json(const FitResult& fit);
nlohmann::json to_json(const QuasiStaticEnsemble& e);
QuasiStaticEnsemble ensemble_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const SSROModel& m);
SSROModel ssro_from_json(const nlohmann::json& doc);

}  // namespace spinforge
