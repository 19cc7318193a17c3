#pragma once

#include "spinforge/channels.hpp"
#include "spinforge/gst.hpp"
#include "spinforge/noise.hpp"

#include <json.hpp>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace spinforge {

using ChannelMap = std::map<std::string, PTM>;

// Natives are Gi, Gx = X(pi/2), Gy = Y(pi/2).
struct CliffordElement {
    int index = 0;
    CMat unitary;      // 2x2
    GateList native;   // first applied first; the identity is {"Gi"}
};

// 24 elements, minimal words over {X(pi/2), Y(pi/2)}, found breadth first.
const std::vector<CliffordElement>& clifford_table();
int clifford_compose(int later, int earlier);
int clifford_inverse(int index);
int clifford_index(const CMat& u);  // up to phase; ConfigError when not Clifford
double mean_native_length();
// Fraction of native gates of each kind across the table.
std::map<std::string, double> native_occurrence();

struct RBSequence {
    int clifford_depth = 0;
    std::vector<int> cliffords;
    int inversion = 0;
    bool flipped = false;  // inversion also applies X(pi): ideal outcome is 1
    GateList native;       // compiled, inversion included
};

// k sequences per depth; odd-numbered sequences are flipped.
std::vector<RBSequence> generate_rb(const std::vector<int>& depths, int k_per_depth, std::uint64_t seed);

struct RBPoint {
    int clifford_depth = 0;
    double depth_native = 0.0;  // mean over the sequences of this depth
    double mean_survival = 0.0;
    double stderr_ = 0.0;
};

struct RBResult {
    double p = 0.0;
    double p_stderr = 0.0;
    double F_avg = 0.0;
    double F_stderr = 0.0;
    FitResult fit;
    std::vector<double> survival;  // per sequence, readout-corrected
    std::vector<RBPoint> curve;
};

// shots == 0 uses exact probabilities. Survival is fitted as 0.5 + B p^m over native depth m.
RBResult run_rb(const std::vector<RBSequence>& sequences, const ChannelMap& natives, long shots,
                const SSROModel& ssro, std::uint64_t seed, unsigned threads = 0);

ChannelMap ideal_natives();
ChannelMap natives_from_gate_set(const GateSetEstimate& gs);
// Native fidelities weighted by native_occurrence().
double occurrence_weighted_fidelity(const ChannelMap& natives);

// Two-qubit library channels keyed by gate name (Xe, Ye, Xn, Yn, CRx, ...).
ChannelMap ideal_two_qubit_channels();
// Composite channel of the compiled SWAP.
PTM swap_channel(const ChannelMap& channels);
// Each CRx followed by exp(-i angle/2 Z(x)I).
ChannelMap with_crx_z_error(const ChannelMap& channels, double angle);
// Angle for which the compiled SWAP reaches the given average gate fidelity.
double crx_z_error_for_swap_fidelity(const ChannelMap& channels, double fidelity);

enum class Mitigation { none, echo, pauli_twirl };
std::string mitigation_name(Mitigation m);
Mitigation mitigation_from_name(const std::string& name);

struct SwapCurveOptions {
    Mitigation mitigation = Mitigation::none;
    int realizations = 10;
    bool perfect_twirl = true;  // ideal Paulis instead of the supplied channels
    std::uint64_t seed = 0;
    unsigned threads = 0;
};

struct SwapPoint {
    int n = 0;
    double fidelity = 0.0;  // electron state fidelity averaged over six cardinal inputs
    double stderr_ = 0.0;   // over twirl realisations
};

// Electron density matrices of the six cardinal states: +z, -z, +x, -x, +y, -y.
std::vector<CMat> cardinal_states();
// Trace over the nitrogen of a two-qubit Pauli vector.
CMat electron_reduced_state(const RVec& pauli16);
CMat nitrogen_reduced_state(const RVec& pauli16);

// n = 0, 2, ..., n_max; the electron starts in a cardinal state, the nitrogen in 0.
std::vector<SwapPoint> repeated_swap_curve(const ChannelMap& channels, int n_max, const SwapCurveOptions& options);

nlohmann::json to_json(const RBResult& r);
std::string rb_curve_csv(const RBResult& r);
nlohmann::json to_json(const RBSequence& s);

}  // namespace spinforge
