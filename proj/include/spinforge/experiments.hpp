#pragma once

#include "spinforge/gates.hpp"
#include "spinforge/gst.hpp"
#include "spinforge/noise.hpp"
#include "spinforge/rb.hpp"

#include <map>
#include <string>
#include <vector>

namespace spinforge {

// ------------------------------------------------------------ detuning scans

enum class PulseVariant { hermite, square, hermite_literal };
std::string pulse_variant_name(PulseVariant v);
PulseVariant pulse_variant_from_name(const std::string& name);

// Peak Rabi frequencies quoted for the device's pi and pi/2 pulses.
inline constexpr double kLiteralAmpPi = 26.653e6;
inline constexpr double kLiteralAmpPi2 = 12.693e6;

// Hermite MW pulses replaced by square pulses of the given peaks (centred in
// their slots, durations 1/(2A) and 1/(4A)), or rescaled to those peaks.
PulseSequence pulse_variant(const PulseSequence& seq, PulseVariant v, double amp_pi = kLiteralAmpPi,
                            double amp_pi2 = kLiteralAmpPi2);

struct DetuningScanOptions {
    GateId gate = GateId::Xe;  // electron gates only
    int xy8_blocks = 0;        // > 0: a plain XY8 identity of that many blocks instead of the gate
    PulseVariant variant = PulseVariant::hermite;
    double amp_pi = kLiteralAmpPi;
    double amp_pi2 = kLiteralAmpPi2;
    std::vector<double> detunings;  // Hz, electron
    unsigned threads = 0;
};

struct DetuningPoint {
    double detuning = 0.0;
    double fidelity_1q = 0.0;  // electron subspace with the nitrogen in mI = 0
    double fidelity_2q = 0.0;  // gate context (equal to fidelity_1q for bare gates)
    double leakage = 0.0;
};

// Leakage is reported, not enforced: square pulses leak by design.
std::vector<DetuningPoint> detuning_scan(const SystemParams& params, const CalibrationSet& cal,
                                         const DetuningScanOptions& options);

// ------------------------------------------------------------ nitrogen kick

struct KickTrace {
    double tau = 0.0;
    double per_block_rotation = 0.0;          // rad, simulated
    double per_block_kick = 0.0;              // rad, transverse part: 2 asin|off-diagonal|
    double closed_form_per_block = 0.0;       // rad, 4 decoupling units of 2 phi, folded into [0, pi]
    double period_blocks = 0.0;               // simulated
    double closed_form_period_blocks = 0.0;
    double max_population = 0.0;             // nitrogen mI = -1 over the trace
    std::vector<double> population;           // after 1..blocks XY8 blocks
};

// One XY8 block is propagated once and then applied repeatedly.
KickTrace nitrogen_kick_trace(const SystemParams& params, CalibrationSet cal, double tau, int blocks);
// tau = 2 n / (f0 + f-1), which keeps the nitrogen frame condition exact.
double kick_tau_for_units(const SystemParams& params, int n);

// ------------------------------------------------------------ memory

struct MemoryPoint {
    int blocks = 0;
    double fidelity = 0.0;     // six cardinal states
    double fidelity_z = 0.0;   // +-z only
    double fidelity_xy = 0.0;  // +-x, +-y
    double electron_population = 0.0;  // nitrogen reads 0 after the return SWAP
};

// SWAP to the nitrogen, `blocks` nitrogen XY8 blocks built from Xn/Yn pairs, SWAP back.
std::vector<MemoryPoint> memory_curve(const ChannelMap& channels, int blocks_max, int stride);

// ------------------------------------------------------------ channel sources

// Pulse-level channels of the listed gates, averaged over the ensemble.
ChannelMap simulated_channels(const SystemParams& params, const CalibrationSet& cal, const std::vector<GateId>& gates,
                              const QuasiStaticEnsemble& ensemble, const NoiseSpec& noise, unsigned threads = 0);
// Gate-set PTMs keyed by label; a missing Xe- is filled in as Xe^3.
ChannelMap channels_from_gate_set(const GateSetEstimate& gs);
// Gate set with the target's SPAM and the given PTMs for each label.
GateSetEstimate gate_set_from_channels(const ChannelMap& channels, const GateList& labels);

// Single-qubit truth: each gate G becomes Rz(z) D(scale) G.
struct OneQubitNoise {
    std::map<std::string, double> depolarizing;  // PTM scale, 1 = none
    std::map<std::string, double> z_error;       // rad
};
GateSetEstimate one_qubit_truth(const OneQubitNoise& noise);
OneQubitNoise one_qubit_noise_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const OneQubitNoise& noise);

}  // namespace spinforge
