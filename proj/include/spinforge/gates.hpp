#pragma once

#include "spinforge/channels.hpp"
#include "spinforge/pulses.hpp"
#include "spinforge/system.hpp"

#include <json.hpp>

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace spinforge {

enum class GateId {
    II,
    Xe,
    Xe_minus,
    Ye,
    Ye_minus,
    Xn,
    Yn,
    CRx,
    Te,
    Tn,
    bare_Xe,
    bare_Ye,
    bare_Xn_rf,
    bare_Yn_rf,
};

// Text ids: II Xe Xe- Ye Ye- Xn Yn CRx Te Tn bare_Xe bare_Ye bare_Xn_rf bare_Yn_rf
std::string gate_name(GateId id);
GateId gate_from_name(const std::string& name);  // ConfigError on unknown ids
const std::vector<GateId>& all_gates();
bool is_bare(GateId id);

// XY8 phase order, X = 0 and Y = pi/2.
inline constexpr double kXY8Phases[8] = {0.0, M_PI / 2, 0.0, M_PI / 2, M_PI / 2, 0.0, M_PI / 2, 0.0};
inline constexpr double kPulseDuration = 144e-9;
inline constexpr double kHardwareGrid = 4e-9;
inline constexpr double kCarbonGyro = 1.0705e3;  // Hz/G

struct CalibrationSet {
    double tau = 0.0;                // s
    int n_xy8 = 2;                   // XY8 blocks around an electron pi/2
    double mw_amp_pi = 0.0;          // Hz, Hermite pi peak
    double mw_amp_pi2 = 0.0;         // Hz, Hermite pi/2 peak
    double rf_amp = 0.0;             // Hz, mean nitrogen Rabi frequency over a DDRF window
    double rf_freq = 0.0;            // Hz, nitrogen 0<->-1 line with ms = -1
    int n_ddrf_units = 8;            // XY8 blocks' worth of RF windows, halved for Tn
    double rf_phase_offset = 0.0;    // rad, added to every DDRF phase

    double mw_freq = 0.0;            // Hz, electron carrier (ms 0<->-1 at mI = 0)
    double nitrogen_frame = 0.0;     // Hz, mean nitrogen precession, reporting frame
    double rf_freq_plus = 0.0;       // Hz, nitrogen 0<->+1 line with ms = -1
    double pulse_duration = kPulseDuration;
    double pi2_junction_trim = 0.0;  // s, signed change of the slot around the pi/2 pulse
    double mw_amp_pi4 = 0.0;         // Hz, Hermite peak of the electron T gate
    double pi4_junction_trim = 0.0;  // s, as above for the T gate
    double rf_risetime = 1e-6;
    double rf_guard = 0.3e-6;        // s, gap between RF and MW pulses
    double bare_mw_slot = 1.344e-6;
    double bare_rf_amp = 0.0;        // Hz, plateau Rabi frequency
    double bare_rf_duration = 0.0;   // s

    // ConfigError on missing (non-positive) or inconsistent entries.
    void validate() const;
};

struct CalibrationOptions {
    double tau_min = 7.0e-6;
    double tau_max = 7.6e-6;
    bool calibrate_trim = true;
};

// Calibrates amplitudes, tau and the junction trim against the model.
// Results are cached per parameter set.
CalibrationSet default_calibration(const SystemParams& params, const CalibrationOptions& options = {});

double nitrogen_frequency_ms0(const SystemParams& params);    // mI 0<->-1 with ms = 0
double nitrogen_frequency_msm1(const SystemParams& params);   // mI 0<->-1 with ms = -1
double electron_frequency(const SystemParams& params);        // ms 0<->-1 with mI = 0

// Hermite pi peak giving the best mean transfer over mI = 0 and mI = -1.
double calibrate_pi_amplitude(const SystemParams& params, double duration = kPulseDuration);
// Hermite pi/2 peak giving exactly half transfer at mI = 0.
double calibrate_pi2_amplitude(const SystemParams& params, double duration = kPulseDuration);
// Hermite (pi/2 shape) peak rotating mI = 0 by `rotation`.
double calibrate_rotation_amplitude(const SystemParams& params, double rotation, double duration = kPulseDuration);

struct TauSolution {
    double tau = 0.0;
    long n = 0;
    long m = 0;
    double residual_phase = 0.0;  // phi per decoupling unit
};

struct ForbiddenWindow {
    double center = 0.0;
    double halfwidth = 0.0;
};

// Odd multiples of 1/(4 gamma_c Bz) that fall within [tau_min - hw, tau_max + hw].
std::vector<ForbiddenWindow> carbon_windows(double Bz, double tau_min, double tau_max, double halfwidth);

// Every grid point in range outside the forbidden windows, best (smallest phi) first.
std::vector<TauSolution> solve_tau(double w0, double wm1, double tau_min, double tau_max, double grid,
                                   const std::vector<ForbiddenWindow>& forbidden = {}, double theta = M_PI / 2);

// Angle phi in [0, pi] with cos phi = cos a cos b - cos theta sin a sin b,
// a = 2 pi wm1 tau, b = 2 pi w0 tau. The nitrogen Bloch vector turns by 2 phi per unit.
double nitrogen_kick_angle(double tau, double w0, double wm1, double theta);

double effective_azx(const SystemParams& params);
// Angle between the nitrogen quantisation axes for ms = 0 and ms = -1, from exact eigenvectors.
double nitrogen_axis_tilt(const SystemParams& params);

struct GateSpec {
    GateId id = GateId::II;
    CalibrationSet calibration;
    CMat target;  // 4x4
};

GateSpec make_gate_spec(GateId id, const CalibrationSet& cal);

// Sequence in the simulation frame (electron carrier, nitrogen 0<->-1 line at ms = -1).
PulseSequence build_gate(const GateSpec& spec);
PulseSequence build_gate(GateId id, const CalibrationSet& cal);
// `blocks` XY8 blocks of 16 tau each, with an optional phase pattern override.
PulseSequence xy8_sequence(const CalibrationSet& cal, int blocks, const double (*phases)[8] = nullptr);
Frame simulation_frame(const CalibrationSet& cal);

CMat ideal_unitary(GateId id);           // 4x4, electron left factor
CMat ideal_context_unitary(GateId id);   // 2x2 for bare gates, else 4x4
std::vector<int> gate_context(GateId id);  // dressed levels the gate is scored on

// Rotates a simulation-frame propagator of duration T, started at t = 0,
// into the reporting frame whose nitrogen rotates at cal.nitrogen_frame.
CMat reporting_frame_correction(const CalibrationSet& cal, double duration);

struct GateSimulation {
    GateId id = GateId::II;
    double duration = 0.0;
    PulseSequence sequence;
    Superoperator propagator;   // 9-level, reporting frame
    std::optional<CMat> unitary;
    std::vector<int> context;
    SubspaceChannel channel;
    PTM target;
    double fidelity = 0.0;
    bool dt_warning = false;
};

GateSimulation simulate_gate(const SystemParams& params, const CalibrationSet& cal, GateId id,
                             const NoiseSpec& noise = {}, const PropagateOptions& options = {});
// Same, with an already built sequence (for sweeps that alter the sequence).
GateSimulation simulate_sequence(const SystemParams& params, const CalibrationSet& cal, GateId id,
                                 const PulseSequence& seq, const NoiseSpec& noise = {},
                                 const PropagateOptions& options = {});

enum class NitrogenSubspace { minus, plus };

struct CompiledStep {
    GateId gate = GateId::II;
    NitrogenSubspace subspace = NitrogenSubspace::minus;
    bool reinit = false;  // electron reset to ms = 0; gate is ignored
    double rf_carrier = 0.0;  // Hz, nitrogen line the gate drives (0 when irrelevant)
};

std::vector<GateId> compile_swap();
std::vector<GateId> compile_readout_map();
std::vector<CompiledStep> compile_nitrogen_init(const CalibrationSet& cal = {});

// Electron qubit (x) nitrogen qutrit, index 3 e + (1 - mI).
CMat ideal_qutrit_unitary(GateId id, NitrogenSubspace subspace);
// Runs compiled steps on a 6x6 density matrix; each reinit prepares the
// electron in ms = 0 with probability 1 - reinit_error.
CMat run_ideal_qutrit(const std::vector<CompiledStep>& steps, const CMat& rho, double reinit_error = 0.0);
CMat compose_ideal(const std::vector<GateId>& gates);  // 4x4, first gate acts first

nlohmann::json to_json(const CalibrationSet& cal);
CalibrationSet calibration_from_json(const nlohmann::json& doc, CalibrationSet base);
nlohmann::json to_json(const TauSolution& s);
// id -> segment count, duration, digest of the segment list, plus the calibration.
nlohmann::json gate_library_json(const CalibrationSet& cal);

}  // namespace spinforge
