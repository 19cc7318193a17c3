#pragma once

#include "spinforge/spinalg.hpp"
#include "spinforge/system.hpp"

#include <json.hpp>

#include <vector>

namespace spinforge {

enum class EnvelopeKind { hermite, square, erf_rf };

inline constexpr double kHermiteEtaPi = 0.956;
inline constexpr double kHermiteEtaHalfPi = 0.667;
inline constexpr double kHermiteWidthFraction = 0.1667;

struct Envelope {
    EnvelopeKind kind = EnvelopeKind::square;
    double amplitude = 0.0;  // Hz, peak Rabi frequency of the driven qubit
    double duration = 0.0;   // s
    double eta = 0.0;        // hermite only
    double risetime = 0.0;   // s, erf_rf only

    static Envelope hermite(double amplitude, double duration, double eta);
    static Envelope square(double amplitude, double duration);
    static Envelope erf_rf(double amplitude, double duration, double risetime);

    void validate() const;
    // Throws ConfigError for t outside [0, duration].
    double eval(double t) const;
    // Time integral of eval over the pulse (Hz * s), by midpoint quadrature.
    double area(int samples = 4000) const;
};

enum class SegmentKind { delay, mw_pulse, rf_pulse };

struct Segment {
    SegmentKind kind = SegmentKind::delay;
    double duration = 0.0;
    Envelope envelope;
    double carrier = 0.0;  // Hz
    double phase = 0.0;    // rad, referenced to the sequence clock at t = 0

    static Segment delay(double duration);
    static Segment mw(const Envelope& env, double carrier, double phase);
    static Segment rf(const Envelope& env, double carrier, double phase);
    void validate() const;
};

enum class FrameKind { lab, rotating };

// Rotating frame: levels with ms != 0 rotate at mw_ref, levels with mI != 0
// counter-rotate at rf_ref. Propagators are always reported in the rotating
// frame defined by mw_ref and rf_ref; a lab-frame sequence is integrated in
// the lab and transformed at the end.
struct Frame {
    FrameKind kind = FrameKind::rotating;
    double mw_ref = 0.0;
    double rf_ref = 0.0;
};

struct PulseSequence {
    std::vector<Segment> segments;
    Frame frame;

    double duration() const;
    void append(const Segment& s) { segments.push_back(s); }
    void append(const PulseSequence& other);
    // Merges adjacent delays and drops zero-length ones.
    void normalize();
};

struct NoiseSpec {
    double detuning_e = 0.0;        // Hz, added as detuning_e * Sz
    double detuning_n = 0.0;        // Hz, added as detuning_n * Iz
    double dephasing_rate_e = 0.0;  // 1/s, Lindblad operator sqrt(rate) * Sz
    double dephasing_rate_n = 0.0;  // 1/s, Lindblad operator sqrt(rate) * Iz

    bool dissipative() const { return dephasing_rate_e > 0.0 || dephasing_rate_n > 0.0; }
    void validate() const;
};

struct PropagateOptions {
    double dt = 0.0;     // MW slice, 0: numerics default for the frame
    double dt_rf = 0.0;  // RF slice, 0: numerics default
    double t0 = 0.0;     // sequence clock at the first segment
    bool check_convergence = false;
};

// Propagator in the labelled eigenbasis of the static Hamiltonian
// (see dressed_basis), expressed in the sequence's rotating frame.
struct PropagationResult {
    bool has_unitary = false;
    CMat unitary;             // valid when has_unitary
    Superoperator superop;    // always valid
    double duration = 0.0;
    bool dt_warning = false;
    double dt_change = 0.0;   // max entry change when dt is doubled (if checked)
};

// Static model of the system in a given frame; reusable across sequences.
class FrameModel {
public:
    FrameModel(const SystemParams& params, const Frame& frame, const NoiseSpec& noise = {});

    const DressedBasis& basis() const { return basis_; }
    const RVec& frame_frequencies() const { return nu_; }
    const CMat& static_hamiltonian() const { return h0_; }  // Hz, rotating frame
    const CMat& lab_static_hamiltonian() const { return lab_h0_; }
    const std::vector<CMat>& jumps() const { return jumps_; }
    // Electron Sx / sqrt 2 and nitrogen Ix / sqrt 2 in the dressed basis.
    const CMat& electron_drive_operator() const { return ox_; }
    const CMat& nitrogen_drive_operator() const { return on_; }
    const SystemParams& params() const { return params_; }
    const Frame& frame() const { return frame_; }
    const NoiseSpec& noise() const { return noise_; }

    // Rotating-frame drive Hamiltonian (Hz) of a pulse at absolute time t
    // for a slice of width h (oscillating terms averaged over the slice).
    CMat drive(const Segment& seg, double amplitude, double t, double h) const;
    // Lab-frame drive Hamiltonian (Hz) at absolute time t.
    CMat lab_drive(const Segment& seg, double amplitude, double t) const;

    CMat delay_unitary(double duration) const;
    CMat delay_generator_exp(double duration) const;  // superoperator

private:
    SystemParams params_;
    Frame frame_;
    NoiseSpec noise_;
    DressedBasis basis_;
    RVec nu_;
    CMat h0_;
    CMat lab_h0_;
    CMat ox_;
    CMat on_;
    std::vector<CMat> jumps_;
    bool h0_diagonal_ = true;
    // cached eigendecomposition of the static Liouvillian
    mutable bool liouvillian_ready_ = false;
    mutable Eigen::MatrixXcd liouvillian_vectors_;
    mutable Eigen::MatrixXcd liouvillian_inverse_;
    mutable Eigen::VectorXcd liouvillian_values_;
};

PropagationResult propagate(const SystemParams& params, const PulseSequence& seq, const NoiseSpec& noise,
                            const PropagateOptions& options = {});
PropagationResult propagate(const FrameModel& model, const PulseSequence& seq, const PropagateOptions& options = {});

nlohmann::json to_json(const Envelope& env);
nlohmann::json to_json(const Segment& seg);
nlohmann::json to_json(const PulseSequence& seq);
Envelope envelope_from_json(const nlohmann::json& doc);
Segment segment_from_json(const nlohmann::json& doc);
PulseSequence pulse_sequence_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const NoiseSpec& noise);
NoiseSpec noise_spec_from_json(const nlohmann::json& doc, NoiseSpec base = {});

}  // namespace spinforge
