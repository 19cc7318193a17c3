#include "spinforge/pulses.hpp"

#include "spinforge/errors.hpp"
#include "spinforge/numerics.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace spinforge {

namespace {

const Complex kI(0.0, 1.0);

double sinc(double x) { return std::abs(x) < 1e-8 ? 1.0 - x * x / 6.0 : std::sin(x) / x; }

const char* kind_name(EnvelopeKind k) {
    switch (k) {
        case EnvelopeKind::hermite: return "hermite";
        case EnvelopeKind::square: return "square";
        case EnvelopeKind::erf_rf: return "erf_rf";
    }
    return "?";
}

const char* kind_name(SegmentKind k) {
    switch (k) {
        case SegmentKind::delay: return "delay";
        case SegmentKind::mw_pulse: return "mw_pulse";
        case SegmentKind::rf_pulse: return "rf_pulse";
    }
    return "?";
}

}  // namespace

Envelope Envelope::hermite(double amplitude, double duration, double eta) {
    return {EnvelopeKind::hermite, amplitude, duration, eta, 0.0};
}
Envelope Envelope::square(double amplitude, double duration) {
    return {EnvelopeKind::square, amplitude, duration, 0.0, 0.0};
}
Envelope Envelope::erf_rf(double amplitude, double duration, double risetime) {
    return {EnvelopeKind::erf_rf, amplitude, duration, 0.0, risetime};
}

void Envelope::validate() const {
    if (!(amplitude >= 0.0) || !std::isfinite(amplitude)) throw ConfigError("envelope amplitude must be >= 0");
    if (!(duration > 0.0) || !std::isfinite(duration)) throw ConfigError("envelope duration must be > 0");
    if (kind == EnvelopeKind::erf_rf && (risetime < 0.0 || risetime > duration / 2))
        throw ConfigError("erf_rf risetime must lie in [0, duration/2]");
}

double Envelope::eval(double t) const {
    if (t < 0.0 || t > duration) throw ConfigError("envelope evaluated outside [0, duration]");
    switch (kind) {
        case EnvelopeKind::square: return amplitude;
        case EnvelopeKind::hermite: {
            const double x = (t - duration / 2) / (kHermiteWidthFraction * duration);
            return amplitude * (1.0 - eta * x * x) * std::exp(-x * x);
        }
        case EnvelopeKind::erf_rf: {
            if (risetime == 0.0) return amplitude;
            // ramp centred half a risetime inside each edge; 10-90% rise about one risetime
            const double width = risetime / 4.0;
            return amplitude * 0.5 *
                   (std::erf((t - risetime / 2) / width) + std::erf((duration - risetime / 2 - t) / width));
        }
    }
    return 0.0;
}

double Envelope::area(int samples) const {
    const double h = duration / samples;
    double sum = 0.0;
    for (int k = 0; k < samples; ++k) sum += eval((k + 0.5) * h);
    return sum * h;
}

Segment Segment::delay(double duration) {
    Segment s;
    s.kind = SegmentKind::delay;
    s.duration = duration;
    return s;
}

Segment Segment::mw(const Envelope& env, double carrier, double phase) {
    return {SegmentKind::mw_pulse, env.duration, env, carrier, phase};
}

Segment Segment::rf(const Envelope& env, double carrier, double phase) {
    return {SegmentKind::rf_pulse, env.duration, env, carrier, phase};
}

void Segment::validate() const {
    if (!(duration >= 0.0) || !std::isfinite(duration)) throw ConfigError("segment duration must be >= 0");
    if (kind == SegmentKind::delay) return;
    envelope.validate();
    if (std::abs(envelope.duration - duration) > 1e-15 * std::max(1.0, duration) + 1e-18)
        throw ConfigError("pulse duration must equal its envelope duration");
    if (!(carrier > 0.0)) throw ConfigError("pulse carrier must be positive");
}

double PulseSequence::duration() const {
    double t = 0.0;
    for (const auto& s : segments) t += s.duration;
    return t;
}

void PulseSequence::append(const PulseSequence& other) {
    segments.insert(segments.end(), other.segments.begin(), other.segments.end());
}

void PulseSequence::normalize() {
    std::vector<Segment> out;
    for (const auto& s : segments) {
        if (s.kind == SegmentKind::delay) {
            if (s.duration == 0.0) continue;
            if (!out.empty() && out.back().kind == SegmentKind::delay) {
                out.back().duration += s.duration;
                continue;
            }
        }
        out.push_back(s);
    }
    segments = std::move(out);
}

void NoiseSpec::validate() const {
    if (!std::isfinite(detuning_e) || !std::isfinite(detuning_n)) throw ConfigError("detunings must be finite");
    if (!(dephasing_rate_e >= 0.0) || !(dephasing_rate_n >= 0.0)) throw ConfigError("dephasing rates must be >= 0");
}

FrameModel::FrameModel(const SystemParams& params, const Frame& frame, const NoiseSpec& noise)
    : params_(params), frame_(frame), noise_(noise), basis_(dressed_basis(params)) {
    noise.validate();
    nu_ = RVec::Zero(9);
    for (int k = 0; k < 9; ++k) {
        const double electron = QubitEncoding::ms_of(k) != 0 ? frame.mw_ref : 0.0;
        const double nuclear = QubitEncoding::mI_of(k) != 0 ? frame.rf_ref : 0.0;
        nu_(k) = electron - nuclear;
    }
    const CMat& v = basis_.vectors;
    const CMat id = spin1::identity();
    const CMat sz = v.adjoint() * kron(spin1::z(), id) * v;
    const CMat iz = v.adjoint() * kron(id, spin1::z()) * v;
    ox_ = v.adjoint() * kron(spin1::x(), id) * v / std::sqrt(2.0);
    on_ = v.adjoint() * kron(id, spin1::x()) * v / std::sqrt(2.0);

    const CMat shift = noise.detuning_e * sz + noise.detuning_n * iz;
    lab_h0_ = basis_.energies.cast<Complex>().asDiagonal();
    lab_h0_ += shift;
    h0_ = (basis_.energies - nu_).cast<Complex>().asDiagonal();
    // Shift terms between levels that rotate at different frame frequencies
    // oscillate at >= MHz with ~1e-3 weight and are dropped.
    for (int k = 0; k < 9; ++k)
        for (int l = 0; l < 9; ++l)
            if (std::abs(nu_(k) - nu_(l)) < 1.0) h0_(k, l) += shift(k, l);
    h0_ = 0.5 * (h0_ + h0_.adjoint()).eval();
    double off = 0.0;
    for (int k = 0; k < 9; ++k)
        for (int l = 0; l < 9; ++l)
            if (k != l) off = std::max(off, std::abs(h0_(k, l)));
    h0_diagonal_ = off == 0.0;
    if (noise.dephasing_rate_e > 0.0) jumps_.push_back(std::sqrt(noise.dephasing_rate_e) * sz);
    if (noise.dephasing_rate_n > 0.0) jumps_.push_back(std::sqrt(noise.dephasing_rate_n) * iz);
}

CMat FrameModel::drive(const Segment& seg, double amplitude, double t, double h) const {
    const CMat& op = seg.kind == SegmentKind::mw_pulse ? ox_ : on_;
    // MW and RF phases carry opposite signs so that phase 0 (pi/2) is an x (y)
    // rotation in the qubit basis of either spin.
    const double sign = seg.kind == SegmentKind::mw_pulse ? -1.0 : 1.0;
    const double f = seg.carrier;
    CMat out = CMat::Zero(9, 9);
    for (int k = 0; k < 9; ++k) {
        for (int l = 0; l < 9; ++l) {
            const Complex o = op(k, l);
            if (std::abs(o) < 1e-14) continue;
            const double d = nu_(k) - nu_(l);
            const double rp = d + f;
            const double rm = d - f;
            if (std::abs(rp) < 0.5 * f)
                out(k, l) += amplitude * o * std::exp(kI * (2 * M_PI * rp * t + sign * seg.phase)) * sinc(M_PI * rp * h);
            if (std::abs(rm) < 0.5 * f)
                out(k, l) += amplitude * o * std::exp(kI * (2 * M_PI * rm * t - sign * seg.phase)) * sinc(M_PI * rm * h);
        }
    }
    return out;
}

CMat FrameModel::lab_drive(const Segment& seg, double amplitude, double t) const {
    const CMat& op = seg.kind == SegmentKind::mw_pulse ? ox_ : on_;
    const double lab_phase = seg.kind == SegmentKind::mw_pulse ? -seg.phase : seg.phase;
    return 2.0 * amplitude * std::cos(2 * M_PI * seg.carrier * t + lab_phase) * op;
}

CMat FrameModel::delay_unitary(double duration) const {
    if (h0_diagonal_) {
        CVec phases(9);
        for (int k = 0; k < 9; ++k) phases(k) = std::exp(Complex(0.0, -2 * M_PI * h0_(k, k).real() * duration));
        return phases.asDiagonal();
    }
    return expm_hermitian(h0_, Complex(0.0, -2 * M_PI * duration));
}

CMat FrameModel::delay_generator_exp(double duration) const {
    if (!liouvillian_ready_) {
        const CMat gen = lindblad_generator(h0_, jumps_);
        Eigen::ComplexEigenSolver<CMat> solver(gen);
        if (solver.info() != Eigen::Success) throw NumericalError("Liouvillian eigendecomposition failed");
        liouvillian_vectors_ = solver.eigenvectors();
        liouvillian_values_ = solver.eigenvalues();
        liouvillian_inverse_ = liouvillian_vectors_.inverse();
        const CMat rebuilt = liouvillian_vectors_ * liouvillian_values_.asDiagonal() * liouvillian_inverse_;
        const double err = (rebuilt - gen).cwiseAbs().maxCoeff() / std::max(1.0, gen.cwiseAbs().maxCoeff());
        if (!(err < 1e-9)) throw NumericalError("Liouvillian is too ill-conditioned for the analytic delay path");
        liouvillian_ready_ = true;
    }
    const CVec factors = (liouvillian_values_ * duration).array().exp();
    return liouvillian_vectors_ * factors.asDiagonal() * liouvillian_inverse_;
}

namespace {

// Product of slice propagators for one pulse. Each slice uses the
// fourth-order commutator-free Magnus step with Gauss-point samples.
CMat pulse_unitary(const FrameModel& model, const Segment& seg, double t_start, double dt, bool lab,
                   double from = 0.0, double to = -1.0) {
    if (to < 0.0) to = seg.duration;
    const double span = to - from;
    const int n = std::max(1, static_cast<int>(std::ceil(span / dt - 1e-9)));
    const double h = span / n;
    static const double c1 = 0.5 - std::sqrt(3.0) / 6.0, c2 = 0.5 + std::sqrt(3.0) / 6.0;
    static const double a1 = 0.25 + std::sqrt(3.0) / 6.0, a2 = 0.25 - std::sqrt(3.0) / 6.0;
    const CMat& h0 = lab ? model.lab_static_hamiltonian() : model.static_hamiltonian();
    auto drive_at = [&](double local) {
        const double amp = seg.envelope.eval(local);
        return lab ? model.lab_drive(seg, amp, t_start + local) : model.drive(seg, amp, t_start + local, 0.0);
    };
    CMat u = CMat::Identity(9, 9);
    const Complex factor(0.0, -2 * M_PI * h);
    for (int j = 0; j < n; ++j) {
        const double base = from + j * h;
        const CMat d1 = drive_at(base + c1 * h);
        const CMat d2 = drive_at(base + c2 * h);
        const CMat first = 0.5 * h0 + a2 * d1 + a1 * d2;
        const CMat second = 0.5 * h0 + a1 * d1 + a2 * d2;
        u = expm_hermitian(first, factor) * (expm_hermitian(second, factor) * u);
    }
    return u;
}

CMat frame_rotation(const RVec& nu, double t) {
    CVec phases(nu.size());
    for (Eigen::Index k = 0; k < nu.size(); ++k) phases(k) = std::exp(Complex(0.0, 2 * M_PI * nu(k) * t));
    return phases.asDiagonal();
}

PropagationResult propagate_once(const FrameModel& model, const PulseSequence& seq, const PropagateOptions& opt) {
    const Numerics& num = numerics();
    const bool lab = seq.frame.kind == FrameKind::lab;
    const double dt_mw = opt.dt > 0 ? opt.dt : (lab ? num.dt_lab : num.dt_rotating);
    const double dt_rf = opt.dt_rf > 0 ? opt.dt_rf : (lab ? num.dt_lab : std::max(num.dt_rf, dt_mw));
    const bool dissipative = model.noise().dissipative();
    if (dissipative && lab) throw ConfigError("dissipative propagation is only supported in the rotating frame");

    PropagationResult out;
    out.duration = seq.duration();
    double t = opt.t0;
    CMat u = CMat::Identity(9, 9);
    CMat s;
    CMat half_dissipation_mw, half_dissipation_rf;
    double chunk_mw = num.dissipation_chunk, chunk_rf = num.dissipation_chunk_rf;
    if (dissipative) {
        s = CMat::Identity(81, 81);
        const CMat zero = CMat::Zero(9, 9);
        const CMat dissipator = lindblad_generator(zero, model.jumps());
        half_dissipation_mw = expm(CMat(dissipator * (0.5 * chunk_mw)));
        half_dissipation_rf = expm(CMat(dissipator * (0.5 * chunk_rf)));
    }
    for (const Segment& seg : seq.segments) {
        seg.validate();
        if (seg.duration == 0.0) continue;
        if (seg.kind == SegmentKind::delay) {
            if (dissipative) {
                s = model.delay_generator_exp(seg.duration) * s;
            } else if (lab) {
                u = expm_hermitian(model.lab_static_hamiltonian(), Complex(0.0, -2 * M_PI * seg.duration)) * u;
            } else {
                u = model.delay_unitary(seg.duration) * u;
            }
            t += seg.duration;
            continue;
        }
        const bool is_rf = seg.kind == SegmentKind::rf_pulse;
        const double dt = is_rf ? dt_rf : dt_mw;
        if (dt > seg.duration / 20.0 * (1.0 + 1e-9) && !(dt == seg.duration / 20.0))
            throw ConfigError("time step exceeds 1/20 of a pulse duration");
        if (dissipative) {
            const double chunk = is_rf ? chunk_rf : chunk_mw;
            const int pieces = std::max(1, static_cast<int>(std::ceil(seg.duration / chunk - 1e-9)));
            const double piece = seg.duration / pieces;
            const CMat half = std::abs(piece - chunk) < 1e-15
                                  ? (is_rf ? half_dissipation_rf : half_dissipation_mw)
                                  : expm(CMat(lindblad_generator(CMat::Zero(9, 9), model.jumps()) * (0.5 * piece)));
            for (int p = 0; p < pieces; ++p) {
                const CMat up = pulse_unitary(model, seg, t, dt, false, p * piece, (p + 1) * piece);
                s = half * (unitary_superop(up).matrix * (half * s));
            }
        } else {
            u = pulse_unitary(model, seg, t, dt, lab) * u;
        }
        t += seg.duration;
    }
    if (lab && !dissipative) {
        // U_rot(t1, t0) = R(t1) U_lab R(t0)^dagger
        u = frame_rotation(model.frame_frequencies(), t) * u * frame_rotation(model.frame_frequencies(), opt.t0).adjoint();
    }
    if (dissipative) {
        out.has_unitary = false;
        out.superop = {9, s};
    } else {
        out.has_unitary = true;
        out.unitary = u;
        out.superop = unitary_superop(u);
        if (!is_unitary(u, 1e-8)) throw NumericalError("propagator lost unitarity");
    }
    return out;
}

}  // namespace

PropagationResult propagate(const FrameModel& model, const PulseSequence& seq, const PropagateOptions& options) {
    PropagationResult out = propagate_once(model, seq, options);
    if (options.check_convergence) {
        const Numerics& num = numerics();
        const bool lab = seq.frame.kind == FrameKind::lab;
        PropagateOptions coarse = options;
        coarse.check_convergence = false;
        coarse.dt = 2.0 * (options.dt > 0 ? options.dt : (lab ? num.dt_lab : num.dt_rotating));
        coarse.dt_rf = 2.0 * (options.dt_rf > 0 ? options.dt_rf : (lab ? num.dt_lab : num.dt_rf));
        try {
            const PropagationResult other = propagate_once(model, seq, coarse);
            out.dt_change = (other.superop.matrix - out.superop.matrix).cwiseAbs().maxCoeff();
        } catch (const ConfigError&) {
            out.dt_change = 0.0;  // doubled step violates the slice guard; nothing to compare
        }
        out.dt_warning = out.dt_change > num.convergence_tol;
    }
    return out;
}

PropagationResult propagate(const SystemParams& params, const PulseSequence& seq, const NoiseSpec& noise,
                            const PropagateOptions& options) {
    const FrameModel model(params, seq.frame, noise);
    return propagate(model, seq, options);
}

nlohmann::json to_json(const Envelope& env) {
    nlohmann::json j = {{"kind", kind_name(env.kind)}, {"amplitude_Hz", env.amplitude}, {"duration_s", env.duration}};
    if (env.kind == EnvelopeKind::hermite) j["eta"] = env.eta;
    if (env.kind == EnvelopeKind::erf_rf) j["risetime_s"] = env.risetime;
    return j;
}

nlohmann::json to_json(const Segment& seg) {
    nlohmann::json j = {{"kind", kind_name(seg.kind)}, {"duration_s", seg.duration}};
    if (seg.kind != SegmentKind::delay) {
        j["envelope"] = to_json(seg.envelope);
        j["carrier_Hz"] = seg.carrier;
        j["phase_rad"] = seg.phase;
    }
    return j;
}

nlohmann::json to_json(const PulseSequence& seq) {
    nlohmann::json segs = nlohmann::json::array();
    for (const auto& s : seq.segments) segs.push_back(to_json(s));
    return {{"frame",
             {{"kind", seq.frame.kind == FrameKind::lab ? "lab" : "rotating"},
              {"mw_ref_Hz", seq.frame.mw_ref},
              {"rf_ref_Hz", seq.frame.rf_ref}}},
            {"duration_s", seq.duration()},
            {"segments", segs}};
}

Envelope envelope_from_json(const nlohmann::json& doc) {
    try {
        Envelope env;
        const std::string kind = doc.at("kind").get<std::string>();
        if (kind == "hermite") env.kind = EnvelopeKind::hermite;
        else if (kind == "square") env.kind = EnvelopeKind::square;
        else if (kind == "erf_rf") env.kind = EnvelopeKind::erf_rf;
        else throw ConfigError("unknown envelope kind: " + kind);
        env.amplitude = doc.at("amplitude_Hz").get<double>();
        env.duration = doc.at("duration_s").get<double>();
        env.eta = doc.value("eta", env.kind == EnvelopeKind::hermite ? kHermiteEtaPi : 0.0);
        env.risetime = doc.value("risetime_s", 0.0);
        env.validate();
        return env;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad envelope: ") + e.what());
    }
}

Segment segment_from_json(const nlohmann::json& doc) {
    try {
        const std::string kind = doc.at("kind").get<std::string>();
        if (kind == "delay") return Segment::delay(doc.at("duration_s").get<double>());
        const Envelope env = envelope_from_json(doc.at("envelope"));
        const double carrier = doc.at("carrier_Hz").get<double>();
        const double phase = doc.value("phase_rad", 0.0);
        if (kind == "mw_pulse") return Segment::mw(env, carrier, phase);
        if (kind == "rf_pulse") return Segment::rf(env, carrier, phase);
        throw ConfigError("unknown segment kind: " + kind);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad segment: ") + e.what());
    }
}

PulseSequence pulse_sequence_from_json(const nlohmann::json& doc) {
    try {
        PulseSequence seq;
        const auto& frame = doc.at("frame");
        seq.frame.kind = frame.value("kind", std::string("rotating")) == "lab" ? FrameKind::lab : FrameKind::rotating;
        seq.frame.mw_ref = frame.value("mw_ref_Hz", 0.0);
        seq.frame.rf_ref = frame.value("rf_ref_Hz", 0.0);
        for (const auto& s : doc.at("segments")) seq.segments.push_back(segment_from_json(s));
        return seq;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad pulse sequence: ") + e.what());
    }
}

nlohmann::json to_json(const NoiseSpec& n) {
    return {{"detuning_e_Hz", n.detuning_e},
            {"detuning_n_Hz", n.detuning_n},
            {"dephasing_rate_e_per_s", n.dephasing_rate_e},
            {"dephasing_rate_n_per_s", n.dephasing_rate_n}};
}

NoiseSpec noise_spec_from_json(const nlohmann::json& doc, NoiseSpec base) {
    if (!doc.is_object()) throw ConfigError("noise block must be a JSON object");
    try {
        base.detuning_e = doc.value("detuning_e_Hz", base.detuning_e);
        base.detuning_n = doc.value("detuning_n_Hz", base.detuning_n);
        base.dephasing_rate_e = doc.value("dephasing_rate_e_per_s", base.dephasing_rate_e);
        base.dephasing_rate_n = doc.value("dephasing_rate_n_per_s", base.dephasing_rate_n);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad noise block: ") + e.what());
    }
    base.validate();
    return base;
}

}  // namespace spinforge
