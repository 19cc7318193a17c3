#include "spinforge/gates.hpp"

#include "spinforge/errors.hpp"
#include "spinforge/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <mutex>

namespace spinforge {

namespace {

const Complex kI(0.0, 1.0);

constexpr int kE00 = QubitEncoding::index(0, 0);
constexpr int kE01 = QubitEncoding::index(0, -1);
constexpr int kE10 = QubitEncoding::index(-1, 0);
constexpr int kE11 = QubitEncoding::index(-1, -1);
constexpr int kEp = QubitEncoding::index(-1, 1);

struct NamedGate {
    GateId id;
    const char* name;
};

constexpr NamedGate kNames[] = {
    {GateId::II, "II"},           {GateId::Xe, "Xe"},
    {GateId::Xe_minus, "Xe-"},    {GateId::Ye, "Ye"},
    {GateId::Ye_minus, "Ye-"},    {GateId::Xn, "Xn"},
    {GateId::Yn, "Yn"},           {GateId::CRx, "CRx"},
    {GateId::Te, "Te"},           {GateId::Tn, "Tn"},
    {GateId::bare_Xe, "bare_Xe"}, {GateId::bare_Ye, "bare_Ye"},
    {GateId::bare_Xn_rf, "bare_Xn_rf"}, {GateId::bare_Yn_rf, "bare_Yn_rf"},
};

CMat rx(double a) {
    CMat m(2, 2);
    m << std::cos(a / 2), -kI * std::sin(a / 2), -kI * std::sin(a / 2), std::cos(a / 2);
    return m;
}

CMat ry(double a) {
    CMat m(2, 2);
    m << std::cos(a / 2), -std::sin(a / 2), std::sin(a / 2), std::cos(a / 2);
    return m;
}

CMat id2() { return CMat::Identity(2, 2); }

bool electron_local(GateId id) {
    switch (id) {
        case GateId::II:
        case GateId::Xe:
        case GateId::Xe_minus:
        case GateId::Ye:
        case GateId::Ye_minus:
        case GateId::Te:
        case GateId::bare_Xe:
        case GateId::bare_Ye: return true;
        default: return false;
    }
}

CMat electron_part(GateId id) {
    switch (id) {
        case GateId::II: return id2();
        case GateId::Xe:
        case GateId::bare_Xe: return rx(M_PI / 2);
        case GateId::Xe_minus: return rx(-M_PI / 2);
        case GateId::Ye:
        case GateId::bare_Ye: return ry(M_PI / 2);
        case GateId::Ye_minus: return ry(-M_PI / 2);
        case GateId::Te: return rx(M_PI / 4);
        default: throw ConfigError("not an electron gate: " + gate_name(id));
    }
}

CMat nitrogen_part(GateId id) {
    switch (id) {
        case GateId::Xn:
        case GateId::bare_Xn_rf: return rx(M_PI / 2);
        case GateId::Yn:
        case GateId::bare_Yn_rf: return ry(M_PI / 2);
        case GateId::Tn: return rx(M_PI / 4);
        default: throw ConfigError("not a nitrogen gate: " + gate_name(id));
    }
}

RVec energies(const SystemParams& p) { return dressed_basis(p).energies; }

// Hermite pulse alone, in the simulation frame of the bare levels.
CMat single_pulse(const SystemParams& params, double amplitude, double duration, double eta) {
    const RVec e = energies(params);
    PulseSequence seq;
    seq.frame = {FrameKind::rotating, e(kE10) - e(kE00), e(kE10) - e(kE11)};
    seq.append(Segment::mw(Envelope::hermite(amplitude, duration, eta), seq.frame.mw_ref, 0.0));
    return propagate(params, seq, NoiseSpec{}).unitary;
}

double hermite_area_amplitude(double rotation, double duration, double eta) {
    // Rabi amplitude whose envelope area equals rotation / (2 pi)
    return rotation / (2 * M_PI) / (kHermiteWidthFraction * duration * std::sqrt(M_PI) * (1.0 - eta / 2));
}

template <class F>
double golden_max(F&& f, double lo, double hi, double tol) {
    const double g = (std::sqrt(5.0) - 1) / 2;
    double a = lo, b = hi;
    double c = b - g * (b - a), d = a + g * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > tol) {
        if (fc > fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    return 0.5 * (a + b);
}

void append_pi(PulseSequence& seq, const CalibrationSet& cal, double phase) {
    seq.append(Segment::mw(Envelope::hermite(cal.mw_amp_pi, cal.pulse_duration, kHermiteEtaPi), cal.mw_freq, phase));
}

// XY8 blocks whose outer delays are tau - Tp/2 plus the given adjustments.
void append_xy8(PulseSequence& seq, const CalibrationSet& cal, int blocks, double lead_adjust, double tail_adjust,
                const double (&phases)[8]) {
    const double tp = cal.pulse_duration;
    for (int b = 0; b < blocks; ++b) {
        for (int k = 0; k < 8; ++k) {
            double pre = 2 * cal.tau - tp;
            if (k == 0) pre = cal.tau - tp / 2 + (b == 0 ? lead_adjust : 0.0) + (b > 0 ? cal.tau - tp / 2 : 0.0);
            seq.append(Segment::delay(pre));
            append_pi(seq, cal, phases[k]);
        }
    }
    seq.append(Segment::delay(cal.tau - tp / 2 + tail_adjust));
}

PulseSequence electron_gate(const CalibrationSet& cal, double amplitude, double phase, double trim) {
    PulseSequence seq;
    seq.frame = simulation_frame(cal);
    const int before = cal.n_xy8 / 2;
    const int after = cal.n_xy8 - before;
    const double tp = cal.pulse_duration;
    // the pi/2 pulse sits on the junction; its neighbours give up half a pulse each
    const double adjust = -tp / 2 + trim / 2;
    append_xy8(seq, cal, before, 0.0, adjust, kXY8Phases);
    seq.append(Segment::mw(Envelope::hermite(amplitude, tp, kHermiteEtaHalfPi), cal.mw_freq, phase));
    append_xy8(seq, cal, after, adjust, 0.0, kXY8Phases);
    seq.normalize();
    return seq;
}

PulseSequence ddrf_gate(const CalibrationSet& cal, int units, bool conditional, double phi0) {
    PulseSequence seq;
    seq.frame = simulation_frame(cal);
    const int n = 2 * units;
    const double tp = cal.pulse_duration;
    const double guard = cal.rf_guard;
    for (int w = 0; w <= n; ++w) {
        const bool first = w == 0, last = w == n;
        const double window = (first || last) ? cal.tau : 2 * cal.tau;
        const double lead = first ? 0.0 : guard;
        const double tail = last ? 0.0 : guard;
        const double d = window - lead - tail - (first ? 0.0 : tp / 2) - (last ? 0.0 : tp / 2);
        if (!(d > 2 * cal.rf_risetime)) throw ConfigError("tau too short for the DDRF windows");
        const Envelope unit = Envelope::erf_rf(1.0, d, cal.rf_risetime);
        const double amp = cal.rf_amp * window / unit.area();
        // window centres sit at multiples of 2 tau; track the nitrogen at the mean precession
        const double phase = phi0 + cal.rf_phase_offset +
                             2 * M_PI * (cal.nitrogen_frame - cal.rf_freq) * (2.0 * w * cal.tau) +
                             (conditional && w % 2 == 1 ? M_PI : 0.0);
        seq.append(Segment::delay(lead));
        seq.append(Segment::rf(Envelope::erf_rf(amp, d, cal.rf_risetime), cal.rf_freq, phase));
        seq.append(Segment::delay(tail));
        if (!last) append_pi(seq, cal, kXY8Phases[w % 8]);
    }
    seq.normalize();
    return seq;
}

PulseSequence bare_mw(const CalibrationSet& cal, double phase) {
    PulseSequence seq;
    seq.frame = simulation_frame(cal);
    const double pad = (cal.bare_mw_slot - cal.pulse_duration) / 2;
    seq.append(Segment::delay(pad));
    seq.append(Segment::mw(Envelope::hermite(cal.mw_amp_pi2, cal.pulse_duration, kHermiteEtaHalfPi), cal.mw_freq,
                           phase));
    seq.append(Segment::delay(pad));
    return seq;
}

PulseSequence bare_rf(const CalibrationSet& cal, double phase) {
    PulseSequence seq;
    seq.frame = simulation_frame(cal);
    seq.append(Segment::rf(Envelope::erf_rf(cal.bare_rf_amp, cal.bare_rf_duration, cal.rf_risetime), cal.rf_freq,
                           phase));
    return seq;
}

std::string params_key(const SystemParams& p, const CalibrationOptions& o) {
    nlohmann::json doc = to_json(p);
    doc["tau_min"] = o.tau_min;
    doc["tau_max"] = o.tau_max;
    doc["trim"] = o.calibrate_trim;
    return doc.dump();
}

std::uint64_t fnv1a(const std::string& text) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace

std::string gate_name(GateId id) {
    for (const auto& g : kNames)
        if (g.id == id) return g.name;
    throw ConfigError("unknown gate id");
}

GateId gate_from_name(const std::string& name) {
    for (const auto& g : kNames)
        if (name == g.name) return g.id;
    throw ConfigError("unknown gate id '" + name + "'");
}

const std::vector<GateId>& all_gates() {
    static const std::vector<GateId> ids = [] {
        std::vector<GateId> v;
        for (const auto& g : kNames) v.push_back(g.id);
        return v;
    }();
    return ids;
}

bool is_bare(GateId id) {
    return id == GateId::bare_Xe || id == GateId::bare_Ye || id == GateId::bare_Xn_rf || id == GateId::bare_Yn_rf;
}

void CalibrationSet::validate() const {
    auto positive = [](double v, const char* what) {
        if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string("calibration entry missing or invalid: ") + what);
    };
    positive(tau, "tau");
    positive(mw_amp_pi, "mw_amp_pi");
    positive(mw_amp_pi2, "mw_amp_pi2");
    positive(mw_amp_pi4, "mw_amp_pi4");
    positive(rf_amp, "rf_amp");
    positive(rf_freq, "rf_freq");
    positive(mw_freq, "mw_freq");
    positive(nitrogen_frame, "nitrogen_frame");
    positive(pulse_duration, "pulse_duration");
    positive(bare_mw_slot, "bare_mw_slot");
    positive(bare_rf_amp, "bare_rf_amp");
    positive(bare_rf_duration, "bare_rf_duration");
    if (n_xy8 < 1) throw ConfigError("n_xy8 must be >= 1");
    if (n_ddrf_units < 2 || n_ddrf_units % 2 != 0) throw ConfigError("n_ddrf_units must be even and >= 2");
    if (rf_risetime < 0.0 || rf_guard < 0.0) throw ConfigError("rf_risetime and rf_guard must be >= 0");
    if (!std::isfinite(rf_phase_offset) || !std::isfinite(pi2_junction_trim))
        throw ConfigError("calibration phases must be finite");
    if (!std::isfinite(pi4_junction_trim)) throw ConfigError("calibration phases must be finite");
    if (tau - pulse_duration + std::min(pi2_junction_trim, pi4_junction_trim) / 2 <= 0.0) throw ConfigError("tau too short for the pulse length");
    if (bare_mw_slot < pulse_duration) throw ConfigError("bare_mw_slot shorter than the pulse");
}

double nitrogen_frequency_ms0(const SystemParams& params) {
    const RVec e = energies(params);
    return e(kE00) - e(kE01);
}

double nitrogen_frequency_msm1(const SystemParams& params) {
    const RVec e = energies(params);
    return e(kE10) - e(kE11);
}

double electron_frequency(const SystemParams& params) {
    const RVec e = energies(params);
    return e(kE10) - e(kE00);
}

double calibrate_pi_amplitude(const SystemParams& params, double duration) {
    const double guess = hermite_area_amplitude(M_PI, duration, kHermiteEtaPi);
    auto transfer = [&](double amp) {
        const CMat u = single_pulse(params, amp, duration, kHermiteEtaPi);
        return 0.5 * (std::norm(u(kE10, kE00)) + std::norm(u(kE11, kE01)));
    };
    return golden_max(transfer, 0.9 * guess, 1.1 * guess, 1.0);
}

double calibrate_pi2_amplitude(const SystemParams& params, double duration) {
    return calibrate_rotation_amplitude(params, M_PI / 2, duration);
}

double calibrate_rotation_amplitude(const SystemParams& params, double rotation, double duration) {
    if (!(rotation > 0.0 && rotation < M_PI)) throw ConfigError("rotation must lie in (0, pi)");
    const double goal = std::pow(std::sin(rotation / 2), 2);
    const double guess = hermite_area_amplitude(rotation, duration, kHermiteEtaHalfPi);
    auto excess = [&](double amp) {
        const CMat u = single_pulse(params, amp, duration, kHermiteEtaHalfPi);
        return std::norm(u(kE10, kE00)) - goal;
    };
    double lo = 0.8 * guess, hi = 1.2 * guess;
    if (excess(lo) > 0.0 || excess(hi) < 0.0) throw NumericalError("pi/2 calibration is not bracketed");
    while (hi - lo > 0.1) {
        const double mid = 0.5 * (lo + hi);
        (excess(mid) < 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

std::vector<ForbiddenWindow> carbon_windows(double Bz, double tau_min, double tau_max, double halfwidth) {
    std::vector<ForbiddenWindow> out;
    if (!(Bz > 0.0)) return out;
    const double tau0 = 1.0 / (4.0 * kCarbonGyro * Bz);
    for (long k = 0;; ++k) {
        const double c = (2 * k + 1) * tau0;
        if (c - halfwidth > tau_max) break;
        if (c + halfwidth >= tau_min) out.push_back({c, halfwidth});
    }
    return out;
}

double nitrogen_kick_angle(double tau, double w0, double wm1, double theta) {
    if (!(tau > 0.0)) throw ConfigError("tau must be positive");
    // reduce cycles first so commensurate cases land exactly on zero
    const double a = 2 * M_PI * std::remainder(wm1 * tau, 1.0);
    const double b = 2 * M_PI * std::remainder(w0 * tau, 1.0);
    const double c = std::cos(a) * std::cos(b) - std::cos(theta) * std::sin(a) * std::sin(b);
    return std::acos(std::clamp(c, -1.0, 1.0));
}

std::vector<TauSolution> solve_tau(double w0, double wm1, double tau_min, double tau_max, double grid,
                                   const std::vector<ForbiddenWindow>& forbidden, double theta) {
    if (w0 == wm1) throw ConfigError("solve_tau needs distinct nitrogen frequencies");
    if (!(grid > 0.0)) throw ConfigError("grid must be positive");
    if (!(tau_min > 0.0) || !(tau_max >= tau_min)) throw ConfigError("empty tau range");
    const long k0 = static_cast<long>(std::ceil(tau_min / grid - 1e-9));
    const long k1 = static_cast<long>(std::floor(tau_max / grid + 1e-9));
    std::vector<TauSolution> out;
    for (long k = k0; k <= k1; ++k) {
        const double tau = k * grid;
        bool blocked = false;
        for (const auto& f : forbidden) blocked = blocked || std::abs(tau - f.center) <= f.halfwidth;
        if (blocked) continue;
        TauSolution s;
        s.tau = tau;
        s.n = std::lround(tau * (w0 + wm1) / 2);
        s.m = std::lround(tau * std::abs(wm1 - w0));
        s.residual_phase = nitrogen_kick_angle(tau, w0, wm1, theta);
        out.push_back(s);
    }
    if (out.empty()) throw ConfigError("no admissible tau in range");
    std::stable_sort(out.begin(), out.end(),
                     [](const TauSolution& a, const TauSolution& b) { return a.residual_phase < b.residual_phase; });
    return out;
}

double effective_azx(const SystemParams& p) {
    const double denom = p.D - p.gamma_e * p.Bz;
    if (denom == 0.0) throw NumericalError("effective_azx diverges at the level anticrossing");
    const double f = 2 * std::sqrt(2.0) * std::pow(-p.Q + p.Azz / 2, 2) / ((-p.Q + p.Azz) * p.Q);
    return p.gamma_e * p.Bperp * p.a_perp() * f / denom;
}

double nitrogen_axis_tilt(const SystemParams& params) {
    const DressedBasis b = dressed_basis(params);
    auto nitrogen_state = [&](int ms, int mI) {
        const int col = QubitEncoding::index(ms, mI);
        const int e = 1 - ms;
        CVec v(3);
        for (int n = 0; n < 3; ++n) v(n) = b.vectors(3 * e + n, col);
        return CVec(v / v.norm());
    };
    const CVec a0 = nitrogen_state(0, 0);
    const CVec b1 = nitrogen_state(-1, -1);
    return 2 * std::asin(std::min(1.0, std::abs(a0.dot(b1))));
}

Frame simulation_frame(const CalibrationSet& cal) { return {FrameKind::rotating, cal.mw_freq, cal.rf_freq}; }

CalibrationSet default_calibration(const SystemParams& params, const CalibrationOptions& options) {
    static std::mutex mutex;
    static std::map<std::string, CalibrationSet> cache;
    const std::string key = params_key(params, options);
    {
        std::lock_guard<std::mutex> lock(mutex);
        auto it = cache.find(key);
        if (it != cache.end()) return it->second;
    }
    params.validate();
    const RVec e = energies(params);
    const double f0 = e(kE00) - e(kE01);
    const double fm1 = e(kE10) - e(kE11);

    CalibrationSet cal;
    cal.mw_freq = e(kE10) - e(kE00);
    cal.rf_freq = fm1;
    cal.rf_freq_plus = e(kE10) - e(kEp);
    cal.nitrogen_frame = 0.5 * (f0 + fm1);

    const auto windows = carbon_windows(params.Bz, options.tau_min, options.tau_max, 20e-9);
    const TauSolution best = solve_tau(f0, fm1, options.tau_min, options.tau_max, kHardwareGrid, windows).front();
    // hold the first condition exactly; the grid point is within a fraction of a ns
    cal.tau = 2.0 * static_cast<double>(best.n) / (f0 + fm1);

    cal.mw_amp_pi = calibrate_pi_amplitude(params, cal.pulse_duration);
    cal.mw_amp_pi2 = calibrate_pi2_amplitude(params, cal.pulse_duration);
    cal.mw_amp_pi4 = calibrate_rotation_amplitude(params, M_PI / 4, cal.pulse_duration);
    cal.rf_amp = 1.0 / (4.0 * cal.n_ddrf_units * 2.0 * cal.tau);

    const double delta = std::abs(fm1 - f0);
    const double periods = std::max(1.0, std::round(100e-6 * delta / 2));
    cal.bare_rf_duration = periods * 2.0 / delta;
    cal.bare_rf_amp = 0.25 / Envelope::erf_rf(1.0, cal.bare_rf_duration, cal.rf_risetime).area();

    if (options.calibrate_trim) {
        auto score = [&](double trim) {
            CalibrationSet trial = cal;
            trial.pi2_junction_trim = trim;
            return simulate_gate(params, trial, GateId::Xe).fidelity;
        };
        cal.pi2_junction_trim = golden_max(score, -30e-9, 20e-9, 0.05e-9);
        auto score_t = [&](double trim) {
            CalibrationSet trial = cal;
            trial.pi4_junction_trim = trim;
            return simulate_gate(params, trial, GateId::Te).fidelity;
        };
        cal.pi4_junction_trim = golden_max(score_t, -30e-9, 20e-9, 0.05e-9);
    }
    cal.validate();
    std::lock_guard<std::mutex> lock(mutex);
    cache.emplace(key, cal);
    return cal;
}

GateSpec make_gate_spec(GateId id, const CalibrationSet& cal) { return {id, cal, ideal_unitary(id)}; }

PulseSequence build_gate(const GateSpec& spec) { return build_gate(spec.id, spec.calibration); }

PulseSequence xy8_sequence(const CalibrationSet& cal, int blocks, const double (*phases)[8]) {
    cal.validate();
    if (blocks < 1) throw ConfigError("need at least one XY8 block");
    PulseSequence seq;
    seq.frame = simulation_frame(cal);
    append_xy8(seq, cal, blocks, 0.0, 0.0, phases ? *phases : kXY8Phases);
    seq.normalize();
    return seq;
}

PulseSequence build_gate(GateId id, const CalibrationSet& cal) {
    cal.validate();
    const int units = cal.n_ddrf_units;
    switch (id) {
        case GateId::II: return xy8_sequence(cal, cal.n_xy8);
        case GateId::Xe: return electron_gate(cal, cal.mw_amp_pi2, 0.0, cal.pi2_junction_trim);
        case GateId::Xe_minus: return electron_gate(cal, cal.mw_amp_pi2, M_PI, cal.pi2_junction_trim);
        case GateId::Ye: return electron_gate(cal, cal.mw_amp_pi2, M_PI / 2, cal.pi2_junction_trim);
        case GateId::Ye_minus: return electron_gate(cal, cal.mw_amp_pi2, -M_PI / 2, cal.pi2_junction_trim);
        case GateId::Te: return electron_gate(cal, cal.mw_amp_pi4, 0.0, cal.pi4_junction_trim);
        case GateId::Xn: return ddrf_gate(cal, units, false, 0.0);
        case GateId::Yn: return ddrf_gate(cal, units, false, M_PI / 2);
        case GateId::Tn: return ddrf_gate(cal, units / 2, false, 0.0);
        case GateId::CRx: return ddrf_gate(cal, units, true, 0.0);
        case GateId::bare_Xe: return bare_mw(cal, 0.0);
        case GateId::bare_Ye: return bare_mw(cal, M_PI / 2);
        case GateId::bare_Xn_rf: return bare_rf(cal, 0.0);
        case GateId::bare_Yn_rf: return bare_rf(cal, M_PI / 2);
    }
    throw ConfigError("unknown gate id");
}

CMat ideal_unitary(GateId id) {
    if (electron_local(id)) return kron(electron_part(id), id2());
    if (id == GateId::CRx) {
        CMat u = CMat::Zero(4, 4);
        u.block(0, 0, 2, 2) = rx(-M_PI / 2);
        u.block(2, 2, 2, 2) = rx(M_PI / 2);
        return u;
    }
    return kron(id2(), nitrogen_part(id));
}

CMat ideal_context_unitary(GateId id) {
    if (id == GateId::bare_Xe || id == GateId::bare_Ye) return electron_part(id);
    if (id == GateId::bare_Xn_rf || id == GateId::bare_Yn_rf) return nitrogen_part(id);
    return ideal_unitary(id);
}

std::vector<int> gate_context(GateId id) {
    if (id == GateId::bare_Xe || id == GateId::bare_Ye) return {kE00, kE10};
    if (id == GateId::bare_Xn_rf || id == GateId::bare_Yn_rf) return {kE10, kE11};
    return {kE00, kE01, kE10, kE11};
}

CMat reporting_frame_correction(const CalibrationSet& cal, double duration) {
    CVec phases(9);
    for (int k = 0; k < 9; ++k) {
        const double shift = QubitEncoding::mI_of(k) != 0 ? -(cal.nitrogen_frame - cal.rf_freq) : 0.0;
        phases(k) = std::exp(Complex(0.0, 2 * M_PI * shift * duration));
    }
    return phases.asDiagonal();
}

GateSimulation simulate_sequence(const SystemParams& params, const CalibrationSet& cal, GateId id,
                                 const PulseSequence& seq, const NoiseSpec& noise, const PropagateOptions& options) {
    PropagateOptions opt = options;
    opt.t0 = 0.0;
    const PropagationResult r = propagate(params, seq, noise, opt);
    GateSimulation out;
    out.id = id;
    out.duration = r.duration;
    out.sequence = seq;
    out.dt_warning = r.dt_warning;
    const CMat frame = reporting_frame_correction(cal, r.duration);
    if (r.has_unitary) {
        out.unitary = CMat(frame * r.unitary);
        out.propagator = unitary_superop(*out.unitary);
    } else {
        out.propagator = compose(unitary_superop(frame), r.superop);
    }
    out.context = gate_context(id);
    out.channel = channel_from_propagator(out.propagator, out.context);
    out.target = ptm_of_unitary(ideal_context_unitary(id));
    out.fidelity = avg_gate_fidelity(out.channel.ptm, out.target);
    return out;
}

GateSimulation simulate_gate(const SystemParams& params, const CalibrationSet& cal, GateId id,
                             const NoiseSpec& noise, const PropagateOptions& options) {
    return simulate_sequence(params, cal, id, build_gate(id, cal), noise, options);
}

std::vector<GateId> compile_swap() {
    using G = GateId;
    // three conditional gates separated by local Clifford layers
    return {G::CRx, G::Ye, G::Yn, G::Xn, G::Xn, G::Xn, G::CRx, G::Xe, G::Yn,
            G::CRx, G::Xe_minus, G::Ye, G::Ye, G::Yn, G::Yn, G::Yn, G::Xn};
}

std::vector<GateId> compile_readout_map() {
    using G = GateId;
    return {G::Xe, G::Yn, G::CRx, G::Ye};
}

std::vector<CompiledStep> compile_nitrogen_init(const CalibrationSet& cal) {
    using G = GateId;
    // SWAP with the first conditional gate dropped: the electron starts in ms = 0
    const std::vector<GateId> reduced = {G::Xe, G::CRx, G::Ye_minus, G::Yn, G::Xn, G::CRx};
    std::vector<CompiledStep> out;
    auto half = [&](NitrogenSubspace sub, double carrier) {
        CompiledStep reset;
        reset.reinit = true;
        out.push_back(reset);
        for (GateId g : reduced) {
            CompiledStep s;
            s.gate = g;
            s.subspace = sub;
            s.rf_carrier = electron_local(g) ? 0.0 : carrier;
            out.push_back(s);
        }
    };
    half(NitrogenSubspace::minus, cal.rf_freq);
    half(NitrogenSubspace::plus, cal.rf_freq_plus);
    return out;
}

CMat ideal_qutrit_unitary(GateId id, NitrogenSubspace subspace) {
    if (electron_local(id)) return kron(electron_part(id), CMat(CMat::Identity(3, 3)));
    const CMat u = ideal_unitary(id);
    const int level[2] = {1, subspace == NitrogenSubspace::minus ? 2 : 0};
    const int spectator = subspace == NitrogenSubspace::minus ? 0 : 2;
    CMat out = CMat::Zero(6, 6);
    for (int e = 0; e < 2; ++e)
        for (int e2 = 0; e2 < 2; ++e2)
            for (int n = 0; n < 2; ++n)
                for (int n2 = 0; n2 < 2; ++n2) out(3 * e + level[n], 3 * e2 + level[n2]) = u(2 * e + n, 2 * e2 + n2);
    for (int e = 0; e < 2; ++e) out(3 * e + spectator, 3 * e + spectator) = 1.0;
    return out;
}

CMat run_ideal_qutrit(const std::vector<CompiledStep>& steps, const CMat& rho, double reinit_error) {
    if (rho.rows() != 6 || rho.cols() != 6) throw ConfigError("qutrit state must be 6x6");
    if (reinit_error < 0.0 || reinit_error > 1.0) throw ConfigError("reinit_error must lie in [0, 1]");
    CMat state = rho;
    for (const CompiledStep& s : steps) {
        if (s.reinit) {
            CMat nitrogen = state.block(0, 0, 3, 3) + state.block(3, 3, 3, 3);
            CMat electron = CMat::Zero(2, 2);
            electron(0, 0) = 1.0 - reinit_error;
            electron(1, 1) = reinit_error;
            state = kron(electron, nitrogen);
            continue;
        }
        const CMat u = ideal_qutrit_unitary(s.gate, s.subspace);
        state = u * state * u.adjoint();
    }
    return state;
}

CMat compose_ideal(const std::vector<GateId>& gates) {
    CMat u = CMat::Identity(4, 4);
    for (GateId g : gates) u = ideal_unitary(g) * u;
    return u;
}

nlohmann::json to_json(const CalibrationSet& c) {
    return {{"tau", c.tau},
            {"n_xy8", c.n_xy8},
            {"mw_amp_pi", c.mw_amp_pi},
            {"mw_amp_pi2", c.mw_amp_pi2},
            {"mw_amp_pi4", c.mw_amp_pi4},
            {"rf_amp", c.rf_amp},
            {"rf_freq", c.rf_freq},
            {"n_ddrf_units", c.n_ddrf_units},
            {"rf_phase_offset", c.rf_phase_offset},
            {"mw_freq", c.mw_freq},
            {"nitrogen_frame", c.nitrogen_frame},
            {"rf_freq_plus", c.rf_freq_plus},
            {"pulse_duration", c.pulse_duration},
            {"pi2_junction_trim", c.pi2_junction_trim},
            {"pi4_junction_trim", c.pi4_junction_trim},
            {"rf_risetime", c.rf_risetime},
            {"rf_guard", c.rf_guard},
            {"bare_mw_slot", c.bare_mw_slot},
            {"bare_rf_amp", c.bare_rf_amp},
            {"bare_rf_duration", c.bare_rf_duration}};
}

CalibrationSet calibration_from_json(const nlohmann::json& doc, CalibrationSet c) {
    if (!doc.is_object()) throw ConfigError("calibration must be a JSON object");
    static const char* known[] = {"tau",          "n_xy8",          "mw_amp_pi",         "mw_amp_pi2",
                                  "rf_amp",       "rf_freq",        "n_ddrf_units",      "rf_phase_offset",
                                  "mw_freq",      "nitrogen_frame", "rf_freq_plus",      "pulse_duration",
                                  "pi2_junction_trim", "pi4_junction_trim", "mw_amp_pi4", "rf_risetime", "rf_guard",        "bare_mw_slot",
                                  "bare_rf_amp",  "bare_rf_duration"};
    for (auto it = doc.begin(); it != doc.end(); ++it) {
        const bool ok = std::any_of(std::begin(known), std::end(known), [&](const char* k) { return it.key() == k; });
        if (!ok) throw ConfigError("unknown calibration key '" + it.key() + "'");
        if (!it.value().is_number()) throw ConfigError("calibration entry '" + it.key() + "' must be a number");
    }
    auto num = [&](const char* k, double& v) {
        if (doc.contains(k)) v = doc[k].get<double>();
    };
    auto integer = [&](const char* k, int& v) {
        if (!doc.contains(k)) return;
        if (!doc[k].is_number_integer()) throw ConfigError(std::string("calibration entry '") + k + "' must be an integer");
        v = doc[k].get<int>();
    };
    num("tau", c.tau);
    integer("n_xy8", c.n_xy8);
    num("mw_amp_pi", c.mw_amp_pi);
    num("mw_amp_pi2", c.mw_amp_pi2);
    num("rf_amp", c.rf_amp);
    num("rf_freq", c.rf_freq);
    integer("n_ddrf_units", c.n_ddrf_units);
    num("rf_phase_offset", c.rf_phase_offset);
    num("mw_freq", c.mw_freq);
    num("nitrogen_frame", c.nitrogen_frame);
    num("rf_freq_plus", c.rf_freq_plus);
    num("pulse_duration", c.pulse_duration);
    num("pi2_junction_trim", c.pi2_junction_trim);
    num("pi4_junction_trim", c.pi4_junction_trim);
    num("mw_amp_pi4", c.mw_amp_pi4);
    num("rf_risetime", c.rf_risetime);
    num("rf_guard", c.rf_guard);
    num("bare_mw_slot", c.bare_mw_slot);
    num("bare_rf_amp", c.bare_rf_amp);
    num("bare_rf_duration", c.bare_rf_duration);
    c.validate();
    return c;
}

nlohmann::json to_json(const TauSolution& s) {
    return {{"tau", s.tau}, {"n", s.n}, {"m", s.m}, {"residual_phase", s.residual_phase}};
}

nlohmann::json gate_library_json(const CalibrationSet& cal) {
    nlohmann::json gates = nlohmann::json::object();
    for (GateId id : all_gates()) {
        const PulseSequence seq = build_gate(id, cal);
        char digest[17];
        std::snprintf(digest, sizeof digest, "%016llx",
                      static_cast<unsigned long long>(fnv1a(to_json(seq).dump())));
        gates[gate_name(id)] = {{"segments", seq.segments.size()}, {"duration", seq.duration()}, {"digest", digest}};
    }
    return {{"calibration", to_json(cal)}, {"gates", gates}};
}

}  // namespace spinforge
