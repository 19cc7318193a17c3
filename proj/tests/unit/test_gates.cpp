#include "spinforge/gates.hpp"

#include "spinforge/errors.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>

using namespace spinforge;

namespace {

const Complex kI(0.0, 1.0);

double max_abs(const CMat& m) { return m.cwiseAbs().maxCoeff(); }

// |Tr(A^dag B)| / d, one when equal up to a global phase
double phase_free_overlap(const CMat& a, const CMat& b) {
    return std::abs((a.adjoint() * b).trace()) / static_cast<double>(a.rows());
}

CMat swap_matrix() {
    CMat s = CMat::Zero(4, 4);
    s(0, 0) = s(3, 3) = 1.0;
    s(1, 2) = s(2, 1) = 1.0;
    return s;
}

CMat rx2(double a) {
    CMat m(2, 2);
    m << std::cos(a / 2), -kI * std::sin(a / 2), -kI * std::sin(a / 2), std::cos(a / 2);
    return m;
}

// Half-angle of the composition of two SU(2) rotations, built explicitly.
double composed_half_angle(double tau, double w0, double wm1, double theta) {
    const double a = 2 * M_PI * wm1 * tau, b = 2 * M_PI * w0 * tau;
    CMat x(2, 2), z(2, 2);
    x << 0, 1, 1, 0;
    z << 1, 0, 0, -1;
    const CMat id = CMat::Identity(2, 2);
    const CMat first = std::cos(a) * id - kI * std::sin(a) * z;
    const CMat axis = std::sin(theta) * x + std::cos(theta) * z;
    const CMat second = std::cos(b) * id - kI * std::sin(b) * axis;
    const double c = 0.5 * (first * second).trace().real();
    return std::acos(std::max(-1.0, std::min(1.0, c)));
}

const SystemParams& params() {
    static const SystemParams p;
    return p;
}

const CalibrationSet& calibration() {
    static const CalibrationSet c = default_calibration(params());
    return c;
}

CMat cardinal(int k) {
    CVec v(2);
    const double r = std::sqrt(0.5);
    switch (k) {
        case 0: v << 1, 0; break;
        case 1: v << 0, 1; break;
        case 2: v << r, r; break;
        case 3: v << r, -r; break;
        case 4: v << r, kI * r; break;
        default: v << r, -kI * r; break;
    }
    return v;
}

}  // namespace

TEST_CASE("gate names round trip") {
    for (GateId id : all_gates()) CHECK(gate_from_name(gate_name(id)) == id);
    CHECK(gate_name(GateId::Xe_minus) == "Xe-");
    CHECK_THROWS_AS(gate_from_name("Zz"), ConfigError);
}

TEST_CASE("ideal unitaries") {
    for (GateId id : all_gates()) CHECK(is_unitary(ideal_unitary(id), 1e-12));
    CHECK(max_abs(ideal_unitary(GateId::II) - CMat::Identity(4, 4)) < 1e-15);

    // CRx twice: |0><0| (x) Rx(-pi) + |1><1| (x) Rx(pi), by direct multiplication
    const CMat crx = ideal_unitary(GateId::CRx);
    CMat expected = CMat::Zero(4, 4);
    expected.block(0, 0, 2, 2) = rx2(-M_PI);
    expected.block(2, 2, 2, 2) = rx2(M_PI);
    CHECK(max_abs(crx * crx - expected) < 1e-12);

    const CMat xe = ideal_unitary(GateId::Xe), xn = ideal_unitary(GateId::Xn);
    CHECK(max_abs(xe * xn - xn * xe) < 1e-12);
    const CMat ye = ideal_context_unitary(GateId::bare_Ye);
    CHECK(ye.rows() == 2);
    CHECK(std::abs(ye(1, 0) - std::sqrt(0.5)) < 1e-12);
    CHECK(ideal_context_unitary(GateId::bare_Xn_rf).rows() == 2);
}

TEST_CASE("compiled SWAP") {
    const auto seq = compile_swap();
    CHECK(seq.size() == 17);
    int conditional = 0;
    for (GateId g : seq) {
        CHECK_FALSE(is_bare(g));
        conditional += g == GateId::CRx;
    }
    CHECK(conditional == 3);
    const CMat u = compose_ideal(seq);
    CHECK(phase_free_overlap(u, swap_matrix()) == doctest::Approx(1.0).epsilon(1e-12));
    // fix the global phase and compare entrywise
    const Complex phase = (swap_matrix().adjoint() * u).trace() / 4.0;
    CHECK(max_abs(u / phase - swap_matrix()) < 1e-10);

    CVec zero(2);
    zero << 1, 0;
    for (int k = 0; k < 6; ++k) {
        const CVec in = kron(CMat(cardinal(k)), CMat(zero));
        const CVec out = u * in;
        const CVec want = kron(CMat(zero), CMat(cardinal(k)));
        CHECK(std::abs(want.dot(out)) == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("readout map copies nitrogen z onto the electron") {
    const CMat u = compose_ideal(compile_readout_map());
    for (int n = 0; n < 2; ++n) {
        CVec in = CVec::Zero(4);
        in(n) = 1.0;  // electron 0, nitrogen n
        const CVec out = u * in;
        const double p_electron_one = std::norm(out(2)) + std::norm(out(3));
        CHECK(p_electron_one == doctest::Approx(static_cast<double>(n)).epsilon(1e-12));
    }
}

TEST_CASE("nitrogen initialisation from a mixed qutrit") {
    const auto steps = compile_nitrogen_init(calibration());
    int reinit = 0, plus_carrier = 0;
    for (const auto& s : steps) {
        reinit += s.reinit;
        if (!s.reinit && s.subspace == NitrogenSubspace::plus && s.rf_carrier > 0) {
            ++plus_carrier;
            CHECK(s.rf_carrier == doctest::Approx(2.780105e6).epsilon(1e-4));
        }
    }
    CHECK(reinit == 2);
    CHECK(plus_carrier > 0);

    CMat rho = CMat::Zero(6, 6);
    for (int k = 0; k < 3; ++k) rho(k, k) = 1.0 / 3;  // electron 0, nitrogen fully mixed
    const CMat out = run_ideal_qutrit(steps, rho);
    const double p0 = (out(1, 1) + out(4, 4)).real();
    CHECK(p0 == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(out.trace().real() == doctest::Approx(1.0).epsilon(1e-12));

    // an imperfect electron reset lowers the result by the same order
    const double noisy = (run_ideal_qutrit(steps, rho, 0.011)(1, 1) + run_ideal_qutrit(steps, rho, 0.011)(4, 4)).real();
    CHECK(noisy < 1.0);
    CHECK(noisy > 0.96);
}

TEST_CASE("qutrit embedding leaves the spectator level alone") {
    const CMat xn = ideal_qutrit_unitary(GateId::Xn, NitrogenSubspace::minus);
    CHECK(std::abs(xn(0, 0) - 1.0) < 1e-15);  // electron 0, mI = +1
    const CMat xp = ideal_qutrit_unitary(GateId::Xn, NitrogenSubspace::plus);
    CHECK(std::abs(xp(2, 2) - 1.0) < 1e-15);  // electron 0, mI = -1
    CHECK(is_unitary(ideal_qutrit_unitary(GateId::CRx, NitrogenSubspace::plus), 1e-12));
}

TEST_CASE("tau solver") {
    const double w0 = 4.927491e6, wm1 = 7.120706e6;
    const auto sols = solve_tau(w0, wm1, 7.0e-6, 7.6e-6, 4e-9);
    REQUIRE_FALSE(sols.empty());
    CHECK(sols.front().tau == doctest::Approx(7.304e-6).epsilon(1e-9));
    CHECK(sols.front().n == 44);
    CHECK(sols.front().m == 16);

    // brute-force ranking with an independent SU(2) composition
    std::vector<std::pair<double, double>> scan;
    for (long k = 1750; k <= 1900; ++k) {
        const double tau = k * 4e-9;
        scan.push_back({composed_half_angle(tau, w0, wm1, M_PI / 2), tau});
    }
    std::stable_sort(scan.begin(), scan.end(), [](auto& a, auto& b) { return a.first < b.first; });
    REQUIRE(sols.size() == scan.size());
    for (std::size_t i = 0; i < 10; ++i) CHECK(sols[i].tau == doctest::Approx(scan[i].second).epsilon(1e-12));
    for (const auto& s : sols) {
        CHECK(s.residual_phase == nitrogen_kick_angle(s.tau, w0, wm1, M_PI / 2));
        CHECK(std::abs(std::remainder(s.tau / 4e-9, 1.0)) < 1e-6);
    }

    // commensurate frequencies on the grid: exactly zero
    const auto exact = solve_tau(3e6, 5e6, 1e-6, 1e-6, 1e-6);
    REQUIRE(exact.size() == 1);
    CHECK(exact.front().residual_phase == 0.0);

    // forbidden windows remove candidates
    const auto blocked = solve_tau(w0, wm1, 7.0e-6, 7.6e-6, 4e-9, {{7.304e-6, 10e-9}});
    for (const auto& s : blocked) CHECK(std::abs(s.tau - 7.304e-6) > 10e-9);
    CHECK_THROWS_AS(solve_tau(w0, wm1, 7.6e-6, 7.0e-6, 4e-9), ConfigError);
    CHECK_THROWS_AS(solve_tau(w0, w0, 7.0e-6, 7.6e-6, 4e-9), ConfigError);
    CHECK_THROWS_AS(solve_tau(w0, wm1, 7.0e-6, 7.6e-6, 0.0), ConfigError);

    const auto carbon = carbon_windows(62.291, 1e-6, 12e-6, 20e-9);
    REQUIRE(carbon.size() == 2);
    CHECK(carbon[0].center == doctest::Approx(1.0 / (4 * 1.0705e3 * 62.291)));
    CHECK(carbon[1].center == doctest::Approx(3.0 / (4 * 1.0705e3 * 62.291)));
}

TEST_CASE("nitrogen kick angle closed form") {
    const double w0 = 4.927491e6, wm1 = 7.120706e6;
    for (double tau : {7.1e-6, 7.304e-6, 8.3e-6}) {
        // collinear axes: the angles simply add
        const double sum = 2 * M_PI * (w0 + wm1) * tau;
        CHECK(nitrogen_kick_angle(tau, w0, wm1, 0.0) == doctest::Approx(std::acos(std::cos(sum))).epsilon(1e-6));
        for (double theta : {0.01, 0.7, 2.0})
            CHECK(nitrogen_kick_angle(tau, w0, wm1, theta) ==
                  doctest::Approx(composed_half_angle(tau, w0, wm1, theta)).epsilon(1e-6));
    }
    // both precessions complete whole turns
    for (double theta : {0.0, 0.3, M_PI / 2, 3.0}) CHECK(nitrogen_kick_angle(1e-6, 3e6, 5e6, theta) == 0.0);
    const double phi = nitrogen_kick_angle(8.3e-6, w0, wm1, 1e-3);
    CHECK(phi >= 0.0);
    CHECK(phi <= M_PI);
    CHECK_THROWS_AS(nitrogen_kick_angle(0.0, w0, wm1, 0.1), ConfigError);
}

TEST_CASE("effective Azx") {
    SystemParams p;
    CHECK(effective_azx(p) == 0.0);
    p.Bperp = 0.414;
    const double a1 = effective_azx(p);
    p.Bperp = 0.828;
    CHECK(effective_azx(p) == doctest::Approx(2 * a1).epsilon(1e-12));

    // against the exact eigenvector tilt: the first-order form undershoots by ~16%
    p.Bperp = 0.414;
    const double tilt = nitrogen_axis_tilt(p);
    const double from_azx = std::sqrt(2.0) * std::abs(a1) / nitrogen_frequency_msm1(p);
    CHECK(tilt == doctest::Approx(8.41e-4).epsilon(0.01));
    CHECK(from_azx / tilt > 0.75);
    CHECK(from_azx / tilt < 1.25);
    p.Bperp = 0.0;
    CHECK(nitrogen_axis_tilt(p) < 1e-9);

    p.Bz = p.D / p.gamma_e;
    CHECK_THROWS_AS(effective_azx(p), NumericalError);
}

TEST_CASE("default calibration") {
    const CalibrationSet& cal = calibration();
    CHECK(cal.tau == doctest::Approx(7.304e-6).epsilon(1e-4));
    CHECK(std::lround(cal.tau * 2 * cal.nitrogen_frame) == 88);
    const double area_pi = 0.5 / (kHermiteWidthFraction * kPulseDuration * std::sqrt(M_PI) * (1 - kHermiteEtaPi / 2));
    CHECK(cal.mw_amp_pi / area_pi == doctest::Approx(0.99).epsilon(0.01));
    CHECK(cal.mw_amp_pi2 == doctest::Approx(8.8148e6).epsilon(1e-3));
    CHECK(cal.rf_amp == doctest::Approx(1.0 / (8 * 8 * cal.tau)).epsilon(1e-12));
    CHECK(std::abs(cal.pi2_junction_trim) < 15e-9);
    // bare RF: whole periods of the hyperfine difference, about 100 us
    const double delta = cal.rf_freq - (2 * cal.nitrogen_frame - cal.rf_freq);
    CHECK(std::abs(std::remainder(cal.bare_rf_duration * delta / 2, 1.0)) < 1e-9);
    CHECK(cal.bare_rf_duration == doctest::Approx(100e-6).epsilon(0.01));
}

TEST_CASE("calibration validation and JSON") {
    CalibrationSet missing;
    CHECK_THROWS_AS(missing.validate(), ConfigError);
    CHECK_THROWS_AS(build_gate(GateId::Xe, missing), ConfigError);
    const CalibrationSet back = calibration_from_json(to_json(calibration()), CalibrationSet{});
    CHECK(back.tau == calibration().tau);
    CHECK(back.mw_amp_pi4 == calibration().mw_amp_pi4);
    CHECK(back.n_ddrf_units == calibration().n_ddrf_units);
    CHECK_THROWS_AS(calibration_from_json({{"tua", 1.0}}, calibration()), ConfigError);
    CHECK_THROWS_AS(calibration_from_json({{"tau", -1.0}}, calibration()), ConfigError);
    CHECK_THROWS_AS(calibration_from_json({{"n_xy8", 1.5}}, calibration()), ConfigError);
    const auto lib = gate_library_json(calibration());
    CHECK(lib["gates"].size() == all_gates().size());
    CHECK(lib["gates"]["CRx"]["digest"].get<std::string>().size() == 16);
}

TEST_CASE("gate layouts and golden durations") {
    CalibrationSet cal = calibration();
    cal.tau = 7.304e-6;
    cal.pi2_junction_trim = 0.0;
    CHECK(build_gate(GateId::Xe, cal).duration() == doctest::Approx(233.728e-6).epsilon(1e-12));
    CHECK(build_gate(GateId::bare_Xe, cal).duration() == doctest::Approx(1.344e-6).epsilon(1e-12));
    CHECK(build_gate(GateId::II, cal).duration() == doctest::Approx(32 * cal.tau).epsilon(1e-12));
    CHECK(build_gate(GateId::CRx, cal).duration() == doctest::Approx(32 * cal.tau).epsilon(1e-12));
    CHECK(build_gate(GateId::Tn, cal).duration() == doctest::Approx(16 * cal.tau).epsilon(1e-12));

    auto count = [](const PulseSequence& s, SegmentKind k) {
        int n = 0;
        for (const auto& seg : s.segments) n += seg.kind == k;
        return n;
    };
    const PulseSequence ii = build_gate(GateId::II, cal);
    CHECK(count(ii, SegmentKind::mw_pulse) == 16);
    const PulseSequence xe = build_gate(GateId::Xe, cal);
    CHECK(count(xe, SegmentKind::mw_pulse) == 17);
    // the pi/2 pulse sits at the midpoint
    double t = 0.0;
    for (const auto& s : xe.segments) {
        if (s.kind == SegmentKind::mw_pulse && s.envelope.eta == kHermiteEtaHalfPi) {
            CHECK(t + s.duration / 2 == doctest::Approx(16 * cal.tau).epsilon(1e-12));
        }
        t += s.duration;
    }

    // conditional and unconditional DDRF differ only in RF phases, by pi on odd windows
    const PulseSequence xn = build_gate(GateId::Xn, cal), crx = build_gate(GateId::CRx, cal);
    REQUIRE(xn.segments.size() == crx.segments.size());
    CHECK(count(xn, SegmentKind::rf_pulse) == 17);
    CHECK(count(xn, SegmentKind::mw_pulse) == 16);
    int window = 0;
    for (std::size_t i = 0; i < xn.segments.size(); ++i) {
        const Segment &a = xn.segments[i], &b = crx.segments[i];
        CHECK(a.kind == b.kind);
        CHECK(a.duration == b.duration);
        CHECK(a.envelope.amplitude == b.envelope.amplitude);
        if (a.kind == SegmentKind::rf_pulse) {
            const double shift = std::remainder(b.phase - a.phase, 2 * M_PI);
            CHECK(std::abs(shift) == doctest::Approx(window % 2 == 1 ? M_PI : 0.0).epsilon(1e-12));
            ++window;
        } else {
            CHECK(a.phase == b.phase);
        }
    }
    // RF area per window equals rf_amp times the window length
    double area = 0.0;
    for (const auto& s : xn.segments)
        if (s.kind == SegmentKind::rf_pulse) area += s.envelope.area();
    CHECK(area == doctest::Approx(cal.rf_amp * 32 * cal.tau).epsilon(1e-6));
}

TEST_CASE("noiseless gates meet the fidelity and leakage floor") {
    const CalibrationSet& cal = calibration();
    for (GateId id : all_gates()) {
        const GateSimulation r = simulate_gate(params(), cal, id);
        INFO(gate_name(id));
        CHECK(r.fidelity >= 0.9999);
        CHECK(r.channel.leakage.worst_case < 1e-4);
        CHECK(r.unitary.has_value());
        if (id == GateId::bare_Xn_rf || id == GateId::bare_Yn_rf) CHECK(r.fidelity >= 0.99999);
        if (id == GateId::CRx) CHECK(r.fidelity > 1 - 1e-4);
    }
}

TEST_CASE("pulse-level SWAP") {
    const CalibrationSet& cal = calibration();
    std::map<GateId, PTM> channels;
    for (GateId g : compile_swap())
        if (!channels.count(g)) channels[g] = simulate_gate(params(), cal, g).channel.ptm;
    PTM total = PTM::identity(2);
    for (GateId g : compile_swap()) total = compose(channels[g], total);
    CHECK(process_fidelity(total, ptm_of_unitary(swap_matrix())) >= 0.999);
}

TEST_CASE("XY8 phase convention is immaterial") {
    const CalibrationSet& cal = calibration();
    const double swapped[8] = {M_PI / 2, 0.0, M_PI / 2, 0.0, 0.0, M_PI / 2, 0.0, M_PI / 2};
    const GateSimulation a = simulate_sequence(params(), cal, GateId::II, xy8_sequence(cal, 1));
    const GateSimulation b = simulate_sequence(params(), cal, GateId::II, xy8_sequence(cal, 1, &swapped));
    CHECK(std::abs(a.fidelity - b.fidelity) < 1e-8);
    // entrywise the two differ by 1.1e-8, converged in dt
    CHECK((a.channel.ptm.matrix - b.channel.ptm.matrix).cwiseAbs().maxCoeff() < 1.5e-8);
}

TEST_CASE("nitrogen kick per XY8 block follows the closed form") {
    SystemParams p = params();
    p.Bperp = 0.414;
    CalibrationSet cal = calibration();
    const double f0 = nitrogen_frequency_ms0(p), fm1 = nitrogen_frequency_msm1(p);
    const double theta = nitrogen_axis_tilt(p);
    auto per_block = [&](double tau) {
        cal.tau = tau;
        const CMat u = *simulate_sequence(p, cal, GateId::II, xy8_sequence(cal, 1)).unitary;
        const int from = QubitEncoding::index(0, 0);
        const double moved = std::norm(u(QubitEncoding::index(0, -1), from)) + std::norm(u(QubitEncoding::index(-1, -1), from));
        return 2 * std::asin(std::sqrt(moved));
    };
    const double dual = per_block(88.0 / (f0 + fm1));
    const double off = per_block(100.0 / (f0 + fm1));
    CHECK(off > 5 * dual);
    // four decoupling units per block, each turning by at most 2 phi
    CHECK(off <= 8 * nitrogen_kick_angle(100.0 / (f0 + fm1), f0, fm1, theta) * 1.01);
    CHECK(off >= 0.8 * 8 * nitrogen_kick_angle(100.0 / (f0 + fm1), f0, fm1, theta));
}
