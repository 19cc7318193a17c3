// Acceptance checks, one line per criterion. Usage: acceptance [criterion ...]
#include "spinforge/channels.hpp"
#include "spinforge/experiments.hpp"
#include "spinforge/gates.hpp"
#include "spinforge/gst.hpp"
#include "spinforge/noise.hpp"
#include "spinforge/rb.hpp"
#include "spinforge/system.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

using namespace spinforge;

namespace {

// Pinned tolerances.
namespace tol {
constexpr double nitrogen_line_Hz = 100.0;
constexpr double electron_line_Hz = 1e3;
constexpr double inversion_rel = 1e-9;
constexpr double hermite_floor = 0.999;
constexpr double square_band_Hz = 1e6;
constexpr double quasi_static_drop = 1e-4;
constexpr double quasi_static_span_Hz = 0.2e6;
constexpr double kick_period_rel = 0.05;
constexpr double kick_full_contrast = 0.9;
constexpr double kick_flat_per_block = 1e-4;
constexpr int kick_blocks = 4000;
constexpr double injected_error = 1e-3;
constexpr double recover_rel = 0.05;
constexpr double coherent_ratio = 4.0, coherent_ratio_tol = 0.1;
constexpr double stochastic_ratio = 2.0, stochastic_ratio_tol = 0.05;
constexpr double lgst_recovery = 1e-8;
constexpr double n_sigma_max = 3.0;
constexpr double stderr_ratio_rel = 0.2;
constexpr double rb_sigmas = 3.0;
constexpr double ssro_golden = 0.99;
constexpr double swap_exact = 1e-10;
constexpr double swap_fidelity = 0.987;
constexpr double swap_half_n = 20.0, swap_half_n_tol = 6.0;
}  // namespace tol

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) pass = false;
        detail << (detail.tellp() > 0 ? "; " : "") << what << (ok ? "" : " [X]");
    }
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

CMat rz(double a) {
    CMat m = CMat::Zero(2, 2);
    m(0, 0) = std::exp(Complex(0, -a / 2));
    m(1, 1) = std::exp(Complex(0, a / 2));
    return m;
}

CMat rx(double a) {
    CMat m(2, 2);
    m << std::cos(a / 2), Complex(0, -std::sin(a / 2)), Complex(0, -std::sin(a / 2)), std::cos(a / 2);
    return m;
}

// Z dephasing whose Lindbladian rate is gamma: coherences shrink by exp(-2 gamma).
PTM dephasing_z(double gamma) {
    PTM p = PTM::identity(1);
    p.matrix(1, 1) = p.matrix(2, 2) = std::exp(-2 * gamma);
    return p;
}

double rotation_angle(const RMat& g) {
    Eigen::EigenSolver<RMat> es(g);
    double best = 0.0;
    for (int i = 0; i < int(g.rows()); ++i) best = std::max(best, std::abs(std::arg(es.eigenvalues()(i))));
    return best;
}

// ------------------------------------------------------------ criteria

void level_structure(Outcome& o) {
    const SystemParams p;
    const LevelFrequencies exact = level_frequencies(p, LevelMethod::exact);
    const LevelFrequencies meas = measured_frequencies();
    const auto e = exact.as_array(), m = meas.as_array();
    double worst_n = 0.0, worst_e = 0.0;
    for (int i = 0; i < 4; ++i) worst_n = std::max(worst_n, std::abs(e[std::size_t(i)] - m[std::size_t(i)]));
    for (int i = 4; i < 6; ++i) worst_e = std::max(worst_e, std::abs(e[std::size_t(i)] - m[std::size_t(i)]));
    o.require(worst_n <= tol::nitrogen_line_Hz, "nitrogen |exact-golden| " + fmt("%.1f Hz", worst_n));
    o.require(worst_e <= tol::electron_line_Hz, "electron |exact-golden| " + fmt("%.1f Hz", worst_e));

    const SystemParams back = fit_params_from_frequencies(level_frequencies(p, LevelMethod::perturbative), p.gamma_e, p.gamma_n);
    auto rel = [](double a, double b) { return std::abs(a - b) / std::abs(b); };
    const double rt = std::max({rel(back.D, p.D), rel(back.Q, p.Q), rel(back.Bz, p.Bz), rel(back.Azz, p.Azz),
                                rel(back.a_perp(), p.a_perp())});
    o.require(rt <= tol::inversion_rel, "inversion round trip " + fmt("%.1e", rt));
}

void hermite_robustness(Outcome& o) {
    const SystemParams p;
    const CalibrationSet cal = default_calibration(p);
    DetuningScanOptions s;
    s.gate = GateId::Xe;
    for (int i = 0; i <= 32; ++i) s.detunings.push_back(-2e6 + 4e6 * i / 32.0);

    s.variant = PulseVariant::hermite;
    double worst_h = 1.0;
    for (const auto& pt : detuning_scan(p, cal, s)) worst_h = std::min(worst_h, pt.fidelity_1q);
    o.require(worst_h >= tol::hermite_floor, "Hermite min F " + fmt("%.6f", worst_h));

    s.variant = PulseVariant::square;
    double worst_in = 1.0, worst_out = 1.0;
    for (const auto& pt : detuning_scan(p, cal, s))
        (std::abs(pt.detuning) > tol::square_band_Hz ? worst_out : worst_in) =
            std::min(std::abs(pt.detuning) > tol::square_band_Hz ? worst_out : worst_in, pt.fidelity_1q);
    o.require(worst_out < tol::hermite_floor, "square min F outside +-1 MHz " + fmt("%.5f", worst_out));
    o.detail << " (inside " << fmt("%.5f", worst_in) << ")";
}

void quasi_static(Outcome& o) {
    const SystemParams p;
    const CalibrationSet cal = default_calibration(p);
    auto at = [&](double det) {
        NoiseSpec n;
        n.detuning_e = det;
        return simulate_gate(p, cal, GateId::II, n).fidelity;
    };
    const double f0 = at(0.0);
    double drop = 0.0;
    for (int i = -4; i <= 4; ++i)
        if (i != 0) drop = std::max(drop, f0 - at(tol::quasi_static_span_Hz * i / 4.0));
    o.require(drop < tol::quasi_static_drop, "XY8 identity max drop " + fmt("%.2e", drop));
}

void nitrogen_kick(Outcome& o) {
    SystemParams p;
    p.Bperp = 0.414;
    const CalibrationSet cal = default_calibration(p);
    const KickTrace on = nitrogen_kick_trace(p, cal, kick_tau_for_units(p, 50), tol::kick_blocks);
    const double rel = std::abs(on.period_blocks - on.closed_form_period_blocks) / on.closed_form_period_blocks;
    o.require(on.max_population >= tol::kick_full_contrast, "tau=" + fmt("%.3f us", on.tau * 1e6) +
                                                                " contrast " + fmt("%.3f", on.max_population));
    o.require(rel <= tol::kick_period_rel, "period vs closed form " + fmt("%.2f%%", 100 * rel));

    const KickTrace off = nitrogen_kick_trace(p, cal, kick_tau_for_units(p, 44), tol::kick_blocks);
    // population a 1e-4 rad/block kick could reach over the trace
    const double flat = std::pow(std::sin(tol::kick_flat_per_block * tol::kick_blocks / 2), 2);
    o.require(off.per_block_kick < tol::kick_flat_per_block,
              "tau=" + fmt("%.3f us", off.tau * 1e6) + " kick/block " + fmt("%.2e rad", off.per_block_kick) +
                  " (closed form " + fmt("%.2e", off.closed_form_per_block) + ")");
    o.require(off.max_population <= flat, "max population over 4000 blocks " + fmt("%.3f", off.max_population));
}

void channel_identities(Outcome& o) {
    o.require(avg_gate_fidelity(PTM::identity(2), PTM::identity(2)) == 1.0, "F(I,I) = 1");
    const double full = avg_gate_fidelity(depolarizing(2, 0.0), PTM::identity(2));
    o.require(std::abs(full - 0.25) < 1e-14, "2q full depolarizing " + fmt("%.15f", full));
    double worst = 0.0;
    for (double p = 0.0; p <= 1.0; p += 0.0625) {
        const double f = avg_gate_fidelity(depolarizing(1, p), PTM::identity(1));
        worst = std::max({worst, std::abs(f - (1 + p) / 2), std::abs((1 - f) - (2 - 1) * (1 - p) / 2)});
    }
    o.require(worst < 1e-14, "1q depolarizing F=(1+p)/2 and r " + fmt("%.1e", worst));
}

void error_generators(Outcome& o) {
    const PTM g0 = ptm_of_unitary(rx(M_PI / 2));
    const double eps = tol::injected_error;
    auto coherent = [&](double a) { return compose(ptm_of_unitary(rz(a)), g0); };
    auto stochastic = [&](double g) { return compose(dephasing_z(g), g0); };

    const double h = error_generator(coherent(eps), g0).h_coeffs(2);
    const double s = error_generator(stochastic(eps), g0).s_coeffs(2);
    o.require(std::abs(h - eps) <= tol::recover_rel * eps, "coherent Z " + fmt("%.4e", h));
    o.require(std::abs(s - eps) <= tol::recover_rel * eps, "stochastic Z " + fmt("%.4e", s));

    auto split = [&](const PTM& g) { return fidelity_split(error_generator(g, g0), g0); };
    const double cr = split(coherent(2 * eps)).coherent / split(coherent(eps)).coherent;
    const double sr = split(stochastic(2 * eps)).incoherent / split(stochastic(eps)).incoherent;
    o.require(std::abs(cr - tol::coherent_ratio) <= tol::coherent_ratio_tol, "coherent doubling " + fmt("%.4f", cr));
    o.require(std::abs(sr - tol::stochastic_ratio) <= tol::stochastic_ratio_tol, "stochastic doubling " + fmt("%.4f", sr));
}

GateSetEstimate one_qubit_model(double z_gi, double z_gx, double depol) {
    OneQubitNoise n;
    n.depolarizing = {{"Gi", depol}, {"Gx", depol}, {"Gy", depol}};
    n.z_error = {{"Gi", z_gi}, {"Gx", z_gx}};
    return one_qubit_truth(n);
}

void gst_self_consistency(Outcome& o) {
    // linear inversion, exact data
    const GstDesign d1 = default_design_1q();
    const GateSetEstimate target1 = target_gate_set(d1.gate_ids);
    const GateSetEstimate truth1 = one_qubit_model(3e-3, 1e-2, 0.998);
    const auto lc1 = lgst_circuits(d1.gate_ids, d1.prep, d1.meas);
    const GateSetEstimate lin1 = gauge_optimize(run_lgst(simulate_dataset(lc1, truth1, 0, 0), d1.prep, d1.meas, target1), truth1);
    const double e1 = std::max(gate_distance(lin1, truth1), spam_distance(lin1, truth1));

    const GstDesign d2 = default_design_2q();
    const GateSetEstimate target2 = target_gate_set(d2.gate_ids);
    ChannelMap ch = with_crx_z_error(ideal_two_qubit_channels(), 0.02);
    for (auto& [id, g] : ch) g = compose(depolarizing(2, 0.999), g);
    const GateSetEstimate truth2 = gate_set_from_channels(ch, d2.gate_ids);
    const auto lc2 = lgst_circuits(d2.gate_ids, d2.prep, d2.meas);
    const GateSetEstimate lin2 = gauge_optimize(run_lgst(simulate_dataset(lc2, truth2, 0, 0), d2.prep, d2.meas, target2), truth2);
    const double e2 = std::max(gate_distance(lin2, truth2), spam_distance(lin2, truth2));
    o.require(std::max(e1, e2) <= tol::lgst_recovery, "LGST recovery 1q " + fmt("%.1e", e1) + ", 2q " + fmt("%.1e", e2));

    // long-sequence fit on sampled model data
    GstFitOptions fo;
    const Dataset data1 = simulate_dataset(full_design(d1, 64), truth1, 1000, 101);
    const GstFit fit1 = run_long_sequence_fit(data1, run_lgst(data1, d1.prep, d1.meas, target1), fo, &target1);
    // at 1000 shots many 2q outcomes expect ~1 count and the deviance runs
    // ~6 sigma above k even for the truth itself
    const Dataset data2 = simulate_dataset(full_design(d2, 8), truth2, 10000, 102);
    const GstFit fit2 = run_long_sequence_fit(data2, run_lgst(data2, d2.prep, d2.meas, target2), fo, &target2);
    o.require(std::abs(fit1.n_sigma) <= tol::n_sigma_max && std::abs(fit2.n_sigma) <= tol::n_sigma_max,
              "N_sigma 1q(L=64) " + fmt("%.2f", fit1.n_sigma) + ", 2q(L=8) " + fmt("%.2f", fit2.n_sigma));

    // Heisenberg-like scaling of a coherent parameter
    const GateSetEstimate truth_c = one_qubit_model(1e-3, 0.0, 0.999);
    auto stderr_at = [&](int L) {
        const Dataset data = simulate_dataset(full_design(d1, L), truth_c, 1000, 2);
        const GstFit fit = run_long_sequence_fit(data, run_lgst(data, d1.prep, d1.meas, target1), fo, &target1);
        return propagated_stderr(fit, [](const GateSetEstimate& g) { return rotation_angle(g.gate("Gi")); });
    };
    const double ratio = stderr_at(128) / stderr_at(8);
    const double ideal = 8.0 / 128.0;
    o.require(std::abs(ratio / ideal - 1.0) <= tol::stderr_ratio_rel,
              "stderr(L=128)/stderr(L=8) " + fmt("%.4f", ratio) + " vs " + fmt("%.4f", ideal));
}

void rb_pipeline(Outcome& o) {
    const SSROModel readout{0.93, 0.99};
    const std::vector<int> depths{5, 10, 20, 50, 100, 200, 500, 750};
    const auto seqs = generate_rb(depths, 30, 31);

    const double p0 = 0.999;
    ChannelMap depol;
    for (auto [id, g] : ideal_natives()) depol[id] = compose(depolarizing(1, p0), g);
    const RBResult r = run_rb(seqs, depol, 500, readout, 32);
    o.require(std::abs(r.p - p0) <= tol::rb_sigmas * r.p_stderr,
              "depolarizing p " + fmt("%.6f", r.p) + " +- " + fmt("%.1e", r.p_stderr));

    // GST estimate drives RB; compare with its occurrence-weighted fidelity
    const GstDesign d = default_design_1q();
    const GateSetEstimate target = target_gate_set(d.gate_ids);
    const GateSetEstimate truth = one_qubit_model(2e-3, 5e-3, 0.9994);
    const Dataset data = simulate_dataset(full_design(d, 32), truth, 1000, 33);
    const GstFit fit = run_long_sequence_fit(data, run_lgst(data, d.prep, d.meas, target), {}, &target);
    auto weighted = [](const GateSetEstimate& gs) { return occurrence_weighted_fidelity(natives_from_gate_set(gs)); };
    const double fw = weighted(fit.estimate);
    const double fw_err = propagated_stderr(fit, weighted);
    const RBResult rg = run_rb(seqs, natives_from_gate_set(fit.estimate), 500, readout, 34);
    const double combined = std::hypot(rg.F_stderr, fw_err);
    o.require(std::abs(rg.F_avg - fw) <= combined, "RB F " + fmt("%.6f", rg.F_avg) + " vs weighted GST " + fmt("%.6f", fw) +
                                                       " (combined err " + fmt("%.1e", combined) + ")");
    o.require(mean_native_length() == 3.125, "mean native length " + fmt("%.6f", mean_native_length()));
}

void ssro_golden(Outcome& o) {
    const SSROCorrection c = ssro_correct(406.0 / 500.0, 500, SSROModel{0.82, 0.99});
    o.require(std::round(c.p0 * 100) / 100 == tol::ssro_golden, "p0 " + fmt("%.6f", c.p0) + " (two decimals)");
}

void swap_suite(Outcome& o) {
    const ChannelMap ideal = ideal_two_qubit_channels();
    CMat exchange = CMat::Zero(4, 4);
    exchange(0, 0) = exchange(1, 2) = exchange(2, 1) = exchange(3, 3) = 1.0;
    const double dev = (swap_channel(ideal).matrix - ptm_of_unitary(exchange).matrix).cwiseAbs().maxCoeff();
    o.require(dev <= tol::swap_exact, "17-gate compilation vs SWAP " + fmt("%.1e", dev));

    const double angle = crx_z_error_for_swap_fidelity(ideal, tol::swap_fidelity);
    const ChannelMap noisy = with_crx_z_error(ideal, angle);
    SwapCurveOptions opt;
    opt.seed = 40;
    opt.realizations = 10;
    const auto none = repeated_swap_curve(noisy, 40, opt);
    opt.mitigation = Mitigation::echo;
    const auto echo = repeated_swap_curve(noisy, 40, opt);
    opt.mitigation = Mitigation::pauli_twirl;
    const auto twirl = repeated_swap_curve(noisy, 40, opt);

    double half = NAN;
    for (std::size_t i = 1; i < none.size() && std::isnan(half); ++i)
        if (none[i].fidelity <= 0.5 && none[i - 1].fidelity > 0.5)
            half = none[i - 1].n + (none[i - 1].fidelity - 0.5) / (none[i - 1].fidelity - none[i].fidelity) * (none[i].n - none[i - 1].n);
    o.require(std::abs(half - tol::swap_half_n) <= tol::swap_half_n_tol, "unmitigated 0.5 crossing n=" + fmt("%.1f", half));
    bool echo_dom = true, twirl_dom = true;
    for (std::size_t i = 0; i < none.size(); ++i)
        if (none[i].n >= 10) {
            echo_dom = echo_dom && echo[i].fidelity > none[i].fidelity;
            twirl_dom = twirl_dom && twirl[i].fidelity > none[i].fidelity;
        }
    o.require(echo_dom, "echo dominates for n>=10");
    o.require(twirl_dom, "twirl dominates for n>=10");
}

struct Criterion {
    int id;
    const char* title;
    double budget_s;
    void (*run)(Outcome&);
};

const std::vector<Criterion> kCriteria = {
    {1, "level structure", 1.0, level_structure},
    {2, "Hermite robustness", 300.0, hermite_robustness},
    {3, "quasi-static immunity", 120.0, quasi_static},
    {4, "nitrogen kick", 600.0, nitrogen_kick},
    {5, "channel identities", 1.0, channel_identities},
    {6, "error generator", 10.0, error_generators},
    {7, "GST self-consistency", 1800.0, gst_self_consistency},
    {8, "RB pipeline", 600.0, rb_pipeline},
    {9, "SSRO golden value", 1.0, ssro_golden},
    {10, "SWAP suite", 300.0, swap_suite},
};

}  // namespace

int main(int argc, char** argv) {
    std::vector<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.push_back(std::atoi(argv[i]));
    int failed = 0;
    for (const auto& c : kCriteria) {
        if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), c.id) == wanted.end()) continue;
        Outcome o;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            c.run(o);
        } catch (const std::exception& e) {
            o.require(false, std::string("threw: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        o.require(secs <= c.budget_s, fmt("%.2f s", secs) + " (budget " + fmt("%g s", c.budget_s) + ")");
        std::printf("%s AC%d %s: %s\n", o.pass ? "PASS" : "FAIL", c.id, c.title, o.detail.str().c_str());
        std::fflush(stdout);
        failed += o.pass ? 0 : 1;
    }
    return failed == 0 ? 0 : 1;
}
