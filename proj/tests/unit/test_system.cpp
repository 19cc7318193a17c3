#include "spinforge/system.hpp"

#include "spinforge/errors.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace spinforge;

namespace {

// Independent oracle: second-order Rayleigh-Schroedinger energies of the
// product states, unperturbed part = diagonal of H, perturbation = the rest.
RVec second_order_energies(const SystemParams& p) {
    const CMat h = build_hamiltonian(p);
    RVec e(9);
    for (int k = 0; k < 9; ++k) {
        double shift = 0.0;
        for (int m = 0; m < 9; ++m) {
            if (m == k) continue;
            const double gap = h(k, k).real() - h(m, m).real();
            if (std::abs(h(m, k)) > 0) shift += std::norm(h(m, k)) / gap;
        }
        e(k) = h(k, k).real() + shift;
    }
    return e;
}

LevelFrequencies frequencies_from_energies(const RVec& e) {
    auto at = [&](int ms, int mI) { return e(QubitEncoding::index(ms, mI)); };
    LevelFrequencies f;
    f.wN_m1_at_es_m1 = std::abs(at(-1, 0) - at(-1, -1));
    f.wN_p1_at_es_m1 = std::abs(at(-1, 0) - at(-1, 1));
    f.wN_p1_at_es_0 = std::abs(at(0, 0) - at(0, 1));
    f.wN_m1_at_es_0 = std::abs(at(0, 0) - at(0, -1));
    f.wE_at_nI_m1 = std::abs(at(-1, 1) - at(0, 1));
    f.wE_at_nI_0 = std::abs(at(-1, 0) - at(0, 0));
    return f;
}

SystemParams random_params(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    SystemParams p;
    p.D = 2.8e9 + 1e8 * u(rng);
    p.Q = -4e6 - 2e6 * u(rng);
    p.Bz = 20 + 80 * u(rng);
    p.Azz = (u(rng) < 0.5 ? -1 : 1) * (1.5e6 + 1.5e6 * u(rng));
    const double a_perp = (p.Azz < 0 ? -1 : 1) * (1e6 + 2e6 * u(rng));
    p.Axx = p.Ayy = a_perp;
    return p;
}

}  // namespace

TEST_CASE("hamiltonian is Hermitian and reduces to the diagonal limit") {
    std::mt19937_64 rng(1);
    for (int k = 0; k < 10; ++k) {
        SystemParams p = random_params(rng);
        p.Bperp = 0.5 * k;
        CHECK(is_hermitian(build_hamiltonian(p), 1e-12));
    }
    SystemParams p;
    p.Axx = p.Ayy = 0.0;
    const CMat h = build_hamiltonian(p);
    double off = 0.0;
    for (int i = 0; i < 9; ++i)
        for (int j = 0; j < 9; ++j)
            if (i != j) off = std::max(off, std::abs(h(i, j)));
    CHECK(off == 0.0);
    const double gap = h(QubitEncoding::index(-1, 0), QubitEncoding::index(-1, 0)).real() -
                       h(QubitEncoding::index(0, 0), QubitEncoding::index(0, 0)).real();
    CHECK(gap == doctest::Approx(p.D - p.gamma_e * p.Bz).epsilon(1e-15));
}

TEST_CASE("qubit encoding indices") {
    const QubitEncoding enc;
    CHECK(enc.computational[0] == 4);
    CHECK(enc.computational[1] == 5);
    CHECK(enc.computational[2] == 7);
    CHECK(enc.computational[3] == 8);
    for (int k = 0; k < 9; ++k) CHECK(QubitEncoding::index(QubitEncoding::ms_of(k), QubitEncoding::mI_of(k)) == k);
}

TEST_CASE("first-order closed forms at the device parameters") {
    const LevelFrequencies f = level_frequencies(SystemParams{}, LevelMethod::perturbative);
    CHECK(f.wN_p1_at_es_m1 == doctest::Approx(2.780105e6).epsilon(1e-7));
    CHECK(f.wN_m1_at_es_m1 == doctest::Approx(7.120706e6).epsilon(2e-7));
    CHECK(f.wN_m1_at_es_0 == doctest::Approx(4.927491e6).epsilon(2e-7));
    CHECK(f.wN_p1_at_es_0 == doctest::Approx(4.965825e6).epsilon(2e-7));
    CHECK(std::abs(f.wE_at_nI_m1 - 2.701294e9) < 1e3);
}

TEST_CASE("exact levels agree with a second-order oracle") {
    const SystemParams p;
    const auto exact = level_frequencies(p, LevelMethod::exact).as_array();
    const auto oracle = frequencies_from_energies(second_order_energies(p)).as_array();
    for (int k = 0; k < 4; ++k) CHECK(std::abs(exact[k] - oracle[k]) < 25.0);
    // electron lines are larger numbers; third-order terms stay well below 1 kHz
    for (int k = 4; k < 6; ++k) CHECK(std::abs(exact[k] - oracle[k]) < 100.0);
}

TEST_CASE("exact and first-order levels agree to a fraction of the transverse shift") {
    const SystemParams p;
    const double x = p.a_perp() * p.a_perp() / p.D;
    const auto exact = level_frequencies(p, LevelMethod::exact).as_array();
    const auto first = level_frequencies(p, LevelMethod::perturbative).as_array();
    for (int k = 0; k < 4; ++k) CHECK(std::abs(exact[k] - first[k]) < 0.1 * x);
    // the closed forms drop the Zeeman part of the electron energy denominators
    for (int k = 4; k < 6; ++k) CHECK(std::abs(exact[k] - first[k]) < 1.5 * x);
}

TEST_CASE("without transverse hyperfine both methods coincide") {
    SystemParams p;
    p.Axx = p.Ayy = 0.0;
    const auto exact = level_frequencies(p, LevelMethod::exact).as_array();
    const auto first = level_frequencies(p, LevelMethod::perturbative).as_array();
    for (int k = 0; k < 6; ++k) CHECK(std::abs(exact[k] - first[k]) <= 1e-9 * first[k]);
}

TEST_CASE("electron gap shifts with Bz at the electron gyromagnetic ratio") {
    SystemParams p;
    const double before = level_frequencies(p, LevelMethod::exact).wE_at_nI_0;
    p.Bz += 1.5;
    const double after = level_frequencies(p, LevelMethod::exact).wE_at_nI_0;
    CHECK((before - after) == doctest::Approx(p.gamma_e * 1.5).epsilon(1e-5));
}

TEST_CASE("labelling survives a transverse field and fails when it cannot") {
    SystemParams p;
    p.Bperp = 0.414;
    const DressedBasis b = dressed_basis(p);
    CHECK(b.min_overlap > 0.99);
    CHECK(is_unitary(b.vectors, 1e-10));
    for (int k = 0; k < 9; ++k) CHECK(std::abs(b.vectors(k, k).imag()) < 1e-12);
    SystemParams huge;
    huge.Bz = 0.0;
    huge.Bperp = 2000.0;
    CHECK_THROWS_AS(level_frequencies(huge, LevelMethod::exact), NumericalError);
}

TEST_CASE("parameter inversion of the measured frequencies") {
    const SystemParams fit = fit_params_from_frequencies(measured_frequencies(), 2.8024e6, -307.7);
    CHECK(std::abs(fit.D - 2.873668e9) < 9e3);
    CHECK(std::abs(fit.Bz - 62.291) < 3e-3);
    CHECK(std::abs(fit.Q - -4.949156e6) < 1.0);
    CHECK(std::abs(std::abs(fit.Azz) - 2.188218e6) < 2.0);
    CHECK(std::abs(std::abs(fit.a_perp()) - 2.679e6) < 1e3);
    CHECK(fit.Azz < 0);
    CHECK(fit.a_perp() < 0);
}

TEST_CASE("parameter inversion round-trips the first-order model") {
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 50; ++trial) {
        const SystemParams p = random_params(rng);
        const auto f = level_frequencies(p, LevelMethod::perturbative);
        const SystemParams q = fit_params_from_frequencies(f, p.gamma_e, p.gamma_n);
        CHECK(q.D == doctest::Approx(p.D).epsilon(1e-9));
        CHECK(q.Bz == doctest::Approx(p.Bz).epsilon(1e-9));
        CHECK(q.Q == doctest::Approx(p.Q).epsilon(1e-9));
        CHECK(q.Azz == doctest::Approx(p.Azz).epsilon(1e-9));
        CHECK(q.a_perp() == doctest::Approx(p.a_perp()).epsilon(1e-9));
        const auto g = level_frequencies(q, LevelMethod::perturbative).as_array();
        const auto fa = f.as_array();
        for (int k = 0; k < 6; ++k) CHECK(g[k] == doctest::Approx(fa[k]).epsilon(1e-9));
    }
}

TEST_CASE("zero transverse hyperfine inverts to zero") {
    SystemParams p;
    p.Axx = p.Ayy = 0.0;
    const SystemParams q = fit_params_from_frequencies(level_frequencies(p, LevelMethod::perturbative), p.gamma_e, p.gamma_n);
    CHECK(std::abs(q.a_perp()) < 1e-3 * 2.679e6 * 1e-3);
}

TEST_CASE("inconsistent frequencies are rejected") {
    LevelFrequencies f = measured_frequencies();
    f.wN_m1_at_es_m1 = 7.0e6;  // pushes A_perp^2/D negative
    CHECK_THROWS_AS(fit_params_from_frequencies(f, 2.8024e6, -307.7), NumericalError);
}

TEST_CASE("system params json round trip and validation") {
    SystemParams p;
    p.Bperp = 0.414;
    const SystemParams q = system_params_from_json(to_json(p));
    CHECK(q.Bperp == p.Bperp);
    CHECK(q.Azz == p.Azz);
    CHECK_THROWS_AS(system_params_from_json({{"D_Hz", -1.0}}), ConfigError);
    CHECK_THROWS_AS(system_params_from_json({{"bogus", 1.0}}), ConfigError);
    CHECK_THROWS_AS(system_params_from_json({{"Axx_Hz", 1.0e6}, {"Ayy_Hz", 2.0e6}}), ConfigError);
}
