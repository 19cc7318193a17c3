#include "spinforge/spinalg.hpp"

#include "spinforge/errors.hpp"

#include <doctest.h>

#include <random>

using namespace spinforge;

namespace {

CMat random_hermitian(int n, double scale, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    CMat a(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) a(i, j) = Complex(g(rng), g(rng));
    CMat h = a + a.adjoint();
    return h * (scale / h.norm());
}

double max_abs(const CMat& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("kron of identities and diagonal factors") {
    CHECK(max_abs(kron(pauli::i(), pauli::i()) - CMat::Identity(4, 4)) == 0.0);
    CMat expected = CMat::Zero(4, 4);
    expected.diagonal() << 1, 1, -1, -1;
    CHECK(max_abs(kron(pauli::z(), pauli::i()) - expected) == 0.0);
    CMat spin = CMat::Zero(9, 9);
    spin.diagonal() << 1, 1, 1, 0, 0, 0, -1, -1, -1;
    CHECK(max_abs(kron(spin1::z(), spin1::identity()) - spin) == 0.0);
}

TEST_CASE("kron mixed product property") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 5; ++trial) {
        CMat a = random_hermitian(3, 2.0, rng), b = random_hermitian(3, 1.0, rng);
        CMat c = random_hermitian(3, 3.0, rng) * Complex(0.3, 1.1), d = random_hermitian(3, 1.5, rng);
        CHECK(max_abs(kron(a, b) * kron(c, d) - kron(CMat(a * c), CMat(b * d))) < 1e-12);
    }
}

TEST_CASE("expm closed forms") {
    CHECK(max_abs(expm(CMat(CMat::Zero(3, 3))) - CMat::Identity(3, 3)) == 0.0);
    const CMat rot = expm(CMat(Complex(0, -M_PI / 2) * pauli::x()));
    CHECK(max_abs(rot - Complex(0, -1) * pauli::x()) < 1e-14);
    CMat diag = CMat::Zero(2, 2);
    diag(0, 0) = 0.7;
    diag(1, 1) = Complex(-1.2, 0.4);
    CMat expected = CMat::Zero(2, 2);
    expected(0, 0) = std::exp(Complex(0.7));
    expected(1, 1) = std::exp(Complex(-1.2, 0.4));
    CHECK(max_abs(expm(diag) - expected) < 1e-14);
    CHECK_THROWS_AS(expm(CMat(CMat::Zero(2, 3))), ConfigError);
}

TEST_CASE("expm inverse property and Hermitian fast path agree") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 10; ++trial) {
        const CMat h = random_hermitian(6, 10.0, rng);
        const CMat a = Complex(0, 1) * h;
        CHECK(max_abs(expm(a) * expm(CMat(-a)) - CMat::Identity(6, 6)) < 1e-10);
        CHECK(max_abs(expm(a) - expm_hermitian(h, Complex(0, 1))) < 1e-11);
        CHECK(max_abs(expm(h) * expm(CMat(-h)) - CMat::Identity(6, 6)) < 1e-10);
    }
}

TEST_CASE("expm relative accuracy at norm 50") {
    std::mt19937_64 rng(5);
    const CMat h = random_hermitian(5, 50.0, rng);
    const CMat a = Complex(0, -1) * h;
    const CMat ref = expm_hermitian(h, Complex(0, -1));
    CHECK(max_abs(expm(a) - ref) / max_abs(ref) < 1e-12);
}

TEST_CASE("eig_hermitian basics and reconstruction") {
    CMat d = CMat::Zero(3, 3);
    d.diagonal() << 3, 1, 2;
    const EigenSystem es = eig_hermitian(d);
    CHECK(es.values(0) == doctest::Approx(1));
    CHECK(es.values(1) == doctest::Approx(2));
    CHECK(es.values(2) == doctest::Approx(3));
    CHECK(std::abs(es.vectors(1, 0)) == doctest::Approx(1));

    const EigenSystem px = eig_hermitian(pauli::x());
    CHECK(px.values(0) == doctest::Approx(-1));
    CHECK(px.values(1) == doctest::Approx(1));
    CHECK(std::abs(px.vectors(0, 0) + px.vectors(1, 0)) < 1e-12);

    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 5; ++trial) {
        const CMat h = random_hermitian(9, 5.0, rng);
        const EigenSystem e = eig_hermitian(h);
        const CMat rebuilt = e.vectors * e.values.cast<Complex>().asDiagonal() * e.vectors.adjoint();
        CHECK(max_abs(rebuilt - h) < 1e-10);
        CHECK(max_abs(e.vectors.adjoint() * e.vectors - CMat::Identity(9, 9)) < 1e-10);
        for (int k = 1; k < 9; ++k) CHECK(e.values(k) >= e.values(k - 1));
    }
    CMat bad = pauli::x();
    bad(0, 1) = 2.0;
    CHECK_THROWS_AS(eig_hermitian(bad), ConfigError);
}

TEST_CASE("logm inverts expm for small generators") {
    std::mt19937_64 rng(9);
    const CMat h = random_hermitian(4, 0.5, rng);
    const CMat a = Complex(0, -1) * h;
    CHECK(max_abs(logm(expm(a)) - a) < 1e-10);
    RMat r = RMat::Zero(2, 2);
    r(0, 1) = 0.3;
    r(1, 0) = -0.3;
    CHECK((logm(RMat(expm(r))) - r).cwiseAbs().maxCoeff() < 1e-12);
    RMat neg = -RMat::Identity(2, 2);
    CHECK_THROWS_AS(logm(neg), NumericalError);
}

TEST_CASE("superoperators reproduce conjugation and Lindblad decay") {
    std::mt19937_64 rng(2);
    const CMat h = random_hermitian(3, 1.0, rng);
    const CMat u = expm_hermitian(h, Complex(0, -1));
    CMat rho = random_hermitian(3, 1.0, rng);
    const CMat direct = u * rho * u.adjoint();
    CHECK(max_abs(apply_superop(unitary_superop(u), rho) - direct) < 1e-13);

    // pure dephasing of a qubit: coherence decays as exp(-2 rate t)
    const double rate = 3.0;
    const CMat gen = lindblad_generator(CMat::Zero(2, 2), {std::sqrt(rate) * pauli::z()});
    CMat plus = CMat::Constant(2, 2, 0.5);
    const CMat out = apply_superop(Superoperator{2, expm(CMat(gen * 0.1))}, plus);
    CHECK(out(0, 1).real() == doctest::Approx(0.5 * std::exp(-2 * rate * 0.1)).epsilon(1e-12));
    CHECK(out(0, 0).real() == doctest::Approx(0.5));
}

TEST_CASE("pauli labels and basis ordering") {
    CHECK(pauli::label(0, 2) == "II");
    CHECK(pauli::label(7, 2) == "XZ");
    CHECK(max_abs(pauli::basis_element(7, 2) - kron(pauli::x(), pauli::z())) == 0.0);
}

TEST_CASE("levenberg marquardt fits an exponential") {
    std::vector<double> xs, ys;
    for (int k = 0; k < 30; ++k) {
        xs.push_back(0.1 * k);
        ys.push_back(2.5 * std::exp(-1.7 * 0.1 * k) + 0.2);
    }
    LsqProblem problem;
    problem.n_params = 3;
    problem.n_residuals = static_cast<int>(xs.size());
    problem.evaluate = [&](const RVec& p, RVec& r, RMat*) {
        for (std::size_t k = 0; k < xs.size(); ++k) r(static_cast<Eigen::Index>(k)) = p(0) * std::exp(-p(1) * xs[k]) + p(2) - ys[k];
    };
    RVec x0(3);
    x0 << 1.0, 1.0, 0.0;
    const LsqResult res = levenberg_marquardt(problem, x0);
    CHECK(res.converged);
    CHECK(res.x(0) == doctest::Approx(2.5).epsilon(1e-9));
    CHECK(res.x(1) == doctest::Approx(1.7).epsilon(1e-9));
    CHECK(res.x(2) == doctest::Approx(0.2).epsilon(1e-9));
}

TEST_CASE("parallel_for visits every index once and rethrows") {
    std::vector<int> hits(100, 0);
    parallel_for(hits.size(), 4, [&](std::size_t k) { hits[k] += 1; });
    for (int h : hits) CHECK(h == 1);
    CHECK_THROWS(parallel_for(10, 3, [](std::size_t k) {
        if (k == 5) throw NumericalError("boom");
    }));
}
