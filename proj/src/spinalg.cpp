#include "spinforge/spinalg.hpp"

#include "spinforge/errors.hpp"
#include "spinforge/numerics.hpp"

#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

namespace spinforge {

CMat kron(const CMat& a, const CMat& b) { return Eigen::kroneckerProduct(a, b).eval(); }
RMat kron(const RMat& a, const RMat& b) { return Eigen::kroneckerProduct(a, b).eval(); }

bool is_hermitian(const CMat& a, double tol) {
    if (a.rows() != a.cols()) return false;
    const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
    return (a - a.adjoint()).cwiseAbs().maxCoeff() <= tol * scale;
}

bool is_unitary(const CMat& a, double tol) {
    if (a.rows() != a.cols()) return false;
    return (a.adjoint() * a - CMat::Identity(a.rows(), a.cols())).cwiseAbs().maxCoeff() <= tol;
}

CMat expm(const CMat& a) {
    if (a.rows() != a.cols()) throw ConfigError("expm: matrix is not square");
    if (a.size() == 0) return a;
    return a.exp();
}

RMat expm(const RMat& a) {
    if (a.rows() != a.cols()) throw ConfigError("expm: matrix is not square");
    if (a.size() == 0) return a;
    return a.exp();
}

CMat expm_hermitian(const CMat& h, Complex factor) {
    Eigen::SelfAdjointEigenSolver<CMat> solver(h);
    if (solver.info() != Eigen::Success) throw NumericalError("expm_hermitian: eigensolver failed");
    CVec phases = (solver.eigenvalues().cast<Complex>() * factor).array().exp();
    return solver.eigenvectors() * phases.asDiagonal() * solver.eigenvectors().adjoint();
}

CMat logm(const CMat& a) {
    if (a.rows() != a.cols()) throw ConfigError("logm: matrix is not square");
    CMat out = a.log();
    if (!out.allFinite()) throw NumericalError("logm: non-finite result");
    return out;
}

RMat logm(const RMat& a) {
    if (a.rows() != a.cols()) throw ConfigError("logm: matrix is not square");
    Eigen::EigenSolver<RMat> es(a, false);
    for (Eigen::Index k = 0; k < es.eigenvalues().size(); ++k) {
        const Complex ev = es.eigenvalues()(k);
        if (std::abs(ev.imag()) < 1e-14 && ev.real() <= 0.0)
            throw NumericalError("logm: eigenvalue on the closed negative real axis");
    }
    RMat out = a.log();
    if (!out.allFinite()) throw NumericalError("logm: non-finite result");
    return out;
}

EigenSystem eig_hermitian(const CMat& a) {
    if (!is_hermitian(a, numerics().hermitian_tol)) throw ConfigError("eig_hermitian: input is not Hermitian");
    Eigen::SelfAdjointEigenSolver<CMat> solver(a);
    if (solver.info() != Eigen::Success) throw NumericalError("eig_hermitian: eigensolver failed");
    return {solver.eigenvalues(), solver.eigenvectors()};
}

namespace spin1 {
CMat x() {
    const double s = 1.0 / std::sqrt(2.0);
    CMat m = CMat::Zero(3, 3);
    m(0, 1) = m(1, 0) = m(1, 2) = m(2, 1) = s;
    return m;
}
CMat y() {
    const double s = 1.0 / std::sqrt(2.0);
    const Complex i(0.0, 1.0);
    CMat m = CMat::Zero(3, 3);
    m(0, 1) = -i * s;
    m(1, 0) = i * s;
    m(1, 2) = -i * s;
    m(2, 1) = i * s;
    return m;
}
CMat z() {
    CMat m = CMat::Zero(3, 3);
    m(0, 0) = 1.0;
    m(2, 2) = -1.0;
    return m;
}
CMat identity() { return CMat::Identity(3, 3); }
}  // namespace spin1

namespace pauli {
CMat i() { return CMat::Identity(2, 2); }
CMat x() {
    CMat m = CMat::Zero(2, 2);
    m(0, 1) = m(1, 0) = 1.0;
    return m;
}
CMat y() {
    CMat m = CMat::Zero(2, 2);
    m(0, 1) = Complex(0, -1);
    m(1, 0) = Complex(0, 1);
    return m;
}
CMat z() {
    CMat m = CMat::Zero(2, 2);
    m(0, 0) = 1.0;
    m(1, 1) = -1.0;
    return m;
}

CMat basis_element(int index, int n_qubits) {
    static const CMat singles[4] = {i(), x(), y(), z()};
    CMat out = CMat::Identity(1, 1);
    int divisor = 1;
    for (int q = 1; q < n_qubits; ++q) divisor *= 4;
    for (int q = 0; q < n_qubits; ++q) {
        out = kron(out, singles[(index / divisor) % 4]);
        divisor /= 4;
    }
    return out;
}

std::string label(int index, int n_qubits) {
    static const char names[4] = {'I', 'X', 'Y', 'Z'};
    std::string out(static_cast<std::size_t>(n_qubits), 'I');
    for (int q = n_qubits - 1; q >= 0; --q) {
        out[static_cast<std::size_t>(q)] = names[index % 4];
        index /= 4;
    }
    return out;
}
}  // namespace pauli

Superoperator unitary_superop(const CMat& u) {
    return {static_cast<int>(u.rows()), kron(CMat(u.conjugate()), u)};
}

Superoperator identity_superop(int dim) { return {dim, CMat::Identity(dim * dim, dim * dim)}; }

Superoperator compose(const Superoperator& later, const Superoperator& earlier) {
    if (later.dim != earlier.dim) throw ConfigError("compose: dimension mismatch");
    return {later.dim, later.matrix * earlier.matrix};
}

CMat vec(const CMat& rho) {
    return Eigen::Map<const CMat>(rho.data(), rho.size(), 1);
}

CMat unvec(const CMat& v, int dim) {
    return Eigen::Map<const CMat>(v.data(), dim, dim);
}

CMat apply_superop(const Superoperator& map, const CMat& rho) {
    if (rho.rows() != map.dim || rho.cols() != map.dim) throw ConfigError("apply: dimension mismatch");
    return unvec(map.matrix * vec(rho), map.dim);
}

CMat lindblad_generator(const CMat& h, const std::vector<CMat>& jumps) {
    const auto d = h.rows();
    const CMat id = CMat::Identity(d, d);
    const Complex minus_two_pi_i(0.0, -2.0 * M_PI);
    CMat gen = minus_two_pi_i * (kron(id, h) - kron(CMat(h.transpose()), id));
    for (const CMat& j : jumps) {
        const CMat jdj = j.adjoint() * j;
        gen += kron(CMat(j.conjugate()), j) - 0.5 * kron(id, jdj) - 0.5 * kron(CMat(jdj.transpose()), id);
    }
    return gen;
}

RMat pinv_symmetric(const RMat& a, double rel_tol) {
    Eigen::SelfAdjointEigenSolver<RMat> solver(a);
    const RVec& w = solver.eigenvalues();
    const double cutoff = rel_tol * std::max(1e-300, w.cwiseAbs().maxCoeff());
    RVec inv = RVec::Zero(w.size());
    for (Eigen::Index k = 0; k < w.size(); ++k)
        if (w(k) > cutoff) inv(k) = 1.0 / w(k);
    return solver.eigenvectors() * inv.asDiagonal() * solver.eigenvectors().transpose();
}

namespace {

void numeric_jacobian(const LsqProblem& problem, const RVec& x, const RVec& r0, double step, RMat& jac) {
    jac.resize(problem.n_residuals, problem.n_params);
    RVec xp = x;
    RVec rp(problem.n_residuals);
    for (int k = 0; k < problem.n_params; ++k) {
        const double h = step * std::max(1.0, std::abs(x(k)));
        xp(k) = x(k) + h;
        problem.evaluate(xp, rp, nullptr);
        jac.col(k) = (rp - r0) / h;
        xp(k) = x(k);
    }
}

}  // namespace

LsqResult levenberg_marquardt(const LsqProblem& problem, const RVec& x0, const LsqOptions& options) {
    if (problem.n_params <= 0 || x0.size() != problem.n_params)
        throw ConfigError("levenberg_marquardt: parameter count mismatch");
    LsqResult out;
    out.x = x0;
    RVec r(problem.n_residuals);
    RMat jac;
    auto evaluate_with_jacobian = [&](const RVec& x) {
        if (problem.analytic_jacobian) {
            jac.resize(problem.n_residuals, problem.n_params);
            problem.evaluate(x, r, &jac);
        } else {
            problem.evaluate(x, r, nullptr);
            numeric_jacobian(problem, x, r, options.fd_step, jac);
        }
    };
    evaluate_with_jacobian(out.x);
    if (!r.allFinite()) throw NumericalError("levenberg_marquardt: non-finite residuals at start");
    double cost = r.squaredNorm();
    double lambda = options.lambda0;
    RVec trial_r(problem.n_residuals);
    out.message = "iteration limit reached";
    for (int it = 0; it < options.max_iterations; ++it) {
        out.iterations = it + 1;
        const RMat jtj = jac.transpose() * jac;
        const RVec grad = jac.transpose() * r;
        if (grad.cwiseAbs().maxCoeff() <= options.gtol * std::max(1.0, cost)) {
            out.converged = true;
            out.message = "gradient tolerance reached";
            break;
        }
        bool improved = false;
        for (int attempt = 0; attempt < 40; ++attempt) {
            RMat damped = jtj;
            for (int k = 0; k < problem.n_params; ++k) damped(k, k) += lambda * std::max(jtj(k, k), 1e-12);
            const RVec step = damped.ldlt().solve(-grad);
            if (!step.allFinite()) {
                lambda *= 10.0;
                continue;
            }
            const RVec trial = out.x + step;
            problem.evaluate(trial, trial_r, nullptr);
            const double trial_cost = trial_r.allFinite() ? trial_r.squaredNorm() : INFINITY;
            if (trial_cost < cost) {
                const double rel_drop = (cost - trial_cost) / std::max(cost, 1e-300);
                const double rel_step = step.norm() / std::max(out.x.norm(), 1e-12);
                out.x = trial;
                cost = trial_cost;
                lambda = std::max(lambda / 3.0, 1e-12);
                improved = true;
                if (rel_drop <= options.ftol || rel_step <= options.xtol) {
                    out.converged = true;
                    out.message = rel_drop <= options.ftol ? "cost tolerance reached" : "step tolerance reached";
                }
                break;
            }
            lambda *= 4.0;
        }
        if (!improved) {
            out.converged = true;
            out.message = "no further decrease";
            break;
        }
        evaluate_with_jacobian(out.x);
        if (out.converged) break;
    }
    problem.evaluate(out.x, r, nullptr);
    if (!problem.analytic_jacobian) numeric_jacobian(problem, out.x, r, options.fd_step, jac);
    out.residuals = r;
    out.jacobian = jac;
    out.cost = r.squaredNorm();
    return out;
}

void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& body) {
    const unsigned n = std::min<std::size_t>(effective_threads(threads), std::max<std::size_t>(count, 1));
    if (n <= 1 || count <= 1) {
        for (std::size_t k = 0; k < count; ++k) body(k);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_lock;
    std::vector<std::thread> pool;
    pool.reserve(n);
    for (unsigned w = 0; w < n; ++w) {
        pool.emplace_back([&] {
            for (std::size_t k = next++; k < count; k = next++) {
                try {
                    body(k);
                } catch (...) {
                    std::lock_guard<std::mutex> guard(failure_lock);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace spinforge
