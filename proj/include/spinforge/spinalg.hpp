#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

namespace spinforge {

using Complex = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using RMat = Eigen::MatrixXd;
using RVec = Eigen::VectorXd;
using ComplexMatrix = CMat;

// Linear map on column-stacked density matrices: vec(A rho B) = (B^T (x) A) vec(rho).
struct Superoperator {
    int dim = 0;
    CMat matrix;
};

struct EigenSystem {
    RVec values;   // ascending
    CMat vectors;  // columns
};

CMat kron(const CMat& a, const CMat& b);
RMat kron(const RMat& a, const RMat& b);

bool is_hermitian(const CMat& a, double tol);
bool is_unitary(const CMat& a, double tol);

// Pade scaling-and-squaring exponential of a general square matrix.
CMat expm(const CMat& a);
RMat expm(const RMat& a);

// exp(factor * h) for Hermitian h via its eigendecomposition.
CMat expm_hermitian(const CMat& h, Complex factor);

// Principal logarithm by inverse scaling-and-squaring.
CMat logm(const CMat& a);
RMat logm(const RMat& a);

EigenSystem eig_hermitian(const CMat& a);

namespace spin1 {
CMat x();
CMat y();
CMat z();
CMat identity();
}  // namespace spin1

namespace pauli {
CMat i();
CMat x();
CMat y();
CMat z();
// Normalised-order element of {I,X,Y,Z}^(n): index digits base 4, first factor most significant.
CMat basis_element(int index, int n_qubits);
std::string label(int index, int n_qubits);
}  // namespace pauli

Superoperator unitary_superop(const CMat& u);
Superoperator identity_superop(int dim);
Superoperator compose(const Superoperator& later, const Superoperator& earlier);
CMat apply_superop(const Superoperator& map, const CMat& rho);

// Generator of d rho/dt = -i 2 pi [h, rho] + sum_k D[jump_k] rho, with h in Hz
// and jumps in sqrt(1/s).
CMat lindblad_generator(const CMat& h, const std::vector<CMat>& jumps);

CMat vec(const CMat& rho);
CMat unvec(const CMat& v, int dim);

// Levenberg-Marquardt for sum of squared residuals.
struct LsqProblem {
    int n_params = 0;
    int n_residuals = 0;
    // Fills residuals; fills jacobian (n_residuals x n_params) when it is non-null.
    std::function<void(const RVec& x, RVec& residuals, RMat* jacobian)> evaluate;
    bool analytic_jacobian = false;
};

struct LsqOptions {
    int max_iterations = 200;
    double ftol = 1e-14;
    double xtol = 1e-14;
    double gtol = 1e-14;
    double lambda0 = 1e-3;
    double fd_step = 1e-7;
};

struct LsqResult {
    RVec x;
    RVec residuals;
    RMat jacobian;
    double cost = 0.0;  // sum of squared residuals
    int iterations = 0;
    bool converged = false;
    std::string message;
};

LsqResult levenberg_marquardt(const LsqProblem& problem, const RVec& x0, const LsqOptions& options = {});

// Moore-Penrose inverse of a symmetric positive semidefinite matrix.
RMat pinv_symmetric(const RMat& a, double rel_tol = 1e-10);

void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& body);

}  // namespace spinforge
