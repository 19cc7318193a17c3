#pragma once

#include "spinforge/spinalg.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace spinforge {

// Pauli transfer matrix in the normalised basis {I,X,Y,Z}^(n)/sqrt(d),
// P_ij = Tr(s_i L(s_j)) / d. For two qubits the electron is the left factor.
struct PTM {
    int n_qubits = 1;
    RMat matrix;

    int dim() const { return 1 << n_qubits; }
    static PTM identity(int n_qubits);
};

struct LeakageReport {
    double worst_case = 0.0;
    std::vector<double> per_basis_state;
};

struct SubspaceChannel {
    PTM ptm;
    LeakageReport leakage;
    double renormalization = 1.0;  // mean retained trace
};

// Compresses a map on the 9-level space onto the levels listed in `indices`
// (2 or 4 of them, computational order) and renormalises the result.
// Throws NumericalError when the worst leakage exceeds numerics().leakage_max.
SubspaceChannel channel_from_propagator(const Superoperator& map, const std::vector<int>& indices);
SubspaceChannel channel_from_propagator(const CMat& unitary, const std::vector<int>& indices);
// Two-qubit channel on the computational levels {4, 5, 7, 8}.
SubspaceChannel channel_from_propagator(const Superoperator& map);

PTM ptm_of_unitary(const CMat& u);
PTM ptm_from_superop(const Superoperator& map);
Superoperator superop_from_ptm(const PTM& ptm);
PTM compose(const PTM& later, const PTM& earlier);
PTM depolarizing(int n_qubits, double p);
// Pauli channel: probabilities indexed like the Pauli basis, summing to one.
PTM pauli_channel(int n_qubits, const std::vector<double>& probabilities);

// State and effect vectors in the same normalised basis, so that
// probability = effect . ptm . state.
RVec pauli_vector(const CMat& operator_);
CMat operator_from_pauli_vector(const RVec& v);

double avg_gate_fidelity(const PTM& experiment, const PTM& target);
// Process (entanglement) fidelity Tr(P_exp^T P_target) / d^2.
double process_fidelity(const PTM& experiment, const PTM& target);

struct CptpReport {
    bool is_tp = false;
    bool is_cp = false;
    double choi_min_eigenvalue = 0.0;
    double tp_deviation = 0.0;
};

// Choi matrix normalised to unit trace.
CMat choi_matrix(const PTM& ptm);
PTM ptm_from_choi(const CMat& choi, int n_qubits);
CptpReport cptp_check(const PTM& ptm);
// Nearest-ish CPTP map: alternating CP clipping and TP repair, finished
// by the smallest admixture of the fully depolarising map that restores CP.
PTM cptp_project(const PTM& ptm);

enum class GeneratorKind { hamiltonian, stochastic, correlation, active };

// PTM-space matrix of one elementary error generator. Hamiltonian:
// rho -> -(i/2)[P, rho]; stochastic: P rho P - rho; correlation:
// P rho Q + Q rho P - {{P,Q}, rho}/2; active: i(P rho Q - Q rho P + {[P,Q], rho}/2).
RMat elementary_generator(GeneratorKind kind, int p, int q, int n_qubits);

struct ErrorGenerator {
    int n_qubits = 1;
    RMat L;
    std::vector<std::string> labels;  // non-identity Pauli labels
    RVec h_coeffs;                    // per label
    RVec s_coeffs;                    // per label
    RVec c_coeffs;                    // per unordered label pair (p < q), row-major
    RVec a_coeffs;
    std::vector<std::pair<int, int>> pairs;
    double reconstruction_error = 0.0;

    RMat hamiltonian_part() const;
};

ErrorGenerator error_generator(const PTM& g, const PTM& g0);
ErrorGenerator error_generator_from_log(const RMat& L, int n_qubits);
PTM apply_error(const RMat& L, const PTM& g0);

struct FidelitySplit {
    double coherent = 0.0;
    double incoherent = 0.0;
    double total = 0.0;
    double residual = 0.0;
    bool large_error_warning = false;
};

FidelitySplit fidelity_split(const ErrorGenerator& err, const PTM& g0);

nlohmann::json to_json(const PTM& ptm);
PTM ptm_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const LeakageReport& leakage);
nlohmann::json to_json(const ErrorGenerator& err);

}  // namespace spinforge
