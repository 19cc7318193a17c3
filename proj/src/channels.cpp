#include "spinforge/channels.hpp"

#include "spinforge/errors.hpp"
#include "spinforge/numerics.hpp"
#include "spinforge/system.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace spinforge {

namespace {

int qubits_for_dim(Eigen::Index d) {
    if (d == 2) return 1;
    if (d == 4) return 2;
    throw ConfigError("only one- and two-qubit channels are supported");
}

const std::vector<CMat>& pauli_basis(int n_qubits) {
    static const std::vector<CMat> one = [] {
        std::vector<CMat> b;
        for (int k = 0; k < 4; ++k) b.push_back(pauli::basis_element(k, 1));
        return b;
    }();
    static const std::vector<CMat> two = [] {
        std::vector<CMat> b;
        for (int k = 0; k < 16; ++k) b.push_back(pauli::basis_element(k, 2));
        return b;
    }();
    if (n_qubits == 1) return one;
    if (n_qubits == 2) return two;
    throw ConfigError("only one- and two-qubit channels are supported");
}

RMat ptm_of_linear_map(int n_qubits, const std::function<CMat(const CMat&)>& map) {
    const auto& basis = pauli_basis(n_qubits);
    const int d = 1 << n_qubits;
    const int d2 = d * d;
    RMat out(d2, d2);
    for (int j = 0; j < d2; ++j) {
        const CMat image = map(basis[static_cast<std::size_t>(j)]);
        for (int i = 0; i < d2; ++i) out(i, j) = (basis[static_cast<std::size_t>(i)] * image).trace().real() / d;
    }
    return out;
}

void require_square_pair(const PTM& a, const PTM& b) {
    if (a.n_qubits != b.n_qubits || a.matrix.rows() != b.matrix.rows())
        throw ConfigError("PTM dimension mismatch");
}

}  // namespace

PTM PTM::identity(int n_qubits) {
    const int d2 = 1 << (2 * n_qubits);
    return {n_qubits, RMat::Identity(d2, d2)};
}

SubspaceChannel channel_from_propagator(const Superoperator& map, const std::vector<int>& indices) {
    const int d = static_cast<int>(indices.size());
    const int n = qubits_for_dim(d);
    for (int k : indices)
        if (k < 0 || k >= map.dim) throw ConfigError("subspace index out of range");
    // compressed map on the subspace: restrict input and output
    CMat compressed(d * d, d * d);
    for (int b = 0; b < d; ++b) {
        for (int a = 0; a < d; ++a) {
            CMat in = CMat::Zero(map.dim, map.dim);
            in(indices[static_cast<std::size_t>(a)], indices[static_cast<std::size_t>(b)]) = 1.0;
            const CMat out = apply_superop(map, in);
            CMat sub(d, d);
            for (int r = 0; r < d; ++r)
                for (int c = 0; c < d; ++c)
                    sub(r, c) = out(indices[static_cast<std::size_t>(r)], indices[static_cast<std::size_t>(c)]);
            compressed.col(b * d + a) = vec(sub);
        }
    }
    SubspaceChannel out;
    out.leakage.per_basis_state.resize(static_cast<std::size_t>(d));
    for (int a = 0; a < d; ++a) {
        double kept = 0.0;
        for (int r = 0; r < d; ++r) kept += compressed(r * d + r, a * d + a).real();
        const double leak = std::clamp(1.0 - kept, 0.0, 1.0);
        out.leakage.per_basis_state[static_cast<std::size_t>(a)] = leak;
        out.leakage.worst_case = std::max(out.leakage.worst_case, leak);
    }
    if (out.leakage.worst_case > numerics().leakage_max)
        throw NumericalError("leakage " + std::to_string(out.leakage.worst_case) +
                             " out of the qubit subspace exceeds the allowed maximum");
    PTM raw = ptm_from_superop({d, compressed});
    out.renormalization = raw.matrix(0, 0);
    raw.matrix /= out.renormalization;
    raw.n_qubits = n;
    out.ptm = raw;
    return out;
}

SubspaceChannel channel_from_propagator(const CMat& unitary, const std::vector<int>& indices) {
    return channel_from_propagator(unitary_superop(unitary), indices);
}

SubspaceChannel channel_from_propagator(const Superoperator& map) {
    const QubitEncoding enc;
    return channel_from_propagator(map, std::vector<int>(enc.computational.begin(), enc.computational.end()));
}

PTM ptm_of_unitary(const CMat& u) {
    const int n = qubits_for_dim(u.rows());
    if (!is_unitary(u, numerics().unitary_tol * 100)) throw ConfigError("ptm_of_unitary: input is not unitary");
    return {n, ptm_of_linear_map(n, [&](const CMat& x) { return CMat(u * x * u.adjoint()); })};
}

PTM ptm_from_superop(const Superoperator& map) {
    const int n = qubits_for_dim(map.dim);
    return {n, ptm_of_linear_map(n, [&](const CMat& x) { return apply_superop(map, x); })};
}

Superoperator superop_from_ptm(const PTM& ptm) {
    const auto& basis = pauli_basis(ptm.n_qubits);
    const int d = ptm.dim();
    const int d2 = d * d;
    // S = sum_ij P_ij vec(s_i) vec(s_j)^dagger / d
    CMat s = CMat::Zero(d2, d2);
    for (int i = 0; i < d2; ++i)
        for (int j = 0; j < d2; ++j)
            if (ptm.matrix(i, j) != 0.0)
                s += ptm.matrix(i, j) * vec(basis[static_cast<std::size_t>(i)]) *
                     vec(basis[static_cast<std::size_t>(j)]).adjoint() / static_cast<double>(d);
    return {d, s};
}

PTM compose(const PTM& later, const PTM& earlier) {
    require_square_pair(later, earlier);
    return {later.n_qubits, later.matrix * earlier.matrix};
}

PTM depolarizing(int n_qubits, double p) {
    PTM out = PTM::identity(n_qubits);
    out.matrix *= p;
    out.matrix(0, 0) = 1.0;
    return out;
}

PTM pauli_channel(int n_qubits, const std::vector<double>& probabilities) {
    const int d2 = 1 << (2 * n_qubits);
    if (static_cast<int>(probabilities.size()) != d2) throw ConfigError("pauli_channel: wrong probability count");
    const auto& basis = pauli_basis(n_qubits);
    return {n_qubits, ptm_of_linear_map(n_qubits, [&](const CMat& x) {
                CMat y = CMat::Zero(x.rows(), x.cols());
                for (int k = 0; k < d2; ++k)
                    y += probabilities[static_cast<std::size_t>(k)] * basis[static_cast<std::size_t>(k)] * x *
                         basis[static_cast<std::size_t>(k)];
                return y;
            })};
}

RVec pauli_vector(const CMat& op) {
    const int n = qubits_for_dim(op.rows());
    const auto& basis = pauli_basis(n);
    const double norm = std::sqrt(static_cast<double>(op.rows()));
    RVec v(static_cast<Eigen::Index>(basis.size()));
    for (std::size_t k = 0; k < basis.size(); ++k)
        v(static_cast<Eigen::Index>(k)) = (basis[k] * op).trace().real() / norm;
    return v;
}

CMat operator_from_pauli_vector(const RVec& v) {
    const int n = v.size() == 4 ? 1 : v.size() == 16 ? 2 : 0;
    if (n == 0) throw ConfigError("operator_from_pauli_vector: length must be 4 or 16");
    const auto& basis = pauli_basis(n);
    const int d = 1 << n;
    CMat out = CMat::Zero(d, d);
    for (std::size_t k = 0; k < basis.size(); ++k) out += v(static_cast<Eigen::Index>(k)) * basis[k];
    return out / std::sqrt(static_cast<double>(d));
}

double avg_gate_fidelity(const PTM& experiment, const PTM& target) {
    require_square_pair(experiment, target);
    const double d = experiment.dim();
    const double tr = (experiment.matrix.transpose() * target.matrix).trace();
    return (tr / d + 1.0) / (d + 1.0);
}

double process_fidelity(const PTM& experiment, const PTM& target) {
    require_square_pair(experiment, target);
    const double d = experiment.dim();
    return (experiment.matrix.transpose() * target.matrix).trace() / (d * d);
}

CMat choi_matrix(const PTM& ptm) {
    const auto& basis = pauli_basis(ptm.n_qubits);
    const int d = ptm.dim();
    const int d2 = d * d;
    CMat choi = CMat::Zero(d2, d2);
    for (int i = 0; i < d2; ++i)
        for (int j = 0; j < d2; ++j)
            if (ptm.matrix(i, j) != 0.0)
                choi += ptm.matrix(i, j) *
                        kron(CMat(basis[static_cast<std::size_t>(j)].transpose()), basis[static_cast<std::size_t>(i)]);
    return choi / static_cast<double>(d2);
}

PTM ptm_from_choi(const CMat& choi, int n_qubits) {
    const auto& basis = pauli_basis(n_qubits);
    const int d = 1 << n_qubits;
    const int d2 = d * d;
    RMat out(d2, d2);
    for (int i = 0; i < d2; ++i)
        for (int j = 0; j < d2; ++j) {
            const CMat probe =
                kron(CMat(basis[static_cast<std::size_t>(j)].transpose()), basis[static_cast<std::size_t>(i)]);
            out(i, j) = (probe.adjoint() * choi).trace().real();
        }
    return {n_qubits, out};
}

CptpReport cptp_check(const PTM& ptm) {
    CptpReport r;
    const Eigen::Index d2 = ptm.matrix.rows();
    RVec top = ptm.matrix.row(0).transpose();
    top(0) -= 1.0;
    r.tp_deviation = top.cwiseAbs().maxCoeff();
    r.is_tp = r.tp_deviation <= numerics().tp_tol;
    const CMat choi = choi_matrix(ptm);
    Eigen::SelfAdjointEigenSolver<CMat> solver(CMat(0.5 * (choi + choi.adjoint())), Eigen::EigenvaluesOnly);
    r.choi_min_eigenvalue = solver.eigenvalues().minCoeff();
    r.is_cp = r.choi_min_eigenvalue >= -numerics().cp_tol;
    (void)d2;
    return r;
}

PTM cptp_project(const PTM& ptm) {
    const int n = ptm.n_qubits;
    const int d2 = static_cast<int>(ptm.matrix.rows());
    PTM current = ptm;
    for (int it = 0; it < 200; ++it) {
        // CP: clip the Choi spectrum
        CMat choi = choi_matrix(current);
        choi = 0.5 * (choi + choi.adjoint()).eval();
        Eigen::SelfAdjointEigenSolver<CMat> solver(choi);
        RVec w = solver.eigenvalues().cwiseMax(0.0);
        const CMat clipped = solver.eigenvectors() * w.cast<Complex>().asDiagonal() * solver.eigenvectors().adjoint();
        current = ptm_from_choi(clipped, n);
        // TP: restore the trace row
        const double change = (current.matrix.row(0) - RMat::Identity(1, d2)).cwiseAbs().maxCoeff();
        current.matrix.row(0) = RMat::Identity(1, d2);
        if (change < 1e-13) break;
    }
    const double m = cptp_check(current).choi_min_eigenvalue;
    if (m < 0.0) {
        const double floor = 1.0 / d2;  // Choi spectrum of the fully depolarising map
        const double lambda = -m / (floor - m);
        current.matrix = (1.0 - lambda) * current.matrix + lambda * depolarizing(n, 0.0).matrix;
    }
    return current;
}

RMat elementary_generator(GeneratorKind kind, int p, int q, int n_qubits) {
    const auto& basis = pauli_basis(n_qubits);
    const CMat& P = basis.at(static_cast<std::size_t>(p));
    const CMat& Q = basis.at(static_cast<std::size_t>(q));
    const Complex i(0.0, 1.0);
    std::function<CMat(const CMat&)> map;
    switch (kind) {
        case GeneratorKind::hamiltonian:
            map = [&](const CMat& rho) { return CMat(-0.5 * i * (P * rho - rho * P)); };
            break;
        case GeneratorKind::stochastic:
            map = [&](const CMat& rho) { return CMat(P * rho * P - rho); };
            break;
        case GeneratorKind::correlation:
            map = [&](const CMat& rho) {
                const CMat anti = P * Q + Q * P;
                return CMat(P * rho * Q + Q * rho * P - 0.5 * (anti * rho + rho * anti));
            };
            break;
        case GeneratorKind::active:
            map = [&](const CMat& rho) {
                const CMat comm = P * Q - Q * P;
                return CMat(i * (P * rho * Q - Q * rho * P + 0.5 * (comm * rho + rho * comm)));
            };
            break;
    }
    return ptm_of_linear_map(n_qubits, map);
}

RMat ErrorGenerator::hamiltonian_part() const {
    const int d2 = 1 << (2 * n_qubits);
    RMat out = RMat::Zero(d2, d2);
    for (int k = 1; k < d2; ++k)
        out += h_coeffs(k - 1) * elementary_generator(GeneratorKind::hamiltonian, k, k, n_qubits);
    return out;
}

namespace {

struct GeneratorBasis {
    RMat columns;  // each column a vectorised generator
    std::vector<std::pair<int, int>> pairs;
    Eigen::ColPivHouseholderQR<RMat> qr;
};

const GeneratorBasis& generator_basis(int n_qubits) {
    auto build = [](int n) {
        GeneratorBasis b;
        const int d2 = 1 << (2 * n);
        const int m = d2 - 1;
        for (int p = 1; p < d2; ++p)
            for (int q = p + 1; q < d2; ++q) b.pairs.emplace_back(p, q);
        const int total = 2 * m + 2 * static_cast<int>(b.pairs.size());
        b.columns.resize(d2 * d2, total);
        int col = 0;
        auto put = [&](const RMat& g) { b.columns.col(col++) = Eigen::Map<const RVec>(g.data(), g.size()); };
        for (int p = 1; p < d2; ++p) put(elementary_generator(GeneratorKind::hamiltonian, p, p, n));
        for (int p = 1; p < d2; ++p) put(elementary_generator(GeneratorKind::stochastic, p, p, n));
        for (const auto& [p, q] : b.pairs) put(elementary_generator(GeneratorKind::correlation, p, q, n));
        for (const auto& [p, q] : b.pairs) put(elementary_generator(GeneratorKind::active, p, q, n));
        b.qr.compute(b.columns);
        return b;
    };
    static const GeneratorBasis one = build(1);
    static const GeneratorBasis two = build(2);
    if (n_qubits == 1) return one;
    if (n_qubits == 2) return two;
    throw ConfigError("only one- and two-qubit generators are supported");
}

}  // namespace

ErrorGenerator error_generator_from_log(const RMat& L, int n_qubits) {
    const GeneratorBasis& basis = generator_basis(n_qubits);
    const int d2 = 1 << (2 * n_qubits);
    if (L.rows() != d2 || L.cols() != d2) throw ConfigError("error generator dimension mismatch");
    ErrorGenerator out;
    out.n_qubits = n_qubits;
    out.L = L;
    out.pairs = basis.pairs;
    for (int k = 1; k < d2; ++k) out.labels.push_back(pauli::label(k, n_qubits));
    const RVec target = Eigen::Map<const RVec>(L.data(), L.size());
    const RVec coeffs = basis.qr.solve(target);
    const int m = d2 - 1;
    const int np = static_cast<int>(basis.pairs.size());
    out.h_coeffs = coeffs.segment(0, m);
    out.s_coeffs = coeffs.segment(m, m);
    out.c_coeffs = coeffs.segment(2 * m, np);
    out.a_coeffs = coeffs.segment(2 * m + np, np);
    out.reconstruction_error = (basis.columns * coeffs - target).cwiseAbs().maxCoeff();
    return out;
}

ErrorGenerator error_generator(const PTM& g, const PTM& g0) {
    require_square_pair(g, g0);
    Eigen::FullPivLU<RMat> lu(g0.matrix);
    if (!lu.isInvertible()) throw ConfigError("error_generator: target is not invertible");
    const RMat ratio = g.matrix * lu.inverse();
    RMat L;
    try {
        L = logm(ratio);
    } catch (const NumericalError&) {
        throw NumericalError("error_generator: logarithm outside the principal branch; error too large");
    }
    return error_generator_from_log(L, g.n_qubits);
}

PTM apply_error(const RMat& L, const PTM& g0) { return {g0.n_qubits, expm(L) * g0.matrix}; }

FidelitySplit fidelity_split(const ErrorGenerator& err, const PTM& g0) {
    FidelitySplit out;
    const RMat lh = err.hamiltonian_part();
    out.coherent = 1.0 - avg_gate_fidelity(apply_error(lh, g0), g0);
    out.incoherent = 1.0 - avg_gate_fidelity(apply_error(RMat(err.L - lh), g0), g0);
    out.total = 1.0 - avg_gate_fidelity(apply_error(err.L, g0), g0);
    out.residual = out.total - out.coherent - out.incoherent;
    out.large_error_warning = std::abs(out.residual) > numerics().split_warning_fraction * std::abs(out.total);
    return out;
}

nlohmann::json to_json(const PTM& ptm) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < ptm.matrix.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index j = 0; j < ptm.matrix.cols(); ++j) row.push_back(ptm.matrix(i, j));
        rows.push_back(row);
    }
    nlohmann::json labels = nlohmann::json::array();
    for (int k = 0; k < (1 << (2 * ptm.n_qubits)); ++k) labels.push_back(pauli::label(k, ptm.n_qubits));
    return {{"basis", "IXYZ"}, {"n_qubits", ptm.n_qubits}, {"labels", labels}, {"matrix", rows}};
}

PTM ptm_from_json(const nlohmann::json& doc) {
    try {
        PTM out;
        out.n_qubits = doc.at("n_qubits").get<int>();
        if (out.n_qubits != 1 && out.n_qubits != 2) throw ConfigError("PTM n_qubits must be 1 or 2");
        const int d2 = 1 << (2 * out.n_qubits);
        const auto& rows = doc.at("matrix");
        if (static_cast<int>(rows.size()) != d2) throw ConfigError("PTM has the wrong number of rows");
        out.matrix.resize(d2, d2);
        for (int i = 0; i < d2; ++i) {
            if (static_cast<int>(rows[i].size()) != d2) throw ConfigError("PTM has the wrong number of columns");
            for (int j = 0; j < d2; ++j) out.matrix(i, j) = rows[i][j].get<double>();
        }
        return out;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad PTM: ") + e.what());
    }
}

nlohmann::json to_json(const LeakageReport& leakage) {
    return {{"worst_case", leakage.worst_case}, {"per_basis_state", leakage.per_basis_state}};
}

nlohmann::json to_json(const ErrorGenerator& err) {
    nlohmann::json h = nlohmann::json::object(), s = nlohmann::json::object();
    for (std::size_t k = 0; k < err.labels.size(); ++k) {
        h[err.labels[k]] = err.h_coeffs(static_cast<Eigen::Index>(k));
        s[err.labels[k]] = err.s_coeffs(static_cast<Eigen::Index>(k));
    }
    nlohmann::json c = nlohmann::json::object(), a = nlohmann::json::object();
    for (std::size_t k = 0; k < err.pairs.size(); ++k) {
        const std::string key = err.labels[static_cast<std::size_t>(err.pairs[k].first - 1)] + "," +
                                err.labels[static_cast<std::size_t>(err.pairs[k].second - 1)];
        c[key] = err.c_coeffs(static_cast<Eigen::Index>(k));
        a[key] = err.a_coeffs(static_cast<Eigen::Index>(k));
    }
    return {{"n_qubits", err.n_qubits}, {"hamiltonian", h}, {"stochastic", s}, {"correlation", c},
            {"active", a}, {"reconstruction_error", err.reconstruction_error}};
}

}  // namespace spinforge
