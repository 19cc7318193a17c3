#include "spinforge/system.hpp"

#include "spinforge/errors.hpp"
#include "spinforge/numerics.hpp"

#include <cmath>
#include <string>

namespace spinforge {

void SystemParams::validate() const {
    const double values[] = {D, Q, gamma_e, gamma_n, Bz, Bperp, Axx, Ayy, Azz};
    for (double v : values)
        if (!std::isfinite(v)) throw ConfigError("system parameters must be finite");
    if (!(D > 0)) throw ConfigError("D must be positive");
    if (!(Q < 0)) throw ConfigError("Q must be negative");
    if (Bz < 0) throw ConfigError("Bz must be non-negative");
    if (Bperp < 0) throw ConfigError("Bperp must be non-negative");
    if (Axx != 0.0 || Ayy != 0.0) {
        const double ref = std::max(std::abs(Axx), std::abs(Ayy));
        if (std::abs(Axx - Ayy) / ref >= 0.01) throw ConfigError("Axx and Ayy must agree within 1% (axial hyperfine)");
    }
}

std::array<double, 6> LevelFrequencies::as_array() const {
    return {wN_m1_at_es_m1, wN_p1_at_es_m1, wN_p1_at_es_0, wN_m1_at_es_0, wE_at_nI_m1, wE_at_nI_0};
}

LevelFrequencies LevelFrequencies::from_array(const std::array<double, 6>& v) {
    return {v[0], v[1], v[2], v[3], v[4], v[5]};
}

LevelFrequencies measured_frequencies() {
    return {7.120706e6, 2.780105e6, 4.965825e6, 4.927491e6, 2.701294e9, 2.699101e9};
}

CMat build_hamiltonian(const SystemParams& p) {
    const CMat sx = spin1::x(), sy = spin1::y(), sz = spin1::z(), id = spin1::identity();
    CMat h = p.D * kron(CMat(sz * sz), id);
    h += p.gamma_e * p.Bz * kron(sz, id);
    h += p.gamma_e * p.Bperp * kron(sx, id);
    h += p.Q * kron(id, CMat(sz * sz));
    h += p.gamma_n * p.Bz * kron(id, sz);
    h += p.gamma_n * p.Bperp * kron(id, sx);
    h += p.Axx * kron(sx, sx);
    h += p.Ayy * kron(sy, sy);
    h += p.Azz * kron(sz, sz);
    return 0.5 * (h + h.adjoint());
}

namespace {

// Assigns each column of `vectors` to a reference column by largest overlap.
// Returns the permutation target[column] and the weakest winning overlap.
std::array<int, 9> match_columns(const CMat& reference, const CMat& vectors, double& weakest) {
    const RMat overlap = (reference.adjoint() * vectors).cwiseAbs2();
    std::array<int, 9> target{};
    std::array<bool, 9> taken{};
    weakest = 1.0;
    for (int col = 0; col < 9; ++col) {
        Eigen::Index best = 0;
        overlap.col(col).maxCoeff(&best);
        if (taken[static_cast<std::size_t>(best)])
            throw NumericalError("level labelling failed: two eigenvectors map to the same level");
        taken[static_cast<std::size_t>(best)] = true;
        target[static_cast<std::size_t>(col)] = static_cast<int>(best);
        weakest = std::min(weakest, overlap(best, col));
    }
    return target;
}

DressedBasis labelled_eigenbasis(const CMat& h, const CMat& reference) {
    const EigenSystem es = eig_hermitian(h);
    DressedBasis out;
    out.energies = RVec::Zero(9);
    out.vectors = CMat::Zero(9, 9);
    const auto target = match_columns(reference, es.vectors, out.min_overlap);
    if (out.min_overlap <= numerics().label_overlap_min)
        throw NumericalError("level labelling failed: overlap " + std::to_string(out.min_overlap) +
                             " does not exceed the labelling threshold");
    for (int col = 0; col < 9; ++col) {
        const int k = target[static_cast<std::size_t>(col)];
        out.energies(k) = es.values(col);
        out.vectors.col(k) = es.vectors.col(col);
    }
    return out;
}

}  // namespace

DressedBasis dressed_basis(const SystemParams& params) {
    params.validate();
    SystemParams aligned = params;
    aligned.Bperp = 0.0;
    // Label the aligned-field eigenbasis against product states, then the
    // full eigenbasis against that.
    const DressedBasis ref = labelled_eigenbasis(build_hamiltonian(aligned), CMat::Identity(9, 9));
    DressedBasis out = params.Bperp == 0.0 ? ref : labelled_eigenbasis(build_hamiltonian(params), ref.vectors);
    if (params.Bperp != 0.0) out.min_overlap = std::min(out.min_overlap, ref.min_overlap);
    for (int k = 0; k < 9; ++k) {
        const Complex diag = out.vectors(k, k);
        if (std::abs(diag) > 0) out.vectors.col(k) *= std::conj(diag) / std::abs(diag);
    }
    return out;
}

LevelFrequencies level_frequencies(const SystemParams& p, LevelMethod method) {
    p.validate();
    if (method == LevelMethod::perturbative) {
        const double a_perp = p.a_perp();
        const double x = a_perp * a_perp / p.D;
        const double gnb = p.gamma_n * p.Bz;
        const double geb = p.gamma_e * p.Bz;
        LevelFrequencies f;
        f.wN_m1_at_es_m1 = std::abs(-p.Q + gnb - p.Azz + x);
        f.wN_p1_at_es_m1 = std::abs(-p.Q - gnb + p.Azz);
        f.wN_p1_at_es_0 = std::abs(-p.Q - gnb - x);
        f.wN_m1_at_es_0 = std::abs(-p.Q + gnb - x);
        f.wE_at_nI_m1 = std::abs(p.D - geb - p.Azz + x);
        f.wE_at_nI_0 = std::abs(p.D - geb + 3.0 * x);
        return f;
    }
    const DressedBasis basis = dressed_basis(p);
    auto e = [&](int ms, int mI) { return basis.energies(QubitEncoding::index(ms, mI)); };
    LevelFrequencies f;
    f.wN_m1_at_es_m1 = std::abs(e(-1, 0) - e(-1, -1));
    f.wN_p1_at_es_m1 = std::abs(e(-1, 0) - e(-1, 1));
    f.wN_p1_at_es_0 = std::abs(e(0, 0) - e(0, 1));
    f.wN_m1_at_es_0 = std::abs(e(0, 0) - e(0, -1));
    f.wE_at_nI_m1 = std::abs(e(-1, 1) - e(0, 1));
    f.wE_at_nI_0 = std::abs(e(-1, 0) - e(0, 0));
    return f;
}

SystemParams fit_params_from_frequencies(const LevelFrequencies& f, double gamma_e, double gamma_n) {
    for (double v : f.as_array())
        if (!(v > 0) || !std::isfinite(v)) throw ConfigError("frequencies must be positive and finite");
    if (gamma_n == 0.0) throw ConfigError("gamma_n must be non-zero");
    // The nitrogen lines with ms = 0 differ only by the Zeeman term.
    const double gnb = 0.5 * (f.wN_m1_at_es_0 - f.wN_p1_at_es_0);
    const double bz = gnb / gamma_n;
    // (S2 + S3) - (S4 + S5) = 3 x with x = A_perp^2 / D.
    const double x = ((f.wN_m1_at_es_m1 + f.wN_p1_at_es_m1) - (f.wN_p1_at_es_0 + f.wN_m1_at_es_0)) / 3.0;
    if (x < 0) throw NumericalError("inconsistent frequencies: negative A_perp^2/D");
    const double q = -0.5 * (f.wN_m1_at_es_m1 + f.wN_p1_at_es_m1 - x);
    const double azz = f.wN_p1_at_es_m1 + q + gnb;
    const double d = f.wE_at_nI_m1 + gamma_e * bz + azz - x;
    if (!(d > 0)) throw NumericalError("inconsistent frequencies: non-positive D");
    const double magnitude = std::sqrt(x * d);
    const double a_perp = azz < 0 ? -magnitude : magnitude;
    SystemParams out;
    out.D = d;
    out.Q = q;
    out.gamma_e = gamma_e;
    out.gamma_n = gamma_n;
    out.Bz = bz;
    out.Bperp = 0.0;
    out.Axx = out.Ayy = a_perp;
    out.Azz = azz;
    return out;
}

double electron_line_residual(const LevelFrequencies& freqs, const SystemParams& fitted) {
    return freqs.wE_at_nI_0 - level_frequencies(fitted, LevelMethod::perturbative).wE_at_nI_0;
}

nlohmann::json to_json(const SystemParams& p) {
    return {{"D_Hz", p.D},           {"Q_Hz", p.Q},     {"gamma_e_HzPerG", p.gamma_e},
            {"gamma_n_HzPerG", p.gamma_n}, {"Bz_G", p.Bz}, {"Bperp_G", p.Bperp},
            {"Axx_Hz", p.Axx},       {"Ayy_Hz", p.Ayy}, {"Azz_Hz", p.Azz}};
}

SystemParams system_params_from_json(const nlohmann::json& doc, SystemParams base) {
    if (!doc.is_object()) throw ConfigError("system block must be a JSON object");
    static const char* known[] = {"D_Hz", "Q_Hz", "gamma_e_HzPerG", "gamma_n_HzPerG", "Bz_G",
                                  "Bperp_G", "Axx_Hz", "Ayy_Hz", "Azz_Hz"};
    for (const auto& item : doc.items()) {
        bool ok = false;
        for (const char* k : known) ok = ok || item.key() == k;
        if (!ok) throw ConfigError("unknown system key: " + item.key());
        if (!item.value().is_number()) throw ConfigError("system." + item.key() + " must be a number");
    }
    auto take = [&](const char* key, double& field) {
        if (doc.contains(key)) field = doc[key].get<double>();
    };
    take("D_Hz", base.D);
    take("Q_Hz", base.Q);
    take("gamma_e_HzPerG", base.gamma_e);
    take("gamma_n_HzPerG", base.gamma_n);
    take("Bz_G", base.Bz);
    take("Bperp_G", base.Bperp);
    take("Axx_Hz", base.Axx);
    take("Ayy_Hz", base.Ayy);
    take("Azz_Hz", base.Azz);
    base.validate();
    return base;
}

nlohmann::json to_json(const LevelFrequencies& f) {
    return {{"wN_m1_at_es_m1_Hz", f.wN_m1_at_es_m1}, {"wN_p1_at_es_m1_Hz", f.wN_p1_at_es_m1},
            {"wN_p1_at_es_0_Hz", f.wN_p1_at_es_0},   {"wN_m1_at_es_0_Hz", f.wN_m1_at_es_0},
            {"wE_at_nI_m1_Hz", f.wE_at_nI_m1},       {"wE_at_nI_0_Hz", f.wE_at_nI_0}};
}

}  // namespace spinforge
