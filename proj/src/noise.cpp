#include "spinforge/noise.hpp"

#include "spinforge/errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>

namespace spinforge {

namespace {

void require_keys(const nlohmann::json& doc, std::initializer_list<const char*> known, const char* what) {
    if (!doc.is_object()) throw ConfigError(std::string(what) + " must be a JSON object");
    for (auto it = doc.begin(); it != doc.end(); ++it) {
        const bool ok = std::any_of(known.begin(), known.end(), [&](const char* k) { return it.key() == k; });
        if (!ok) throw ConfigError(std::string("unknown ") + what + " key '" + it.key() + "'");
    }
}

double number(const nlohmann::json& doc, const char* key, double fallback) {
    if (!doc.contains(key)) return fallback;
    if (!doc[key].is_number()) throw ConfigError(std::string("'") + key + "' must be a number");
    return doc[key].get<double>();
}

}  // namespace

// ---------------------------------------------------------------- ensembles

void gauss_hermite(int order, RVec& nodes, RVec& weights) {
    if (order < 1) throw ConfigError("quadrature order must be positive");
    // Golub-Welsch on the probabilists' Hermite recurrence
    RMat jacobi = RMat::Zero(order, order);
    for (int k = 1; k < order; ++k) jacobi(k, k - 1) = jacobi(k - 1, k) = std::sqrt(double(k));
    Eigen::SelfAdjointEigenSolver<RMat> es(jacobi);
    nodes = es.eigenvalues();
    weights = es.eigenvectors().row(0).array().square().transpose();
    weights /= weights.sum();
    // the spectrum is symmetric; make it exactly so
    for (int i = 0; i < order / 2; ++i) {
        const int j = order - 1 - i;
        const double x = 0.5 * (nodes(j) - nodes(i));
        const double w = 0.5 * (weights(i) + weights(j));
        nodes(i) = -x;
        nodes(j) = x;
        weights(i) = weights(j) = w;
    }
    if (order % 2) nodes(order / 2) = 0.0;
}

QuasiStaticEnsemble QuasiStaticEnsemble::gaussian(double sigma_e, double sigma_n, int order) {
    QuasiStaticEnsemble e;
    e.sigma_e = sigma_e;
    e.sigma_n = sigma_n;
    e.sample_count = order;
    return e;
}

QuasiStaticEnsemble QuasiStaticEnsemble::fixed(double detuning_e, double detuning_n) {
    return from_grid({{detuning_e, detuning_n, 1.0}});
}

QuasiStaticEnsemble QuasiStaticEnsemble::from_grid(std::vector<EnsembleMember> members) {
    QuasiStaticEnsemble e;
    e.kind = Kind::grid;
    e.grid = std::move(members);
    return e;
}

void QuasiStaticEnsemble::validate() const {
    if (kind == Kind::gaussian) {
        if (!(sigma_e >= 0.0) || !(sigma_n >= 0.0) || !std::isfinite(sigma_e) || !std::isfinite(sigma_n))
            throw ConfigError("ensemble widths must be finite and non-negative");
        if (sample_count < 1) throw ConfigError("ensemble needs at least one sample");
        return;
    }
    if (grid.empty()) throw ConfigError("grid ensemble is empty");
    double total = 0.0;
    for (const auto& m : grid) {
        if (!std::isfinite(m.detuning_e) || !std::isfinite(m.detuning_n)) throw ConfigError("grid detuning not finite");
        if (!(m.weight >= 0.0)) throw ConfigError("grid weights must be non-negative");
        total += m.weight;
    }
    if (!(total > 0.0)) throw ConfigError("grid weights sum to zero");
}

std::vector<EnsembleMember> QuasiStaticEnsemble::members() const {
    validate();
    std::vector<EnsembleMember> out;
    if (kind == Kind::grid) {
        double total = 0.0;
        for (const auto& m : grid) total += m.weight;
        for (auto m : grid) {
            m.weight /= total;
            out.push_back(m);
        }
        return out;
    }
    const bool both = sigma_e > 0.0 && sigma_n > 0.0;
    if (sigma_e == 0.0 && sigma_n == 0.0) return {{0.0, 0.0, 1.0}};
    if (both || monte_carlo) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> normal;
        const double w = 1.0 / sample_count;
        for (int i = 0; i < sample_count; ++i) {
            const double de = sigma_e * normal(rng);
            const double dn = sigma_n * normal(rng);
            out.push_back({de, dn, w});
        }
        return out;
    }
    RVec x, w;
    gauss_hermite(sample_count, x, w);
    for (int i = 0; i < sample_count; ++i) {
        if (sigma_e > 0.0)
            out.push_back({sigma_e * x(i), 0.0, w(i)});
        else
            out.push_back({0.0, sigma_n * x(i), w(i)});
    }
    return out;
}

PTM average_channel(const QuasiStaticEnsemble& ensemble, const NoiseSpec& base,
                    const std::function<PTM(const NoiseSpec&)>& channel, unsigned threads) {
    const std::vector<EnsembleMember> members = ensemble.members();
    std::vector<PTM> parts(members.size());
    parallel_for(members.size(), threads, [&](std::size_t i) {
        NoiseSpec n = base;
        n.detuning_e += members[i].detuning_e;
        n.detuning_n += members[i].detuning_n;
        parts[i] = channel(n);
    });
    PTM out;
    out.n_qubits = parts.front().n_qubits;
    out.matrix = RMat::Zero(parts.front().matrix.rows(), parts.front().matrix.cols());
    for (std::size_t i = 0; i < parts.size(); ++i) out.matrix += members[i].weight * parts[i].matrix;
    return out;
}

PTM average_channel(const SystemParams& params, const CalibrationSet& cal, GateId id,
                    const QuasiStaticEnsemble& ensemble, const NoiseSpec& base, unsigned threads) {
    const PulseSequence seq = build_gate(id, cal);
    return average_channel(ensemble, base, [&](const NoiseSpec& n) {
        return simulate_sequence(params, cal, id, seq, n).channel.ptm;
    }, threads);
}

PTM average_channel(const SystemParams& params, const PulseSequence& seq, const QuasiStaticEnsemble& ensemble,
                    const std::vector<int>& context, const NoiseSpec& base, unsigned threads) {
    return average_channel(ensemble, base, [&](const NoiseSpec& n) {
        const PropagationResult r = propagate(params, seq, n);
        const Superoperator map = r.has_unitary ? unitary_superop(r.unitary) : r.superop;
        return channel_from_propagator(map, context).ptm;
    }, threads);
}

// ---------------------------------------------------------------- readout

void SSROModel::validate() const {
    if (!(F0 >= 0.0 && F0 <= 1.0 && F1 >= 0.0 && F1 <= 1.0)) throw ConfigError("readout fidelities must lie in [0, 1]");
    if (!(F0 + F1 > 1.0)) throw ConfigError("readout fidelities F0 + F1 must exceed 1");
}

SSROCorrection ssro_correct(double m0, long shots, const SSROModel& model) {
    model.validate();
    if (!(m0 >= 0.0 && m0 <= 1.0)) throw ConfigError("measured population must lie in [0, 1]");
    if (shots < 1) throw ConfigError("shot count must be positive");
    const double contrast = model.F0 + model.F1 - 1.0;
    SSROCorrection c;
    c.p0 = (m0 - (1.0 - model.F1)) / contrast;
    c.p1 = 1.0 - c.p0;
    c.stderr_ = std::sqrt(m0 * (1.0 - m0) / double(shots)) / contrast;
    return c;
}

// ---------------------------------------------------------------- fitting

std::string fit_model_name(FitModel m) {
    switch (m) {
        case FitModel::exponential_decay: return "exponential_decay";
        case FitModel::stretched_exp: return "stretched_exp";
        case FitModel::rb_decay: return "rb_decay";
        case FitModel::parabola: return "parabola";
        case FitModel::three_gaussian_dip: return "three_gaussian_dip";
    }
    return "?";
}

FitModel fit_model_from_name(const std::string& name) {
    for (FitModel m : {FitModel::exponential_decay, FitModel::stretched_exp, FitModel::rb_decay, FitModel::parabola,
                       FitModel::three_gaussian_dip})
        if (fit_model_name(m) == name) return m;
    throw ConfigError("unknown fit model '" + name + "'");
}

std::vector<std::string> fit_parameter_names(FitModel m) {
    switch (m) {
        case FitModel::exponential_decay: return {"A", "T", "C"};
        case FitModel::stretched_exp: return {"A", "T", "n", "C"};
        case FitModel::rb_decay: return {"B", "p"};
        case FitModel::parabola: return {"A", "a", "x0"};
        case FitModel::three_gaussian_dip: return {"a", "A1", "x1", "s1", "A2", "x2", "s2", "A3", "x3", "s3"};
    }
    return {};
}

namespace {

// Value and gradient of the model at x.
double model_grad(FitModel m, const RVec& p, double x, double* g) {
    switch (m) {
        case FitModel::exponential_decay: {
            const double e = std::exp(-x / p(1));
            if (g) {
                g[0] = e;
                g[1] = p(0) * e * x / (p(1) * p(1));
                g[2] = 1.0;
            }
            return p(0) * e + p(2);
        }
        case FitModel::stretched_exp: {
            const double r = x / p(1);
            const double u = r > 0.0 ? std::pow(r, p(2)) : 0.0;
            const double e = std::exp(-u);
            if (g) {
                g[0] = e;
                g[1] = p(0) * e * u * p(2) / p(1);
                g[2] = r > 0.0 ? -p(0) * e * u * std::log(r) : 0.0;
                g[3] = 1.0;
            }
            return p(0) * e + p(3);
        }
        case FitModel::rb_decay: {
            const double px = std::pow(p(1), x);
            if (g) {
                g[0] = px;
                g[1] = x == 0.0 ? 0.0 : p(0) * x * std::pow(p(1), x - 1.0);
            }
            return 0.5 + p(0) * px;
        }
        case FitModel::parabola: {
            const double d = x - p(2);
            if (g) {
                g[0] = 1.0;
                g[1] = d * d;
                g[2] = -2.0 * p(1) * d;
            }
            return p(0) + p(1) * d * d;
        }
        case FitModel::three_gaussian_dip: {
            double f = p(0);
            if (g) g[0] = 1.0;
            for (int i = 0; i < 3; ++i) {
                const double A = p(1 + 3 * i), c = p(2 + 3 * i), s = p(3 + 3 * i);
                const double d = x - c;
                const double e = std::exp(-d * d / (2 * s * s));
                f -= A * e;
                if (g) {
                    g[1 + 3 * i] = -e;
                    g[2 + 3 * i] = -A * e * d / (s * s);
                    g[3 + 3 * i] = -A * e * d * d / (s * s * s);
                }
            }
            return f;
        }
    }
    return 0.0;
}

// Weighted linear least squares of y on the columns of X.
RVec linear_fit(const RMat& X, const RVec& y, const RVec& w) {
    const RMat Xw = w.asDiagonal() * X;
    return Xw.colPivHouseholderQr().solve(w.asDiagonal() * y);
}

RVec initial_guess(FitModel m, const RVec& x, const RVec& y, const RVec& s) {
    const int n = int(x.size());
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return x(a) < x(b); });
    const double x_lo = x(order.front()), x_hi = x(order.back());
    const double span = std::max(x_hi - x_lo, 1e-300);
    const RVec w = s.cwiseInverse();

    auto decay_guess = [&](double& A, double& T, double& C) {
        C = y(order.back());
        A = y(order.front()) - C;
        T = span / 3.0;
        // first crossing of 1/e of the initial excursion
        for (int i : order)
            if (std::abs(y(i) - C) < std::abs(A) / M_E) {
                T = std::max(x(i) - x_lo, span / (4.0 * n));
                break;
            }
        if (x_lo > 0.0) A *= std::exp(x_lo / T);
    };

    RVec p;
    switch (m) {
        case FitModel::exponential_decay: {
            p.resize(3);
            decay_guess(p(0), p(1), p(2));
            break;
        }
        case FitModel::stretched_exp: {
            p.resize(4);
            decay_guess(p(0), p(1), p(3));
            p(2) = 1.0;
            break;
        }
        case FitModel::rb_decay: {
            // log-linear fit on the points clearly above the floor
            std::vector<int> use;
            for (int i = 0; i < n; ++i)
                if (y(i) - 0.5 > 1e-3) use.push_back(i);
            p.resize(2);
            if (use.size() >= 2) {
                RMat X(use.size(), 2);
                RVec ly(use.size()), lw(use.size());
                for (std::size_t k = 0; k < use.size(); ++k) {
                    const int i = use[k];
                    X(k, 0) = 1.0;
                    X(k, 1) = x(i);
                    ly(k) = std::log(y(i) - 0.5);
                    lw(k) = (y(i) - 0.5) * w(i);
                }
                const RVec c = linear_fit(X, ly, lw);
                p(0) = std::exp(c(0));
                p(1) = std::exp(std::min(c(1), 0.0));
            } else {
                p(0) = 0.5;
                p(1) = 0.99;
            }
            break;
        }
        case FitModel::parabola: {
            RMat X(n, 3);
            for (int i = 0; i < n; ++i) {
                X(i, 0) = 1.0;
                X(i, 1) = x(i);
                X(i, 2) = x(i) * x(i);
            }
            const RVec c = linear_fit(X, y, w);
            p.resize(3);
            if (c(2) != 0.0) {
                p(1) = c(2);
                p(2) = -c(1) / (2 * c(2));
                p(0) = c(0) - c(2) * p(2) * p(2);
            } else {
                p << y.mean(), 0.0, 0.5 * (x_lo + x_hi);
            }
            break;
        }
        case FitModel::three_gaussian_dip: {
            p.resize(10);
            const double base = y.maxCoeff();
            p(0) = base;
            std::vector<bool> masked(n, false);
            std::vector<std::array<double, 3>> dips;
            for (int k = 0; k < 3; ++k) {
                int best = -1;
                for (int i : order)
                    if (!masked[i] && (best < 0 || y(i) < y(best))) best = i;
                double depth = best >= 0 ? base - y(best) : 0.0;
                double center = best >= 0 ? x(best) : x_lo + span * (k + 1) / 4.0;
                // half-depth width, walking outwards in sorted order
                double halfwidth = span / 20.0;
                if (best >= 0 && depth > 0.0) {
                    const auto pos = std::find(order.begin(), order.end(), best) - order.begin();
                    long l = pos, r = pos;
                    while (l > 0 && base - y(order[l]) > depth / 2) --l;
                    while (r < n - 1 && base - y(order[r]) > depth / 2) ++r;
                    halfwidth = std::max(0.5 * (x(order[r]) - x(order[l])), span / (2.0 * n));
                }
                const double sigma = halfwidth / std::sqrt(2.0 * std::log(2.0));
                dips.push_back({std::max(depth, 1e-12), center, sigma});
                for (int i = 0; i < n; ++i)
                    if (std::abs(x(i) - center) < 3.0 * sigma) masked[i] = true;
            }
            std::sort(dips.begin(), dips.end(), [](const auto& a, const auto& b) { return a[1] < b[1]; });
            for (int k = 0; k < 3; ++k)
                for (int j = 0; j < 3; ++j) p(1 + 3 * k + j) = dips[k][j];
            break;
        }
    }
    return p;
}

}  // namespace

double fit_model_eval(FitModel m, const RVec& params, double x) {
    if (params.size() != long(fit_parameter_names(m).size()))
        throw ConfigError("wrong parameter count for " + fit_model_name(m));
    return model_grad(m, params, x, nullptr);
}

double FitResult::value(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return params(long(i));
    throw ConfigError("no fit parameter '" + name + "'");
}

double FitResult::error(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return stderr_(long(i));
    throw ConfigError("no fit parameter '" + name + "'");
}

FitResult fit_curve(const std::vector<double>& xs, const std::vector<double>& ys, const std::vector<double>& sigmas,
                    FitModel model, const std::vector<double>& initial) {
    const int n = int(xs.size());
    const std::vector<std::string> names = fit_parameter_names(model);
    const int k = int(names.size());
    if (int(ys.size()) != n || int(sigmas.size()) != n) throw ConfigError("fit inputs differ in length");
    if (n < k) throw ConfigError("fit of " + fit_model_name(model) + " needs at least " + std::to_string(k) + " points");
    for (int i = 0; i < n; ++i) {
        if (!std::isfinite(xs[i]) || !std::isfinite(ys[i])) throw ConfigError("fit data must be finite");
        if (!(sigmas[i] > 0.0) || !std::isfinite(sigmas[i])) throw ConfigError("fit uncertainties must be positive");
    }
    if (model == FitModel::stretched_exp && std::any_of(xs.begin(), xs.end(), [](double v) { return v < 0.0; }))
        throw ConfigError("stretched exponential needs x >= 0");
    if (!initial.empty() && int(initial.size()) != k) throw ConfigError("initial guess has the wrong length");

    const RVec x = Eigen::Map<const RVec>(xs.data(), n);
    const RVec y = Eigen::Map<const RVec>(ys.data(), n);
    const RVec s = Eigen::Map<const RVec>(sigmas.data(), n);
    const RVec x0 = initial.empty() ? initial_guess(model, x, y, s) : RVec(Eigen::Map<const RVec>(initial.data(), k));

    LsqProblem problem;
    problem.n_params = k;
    problem.n_residuals = n;
    problem.analytic_jacobian = true;
    problem.evaluate = [&](const RVec& p, RVec& r, RMat* J) {
        r.resize(n);
        if (J) J->resize(n, k);
        std::vector<double> g(k);
        for (int i = 0; i < n; ++i) {
            r(i) = (model_grad(model, p, x(i), J ? g.data() : nullptr) - y(i)) / s(i);
            if (J)
                for (int j = 0; j < k; ++j) (*J)(i, j) = g[j] / s(i);
        }
    };
    LsqOptions opt;
    opt.max_iterations = 500;
    const LsqResult lsq = levenberg_marquardt(problem, x0, opt);
    if (!lsq.x.allFinite() || !std::isfinite(lsq.cost))
        throw NumericalError("fit of " + fit_model_name(model) + " diverged");

    FitResult out;
    out.model = model;
    out.names = names;
    out.params = lsq.x;
    out.chi2 = lsq.cost;
    out.dof = n - k;
    out.chi2_reduced = out.dof > 0 ? out.chi2 / out.dof : 0.0;
    out.converged = lsq.converged;
    out.message = lsq.message;
    RVec r;
    RMat J;
    problem.evaluate(lsq.x, r, &J);
    out.covariance = pinv_symmetric(J.transpose() * J);
    if (out.dof > 0) out.covariance *= out.chi2_reduced;
    out.stderr_ = out.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
    return out;
}

// ---------------------------------------------------------------- json

nlohmann::json to_json(const FitResult& fit) {
    nlohmann::json params = nlohmann::json::object(), errors = nlohmann::json::object();
    for (std::size_t i = 0; i < fit.names.size(); ++i) {
        params[fit.names[i]] = fit.params(long(i));
        errors[fit.names[i]] = fit.stderr_(long(i));
    }
    return {{"model", fit_model_name(fit.model)}, {"params", params},          {"stderr", errors},
            {"chi2", fit.chi2},                   {"chi2_reduced", fit.chi2_reduced}, {"dof", fit.dof},
            {"converged", fit.converged}};
}

nlohmann::json to_json(const QuasiStaticEnsemble& e) {
    if (e.kind == QuasiStaticEnsemble::Kind::grid) {
        nlohmann::json members = nlohmann::json::array();
        for (const auto& m : e.grid)
            members.push_back({{"detuning_e", m.detuning_e}, {"detuning_n", m.detuning_n}, {"weight", m.weight}});
        return {{"kind", "grid"}, {"members", members}};
    }
    return {{"kind", "gaussian"},         {"sigma_e", e.sigma_e},         {"sigma_n", e.sigma_n},
            {"samples", e.sample_count},  {"monte_carlo", e.monte_carlo}, {"seed", e.seed}};
}

QuasiStaticEnsemble ensemble_from_json(const nlohmann::json& doc) {
    require_keys(doc, {"kind", "sigma_e", "sigma_n", "samples", "monte_carlo", "seed", "members"}, "ensemble");
    const std::string kind = doc.value("kind", std::string("gaussian"));
    QuasiStaticEnsemble e;
    if (kind == "grid") {
        if (!doc.contains("members") || !doc["members"].is_array()) throw ConfigError("grid ensemble needs 'members'");
        std::vector<EnsembleMember> members;
        for (const auto& m : doc["members"]) {
            require_keys(m, {"detuning_e", "detuning_n", "weight"}, "ensemble member");
            members.push_back({number(m, "detuning_e", 0.0), number(m, "detuning_n", 0.0), number(m, "weight", 1.0)});
        }
        e = QuasiStaticEnsemble::from_grid(std::move(members));
    } else if (kind == "gaussian") {
        e.sigma_e = number(doc, "sigma_e", 0.0);
        e.sigma_n = number(doc, "sigma_n", 0.0);
        if (doc.contains("samples")) {
            if (!doc["samples"].is_number_integer()) throw ConfigError("'samples' must be an integer");
            e.sample_count = doc["samples"].get<int>();
        }
        if (doc.contains("monte_carlo")) {
            if (!doc["monte_carlo"].is_boolean()) throw ConfigError("'monte_carlo' must be a boolean");
            e.monte_carlo = doc["monte_carlo"].get<bool>();
        }
        if (doc.contains("seed")) {
            if (!doc["seed"].is_number_unsigned() && !doc["seed"].is_number_integer())
                throw ConfigError("'seed' must be an integer");
            e.seed = doc["seed"].get<std::uint64_t>();
        }
    } else {
        throw ConfigError("unknown ensemble kind '" + kind + "'");
    }
    e.validate();
    return e;
}

nlohmann::json to_json(const SSROModel& m) { return {{"F0", m.F0}, {"F1", m.F1}}; }

SSROModel ssro_from_json(const nlohmann::json& doc) {
    require_keys(doc, {"F0", "F1"}, "readout");
    SSROModel m;
    m.F0 = number(doc, "F0", m.F0);
    m.F1 = number(doc, "F1", m.F1);
    m.validate();
    return m;
}

}  // namespace spinforge
