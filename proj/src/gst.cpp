#include "spinforge/gst.hpp"

#include "spinforge/errors.hpp"
#include "spinforge/gates.hpp"
#include "spinforge/numerics.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <map>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

namespace spinforge {

namespace {

std::string join(const GateList& ids) {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i) out += ':';
        out += ids[i];
    }
    return out;
}

GateList split_ids(const std::string& text) {
    GateList out;
    if (text.empty()) return out;
    std::string cur;
    for (char c : text) {
        if (c == ':') {
            if (cur.empty()) throw ConfigError("empty gate id in '" + text + "'");
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (cur.empty()) throw ConfigError("empty gate id in '" + text + "'");
    out.push_back(cur);
    return out;
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

CMat rotation(const CMat& pauli, double angle) {
    return std::cos(angle / 2) * CMat::Identity(2, 2) - Complex(0, std::sin(angle / 2)) * pauli;
}

// Deterministic per-circuit stream.
std::mt19937_64 circuit_rng(std::uint64_t seed, std::size_t index) {
    std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(index),
                      std::uint32_t(std::uint64_t(index) >> 32), 0x6a5du};
    return std::mt19937_64(seq);
}

std::vector<int> compile_ids(const GateSetEstimate& gs, const GateList& ids) {
    std::vector<int> out;
    out.reserve(ids.size());
    for (const auto& id : ids) out.push_back(gs.index(id));
    return out;
}

RVec run_sequence(const GateSetEstimate& gs, const std::vector<int>& seq) {
    RVec v = gs.rho, next(v.size());
    for (int g : seq) {
        next.noalias() = gs.gates[std::size_t(g)] * v;
        v.swap(next);
    }
    RVec p(gs.outcomes());
    for (int k = 0; k < gs.outcomes(); ++k) p(k) = gs.effects[std::size_t(k)].dot(v);
    return p;
}

RVec identity_vector(int n_qubits) {
    RVec v = RVec::Zero(1 << (2 * n_qubits));
    v(0) = std::sqrt(double(1 << n_qubits));
    return v;
}

}  // namespace

// ---------------------------------------------------------------- circuits

GateList Circuit::flatten() const {
    GateList out = prep;
    for (int p = 0; p < power; ++p) out.insert(out.end(), germ.begin(), germ.end());
    out.insert(out.end(), meas.begin(), meas.end());
    return out;
}

std::string Circuit::str() const {
    std::string g;
    if (power > 0 && !germ.empty()) {
        g = join(germ);
        if (power != 1) g += "^" + std::to_string(power);
    }
    return join(prep) + "|" + g + "|" + join(meas);
}

Circuit Circuit::parse(const std::string& raw) {
    const std::string text = trim(raw);
    const auto a = text.find('|');
    const auto b = a == std::string::npos ? a : text.find('|', a + 1);
    if (a == std::string::npos || b == std::string::npos || text.find('|', b + 1) != std::string::npos)
        throw ConfigError("circuit '" + text + "' must have the form prep|germ^p|meas");
    Circuit c;
    c.prep = split_ids(text.substr(0, a));
    std::string germ = text.substr(a + 1, b - a - 1);
    c.meas = split_ids(text.substr(b + 1));
    if (germ.empty()) {
        c.power = 0;
        return c;
    }
    c.power = 1;
    const auto caret = germ.rfind('^');
    if (caret != std::string::npos) {
        const std::string pw = germ.substr(caret + 1);
        if (pw.empty() || pw.find_first_not_of("0123456789") != std::string::npos)
            throw ConfigError("bad germ power in '" + text + "'");
        c.power = std::stoi(pw);
        germ = germ.substr(0, caret);
    }
    c.germ = split_ids(germ);
    if (c.power == 0) c.germ.clear();
    return c;
}

GstDesign default_design_1q() {
    GstDesign d;
    d.gate_ids = {"Gi", "Gx", "Gy"};
    d.prep = {{}, {"Gx"}, {"Gy"}, {"Gx", "Gx"}, {"Gx", "Gx", "Gx"}, {"Gy", "Gy", "Gy"}};
    d.meas = d.prep;
    d.germs = {{"Gi"},
               {"Gx"},
               {"Gy"},
               {"Gx", "Gy"},
               {"Gx", "Gy", "Gi"},
               {"Gx", "Gi", "Gy"},
               {"Gx", "Gi", "Gi"},
               {"Gy", "Gi", "Gi"},
               {"Gx", "Gx", "Gi", "Gy"},
               {"Gx", "Gy", "Gy", "Gi"},
               {"Gx", "Gx", "Gy", "Gx", "Gy", "Gy"}};
    return d;
}

GstDesign default_design_2q() {
    GstDesign d;
    d.gate_ids = {"Xe", "Ye", "Xn", "Yn", "CRx"};
    const std::vector<GateList> e = {{}, {"Xe"}, {"Ye"}, {"Xe", "Xe"}};
    const std::vector<GateList> n = {{}, {"Xn"}, {"Yn"}, {"Xn", "Xn"}};
    for (const auto& a : e)
        for (const auto& b : n) {
            GateList f = a;
            f.insert(f.end(), b.begin(), b.end());
            d.prep.push_back(f);
        }
    d.meas = d.prep;
    d.germs = {{"Xe"},       {"Ye"},       {"Xn"},       {"Yn"},        {"CRx"},
               {"Xe", "Ye"}, {"Xn", "Yn"}, {"Xe", "Xn"}, {"CRx", "Ye"}, {"CRx", "Yn"},
               {"Xe", "CRx", "Yn"}};
    return d;
}

std::vector<Circuit> design_experiment(const GateList& gate_ids, const std::vector<GateList>& prep,
                                       const std::vector<GateList>& meas, const std::vector<GateList>& germs,
                                       int max_depth) {
    if (prep.empty() || meas.empty() || germs.empty()) throw ConfigError("fiducial and germ lists must be non-empty");
    if (max_depth < 1 || (max_depth & (max_depth - 1)) != 0) throw ConfigError("max depth must be a power of two");
    const std::set<std::string> known(gate_ids.begin(), gate_ids.end());
    auto check = [&](const GateList& l) {
        for (const auto& id : l)
            if (!known.count(id)) throw ConfigError("gate id '" + id + "' is not in the gate set");
    };
    for (const auto& l : prep) check(l);
    for (const auto& l : meas) check(l);
    for (const auto& g : germs) {
        if (g.empty()) throw ConfigError("empty germ");
        check(g);
    }
    std::vector<Circuit> out;
    std::set<std::string> seen;
    for (int depth = 1; depth <= max_depth; depth *= 2)
        for (const auto& g : germs) {
            const int power = depth / int(g.size());
            if (power < 1) continue;
            for (const auto& p : prep)
                for (const auto& m : meas) {
                    Circuit c{p, g, power, m};
                    if (seen.insert(c.str()).second) out.push_back(std::move(c));
                }
        }
    return out;
}

std::vector<Circuit> design_experiment(const GstDesign& d, int max_depth) {
    return design_experiment(d.gate_ids, d.prep, d.meas, d.germs, max_depth);
}

std::vector<Circuit> lgst_circuits(const GateList& gate_ids, const std::vector<GateList>& prep,
                                   const std::vector<GateList>& meas) {
    if (prep.empty() || meas.empty()) throw ConfigError("fiducial lists must be non-empty");
    std::vector<Circuit> out;
    std::set<std::string> seen;
    auto add = [&](Circuit c) {
        if (seen.insert(c.str()).second) out.push_back(std::move(c));
    };
    for (const auto& p : prep)
        for (const auto& m : meas) add({p, {}, 0, m});
    for (const auto& g : gate_ids)
        for (const auto& p : prep)
            for (const auto& m : meas) add({p, {g}, 1, m});
    for (const auto& m : meas) add({{}, {}, 0, m});
    for (const auto& p : prep) add({p, {}, 0, {}});
    return out;
}

std::vector<Circuit> full_design(const GstDesign& d, int max_depth) {
    std::vector<Circuit> out = lgst_circuits(d.gate_ids, d.prep, d.meas);
    std::set<std::string> seen;
    for (const auto& c : out) seen.insert(c.str());
    for (auto& c : design_experiment(d, max_depth))
        if (seen.insert(c.str()).second) out.push_back(std::move(c));
    return out;
}

std::string circuits_to_text(const std::vector<Circuit>& circuits) {
    std::string out;
    for (const auto& c : circuits) out += c.str() + "\n";
    return out;
}

std::vector<Circuit> circuits_from_text(const std::string& text) {
    std::vector<Circuit> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        out.push_back(Circuit::parse(line));
    }
    return out;
}

// ---------------------------------------------------------------- gate sets

int GateSetEstimate::index(const std::string& label) const {
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == label) return int(i);
    throw ConfigError("gate id '" + label + "' is not in the gate set");
}

PTM GateSetEstimate::ptm(const std::string& label) const { return {n_qubits, gate(label)}; }

GateSetEstimate target_gate_set(const GateList& gate_ids) {
    if (gate_ids.empty()) throw ConfigError("empty gate set");
    const bool single = std::all_of(gate_ids.begin(), gate_ids.end(),
                                    [](const std::string& s) { return s == "Gi" || s == "Gx" || s == "Gy"; });
    GateSetEstimate gs;
    gs.n_qubits = single ? 1 : 2;
    const int d = 1 << gs.n_qubits;
    for (const auto& id : gate_ids) {
        if (std::count(gate_ids.begin(), gate_ids.end(), id) > 1) throw ConfigError("repeated gate id '" + id + "'");
        CMat u;
        if (single) {
            if (id == "Gi") u = CMat::Identity(2, 2);
            if (id == "Gx") u = rotation(pauli::x(), M_PI / 2);
            if (id == "Gy") u = rotation(pauli::y(), M_PI / 2);
        } else {
            const GateId g = gate_from_name(id);
            if (is_bare(g)) throw ConfigError("bare gates act on a level pair and cannot join a two-qubit gate set");
            u = ideal_unitary(g);
        }
        gs.labels.push_back(id);
        gs.gates.push_back(ptm_of_unitary(u).matrix);
    }
    for (int k = 0; k < d; ++k) {
        CMat proj = CMat::Zero(d, d);
        proj(k, k) = 1.0;
        if (k == 0) gs.rho = pauli_vector(proj);
        gs.effects.push_back(pauli_vector(proj));
    }
    gs.gauge = RMat::Identity(gs.dim2(), gs.dim2());
    return gs;
}

GateSetEstimate with_ssro(const GateSetEstimate& gs, const SSROModel& model) {
    model.validate();
    const int K = gs.outcomes();
    RMat M = RMat::Ones(1, 1);
    RMat single(2, 2);
    single << model.F0, 1.0 - model.F1, 1.0 - model.F0, model.F1;
    for (int q = 0; q < gs.n_qubits; ++q) M = kron(M, single);
    if (M.rows() != K) throw ConfigError("readout model does not match the outcome count");
    GateSetEstimate out = gs;
    for (int k = 0; k < K; ++k) {
        out.effects[std::size_t(k)].setZero();
        for (int j = 0; j < K; ++j) out.effects[std::size_t(k)] += M(k, j) * gs.effects[std::size_t(j)];
    }
    return out;
}

GateSetEstimate gauge_transform(const GateSetEstimate& gs, const RMat& T) {
    const Eigen::FullPivLU<RMat> lu(T);
    if (!lu.isInvertible()) throw NumericalError("gauge transform is singular");
    const RMat Ti = lu.inverse();
    GateSetEstimate out = gs;
    for (auto& g : out.gates) g = Ti * g * T;
    out.rho = Ti * gs.rho;
    for (auto& e : out.effects) e = (e.transpose() * T).transpose();
    out.gauge = (gs.gauge.size() ? gs.gauge : RMat::Identity(T.rows(), T.cols())) * T;
    return out;
}

RVec circuit_probabilities(const GateSetEstimate& gs, const Circuit& c) {
    return run_sequence(gs, compile_ids(gs, c.flatten()));
}

RVec sequence_probabilities(const GateSetEstimate& gs, const GateList& gates) {
    return run_sequence(gs, compile_ids(gs, gates));
}

std::vector<double> gate_fidelities(const GateSetEstimate& est, const GateSetEstimate& target) {
    std::vector<double> out;
    for (const auto& label : target.labels) out.push_back(avg_gate_fidelity(est.ptm(label), target.ptm(label)));
    return out;
}

double spam_distance(const GateSetEstimate& a, const GateSetEstimate& b) {
    double d = (a.rho - b.rho).cwiseAbs().maxCoeff();
    for (std::size_t k = 0; k < a.effects.size(); ++k)
        d = std::max(d, (a.effects[k] - b.effects[k]).cwiseAbs().maxCoeff());
    return d;
}

double gate_distance(const GateSetEstimate& a, const GateSetEstimate& b) {
    double d = 0.0;
    for (const auto& label : b.labels) d = std::max(d, (a.gate(label) - b.gate(label)).cwiseAbs().maxCoeff());
    return d;
}

// ---------------------------------------------------------------- datasets

std::map<std::string, std::size_t> Dataset::index_by_circuit() const {
    std::map<std::string, std::size_t> out;
    for (std::size_t i = 0; i < rows.size(); ++i) out.emplace(rows[i].circuit.str(), i);
    return out;
}

double Dataset::row_shots(const DatasetRow& row) const {
    if (exact()) return 1.0;
    double n = 0.0;
    for (double c : row.counts) n += c;
    return n;
}

std::vector<double> Dataset::frequencies(const DatasetRow& row) const {
    const double n = row_shots(row);
    std::vector<double> f = row.counts;
    if (n > 0.0)
        for (double& v : f) v /= n;
    return f;
}

Dataset simulate_dataset(const std::vector<Circuit>& circuits, const CircuitTruth& truth, long shots,
                         std::uint64_t seed, const std::optional<SSROModel>& ssro, unsigned threads) {
    if (shots < 0) throw ConfigError("shots must be positive (0 for exact probabilities)");
    Dataset d;
    d.shots = shots;
    d.ssro = ssro;
    d.rows.resize(circuits.size());
    std::vector<int> outcomes(circuits.size(), 0);
    std::vector<std::string> failure(circuits.size());
    parallel_for(circuits.size(), threads, [&](std::size_t i) {
        try {
            GateSetEstimate gs = truth(circuits[i], i);
            if (ssro) gs = with_ssro(gs, *ssro);
            RVec p = circuit_probabilities(gs, circuits[i]);
            const double tol = numerics().probability_tol;
            for (int k = 0; k < p.size(); ++k) {
                if (p(k) < -tol || p(k) > 1.0 + tol)
                    throw NumericalError("circuit " + circuits[i].str() + " has outcome probability " +
                                         std::to_string(p(k)) + ": truth is not CPTP");
                p(k) = std::clamp(p(k), 0.0, 1.0);
            }
            if (std::abs(p.sum() - 1.0) > 1e3 * tol)
                throw NumericalError("circuit " + circuits[i].str() + " probabilities do not sum to one");
            outcomes[i] = int(p.size());
            DatasetRow& row = d.rows[i];
            row.circuit = circuits[i];
            row.counts.assign(std::size_t(p.size()), 0.0);
            if (shots == 0) {
                for (int k = 0; k < p.size(); ++k) row.counts[std::size_t(k)] = p(k);
                return;
            }
            // multinomial by successive binomials
            std::mt19937_64 rng = circuit_rng(seed, i);
            long left = shots;
            double mass = 1.0;
            for (int k = 0; k + 1 < p.size() && left > 0; ++k) {
                const double q = mass > 0.0 ? std::clamp(p(k) / mass, 0.0, 1.0) : 0.0;
                std::binomial_distribution<long> draw(left, q);
                const long n = draw(rng);
                row.counts[std::size_t(k)] = double(n);
                left -= n;
                mass -= p(k);
            }
            row.counts.back() += double(left);
        } catch (const std::exception& e) {
            failure[i] = e.what();
        }
    });
    for (std::size_t i = 0; i < circuits.size(); ++i)
        if (!failure[i].empty()) throw NumericalError(failure[i]);
    if (!circuits.empty()) d.n_outcomes = outcomes.front();
    return d;
}

Dataset simulate_dataset(const std::vector<Circuit>& circuits, const GateSetEstimate& truth, long shots,
                         std::uint64_t seed, const std::optional<SSROModel>& ssro, unsigned threads) {
    return simulate_dataset(circuits, [&](const Circuit&, std::size_t) { return truth; }, shots, seed, ssro,
                            threads);
}

std::string dataset_to_csv(const Dataset& d) {
    std::ostringstream out;
    out.precision(17);
    out << (d.exact() ? "circuit,outcome,probability\n" : "circuit,outcome,count\n");
    for (const auto& row : d.rows)
        for (std::size_t k = 0; k < row.counts.size(); ++k) {
            out << row.circuit.str() << ',' << k << ',';
            if (d.exact())
                out << row.counts[k];
            else
                out << static_cast<long long>(std::llround(row.counts[k]));
            out << '\n';
        }
    return out.str();
}

Dataset dataset_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("empty dataset");
    line = trim(line);
    Dataset d;
    if (line == "circuit,outcome,count")
        d.shots = -1;
    else if (line == "circuit,outcome,probability")
        d.shots = 0;
    else
        throw ConfigError("dataset header must be 'circuit,outcome,count' or 'circuit,outcome,probability'");
    std::map<std::string, std::size_t> where;
    int max_outcome = -1;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty()) continue;
        const auto c2 = line.rfind(',');
        const auto c1 = c2 == std::string::npos ? c2 : line.rfind(',', c2 - 1);
        if (c1 == std::string::npos) throw ConfigError("dataset line " + std::to_string(lineno) + " is malformed");
        const std::string key = line.substr(0, c1);
        int outcome = 0;
        double value = 0.0;
        try {
            std::size_t used = 0;
            outcome = std::stoi(line.substr(c1 + 1, c2 - c1 - 1), &used);
            value = std::stod(line.substr(c2 + 1));
        } catch (const std::exception&) {
            throw ConfigError("dataset line " + std::to_string(lineno) + " has non-numeric fields");
        }
        if (outcome < 0 || outcome > 15 || !(value >= 0.0))
            throw ConfigError("dataset line " + std::to_string(lineno) + " is out of range");
        auto it = where.find(key);
        if (it == where.end()) {
            it = where.emplace(key, d.rows.size()).first;
            d.rows.push_back({Circuit::parse(key), {}});
        }
        auto& counts = d.rows[it->second].counts;
        if (int(counts.size()) <= outcome) counts.resize(std::size_t(outcome) + 1, 0.0);
        counts[std::size_t(outcome)] += value;
        max_outcome = std::max(max_outcome, outcome);
    }
    if (d.rows.empty()) throw ConfigError("dataset has no rows");
    d.n_outcomes = max_outcome + 1;
    if (d.n_outcomes != 2 && d.n_outcomes != 4) throw ConfigError("datasets need 2 or 4 outcomes");
    for (auto& row : d.rows) row.counts.resize(std::size_t(d.n_outcomes), 0.0);
    if (d.shots < 0) {
        double top = 0.0;
        for (const auto& row : d.rows) top = std::max(top, d.row_shots(row));
        d.shots = long(std::llround(top));
        if (d.shots < 1) throw ConfigError("dataset has no counts");
    }
    return d;
}

// ---------------------------------------------------------------- LGST

GateSetEstimate run_lgst(const Dataset& data, const std::vector<GateList>& prep, const std::vector<GateList>& meas,
                         const GateSetEstimate& target) {
    const int d2 = target.dim2();
    const int K = target.outcomes();
    if (data.n_outcomes != K) throw ConfigError("dataset outcome count does not match the target");
    const int rows = int(meas.size()) * K;
    const int cols = int(prep.size());
    if (rows < d2 || cols < d2) throw NumericalError("too few fiducials for linear inversion");
    const auto index = data.index_by_circuit();
    auto freq = [&](const Circuit& c) {
        const auto it = index.find(c.str());
        if (it == index.end()) throw ConfigError("dataset lacks circuit " + c.str() + " needed for linear inversion");
        return data.frequencies(data.rows[it->second]);
    };
    auto matrix_for = [&](const GateList& germ) {
        RMat P(rows, cols);
        for (int j = 0; j < cols; ++j)
            for (std::size_t i = 0; i < meas.size(); ++i) {
                const Circuit c{prep[std::size_t(j)], germ, germ.empty() ? 0 : 1, meas[i]};
                const auto f = freq(c);
                for (int k = 0; k < K; ++k) P(int(i) * K + k, j) = f[std::size_t(k)];
            }
        return P;
    };
    const RMat P0 = matrix_for({});
    Eigen::JacobiSVD<RMat> svd(P0, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const RVec& sv = svd.singularValues();
    if (sv(d2 - 1) < 1e-8 * sv(0))
        throw NumericalError("fiducials are not informationally complete (singular Gram matrix)");
    const RMat U = svd.matrixU().leftCols(d2);
    const RMat V = svd.matrixV().leftCols(d2);
    const RMat P0r = U.transpose() * P0 * V;
    const Eigen::FullPivLU<RMat> p0lu(P0r);

    // target fiducial states fix the gauge
    RMat Bt(d2, cols);
    for (int j = 0; j < cols; ++j) {
        RVec v = target.rho;
        for (const auto& id : prep[std::size_t(j)]) v = target.gate(id) * v;
        Bt.col(j) = v;
    }
    const RMat Btr = Bt * V;
    const Eigen::FullPivLU<RMat> btlu(Btr);
    if (!btlu.isInvertible()) throw NumericalError("target fiducial states are not informationally complete");
    const RMat Btr_inv = btlu.inverse();

    GateSetEstimate est = target;
    for (std::size_t g = 0; g < target.labels.size(); ++g) {
        const RMat PG = matrix_for({target.labels[g]});
        const RMat Gt = p0lu.solve(U.transpose() * PG * V);
        est.gates[g] = Btr * Gt * Btr_inv;
    }
    RVec prho(rows);
    for (std::size_t i = 0; i < meas.size(); ++i) {
        const auto f = freq({{}, {}, 0, meas[i]});
        for (int k = 0; k < K; ++k) prho(int(i) * K + k) = f[std::size_t(k)];
    }
    est.rho = Btr * p0lu.solve(U.transpose() * prho);
    RMat pE(K, cols);
    for (int j = 0; j < cols; ++j) {
        const auto f = freq({prep[std::size_t(j)], {}, 0, {}});
        for (int k = 0; k < K; ++k) pE(k, j) = f[std::size_t(k)];
    }
    const RMat E = pE * V * Btr_inv;
    for (int k = 0; k < K; ++k) est.effects[std::size_t(k)] = E.row(k).transpose();
    est.gauge = RMat::Identity(d2, d2);
    return est;
}

GateSetEstimate tp_fix(const GateSetEstimate& gs) {
    GateSetEstimate out = gs;
    const int d2 = gs.dim2();
    for (auto& g : out.gates) {
        g.row(0).setZero();
        g(0, 0) = 1.0;
    }
    out.rho(0) = 1.0 / std::sqrt(double(1 << gs.n_qubits));
    RVec last = identity_vector(gs.n_qubits);
    for (int k = 0; k + 1 < gs.outcomes(); ++k) last -= out.effects[std::size_t(k)];
    out.effects.back() = last;
    (void)d2;
    return out;
}

// ---------------------------------------------------------------- parameters

int gauge_dimension(const GateSetEstimate& gs) {
    const int d2 = gs.dim2();
    return d2 * d2 - d2;
}

RVec pack_parameters(const GateSetEstimate& gs) {
    const int d2 = gs.dim2();
    const int G = int(gs.gates.size());
    const int K = gs.outcomes();
    RVec x(G * (d2 - 1) * d2 + (d2 - 1) + (K - 1) * d2);
    int o = 0;
    for (const auto& g : gs.gates)
        for (int a = 1; a < d2; ++a)
            for (int b = 0; b < d2; ++b) x(o++) = g(a, b);
    for (int a = 1; a < d2; ++a) x(o++) = gs.rho(a);
    for (int k = 0; k + 1 < K; ++k)
        for (int b = 0; b < d2; ++b) x(o++) = gs.effects[std::size_t(k)](b);
    return x;
}

GateSetEstimate unpack_parameters(const RVec& x, const GateSetEstimate& shape) {
    const int d2 = shape.dim2();
    const int K = shape.outcomes();
    GateSetEstimate gs = shape;
    if (x.size() != pack_parameters(shape).size()) throw ConfigError("parameter vector has the wrong length");
    int o = 0;
    for (auto& g : gs.gates) {
        g.row(0).setZero();
        g(0, 0) = 1.0;
        for (int a = 1; a < d2; ++a)
            for (int b = 0; b < d2; ++b) g(a, b) = x(o++);
    }
    gs.rho(0) = 1.0 / std::sqrt(double(1 << shape.n_qubits));
    for (int a = 1; a < d2; ++a) gs.rho(a) = x(o++);
    RVec last = identity_vector(shape.n_qubits);
    for (int k = 0; k + 1 < K; ++k) {
        for (int b = 0; b < d2; ++b) gs.effects[std::size_t(k)](b) = x(o++);
        last -= gs.effects[std::size_t(k)];
    }
    gs.effects.back() = last;
    return gs;
}

// ---------------------------------------------------------------- gauge

GateSetEstimate gauge_optimize(const GateSetEstimate& est, const GateSetEstimate& target) {
    const int d2 = est.dim2();
    const int n = (d2 - 1) * d2;
    auto make_T = [&](const RVec& x) {
        RMat T = RMat::Identity(d2, d2);
        for (int a = 1, o = 0; a < d2; ++a)
            for (int b = 0; b < d2; ++b) T(a, b) += x(o++);
        return T;
    };
    const int n_res = int(est.gates.size()) * d2 * d2 + d2 + est.outcomes() * d2;
    LsqProblem problem;
    problem.n_params = n;
    problem.n_residuals = n_res;
    problem.evaluate = [&](const RVec& x, RVec& r, RMat*) {
        const RMat T = make_T(x);
        const Eigen::PartialPivLU<RMat> lu(T);
        const RMat Ti = lu.inverse();
        r.resize(n_res);
        int o = 0;
        for (std::size_t g = 0; g < est.gates.size(); ++g) {
            const RMat diff = Ti * est.gates[g] * T - target.gate(est.labels[g]);
            for (int i = 0; i < diff.size(); ++i) r(o++) = diff.data()[i];
        }
        const RVec dr = Ti * est.rho - target.rho;
        for (int i = 0; i < d2; ++i) r(o++) = dr(i);
        for (int k = 0; k < est.outcomes(); ++k) {
            const RVec de = (est.effects[std::size_t(k)].transpose() * T).transpose() - target.effects[std::size_t(k)];
            for (int i = 0; i < d2; ++i) r(o++) = de(i);
        }
        if (!r.allFinite()) r.setConstant(1e10);
    };
    LsqOptions opt;
    opt.max_iterations = 100;
    opt.ftol = 1e-15;
    const LsqResult res = levenberg_marquardt(problem, RVec::Zero(n), opt);
    return gauge_transform(est, make_T(res.x));
}

// ---------------------------------------------------------------- likelihood

namespace {

constexpr double kProbFloor = 1e-6;

// Poisson deviance of one cell and its derivative in p; total shots N, observed n.
void cell_deviance(double N, double n, double p, double& dev, double& ddev) {
    if (n <= 0.0) {
        if (p >= kProbFloor) {
            dev = 2 * N * p;
            ddev = 2 * N;
        } else {
            const double s = p - kProbFloor;
            dev = 2 * N * kProbFloor + 2 * N * s + N / kProbFloor * s * s;
            ddev = 2 * N + 2 * N / kProbFloor * s;
        }
        return;
    }
    const double q = std::max(p, kProbFloor);
    const double d0 = 2 * (n * std::log(n / (N * q)) - n + N * q);
    const double d1 = 2 * (N - n / q);
    if (p >= kProbFloor) {
        dev = d0;
        ddev = d1;
    } else {
        const double s = p - kProbFloor;
        const double d2 = 2 * n / (kProbFloor * kProbFloor);
        dev = d0 + d1 * s + 0.5 * d2 * s * s;
        ddev = d1 + d2 * s;
    }
}

struct CompiledRow {
    std::vector<int> seq;
    std::vector<int> gates_used;  // sorted unique
    RVec f;                        // observed frequencies
    double N = 1.0;
};

class Objective {
public:
    Objective(const Dataset& data, const GateSetEstimate& shape, unsigned threads)
        : data_(data), shape_(shape), threads_(threads) {
        d2_ = shape.dim2();
        K_ = shape.outcomes();
        G_ = int(shape.gates.size());
        n_params_ = int(pack_parameters(shape).size());
        rows_.reserve(data.rows.size());
        for (const auto& row : data.rows) {
            CompiledRow cr;
            cr.seq = compile_ids(shape, row.circuit.flatten());
            cr.gates_used = cr.seq;
            std::sort(cr.gates_used.begin(), cr.gates_used.end());
            cr.gates_used.erase(std::unique(cr.gates_used.begin(), cr.gates_used.end()), cr.gates_used.end());
            const auto f = data.frequencies(row);
            if (int(f.size()) != K_) throw ConfigError("dataset row has the wrong outcome count");
            cr.f = Eigen::Map<const RVec>(f.data(), K_);
            cr.N = data.exact() ? 1.0 : data.row_shots(row);
            rows_.push_back(std::move(cr));
        }
        build_batches();
    }

    int n_params() const { return n_params_; }
    double statistic_spread() const {
        return data_.exact() ? 0.0 : std::sqrt(2.0 * double(rows_.size()) * double(K_ - 1));
    }

    // Residual r_k of one circuit and dr_k/dp_k.
    void residuals(const CompiledRow& row, const RVec& p, RVec& r, RVec& drdp) const {
        r.resize(K_);
        drdp.resize(K_);
        for (int k = 0; k < K_; ++k) {
            if (data_.exact()) {
                r(k) = p(k) - row.f(k);
                drdp(k) = 1.0;
                continue;
            }
            const double n = row.f(k) * row.N;
            double dev = 0.0, ddev = 0.0;
            cell_deviance(row.N, n, p(k), dev, ddev);
            const double s = row.N * p(k) >= n ? 1.0 : -1.0;
            r(k) = s * std::sqrt(std::max(dev, 0.0));
            if (std::abs(r(k)) > 1e-7)
                drdp(k) = ddev / (2 * r(k));
            else
                drdp(k) = std::sqrt(row.N / std::max(p(k), kProbFloor));
        }
    }

    double cost(const GateSetEstimate& gs) const {
        std::vector<double> parts(rows_.size());
        parallel_for(rows_.size(), threads_, [&](std::size_t i) {
            RVec r, dr;
            residuals(rows_[i], run_sequence(gs, rows_[i].seq), r, dr);
            parts[i] = r.squaredNorm();
        });
        double total = 0.0;
        for (double v : parts) total += v;
        return total;
    }

    // Gauss-Newton pieces JtJ and Jt r. Rows touching the same gates share
    // local columns and are stacked into batches, so each batch costs one
    // rank update and one scatter. Batches go to fixed chunks in order, which
    // keeps the sums independent of the thread count.
    double normal_equations(const GateSetEstimate& gs, RMat& H, RVec& g) const {
        const std::size_t chunk_count = std::max<std::size_t>(
            1, std::min<std::size_t>({16, batches_.size(), std::size_t(2e8 / (8.0 * n_params_ * n_params_ + 1))}));
        std::vector<RMat> Hs(chunk_count);
        std::vector<RVec> gs_(chunk_count);
        std::vector<double> costs(chunk_count, 0.0);
        const std::size_t per = (batches_.size() + chunk_count - 1) / chunk_count;
        parallel_for(chunk_count, threads_, [&](std::size_t c) {
            Hs[c] = RMat::Zero(n_params_, n_params_);
            gs_[c] = RVec::Zero(n_params_);
            const std::size_t lo = c * per, hi = std::min(batches_.size(), lo + per);
            for (std::size_t b = lo; b < hi; ++b) accumulate(gs, batches_[b], Hs[c], gs_[c], costs[c]);
        });
        H = RMat::Zero(n_params_, n_params_);
        g = RVec::Zero(n_params_);
        double total = 0.0;
        for (std::size_t c = 0; c < chunk_count; ++c) {
            H += Hs[c];
            g += gs_[c];
            total += costs[c];
        }
        H = H.selfadjointView<Eigen::Lower>();
        return total;
    }

private:
    struct ColumnLayout {
        std::vector<int> cols;           // global parameter index per local column, ascending
        std::vector<int> local_of_gate;  // first local column of each gate block, -1 if unused
        int rho_local = 0;
        int eff_local = 0;
    };

    struct Batch {
        std::size_t layout = 0;
        std::vector<std::size_t> rows;
    };

    void build_batches() {
        constexpr std::size_t kBatchRows = 64;
        const int gate_block = (d2_ - 1) * d2_;
        std::map<std::vector<int>, std::size_t> layout_of;
        std::vector<std::vector<std::size_t>> members;
        for (std::size_t i = 0; i < rows_.size(); ++i) {
            const auto [it, fresh] = layout_of.try_emplace(rows_[i].gates_used, layouts_.size());
            if (fresh) {
                ColumnLayout l;
                l.local_of_gate.assign(std::size_t(G_), -1);
                for (int gi : rows_[i].gates_used) {
                    l.local_of_gate[std::size_t(gi)] = int(l.cols.size());
                    for (int j = 0; j < gate_block; ++j) l.cols.push_back(gi * gate_block + j);
                }
                const int rho_global = G_ * gate_block;
                l.rho_local = int(l.cols.size());
                for (int j = 0; j < d2_ - 1; ++j) l.cols.push_back(rho_global + j);
                l.eff_local = int(l.cols.size());
                for (int j = 0; j < (K_ - 1) * d2_; ++j) l.cols.push_back(rho_global + d2_ - 1 + j);
                layouts_.push_back(std::move(l));
                members.emplace_back();
            }
            members[it->second].push_back(i);
        }
        for (std::size_t l = 0; l < members.size(); ++l)
            for (std::size_t lo = 0; lo < members[l].size(); lo += kBatchRows) {
                Batch b;
                b.layout = l;
                b.rows.assign(members[l].begin() + long(lo),
                              members[l].begin() + long(std::min(members[l].size(), lo + kBatchRows)));
                batches_.push_back(std::move(b));
            }
    }

    // Writes the K weighted Jacobian rows of one circuit, transposed, into Jt (m x K).
    void row_jacobian(const GateSetEstimate& gs, const CompiledRow& row, const ColumnLayout& l,
                      Eigen::Ref<RMat> Jt, Eigen::Ref<RVec> r_out, double& cost) const {
        const int L = int(row.seq.size());
        RMat V(d2_, L + 1);
        V.col(0) = gs.rho;
        for (int t = 0; t < L; ++t) V.col(t + 1).noalias() = gs.gates[std::size_t(row.seq[std::size_t(t)])] * V.col(t);
        RVec p(K_);
        for (int k = 0; k < K_; ++k) p(k) = gs.effects[std::size_t(k)].dot(V.col(L));
        RVec r, drdp;
        residuals(row, p, r, drdp);
        cost += r.squaredNorm();
        r_out = r;

        Jt.setZero();
        RVec w(d2_), wn(d2_);
        for (int k = 0; k < K_; ++k) {
            w = gs.effects[std::size_t(k)];
            double* col = Jt.col(k).data();
            for (int t = L; t >= 1; --t) {
                const int gi = row.seq[std::size_t(t) - 1];
                const double* before = V.col(t - 1).data();
                double* block = col + l.local_of_gate[std::size_t(gi)];
                for (int a = 1; a < d2_; ++a) {
                    const double wa = w(a);
                    double* dst = block + (a - 1) * d2_;
                    for (int b = 0; b < d2_; ++b) dst[b] += wa * before[b];
                }
                wn.noalias() = gs.gates[std::size_t(gi)].transpose() * w;
                w.swap(wn);
            }
            for (int a = 1; a < d2_; ++a) col[l.rho_local + a - 1] = w(a);
            if (k + 1 < K_) {
                for (int b = 0; b < d2_; ++b) col[l.eff_local + k * d2_ + b] = V(b, L);
            } else {
                for (int j = 0; j + 1 < K_; ++j)
                    for (int b = 0; b < d2_; ++b) col[l.eff_local + j * d2_ + b] = -V(b, L);
            }
            Jt.col(k) *= drdp(k);
        }
    }

    void accumulate(const GateSetEstimate& gs, const Batch& batch, RMat& H, RVec& grad, double& cost) const {
        const ColumnLayout& l = layouts_[batch.layout];
        const int m = int(l.cols.size());
        const int width = K_ * int(batch.rows.size());
        RMat J(m, width);
        RVec r(width);
        for (std::size_t i = 0; i < batch.rows.size(); ++i)
            row_jacobian(gs, rows_[batch.rows[i]], l, J.middleCols(long(i) * K_, K_), r.segment(long(i) * K_, K_), cost);
        RMat h = RMat::Zero(m, m);
        h.selfadjointView<Eigen::Lower>().rankUpdate(J);
        const RVec gl = J * r;
        // local columns are ascending, so the local lower triangle lands in the global one
        for (int b = 0; b < m; ++b) {
            const int cb = l.cols[std::size_t(b)];
            grad(cb) += gl(b);
            double* Hcol = H.col(cb).data();
            const double* hcol = h.col(b).data();
            for (int a = b; a < m; ++a) Hcol[l.cols[std::size_t(a)]] += hcol[a];
        }
    }

    const Dataset& data_;
    const GateSetEstimate& shape_;
    unsigned threads_;
    int d2_ = 0, K_ = 0, G_ = 0, n_params_ = 0;
    std::vector<CompiledRow> rows_;
    std::vector<ColumnLayout> layouts_;
    std::vector<Batch> batches_;
};

}  // namespace

double deviance(const Dataset& data, const GateSetEstimate& gs) { return Objective(data, gs, 0).cost(gs); }

namespace {

struct StageResult {
    int iterations = 0;
    bool converged = false;
    std::string message = "iteration limit reached";
    double cost = 0.0;
    RMat H;
};

StageResult lm_stage(const Objective& obj, const GateSetEstimate& shape, RVec& x, int max_iterations, double tol,
                     double stat_tol) {
    StageResult out;
    const double gain_floor = stat_tol * obj.statistic_spread();
    RVec g;
    out.cost = obj.normal_equations(unpack_parameters(x, shape), out.H, g);
    if (!std::isfinite(out.cost)) throw NumericalError("starting gate set gives a non-finite likelihood");
    double lambda = 1e-3;
    for (; out.iterations < max_iterations; ++out.iterations) {
        if (out.cost < 1e-26) {
            out.converged = true;
            out.message = "exact fit";
            break;
        }
        const RVec diag = out.H.diagonal().cwiseMax(1e-12 * std::max(out.H.diagonal().maxCoeff(), 1e-300));
        bool accepted = false;
        bool done = false;
        while (lambda < 1e14) {
            RMat A = out.H;
            A.diagonal() += lambda * diag;
            const RVec step = -Eigen::LDLT<RMat>(A).solve(g);
            if (!step.allFinite()) {
                lambda *= 10;
                continue;
            }
            const RVec xn = x + step;
            const GateSetEstimate trial = unpack_parameters(xn, shape);
            const double cn = obj.cost(trial);
            if (std::isfinite(cn) && cn < out.cost) {
                const double gain = out.cost - cn;
                const double rel = gain / std::max(out.cost, 1e-300);
                x = xn;
                out.cost = obj.normal_equations(trial, out.H, g);
                lambda = std::max(lambda / 3, 1e-12);
                accepted = true;
                done = rel < tol || gain < gain_floor || step.cwiseAbs().maxCoeff() < 1e-13;
                break;
            }
            lambda *= 4;
        }
        if (!accepted) {
            out.converged = true;
            out.message = "no further decrease";
            break;
        }
        if (done) {
            ++out.iterations;
            out.converged = true;
            out.message = "objective converged";
            break;
        }
    }
    return out;
}

long circuit_depth(const Circuit& c) { return long(c.germ.size()) * c.power; }

}  // namespace

GstFit run_long_sequence_fit(const Dataset& data, const GateSetEstimate& initial, const GstFitOptions& options,
                             const GateSetEstimate* target) {
    if (data.rows.empty()) throw ConfigError("empty dataset");
    if (data.n_outcomes != initial.outcomes()) throw ConfigError("dataset outcome count does not match the gate set");
    const GateSetEstimate shape = tp_fix(initial);
    RVec x = pack_parameters(shape);
    GstFit fit;
    int it = 0;

    // germ depths 1, 2, 4, ... each seeded by the previous stage
    if (options.staged) {
        long deepest = 0;
        for (const auto& row : data.rows) deepest = std::max(deepest, circuit_depth(row.circuit));
        std::size_t previous = 0;
        for (long depth = 1; depth < deepest; depth *= 2) {
            Dataset subset = data;
            subset.rows.clear();
            for (const auto& row : data.rows)
                if (circuit_depth(row.circuit) <= depth) subset.rows.push_back(row);
            if (subset.rows.size() == previous || subset.rows.empty()) continue;
            previous = subset.rows.size();
            const Objective stage(subset, shape, options.threads);
            it += lm_stage(stage, shape, x, options.max_iterations, options.tolerance,
                                   options.statistical_tolerance).iterations;
        }
    }
    const Objective obj(data, shape, options.threads);
    const int P = obj.n_params();
    StageResult last = lm_stage(obj, shape, x, options.max_iterations, options.tolerance,
                                   options.statistical_tolerance);
    it += last.iterations;
    fit.converged = last.converged;
    fit.message = last.message;
    const double cost = last.cost;
    const RMat& H = last.H;
    fit.iterations = it;
    fit.raw = unpack_parameters(x, shape);
    fit.covariance = pinv_symmetric(H);
    fit.n_params = P;
    fit.n_gauge = gauge_dimension(shape);
    fit.two_delta_logl_unconstrained = cost;

    GateSetEstimate est = fit.raw;
    if (options.gauge_optimize && target) est = gauge_optimize(est, *target);
    if (options.cptp)
        for (auto& G : est.gates) G = cptp_project(PTM{est.n_qubits, G}).matrix;
    fit.estimate = est;
    fit.two_delta_logl = options.cptp ? obj.cost(est) : cost;

    const long dof = long(data.rows.size()) * (data.n_outcomes - 1);
    fit.k = dof - (fit.n_params - fit.n_gauge);
    if (!data.exact() && fit.k > 0) fit.n_sigma = (fit.two_delta_logl - double(fit.k)) / std::sqrt(2.0 * double(fit.k));
    if (!x.allFinite()) throw NumericalError("long-sequence fit diverged");
    return fit;
}

double propagated_stderr(const GstFit& fit, const std::function<double(const GateSetEstimate&)>& quantity,
                         double step) {
    const RVec x0 = pack_parameters(fit.raw);
    RVec grad(x0.size());
    for (int i = 0; i < x0.size(); ++i) {
        const double h = step * std::max(1.0, std::abs(x0(i)));
        RVec a = x0, b = x0;
        a(i) += h;
        b(i) -= h;
        grad(i) = (quantity(unpack_parameters(a, fit.raw)) - quantity(unpack_parameters(b, fit.raw))) / (2 * h);
    }
    const double var = grad.dot(fit.covariance * grad);
    return std::sqrt(std::max(var, 0.0));
}

// ---------------------------------------------------------------- json

namespace {

nlohmann::json matrix_json(const RMat& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (int i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(row);
    }
    return rows;
}

nlohmann::json vector_json(const RVec& v) {
    nlohmann::json out = nlohmann::json::array();
    for (int i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

RVec vector_from(const nlohmann::json& doc, int n, const std::string& what) {
    if (!doc.is_array() || int(doc.size()) != n) throw ConfigError(what + " must be an array of " + std::to_string(n));
    RVec v(n);
    for (int i = 0; i < n; ++i) {
        if (!doc[std::size_t(i)].is_number()) throw ConfigError(what + " must hold numbers");
        v(i) = doc[std::size_t(i)].get<double>();
    }
    return v;
}

RMat matrix_from(const nlohmann::json& doc, int n, const std::string& what) {
    if (!doc.is_array() || int(doc.size()) != n) throw ConfigError(what + " must be " + std::to_string(n) + " rows");
    RMat m(n, n);
    for (int i = 0; i < n; ++i) m.row(i) = vector_from(doc[std::size_t(i)], n, what).transpose();
    return m;
}

std::vector<GateList> lists_from(const nlohmann::json& doc, const std::string& what) {
    if (!doc.is_array()) throw ConfigError(what + " must be an array of strings");
    std::vector<GateList> out;
    for (const auto& item : doc) {
        if (!item.is_string()) throw ConfigError(what + " must be an array of strings");
        out.push_back(split_ids(item.get<std::string>()));
    }
    return out;
}

nlohmann::json lists_json(const std::vector<GateList>& lists) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& l : lists) out.push_back(join(l));
    return out;
}

}  // namespace

nlohmann::json to_json(const GateSetEstimate& gs) {
    nlohmann::json gates = nlohmann::json::object();
    for (std::size_t i = 0; i < gs.labels.size(); ++i) gates[gs.labels[i]] = matrix_json(gs.gates[i]);
    nlohmann::json effects = nlohmann::json::array();
    for (const auto& e : gs.effects) effects.push_back(vector_json(e));
    nlohmann::json order = gs.labels;
    return {{"n_qubits", gs.n_qubits}, {"labels", order}, {"gates", gates}, {"rho", vector_json(gs.rho)},
            {"effects", effects}};
}

GateSetEstimate gate_set_from_json(const nlohmann::json& doc) {
    if (!doc.is_object()) throw ConfigError("gate set must be a JSON object");
    for (auto it = doc.begin(); it != doc.end(); ++it)
        if (it.key() != "n_qubits" && it.key() != "labels" && it.key() != "gates" && it.key() != "rho" &&
            it.key() != "effects" && it.key() != "gauge")
            throw ConfigError("unknown gate-set key '" + it.key() + "'");
    if (!doc.contains("n_qubits") || !doc["n_qubits"].is_number_integer()) throw ConfigError("gate set needs n_qubits");
    GateSetEstimate gs;
    gs.n_qubits = doc["n_qubits"].get<int>();
    if (gs.n_qubits != 1 && gs.n_qubits != 2) throw ConfigError("gate sets have one or two qubits");
    const int d2 = gs.dim2();
    if (!doc.contains("labels") || !doc["labels"].is_array()) throw ConfigError("gate set needs labels");
    for (const auto& l : doc["labels"]) {
        if (!l.is_string()) throw ConfigError("gate labels must be strings");
        gs.labels.push_back(l.get<std::string>());
    }
    if (!doc.contains("gates") || !doc["gates"].is_object()) throw ConfigError("gate set needs gates");
    for (const auto& l : gs.labels) {
        if (!doc["gates"].contains(l)) throw ConfigError("gate set lacks gate '" + l + "'");
        gs.gates.push_back(matrix_from(doc["gates"][l], d2, "gate " + l));
    }
    if (!doc.contains("rho")) throw ConfigError("gate set needs rho");
    gs.rho = vector_from(doc["rho"], d2, "rho");
    if (!doc.contains("effects") || !doc["effects"].is_array() || int(doc["effects"].size()) != (1 << gs.n_qubits))
        throw ConfigError("gate set needs one effect per outcome");
    for (const auto& e : doc["effects"]) gs.effects.push_back(vector_from(e, d2, "effect"));
    gs.gauge = RMat::Identity(d2, d2);
    return gs;
}

nlohmann::json to_json(const GstFit& fit) {
    return {{"two_delta_logl", fit.two_delta_logl},
            {"two_delta_logl_unconstrained", fit.two_delta_logl_unconstrained},
            {"k", fit.k},
            {"n_params", fit.n_params},
            {"n_gauge", fit.n_gauge},
            {"n_sigma", fit.n_sigma},
            {"converged", fit.converged},
            {"iterations", fit.iterations},
            {"message", fit.message},
            {"estimate", to_json(fit.estimate)}};
}

nlohmann::json to_json(const GstDesign& d) {
    return {{"gates", d.gate_ids}, {"prep", lists_json(d.prep)}, {"meas", lists_json(d.meas)},
            {"germs", lists_json(d.germs)}};
}

GstDesign design_from_json(const nlohmann::json& doc, GstDesign base) {
    if (!doc.is_object()) throw ConfigError("design must be a JSON object");
    for (auto it = doc.begin(); it != doc.end(); ++it) {
        const std::string& k = it.key();
        if (k == "gates") {
            if (!it.value().is_array()) throw ConfigError("design gates must be an array of ids");
            base.gate_ids.clear();
            for (const auto& g : it.value()) {
                if (!g.is_string()) throw ConfigError("design gates must be an array of ids");
                base.gate_ids.push_back(g.get<std::string>());
            }
        } else if (k == "prep") {
            base.prep = lists_from(it.value(), "prep fiducials");
        } else if (k == "meas") {
            base.meas = lists_from(it.value(), "meas fiducials");
        } else if (k == "germs") {
            base.germs = lists_from(it.value(), "germs");
        } else {
            throw ConfigError("unknown design key '" + k + "'");
        }
    }
    return base;
}

}  // namespace spinforge
