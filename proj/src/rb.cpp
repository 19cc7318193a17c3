#include "spinforge/rb.hpp"

#include "spinforge/errors.hpp"
#include "spinforge/gates.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <random>
#include <sstream>

namespace spinforge {

namespace {

CMat rot(const CMat& pauli, double angle) {
    return std::cos(angle / 2) * CMat::Identity(2, 2) - Complex(0, std::sin(angle / 2)) * pauli;
}

const CMat& native_unitary(const std::string& id) {
    static const CMat I = CMat::Identity(2, 2);
    static const CMat X = rot(pauli::x(), M_PI / 2);
    static const CMat Y = rot(pauli::y(), M_PI / 2);
    if (id == "Gi") return I;
    if (id == "Gx") return X;
    if (id == "Gy") return Y;
    throw ConfigError("unknown native gate '" + id + "'");
}

bool equal_up_to_phase(const CMat& a, const CMat& b) {
    return std::abs(std::abs((a.adjoint() * b).trace()) - double(a.rows())) < 1e-9;
}

struct Tables {
    std::vector<CliffordElement> elements;
    std::vector<std::vector<int>> product;  // product[later][earlier]
    std::vector<int> inverse;
};

int find_index(const std::vector<CliffordElement>& els, const CMat& u) {
    for (const auto& e : els)
        if (equal_up_to_phase(e.unitary, u)) return e.index;
    return -1;
}

const Tables& tables() {
    static const Tables t = [] {
        Tables out;
        out.elements.push_back({0, CMat::Identity(2, 2), {"Gi"}});
        std::deque<std::pair<CMat, GateList>> queue;
        queue.push_back({CMat::Identity(2, 2), {}});
        while (!queue.empty() && out.elements.size() < 24) {
            auto [u, word] = queue.front();
            queue.pop_front();
            for (const char* id : {"Gx", "Gy"}) {
                const CMat next = native_unitary(id) * u;
                GateList w = word;
                w.push_back(id);
                if (find_index(out.elements, next) >= 0) continue;
                out.elements.push_back({int(out.elements.size()), next, w});
                queue.push_back({next, w});
            }
        }
        if (out.elements.size() != 24) throw NumericalError("Clifford search did not close");
        out.product.assign(24, std::vector<int>(24, -1));
        out.inverse.assign(24, -1);
        for (int a = 0; a < 24; ++a)
            for (int b = 0; b < 24; ++b) {
                const int c = find_index(out.elements, out.elements[std::size_t(a)].unitary * out.elements[std::size_t(b)].unitary);
                if (c < 0) throw NumericalError("Clifford table is not closed");
                out.product[std::size_t(a)][std::size_t(b)] = c;
                if (c == 0) out.inverse[std::size_t(b)] = a;
            }
        return out;
    }();
    return t;
}

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(a), std::uint32_t(a >> 32),
                      std::uint32_t(b), 0x52u};
    return std::mt19937_64(seq);
}

const PTM& channel_for(const ChannelMap& m, const std::string& id) {
    const auto it = m.find(id);
    if (it == m.end()) throw ConfigError("no channel supplied for gate '" + id + "'");
    return it->second;
}

}  // namespace

// ---------------------------------------------------------------- Clifford group

const std::vector<CliffordElement>& clifford_table() { return tables().elements; }

int clifford_compose(int later, int earlier) {
    if (later < 0 || later >= 24 || earlier < 0 || earlier >= 24) throw ConfigError("Clifford index out of range");
    return tables().product[std::size_t(later)][std::size_t(earlier)];
}

int clifford_inverse(int index) {
    if (index < 0 || index >= 24) throw ConfigError("Clifford index out of range");
    return tables().inverse[std::size_t(index)];
}

int clifford_index(const CMat& u) {
    const int i = find_index(tables().elements, u);
    if (i < 0) throw ConfigError("unitary is not a single-qubit Clifford");
    return i;
}

double mean_native_length() {
    double total = 0.0;
    for (const auto& e : clifford_table()) total += double(e.native.size());
    return total / 24.0;
}

std::map<std::string, double> native_occurrence() {
    std::map<std::string, double> out{{"Gi", 0.0}, {"Gx", 0.0}, {"Gy", 0.0}};
    double total = 0.0;
    for (const auto& e : clifford_table())
        for (const auto& g : e.native) {
            out[g] += 1.0;
            total += 1.0;
        }
    for (auto& [k, v] : out) v /= total;
    return out;
}

std::vector<RBSequence> generate_rb(const std::vector<int>& depths, int k_per_depth, std::uint64_t seed) {
    if (depths.empty()) throw ConfigError("RB needs at least one depth");
    if (k_per_depth < 1) throw ConfigError("RB needs at least one sequence per depth");
    const int x_pi = clifford_index(rot(pauli::x(), M_PI));
    std::vector<RBSequence> out;
    for (std::size_t di = 0; di < depths.size(); ++di) {
        if (depths[di] < 1) throw ConfigError("RB depths must be at least 1");
        for (int j = 0; j < k_per_depth; ++j) {
            std::mt19937_64 rng = stream(seed, di, std::uint64_t(j));
            std::uniform_int_distribution<int> pick(0, 23);
            RBSequence s;
            s.clifford_depth = depths[di];
            s.flipped = j % 2 == 1;
            int total = 0;
            for (int c = 0; c < depths[di]; ++c) {
                const int e = pick(rng);
                s.cliffords.push_back(e);
                total = clifford_compose(e, total);
            }
            s.inversion = clifford_inverse(total);
            if (s.flipped) s.inversion = clifford_compose(x_pi, s.inversion);
            for (int e : s.cliffords) {
                const auto& w = clifford_table()[std::size_t(e)].native;
                s.native.insert(s.native.end(), w.begin(), w.end());
            }
            const auto& w = clifford_table()[std::size_t(s.inversion)].native;
            s.native.insert(s.native.end(), w.begin(), w.end());
            out.push_back(std::move(s));
        }
    }
    return out;
}

// ---------------------------------------------------------------- RB simulation

ChannelMap ideal_natives() {
    ChannelMap m;
    for (const char* id : {"Gi", "Gx", "Gy"}) m[id] = ptm_of_unitary(native_unitary(id));
    return m;
}

ChannelMap natives_from_gate_set(const GateSetEstimate& gs) {
    if (gs.n_qubits != 1) throw ConfigError("RB natives need a single-qubit gate set");
    ChannelMap m;
    for (const char* id : {"Gi", "Gx", "Gy"}) m[id] = gs.ptm(id);
    return m;
}

double occurrence_weighted_fidelity(const ChannelMap& natives) {
    const ChannelMap ideal = ideal_natives();
    double f = 0.0;
    for (const auto& [id, w] : native_occurrence()) f += w * avg_gate_fidelity(channel_for(natives, id), ideal.at(id));
    return f;
}

RBResult run_rb(const std::vector<RBSequence>& sequences, const ChannelMap& natives, long shots,
                const SSROModel& ssro, std::uint64_t seed, unsigned threads) {
    if (sequences.empty()) throw ConfigError("no RB sequences");
    if (shots < 0) throw ConfigError("shots must be non-negative");
    ssro.validate();
    for (const char* id : {"Gi", "Gx", "Gy"})
        if (channel_for(natives, id).n_qubits != 1) throw ConfigError("RB natives must be single-qubit channels");
    const RVec rho = pauli_vector((CMat(2, 2) << 1, 0, 0, 0).finished());
    const RVec e0 = pauli_vector((CMat(2, 2) << 1, 0, 0, 0).finished());
    const double contrast = ssro.F0 + ssro.F1 - 1.0;

    RBResult out;
    out.survival.resize(sequences.size());
    std::vector<double> sigma(sequences.size());
    std::vector<std::string> failure(sequences.size());
    parallel_for(sequences.size(), threads, [&](std::size_t i) {
        try {
            RVec v = rho, next(4);
            for (const auto& g : sequences[i].native) {
                next.noalias() = channel_for(natives, g).matrix * v;
                v.swap(next);
            }
            const double p0 = std::clamp(e0.dot(v), 0.0, 1.0);
            if (shots == 0) {
                out.survival[i] = sequences[i].flipped ? 1.0 - p0 : p0;
                sigma[i] = 1e-6;
                return;
            }
            std::mt19937_64 rng = stream(seed, i);
            std::binomial_distribution<long> draw(shots, std::clamp(ssro.measured_zero(p0), 0.0, 1.0));
            const long k = draw(rng);
            const SSROCorrection c = ssro_correct(double(k) / double(shots), shots, ssro);
            out.survival[i] = sequences[i].flipped ? c.p1 : c.p0;
            const double f = (double(k) + 0.5) / (double(shots) + 1.0);
            sigma[i] = std::sqrt(f * (1.0 - f) / double(shots)) / contrast;
        } catch (const std::exception& e) {
            failure[i] = e.what();
        }
    });
    for (const auto& f : failure)
        if (!f.empty()) throw NumericalError(f);

    std::vector<double> xs;
    for (const auto& s : sequences) xs.push_back(double(s.native.size()));
    out.fit = fit_curve(xs, out.survival, sigma, FitModel::rb_decay);
    out.p = out.fit.value("p");
    out.p_stderr = out.fit.error("p");
    out.F_avg = 1.0 - (1.0 - out.p) / 2.0;
    out.F_stderr = out.p_stderr / 2.0;

    std::map<int, std::vector<std::size_t>> by_depth;
    for (std::size_t i = 0; i < sequences.size(); ++i) by_depth[sequences[i].clifford_depth].push_back(i);
    for (const auto& [depth, idx] : by_depth) {
        RBPoint pt;
        pt.clifford_depth = depth;
        double m = 0.0, s = 0.0;
        for (std::size_t i : idx) {
            pt.depth_native += xs[i];
            m += out.survival[i];
        }
        pt.depth_native /= double(idx.size());
        m /= double(idx.size());
        for (std::size_t i : idx) s += (out.survival[i] - m) * (out.survival[i] - m);
        pt.mean_survival = m;
        pt.stderr_ = idx.size() > 1 ? std::sqrt(s / double(idx.size() - 1) / double(idx.size())) : sigma[idx[0]];
        out.curve.push_back(pt);
    }
    return out;
}

// ---------------------------------------------------------------- repeated SWAP

ChannelMap ideal_two_qubit_channels() {
    ChannelMap m;
    for (GateId g : all_gates())
        if (!is_bare(g)) m[gate_name(g)] = ptm_of_unitary(ideal_unitary(g));
    return m;
}

PTM swap_channel(const ChannelMap& channels) {
    PTM out = PTM::identity(2);
    for (GateId g : compile_swap()) out = compose(channel_for(channels, gate_name(g)), out);
    return out;
}

ChannelMap with_crx_z_error(const ChannelMap& channels, double angle) {
    ChannelMap out = channels;
    const CMat zi = kron(rot(pauli::z(), angle), CMat(CMat::Identity(2, 2)));
    out["CRx"] = compose(ptm_of_unitary(zi), channel_for(channels, "CRx"));
    return out;
}

double crx_z_error_for_swap_fidelity(const ChannelMap& channels, double fidelity) {
    if (!(fidelity > 0.25 && fidelity <= 1.0)) throw ConfigError("target SWAP fidelity must lie in (0.25, 1]");
    const PTM ideal = swap_channel(ideal_two_qubit_channels());
    auto f = [&](double a) { return avg_gate_fidelity(swap_channel(with_crx_z_error(channels, a)), ideal); };
    double lo = 0.0, hi = 0.0;
    if (f(lo) < fidelity) throw ConfigError("the supplied channels are already below the target SWAP fidelity");
    // first crossing
    for (double a = 1e-3; a <= M_PI; a *= 1.25)
        if (f(a) < fidelity) {
            hi = a;
            break;
        } else {
            lo = a;
        }
    if (hi == 0.0) throw NumericalError("no Z error on CRx reaches the target SWAP fidelity");
    for (int it = 0; it < 200 && hi - lo > 1e-14; ++it) {
        const double mid = 0.5 * (lo + hi);
        (f(mid) < fidelity ? hi : lo) = mid;
    }
    return 0.5 * (lo + hi);
}

std::string mitigation_name(Mitigation m) {
    switch (m) {
        case Mitigation::none: return "none";
        case Mitigation::echo: return "echo";
        case Mitigation::pauli_twirl: return "pauli_twirl";
    }
    return "?";
}

Mitigation mitigation_from_name(const std::string& name) {
    for (Mitigation m : {Mitigation::none, Mitigation::echo, Mitigation::pauli_twirl})
        if (mitigation_name(m) == name) return m;
    throw ConfigError("unknown mitigation '" + name + "' (none, echo, pauli_twirl)");
}

namespace {

// Pauli frames {I, X X, Y Y, X X Y Y} from pi/2 rotations on one qubit.
std::vector<std::string> pauli_word(int which, bool electron) {
    const std::string x = electron ? "Xe" : "Xn";
    const std::string y = electron ? "Ye" : "Yn";
    switch (which) {
        case 1: return {x, x};
        case 2: return {y, y};
        case 3: return {x, x, y, y};
        default: return {};
    }
}

RMat word_ptm(const ChannelMap& m, const std::vector<std::string>& word) {
    RMat out = RMat::Identity(16, 16);
    for (const auto& g : word) out = channel_for(m, g).matrix * out;
    return out;
}

}  // namespace

CMat electron_reduced_state(const RVec& v) {
    const CMat rho = operator_from_pauli_vector(v);
    CMat e = CMat::Zero(2, 2);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) e(i, j) = rho(2 * i, 2 * j) + rho(2 * i + 1, 2 * j + 1);
    return e;
}

CMat nitrogen_reduced_state(const RVec& v) {
    const CMat rho = operator_from_pauli_vector(v);
    CMat n = CMat::Zero(2, 2);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) n(i, j) = rho(i, j) + rho(2 + i, 2 + j);
    return n;
}

std::vector<CMat> cardinal_states() {
    const double s = std::sqrt(0.5);
    std::vector<CVec> kets;
    CVec k(2);
    k << 1, 0;
    kets.push_back(k);
    k << 0, 1;
    kets.push_back(k);
    k << s, s;
    kets.push_back(k);
    k << s, -s;
    kets.push_back(k);
    k << s, Complex(0, s);
    kets.push_back(k);
    k << s, Complex(0, -s);
    kets.push_back(k);
    std::vector<CMat> out;
    for (const auto& ket : kets) out.push_back(ket * ket.adjoint());
    return out;
}

std::vector<SwapPoint> repeated_swap_curve(const ChannelMap& channels, int n_max, const SwapCurveOptions& options) {
    if (n_max < 0 || n_max % 2 != 0) throw ConfigError("repeated SWAP needs an even, non-negative n_max");
    if (options.mitigation == Mitigation::pauli_twirl && options.realizations < 1)
        throw ConfigError("twirling needs at least one realisation");
    const ChannelMap ideal = ideal_two_qubit_channels();
    const RMat swap = swap_channel(channels).matrix;
    const RMat swap_ideal = swap_channel(ideal).matrix;
    const RMat echo = word_ptm(channels, {"Xe", "Xe"});
    const RMat echo_ideal = word_ptm(ideal, {"Xe", "Xe"});
    const ChannelMap& frame_source = options.perfect_twirl ? ideal : channels;

    CMat n0 = CMat::Zero(2, 2);
    n0(0, 0) = 1.0;
    std::vector<RVec> inputs;
    for (const auto& c : cardinal_states()) inputs.push_back(pauli_vector(kron(c, n0)));

    const int realizations = options.mitigation == Mitigation::pauli_twirl ? options.realizations : 1;
    const int points = n_max / 2 + 1;
    std::vector<std::vector<double>> fid(static_cast<std::size_t>(realizations), std::vector<double>(static_cast<std::size_t>(points)));
    parallel_for(std::size_t(realizations), options.threads, [&](std::size_t r) {
        std::mt19937_64 rng = stream(options.seed, r, 0x7717);
        std::uniform_int_distribution<int> pick(0, 3);
        std::vector<RVec> actual = inputs, target = inputs;
        auto score = [&](int slot) {
            double f = 0.0;
            for (std::size_t s = 0; s < inputs.size(); ++s)
                f += (electron_reduced_state(target[s]) * electron_reduced_state(actual[s])).trace().real();
            fid[r][std::size_t(slot)] = f / double(inputs.size());
        };
        score(0);
        for (int n = 1; n <= n_max; ++n) {
            RMat step = swap, step_ideal = swap_ideal;
            if (options.mitigation == Mitigation::echo && n > 1) {
                step = swap * echo;
                step_ideal = swap_ideal * echo_ideal;
            }
            if (options.mitigation == Mitigation::pauli_twirl) {
                const int p1 = pick(rng), p2 = pick(rng);
                // (P2 (x) P1) SWAP (P1 (x) P2) = SWAP up to phase
                auto frame = [&](const ChannelMap& m, int on_e, int on_n) {
                    std::vector<std::string> w = pauli_word(on_e, true);
                    const auto wn = pauli_word(on_n, false);
                    w.insert(w.end(), wn.begin(), wn.end());
                    return word_ptm(m, w);
                };
                step = frame(frame_source, p2, p1) * swap * frame(frame_source, p1, p2);
            }
            for (std::size_t s = 0; s < inputs.size(); ++s) {
                actual[s] = step * actual[s];
                target[s] = step_ideal * target[s];
            }
            if (n % 2 == 0) score(n / 2);
        }
    });

    std::vector<SwapPoint> out;
    for (int i = 0; i < points; ++i) {
        SwapPoint pt;
        pt.n = 2 * i;
        double m = 0.0, s = 0.0;
        for (int r = 0; r < realizations; ++r) m += fid[std::size_t(r)][std::size_t(i)];
        m /= realizations;
        for (int r = 0; r < realizations; ++r) {
            const double d = fid[std::size_t(r)][std::size_t(i)] - m;
            s += d * d;
        }
        pt.fidelity = m;
        pt.stderr_ = realizations > 1 ? std::sqrt(s / (realizations - 1) / realizations) : 0.0;
        out.push_back(pt);
    }
    return out;
}

// ---------------------------------------------------------------- output

nlohmann::json to_json(const RBResult& r) {
    return {{"p", r.p},
            {"p_stderr", r.p_stderr},
            {"F_avg", r.F_avg},
            {"F_stderr", r.F_stderr},
            {"sequences", r.survival.size()},
            {"fit", to_json(r.fit)}};
}

std::string rb_curve_csv(const RBResult& r) {
    std::ostringstream out;
    out.precision(12);
    out << "depth_native,mean_survival,stderr\n";
    for (const auto& p : r.curve) out << p.depth_native << ',' << p.mean_survival << ',' << p.stderr_ << '\n';
    return out.str();
}

nlohmann::json to_json(const RBSequence& s) {
    return {{"clifford_depth", s.clifford_depth}, {"cliffords", s.cliffords}, {"inversion", s.inversion},
            {"flipped", s.flipped},               {"native", s.native}};
}

}  // namespace spinforge
