#include "spinforge/experiments.hpp"

#include "spinforge/errors.hpp"
#include "spinforge/numerics.hpp"

#include <algorithm>
#include <cmath>

namespace spinforge {

namespace {

// Restores the global tolerances on scope exit.
bool electron_gate(GateId id) {
    switch (id) {
        case GateId::II:
        case GateId::Xe:
        case GateId::Xe_minus:
        case GateId::Ye:
        case GateId::Ye_minus:
        case GateId::Te:
        case GateId::bare_Xe:
        case GateId::bare_Ye: return true;
        default: return false;
    }
}

CMat rz(double a) {
    CMat m = CMat::Zero(2, 2);
    m(0, 0) = std::exp(Complex(0, -a / 2));
    m(1, 1) = std::exp(Complex(0, a / 2));
    return m;
}

double fold_angle(double a) {
    a = std::fmod(a, 2 * M_PI);
    if (a < 0) a += 2 * M_PI;
    return a > M_PI ? 2 * M_PI - a : a;
}

}  // namespace

std::string pulse_variant_name(PulseVariant v) {
    switch (v) {
        case PulseVariant::hermite: return "hermite";
        case PulseVariant::square: return "square";
        case PulseVariant::hermite_literal: return "hermite_literal";
    }
    return "?";
}

PulseVariant pulse_variant_from_name(const std::string& name) {
    for (PulseVariant v : {PulseVariant::hermite, PulseVariant::square, PulseVariant::hermite_literal})
        if (pulse_variant_name(v) == name) return v;
    throw ConfigError("unknown pulse variant '" + name + "' (hermite, square, hermite_literal)");
}

PulseSequence pulse_variant(const PulseSequence& seq, PulseVariant v, double amp_pi, double amp_pi2) {
    if (v == PulseVariant::hermite) return seq;
    if (!(amp_pi > 0.0 && amp_pi2 > 0.0)) throw ConfigError("variant amplitudes must be positive");
    PulseSequence out;
    out.frame = seq.frame;
    for (const Segment& seg : seq.segments) {
        if (seg.kind != SegmentKind::mw_pulse || seg.envelope.kind != EnvelopeKind::hermite) {
            out.append(seg);
            continue;
        }
        const bool pi = seg.envelope.eta == kHermiteEtaPi;
        const double amp = pi ? amp_pi : amp_pi2;
        if (v == PulseVariant::hermite_literal) {
            Segment s = seg;
            s.envelope.amplitude = amp;
            out.append(s);
            continue;
        }
        const double d = pi ? 1.0 / (2.0 * amp) : 1.0 / (4.0 * amp);
        if (d > seg.duration) throw ConfigError("square pulse does not fit its slot");
        out.append(Segment::delay(0.5 * (seg.duration - d)));
        out.append(Segment::mw(Envelope::square(amp, d), seg.carrier, seg.phase));
        out.append(Segment::delay(0.5 * (seg.duration - d)));
    }
    out.normalize();
    return out;
}

std::vector<DetuningPoint> detuning_scan(const SystemParams& params, const CalibrationSet& cal,
                                         const DetuningScanOptions& o) {
    if (o.detunings.empty()) throw ConfigError("detuning scan needs at least one detuning");
    if (o.xy8_blocks < 0) throw ConfigError("xy8_blocks must be non-negative");
    const GateId id = o.xy8_blocks > 0 ? GateId::II : o.gate;
    if (!electron_gate(id)) throw ConfigError("detuning scans take electron gates, not " + gate_name(id));
    const PulseSequence base = o.xy8_blocks > 0 ? xy8_sequence(cal, o.xy8_blocks) : build_gate(id, cal);
    const PulseSequence seq = pulse_variant(base, o.variant, o.amp_pi, o.amp_pi2);

    PropagateOptions prop;
    if (o.variant == PulseVariant::square)
        prop.dt = std::min(numerics().dt_rotating, 1.0 / (4.0 * std::max(o.amp_pi, 2.0 * o.amp_pi2)) / 40.0);

    const bool bare = is_bare(id);
    CMat target = ideal_context_unitary(id);
    if (!bare) {
        const CMat full = ideal_unitary(id);
        CMat t(2, 2);
        t << full(0, 0), full(0, 2), full(2, 0), full(2, 2);
        target = t;
    }
    const PTM target_ptm = ptm_of_unitary(target);
    const std::vector<int> electron_context = {QubitEncoding::index(0, 0), QubitEncoding::index(-1, 0)};

    Numerics relaxed = numerics();
    relaxed.leakage_max = 1.0;
    const ScopedNumerics guard(relaxed);

    std::vector<DetuningPoint> out(o.detunings.size());
    parallel_for(o.detunings.size(), o.threads, [&](std::size_t i) {
        NoiseSpec noise;
        noise.detuning_e = o.detunings[i];
        const GateSimulation sim = simulate_sequence(params, cal, id, seq, noise, prop);
        DetuningPoint& pt = out[i];
        pt.detuning = o.detunings[i];
        pt.fidelity_2q = sim.fidelity;
        pt.leakage = sim.channel.leakage.worst_case;
        pt.fidelity_1q = bare ? sim.fidelity
                              : avg_gate_fidelity(channel_from_propagator(sim.propagator, electron_context).ptm, target_ptm);
    });
    return out;
}

double kick_tau_for_units(const SystemParams& params, int n) {
    if (n < 1) throw ConfigError("decoupling unit count must be positive");
    return 2.0 * n / (nitrogen_frequency_ms0(params) + nitrogen_frequency_msm1(params));
}

KickTrace nitrogen_kick_trace(const SystemParams& params, CalibrationSet cal, double tau, int blocks) {
    if (!(tau > cal.pulse_duration)) throw ConfigError("kick tau must exceed the pulse duration");
    if (blocks < 1) throw ConfigError("kick trace needs at least one block");
    cal.tau = tau;
    const GateSimulation sim = simulate_sequence(params, cal, GateId::II, xy8_sequence(cal, 1));
    if (!sim.unitary) throw NumericalError("kick trace needs a unitary block propagator");
    const CMat& u = *sim.unitary;

    const int a = QubitEncoding::index(0, 0), b = QubitEncoding::index(0, -1), c = QubitEncoding::index(-1, -1);
    CMat block(2, 2);
    block << u(a, a), u(a, b), u(b, a), u(b, b);
    const Complex det = block.determinant();
    if (std::abs(det) < 1e-6) throw NumericalError("nitrogen block is not unitary");
    const double half_trace = std::abs((block / std::sqrt(det)).trace().real()) / 2.0;

    KickTrace out;
    out.tau = tau;
    out.per_block_rotation = 2.0 * std::acos(std::min(1.0, half_trace));
    out.per_block_kick = 2.0 * std::asin(std::min(1.0, std::abs(block(1, 0) / std::sqrt(det))));
    const double f0 = nitrogen_frequency_ms0(params), fm1 = nitrogen_frequency_msm1(params);
    const double phi = nitrogen_kick_angle(tau, f0, fm1, nitrogen_axis_tilt(params));
    out.closed_form_per_block = fold_angle(8.0 * phi);
    out.period_blocks = out.per_block_rotation > 0 ? 2 * M_PI / out.per_block_rotation : INFINITY;
    out.closed_form_period_blocks = out.closed_form_per_block > 0 ? 2 * M_PI / out.closed_form_per_block : INFINITY;

    CVec v = CVec::Zero(u.rows());
    v(a) = 1.0;
    CVec next(u.rows());
    out.population.reserve(std::size_t(blocks));
    for (int k = 0; k < blocks; ++k) {
        next.noalias() = u * v;
        v.swap(next);
        const double p = std::norm(v(b)) + std::norm(v(c));
        out.population.push_back(p);
        out.max_population = std::max(out.max_population, p);
    }
    return out;
}

std::vector<MemoryPoint> memory_curve(const ChannelMap& channels, int blocks_max, int stride) {
    if (blocks_max < 0) throw ConfigError("blocks_max must be non-negative");
    if (stride < 1) throw ConfigError("stride must be positive");
    auto get = [&](const char* id) -> const RMat& {
        const auto it = channels.find(id);
        if (it == channels.end()) throw ConfigError(std::string("memory simulation needs a channel for ") + id);
        if (it->second.n_qubits != 2) throw ConfigError("memory simulation needs two-qubit channels");
        return it->second.matrix;
    };
    const RMat swap = swap_channel(channels).matrix;
    const RMat pi_x = get("Xn") * get("Xn");
    const RMat pi_y = get("Yn") * get("Yn");
    RMat block = RMat::Identity(16, 16);
    for (double phase : kXY8Phases) block = (phase == 0.0 ? pi_x : pi_y) * block;

    const auto cards = cardinal_states();
    CMat n0 = CMat::Zero(2, 2);
    n0(0, 0) = 1.0;
    std::vector<RVec> states;
    for (const auto& c : cards) states.push_back(swap * pauli_vector(kron(c, n0)));

    std::vector<MemoryPoint> out;
    for (int k = 0; k <= blocks_max; ++k) {
        if (k % stride == 0 || k == blocks_max) {
            MemoryPoint pt;
            pt.blocks = k;
            for (std::size_t s = 0; s < states.size(); ++s) {
                const RVec back = swap * states[s];
                const double f = (cards[s] * electron_reduced_state(back)).trace().real();
                pt.fidelity += f / 6.0;
                (s < 2 ? pt.fidelity_z : pt.fidelity_xy) += s < 2 ? f / 2.0 : f / 4.0;
                pt.electron_population += nitrogen_reduced_state(back)(0, 0).real() / 6.0;
            }
            out.push_back(pt);
        }
        if (k < blocks_max)
            for (auto& s : states) s = block * s;
    }
    return out;
}

ChannelMap simulated_channels(const SystemParams& params, const CalibrationSet& cal, const std::vector<GateId>& gates,
                              const QuasiStaticEnsemble& ensemble, const NoiseSpec& noise, unsigned threads) {
    ensemble.validate();
    const auto members = ensemble.members();
    const bool single = members.size() == 1 && members[0].detuning_e == 0.0 && members[0].detuning_n == 0.0;
    ChannelMap out;
    for (GateId id : gates) {
        if (is_bare(id)) throw ConfigError("bare gates have single-qubit channels: " + gate_name(id));
        out[gate_name(id)] = single ? simulate_gate(params, cal, id, noise).channel.ptm
                                    : average_channel(params, cal, id, ensemble, noise, threads);
    }
    return out;
}

ChannelMap channels_from_gate_set(const GateSetEstimate& gs) {
    if (gs.n_qubits != 2) throw ConfigError("two-qubit channels need a two-qubit gate set");
    ChannelMap out;
    for (const auto& label : gs.labels) out[label] = gs.ptm(label);
    if (!out.count("Xe-") && out.count("Xe")) {
        const PTM& x = out.at("Xe");
        out["Xe-"] = compose(x, compose(x, x));
    }
    return out;
}

GateSetEstimate gate_set_from_channels(const ChannelMap& channels, const GateList& labels) {
    GateSetEstimate gs = target_gate_set(labels);
    for (const auto& label : labels) {
        const auto it = channels.find(label);
        if (it == channels.end()) throw ConfigError("no channel for gate '" + label + "'");
        if (it->second.n_qubits != gs.n_qubits) throw ConfigError("channel for '" + label + "' has the wrong size");
        gs.gate(label) = it->second.matrix;
    }
    return gs;
}

GateSetEstimate one_qubit_truth(const OneQubitNoise& noise) {
    GateSetEstimate gs = target_gate_set({"Gi", "Gx", "Gy"});
    for (const auto& [label, s] : noise.depolarizing) {
        if (!(s >= 0.0 && s <= 1.0)) throw ConfigError("depolarizing scale must lie in [0, 1]");
        gs.gate(label) = depolarizing(1, s).matrix * gs.gate(label);
    }
    for (const auto& [label, z] : noise.z_error) gs.gate(label) = ptm_of_unitary(rz(z)).matrix * gs.gate(label);
    return gs;
}

OneQubitNoise one_qubit_noise_from_json(const nlohmann::json& doc) {
    if (!doc.is_object()) throw ConfigError("truth must be a JSON object");
    static const GateList labels = {"Gi", "Gx", "Gy"};
    auto read = [&](const nlohmann::json& v, const std::string& what) {
        std::map<std::string, double> m;
        if (v.is_number()) {
            for (const auto& l : labels) m[l] = v.get<double>();
            return m;
        }
        if (!v.is_object()) throw ConfigError(what + " must be a number or an object keyed by gate");
        for (const auto& item : v.items()) {
            if (std::find(labels.begin(), labels.end(), item.key()) == labels.end())
                throw ConfigError(what + ": unknown gate '" + item.key() + "'");
            if (!item.value().is_number()) throw ConfigError(what + "." + item.key() + " must be a number");
            m[item.key()] = item.value().get<double>();
        }
        return m;
    };
    OneQubitNoise n;
    for (const auto& item : doc.items()) {
        if (item.key() == "depolarizing")
            n.depolarizing = read(item.value(), "depolarizing");
        else if (item.key() == "z_error_rad")
            n.z_error = read(item.value(), "z_error_rad");
        else
            throw ConfigError("unknown truth key '" + item.key() + "'");
    }
    return n;
}

nlohmann::json to_json(const OneQubitNoise& n) { return {{"depolarizing", n.depolarizing}, {"z_error_rad", n.z_error}}; }

}  // namespace spinforge
