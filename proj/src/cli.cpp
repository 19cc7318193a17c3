#include "spinforge/cli.hpp"

#include "spinforge/channels.hpp"
#include "spinforge/errors.hpp"
#include "spinforge/experiments.hpp"
#include "spinforge/gates.hpp"
#include "spinforge/gst.hpp"
#include "spinforge/noise.hpp"
#include "spinforge/numerics.hpp"
#include "spinforge/rb.hpp"
#include "spinforge/system.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

namespace spinforge {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ------------------------------------------------------------ option reading

// Typed access to one JSON object; every key read is recorded with its
// resolved value, and finish() rejects whatever was never read.
class Options {
public:
    Options(const json& doc, std::string where) : where_(std::move(where)) {
        if (doc.is_null()) {
            doc_ = json::object();
        } else if (!doc.is_object()) {
            throw ConfigError(where_ + " must be a JSON object");
        } else {
            doc_ = doc;
        }
    }

    bool has(const std::string& key) const { return doc_.contains(key); }
    void skip(const std::string& key) { used_.insert(key); }

    double number(const std::string& key, double fallback) {
        const double v = get(key, fallback, [&](const json& j) {
            if (!j.is_number()) fail(key, "a number");
            return j.get<double>();
        });
        if (!std::isfinite(v)) fail(key, "finite");
        return v;
    }

    long integer(const std::string& key, long fallback) {
        return get(key, fallback, [&](const json& j) {
            if (!j.is_number_integer()) fail(key, "an integer");
            return j.get<long>();
        });
    }

    bool flag(const std::string& key, bool fallback) {
        return get(key, fallback, [&](const json& j) {
            if (!j.is_boolean()) fail(key, "true or false");
            return j.get<bool>();
        });
    }

    std::string text(const std::string& key, const std::string& fallback) {
        return get(key, fallback, [&](const json& j) {
            if (!j.is_string()) fail(key, "a string");
            return j.get<std::string>();
        });
    }

    std::vector<double> numbers(const std::string& key, const std::vector<double>& fallback) {
        return get(key, fallback, [&](const json& j) {
            if (!j.is_array()) fail(key, "an array of numbers");
            std::vector<double> v;
            for (const auto& x : j) {
                if (!x.is_number()) fail(key, "an array of numbers");
                v.push_back(x.get<double>());
            }
            return v;
        });
    }

    std::vector<long> integers(const std::string& key, const std::vector<long>& fallback) {
        return get(key, fallback, [&](const json& j) {
            if (!j.is_array()) fail(key, "an array of integers");
            std::vector<long> v;
            for (const auto& x : j) {
                if (!x.is_number_integer()) fail(key, "an array of integers");
                v.push_back(x.get<long>());
            }
            return v;
        });
    }

    std::vector<std::string> texts(const std::string& key, const std::vector<std::string>& fallback) {
        return get(key, fallback, [&](const json& j) {
            if (j.is_string()) return std::vector<std::string>{j.get<std::string>()};
            if (!j.is_array()) fail(key, "a string or an array of strings");
            std::vector<std::string> v;
            for (const auto& x : j) {
                if (!x.is_string()) fail(key, "a string or an array of strings");
                v.push_back(x.get<std::string>());
            }
            return v;
        });
    }

    // Raw sub-document; null when absent. The caller records the resolved form.
    json object(const std::string& key) {
        used_.insert(key);
        return doc_.contains(key) ? doc_.at(key) : json();
    }

    void record(const std::string& key, json value) { resolved[key] = std::move(value); }

    void finish() const {
        for (const auto& item : doc_.items())
            if (!used_.count(item.key())) throw ConfigError("unknown key '" + item.key() + "' in " + where_);
    }

    json resolved = json::object();

private:
    template <typename T, typename F>
    T get(const std::string& key, const T& fallback, F&& convert) {
        used_.insert(key);
        T value = doc_.contains(key) ? convert(doc_.at(key)) : fallback;
        resolved[key] = value;
        return value;
    }

    [[noreturn]] void fail(const std::string& key, const std::string& what) const {
        throw ConfigError(where_ + "." + key + " must be " + what);
    }

    json doc_;
    std::string where_;
    std::set<std::string> used_;
};

// ------------------------------------------------------------ CSV

std::string cell(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}
std::string cell(long v) { return std::to_string(v); }
std::string cell(const std::string& v) {
    if (v.find_first_of(",\"\n") == std::string::npos) return v;
    std::string q = "\"";
    for (char c : v) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
}
std::string cell(const char* v) { return cell(std::string(v)); }

class Csv {
public:
    explicit Csv(const std::vector<std::string>& header) { line(header); }
    template <typename... T>
    void row(const T&... values) {
        line({cell(values)...});
    }
    const std::string& str() const { return text_; }

private:
    void line(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) text_ += (i ? "," : "") + cells[i];
        text_ += "\n";
    }
    std::string text_;
};

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(); }

// ------------------------------------------------------------ run context

struct Context {
    SystemParams params;
    NoiseSpec noise;
    QuasiStaticEnsemble ensemble;
    SSROModel ssro;
    std::optional<std::uint64_t> seed;
    unsigned threads = 0;
    fs::path base_dir;
    json calibration_doc;
    std::optional<CalibrationSet> cal;

    const CalibrationSet& calibration() {
        if (!cal) {
            CalibrationSet c = default_calibration(params);
            if (!calibration_doc.is_null()) c = calibration_from_json(calibration_doc, c);
            c.validate();
            cal = c;
        }
        return *cal;
    }

    std::uint64_t need_seed(const std::string& why) const {
        if (!seed) throw ConfigError(why + " draws random numbers and needs a seed (--seed or \"seed\")");
        return *seed;
    }

    bool trivial_ensemble() const {
        const auto m = ensemble.members();
        return m.size() == 1 && m[0].detuning_e == 0.0 && m[0].detuning_n == 0.0;
    }

    json load_json(const std::string& path) const {
        const fs::path p = fs::path(path).is_absolute() ? fs::path(path) : base_dir / path;
        return read_config(p);
    }

    std::string load_text(const std::string& path) const {
        const fs::path p = fs::path(path).is_absolute() ? fs::path(path) : base_dir / path;
        std::ifstream in(p);
        if (!in) throw ConfigError("cannot open " + p.string());
        std::ostringstream s;
        s << in.rdbuf();
        return s.str();
    }
};

struct Experiment {
    const char* name;
    void (*run)(Context&, Options&, RunOutput&);
};

// ------------------------------------------------------------ shared pieces

const char* kTransitions[6] = {"wN_m1_at_es_m1", "wN_p1_at_es_m1", "wN_p1_at_es_0",
                               "wN_m1_at_es_0",  "wE_at_nI_m1",    "wE_at_nI_0"};

GstDesign read_design(Options& o) {
    const long q = o.integer("qubits", 1);
    if (q != 1 && q != 2) throw ConfigError("qubits must be 1 or 2");
    GstDesign d = q == 1 ? default_design_1q() : default_design_2q();
    const json overrides = o.object("design");
    if (!overrides.is_null()) d = design_from_json(overrides, d);
    o.record("design", to_json(d));
    return d;
}

int read_max_depth(Options& o, long fallback) {
    const long L = o.integer("max_depth", fallback);
    if (L < 1 || (L & (L - 1)) != 0 || L > (1L << 20)) throw ConfigError("max_depth must be a power of two");
    return int(L);
}

GateSetEstimate load_gate_set(const Context& ctx, const std::string& path) {
    const json doc = ctx.load_json(path);
    return gate_set_from_json(doc.contains("estimate") ? doc.at("estimate") : doc);
}

// Two-qubit channel library from a {"source": ...} block.
ChannelMap read_channels(Context& ctx, Options& parent, json& summary) {
    Options o(parent.object("channels"), "channels");
    const std::string source = o.text("source", "ideal");
    ChannelMap ch;
    if (source == "ideal") {
        ch = ideal_two_qubit_channels();
    } else if (source == "simulate") {
        using G = GateId;
        ch = simulated_channels(ctx.params, ctx.calibration(), {G::II, G::Xe, G::Xe_minus, G::Ye, G::Ye_minus, G::Xn, G::Yn, G::CRx},
                                ctx.ensemble, ctx.noise, ctx.threads);
    } else if (source == "gate_set") {
        const std::string path = o.text("path", "");
        if (path.empty()) throw ConfigError("channels.path is required for a gate_set source");
        ch = channels_from_gate_set(load_gate_set(ctx, path));
    } else {
        throw ConfigError("channels.source must be ideal, simulate or gate_set");
    }
    const double scale = o.number("depolarizing", 1.0);
    if (!(scale >= 0.0 && scale <= 1.0)) throw ConfigError("channels.depolarizing must lie in [0, 1]");
    if (scale < 1.0)
        for (auto& [id, g] : ch) g = compose(depolarizing(g.n_qubits, scale), g);

    double angle = o.number("crx_z_error_rad", 0.0);
    if (o.has("swap_fidelity")) {
        if (angle != 0.0) throw ConfigError("give channels.crx_z_error_rad or channels.swap_fidelity, not both");
        angle = crx_z_error_for_swap_fidelity(ch, o.number("swap_fidelity", 1.0));
    }
    if (angle != 0.0) ch = with_crx_z_error(ch, angle);
    o.finish();
    json resolved = o.resolved;
    resolved["crx_z_error_rad"] = angle;
    parent.record("channels", resolved);

    summary["channels"] = resolved;
    summary["swap_fidelity"] = avg_gate_fidelity(swap_channel(ch), swap_channel(ideal_two_qubit_channels()));
    return ch;
}

// ------------------------------------------------------------ experiments

void run_levels(Context& ctx, Options& o, RunOutput& out) {
    LevelFrequencies measured = measured_frequencies();
    const json given = o.object("frequencies_Hz");
    if (!given.is_null()) {
        Options f(given, "frequencies_Hz");
        std::array<double, 6> v = measured.as_array();
        for (int i = 0; i < 6; ++i) v[std::size_t(i)] = f.number(kTransitions[i], v[std::size_t(i)]);
        f.finish();
        measured = LevelFrequencies::from_array(v);
    }
    o.record("frequencies_Hz", to_json(measured));
    o.finish();

    const LevelFrequencies exact = level_frequencies(ctx.params, LevelMethod::exact);
    const LevelFrequencies first = level_frequencies(ctx.params, LevelMethod::perturbative);
    const SystemParams fitted = fit_params_from_frequencies(measured, ctx.params.gamma_e, ctx.params.gamma_n);
    const SystemParams round = fit_params_from_frequencies(first, ctx.params.gamma_e, ctx.params.gamma_n);
    auto rel = [](double a, double b) { return b == 0.0 ? std::abs(a) : std::abs(a - b) / std::abs(b); };
    const double round_trip = std::max({rel(round.D, ctx.params.D), rel(round.Bz, ctx.params.Bz), rel(round.Q, ctx.params.Q),
                                        rel(round.Azz, ctx.params.Azz), rel(round.a_perp(), ctx.params.a_perp())});

    Csv csv({"transition", "exact_Hz", "first_order_Hz", "measured_Hz", "exact_minus_measured_Hz"});
    const auto e = exact.as_array(), p = first.as_array(), m = measured.as_array();
    json diff = json::object();
    for (int i = 0; i < 6; ++i) {
        csv.row(kTransitions[i], e[std::size_t(i)], p[std::size_t(i)], m[std::size_t(i)], e[std::size_t(i)] - m[std::size_t(i)]);
        diff[kTransitions[i]] = e[std::size_t(i)] - m[std::size_t(i)];
    }
    out.artifacts.push_back({"levels.csv", csv.str()});
    out.summary = {{"exact", to_json(exact)},
                   {"first_order", to_json(first)},
                   {"measured", to_json(measured)},
                   {"exact_minus_measured_Hz", diff},
                   {"inverted_params", to_json(fitted)},
                   {"electron_line_residual_Hz", electron_line_residual(measured, fitted)},
                   {"round_trip_max_relative_error", round_trip}};
}

void run_tau_scan(Context& ctx, Options& o, RunOutput& out) {
    const double lo = o.number("tau_min_s", 7.0e-6);
    const double hi = o.number("tau_max_s", 7.6e-6);
    const double grid = o.number("grid_s", kHardwareGrid);
    const double theta = o.number("theta_rad", M_PI / 2);
    const double halfwidth = o.number("carbon_halfwidth_s", 10e-9);
    const long top = o.integer("top", 5);
    o.finish();
    if (!(lo > 0 && hi > lo && grid > 0)) throw ConfigError("tau-scan needs 0 < tau_min_s < tau_max_s and grid_s > 0");
    if (halfwidth < 0 || top < 1) throw ConfigError("carbon_halfwidth_s must be >= 0 and top >= 1");

    const double w0 = nitrogen_frequency_ms0(ctx.params), wm1 = nitrogen_frequency_msm1(ctx.params);
    const auto windows = carbon_windows(ctx.params.Bz, lo, hi, halfwidth);
    auto ranked = solve_tau(w0, wm1, lo, hi, grid, windows, theta);
    if (ranked.empty()) throw NumericalError("no tau candidate outside the forbidden windows");

    json best = json::array();
    for (std::size_t i = 0; i < ranked.size() && i < std::size_t(top); ++i) best.push_back(to_json(ranked[i]));
    json forbidden = json::array();
    for (const auto& w : windows) forbidden.push_back({{"center_s", w.center}, {"halfwidth_s", w.halfwidth}});

    std::sort(ranked.begin(), ranked.end(), [](const TauSolution& a, const TauSolution& b) { return a.tau < b.tau; });
    Csv csv({"tau_s", "n", "m", "residual_phase_rad"});
    for (const auto& s : ranked) csv.row(s.tau, s.n, s.m, s.residual_phase);
    out.artifacts.push_back({"tau_scan.csv", csv.str()});
    out.summary = {{"w0_Hz", w0}, {"wm1_Hz", wm1}, {"best", best}, {"forbidden", forbidden}, {"candidates", ranked.size()}};
}

void run_gate_sim(Context& ctx, Options& o, RunOutput& out) {
    const auto names = o.texts("gates", {"CRx"});
    const bool with_generator = o.flag("error_generator", true);
    const bool with_sequence = o.flag("sequence", false);
    PropagateOptions prop;
    prop.check_convergence = o.flag("check_convergence", false);
    o.finish();
    if (names.empty()) throw ConfigError("gate-sim needs at least one gate");
    std::vector<GateId> ids;
    for (const auto& n : names) ids.push_back(gate_from_name(n));

    const CalibrationSet& cal = ctx.calibration();
    Csv csv({"gate", "duration_s", "fidelity", "leakage_worst", "coherent_infidelity", "incoherent_infidelity"});
    json gates = json::array();
    for (GateId id : ids) {
        const GateSimulation sim = simulate_gate(ctx.params, cal, id, ctx.noise, prop);
        const PTM ptm = ctx.trivial_ensemble() ? sim.channel.ptm
                                               : average_channel(ctx.params, cal, id, ctx.ensemble, ctx.noise, ctx.threads);
        const double f = avg_gate_fidelity(ptm, sim.target);
        json g = {{"gate", gate_name(id)},
                  {"duration_s", sim.duration},
                  {"fidelity", f},
                  {"leakage", to_json(sim.channel.leakage)},
                  {"renormalization", sim.channel.renormalization},
                  {"dt_warning", sim.dt_warning},
                  {"ptm", to_json(ptm)}};
        double coherent = NAN, incoherent = NAN;
        if (with_generator) {
            const ErrorGenerator err = error_generator(ptm, sim.target);
            const FidelitySplit split = fidelity_split(err, sim.target);
            coherent = split.coherent;
            incoherent = split.incoherent;
            g["error_generator"] = to_json(err);
            g["fidelity_split"] = {{"coherent", split.coherent},
                                   {"incoherent", split.incoherent},
                                   {"total", split.total},
                                   {"residual", split.residual},
                                   {"large_error_warning", split.large_error_warning}};
        }
        if (with_sequence) out.artifacts.push_back({"sequence_" + gate_name(id) + ".json", to_json(sim.sequence).dump(2) + "\n"});
        csv.row(gate_name(id), sim.duration, f, sim.channel.leakage.worst_case, coherent, incoherent);
        gates.push_back(g);
    }
    out.artifacts.push_back({"gate_sim.csv", csv.str()});
    out.summary = {{"gates", gates}};
}

void run_detuning_scan(Context& ctx, Options& o, RunOutput& out) {
    DetuningScanOptions scan;
    const std::string target = o.text("target", "pi2_sandwich");
    if (target == "pi2_sandwich") {
        scan.gate = GateId::Xe;
    } else if (target == "xy8_identity") {
        scan.xy8_blocks = int(o.integer("xy8_blocks", 1));
        if (scan.xy8_blocks < 1) throw ConfigError("xy8_blocks must be at least 1");
    } else {
        scan.gate = gate_from_name(target);
    }
    const auto variants = o.texts("variants", {"hermite", "square"});
    const double lo = o.number("detuning_min_Hz", -2e6);
    const double hi = o.number("detuning_max_Hz", 2e6);
    const long points = o.integer("points", 17);
    scan.amp_pi = o.number("amp_pi_Hz", kLiteralAmpPi);
    scan.amp_pi2 = o.number("amp_pi2_Hz", kLiteralAmpPi2);
    const double band = o.number("inner_band_Hz", 1e6);
    o.finish();
    if (points < 1 || !(hi >= lo)) throw ConfigError("detuning scan needs points >= 1 and detuning_max_Hz >= detuning_min_Hz");
    for (long i = 0; i < points; ++i) scan.detunings.push_back(points == 1 ? lo : lo + (hi - lo) * double(i) / double(points - 1));
    scan.threads = ctx.threads;

    std::vector<PulseVariant> kinds;
    for (const auto& v : variants) kinds.push_back(pulse_variant_from_name(v));
    const CalibrationSet& cal = ctx.calibration();

    Csv csv({"variant", "detuning_Hz", "fidelity_1q", "fidelity_2q", "leakage"});
    json per = json::object();
    for (PulseVariant v : kinds) {
        scan.variant = v;
        const auto pts = detuning_scan(ctx.params, cal, scan);
        double worst = 1.0, inside = 1.0, outside = 1.0, centre = pts[0].fidelity_1q, closest = INFINITY;
        for (const auto& p : pts) {
            csv.row(pulse_variant_name(v), p.detuning, p.fidelity_1q, p.fidelity_2q, p.leakage);
            worst = std::min(worst, p.fidelity_1q);
            (std::abs(p.detuning) <= band ? inside : outside) =
                std::min(std::abs(p.detuning) <= band ? inside : outside, p.fidelity_1q);
            if (std::abs(p.detuning) < closest) {
                closest = std::abs(p.detuning);
                centre = p.fidelity_1q;
            }
        }
        per[pulse_variant_name(v)] = {{"min_fidelity", worst},
                                      {"min_fidelity_inside_band", inside},
                                      {"min_fidelity_outside_band", outside},
                                      {"max_degradation", centre - worst}};
    }
    out.artifacts.push_back({"detuning_scan.csv", csv.str()});
    out.summary = {{"target", target}, {"variants", per}};
}

void run_nitrogen_kick(Context& ctx, Options& o, RunOutput& out) {
    std::vector<double> taus = o.numbers("tau_s", {});
    std::vector<long> units = o.integers("units", taus.empty() ? std::vector<long>{50, 44} : std::vector<long>{});
    const long blocks = o.integer("blocks", 4000);
    const long stride = o.integer("stride", 1);
    o.finish();
    if (blocks < 1 || stride < 1) throw ConfigError("blocks and stride must be positive");
    for (long n : units) taus.push_back(kick_tau_for_units(ctx.params, int(n)));
    if (taus.empty()) throw ConfigError("nitrogen-kick needs tau_s or units");

    const CalibrationSet& cal = ctx.calibration();
    Csv csv({"tau_s", "block", "population"});
    json traces = json::array();
    for (double tau : taus) {
        const KickTrace t = nitrogen_kick_trace(ctx.params, cal, tau, int(blocks));
        for (std::size_t k = 0; k < t.population.size(); ++k)
            if ((k + 1) % std::size_t(stride) == 0) csv.row(tau, long(k + 1), t.population[k]);
        const double rel = std::isfinite(t.closed_form_period_blocks)
                               ? std::abs(t.period_blocks - t.closed_form_period_blocks) / t.closed_form_period_blocks
                               : NAN;
        traces.push_back({{"tau_s", tau},
                          {"per_block_rotation_rad", t.per_block_rotation},
                          {"per_block_kick_rad", t.per_block_kick},
                          {"closed_form_per_block_rad", t.closed_form_per_block},
                          {"period_blocks", finite_or_null(t.period_blocks)},
                          {"closed_form_period_blocks", finite_or_null(t.closed_form_period_blocks)},
                          {"period_relative_difference", finite_or_null(rel)},
                          {"max_population", t.max_population}});
    }
    out.artifacts.push_back({"kick_trace.csv", csv.str()});
    out.summary = {{"Bperp_G", ctx.params.Bperp}, {"axis_tilt_rad", nitrogen_axis_tilt(ctx.params)}, {"traces", traces}};
}

void run_gst_design(Context&, Options& o, RunOutput& out) {
    const GstDesign d = read_design(o);
    const int L = read_max_depth(o, 16);
    const bool lgst = o.flag("include_lgst", true);
    o.finish();
    const auto circuits = lgst ? full_design(d, L) : design_experiment(d, L);
    Csv counts({"max_depth", "circuits", "new_circuits"});
    std::size_t previous = lgst ? lgst_circuits(d.gate_ids, d.prep, d.meas).size() : 0;
    if (lgst) counts.row(0L, long(previous), long(previous));
    for (int l = 1; l <= L; l *= 2) {
        const std::size_t n = lgst ? full_design(d, l).size() : design_experiment(d, l).size();
        counts.row(long(l), long(n), long(n - previous));
        previous = n;
    }
    out.artifacts.push_back({"circuits.txt", circuits_to_text(circuits)});
    out.artifacts.push_back({"circuit_counts.csv", counts.str()});
    out.summary = {{"design", to_json(d)}, {"max_depth", L}, {"circuits", circuits.size()}};
}

// Reads the simulation options shared by gst-simulate and gst-fit.
Dataset simulate_gst_data(Context& ctx, Options& o, const GstDesign& d, GateSetEstimate& truth, json& summary) {
    const int L = read_max_depth(o, 16);
    const long shots = o.integer("shots", 1000);
    const bool readout = o.flag("use_ssro", false);
    if (shots < 0) throw ConfigError("shots must be non-negative");
    const int qubits = int(o.resolved.value("qubits", 1L));
    if (qubits == 1) {
        const json t = o.object("truth");
        const OneQubitNoise noise = t.is_null() ? OneQubitNoise{} : one_qubit_noise_from_json(t);
        o.record("truth", to_json(noise));
        truth = one_qubit_truth(noise);
        if (d.gate_ids != GateList{"Gi", "Gx", "Gy"})
            throw ConfigError("single-qubit truth models cover the gates Gi, Gx, Gy only");
    } else {
        truth = gate_set_from_channels(read_channels(ctx, o, summary), d.gate_ids);
    }
    const std::uint64_t seed = shots > 0 ? ctx.need_seed("sampling GST data") : 0;
    const auto circuits = full_design(d, L);
    std::optional<SSROModel> ssro;
    if (readout) ssro = ctx.ssro;
    summary["circuits"] = circuits.size();
    summary["shots"] = shots;
    return simulate_dataset(circuits, truth, shots, seed, ssro, ctx.threads);
}

void run_gst_simulate(Context& ctx, Options& o, RunOutput& out) {
    const GstDesign d = read_design(o);
    GateSetEstimate truth;
    json summary = json::object();
    const Dataset data = simulate_gst_data(ctx, o, d, truth, summary);
    o.finish();
    out.artifacts.push_back({"dataset.csv", dataset_to_csv(data)});
    out.artifacts.push_back({"truth.json", to_json(truth).dump(2) + "\n"});
    const GateSetEstimate target = target_gate_set(d.gate_ids);
    const auto f = gate_fidelities(truth, target);
    json fid = json::object();
    for (std::size_t g = 0; g < f.size(); ++g) fid[truth.labels[g]] = f[g];
    summary["truth_fidelities"] = fid;
    out.summary = summary;
}

void run_gst_fit(Context& ctx, Options& o, RunOutput& out) {
    const GstDesign d = read_design(o);
    GstFitOptions fit_options;
    fit_options.cptp = o.flag("cptp", false);
    fit_options.gauge_optimize = o.flag("gauge_optimize", true);
    fit_options.staged = o.flag("staged", true);
    fit_options.max_iterations = int(o.integer("max_iterations", 200));
    fit_options.threads = ctx.threads;
    const bool with_stderr = o.flag("stderr", true);

    json summary = json::object();
    std::optional<GateSetEstimate> truth;
    Dataset data;
    if (o.has("dataset")) {
        const std::string path = o.text("dataset", "");
        data = dataset_from_csv(ctx.load_text(path));
        summary["dataset"] = path;
    } else {
        GateSetEstimate t;
        data = simulate_gst_data(ctx, o, d, t, summary);
        truth = t;
    }
    o.finish();
    if (data.rows.empty()) throw ConfigError("dataset has no rows");

    const GateSetEstimate target = target_gate_set(d.gate_ids);
    if (data.n_outcomes != target.outcomes()) throw ConfigError("dataset outcome count does not match the design's qubits");
    const GateSetEstimate start = run_lgst(data, d.prep, d.meas, target);
    const GstFit fit = run_long_sequence_fit(data, start, fit_options, &target);

    const auto f = gate_fidelities(fit.estimate, target);
    std::vector<double> ft;
    if (truth) ft = gate_fidelities(*truth, target);
    Csv csv({"gate", "fidelity", "stderr", "truth_fidelity", "coherent_infidelity", "incoherent_infidelity"});
    json gates = json::array();
    for (std::size_t g = 0; g < f.size(); ++g) {
        const std::string& label = fit.estimate.labels[g];
        const double se = with_stderr
                              ? propagated_stderr(fit, [&](const GateSetEstimate& gs) { return gate_fidelities(gs, target)[g]; })
                              : NAN;
        const PTM g0 = target.ptm(label);
        double coherent = NAN, incoherent = NAN;
        try {
            const FidelitySplit split = fidelity_split(error_generator(fit.estimate.ptm(label), g0), g0);
            coherent = split.coherent;
            incoherent = split.incoherent;
        } catch (const NumericalError&) {
            // no principal logarithm; leave the split empty
        }
        csv.row(label, f[g], se, truth ? ft[g] : NAN, coherent, incoherent);
        gates.push_back({{"gate", label},
                         {"fidelity", f[g]},
                         {"stderr", finite_or_null(se)},
                         {"truth_fidelity", truth ? json(ft[g]) : json()},
                         {"coherent_infidelity", finite_or_null(coherent)},
                         {"incoherent_infidelity", finite_or_null(incoherent)}});
    }
    summary["fit"] = to_json(fit);
    summary["fit"].erase("estimate");
    summary["gates"] = gates;
    summary["spam_distance_to_target"] = spam_distance(fit.estimate, target);
    if (fit.estimate.n_qubits == 1 && d.gate_ids == GateList{"Gi", "Gx", "Gy"}) {
        auto weighted = [](const GateSetEstimate& gs) { return occurrence_weighted_fidelity(natives_from_gate_set(gs)); };
        summary["occurrence_weighted_fidelity"] = weighted(fit.estimate);
        if (with_stderr) summary["occurrence_weighted_fidelity_stderr"] = propagated_stderr(fit, weighted);
    }
    out.artifacts.push_back({"estimate.json", to_json(fit.estimate).dump(2) + "\n"});
    out.artifacts.push_back({"lgst.json", to_json(start).dump(2) + "\n"});
    out.artifacts.push_back({"fidelities.csv", csv.str()});
    out.summary = summary;
}

void run_rb_experiment(Context& ctx, Options& o, RunOutput& out) {
    const auto depths_l = o.integers("depths", {5, 10, 20, 50, 100, 200, 500, 750});
    const long k = o.integer("k_per_depth", 30);
    const long shots = o.integer("shots", 500);
    const bool write_sequences = o.flag("write_sequences", false);
    Options n(o.object("natives"), "natives");
    const std::string source = n.text("source", "ideal");
    ChannelMap natives;
    if (source == "ideal") {
        natives = ideal_natives();
    } else if (source == "depolarizing") {
        const double p = n.number("p", 0.999);
        if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("natives.p must lie in [0, 1]");
        for (auto [id, g] : ideal_natives()) natives[id] = compose(depolarizing(1, p), g);
    } else if (source == "model") {
        const json t = n.object("truth");
        const OneQubitNoise noise = t.is_null() ? OneQubitNoise{} : one_qubit_noise_from_json(t);
        n.record("truth", to_json(noise));
        natives = natives_from_gate_set(one_qubit_truth(noise));
    } else if (source == "gate_set") {
        const std::string path = n.text("path", "");
        if (path.empty()) throw ConfigError("natives.path is required for a gate_set source");
        natives = natives_from_gate_set(load_gate_set(ctx, path));
    } else {
        throw ConfigError("natives.source must be ideal, depolarizing, model or gate_set");
    }
    n.finish();
    o.record("natives", n.resolved);
    o.finish();
    if (shots < 0) throw ConfigError("shots must be non-negative");
    std::vector<int> depths;
    for (long dd : depths_l) depths.push_back(int(dd));

    const std::uint64_t seed = ctx.need_seed("RB");
    const auto seqs = generate_rb(depths, int(k), seed);
    const RBResult r = run_rb(seqs, natives, shots, ctx.ssro, seed, ctx.threads);
    out.artifacts.push_back({"rb_curve.csv", rb_curve_csv(r)});
    Csv per({"clifford_depth", "depth_native", "flipped", "survival"});
    for (std::size_t i = 0; i < seqs.size(); ++i)
        per.row(long(seqs[i].clifford_depth), long(seqs[i].native.size()), long(seqs[i].flipped), r.survival[i]);
    out.artifacts.push_back({"rb_survival.csv", per.str()});
    if (write_sequences) {
        json s = json::array();
        for (const auto& q : seqs) s.push_back(to_json(q));
        out.artifacts.push_back({"rb_sequences.json", s.dump() + "\n"});
    }
    out.summary = to_json(r);
    out.summary["occurrence_weighted_fidelity"] = occurrence_weighted_fidelity(natives);
    out.summary["mean_native_length"] = mean_native_length();
}

double half_crossing(const std::vector<SwapPoint>& pts) {
    for (std::size_t i = 1; i < pts.size(); ++i)
        if (pts[i].fidelity <= 0.5 && pts[i - 1].fidelity > 0.5) {
            const double t = (pts[i - 1].fidelity - 0.5) / (pts[i - 1].fidelity - pts[i].fidelity);
            return pts[i - 1].n + t * (pts[i].n - pts[i - 1].n);
        }
    return NAN;
}

void run_swap_curve(Context& ctx, Options& o, RunOutput& out) {
    const long n_max = o.integer("n_max", 40);
    const auto names = o.texts("mitigations", {"none", "echo", "pauli_twirl"});
    SwapCurveOptions base;
    base.realizations = int(o.integer("realizations", 10));
    base.perfect_twirl = o.flag("perfect_twirl", true);
    base.threads = ctx.threads;
    json summary = json::object();
    const ChannelMap ch = read_channels(ctx, o, summary);
    o.finish();
    std::vector<Mitigation> kinds;
    for (const auto& m : names) kinds.push_back(mitigation_from_name(m));
    if (std::find(kinds.begin(), kinds.end(), Mitigation::pauli_twirl) != kinds.end())
        base.seed = ctx.need_seed("Pauli twirling");

    Csv csv({"mitigation", "n", "fidelity", "stderr"});
    json per = json::object();
    for (Mitigation m : kinds) {
        SwapCurveOptions opt = base;
        opt.mitigation = m;
        const auto pts = repeated_swap_curve(ch, int(n_max), opt);
        for (const auto& p : pts) csv.row(mitigation_name(m), long(p.n), p.fidelity, p.stderr_);
        per[mitigation_name(m)] = {{"half_crossing_n", finite_or_null(half_crossing(pts))},
                                   {"final_fidelity", pts.back().fidelity}};
    }
    out.artifacts.push_back({"swap_curve.csv", csv.str()});
    summary["mitigations"] = per;
    out.summary = summary;
}

void run_memory_sim(Context& ctx, Options& o, RunOutput& out) {
    const long blocks = o.integer("blocks_max", 100);
    const long stride = o.integer("stride", 1);
    json summary = json::object();
    const ChannelMap ch = read_channels(ctx, o, summary);
    o.finish();
    const auto pts = memory_curve(ch, int(blocks), int(stride));
    Csv csv({"xy8_blocks", "fidelity", "fidelity_z", "fidelity_xy", "electron_population"});
    for (const auto& p : pts) csv.row(long(p.blocks), p.fidelity, p.fidelity_z, p.fidelity_xy, p.electron_population);
    out.artifacts.push_back({"memory_curve.csv", csv.str()});
    summary["final"] = {{"xy8_blocks", pts.back().blocks},
                        {"fidelity", pts.back().fidelity},
                        {"fidelity_z", pts.back().fidelity_z},
                        {"fidelity_xy", pts.back().fidelity_xy},
                        {"electron_population", pts.back().electron_population}};
    out.summary = summary;
}

const std::vector<Experiment>& experiments() {
    static const std::vector<Experiment> list = {
        {"levels", run_levels},           {"tau-scan", run_tau_scan},         {"gate-sim", run_gate_sim},
        {"detuning-scan", run_detuning_scan}, {"nitrogen-kick", run_nitrogen_kick}, {"gst-design", run_gst_design},
        {"gst-simulate", run_gst_simulate}, {"gst-fit", run_gst_fit},         {"rb", run_rb_experiment},
        {"swap-curve", run_swap_curve},   {"memory-sim", run_memory_sim},
    };
    return list;
}

std::string summary_name(std::string experiment) {
    std::replace(experiment.begin(), experiment.end(), '-', '_');
    return experiment + ".json";
}

}  // namespace

const std::vector<std::string>& experiment_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> n;
        for (const auto& e : experiments()) n.push_back(e.name);
        return n;
    }();
    return names;
}

json read_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("malformed JSON in " + path.string() + ": " + e.what());
    }
}

RunOutput run_experiment(const RunConfig& config) {
    Options top(config.document, "config");
    Context ctx;
    ctx.base_dir = config.base_dir;
    const json system = top.object("system");
    if (!system.is_null()) ctx.params = system_params_from_json(system, SystemParams{});
    ctx.params.validate();
    const json noise = top.object("noise");
    if (!noise.is_null()) ctx.noise = noise_spec_from_json(noise);
    ctx.noise.validate();
    const json ensemble = top.object("ensemble");
    if (!ensemble.is_null()) ctx.ensemble = ensemble_from_json(ensemble);
    ctx.ensemble.validate();
    const json ssro = top.object("ssro");
    if (!ssro.is_null()) ctx.ssro = ssro_from_json(ssro);
    ctx.ssro.validate();
    const json numerics_doc = top.object("numerics");
    Numerics nm = numerics_doc.is_null() ? numerics() : numerics_from_json(numerics_doc, numerics());
    ctx.calibration_doc = top.object("calibration");
    if (!ctx.calibration_doc.is_null()) calibration_from_json(ctx.calibration_doc, CalibrationSet{});  // key check

    if (top.has("seed")) {
        const json s = top.object("seed");
        if (!s.is_number_integer() || s.get<long long>() < 0) throw ConfigError("seed must be a non-negative integer");
        ctx.seed = s.get<std::uint64_t>();
    }
    if (config.seed) ctx.seed = config.seed;
    long threads = top.integer("threads", 0);
    if (config.threads) threads = long(*config.threads);
    if (threads < 0) throw ConfigError("threads must be non-negative");
    ctx.threads = effective_threads(unsigned(threads));
    nm.threads = ctx.threads;
    const ScopedNumerics scoped(nm);
    top.skip("out");

    json experiment_doc = top.object("experiment");
    if (experiment_doc.is_string()) experiment_doc = json{{"name", experiment_doc}};
    if (experiment_doc.is_null()) experiment_doc = json::object();
    if (!experiment_doc.is_object()) throw ConfigError("experiment must be a JSON object or a name");
    std::string name = experiment_doc.value("name", std::string());
    if (!config.experiment.empty()) {
        if (!name.empty() && name != config.experiment)
            throw ConfigError("--experiment " + config.experiment + " does not match the config's experiment " + name);
        name = config.experiment;
    }
    if (name.empty()) throw ConfigError("no experiment given (--experiment or experiment.name)");
    top.finish();

    const auto& list = experiments();
    const auto it = std::find_if(list.begin(), list.end(), [&](const Experiment& e) { return name == e.name; });
    if (it == list.end()) {
        std::string known;
        for (const auto& e : list) known += std::string(known.empty() ? "" : ", ") + e.name;
        throw ConfigError("unknown experiment '" + name + "' (" + known + ")");
    }

    Options options(experiment_doc, "experiment");
    options.skip("name");
    RunOutput out;
    out.experiment = name;
    it->run(ctx, options, out);
    options.finish();

    out.manifest = {{"experiment", {{"name", name}, {"options", options.resolved}}},
                    {"system", to_json(ctx.params)},
                    {"noise", to_json(ctx.noise)},
                    {"ensemble", to_json(ctx.ensemble)},
                    {"ssro", to_json(ctx.ssro)},
                    {"numerics", numerics_to_json(numerics())},
                    {"seed", ctx.seed ? json(*ctx.seed) : json()},
                    {"threads", ctx.threads},
                    {"calibration", ctx.cal ? to_json(*ctx.cal) : json()}};
    out.artifacts.insert(out.artifacts.begin(), {summary_name(name), out.summary.dump(2) + "\n"});
    return out;
}

void write_outputs(const RunOutput& output, const fs::path& dir) {
    fs::create_directories(dir);
    auto write = [&](const std::string& name, const std::string& content) {
        std::ofstream f(dir / name, std::ios::binary);
        if (!f) throw std::runtime_error("cannot write " + (dir / name).string());
        f << content;
    };
    write("manifest.json", output.manifest.dump(2) + "\n");
    for (const auto& a : output.artifacts) write(a.name, a.content);
}

int run_cli(int argc, char** argv) {
    CLI::App app{"spinforge: NV electron-nitrogen gate simulation and characterisation"};
    std::string config_path, experiment, out_dir;
    std::uint64_t seed = 0;
    unsigned threads = 0;
    bool list = false;
    app.add_option("--config", config_path, "JSON run configuration");
    app.add_option("--experiment", experiment, "experiment name (overrides the config)");
    app.add_option("--out", out_dir, "output directory");
    auto* seed_opt = app.add_option("--seed", seed, "RNG seed (overrides the config)");
    auto* threads_opt = app.add_option("--threads", threads, "worker threads, 0 = all cores");
    app.add_flag("--list", list, "list experiments and exit");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }
    if (list) {
        for (const auto& n : experiment_names()) std::cout << n << "\n";
        return 0;
    }

    try {
        if (out_dir.empty()) throw ConfigError("--out is required");
        load_numerics_from_env();
        RunConfig cfg;
        if (!config_path.empty()) {
            cfg.document = read_config(config_path);
            cfg.base_dir = fs::absolute(config_path).parent_path();
        }
        cfg.experiment = experiment;
        if (*seed_opt) cfg.seed = seed;
        if (*threads_opt) cfg.threads = threads;
        if (cfg.document.is_object() && cfg.document.contains("out") && !cfg.document["out"].is_string())
            throw ConfigError("out must be a string");
        const RunOutput result = run_experiment(cfg);
        write_outputs(result, out_dir);
        std::cerr << result.experiment << ": wrote " << result.artifacts.size() + 1 << " files to " << out_dir << "\n";
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const json::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace spinforge
