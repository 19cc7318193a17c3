#include "spinforge/channels.hpp"
#include "spinforge/cli.hpp"
#include "spinforge/errors.hpp"
#include "spinforge/experiments.hpp"
#include "spinforge/gates.hpp"
#include "spinforge/gst.hpp"
#include "spinforge/noise.hpp"
#include "spinforge/rb.hpp"
#include "spinforge/system.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace spinforge;
using nlohmann::json;

namespace {

// Dicts cross the boundary as JSON text.
json to_cpp(const py::object& obj) {
    if (obj.is_none()) return json();
    const std::string text = py::module_::import("json").attr("dumps")(obj).cast<std::string>();
    return json::parse(text);
}

py::object to_py(const json& doc) { return py::module_::import("json").attr("loads")(doc.dump()); }

SystemParams params_of(const py::object& obj) {
    const json doc = to_cpp(obj);
    SystemParams p = doc.is_null() ? SystemParams{} : system_params_from_json(doc);
    p.validate();
    return p;
}

CalibrationSet calibration_of(const SystemParams& p, const py::object& overrides) {
    const json doc = to_cpp(overrides);
    CalibrationSet c = default_calibration(p);
    if (!doc.is_null()) c = calibration_from_json(doc, c);
    c.validate();
    return c;
}

PTM ptm_of(const RMat& m) {
    PTM p;
    p.matrix = m;
    if (m.rows() == 4 && m.cols() == 4) p.n_qubits = 1;
    else if (m.rows() == 16 && m.cols() == 16) p.n_qubits = 2;
    else throw ConfigError("a PTM must be 4x4 or 16x16");
    return p;
}

ChannelMap channels_of(const std::map<std::string, RMat>& m) {
    ChannelMap out;
    for (const auto& [k, v] : m) out[k] = ptm_of(v);
    return out;
}

py::dict error_generator_dict(const ErrorGenerator& e, const PTM& target) {
    const FidelitySplit s = fidelity_split(e, target);
    py::dict d;
    d["labels"] = e.labels;
    d["hamiltonian"] = e.h_coeffs;
    d["stochastic"] = e.s_coeffs;
    d["generator"] = e.L;
    d["coherent_infidelity"] = s.coherent;
    d["incoherent_infidelity"] = s.incoherent;
    d["total_infidelity"] = s.total;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "NV electron-nitrogen two-qubit gate simulation and characterisation";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

    // system
    m.def("default_params", [] { return to_py(to_json(SystemParams{})); });
    m.def(
        "level_frequencies",
        [](const py::object& params, const std::string& method) {
            LevelMethod lm = LevelMethod::exact;
            if (method == "perturbative") lm = LevelMethod::perturbative;
            else if (method != "exact") throw ConfigError("method must be exact or perturbative");
            return to_py(to_json(level_frequencies(params_of(params), lm)));
        },
        py::arg("params") = py::none(), py::arg("method") = "exact");
    m.def("measured_frequencies", [] { return to_py(to_json(measured_frequencies())); });
    m.def(
        "fit_params",
        [](const std::array<double, 6>& freqs, double gamma_e, double gamma_n) {
            return to_py(to_json(fit_params_from_frequencies(LevelFrequencies::from_array(freqs), gamma_e, gamma_n)));
        },
        py::arg("frequencies"), py::arg("gamma_e") = SystemParams{}.gamma_e, py::arg("gamma_n") = SystemParams{}.gamma_n,
        "Frequencies in the order wN_m1_at_es_m1, wN_p1_at_es_m1, wN_p1_at_es_0, wN_m1_at_es_0, wE_at_nI_m1, wE_at_nI_0.");
    m.def("hamiltonian", [](const py::object& params) { return build_hamiltonian(params_of(params)); },
          py::arg("params") = py::none());

    // gates
    m.def(
        "solve_tau",
        [](const py::object& params, double tau_min, double tau_max, double grid) {
            const SystemParams p = params_of(params);
            const auto windows = carbon_windows(p.Bz, tau_min, tau_max, 10e-9);
            json out = json::array();
            for (const auto& s : solve_tau(nitrogen_frequency_ms0(p), nitrogen_frequency_msm1(p), tau_min, tau_max, grid, windows))
                out.push_back(to_json(s));
            return to_py(out);
        },
        py::arg("params") = py::none(), py::arg("tau_min") = 7.0e-6, py::arg("tau_max") = 7.6e-6, py::arg("grid") = 4e-9);
    m.def(
        "default_calibration",
        [](const py::object& params) { return to_py(to_json(default_calibration(params_of(params)))); },
        py::arg("params") = py::none());
    m.def(
        "simulate_gate",
        [](const std::string& gate, const py::object& params, const py::object& calibration, double detuning_e,
           double detuning_n) {
            const SystemParams p = params_of(params);
            const CalibrationSet cal = calibration_of(p, calibration);
            NoiseSpec noise;
            noise.detuning_e = detuning_e;
            noise.detuning_n = detuning_n;
            GateSimulation sim;
            {
                py::gil_scoped_release release;
                sim = simulate_gate(p, cal, gate_from_name(gate), noise);
            }
            py::dict d;
            d["gate"] = gate_name(sim.id);
            d["duration"] = sim.duration;
            d["fidelity"] = sim.fidelity;
            d["leakage"] = sim.channel.leakage.worst_case;
            d["ptm"] = sim.channel.ptm.matrix;
            d["target"] = sim.target.matrix;
            return d;
        },
        py::arg("gate"), py::arg("params") = py::none(), py::arg("calibration") = py::none(), py::arg("detuning_e") = 0.0,
        py::arg("detuning_n") = 0.0);

    // channels
    m.def("ptm_of_unitary", [](const CMat& u) { return ptm_of_unitary(u).matrix; });
    m.def("depolarizing", [](int n, double p) { return depolarizing(n, p).matrix; }, py::arg("n_qubits"), py::arg("p"));
    m.def("avg_gate_fidelity", [](const RMat& a, const RMat& b) { return avg_gate_fidelity(ptm_of(a), ptm_of(b)); });
    m.def("process_fidelity", [](const RMat& a, const RMat& b) { return process_fidelity(ptm_of(a), ptm_of(b)); });
    m.def("error_generator", [](const RMat& g, const RMat& target) {
        const PTM t = ptm_of(target);
        return error_generator_dict(error_generator(ptm_of(g), t), t);
    });

    // readout
    m.def(
        "ssro_correct",
        [](double m0, long shots, double F0, double F1) {
            const SSROCorrection c = ssro_correct(m0, shots, SSROModel{F0, F1});
            return py::make_tuple(c.p0, c.stderr_);
        },
        py::arg("m0"), py::arg("shots"), py::arg("F0"), py::arg("F1"));

    // RB
    m.def("mean_native_length", &mean_native_length);
    m.def("ideal_natives", [] {
        std::map<std::string, RMat> out;
        for (const auto& [k, v] : ideal_natives()) out[k] = v.matrix;
        return out;
    });
    m.def("occurrence_weighted_fidelity",
          [](const std::map<std::string, RMat>& natives) { return occurrence_weighted_fidelity(channels_of(natives)); });
    m.def(
        "run_rb",
        [](const std::map<std::string, RMat>& natives, const std::vector<int>& depths, int k, long shots, std::uint64_t seed,
           double F0, double F1) {
            const ChannelMap ch = channels_of(natives);
            RBResult r;
            {
                py::gil_scoped_release release;
                r = run_rb(generate_rb(depths, k, seed), ch, shots, SSROModel{F0, F1}, seed);
            }
            return to_py(to_json(r));
        },
        py::arg("natives"), py::arg("depths") = std::vector<int>{5, 10, 20, 50, 100, 200, 500, 750}, py::arg("k") = 30,
        py::arg("shots") = 500, py::arg("seed") = 0, py::arg("F0") = 1.0, py::arg("F1") = 1.0);

    // SWAP
    m.def("swap_channel", [] { return swap_channel(ideal_two_qubit_channels()).matrix; });
    m.def(
        "swap_curve",
        [](double swap_fidelity, const std::string& mitigation, int n_max, int realizations, std::uint64_t seed) {
            const ChannelMap ideal = ideal_two_qubit_channels();
            const ChannelMap ch = swap_fidelity < 1.0 ? with_crx_z_error(ideal, crx_z_error_for_swap_fidelity(ideal, swap_fidelity)) : ideal;
            SwapCurveOptions o;
            o.mitigation = mitigation_from_name(mitigation);
            o.realizations = realizations;
            o.seed = seed;
            std::vector<std::pair<int, double>> out;
            for (const auto& p : repeated_swap_curve(ch, n_max, o)) out.emplace_back(p.n, p.fidelity);
            return out;
        },
        py::arg("swap_fidelity") = 0.987, py::arg("mitigation") = "none", py::arg("n_max") = 40, py::arg("realizations") = 10,
        py::arg("seed") = 0);

    // GST
    m.def("target_gate_set", [](const std::vector<std::string>& labels) { return to_py(to_json(target_gate_set(labels))); },
          py::arg("labels") = std::vector<std::string>{"Gi", "Gx", "Gy"});
    m.def(
        "gst_round_trip",
        [](const py::object& truth, int max_depth, long shots, std::uint64_t seed) {
            const GstDesign d = default_design_1q();
            const GateSetEstimate target = target_gate_set(d.gate_ids);
            const json tdoc = to_cpp(truth);
            const GateSetEstimate t = tdoc.is_null() ? target : one_qubit_truth(one_qubit_noise_from_json(tdoc));
            GstFit fit;
            {
                py::gil_scoped_release release;
                const Dataset data = simulate_dataset(full_design(d, max_depth), t, shots, seed);
                fit = run_long_sequence_fit(data, run_lgst(data, d.prep, d.meas, target), {}, &target);
            }
            json out = to_json(fit);
            out["fidelities"] = gate_fidelities(fit.estimate, target);
            out["truth_fidelities"] = gate_fidelities(t, target);
            return to_py(out);
        },
        py::arg("truth") = py::none(), py::arg("max_depth") = 8, py::arg("shots") = 1000, py::arg("seed") = 0,
        "Simulate the default single-qubit design from a truth model and fit it.");

    // experiments, as the command line runs them
    m.def("experiment_names", &experiment_names);
    m.def(
        "run_experiment",
        [](const py::object& config, const std::string& experiment, std::optional<std::uint64_t> seed,
           std::optional<unsigned> threads, const std::optional<std::filesystem::path>& out) {
            RunConfig c;
            const json doc = to_cpp(config);
            if (!doc.is_null()) c.document = doc;
            c.experiment = experiment;
            c.seed = seed;
            c.threads = threads;
            RunOutput r;
            {
                py::gil_scoped_release release;
                r = run_experiment(c);
                if (out) write_outputs(r, *out);
            }
            py::dict artifacts;
            for (const auto& a : r.artifacts) artifacts[py::str(a.name)] = a.content;
            py::dict d;
            d["manifest"] = to_py(r.manifest);
            d["summary"] = to_py(r.summary);
            d["artifacts"] = artifacts;
            return d;
        },
        py::arg("config") = py::none(), py::arg("experiment") = "", py::arg("seed") = py::none(),
        py::arg("threads") = py::none(), py::arg("out") = py::none());
}
