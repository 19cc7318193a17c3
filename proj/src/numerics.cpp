#include "spinforge/numerics.hpp"

#include "spinforge/errors.hpp"

#include <cstdlib>
#include <fstream>
#include <thread>

namespace spinforge {

namespace {
Numerics& storage() {
    static Numerics value;
    return value;
}
}  // namespace

const Numerics& numerics() { return storage(); }

void set_numerics(const Numerics& value) { storage() = value; }

Numerics numerics_from_json(const nlohmann::json& doc, Numerics base) {
    if (!doc.is_object()) throw ConfigError("numerics block must be a JSON object");
    auto take = [&](const char* key, double& field) {
        if (doc.contains(key)) {
            if (!doc[key].is_number()) throw ConfigError(std::string("numerics.") + key + " must be a number");
            field = doc[key].get<double>();
        }
    };
    take("hermitian_tol", base.hermitian_tol);
    take("unitary_tol", base.unitary_tol);
    take("orthonormal_tol", base.orthonormal_tol);
    take("label_overlap_min", base.label_overlap_min);
    take("leakage_max", base.leakage_max);
    take("cp_tol", base.cp_tol);
    take("tp_tol", base.tp_tol);
    take("probability_tol", base.probability_tol);
    take("dt_rotating", base.dt_rotating);
    take("dt_rf", base.dt_rf);
    take("dt_lab", base.dt_lab);
    take("dissipation_chunk", base.dissipation_chunk);
    take("dissipation_chunk_rf", base.dissipation_chunk_rf);
    take("convergence_tol", base.convergence_tol);
    take("split_warning_fraction", base.split_warning_fraction);
    if (doc.contains("threads")) {
        if (!doc["threads"].is_number_unsigned()) throw ConfigError("numerics.threads must be a non-negative integer");
        base.threads = doc["threads"].get<unsigned>();
    }
    if (base.dt_rotating <= 0 || base.dt_rf <= 0 || base.dt_lab <= 0)
        throw ConfigError("numerics time steps must be positive");
    return base;
}

nlohmann::json numerics_to_json(const Numerics& v) {
    return {{"hermitian_tol", v.hermitian_tol},
            {"unitary_tol", v.unitary_tol},
            {"orthonormal_tol", v.orthonormal_tol},
            {"label_overlap_min", v.label_overlap_min},
            {"leakage_max", v.leakage_max},
            {"cp_tol", v.cp_tol},
            {"tp_tol", v.tp_tol},
            {"probability_tol", v.probability_tol},
            {"dt_rotating", v.dt_rotating},
            {"dt_rf", v.dt_rf},
            {"dt_lab", v.dt_lab},
            {"dissipation_chunk", v.dissipation_chunk},
            {"dissipation_chunk_rf", v.dissipation_chunk_rf},
            {"convergence_tol", v.convergence_tol},
            {"split_warning_fraction", v.split_warning_fraction},
            {"threads", v.threads}};
}

void load_numerics_from_env() {
    const char* path = std::getenv("SPINFORGE_NUMERICS");
    if (path == nullptr || *path == '\0') return;
    std::ifstream in(path);
    if (!in) throw ConfigError(std::string("cannot open SPINFORGE_NUMERICS file ") + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed SPINFORGE_NUMERICS file: ") + e.what());
    }
    set_numerics(numerics_from_json(doc, numerics()));
}

unsigned effective_threads(unsigned requested) {
    unsigned n = requested != 0 ? requested : numerics().threads;
    if (n == 0) n = std::thread::hardware_concurrency();
    return n == 0 ? 1 : n;
}

}  // namespace spinforge
