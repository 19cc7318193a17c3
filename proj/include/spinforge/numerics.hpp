#pragma once

#include <json.hpp>

namespace spinforge {

// Every tolerance the library uses, in one place. Defaults are documented
// in README.md; a JSON file named by SPINFORGE_NUMERICS may override them.
struct Numerics {
    double hermitian_tol = 1e-10;
    double unitary_tol = 1e-10;
    double orthonormal_tol = 1e-10;
    double label_overlap_min = 0.5;
    double leakage_max = 0.05;
    double cp_tol = 1e-9;
    double tp_tol = 1e-9;
    double probability_tol = 1e-9;
    double dt_rotating = 1e-9;   // s
    double dt_rf = 20e-9;        // s, slice for weak RF pulses
    double dt_lab = 5e-12;       // s
    double dissipation_chunk = 10e-9;     // s, Strang-split interval for MW pulses
    double dissipation_chunk_rf = 200e-9; // s, same for RF pulses
    double convergence_tol = 1e-6;
    double split_warning_fraction = 0.1;
    unsigned threads = 0;        // 0: hardware concurrency
};

const Numerics& numerics();
void set_numerics(const Numerics& value);

Numerics numerics_from_json(const nlohmann::json& doc, Numerics base = {});
nlohmann::json numerics_to_json(const Numerics& value);

// Reads SPINFORGE_NUMERICS if set and installs the result. Throws
// ConfigError on unreadable or malformed files.
void load_numerics_from_env();

unsigned effective_threads(unsigned requested);

// Installs `value` for its lifetime, then puts the previous settings back.
class ScopedNumerics {
public:
    explicit ScopedNumerics(const Numerics& value) : saved_(numerics()) { set_numerics(value); }
    ~ScopedNumerics() { set_numerics(saved_); }
    ScopedNumerics(const ScopedNumerics&) = delete;
    ScopedNumerics& operator=(const ScopedNumerics&) = delete;

private:
    Numerics saved_;
};

}  // namespace spinforge
