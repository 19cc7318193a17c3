#pragma once

#include "spinforge/spinalg.hpp"

#include <json.hpp>

#include <array>

namespace spinforge {

// Coefficients exactly as they enter the Hamiltonian (signed, Hz and G).
// The defaults are the measured values for the device studied, with the
// hyperfine tensor carrying the physical negative sign of 14N.
struct SystemParams {
    double D = 2873.668e6;
    double Q = -4.949156e6;
    double gamma_e = 2.8024e6;   // Hz/G
    double gamma_n = -307.7;     // Hz/G
    double Bz = 62.291;          // G
    double Bperp = 0.0;          // G
    double Axx = -2.679e6;
    double Ayy = -2.679e6;
    double Azz = -2.188218e6;

    double a_perp() const { return 0.5 * (Axx + Ayy); }
    // Throws ConfigError when an invariant is violated.
    void validate() const;
};

// Transition frequencies, all positive, in Hz.
struct LevelFrequencies {
    double wN_m1_at_es_m1 = 0;  // nitrogen mI 0<->-1 with ms = -1
    double wN_p1_at_es_m1 = 0;  // nitrogen mI 0<->+1 with ms = -1
    double wN_p1_at_es_0 = 0;   // nitrogen mI 0<->+1 with ms = 0
    double wN_m1_at_es_0 = 0;   // nitrogen mI 0<->-1 with ms = 0
    double wE_at_nI_m1 = 0;     // electron line shifted up by |Azz|
    double wE_at_nI_0 = 0;      // electron ms 0<->-1 with mI = 0

    std::array<double, 6> as_array() const;
    static LevelFrequencies from_array(const std::array<double, 6>& values);
};

// Frequencies measured on the device, used as golden values.
LevelFrequencies measured_frequencies();

enum class LevelMethod { exact, perturbative };

// Product-basis layout |ms> (x) |mI> with ms, mI in {+1, 0, -1}.
struct QubitEncoding {
    static constexpr int index(int ms, int mI) { return 3 * (1 - ms) + (1 - mI); }
    static constexpr int ms_of(int k) { return 1 - k / 3; }
    static constexpr int mI_of(int k) { return 1 - k % 3; }
    // |e n> ordering 00, 01, 10, 11 with |0>_e = ms 0, |1>_e = ms -1, |0>_n = mI 0, |1>_n = mI -1.
    std::array<int, 4> computational = {index(0, 0), index(0, -1), index(-1, 0), index(-1, -1)};
};

CMat build_hamiltonian(const SystemParams& params);

// Eigenbasis of the static Hamiltonian with columns reordered so that column k
// is the level adiabatically connected to product state k, phases chosen to
// make the diagonal real and positive.
struct DressedBasis {
    RVec energies;  // Hz, indexed like the product basis
    CMat vectors;   // product-basis components in columns
    double min_overlap = 1.0;
};

DressedBasis dressed_basis(const SystemParams& params);

LevelFrequencies level_frequencies(const SystemParams& params, LevelMethod method);

// Inverts the first-order closed forms for D, Bz, Q, Azz and A_perp.
// The returned hyperfine components share the sign of Azz; Bperp is zero.
SystemParams fit_params_from_frequencies(const LevelFrequencies& freqs, double gamma_e, double gamma_n);

// Mismatch of the electron mI=0 line against the first-order forward model
// evaluated at the fitted parameters (the one equation the inversion does not use).
double electron_line_residual(const LevelFrequencies& freqs, const SystemParams& fitted);

nlohmann::json to_json(const SystemParams& params);
SystemParams system_params_from_json(const nlohmann::json& doc, SystemParams base = {});
nlohmann::json to_json(const LevelFrequencies& freqs);

}  // namespace spinforge
