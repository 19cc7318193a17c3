#include "spinforge/rb.hpp"

#include "spinforge/errors.hpp"
#include "spinforge/gates.hpp"

#include <doctest.h>

#include <cmath>

using namespace spinforge;

namespace {

CMat rotation(const CMat& axis, double angle) {
    return std::cos(angle / 2) * CMat::Identity(2, 2) - Complex(0, std::sin(angle / 2)) * axis;
}

ChannelMap depolarized(const ChannelMap& m, double scale) {
    ChannelMap out;
    for (const auto& [id, g] : m) out[id] = compose(depolarizing(g.n_qubits, scale), g);
    return out;
}

const SSROModel perfect{1.0, 1.0};

}  // namespace

TEST_CASE("Clifford table") {
    const auto& table = clifford_table();
    REQUIRE(table.size() == 24);
    CHECK(table[0].native == GateList{"Gi"});
    for (const auto& e : table) {
        CMat u = CMat::Identity(2, 2);
        for (const auto& g : e.native) {
            if (g == "Gx") u = rotation(pauli::x(), M_PI / 2) * u;
            if (g == "Gy") u = rotation(pauli::y(), M_PI / 2) * u;
        }
        CHECK(std::abs(std::abs((u.adjoint() * e.unitary).trace()) - 2.0) < 1e-10);
        CHECK(clifford_index(e.unitary) == e.index);
        CHECK(clifford_compose(clifford_inverse(e.index), e.index) == 0);
    }
    // closure and a Latin square
    for (int a = 0; a < 24; ++a) {
        std::vector<int> seen(24, 0);
        for (int b = 0; b < 24; ++b) ++seen[std::size_t(clifford_compose(a, b))];
        for (int s : seen) CHECK(s == 1);
    }
    // word lengths 1 (Gi), 1x2, 2x4, 3x7, 4x7, 5x3 -> 75 gates
    CHECK(mean_native_length() == doctest::Approx(3.125).epsilon(1e-15));
    const auto occ = native_occurrence();
    const double occ_total = occ.at("Gi") + occ.at("Gx") + occ.at("Gy");
    CHECK(occ_total == doctest::Approx(1.0));
    CHECK(occ.at("Gi") == doctest::Approx(1.0 / 75.0));
    CHECK_THROWS_AS(clifford_index(rotation(pauli::x(), 0.3)), ConfigError);
}

TEST_CASE("RB sequence generation") {
    const std::vector<int> depths{5, 10, 20, 50, 100, 200, 500, 750};
    const auto seqs = generate_rb(depths, 30, 11);
    CHECK(seqs.size() == 240);
    const auto again = generate_rb(depths, 30, 11);
    CHECK(again[17].cliffords == seqs[17].cliffords);
    CHECK(generate_rb(depths, 30, 12)[17].cliffords != seqs[17].cliffords);

    const auto ideal = ideal_natives();
    for (std::size_t i = 0; i < seqs.size(); i += 7) {
        const auto& s = seqs[i];
        CHECK(int(s.cliffords.size()) == s.clifford_depth);
        CHECK(s.flipped == ((i % 30) % 2 == 1));
        RMat total = RMat::Identity(4, 4);
        for (const auto& g : s.native) total = ideal.at(g).matrix * total;
        // Z expectation of the final state: +1 or -1
        CHECK(total(3, 3) == doctest::Approx(s.flipped ? -1.0 : 1.0).epsilon(1e-9));
    }

    const auto one = generate_rb({1}, 4, 3);
    for (const auto& s : one) {
        const int x_pi = clifford_index(rotation(pauli::x(), M_PI));
        const int expected = s.flipped ? clifford_compose(x_pi, clifford_inverse(s.cliffords[0])) : clifford_inverse(s.cliffords[0]);
        CHECK(s.inversion == expected);
    }
    CHECK_THROWS_AS(generate_rb({}, 3, 0), ConfigError);
    CHECK_THROWS_AS(generate_rb({0}, 3, 0), ConfigError);
    CHECK_THROWS_AS(generate_rb({3}, 0, 0), ConfigError);
}

TEST_CASE("RB on ideal and depolarised natives") {
    const auto seqs = generate_rb({1, 5, 10, 20, 50, 100}, 10, 1);
    const RBResult ideal = run_rb(seqs, ideal_natives(), 0, perfect, 0);
    CHECK(ideal.p == doctest::Approx(1.0).epsilon(1e-9));
    for (double s : ideal.survival) CHECK(s == doctest::Approx(1.0).epsilon(1e-9));

    const double p0 = 0.995;
    const RBResult exact = run_rb(seqs, depolarized(ideal_natives(), p0), 0, perfect, 0);
    CHECK(exact.p == doctest::Approx(p0).epsilon(1e-9));
    CHECK(exact.F_avg == doctest::Approx(1.0 - (1.0 - p0) / 2.0).epsilon(1e-9));

    const SSROModel readout{0.93, 0.99};
    const RBResult sampled = run_rb(seqs, depolarized(ideal_natives(), p0), 2000, readout, 5);
    CHECK(std::abs(sampled.p - p0) < 3.0 * sampled.p_stderr);
    CHECK(sampled.p_stderr > 0.0);
    CHECK(sampled.curve.size() == 6);
    CHECK(sampled.curve.front().depth_native < sampled.curve.back().depth_native);

    // thread count does not change sampled data
    const RBResult threaded = run_rb(seqs, depolarized(ideal_natives(), p0), 2000, readout, 5, 4);
    CHECK(threaded.survival == sampled.survival);

    ChannelMap missing = ideal_natives();
    missing.erase("Gy");
    CHECK_THROWS_AS(run_rb(seqs, missing, 0, perfect, 0), ConfigError);
    CHECK(rb_curve_csv(sampled).rfind("depth_native,mean_survival,stderr\n", 0) == 0);
}

TEST_CASE("RB fidelity matches the occurrence-weighted native fidelity") {
    ChannelMap natives = ideal_natives();
    natives["Gi"] = compose(depolarizing(1, 0.9990), natives["Gi"]);
    natives["Gx"] = compose(depolarizing(1, 0.9996), natives["Gx"]);
    natives["Gy"] = compose(depolarizing(1, 0.9980), natives["Gy"]);
    const auto seqs = generate_rb({1, 10, 50, 100, 200, 400}, 20, 2);
    const RBResult r = run_rb(seqs, natives, 0, perfect, 0);
    CHECK(r.F_avg == doctest::Approx(occurrence_weighted_fidelity(natives)).epsilon(2e-5));

    // the same channels read through a gate set
    GateSetEstimate gs = target_gate_set({"Gi", "Gx", "Gy"});
    for (const auto& id : gs.labels) gs.gate(id) = natives.at(id).matrix;
    CHECK(occurrence_weighted_fidelity(natives_from_gate_set(gs)) ==
          doctest::Approx(occurrence_weighted_fidelity(natives)).epsilon(1e-14));
}

TEST_CASE("RB decay is gauge invariant") {
    ChannelMap natives = ideal_natives();
    natives["Gx"] = compose(ptm_of_unitary(rotation(pauli::z(), 0.01)), compose(depolarizing(1, 0.999), natives["Gx"]));
    natives["Gy"] = compose(depolarizing(1, 0.998), natives["Gy"]);
    const PTM v = ptm_of_unitary(rotation(pauli::y(), 0.4) * rotation(pauli::z(), 0.7));
    PTM v_inv = v;
    v_inv.matrix = v.matrix.transpose();
    ChannelMap moved;
    for (const auto& [id, g] : natives) moved[id] = compose(v, compose(g, v_inv));
    const auto seqs = generate_rb({20, 50, 100, 200, 400}, 20, 3);
    const double p = run_rb(seqs, natives, 0, perfect, 0).p;
    const double q = run_rb(seqs, moved, 0, perfect, 0).p;
    CHECK(std::abs(p - q) < 2e-5);
    CHECK(p < 0.9995);
}

TEST_CASE("repeated SWAP") {
    const ChannelMap ideal = ideal_two_qubit_channels();
    const PTM swap = swap_channel(ideal);
    // ideal compiled SWAP is the exchange
    CMat exchange = CMat::Zero(4, 4);
    exchange(0, 0) = exchange(1, 2) = exchange(2, 1) = exchange(3, 3) = 1.0;
    CHECK(avg_gate_fidelity(swap, ptm_of_unitary(exchange)) == doctest::Approx(1.0).epsilon(1e-12));

    for (Mitigation m : {Mitigation::none, Mitigation::echo, Mitigation::pauli_twirl}) {
        SwapCurveOptions o;
        o.mitigation = m;
        o.realizations = 3;
        for (const auto& pt : repeated_swap_curve(ideal, 20, o)) CHECK(pt.fidelity == doctest::Approx(1.0).epsilon(1e-10));
    }
    CHECK_THROWS_AS(repeated_swap_curve(ideal, 7, {}), ConfigError);
    CHECK(mitigation_from_name("echo") == Mitigation::echo);
    CHECK_THROWS_AS(mitigation_from_name("dd"), ConfigError);

    // a depolarising error commutes with every Pauli frame
    ChannelMap noisy = ideal;
    noisy["CRx"] = compose(depolarizing(2, 0.99), noisy["CRx"]);
    SwapCurveOptions twirl;
    twirl.mitigation = Mitigation::pauli_twirl;
    twirl.realizations = 5;
    twirl.seed = 4;
    const auto bare = repeated_swap_curve(noisy, 20, {});
    const auto twirled = repeated_swap_curve(noisy, 20, twirl);
    for (std::size_t i = 0; i < bare.size(); ++i) {
        CHECK(twirled[i].fidelity == doctest::Approx(bare[i].fidelity).epsilon(1e-10));
        CHECK(twirled[i].stderr_ < 1e-10);
    }
    CHECK(bare.back().fidelity < bare[1].fidelity);
}

TEST_CASE("coherent CRx error: echo and twirl") {
    const ChannelMap ideal = ideal_two_qubit_channels();
    const double angle = crx_z_error_for_swap_fidelity(ideal, 0.987);
    const ChannelMap noisy = with_crx_z_error(ideal, angle);
    CHECK(avg_gate_fidelity(swap_channel(noisy), swap_channel(ideal)) == doctest::Approx(0.987).epsilon(1e-10));
    CHECK_THROWS_AS(crx_z_error_for_swap_fidelity(ideal, 0.1), ConfigError);

    SwapCurveOptions o;
    o.seed = 9;
    const auto none = repeated_swap_curve(noisy, 40, o);
    o.mitigation = Mitigation::echo;
    const auto echo = repeated_swap_curve(noisy, 40, o);
    o.mitigation = Mitigation::pauli_twirl;
    o.realizations = 10;
    const auto twirl = repeated_swap_curve(noisy, 40, o);
    for (std::size_t i = 0; i < none.size(); ++i) {
        if (none[i].n >= 10) {
            CHECK(echo[i].fidelity > none[i].fidelity);
            CHECK(twirl[i].fidelity > none[i].fidelity);
        }
    }
}
