#include <catch2/catch_amalgamated.hpp>

#include "flawsim/model.hpp"
#include "flawsim/observables.hpp"

#include "oracles.hpp"

using namespace flawsim;

TEST_CASE("partial trace over the bath") {
    SECTION("separable states reduce to pure densities") {
        oracle::TestRng rng(1);
        // |psi>_S (x) |phi>_B with 3 bath qubits
        Eigen::Vector4cd psi;
        psi << Complex{0.6, 0.1}, Complex{0.2, -0.3}, Complex{0.5, 0.0}, Complex{0.1, 0.4};
        psi.normalize();
        StateVector phi = rng.random_state(3);
        StateVector full(5);
        for (std::size_t bb = 0; bb < 8; ++bb)
            for (int s = 0; s < 4; ++s)
                full[bb * 4 + static_cast<std::size_t>(s)] =
                    psi[s] * phi[bb];
        const ReducedDensity rho = partial_trace_bath(full);
        CHECK(purity(rho) == Catch::Approx(1.0).margin(1e-12));
        const ReducedDensity expected = psi * psi.adjoint();
        CHECK((rho - expected).cwiseAbs().maxCoeff() < 1e-12);
    }

    SECTION("maximal system-bath entanglement reduces to I/4") {
        // each system basis state tagged by an orthogonal bath state
        StateVector full(4);
        for (int s = 0; s < 4; ++s)
            full[static_cast<std::size_t>(s) * 4 + static_cast<std::size_t>(s)] = 0.5;
        const ReducedDensity rho = partial_trace_bath(full);
        CHECK((rho - 0.25 * ReducedDensity::Identity()).cwiseAbs().maxCoeff() < 1e-14);
        CHECK(purity(rho) == Catch::Approx(0.25).margin(1e-12));
    }

    SECTION("random states match the dense outer-product oracle") {
        oracle::TestRng rng(2);
        for (int rep = 0; rep < 10; ++rep) {
            const StateVector v = rng.random_state(5);
            const ReducedDensity rho = partial_trace_bath(v);
            CHECK((rho - oracle::dense_partial_trace(v)).cwiseAbs().maxCoeff() < 1e-12);
            CHECK(is_physical_density(rho, 1e-10));
        }
    }

    SECTION("needs at least one bath qubit") {
        CHECK_THROWS_AS(partial_trace_bath(StateVector::basis(2, 0)), std::invalid_argument);
    }
}

TEST_CASE("thermal accumulation") {
    oracle::TestRng rng(3);
    SECTION("single member with weight one is the identity operation") {
        const ReducedDensity rho = partial_trace_bath(rng.random_state(4));
        const ReducedDensity acc = accumulate_thermal({{1.0, rho}});
        CHECK((acc - rho).cwiseAbs().maxCoeff() == 0.0);
    }
    SECTION("two equal-weight orthogonal pure states mix to purity 1/2") {
        Eigen::Vector4cd a = Eigen::Vector4cd::Unit(0), b = Eigen::Vector4cd::Unit(2);
        const ReducedDensity acc =
            accumulate_thermal({{0.5, a * a.adjoint()}, {0.5, b * b.adjoint()}});
        CHECK(purity(acc) == Catch::Approx(0.5).margin(1e-14));
        CHECK(acc.trace().real() == Catch::Approx(1.0).margin(1e-14));
    }
}

TEST_CASE("purity and fidelity values") {
    SECTION("purity of pure, maximally mixed and rank-2 densities") {
        Eigen::Vector4cd psi = Eigen::Vector4cd::Unit(1);
        CHECK(purity(psi * psi.adjoint()) == Catch::Approx(1.0));
        CHECK(purity(0.25 * ReducedDensity::Identity()) == Catch::Approx(0.25));
        ReducedDensity half = ReducedDensity::Zero();
        half(0, 0) = half(1, 1) = 0.5;
        CHECK(purity(half) == Catch::Approx(0.5));
    }
    SECTION("fidelity endpoints") {
        Eigen::Vector4cd a = Eigen::Vector4cd::Unit(0), b = Eigen::Vector4cd::Unit(3);
        const ReducedDensity ra = a * a.adjoint(), rb = b * b.adjoint();
        CHECK(fidelity(ra, ra) == Catch::Approx(1.0));
        CHECK(fidelity(ra, rb) == Catch::Approx(0.0).margin(1e-15));
        CHECK(fidelity(0.25 * ReducedDensity::Identity(), ra) == Catch::Approx(0.25));
    }
    SECTION("purity is invariant under unitary conjugation") {
        oracle::TestRng rng(5);
        const ReducedDensity rho = partial_trace_bath(rng.random_state(5));
        // random unitary from the QR of a random complex matrix
        Eigen::Matrix4cd g;
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) g(i, j) = Complex{rng.normal(), rng.normal()};
        const Eigen::Matrix4cd q = Eigen::HouseholderQR<Eigen::Matrix4cd>(g).householderQ();
        CHECK(purity(q * rho * q.adjoint()) == Catch::Approx(purity(rho)).margin(1e-12));
    }
    SECTION("Cauchy-Schwarz bound on fidelity") {
        oracle::TestRng rng(6);
        for (int rep = 0; rep < 20; ++rep) {
            const ReducedDensity rho = partial_trace_bath(rng.random_state(5));
            Eigen::Vector4cd psi;
            for (int i = 0; i < 4; ++i) psi[i] = Complex{rng.normal(), rng.normal()};
            psi.normalize();
            const ReducedDensity ideal = psi * psi.adjoint();
            CHECK(fidelity(rho, ideal) <=
                  std::sqrt(purity(rho) * purity(ideal)) + 1e-10);
        }
    }
}

TEST_CASE("ideal trajectory under the bare schedule") {
    const ControlSchedule sched = build_cnot_schedule(1.0, 1.0, 0.05);
    const std::vector<double> times = segment_sample_times(sched, 4);

    SECTION("starts at the initial projector and ends at CNOT psi0") {
        for (const LabeledState& st :
             {standard_states()[2] /* |10> */, bell_states()[0] /* phi_plus */}) {
            const auto rhos = ideal_trajectory(sched, st.amplitudes, times);
            const ReducedDensity start = st.amplitudes * st.amplitudes.adjoint();
            CHECK((rhos.front() - start).cwiseAbs().maxCoeff() < 1e-12);
            const Eigen::Vector4cd end_psi = ideal_cnot() * st.amplitudes;
            const ReducedDensity end = end_psi * end_psi.adjoint();
            CHECK((rhos.back() - end).cwiseAbs().maxCoeff() < 1e-10);
        }
    }

    SECTION("|10> maps to |11> at the gate end") {
        const LabeledState st = standard_states()[2];
        REQUIRE(st.label == "10");
        const auto rhos = ideal_trajectory(sched, st.amplitudes, times);
        CHECK(rhos.back()(3, 3).real() == Catch::Approx(1.0).margin(1e-10));
    }

    SECTION("purity is exactly one along the whole path") {
        const auto rhos = ideal_trajectory(sched, bell_states()[2].amplitudes, times);
        for (const auto& rho : rhos) CHECK(purity(rho) == Catch::Approx(1.0).margin(1e-12));
    }
}

TEST_CASE("state sets") {
    for (const auto& st : standard_states()) CHECK(st.amplitudes.norm() == Catch::Approx(1.0));
    for (const auto& st : bell_states()) CHECK(st.amplitudes.norm() == Catch::Approx(1.0));
    // Bell states are orthonormal
    const auto bell = bell_states();
    for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j)
            CHECK(std::abs(bell[static_cast<std::size_t>(i)].amplitudes.dot(
                      bell[static_cast<std::size_t>(j)].amplitudes)) < 1e-14);
}

TEST_CASE("averaging over a state set") {
    MetricsSeries s;
    s.times = {0.0, 1.0};
    for (int k = 0; k < 4; ++k) {
        s.labels[static_cast<std::size_t>(k)] = std::to_string(k);
        s.purity[static_cast<std::size_t>(k)] = {1.0, 0.5 + 0.1 * k};
        s.fidelity[static_cast<std::size_t>(k)] = {1.0, 0.2 * k};
    }
    const MetricsSeries avg = average_over_set(s);
    CHECK(avg.avg_purity[0] == Catch::Approx(1.0));
    CHECK(avg.avg_purity[1] == Catch::Approx((0.5 + 0.6 + 0.7 + 0.8) / 4.0));
    CHECK(avg.avg_fidelity[1] == Catch::Approx((0.0 + 0.2 + 0.4 + 0.6) / 4.0));
    // the mean lies within the member envelope
    CHECK(avg.avg_purity[1] >= 0.5);
    CHECK(avg.avg_purity[1] <= 0.8);

    SECTION("grid mismatch is rejected") {
        MetricsSeries bad = s;
        bad.purity[2].pop_back();
        CHECK_THROWS_AS(average_over_set(bad), std::invalid_argument);
    }
}
