#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "flawsim/model.hpp"
#include "flawsim/pauli.hpp"
#include "flawsim/propagate.hpp"

namespace flawsim {

/// 4x4 system density matrix over the two system qubits (bits 0 and 1).
using ReducedDensity = Eigen::Matrix4cd;

/// Hermitian, unit trace, positive semidefinite within tol.
inline bool is_physical_density(const ReducedDensity& rho, double tol = 1e-10) {
    if ((rho - rho.adjoint()).cwiseAbs().maxCoeff() > tol) return false;
    if (std::abs(rho.trace().real() - 1.0) > tol || std::abs(rho.trace().imag()) > tol) return false;
    Eigen::SelfAdjointEigenSolver<ReducedDensity> s(rho);
    return s.eigenvalues().minCoeff() >= -tol;
}

/// rho[s, s'] = sum_B v[s + 4B] conj(v[s' + 4B]): trace over bath bits 2..n-1.
inline ReducedDensity partial_trace_bath(const StateVector& v) {
    if (v.nqubits() < 3)
        throw std::invalid_argument("partial trace needs at least one bath qubit");
    const std::size_t nbathdim = v.dim() / 4;
    ReducedDensity rho = ReducedDensity::Zero();
    for (std::size_t bb = 0; bb < nbathdim; ++bb) {
        const std::size_t base = bb * 4;
        for (int s = 0; s < 4; ++s)
            for (int s2 = 0; s2 < 4; ++s2)
                rho(s, s2) += v[base + static_cast<std::size_t>(s)] *
                              std::conj(v[base + static_cast<std::size_t>(s2)]);
    }
    return rho;
}

/// Weighted sum of per-member reduced densities; trace equals the weight sum.
inline ReducedDensity accumulate_thermal(
    const std::vector<std::pair<double, ReducedDensity>>& contributions) {
    ReducedDensity rho = ReducedDensity::Zero();
    for (const auto& [w, r] : contributions) rho += w * r;
    return rho;
}

/// Tr(rho^2); 1 for pure states, 0.25 for the two-qubit maximally mixed state.
inline double purity(const ReducedDensity& rho) {
    return (rho * rho).trace().real();
}

/// Tr(rho rho_ideal) against a pure ideal state density.
inline double fidelity(const ReducedDensity& rho, const ReducedDensity& ideal) {
    return (rho * ideal).trace().real();
}

/// The two initial-state sets of the gate study.
enum class StateSet { Standard, Bell };

inline const char* state_set_name(StateSet s) {
    return s == StateSet::Standard ? "standard" : "bell";
}

struct LabeledState {
    std::string label;
    Eigen::Vector4cd amplitudes;  // little-endian index: bit0 = qubit 1
};

inline std::array<LabeledState, 4> standard_states() {
    std::array<LabeledState, 4> out;
    // labels |q1 q2>; index = bit(q1) + 2 bit(q2)
    const char* labels[4] = {"00", "01", "10", "11"};
    const int index[4] = {0, 2, 1, 3};
    for (int k = 0; k < 4; ++k) {
        out[static_cast<std::size_t>(k)].label = labels[k];
        out[static_cast<std::size_t>(k)].amplitudes = Eigen::Vector4cd::Zero();
        out[static_cast<std::size_t>(k)].amplitudes[index[k]] = 1.0;
    }
    return out;
}

inline std::array<LabeledState, 4> bell_states() {
    const double s = 1.0 / std::sqrt(2.0);
    std::array<LabeledState, 4> out;
    out[0].label = "phi_plus";   // (|00> + |11>)/sqrt2
    out[0].amplitudes << s, 0.0, 0.0, s;
    out[1].label = "phi_minus";  // (|00> - |11>)/sqrt2
    out[1].amplitudes << s, 0.0, 0.0, -s;
    out[2].label = "psi_plus";   // (|01> + |10>)/sqrt2 ; |01> = index 2, |10> = index 1
    out[2].amplitudes << 0.0, s, s, 0.0;
    out[3].label = "psi_minus";  // (|01> - |10>)/sqrt2
    out[3].amplitudes << 0.0, -s, s, 0.0;
    return out;
}

inline std::array<LabeledState, 4> states_of(StateSet set) {
    return set == StateSet::Standard ? standard_states() : bell_states();
}

/// Bare two-qubit evolution of psi0 under the schedule alone, sampled on the
/// given grid. The endpoint equals CNOT psi0 up to a global phase; purity is
/// exactly 1 along the whole path.
inline std::vector<ReducedDensity> ideal_trajectory(const ControlSchedule& schedule,
                                                    const Eigen::Vector4cd& psi0,
                                                    const std::vector<double>& sample_times) {
    std::vector<ReducedDensity> out;
    out.reserve(sample_times.size());
    // for each sample, compose full segments before it and a partial
    // exponential inside the segment containing it
    std::vector<Eigen::SelfAdjointEigenSolver<Eigen::Matrix4cd>> eig;
    eig.reserve(schedule.segments.size());
    for (const auto& seg : schedule.segments)
        eig.emplace_back(Eigen::Matrix4cd(to_dense(seg.hamiltonian)));

    auto seg_exp = [&](std::size_t k, double t) {
        return Eigen::Matrix4cd(
            eig[k].eigenvectors() *
            (Complex{0.0, -t} * eig[k].eigenvalues().array().cast<Complex>()).exp().matrix().asDiagonal() *
            eig[k].eigenvectors().adjoint());
    };

    for (double t : sample_times) {
        Eigen::Matrix4cd u = Eigen::Matrix4cd::Identity();
        double t0 = 0.0;
        for (std::size_t k = 0; k < schedule.segments.size(); ++k) {
            const double d = schedule.segments[k].duration;
            if (t >= t0 + d) {
                u = seg_exp(k, d) * u;
                t0 += d;
            } else {
                u = seg_exp(k, t - t0) * u;
                t0 = t;
                break;
            }
        }
        Eigen::Vector4cd psi = u * psi0;
        out.push_back(psi * psi.adjoint());
    }
    return out;
}

/// Per-state purity/fidelity series plus their four-state averages.
struct MetricsSeries {
    StateSet set = StateSet::Standard;
    std::vector<double> times;                         // hbar/eps
    std::array<std::string, 4> labels;
    std::array<std::vector<double>, 4> purity;         // [state][time]
    std::array<std::vector<double>, 4> fidelity;
    std::vector<double> avg_purity;
    std::vector<double> avg_fidelity;
};

/// Pointwise arithmetic mean over the four per-state series.
inline MetricsSeries average_over_set(MetricsSeries series) {
    const std::size_t nt = series.times.size();
    for (int s = 0; s < 4; ++s)
        if (series.purity[static_cast<std::size_t>(s)].size() != nt ||
            series.fidelity[static_cast<std::size_t>(s)].size() != nt)
            throw std::invalid_argument("per-state series grids differ");
    series.avg_purity.assign(nt, 0.0);
    series.avg_fidelity.assign(nt, 0.0);
    for (std::size_t t = 0; t < nt; ++t) {
        for (int s = 0; s < 4; ++s) {
            series.avg_purity[t] += series.purity[static_cast<std::size_t>(s)][t] / 4.0;
            series.avg_fidelity[t] += series.fidelity[static_cast<std::size_t>(s)][t] / 4.0;
        }
    }
    return series;
}

}  // namespace flawsim
