#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "flawsim/pauli.hpp"

namespace flawsim {

/// Full or partial eigensystem of a Hermitian operator, eigenvalues ascending.
struct SpectralDecomposition {
    Eigen::VectorXd eigenvalues;
    Eigen::MatrixXcd eigenvectors;  // column k pairs with eigenvalues[k]

    Eigen::Index count() const { return eigenvalues.size(); }
};

namespace detail {

inline bool is_real_operator(const OperatorSum& op) {
    for (const PauliTerm& t : op.terms()) {
        if (std::abs(t.coefficient.imag()) > 0.0) return false;
        for (Pauli p : t.letters)
            if (p == Pauli::Y) return false;
    }
    return true;
}

}  // namespace detail

/// Dense exact diagonalization. Operators built from I/X/Z strings with real
/// coefficients take the real-symmetric path.
inline SpectralDecomposition diagonalize(const OperatorSum& op) {
    if (op.nqubits() > kDenseQubitLimit)
        throw std::length_error("dense diagonalization beyond the size guard");
    if (!op.is_hermitian())
        throw std::invalid_argument("diagonalize requires a Hermitian operator");
    for (const PauliTerm& t : op.terms())
        if (!std::isfinite(t.coefficient.real()) || !std::isfinite(t.coefficient.imag()))
            throw std::invalid_argument("operator has non-finite coefficients");
    SpectralDecomposition out;
    if (detail::is_real_operator(op)) {
        Eigen::MatrixXd h = to_dense(op).real();
        if (!h.allFinite()) throw std::invalid_argument("Hamiltonian has non-finite entries");
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(h);
        if (solver.info() != Eigen::Success)
            throw std::runtime_error("eigensolver failed to converge");
        out.eigenvalues = solver.eigenvalues();
        out.eigenvectors = solver.eigenvectors().cast<Complex>();
    } else {
        Eigen::MatrixXcd h = to_dense(op);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(h);
        if (solver.info() != Eigen::Success)
            throw std::runtime_error("eigensolver failed to converge");
        out.eigenvalues = solver.eigenvalues();
        out.eigenvectors = solver.eigenvectors();
    }
    return out;
}

/// Lanczos with full reorthogonalization for the lowest-k eigenpairs of a
/// Hermitian operator, matrix-free. Intended for thermal ensembles where only
/// low-lying states carry weight; the dense path remains the default oracle.
inline SpectralDecomposition lanczos_lowest(const OperatorSum& op, int want,
                                            int max_iterations = 0, double residual_tol = 1e-10,
                                            std::uint64_t seed = 12345) {
    if (!op.is_hermitian())
        throw std::invalid_argument("lanczos_lowest requires a Hermitian operator");
    const Eigen::Index dim = static_cast<Eigen::Index>(op.dim());
    if (want < 1 || want > dim) throw std::invalid_argument("requested eigenpair count out of range");
    if (max_iterations <= 0) max_iterations = std::min<Eigen::Index>(dim, std::max(4 * want + 40, 80));
    max_iterations = static_cast<int>(std::min<Eigen::Index>(max_iterations, dim));

    // random real start vector; deterministic
    std::mt19937_64 engine(seed);
    StateVector v0(op.nqubits());
    for (std::size_t b = 0; b < v0.dim(); ++b)
        v0[b] = Complex{static_cast<double>(engine() >> 11) * 0x1.0p-53 - 0.5, 0.0};
    v0.normalize();

    std::vector<Eigen::VectorXcd> basis;
    auto to_eigen = [dim](const StateVector& s) {
        Eigen::VectorXcd x(dim);
        for (Eigen::Index b = 0; b < dim; ++b) x[b] = s[static_cast<std::size_t>(b)];
        return x;
    };
    basis.push_back(to_eigen(v0));

    std::vector<double> alpha, beta;
    Eigen::VectorXcd w(dim);
    for (int j = 0; j < max_iterations; ++j) {
        // w = H v_j
        StateVector vj(op.nqubits());
        for (Eigen::Index b = 0; b < dim; ++b) vj[static_cast<std::size_t>(b)] = basis.back()[b];
        StateVector hv = apply_sum(op, vj);
        for (Eigen::Index b = 0; b < dim; ++b) w[b] = hv[static_cast<std::size_t>(b)];

        alpha.push_back(basis.back().dot(w).real());
        w -= alpha.back() * basis.back();
        if (j > 0) w -= beta.back() * basis[basis.size() - 2];
        // full reorthogonalization keeps the basis numerically orthonormal
        for (const auto& q : basis) w -= q.dot(w) * q;
        const double nw = w.norm();
        if (static_cast<int>(alpha.size()) >= want) {
            // convergence test on the Ritz pairs we care about
            const int m = static_cast<int>(alpha.size());
            Eigen::MatrixXd tri = Eigen::MatrixXd::Zero(m, m);
            for (int i = 0; i < m; ++i) tri(i, i) = alpha[static_cast<std::size_t>(i)];
            for (int i = 0; i + 1 < m; ++i)
                tri(i, i + 1) = tri(i + 1, i) = beta[static_cast<std::size_t>(i)];
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> tsol(tri);
            // residual of Ritz pair k is |beta_m * s_{m,k}|
            bool converged = true;
            for (int k = 0; k < want; ++k)
                if (std::abs(nw * tsol.eigenvectors()(m - 1, k)) > residual_tol) converged = false;
            if (converged || nw < 1e-14 || j + 1 == max_iterations) {
                SpectralDecomposition out;
                out.eigenvalues = tsol.eigenvalues().head(want);
                out.eigenvectors.resize(dim, want);
                for (int k = 0; k < want; ++k) {
                    Eigen::VectorXcd ritz = Eigen::VectorXcd::Zero(dim);
                    for (int i = 0; i < m; ++i) ritz += tsol.eigenvectors()(i, k) * basis[static_cast<std::size_t>(i)];
                    ritz.normalize();
                    out.eigenvectors.col(k) = ritz;
                }
                return out;
            }
        }
        if (nw < 1e-14) {
            // invariant subspace exhausted before convergence: restart direction
            Eigen::VectorXcd r(dim);
            for (Eigen::Index b = 0; b < dim; ++b)
                r[b] = Complex{static_cast<double>(engine() >> 11) * 0x1.0p-53 - 0.5, 0.0};
            for (const auto& q : basis) r -= q.dot(r) * q;
            r.normalize();
            beta.push_back(0.0);
            basis.push_back(r);
            continue;
        }
        beta.push_back(nw);
        basis.push_back(w / nw);
    }
    throw std::runtime_error("lanczos failed to converge");
}

/// Boltzmann-weighted eigenstate mixture truncated to the smallest prefix
/// whose raw cumulative weight reaches 1 - weight_cut, then renormalized
/// over the retained members.
struct ThermalMember {
    int eigen_index;  // column in the SpectralDecomposition
    double weight;    // renormalized over retained members
};

struct ThermalEnsemble {
    std::vector<ThermalMember> members;  // descending weight
    double kT = 0.0;
    double retained_raw_weight = 0.0;    // fraction of the full partition sum
};

inline ThermalEnsemble thermal_ensemble(const SpectralDecomposition& spec, double kT,
                                        double weight_cut) {
    if (spec.count() == 0) throw std::invalid_argument("empty spectrum");
    if (!(kT > 0.0)) throw std::invalid_argument("kT must be positive");
    if (!(weight_cut > 0.0 && weight_cut < 1.0))
        throw std::invalid_argument("weight_cut must lie in (0, 1)");
    const Eigen::Index n = spec.count();
    const double e0 = spec.eigenvalues.minCoeff();
    std::vector<double> raw(static_cast<std::size_t>(n));
    double q = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        raw[static_cast<std::size_t>(i)] = std::exp(-(spec.eigenvalues[i] - e0) / kT);
        q += raw[static_cast<std::size_t>(i)];
    }
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return raw[static_cast<std::size_t>(a)] > raw[static_cast<std::size_t>(b)];
    });
    ThermalEnsemble ens;
    ens.kT = kT;
    double cum = 0.0;
    for (int idx : order) {
        cum += raw[static_cast<std::size_t>(idx)];
        ens.members.push_back({idx, raw[static_cast<std::size_t>(idx)]});
        if (cum / q >= 1.0 - weight_cut) break;
    }
    ens.retained_raw_weight = cum / q;
    for (auto& m : ens.members) m.weight /= cum;
    return ens;
}

/// Canonical average sum_n w_n <phi_n|op|phi_n> over the retained members.
inline double canonical_average(const OperatorSum& op, const SpectralDecomposition& spec,
                                const ThermalEnsemble& ens) {
    if (!op.is_hermitian())
        throw std::invalid_argument("canonical_average requires a Hermitian operator");
    if (static_cast<Eigen::Index>(op.dim()) != spec.eigenvectors.rows())
        throw std::invalid_argument("operator dimension does not match eigenvectors");
    double acc = 0.0;
    StateVector v(op.nqubits());
    for (const ThermalMember& m : ens.members) {
        for (std::size_t b = 0; b < v.dim(); ++b)
            v[b] = spec.eigenvectors(static_cast<Eigen::Index>(b), m.eigen_index);
        acc += m.weight * expectation(op, v).real();
    }
    return acc;
}

/// Consecutive-gap ratio statistics over the central part of a spectrum.
/// Needs no unfolding; Poisson spectra give ~0.386, GOE ~0.531.
struct LevelStats {
    double mean_r = 0.0;
    std::vector<double> ratios;
    int degenerate_dropped = 0;  // gaps below the degeneracy tolerance
    int levels_used = 0;
};

inline LevelStats r_statistic(const std::vector<double>& eigenvalues, double trim_fraction = 0.1,
                              double degeneracy_tol = 1e-12) {
    if (eigenvalues.size() < 3) throw std::invalid_argument("need at least 3 levels");
    if (!std::is_sorted(eigenvalues.begin(), eigenvalues.end()))
        throw std::invalid_argument("eigenvalues must be ascending");
    const std::size_t n = eigenvalues.size();
    const std::size_t lo = static_cast<std::size_t>(std::floor(static_cast<double>(n) * trim_fraction));
    const std::size_t hi = static_cast<std::size_t>(std::ceil(static_cast<double>(n) * (1.0 - trim_fraction)));

    LevelStats stats;
    std::vector<double> gaps;
    gaps.reserve(hi - lo);
    for (std::size_t i = lo; i + 1 < hi; ++i) {
        const double s = eigenvalues[i + 1] - eigenvalues[i];
        if (s <= degeneracy_tol) {
            ++stats.degenerate_dropped;
            continue;
        }
        gaps.push_back(s);
    }
    if (gaps.size() < 2) throw std::invalid_argument("too few non-degenerate gaps");
    stats.levels_used = static_cast<int>(gaps.size()) + 1;
    stats.ratios.reserve(gaps.size() - 1);
    double sum = 0.0;
    for (std::size_t i = 0; i + 1 < gaps.size(); ++i) {
        const double r = std::min(gaps[i], gaps[i + 1]) / std::max(gaps[i], gaps[i + 1]);
        stats.ratios.push_back(r);
        sum += r;
    }
    stats.mean_r = sum / static_cast<double>(stats.ratios.size());
    return stats;
}

}  // namespace flawsim
