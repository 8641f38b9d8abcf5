#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

#include "flawsim/pauli.hpp"

namespace flawsim {

/// Energies are in units of eps = k_B * 0.2 K; times in units of hbar/eps.
inline constexpr double kHbar = 1.054571817e-34;       // J s
inline constexpr double kBoltzmann = 1.380649e-23;     // J / K
inline constexpr double kEpsilonKelvin = 0.2;          // K

/// Conversion applied only at reporting boundaries.
inline double seconds_per_time_unit() {
    return kHbar / (kBoltzmann * kEpsilonKelvin);
}

/// Uniform sampling built on mt19937_64 with an explicit 53-bit mantissa map,
/// so draws are bit-identical across platforms and standard libraries.
class UniformSampler {
  public:
    explicit UniformSampler(std::uint64_t seed) : engine_(seed) {}

    /// lo + (hi - lo) * u with u in [0,1) on a 2^-53 grid. A degenerate
    /// interval (hi == lo) still consumes one draw, keeping the draw order
    /// independent of parameter values.
    double uniform(double lo, double hi) {
        const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
        return lo + (hi - lo) * u;
    }

  private:
    std::mt19937_64 engine_;
};

/// One piecewise-constant control interval acting on the two system qubits.
struct ScheduleSegment {
    double duration;         // hbar/eps
    OperatorSum hamiltonian; // on 2 qubits, Hermitian
};

/// The nine-segment CNOT pulse schedule.
struct ControlSchedule {
    std::vector<ScheduleSegment> segments;
    double bx = 0.0, bz = 0.0, jx_gate = 0.0;

    double total_duration() const {
        double t = 0.0;
        for (const auto& s : segments) t += s.duration;
        return t;
    }
};

/// Bath sampling bounds. Fields B_i^a are uniform in [b0a - delta/2, b0a + delta/2];
/// pair couplings in [-j, j]; system-bath weights in [-lambda, lambda].
struct BathParams {
    int nbath = 0;
    double b0x = 1.0;
    double b0z = 1.0;
    double delta = 0.0;
    double j = 0.0;
    double lambda = 0.0;
    std::uint64_t seed = 0;
};

/// One concrete draw of every random imperfection parameter.
struct Realization {
    BathParams params;
    std::vector<double> bx, bz;            // per bath qubit, size N
    std::vector<double> jxx;               // pairs (i,j), i<j, lexicographic, size N(N-1)/2
    std::vector<double> lambda_x, lambda_z;  // per bath qubit, size N

    std::size_t pair_index(std::size_t i, std::size_t j) const {
        // lexicographic rank of (i,j) with i<j among N qubits
        const std::size_t n = bx.size();
        return i * n - i * (i + 1) / 2 + (j - i - 1);
    }
};

enum class CouplingType { BitFlip, Phase };  // alpha = x or z in the coupling operators

inline const char* coupling_name(CouplingType t) {
    return t == CouplingType::BitFlip ? "bitflip" : "phase";
}

/// Draw order is fixed: Bx by qubit, Bz by qubit, J by pair (lexicographic),
/// lambda_x by qubit, lambda_z by qubit. Deterministic given params.seed.
inline Realization sample_realization(const BathParams& params) {
    if (params.nbath < 1) throw std::invalid_argument("bath must have at least one qubit");
    if (params.delta < 0 || params.j < 0 || params.lambda < 0)
        throw std::invalid_argument("sampling bounds must be non-negative");
    const std::size_t n = static_cast<std::size_t>(params.nbath);
    UniformSampler rng(params.seed);
    Realization r;
    r.params = params;
    r.bx.reserve(n);
    r.bz.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        r.bx.push_back(rng.uniform(params.b0x - params.delta / 2, params.b0x + params.delta / 2));
    for (std::size_t i = 0; i < n; ++i)
        r.bz.push_back(rng.uniform(params.b0z - params.delta / 2, params.b0z + params.delta / 2));
    r.jxx.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            r.jxx.push_back(rng.uniform(-params.j, params.j));
    r.lambda_x.reserve(n);
    r.lambda_z.reserve(n);
    for (std::size_t i = 0; i < n; ++i) r.lambda_x.push_back(rng.uniform(-params.lambda, params.lambda));
    for (std::size_t i = 0; i < n; ++i) r.lambda_z.push_back(rng.uniform(-params.lambda, params.lambda));
    return r;
}

namespace detail {

/// Term on 2 qubits with a single letter placed on the given qubit (1-based).
inline PauliTerm one_qubit_term(Complex c, int qubit, Pauli p) {
    PauliTerm t;
    t.coefficient = c;
    t.letters.assign(2, Pauli::I);
    t.letters[static_cast<std::size_t>(qubit - 1)] = p;
    return t;
}

}  // namespace detail

/// The nine switching intervals realizing CNOT from the two-qubit control
/// Hamiltonian. Segments are contiguous; no free evolution between them.
inline ControlSchedule build_cnot_schedule(double bx, double bz, double jx_gate) {
    if (!(bx > 0.0) || !(bz > 0.0) || !(jx_gate > 0.0))
        throw std::invalid_argument("schedule parameters must be positive");
    using detail::one_qubit_term;
    constexpr double pi = std::numbers::pi;
    const double sqrt2 = std::sqrt(2.0);

    ControlSchedule sched;
    sched.bx = bx;
    sched.bz = bz;
    sched.jx_gate = jx_gate;

    auto z2 = [&](double c) { return one_qubit_term(c, 2, Pauli::Z); };
    auto x2 = [&](double c) { return one_qubit_term(c, 2, Pauli::X); };

    // Hadamard-like pulse on both qubits: -+ (bz/2) sum_i (sz_i + sx_i)
    auto hadamard_like = [&](double sign) {
        return OperatorSum(2, {one_qubit_term(sign * -0.5 * bz, 1, Pauli::Z),
                               one_qubit_term(sign * -0.5 * bz, 1, Pauli::X),
                               one_qubit_term(sign * -0.5 * bz, 2, Pauli::Z),
                               one_qubit_term(sign * -0.5 * bz, 2, Pauli::X)});
    };

    sched.segments.push_back({pi / (2 * bz), OperatorSum(2, {z2(-0.5 * bz)})});
    sched.segments.push_back({pi / (2 * bx), OperatorSum(2, {x2(-0.5 * bx)})});
    sched.segments.push_back({pi / (2 * bz), OperatorSum(2, {z2(+0.5 * bz)})});
    sched.segments.push_back({sqrt2 * pi / (2 * bz), hadamard_like(+1.0)});
    // two-qubit pulse: jx (-sx1 - sx2 + sx1 sx2)
    sched.segments.push_back(
        {pi / (4 * jx_gate),
         OperatorSum(2, {one_qubit_term(-jx_gate, 1, Pauli::X), one_qubit_term(-jx_gate, 2, Pauli::X),
                         make_term(jx_gate, "XX")})});
    sched.segments.push_back({sqrt2 * pi / (2 * bz), hadamard_like(-1.0)});
    sched.segments.push_back({pi / (2 * bz), OperatorSum(2, {z2(-0.5 * bz)})});
    sched.segments.push_back({pi / (2 * bx), OperatorSum(2, {x2(+0.5 * bx)})});
    sched.segments.push_back({pi / (2 * bz), OperatorSum(2, {z2(+0.5 * bz)})});
    return sched;
}

/// Bath Hamiltonian on the N bath qubits alone:
/// -1/2 sum_i (Bx_i sx_i + Bz_i sz_i) + sum_{i<j} Jxx_{ij} sx_i sx_j.
inline OperatorSum build_bath_hamiltonian(const Realization& r) {
    const std::size_t n = r.bx.size();
    std::vector<PauliTerm> terms;
    terms.reserve(2 * n + r.jxx.size());
    for (std::size_t i = 0; i < n; ++i) {
        PauliTerm tx;
        tx.coefficient = -0.5 * r.bx[i];
        tx.letters.assign(n, Pauli::I);
        tx.letters[i] = Pauli::X;
        terms.push_back(std::move(tx));
        PauliTerm tz;
        tz.coefficient = -0.5 * r.bz[i];
        tz.letters.assign(n, Pauli::I);
        tz.letters[i] = Pauli::Z;
        terms.push_back(std::move(tz));
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            PauliTerm t;
            t.coefficient = r.jxx[r.pair_index(i, j)];
            t.letters.assign(n, Pauli::I);
            t.letters[i] = Pauli::X;
            t.letters[j] = Pauli::X;
            terms.push_back(std::move(t));
        }
    }
    return OperatorSum(n, std::move(terms));
}

/// Bath coupling operator Sigma_alpha = sum_i lambda_alpha_i s_alpha^i,
/// on the full 2+N register (bath qubit i at bit i+1).
inline OperatorSum build_bath_coupling_operator(const Realization& r, CouplingType type) {
    const std::size_t n = r.bx.size();
    const std::size_t total = n + 2;
    const Pauli alpha = type == CouplingType::BitFlip ? Pauli::X : Pauli::Z;
    const std::vector<double>& lam = type == CouplingType::BitFlip ? r.lambda_x : r.lambda_z;
    std::vector<PauliTerm> terms;
    terms.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        PauliTerm t;
        t.coefficient = lam[i];
        t.letters.assign(total, Pauli::I);
        t.letters[i + 2] = alpha;
        terms.push_back(std::move(t));
    }
    return OperatorSum(total, std::move(terms));
}

/// Interaction Hamiltonian (s_alpha^1 + s_alpha^2) Sigma_alpha expanded into
/// two-letter strings on the full register.
inline OperatorSum build_interaction(const Realization& r, CouplingType type) {
    const std::size_t n = r.bx.size();
    const std::size_t total = n + 2;
    const Pauli alpha = type == CouplingType::BitFlip ? Pauli::X : Pauli::Z;
    const std::vector<double>& lam = type == CouplingType::BitFlip ? r.lambda_x : r.lambda_z;
    std::vector<PauliTerm> terms;
    terms.reserve(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (int sys = 0; sys < 2; ++sys) {
            PauliTerm t;
            t.coefficient = lam[i];
            t.letters.assign(total, Pauli::I);
            t.letters[static_cast<std::size_t>(sys)] = alpha;
            t.letters[i + 2] = alpha;
            terms.push_back(std::move(t));
        }
    }
    return OperatorSum(total, std::move(terms));
}

/// Embeds a 2-qubit system operator into the full 2+N register by letter
/// padding (identity on all bath qubits).
inline OperatorSum embed_system_operator(const OperatorSum& op, std::size_t nbath) {
    if (op.nqubits() != 2) throw std::invalid_argument("system operators act on 2 qubits");
    std::vector<PauliTerm> terms;
    terms.reserve(op.terms().size());
    for (const PauliTerm& t : op.terms()) {
        PauliTerm e;
        e.coefficient = t.coefficient;
        e.letters = t.letters;
        e.letters.resize(2 + nbath, Pauli::I);
        terms.push_back(std::move(e));
    }
    return OperatorSum(2 + nbath, std::move(terms));
}

/// Embeds an N-bath-qubit operator into the full 2+N register (bath qubit i
/// moves to bit i+1, i.e. letter index i+2 in 1-based qubit labels).
inline OperatorSum embed_bath_operator(const OperatorSum& op) {
    const std::size_t nbath = op.nqubits();
    std::vector<PauliTerm> terms;
    terms.reserve(op.terms().size());
    for (const PauliTerm& t : op.terms()) {
        PauliTerm e;
        e.coefficient = t.coefficient;
        e.letters.assign(2 + nbath, Pauli::I);
        for (std::size_t i = 0; i < nbath; ++i) e.letters[i + 2] = t.letters[i];
        terms.push_back(std::move(e));
    }
    return OperatorSum(2 + nbath, std::move(terms));
}

/// Standard CNOT with qubit 1 as control and qubit 2 as target, in the
/// little-endian basis (index = bit(q1) + 2 bit(q2)).
inline Eigen::Matrix4cd ideal_cnot() {
    Eigen::Matrix4cd u = Eigen::Matrix4cd::Zero();
    u(0, 0) = 1.0;  // |00> -> |00>
    u(2, 2) = 1.0;  // |01> -> |01>
    u(3, 1) = 1.0;  // |10> -> |11>
    u(1, 3) = 1.0;  // |11> -> |10>
    return u;
}

}  // namespace flawsim
