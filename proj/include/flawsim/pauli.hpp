#pragma once

#include <algorithm>
#include <bit>
#include <complex>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace flawsim {

using Complex = std::complex<double>;

/// Single-qubit Pauli letter. Hamiltonians in this project use only I, X, Z;
/// Y is needed to close the algebra under products.
enum class Pauli : std::uint8_t { I = 0, X = 1, Y = 2, Z = 3 };

inline char pauli_char(Pauli p) {
    switch (p) {
        case Pauli::I: return 'I';
        case Pauli::X: return 'X';
        case Pauli::Y: return 'Y';
        case Pauli::Z: return 'Z';
    }
    return '?';
}

/// One weighted Pauli string: coefficient * (letters[0] on qubit 1) (x) ...
/// (x) (letters[n-1] on qubit n).  Qubit k (1-based) maps to bit k-1 of the
/// basis index; bit value 0 is the +1 eigenstate of sigma_z.
struct PauliTerm {
    Complex coefficient;
    std::vector<Pauli> letters;

    std::size_t nqubits() const { return letters.size(); }

    std::string letters_string() const {
        std::string s;
        s.reserve(letters.size());
        for (Pauli p : letters) s.push_back(pauli_char(p));
        return s;
    }
};

/// Builds a term from a letters string like "XIZ" (qubit 1 first).
inline PauliTerm make_term(Complex coefficient, std::string_view letters) {
    PauliTerm t;
    t.coefficient = coefficient;
    t.letters.reserve(letters.size());
    for (char c : letters) {
        switch (c) {
            case 'I': t.letters.push_back(Pauli::I); break;
            case 'X': t.letters.push_back(Pauli::X); break;
            case 'Y': t.letters.push_back(Pauli::Y); break;
            case 'Z': t.letters.push_back(Pauli::Z); break;
            default: throw std::invalid_argument("unknown Pauli letter in string");
        }
    }
    return t;
}

/// Sum of Pauli strings on a fixed register, kept in canonical merged form:
/// terms are sorted by letters and no two terms share a letters array.
/// Terms whose coefficients cancel exactly are dropped.
class OperatorSum {
  public:
    explicit OperatorSum(std::size_t nqubits) : nqubits_(nqubits) {}

    OperatorSum(std::size_t nqubits, std::vector<PauliTerm> terms) : nqubits_(nqubits) {
        std::map<std::vector<Pauli>, Complex> merged;
        for (auto& t : terms) {
            if (t.letters.size() != nqubits_)
                throw std::invalid_argument("PauliTerm length does not match register size");
            merged[t.letters] += t.coefficient;
        }
        terms_.reserve(merged.size());
        for (auto& [letters, coeff] : merged) {
            if (coeff == Complex{0.0, 0.0}) continue;
            terms_.push_back(PauliTerm{coeff, letters});
        }
    }

    std::size_t nqubits() const { return nqubits_; }
    std::size_t dim() const { return std::size_t{1} << nqubits_; }
    const std::vector<PauliTerm>& terms() const { return terms_; }
    bool empty() const { return terms_.empty(); }

    /// All coefficients real within tol. A Pauli-string sum with only real
    /// coefficients is Hermitian (each string is Hermitian).
    bool is_hermitian(double tol = 1e-12) const {
        for (const auto& t : terms_)
            if (std::abs(t.coefficient.imag()) > tol) return false;
        return true;
    }

    OperatorSum operator+(const OperatorSum& other) const {
        if (other.nqubits_ != nqubits_)
            throw std::invalid_argument("OperatorSum register sizes differ");
        std::vector<PauliTerm> all = terms_;
        all.insert(all.end(), other.terms_.begin(), other.terms_.end());
        return OperatorSum(nqubits_, std::move(all));
    }

    OperatorSum scaled(Complex factor) const {
        std::vector<PauliTerm> all = terms_;
        for (auto& t : all) t.coefficient *= factor;
        return OperatorSum(nqubits_, std::move(all));
    }

  private:
    std::size_t nqubits_;
    std::vector<PauliTerm> terms_;
};

/// Complex amplitudes over the 2^n computational basis.
/// Index convention: b = sum_k bit_{k-1}(qubit k) * 2^{k-1}, little-endian.
class StateVector {
  public:
    explicit StateVector(std::size_t nqubits)
        : nqubits_(nqubits), amp_(std::size_t{1} << nqubits, Complex{0.0, 0.0}) {}

    StateVector(std::size_t nqubits, std::vector<Complex> amplitudes)
        : nqubits_(nqubits), amp_(std::move(amplitudes)) {
        if (amp_.size() != (std::size_t{1} << nqubits_))
            throw std::invalid_argument("amplitude count is not 2^nqubits");
    }

    /// Computational basis state |b>.
    static StateVector basis(std::size_t nqubits, std::uint64_t b) {
        StateVector v(nqubits);
        v.amp_.at(b) = Complex{1.0, 0.0};
        return v;
    }

    std::size_t nqubits() const { return nqubits_; }
    std::size_t dim() const { return amp_.size(); }
    const std::vector<Complex>& amplitudes() const { return amp_; }
    std::vector<Complex>& amplitudes() { return amp_; }
    Complex operator[](std::size_t b) const { return amp_[b]; }
    Complex& operator[](std::size_t b) { return amp_[b]; }

    double norm() const {
        double s = 0.0;
        for (const Complex& a : amp_) s += std::norm(a);
        return std::sqrt(s);
    }

    void normalize() {
        double n = norm();
        if (n == 0.0) throw std::invalid_argument("cannot normalize the zero vector");
        for (Complex& a : amp_) a /= n;
    }

  private:
    std::size_t nqubits_;
    std::vector<Complex> amp_;
};

inline Complex inner_product(const StateVector& u, const StateVector& v) {
    if (u.nqubits() != v.nqubits())
        throw std::invalid_argument("state register sizes differ");
    Complex s{0.0, 0.0};
    for (std::size_t b = 0; b < u.dim(); ++b) s += std::conj(u[b]) * v[b];
    return s;
}

namespace detail {

struct TermMasks {
    std::uint64_t xmask = 0;  // bits flipped (letters X or Y)
    std::uint64_t zmask = 0;  // bits contributing a (-1)^bit phase (Y or Z)
    int ycount = 0;
};

inline TermMasks term_masks(const PauliTerm& t) {
    TermMasks m;
    for (std::size_t k = 0; k < t.letters.size(); ++k) {
        switch (t.letters[k]) {
            case Pauli::I: break;
            case Pauli::X: m.xmask |= std::uint64_t{1} << k; break;
            case Pauli::Y:
                m.xmask |= std::uint64_t{1} << k;
                m.zmask |= std::uint64_t{1} << k;
                ++m.ycount;
                break;
            case Pauli::Z: m.zmask |= std::uint64_t{1} << k; break;
        }
    }
    return m;
}

inline Complex i_power(int k) {
    switch (((k % 4) + 4) % 4) {
        case 0: return {1.0, 0.0};
        case 1: return {0.0, 1.0};
        case 2: return {-1.0, 0.0};
        default: return {0.0, -1.0};
    }
}

/// out[b ^ xmask] += c * (-1)^popcount(b & zmask) * in[b] for all b.
inline void accumulate_term(const PauliTerm& t, const std::vector<Complex>& in,
                            std::vector<Complex>& out) {
    const TermMasks m = term_masks(t);
    const Complex c = t.coefficient * i_power(m.ycount);
    const std::size_t dim = in.size();
    for (std::size_t b = 0; b < dim; ++b) {
        const bool neg = std::popcount(b & m.zmask) & 1u;
        out[b ^ m.xmask] += (neg ? -c : c) * in[b];
    }
}

}  // namespace detail

/// Action of a single weighted Pauli string on a state. O(2^n).
inline StateVector apply_term(const PauliTerm& term, const StateVector& v) {
    if (term.letters.size() != v.nqubits())
        throw std::invalid_argument("term length does not match state register");
    StateVector out(v.nqubits());
    detail::accumulate_term(term, v.amplitudes(), out.amplitudes());
    return out;
}

/// Action of an operator sum on a state; linear in the number of terms.
inline StateVector apply_sum(const OperatorSum& op, const StateVector& v) {
    if (op.nqubits() != v.nqubits())
        throw std::invalid_argument("operator register does not match state register");
    StateVector out(v.nqubits());
    for (const PauliTerm& t : op.terms())
        detail::accumulate_term(t, v.amplitudes(), out.amplitudes());
    return out;
}

/// Letter-wise Pauli product with accumulated phase, e.g. X*Z = -iY.
inline PauliTerm multiply_terms(const PauliTerm& a, const PauliTerm& b) {
    if (a.letters.size() != b.letters.size())
        throw std::invalid_argument("term lengths differ");
    PauliTerm out;
    out.coefficient = a.coefficient * b.coefficient;
    out.letters.resize(a.letters.size());
    // Single-qubit products: table[p][q] = (phase, letter) for p*q.
    // Phases follow XY=iZ, YZ=iX, ZX=iY and their reverses.
    for (std::size_t k = 0; k < a.letters.size(); ++k) {
        const Pauli p = a.letters[k];
        const Pauli q = b.letters[k];
        if (p == Pauli::I) {
            out.letters[k] = q;
            continue;
        }
        if (q == Pauli::I) {
            out.letters[k] = p;
            continue;
        }
        if (p == q) {
            out.letters[k] = Pauli::I;
            continue;
        }
        // distinct non-identity letters: result is the third letter
        const int ip = static_cast<int>(p), iq = static_cast<int>(q);
        const int ir = 6 - ip - iq;  // {X,Y,Z} indices sum to 6
        out.letters[k] = static_cast<Pauli>(ir);
        // cyclic (X->Y->Z->X) gives +i, anticyclic gives -i
        const bool cyclic = (iq - ip + 3) % 3 == 1;
        out.coefficient *= cyclic ? Complex{0.0, 1.0} : Complex{0.0, -1.0};
    }
    return out;
}

/// Largest register for which dense 2^n x 2^n matrices are permitted.
inline constexpr std::size_t kDenseQubitLimit = 12;

/// Dense matrix of an operator sum; guarded to kDenseQubitLimit qubits.
inline Eigen::MatrixXcd to_dense(const OperatorSum& op) {
    if (op.nqubits() > kDenseQubitLimit)
        throw std::length_error("dense matrix requested beyond the size guard");
    const std::size_t dim = op.dim();
    Eigen::MatrixXcd M = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(dim),
                                                static_cast<Eigen::Index>(dim));
    for (const PauliTerm& t : op.terms()) {
        const detail::TermMasks m = detail::term_masks(t);
        const Complex c = t.coefficient * detail::i_power(m.ycount);
        for (std::size_t b = 0; b < dim; ++b) {
            const bool neg = std::popcount(b & m.zmask) & 1u;
            M(static_cast<Eigen::Index>(b ^ m.xmask), static_cast<Eigen::Index>(b)) +=
                neg ? -c : c;
        }
    }
    return M;
}

/// <v|op|v>. Real within ~1e-12 when op is Hermitian and v normalized.
inline Complex expectation(const OperatorSum& op, const StateVector& v) {
    if (op.nqubits() != v.nqubits())
        throw std::invalid_argument("operator register does not match state register");
    const std::vector<Complex>& a = v.amplitudes();
    Complex s{0.0, 0.0};
    // accumulate <v|t|v> per term without materializing t|v>
    for (const PauliTerm& t : op.terms()) {
        const detail::TermMasks m = detail::term_masks(t);
        const Complex c = t.coefficient * detail::i_power(m.ycount);
        Complex acc{0.0, 0.0};
        for (std::size_t b = 0; b < a.size(); ++b) {
            const bool neg = std::popcount(b & m.zmask) & 1u;
            const Complex amp = neg ? -a[b] : a[b];
            acc += std::conj(a[b ^ m.xmask]) * amp;
        }
        s += c * acc;
    }
    return s;
}

}  // namespace flawsim
