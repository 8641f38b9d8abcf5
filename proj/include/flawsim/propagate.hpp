#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "flawsim/model.hpp"
#include "flawsim/pauli.hpp"

namespace flawsim {

/// Step-size underflow: the controller cannot meet the tolerances.
class StiffnessError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Norm drift past the accepted bound; drift is reported, never corrected.
class IntegrationError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Row-major block of m state columns over the 2^n basis; column j is one
/// trajectory. m = 1 recovers a plain state vector.
using StateBlock = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace detail {

/// Operator form specialized for the propagation hot loop: the pure-Z part is
/// folded into one real diagonal, every flip term applies
/// out[b ^ xmask] += coeff * (-1)^popcount(b & zmask) * in[b].
/// Only real-coefficient, Y-free operators qualify (all Hamiltonians here).
struct CompiledOperator {
    std::size_t nqubits = 0;
    std::vector<double> diagonal;  // length 2^n
    struct Flip {
        std::uint64_t xmask;
        std::uint64_t zmask;
        double coeff;
    };
    std::vector<Flip> flips;
};

inline CompiledOperator compile_operator(const OperatorSum& op) {
    CompiledOperator c;
    c.nqubits = op.nqubits();
    c.diagonal.assign(op.dim(), 0.0);
    for (const PauliTerm& t : op.terms()) {
        if (std::abs(t.coefficient.imag()) > 0.0)
            throw std::invalid_argument("compiled operators require real coefficients");
        const TermMasks m = term_masks(t);
        if (m.ycount != 0)
            throw std::invalid_argument("compiled operators do not support Y letters");
        if (m.xmask == 0) {
            const double v = t.coefficient.real();
            for (std::size_t b = 0; b < c.diagonal.size(); ++b)
                c.diagonal[b] += (std::popcount(b & m.zmask) & 1u) ? -v : v;
        } else {
            c.flips.push_back({m.xmask, m.zmask, t.coefficient.real()});
        }
    }
    return c;
}

/// out = H * in, column-blocked. 'out' is overwritten.
inline void apply_compiled(const CompiledOperator& h, const StateBlock& in, StateBlock& out) {
    const std::size_t dim = std::size_t{1} << h.nqubits;
    const Eigen::Index cols = in.cols();
    out.resize(in.rows(), cols);
    const Complex* src = in.data();
    Complex* dst = out.data();
    for (std::size_t b = 0; b < dim; ++b) {
        const double d = h.diagonal[b];
        for (Eigen::Index j = 0; j < cols; ++j)
            dst[b * static_cast<std::size_t>(cols) + static_cast<std::size_t>(j)] =
                d * src[b * static_cast<std::size_t>(cols) + static_cast<std::size_t>(j)];
    }
    for (const CompiledOperator::Flip& f : h.flips) {
        if (f.zmask == 0) {
            for (std::size_t b = 0; b < dim; ++b) {
                const Complex* s = src + b * static_cast<std::size_t>(cols);
                Complex* o = dst + (b ^ f.xmask) * static_cast<std::size_t>(cols);
                for (Eigen::Index j = 0; j < cols; ++j) o[j] += f.coeff * s[j];
            }
        } else {
            for (std::size_t b = 0; b < dim; ++b) {
                const double v = (std::popcount(b & f.zmask) & 1u) ? -f.coeff : f.coeff;
                const Complex* s = src + b * static_cast<std::size_t>(cols);
                Complex* o = dst + (b ^ f.xmask) * static_cast<std::size_t>(cols);
                for (Eigen::Index j = 0; j < cols; ++j) o[j] += v * s[j];
            }
        }
    }
}

/// Dormand-Prince 8(5,3) tableau (Hairer, Norsett & Wanner). The embedded
/// 5th/3rd order differences drive the error estimate.
struct Dop853 {
    static constexpr int kStages = 12;
    static constexpr double kOrderErrorExponent = -1.0 / 8.0;  // estimator order 7
    static constexpr double kSafety = 0.9;
    static constexpr double kMinFactor = 0.2;
    static constexpr double kMaxFactor = 10.0;

    static const double* c() {
        static const double v[kStages] = {0.0,
                                          0.05260015195876773,
                                          0.0789002279381516,
                                          0.1183503419072274,
                                          0.2816496580927726,
                                          0.3333333333333333,
                                          0.25,
                                          0.3076923076923077,
                                          0.6512820512820513,
                                          0.6,
                                          0.8571428571428571,
                                          1.0};
        return v;
    }

    static const double* a(int row) {
        static const double v[kStages][kStages] = {
            {},
            {0.05260015195876773},
            {0.0197250569845379, 0.0591751709536137},
            {0.02958758547680685, 0.0, 0.08876275643042054},
            {0.2413651341592667, 0.0, -0.8845494793282861, 0.924834003261792},
            {0.037037037037037035, 0.0, 0.0, 0.17082860872947386, 0.12546768756682242},
            {0.037109375, 0.0, 0.0, 0.17025221101954405, 0.06021653898045596, -0.017578125},
            {0.03709200011850479, 0.0, 0.0, 0.17038392571223998, 0.10726203044637328,
             -0.015319437748624402, 0.008273789163814023},
            {0.6241109587160757, 0.0, 0.0, -3.3608926294469414, -0.868219346841726,
             27.59209969944671, 20.154067550477894, -43.48988418106996},
            {0.47766253643826434, 0.0, 0.0, -2.4881146199716677, -0.590290826836843,
             21.230051448181193, 15.279233632882423, -33.28821096898486,
             -0.020331201708508627},
            {-0.9371424300859873, 0.0, 0.0, 5.186372428844064, 1.0914373489967295,
             -8.149787010746927, -18.52006565999696, 22.739487099350505, 2.4936055526796523,
             -3.0467644718982196},
            {2.273310147516538, 0.0, 0.0, -10.53449546673725, -2.0008720582248625,
             -17.9589318631188, 27.94888452941996, -2.8589982771350235, -8.87285693353063,
             12.360567175794303, 0.6433927460157636}};
        return v[row];
    }

    static const double* b() {
        static const double v[kStages] = {0.054293734116568765,
                                          0.0,
                                          0.0,
                                          0.0,
                                          0.0,
                                          4.450312892752409,
                                          1.8915178993145003,
                                          -5.801203960010585,
                                          0.3111643669578199,
                                          -0.1521609496625161,
                                          0.20136540080403034,
                                          0.04471061572777259};
        return v;
    }

    // error weights include a 13th entry for f(t + h, y_new)
    static const double* e3() {
        static const double v[kStages + 1] = {-0.18980075407240762, 0.0, 0.0, 0.0, 0.0,
                                              4.450312892752409, 1.8915178993145003,
                                              -5.801203960010585, -0.4226823213237919,
                                              -0.1521609496625161, 0.20136540080403034,
                                              0.02265179219836082, 0.0};
        return v;
    }

    static const double* e5() {
        static const double v[kStages + 1] = {0.01312004499419488, 0.0, 0.0, 0.0, 0.0,
                                              -1.2251564463762044, -0.4957589496572502,
                                              1.6643771824549864, -0.35032884874997366,
                                              0.3341791187130175, 0.08192320648511571,
                                              -0.022355307863886294, 0.0};
        return v;
    }
};

/// Adaptive DOP853 for dY/dt = -i H Y with H constant over [t0, t1].
/// The -i is folded into the stage combinations so the operator apply stays
/// real-coefficient. Returns the number of accepted steps.
class SchrodingerIntegrator {
  public:
    SchrodingerIntegrator(const CompiledOperator& h, double rtol, double atol)
        : h_(&h), rtol_(rtol), atol_(atol) {}

    /// Advances y in place from t0 to t1 (t1 > t0). The caller samples y
    /// between calls; endpoints are hit exactly.
    void advance(StateBlock& y, double t0, double t1) {
        if (!(t1 > t0)) {
            if (t1 == t0) return;
            throw std::invalid_argument("advance requires t1 >= t0");
        }
        const Complex mi{0.0, -1.0};  // -i
        const Eigen::Index rows = y.rows(), cols = y.cols();
        for (int s = 0; s < Dop853::kStages + 1; ++s) k_[s].resize(rows, cols);
        stage_.resize(rows, cols);
        ynew_.resize(rows, cols);

        double t = t0;
        apply_compiled(*h_, y, k_[0]);  // K0 = H y (FSAL seed)
        double h = initial_step(y, k_[0], t1 - t0);
        bool rejected = false;
        while (t < t1) {
            const double min_step =
                10.0 * std::abs(std::nextafter(t, std::numeric_limits<double>::infinity()) - t);
            if (h < min_step) {
                if (t + h == t)
                    throw StiffnessError("step size underflow in adaptive integration");
                h = min_step;
            }
            bool clipped = false;
            if (t + h >= t1) {
                h = t1 - t;
                clipped = true;
            }

            // stages 1..11
            for (int s = 1; s < Dop853::kStages; ++s) {
                const double* a = Dop853::a(s);
                stage_ = y;
                for (int j = 0; j < s; ++j) {
                    if (a[j] == 0.0) continue;
                    stage_.noalias() += (mi * (h * a[j])) * k_[j];
                }
                apply_compiled(*h_, stage_, k_[s]);
            }
            // 8th order solution
            ynew_ = y;
            const double* b = Dop853::b();
            for (int s = 0; s < Dop853::kStages; ++s) {
                if (b[s] == 0.0) continue;
                ynew_.noalias() += (mi * (h * b[s])) * k_[s];
            }
            apply_compiled(*h_, ynew_, k_[Dop853::kStages]);  // f at (t+h, ynew)

            const double err = error_norm(y, ynew_, h);
            if (err < 1.0) {
                double factor = err == 0.0
                                    ? Dop853::kMaxFactor
                                    : std::min(Dop853::kMaxFactor,
                                               Dop853::kSafety *
                                                   std::pow(err, Dop853::kOrderErrorExponent));
                if (rejected) factor = std::min(1.0, factor);
                t = clipped ? t1 : t + h;
                h *= factor;
                y.swap(ynew_);
                k_[0].swap(k_[Dop853::kStages]);
                rejected = false;
                ++accepted_steps_;
            } else {
                h *= std::max(Dop853::kMinFactor,
                              Dop853::kSafety * std::pow(err, Dop853::kOrderErrorExponent));
                rejected = true;
                ++rejected_steps_;
            }
        }
    }

    long accepted_steps() const { return accepted_steps_; }
    long rejected_steps() const { return rejected_steps_; }

  private:
    double scale_at(Eigen::Index idx, const StateBlock& y0, const StateBlock& y1) const {
        return atol_ + rtol_ * std::max(std::abs(y0.data()[idx]), std::abs(y1.data()[idx]));
    }

    double error_norm(const StateBlock& y0, const StateBlock& y1, double h) const {
        // combined 5th/3rd order estimate
        const double* e3 = Dop853::e3();
        const double* e5 = Dop853::e5();
        const Eigen::Index n = y0.size();
        double n5 = 0.0, n3 = 0.0;
        for (Eigen::Index idx = 0; idx < n; ++idx) {
            Complex d5{0.0, 0.0}, d3{0.0, 0.0};
            for (int s = 0; s < Dop853::kStages + 1; ++s) {
                const Complex k = k_[s].data()[idx];
                if (e5[s] != 0.0) d5 += e5[s] * k;
                if (e3[s] != 0.0) d3 += e3[s] * k;
            }
            const double sc = scale_at(idx, y0, y1);
            n5 += std::norm(d5) / (sc * sc);
            n3 += std::norm(d3) / (sc * sc);
        }
        if (n5 == 0.0 && n3 == 0.0) return 0.0;
        const double denom = n5 + 0.01 * n3;
        return std::abs(h) * n5 / std::sqrt(denom * static_cast<double>(n));
    }

    double initial_step(const StateBlock& y, const StateBlock& f0_h, double span) const {
        // Hairer's starting-step heuristic on f = -i H y (|f| = |H y|)
        const Eigen::Index n = y.size();
        double d0 = 0.0, d1 = 0.0;
        for (Eigen::Index idx = 0; idx < n; ++idx) {
            const double sc = atol_ + rtol_ * std::abs(y.data()[idx]);
            d0 += std::norm(y.data()[idx]) / (sc * sc);
            d1 += std::norm(f0_h.data()[idx]) / (sc * sc);
        }
        d0 = std::sqrt(d0 / static_cast<double>(n));
        d1 = std::sqrt(d1 / static_cast<double>(n));
        double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
        h0 = std::min(h0, span);

        StateBlock y1 = y + Complex{0.0, -h0} * f0_h;
        StateBlock f1(y.rows(), y.cols());
        apply_compiled(*h_, y1, f1);
        double d2 = 0.0;
        for (Eigen::Index idx = 0; idx < n; ++idx) {
            const double sc = atol_ + rtol_ * std::abs(y.data()[idx]);
            d2 += std::norm(f1.data()[idx] - f0_h.data()[idx]) / (sc * sc);
        }
        d2 = std::sqrt(d2 / static_cast<double>(n)) / h0;
        double h1;
        if (d1 <= 1e-15 && d2 <= 1e-15)
            h1 = std::max(1e-6, h0 * 1e-3);
        else
            h1 = std::pow(0.01 / std::max(d1, d2), 1.0 / 9.0);
        return std::min({100.0 * h0, h1, span});
    }

    const CompiledOperator* h_;
    double rtol_, atol_;
    StateBlock k_[Dop853::kStages + 1];
    StateBlock stage_, ynew_;
    long accepted_steps_ = 0;
    long rejected_steps_ = 0;
};

}  // namespace detail

/// Full-register propagation task: the control schedule embedded on the two
/// system qubits plus a static Hamiltonian, sampled at the given times.
struct PropagationProblem {
    ControlSchedule schedule;
    OperatorSum static_hamiltonian;  // H_SB + H_B on the full register
    StateVector initial;
    double rtol = 1e-9;
    double atol = 1e-11;
    double norm_drift_tol = 1e-6;
    std::vector<double> sample_times;  // ascending, in [0, total duration]

    PropagationProblem(ControlSchedule sched, OperatorSum static_h, StateVector init)
        : schedule(std::move(sched)),
          static_hamiltonian(std::move(static_h)),
          initial(std::move(init)) {}
};

struct Trajectory {
    std::vector<double> times;
    std::vector<StateVector> states;
};

/// Uniform per-segment sample grid that always contains segment boundaries.
inline std::vector<double> segment_sample_times(const ControlSchedule& schedule,
                                                int samples_per_segment) {
    if (samples_per_segment < 1) throw std::invalid_argument("need at least 1 sample per segment");
    std::vector<double> times;
    times.push_back(0.0);
    double t0 = 0.0;
    for (const auto& seg : schedule.segments) {
        for (int k = 1; k <= samples_per_segment; ++k)
            times.push_back(t0 + seg.duration * static_cast<double>(k) /
                                     static_cast<double>(samples_per_segment));
        t0 += seg.duration;
        times.back() = t0;  // exact boundary, no accumulation error
    }
    return times;
}

namespace detail {

/// Segment walker shared by the scalar and block propagation paths.
/// Calls on_sample(sample_index, t, block) at every requested time.
template <typename SampleFn>
void propagate_block(const ControlSchedule& schedule, const OperatorSum& static_h,
                     StateBlock& block, const std::vector<double>& sample_times, double rtol,
                     double atol, SampleFn&& on_sample) {
    const std::size_t nbath = static_h.nqubits() - 2;
    if (!std::is_sorted(sample_times.begin(), sample_times.end()))
        throw std::invalid_argument("sample times must be ascending");
    const double total = schedule.total_duration();
    if (!sample_times.empty() &&
        (sample_times.front() < 0.0 || sample_times.back() > total * (1.0 + 1e-12)))
        throw std::invalid_argument("sample times outside the schedule");

    std::size_t next_sample = 0;
    if (next_sample < sample_times.size() && sample_times[next_sample] <= 0.0) {
        on_sample(next_sample, 0.0, block);
        ++next_sample;
    }
    double seg_start = 0.0;
    for (const auto& seg : schedule.segments) {
        const double seg_end = seg_start + seg.duration;
        const OperatorSum h_total = embed_system_operator(seg.hamiltonian, nbath) + static_h;
        const CompiledOperator compiled = compile_operator(h_total);
        SchrodingerIntegrator integ(compiled, rtol, atol);
        double t = seg_start;
        while (next_sample < sample_times.size() &&
               sample_times[next_sample] <= seg_end * (1.0 + 1e-15)) {
            const double target = std::min(sample_times[next_sample], seg_end);
            integ.advance(block, t, target);
            t = target;
            on_sample(next_sample, sample_times[next_sample], block);
            ++next_sample;
        }
        if (t < seg_end) integ.advance(block, t, seg_end);
        seg_start = seg_end;
    }
}

}  // namespace detail

/// Evolves the initial state through all nine segments with the static
/// Hamiltonian always on, sampling at problem.sample_times. Norm drift beyond
/// problem.norm_drift_tol raises IntegrationError.
inline Trajectory evolve(const PropagationProblem& problem) {
    if (problem.static_hamiltonian.nqubits() != problem.initial.nqubits())
        throw std::invalid_argument("static Hamiltonian and state register sizes differ");
    if (problem.initial.nqubits() < 2)
        throw std::invalid_argument("register must include the two system qubits");
    if (!problem.static_hamiltonian.is_hermitian())
        throw std::invalid_argument("static Hamiltonian must be Hermitian");

    const std::size_t dim = problem.initial.dim();
    StateBlock block(static_cast<Eigen::Index>(dim), 1);
    for (std::size_t b = 0; b < dim; ++b) block(static_cast<Eigen::Index>(b), 0) = problem.initial[b];

    Trajectory traj;
    traj.times = problem.sample_times;
    traj.states.reserve(problem.sample_times.size());

    detail::propagate_block(problem.schedule, problem.static_hamiltonian, block,
                            problem.sample_times, problem.rtol, problem.atol,
                            [&](std::size_t, double t, const StateBlock& blk) {
                                StateVector s(problem.initial.nqubits());
                                double norm2 = 0.0;
                                for (std::size_t b = 0; b < dim; ++b) {
                                    s[b] = blk(static_cast<Eigen::Index>(b), 0);
                                    norm2 += std::norm(s[b]);
                                }
                                const double drift = std::abs(std::sqrt(norm2) - 1.0);
                                if (drift > problem.norm_drift_tol)
                                    throw IntegrationError("norm drift " + std::to_string(drift) +
                                                           " at t=" + std::to_string(t));
                                traj.states.push_back(std::move(s));
                            });
    return traj;
}

/// Exact exp(-i H dt) |v> via dense eigendecomposition; the independent
/// cross-check for the adaptive integrator.
inline StateVector evolve_expm_oracle(const StateVector& v, const OperatorSum& h, double dt) {
    if (h.nqubits() != v.nqubits())
        throw std::invalid_argument("operator register does not match state register");
    if (h.nqubits() > kDenseQubitLimit)
        throw std::length_error("dense exponential beyond the size guard");
    if (!h.is_hermitian()) throw std::invalid_argument("expm oracle requires a Hermitian operator");
    Eigen::MatrixXcd m = to_dense(h);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(m);
    if (solver.info() != Eigen::Success) throw std::runtime_error("eigensolver failed");
    Eigen::VectorXcd amps(static_cast<Eigen::Index>(v.dim()));
    for (std::size_t b = 0; b < v.dim(); ++b) amps[static_cast<Eigen::Index>(b)] = v[b];
    Eigen::VectorXcd phases =
        (Complex{0.0, -dt} * solver.eigenvalues().array().cast<Complex>()).exp();
    Eigen::VectorXcd out = solver.eigenvectors() *
                           (phases.array() * (solver.eigenvectors().adjoint() * amps).array()).matrix();
    StateVector result(v.nqubits());
    for (std::size_t b = 0; b < v.dim(); ++b) result[b] = out[static_cast<Eigen::Index>(b)];
    return result;
}

}  // namespace flawsim
