// End-to-end acceptance checks. Each criterion prints one PASS/FAIL line with
// the measured numbers; the process exits nonzero if any criterion fails.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "flawsim/experiment.hpp"
#include "flawsim/io.hpp"
#include "flawsim/model.hpp"
#include "flawsim/observables.hpp"
#include "flawsim/pauli.hpp"
#include "flawsim/propagate.hpp"
#include "flawsim/spectral.hpp"
#include "flawsim/thread_pool.hpp"

#include "csv_reader.hpp"
#include "oracles.hpp"

using namespace flawsim;

namespace {

struct Criterion {
    std::string name;
    bool pass = false;
    std::string detail;
};

std::filesystem::path g_out_root;
int g_threads = 2;

std::filesystem::path fresh_dir(const std::string& name) {
    const auto p = g_out_root / name;
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// 1. Gate-protocol correctness
// ---------------------------------------------------------------------------
Criterion criterion_gate_protocol() {
    Criterion c{"gate-protocol correctness (CNOT composition, total time)"};
    const ControlSchedule sched = build_cnot_schedule(1.0, 1.0, 0.05);
    Eigen::Matrix4cd u = Eigen::Matrix4cd::Identity();
    for (const auto& seg : sched.segments) {
        const Eigen::Matrix4cd h = oracle::dense_sum(seg.hamiltonian);
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix4cd> sol(h);
        u = sol.eigenvectors() *
                (Complex{0.0, -seg.duration} * sol.eigenvalues().array().cast<Complex>())
                    .exp()
                    .matrix()
                    .asDiagonal() *
                sol.eigenvectors().adjoint() * u;
    }
    Eigen::Index mr, mc;
    u.cwiseAbs().maxCoeff(&mr, &mc);
    u /= u(mr, mc) / std::abs(u(mr, mc));
    const double deviation = (u - ideal_cnot()).cwiseAbs().maxCoeff();

    const double seconds = sched.total_duration() * seconds_per_time_unit();
    const double time_err = std::abs(seconds - 1.129e-9) / 1.129e-9;

    c.pass = deviation < 1e-10 && time_err < 1e-3;
    c.detail = "max deviation " + fmt(deviation) + " (tol 1e-10); gate time " + fmt(seconds) +
               " s vs 1.129e-9 s (rel err " + fmt(time_err) + ", tol 1e-3)";
    return c;
}

// ---------------------------------------------------------------------------
// 2. Null-coupling identity
// ---------------------------------------------------------------------------
Criterion criterion_null_coupling() {
    Criterion c{"null-coupling identity (lambda = 0, N = 10, all 8 states)"};
    RunConfig cfg;
    cfg.nbath = 10;
    cfg.lambda = 0.0;
    cfg.j_list = {0.05};
    cfg.realizations = 1;
    cfg.weight_cut = 1e-3;
    cfg.samples_per_segment = 10;
    cfg.couplings = {CouplingType::BitFlip};
    cfg.state_sets = {StateSet::Standard, StateSet::Bell};
    cfg.seed = 1;
    cfg.threads = g_threads;
    cfg.out_dir = fresh_dir("null_coupling");
    std::ostringstream log;
    const RunManifest manifest = run_gate_experiment(cfg, log);
    if (!manifest.failures.empty()) {
        c.detail = "run failed: " + manifest.failures.front();
        return c;
    }
    const auto table = testutil::read_csv((cfg.out_dir / "metrics.csv").string());
    const std::size_t cp = table.column("purity");
    const std::size_t cf = table.column("fidelity");
    const std::size_t cap = table.column("avg_purity");
    const std::size_t caf = table.column("avg_fidelity");
    double worst = 0.0;
    for (const auto& row : table.rows)
        for (const std::size_t col : {cp, cf, cap, caf})
            worst = std::max(worst, std::abs(std::stod(row[col]) - 1.0));
    c.pass = worst < 1e-8;
    c.detail = "max |metric - 1| = " + fmt(worst) + " over " + std::to_string(table.rows.size()) +
               " rows (tol 1e-8)";
    return c;
}

// ---------------------------------------------------------------------------
// 3. Propagator oracle equivalence
// ---------------------------------------------------------------------------
Criterion criterion_propagator_oracle() {
    Criterion c{"propagator vs exact-exponential oracle (20 random problems)"};
    oracle::TestRng rng(2024);
    double worst_dist = 0.0, worst_drift = 0.0;
    int count = 0;
    for (std::size_t n = 3; n <= 6; ++n) {
        for (int rep = 0; rep < 5; ++rep) {
            const OperatorSum static_h = rng.random_sum(n, 2 * n, false, true);
            ControlSchedule sched;
            const int nseg = 3;
            for (int k = 0; k < nseg; ++k)
                sched.segments.push_back({rng.uniform(0.3, 1.0), rng.random_sum(2, 3, false, true)});
            PropagationProblem prob(sched, static_h, rng.random_state(n));
            prob.sample_times = {sched.total_duration()};
            const Trajectory traj = evolve(prob);

            StateVector expected = prob.initial;
            for (const auto& seg : sched.segments)
                expected = evolve_expm_oracle(
                    expected, embed_system_operator(seg.hamiltonian, n - 2) + static_h,
                    seg.duration);
            double dist = 0.0;
            for (std::size_t b = 0; b < expected.dim(); ++b)
                dist += std::norm(traj.states[0][b] - expected[b]);
            worst_dist = std::max(worst_dist, std::sqrt(dist));
            worst_drift = std::max(worst_drift, std::abs(traj.states[0].norm() - 1.0));
            ++count;
        }
    }
    c.pass = worst_dist < 1e-8 && worst_drift < 1e-9 && count >= 20;
    c.detail = std::to_string(count) + " problems; worst distance " + fmt(worst_dist) +
               " (tol 1e-8), worst norm drift " + fmt(worst_drift) + " (tol 1e-9)";
    return c;
}

// ---------------------------------------------------------------------------
// 4. Partial-trace oracle equivalence
// ---------------------------------------------------------------------------
Criterion criterion_partial_trace() {
    Criterion c{"partial trace vs dense oracle (100 random 5-qubit states)"};
    oracle::TestRng rng(515);
    double worst = 0.0;
    bool physical = true;
    for (int rep = 0; rep < 100; ++rep) {
        const StateVector v = rng.random_state(5);
        const ReducedDensity rho = partial_trace_bath(v);
        worst = std::max(worst,
                         (rho - oracle::dense_partial_trace(v)).cwiseAbs().maxCoeff());
        physical = physical && is_physical_density(rho, 1e-10);
    }
    c.pass = worst < 1e-12 && physical;
    c.detail = "worst entry deviation " + fmt(worst) + " (tol 1e-12); densities " +
               (physical ? "all physical within 1e-10" : "NOT all physical");
    return c;
}

// ---------------------------------------------------------------------------
// 5. Chaos crossover
// ---------------------------------------------------------------------------
Criterion criterion_chaos_crossover() {
    Criterion c{"chaos crossover of the gap-ratio statistic"};
    // Monte-Carlo reference values from the named oracles
    double poisson_ref;
    {
        oracle::TestRng rng(7);
        std::vector<double> levels;
        levels.reserve(400002);
        double e = 0.0;
        for (int k = 0; k < 400002; ++k) {
            double u = rng.uniform(0.0, 1.0);
            while (u == 0.0) u = rng.uniform(0.0, 1.0);
            e += -std::log(u);
            levels.push_back(e);
        }
        poisson_ref = r_statistic(levels).mean_r;
    }
    double goe_ref;
    {
        oracle::TestRng rng(8);
        double sum = 0.0;
        const int reps = 20;
        for (int rep = 0; rep < reps; ++rep) {
            Eigen::MatrixXd a(512, 512);
            for (Eigen::Index i = 0; i < 512; ++i)
                for (Eigen::Index j = 0; j < 512; ++j) a(i, j) = rng.normal();
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> sol(
                Eigen::MatrixXd((a + a.transpose()) / 2.0), Eigen::EigenvaluesOnly);
            std::vector<double> levels(sol.eigenvalues().data(), sol.eigenvalues().data() + 512);
            sum += r_statistic(levels).mean_r;
        }
        goe_ref = sum / reps;
    }

    RunConfig cfg;
    cfg.nbath = 10;
    cfg.delta = 0.4;
    cfg.j_list = {0.05, 0.25, 0.5, 1.0, 2.0};
    cfg.realizations = 12;
    cfg.seed = 1;
    cfg.threads = g_threads;
    cfg.out_dir = fresh_dir("chaos");
    std::ostringstream log;
    const RunManifest manifest = run_spectrum_scan(cfg, log);
    if (!manifest.failures.empty()) {
        c.detail = "scan failed: " + manifest.failures.front();
        return c;
    }
    const auto table = testutil::read_csv((cfg.out_dir / "levelstats.csv").string());
    std::map<double, double> mean_r;
    for (const auto& row : table.rows)
        if (row[table.column("realization_id")] == "mean")
            mean_r[std::stod(row[table.column("J")])] = std::stod(row[table.column("mean_r")]);

    const bool low_ok = mean_r.at(0.05) < 0.45;
    bool high_ok = true;
    for (double j : {0.25, 0.5, 1.0, 2.0}) high_ok = high_ok && mean_r.at(j) > 0.50;
    bool monotone = true;
    double prev = -1.0;
    std::string series;
    for (double j : cfg.j_list) {
        const double r = mean_r.at(j);
        if (r < prev) monotone = false;
        prev = r;
        series += (series.empty() ? "" : ", ") + std::string("r(") + j_tag(j) + ")=" + fmt(r);
    }
    c.pass = low_ok && high_ok && monotone;
    c.detail = series + "; oracle refs: Poisson " + fmt(poisson_ref) + ", GOE " + fmt(goe_ref) +
               "; need r(0.05)<0.45" + (low_ok ? "" : " [VIOLATED]") + ", r(J>=0.25)>0.50" +
               (high_ok ? "" : " [VIOLATED]") + ", non-decreasing" +
               (monotone ? "" : " [VIOLATED]");
    return c;
}

// ---------------------------------------------------------------------------
// 6 and 7. Decoherence suppression and shift dominance (same runs)
// ---------------------------------------------------------------------------
struct TrendCell {
    double lambda;
    CouplingType coupling;
    // ensemble-mean deficits at tau9 keyed by J
    std::map<double, double> purity_deficit;
    std::map<double, double> fidelity_deficit;
};

std::vector<TrendCell> run_trend_matrix(int realizations) {
    const std::vector<double> lambdas = {0.02, 0.05, 0.1};
    const std::vector<CouplingType> couplings = {CouplingType::BitFlip, CouplingType::Phase};

    struct Job {
        double lambda;
        CouplingType coupling;
        std::filesystem::path dir;
    };
    std::vector<Job> jobs;
    for (double lam : lambdas)
        for (CouplingType ct : couplings)
            jobs.push_back({lam, ct,
                            fresh_dir(std::string("trend_") + coupling_name(ct) + "_lam" +
                                      j_tag(lam))});

    // outer-level parallelism: each job runs single-threaded
    parallel_for(jobs.size(), g_threads, [&](std::size_t idx) {
        const Job& job = jobs[idx];
        RunConfig cfg;
        cfg.nbath = 10;
        cfg.delta = 0.4;
        cfg.kt = 0.25;
        cfg.lambda = job.lambda;
        cfg.j_list = {0.05, 2.0};
        cfg.realizations = realizations;
        cfg.weight_cut = 1e-3;
        cfg.samples_per_segment = 1;
        cfg.couplings = {job.coupling};
        cfg.state_sets = {StateSet::Standard};
        cfg.seed = 1;
        cfg.threads = 1;
        cfg.out_dir = job.dir;
        std::ostringstream log;
        run_gate_experiment(cfg, log);
        std::cerr << log.str();
    });

    std::vector<TrendCell> cells;
    const ControlSchedule sched = build_cnot_schedule(1.0, 1.0, 0.05);
    const double tau9 = sched.total_duration();
    for (const Job& job : jobs) {
        TrendCell cell;
        cell.lambda = job.lambda;
        cell.coupling = job.coupling;
        const auto table = testutil::read_csv((job.dir / "metrics.csv").string());
        const std::size_t ct = table.column("time_hbar_over_eps");
        const std::size_t cj = table.column("J");
        const std::size_t cap = table.column("avg_purity");
        const std::size_t caf = table.column("avg_fidelity");
        std::map<double, std::pair<double, int>> psum, fsum;
        for (const auto& row : table.rows) {
            if (std::abs(std::stod(row[ct]) - tau9) > 1e-9) continue;
            const double j = std::stod(row[cj]);
            psum[j].first += std::stod(row[cap]);
            psum[j].second += 1;
            fsum[j].first += std::stod(row[caf]);
            fsum[j].second += 1;
        }
        for (const auto& [j, acc] : psum)
            cell.purity_deficit[j] = 1.0 - acc.first / acc.second;
        for (const auto& [j, acc] : fsum)
            cell.fidelity_deficit[j] = 1.0 - acc.first / acc.second;
        cells.push_back(std::move(cell));
    }
    return cells;
}

Criterion criterion_decoherence_suppression(const std::vector<TrendCell>& cells) {
    Criterion c{"decoherence suppression by intra-bath coupling (J = 2.0 vs 0.05)"};
    bool all_ok = true;
    std::string detail;
    for (const TrendCell& cell : cells) {
        const double d_low = cell.purity_deficit.at(0.05);
        const double d_high = cell.purity_deficit.at(2.0);
        const bool ok = d_high < d_low;
        all_ok = all_ok && ok;
        detail += std::string(coupling_name(cell.coupling)) + " lam=" + j_tag(cell.lambda) +
                  ": 1-P(2.0)=" + fmt(d_high) + (ok ? " < " : " >= ") + "1-P(0.05)=" + fmt(d_low) +
                  (ok ? "" : " [VIOLATED]") + "; ";
    }
    c.pass = all_ok;
    c.detail = detail;
    return c;
}

Criterion criterion_shift_dominance(const std::vector<TrendCell>& cells) {
    Criterion c{"coherent-shift dominance (fidelity deficit >= 5x purity deficit)"};
    bool all_ok = true;
    std::string detail;
    for (const TrendCell& cell : cells) {
        for (const auto& [j, dp] : cell.purity_deficit) {
            const double df = cell.fidelity_deficit.at(j);
            const bool ok = df >= 5.0 * dp;
            all_ok = all_ok && ok;
            detail += std::string(coupling_name(cell.coupling)) + " lam=" + j_tag(cell.lambda) +
                      " J=" + j_tag(j) + ": ratio=" + fmt(dp > 0 ? df / dp : 0.0) +
                      (ok ? "" : " [VIOLATED]") + "; ";
        }
    }
    c.pass = all_ok;
    c.detail = detail;
    return c;
}

// ---------------------------------------------------------------------------
// 8. Canonical-average trends
// ---------------------------------------------------------------------------
Criterion criterion_canonical_trends() {
    Criterion c{"canonical-average trends and the uncoupled-bath oracle"};
    RunConfig cfg;
    cfg.nbath = 10;
    cfg.delta = 0.4;
    cfg.lambda = 0.05;
    cfg.kt = 0.25;
    cfg.j_list = {0.05, 0.25, 0.5, 1.0, 2.0};
    cfg.realizations = 12;
    cfg.weight_cut = 1e-12;
    cfg.seed = 1;
    cfg.threads = g_threads;
    cfg.out_dir = fresh_dir("shift_scan");
    std::ostringstream log;
    const RunManifest manifest = run_shift_scan(cfg, log);
    if (!manifest.failures.empty()) {
        c.detail = "scan failed: " + manifest.failures.front();
        return c;
    }
    const auto table = testutil::read_csv((cfg.out_dir / "shift.csv").string());
    std::map<double, std::pair<double, double>> means;  // J -> (|Sx|, |Sz|)
    for (const auto& row : table.rows)
        if (row[table.column("realization_id")] == "mean")
            means[std::stod(row[table.column("J")])] = {
                std::stod(row[table.column("abs_sigma_x")]),
                std::stod(row[table.column("abs_sigma_z")])};

    const bool sz_ok = means.at(2.0).second < means.at(0.05).second;
    const bool sx_ok = means.at(2.0).first >= 0.9 * means.at(0.05).first;

    // uncoupled bath: canonical average against the independent-qubit formula
    BathParams p;
    p.nbath = 10;
    p.delta = 0.4;
    p.j = 0.0;
    p.lambda = 0.05;
    p.seed = 1;
    const Realization r = sample_realization(p);
    const SpectralDecomposition spec = diagonalize(build_bath_hamiltonian(r));
    const ThermalEnsemble ens = thermal_ensemble(spec, 0.25, 1e-15);
    std::vector<PauliTerm> terms;
    for (std::size_t i = 0; i < 10; ++i) {
        PauliTerm t;
        t.coefficient = r.lambda_z[i];
        t.letters.assign(10, Pauli::I);
        t.letters[i] = Pauli::Z;
        terms.push_back(std::move(t));
    }
    const double computed = canonical_average(OperatorSum(10, std::move(terms)), spec, ens);
    double analytic = 0.0;
    for (std::size_t i = 0; i < 10; ++i) {
        const double bmag = std::hypot(r.bx[i], r.bz[i]);
        analytic += r.lambda_z[i] * (r.bz[i] / bmag) * std::tanh(bmag / (2.0 * 0.25));
    }
    const double oracle_err = std::abs(computed - analytic);

    c.pass = sz_ok && sx_ok && oracle_err < 1e-10;
    c.detail = "|Sz|: " + fmt(means.at(0.05).second) + " -> " + fmt(means.at(2.0).second) +
               (sz_ok ? " (decreases)" : " [VIOLATED]") + "; |Sx|: " + fmt(means.at(0.05).first) +
               " -> " + fmt(means.at(2.0).first) + (sx_ok ? " (>= 90%)" : " [VIOLATED]") +
               "; J=0 analytic error " + fmt(oracle_err) + " (tol 1e-10)";
    return c;
}

// ---------------------------------------------------------------------------
// 9. Determinism
// ---------------------------------------------------------------------------
Criterion criterion_determinism() {
    Criterion c{"byte-identical outputs for identical configs and seeds"};
    auto make_cfg = [&](const std::filesystem::path& dir, int threads) {
        RunConfig cfg;
        cfg.nbath = 4;
        cfg.j_list = {0.05, 0.5};
        cfg.lambda = 0.05;
        cfg.realizations = 2;
        cfg.weight_cut = 0.05;
        cfg.samples_per_segment = 5;
        cfg.couplings = {CouplingType::BitFlip, CouplingType::Phase};
        cfg.state_sets = {StateSet::Standard, StateSet::Bell};
        cfg.seed = 3;
        cfg.threads = threads;
        cfg.out_dir = dir;
        return cfg;
    };
    std::ostringstream log;
    const auto a = fresh_dir("det_a"), b = fresh_dir("det_b"), c2 = fresh_dir("det_c");
    run_gate_experiment(make_cfg(a, 1), log);
    run_gate_experiment(make_cfg(b, 1), log);
    run_gate_experiment(make_cfg(c2, g_threads), log);
    bool ok = testutil::read_file_bytes((a / "metrics.csv").string()) ==
              testutil::read_file_bytes((b / "metrics.csv").string());
    const bool threads_ok = testutil::read_file_bytes((a / "metrics.csv").string()) ==
                            testutil::read_file_bytes((c2 / "metrics.csv").string());

    run_spectrum_scan(make_cfg(fresh_dir("det_sa"), 1), log);
    run_spectrum_scan(make_cfg(fresh_dir("det_sb"), g_threads), log);
    const bool spec_ok =
        testutil::read_file_bytes((g_out_root / "det_sa" / "levelstats.csv").string()) ==
        testutil::read_file_bytes((g_out_root / "det_sb" / "levelstats.csv").string());

    run_shift_scan(make_cfg(fresh_dir("det_ha"), 1), log);
    run_shift_scan(make_cfg(fresh_dir("det_hb"), g_threads), log);
    const bool shift_ok =
        testutil::read_file_bytes((g_out_root / "det_ha" / "shift.csv").string()) ==
        testutil::read_file_bytes((g_out_root / "det_hb" / "shift.csv").string());

    c.pass = ok && threads_ok && spec_ok && shift_ok;
    c.detail = std::string("gate repeat ") + (ok ? "identical" : "DIFFERS") + "; across threads " +
               (threads_ok ? "identical" : "DIFFERS") + "; spectrum " +
               (spec_ok ? "identical" : "DIFFERS") + "; shift " +
               (shift_ok ? "identical" : "DIFFERS");
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    g_out_root = std::filesystem::temp_directory_path() / "flawsim_acceptance";
    g_threads = static_cast<int>(std::max(2u, std::thread::hardware_concurrency()));
    int trend_realizations = 4;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--out" && i + 1 < argc) g_out_root = argv[++i];
        else if (arg == "--threads" && i + 1 < argc) g_threads = std::atoi(argv[++i]);
        else if (arg == "--trend-realizations" && i + 1 < argc)
            trend_realizations = std::atoi(argv[++i]);
        else {
            std::cerr << "error: unknown argument " << arg << "\n";
            return 2;
        }
    }
    std::filesystem::create_directories(g_out_root);

    std::vector<Criterion> results;
    auto run = [&](auto&& fn, auto&&... args) {
        try {
            results.push_back(fn(args...));
        } catch (const std::exception& e) {
            results.push_back({"(criterion crashed)", false, e.what()});
        }
        const Criterion& c = results.back();
        std::printf("[%zu/9] %-64s %s\n", results.size(), c.name.c_str(),
                    c.pass ? "PASS" : "FAIL");
        std::printf("      %s\n", c.detail.c_str());
        std::fflush(stdout);
    };

    run(criterion_gate_protocol);
    run(criterion_null_coupling);
    run(criterion_propagator_oracle);
    run(criterion_partial_trace);
    run(criterion_chaos_crossover);

    std::vector<TrendCell> cells;
    try {
        cells = run_trend_matrix(trend_realizations);
        run(criterion_decoherence_suppression, cells);
        run(criterion_shift_dominance, cells);
    } catch (const std::exception& e) {
        results.push_back({"decoherence suppression (runs failed)", false, e.what()});
        std::printf("[%zu/9] %-64s FAIL\n      %s\n", results.size(),
                    results.back().name.c_str(), e.what());
        results.push_back({"shift dominance (runs failed)", false, e.what()});
        std::printf("[%zu/9] %-64s FAIL\n      %s\n", results.size(),
                    results.back().name.c_str(), e.what());
    }

    run(criterion_canonical_trends);
    run(criterion_determinism);

    int failed = 0;
    for (const auto& c : results)
        if (!c.pass) ++failed;
    std::printf("%d/%zu criteria passed\n", static_cast<int>(results.size()) - failed,
                results.size());
    return failed == 0 ? 0 : 1;
}
