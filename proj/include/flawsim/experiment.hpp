#pragma once

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "flawsim/io.hpp"
#include "flawsim/model.hpp"
#include "flawsim/observables.hpp"
#include "flawsim/pauli.hpp"
#include "flawsim/propagate.hpp"
#include "flawsim/spectral.hpp"
#include "flawsim/thread_pool.hpp"
#include "flawsim/version.hpp"

namespace flawsim {

/// Full run description. Parsed from flat key = value text; unknown keys are
/// rejected. All energies in eps, times in hbar/eps.
struct RunConfig {
    // control schedule
    double bx = 1.0;
    double bz = 1.0;
    double jx_gate = 0.05;
    // bath
    int nbath = 10;
    double b0x = 1.0;
    double b0z = 1.0;
    double delta = 0.4;
    std::vector<double> j_list = {0.05, 0.25, 0.5, 1.0, 2.0};
    double lambda = 0.05;
    double kt = 0.25;
    bool grid_adjacency = false;  // restrict couplings to 3x4-grid neighbors (nbath = 10 only)
    // run shape
    std::vector<CouplingType> couplings = {CouplingType::BitFlip};
    std::vector<StateSet> state_sets = {StateSet::Standard, StateSet::Bell};
    int realizations = 10;
    std::uint64_t seed = 1;
    // numerics
    double rtol = 1e-9;
    double atol = 1e-11;
    double weight_cut = 1e-6;
    int samples_per_segment = 40;
    int threads = 1;
    // output
    std::filesystem::path out_dir = "out";
};

inline RunConfig parse_config_stream(std::istream& in, const std::string& origin) {
    auto kv = detail::parse_key_values(in, origin);
    RunConfig cfg;
    auto take = [&](const char* key) -> std::optional<std::string> {
        auto it = kv.find(key);
        if (it == kv.end()) return std::nullopt;
        std::string v = it->second;
        kv.erase(it);
        return v;
    };
    if (auto v = take("bx")) cfg.bx = parse_double(*v);
    if (auto v = take("bz")) cfg.bz = parse_double(*v);
    if (auto v = take("jx_gate")) cfg.jx_gate = parse_double(*v);
    if (auto v = take("nbath")) cfg.nbath = static_cast<int>(parse_u64(*v));
    if (auto v = take("b0x")) cfg.b0x = parse_double(*v);
    if (auto v = take("b0z")) cfg.b0z = parse_double(*v);
    if (auto v = take("delta")) cfg.delta = parse_double(*v);
    if (auto v = take("j_list")) cfg.j_list = detail::parse_double_list(*v);
    if (auto v = take("lambda")) cfg.lambda = parse_double(*v);
    if (auto v = take("kt")) cfg.kt = parse_double(*v);
    if (auto v = take("grid_adjacency")) {
        if (*v == "true" || *v == "1") cfg.grid_adjacency = true;
        else if (*v == "false" || *v == "0") cfg.grid_adjacency = false;
        else throw std::invalid_argument(origin + ": grid_adjacency must be true or false");
    }
    if (auto v = take("coupling_type")) {
        cfg.couplings.clear();
        if (*v == "bitflip") cfg.couplings = {CouplingType::BitFlip};
        else if (*v == "phase") cfg.couplings = {CouplingType::Phase};
        else if (*v == "both") cfg.couplings = {CouplingType::BitFlip, CouplingType::Phase};
        else throw std::invalid_argument(origin + ": coupling_type must be bitflip, phase or both");
    }
    if (auto v = take("state_sets")) {
        cfg.state_sets.clear();
        std::istringstream iss(*v);
        std::string tok;
        while (iss >> tok) {
            if (tok == "standard") cfg.state_sets.push_back(StateSet::Standard);
            else if (tok == "bell") cfg.state_sets.push_back(StateSet::Bell);
            else throw std::invalid_argument(origin + ": state set must be standard or bell");
        }
        if (cfg.state_sets.empty())
            throw std::invalid_argument(origin + ": state_sets must not be empty");
    }
    if (auto v = take("realizations")) cfg.realizations = static_cast<int>(parse_u64(*v));
    if (auto v = take("seed")) cfg.seed = parse_u64(*v);
    if (auto v = take("rtol")) cfg.rtol = parse_double(*v);
    if (auto v = take("atol")) cfg.atol = parse_double(*v);
    if (auto v = take("weight_cut")) cfg.weight_cut = parse_double(*v);
    if (auto v = take("samples_per_segment"))
        cfg.samples_per_segment = static_cast<int>(parse_u64(*v));
    if (auto v = take("threads")) cfg.threads = static_cast<int>(parse_u64(*v));
    if (auto v = take("out_dir")) cfg.out_dir = *v;
    if (!kv.empty())
        throw std::invalid_argument(origin + ": unknown key '" + kv.begin()->first + "'");
    return cfg;
}

inline RunConfig parse_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path.string());
    return parse_config_stream(in, path.string());
}

inline void validate_config(const RunConfig& cfg) {
    if (cfg.nbath < 1) throw std::invalid_argument("nbath must be at least 1");
    if (cfg.nbath + 2 > 14)
        throw std::length_error("register of " + std::to_string(cfg.nbath + 2) +
                                " qubits exceeds the 14-qubit capacity guard");
    if (!(cfg.bx > 0) || !(cfg.bz > 0) || !(cfg.jx_gate > 0))
        throw std::invalid_argument("gate parameters must be positive");
    if (cfg.j_list.empty()) throw std::invalid_argument("j_list must not be empty");
    for (double j : cfg.j_list)
        if (j < 0) throw std::invalid_argument("j values must be non-negative");
    if (cfg.lambda < 0 || cfg.delta < 0) throw std::invalid_argument("bounds must be non-negative");
    if (!(cfg.kt > 0)) throw std::invalid_argument("kt must be positive");
    if (cfg.realizations < 1) throw std::invalid_argument("realizations must be at least 1");
    if (!(cfg.weight_cut > 0 && cfg.weight_cut < 1))
        throw std::invalid_argument("weight_cut must lie in (0, 1)");
    if (cfg.samples_per_segment < 1)
        throw std::invalid_argument("samples_per_segment must be at least 1");
    if (cfg.grid_adjacency && cfg.nbath != 10)
        throw std::invalid_argument("grid_adjacency requires nbath = 10");
}

/// Neighbor pairs of the ten idle sites on the 3x4 grid (the two center
/// sites of the middle row are the active qubits).
inline std::vector<std::pair<int, int>> grid3x4_idle_pairs() {
    std::vector<std::pair<int, int>> coords;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 4; ++c)
            if (!(r == 1 && (c == 1 || c == 2))) coords.emplace_back(r, c);
    auto index_of = [&](int r, int c) -> int {
        for (std::size_t k = 0; k < coords.size(); ++k)
            if (coords[k].first == r && coords[k].second == c) return static_cast<int>(k);
        return -1;
    };
    std::vector<std::pair<int, int>> pairs;
    for (const auto& [r, c] : coords) {
        for (const auto& [dr, dc] : std::vector<std::pair<int, int>>{{0, 1}, {1, 0}}) {
            const int other = index_of(r + dr, c + dc);
            if (other >= 0) pairs.emplace_back(index_of(r, c), other);
        }
    }
    return pairs;
}

/// Samples realization k of a config at intra-bath bound j. The seed is
/// seed + k, so fields and coupling shapes are shared across the J sweep.
/// With grid adjacency on, couplings outside the neighbor mask are zeroed
/// after sampling, which keeps the draw order value-independent.
inline Realization sample_config_realization(const RunConfig& cfg, int k, double j) {
    BathParams params;
    params.nbath = cfg.nbath;
    params.b0x = cfg.b0x;
    params.b0z = cfg.b0z;
    params.delta = cfg.delta;
    params.j = j;
    params.lambda = cfg.lambda;
    params.seed = cfg.seed + static_cast<std::uint64_t>(k);
    Realization r = sample_realization(params);
    if (cfg.grid_adjacency) {
        std::vector<bool> keep(r.jxx.size(), false);
        for (const auto& [a, b] : grid3x4_idle_pairs()) {
            const auto i = static_cast<std::size_t>(std::min(a, b));
            const auto jj = static_cast<std::size_t>(std::max(a, b));
            keep[r.pair_index(i, jj)] = true;
        }
        for (std::size_t p = 0; p < r.jxx.size(); ++p)
            if (!keep[p]) r.jxx[p] = 0.0;
    }
    return r;
}

namespace detail {

/// Time-resolved system process matrix: entry ((s,a),(s',b)) at each sample is
/// <a| Tr_B[ U(t) (|s><s'| (x) rho_B) U+(t) ] |b>. Any initial system state
/// c gives rho(t)[a,b] = sum_{s,s'} c_s conj(c_{s'}) C[(s,a),(s',b)].
using ProcessMatrix = Eigen::Matrix<Complex, 16, 16>;

struct CellResult {
    std::vector<double> times;
    std::vector<ProcessMatrix> process;  // one per sample
};

/// Propagates the four system basis columns for one thermal member and
/// accumulates its weighted process-matrix contribution.
inline void accumulate_member(const ControlSchedule& schedule, const OperatorSum& static_h,
                              const Eigen::VectorXcd& bath_state, double weight,
                              const std::vector<double>& sample_times, double rtol, double atol,
                              double norm_drift_tol, std::vector<ProcessMatrix>& acc) {
    const std::size_t nbath_dim = static_cast<std::size_t>(bath_state.size());
    const std::size_t dim = 4 * nbath_dim;
    StateBlock block = StateBlock::Zero(static_cast<Eigen::Index>(dim), 4);
    for (std::size_t bb = 0; bb < nbath_dim; ++bb)
        for (int s = 0; s < 4; ++s)
            block(static_cast<Eigen::Index>(bb * 4 + static_cast<std::size_t>(s)), s) =
                bath_state[static_cast<Eigen::Index>(bb)];

    propagate_block(schedule, static_h, block, sample_times, rtol, atol,
                    [&](std::size_t sample_idx, double t, const StateBlock& blk) {
                        // column norms stay at 1 for exact unitary evolution
                        for (int s = 0; s < 4; ++s) {
                            const double drift = std::abs(blk.col(s).norm() - 1.0);
                            if (drift > norm_drift_tol)
                                throw IntegrationError("norm drift " + std::to_string(drift) +
                                                       " at t=" + std::to_string(t));
                        }
                        ProcessMatrix c = ProcessMatrix::Zero();
                        for (std::size_t bb = 0; bb < nbath_dim; ++bb) {
                            const auto base = static_cast<Eigen::Index>(bb * 4);
                            for (int s = 0; s < 4; ++s)
                                for (int a = 0; a < 4; ++a) {
                                    const Complex va = blk(base + a, s);
                                    if (va == Complex{0.0, 0.0}) continue;
                                    for (int s2 = 0; s2 < 4; ++s2)
                                        for (int b = 0; b < 4; ++b)
                                            c(s * 4 + a, s2 * 4 + b) +=
                                                va * std::conj(blk(base + b, s2));
                                }
                        }
                        acc[sample_idx] += weight * c;
                    });
}

inline ReducedDensity state_density(const ProcessMatrix& c, const Eigen::Vector4cd& psi) {
    ReducedDensity rho = ReducedDensity::Zero();
    for (int s = 0; s < 4; ++s)
        for (int s2 = 0; s2 < 4; ++s2) {
            const Complex w = psi[s] * std::conj(psi[s2]);
            if (w == Complex{0.0, 0.0}) continue;
            rho += w * c.block<4, 4>(s * 4, s2 * 4);
        }
    return rho;
}

inline std::string timestamp_utc() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm_utc{};
    gmtime_r(&t, &tm_utc);
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

}  // namespace detail

/// Records what a run produced and from which inputs.
struct RunManifest {
    std::string command;
    RunConfig config;
    std::vector<std::string> realization_files;
    std::vector<std::string> output_files;
    std::vector<std::string> failures;
    std::string started;
    std::string finished;

    void write(const std::filesystem::path& path) const {
        std::ofstream out(path);
        if (!out) throw std::runtime_error("cannot open " + path.string());
        out << "command = " << command << "\n";
        out << "version = " << kVersion << "\n";
        out << "started = " << started << "\n";
        out << "finished = " << finished << "\n";
        out << "config.bx = " << format_exact(config.bx) << "\n";
        out << "config.bz = " << format_exact(config.bz) << "\n";
        out << "config.jx_gate = " << format_exact(config.jx_gate) << "\n";
        out << "config.nbath = " << config.nbath << "\n";
        out << "config.b0x = " << format_exact(config.b0x) << "\n";
        out << "config.b0z = " << format_exact(config.b0z) << "\n";
        out << "config.delta = " << format_exact(config.delta) << "\n";
        out << "config.j_list = " << detail::join_exact(config.j_list) << "\n";
        out << "config.lambda = " << format_exact(config.lambda) << "\n";
        out << "config.kt = " << format_exact(config.kt) << "\n";
        out << "config.grid_adjacency = " << (config.grid_adjacency ? "true" : "false") << "\n";
        out << "config.coupling_type = ";
        for (std::size_t i = 0; i < config.couplings.size(); ++i)
            out << (i ? " " : "") << coupling_name(config.couplings[i]);
        out << "\n";
        out << "config.state_sets = ";
        for (std::size_t i = 0; i < config.state_sets.size(); ++i)
            out << (i ? " " : "") << state_set_name(config.state_sets[i]);
        out << "\n";
        out << "config.realizations = " << config.realizations << "\n";
        out << "config.seed = " << config.seed << "\n";
        out << "config.rtol = " << format_exact(config.rtol) << "\n";
        out << "config.atol = " << format_exact(config.atol) << "\n";
        out << "config.weight_cut = " << format_exact(config.weight_cut) << "\n";
        out << "config.samples_per_segment = " << config.samples_per_segment << "\n";
        out << "config.threads = " << config.threads << "\n";
        for (const auto& f : realization_files) out << "realization_file = " << f << "\n";
        for (const auto& f : output_files) out << "output_file = " << f << "\n";
        for (const auto& f : failures) out << "failure = " << f << "\n";
    }
};

/// Formats a J value for file names ("0.05" style, no exponent surprises).
inline std::string j_tag(double j) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", j);
    return buf;
}

/// Runs the full gate study: for every realization x J x coupling, builds the
/// bath, prepares the thermal ensemble, propagates each (member x system
/// basis state), reduces to two-qubit densities and writes the metrics CSV.
/// Returns the manifest; failed cells are logged and skipped.
inline RunManifest run_gate_experiment(const RunConfig& cfg, std::ostream& log = std::cerr) {
    validate_config(cfg);
    std::filesystem::create_directories(cfg.out_dir);
    std::filesystem::create_directories(cfg.out_dir / "realizations");

    RunManifest manifest;
    manifest.command = "gate";
    manifest.config = cfg;
    manifest.started = detail::timestamp_utc();

    const ControlSchedule schedule = build_cnot_schedule(cfg.bx, cfg.bz, cfg.jx_gate);
    const std::vector<double> times = segment_sample_times(schedule, cfg.samples_per_segment);
    const double to_seconds = seconds_per_time_unit();

    const auto metrics_path = cfg.out_dir / "metrics.csv";
    CsvWriter csv(metrics_path,
                  {"time_hbar_over_eps", "time_seconds", "state_label", "purity", "fidelity",
                   "avg_purity", "avg_fidelity", "set_name", "coupling_type", "J",
                   "realization_id"});
    manifest.output_files.push_back(metrics_path.string());

    // ideal references are coupling/realization independent
    struct IdealSet {
        std::array<LabeledState, 4> states;
        std::array<std::vector<ReducedDensity>, 4> rho_ideal;
    };
    std::vector<IdealSet> ideals;
    for (StateSet set : cfg.state_sets) {
        IdealSet is;
        is.states = states_of(set);
        for (int s = 0; s < 4; ++s)
            is.rho_ideal[static_cast<std::size_t>(s)] =
                ideal_trajectory(schedule, is.states[static_cast<std::size_t>(s)].amplitudes, times);
        ideals.push_back(std::move(is));
    }

    for (double j : cfg.j_list) {
        for (int k = 0; k < cfg.realizations; ++k) {
            const std::string cell_id =
                "realization=" + std::to_string(k) + " J=" + j_tag(j);
            try {
                const Realization realization = sample_config_realization(cfg, k, j);
                const auto rpath = cfg.out_dir / "realizations" /
                                   ("realization_r" + std::to_string(k) + "_J" + j_tag(j) + ".txt");
                write_realization_file(realization, rpath);
                manifest.realization_files.push_back(rpath.string());

                const SpectralDecomposition spec = diagonalize(build_bath_hamiltonian(realization));
                const ThermalEnsemble ensemble = thermal_ensemble(spec, cfg.kt, cfg.weight_cut);
                log << "gate: " << cell_id << " retained " << ensemble.members.size()
                    << " thermal members (raw weight "
                    << format_metric(ensemble.retained_raw_weight) << ")\n";

                const OperatorSum bath_full = embed_bath_operator(build_bath_hamiltonian(realization));

                for (CouplingType coupling : cfg.couplings) {
                    const OperatorSum static_h = bath_full + build_interaction(realization, coupling);

                    // one process-matrix series per member, folded in member order
                    std::vector<std::vector<detail::ProcessMatrix>> contributions(
                        ensemble.members.size());
                    parallel_for(ensemble.members.size(), cfg.threads, [&](std::size_t m) {
                        const ThermalMember& member = ensemble.members[m];
                        std::vector<detail::ProcessMatrix> acc(
                            times.size(), detail::ProcessMatrix::Zero());
                        detail::accumulate_member(schedule, static_h,
                                                  spec.eigenvectors.col(member.eigen_index),
                                                  member.weight, times, cfg.rtol, cfg.atol, 1e-6,
                                                  acc);
                        contributions[m] = std::move(acc);
                    });
                    std::vector<detail::ProcessMatrix> process(times.size(),
                                                               detail::ProcessMatrix::Zero());
                    for (const auto& contrib : contributions)
                        for (std::size_t t = 0; t < times.size(); ++t) process[t] += contrib[t];

                    for (std::size_t set_idx = 0; set_idx < cfg.state_sets.size(); ++set_idx) {
                        const IdealSet& ideal = ideals[set_idx];
                        MetricsSeries series;
                        series.set = cfg.state_sets[set_idx];
                        series.times = times;
                        for (int s = 0; s < 4; ++s) {
                            const auto su = static_cast<std::size_t>(s);
                            series.labels[su] = ideal.states[su].label;
                            series.purity[su].reserve(times.size());
                            series.fidelity[su].reserve(times.size());
                            for (std::size_t t = 0; t < times.size(); ++t) {
                                const ReducedDensity rho =
                                    detail::state_density(process[t], ideal.states[su].amplitudes);
                                series.purity[su].push_back(purity(rho));
                                series.fidelity[su].push_back(
                                    fidelity(rho, ideal.rho_ideal[su][t]));
                            }
                        }
                        series = average_over_set(std::move(series));
                        for (std::size_t t = 0; t < times.size(); ++t)
                            for (int s = 0; s < 4; ++s) {
                                const auto su = static_cast<std::size_t>(s);
                                csv.write_row({format_metric(times[t]),
                                               format_metric(times[t] * to_seconds),
                                               series.labels[su],
                                               format_metric(series.purity[su][t]),
                                               format_metric(series.fidelity[su][t]),
                                               format_metric(series.avg_purity[t]),
                                               format_metric(series.avg_fidelity[t]),
                                               state_set_name(series.set),
                                               coupling_name(coupling), j_tag(j),
                                               std::to_string(k)});
                            }
                    }
                }
            } catch (const std::exception& e) {
                log << "error: gate cell " << cell_id << ": " << e.what() << "\n";
                manifest.failures.push_back(cell_id + ": " + e.what());
            }
        }
    }
    csv.flush();
    manifest.finished = detail::timestamp_utc();
    manifest.write(cfg.out_dir / "manifest.txt");
    return manifest;
}

/// Level-statistics scan: spectra, mean gap ratios per (J, realization),
/// ensemble means per J, and normalized spacing samples for histograms.
inline RunManifest run_spectrum_scan(const RunConfig& cfg, std::ostream& log = std::cerr) {
    validate_config(cfg);
    std::filesystem::create_directories(cfg.out_dir);
    std::filesystem::create_directories(cfg.out_dir / "realizations");

    RunManifest manifest;
    manifest.command = "spectrum";
    manifest.config = cfg;
    manifest.started = detail::timestamp_utc();

    const auto stats_path = cfg.out_dir / "levelstats.csv";
    const auto spectra_path = cfg.out_dir / "spectra.csv";
    const auto spacing_path = cfg.out_dir / "spacings.csv";
    CsvWriter stats(stats_path, {"J", "realization_id", "mean_r", "retained_levels"});
    CsvWriter spectra(spectra_path, {"realization_id", "J", "index", "eigenvalue"});
    CsvWriter spacings(spacing_path, {"J", "realization_id", "normalized_spacing"});
    manifest.output_files = {stats_path.string(), spectra_path.string(), spacing_path.string()};

    for (double j : cfg.j_list) {
        // diagonalize realizations in parallel, fold in fixed order
        std::vector<std::optional<std::pair<Realization, SpectralDecomposition>>> cells(
            static_cast<std::size_t>(cfg.realizations));
        std::vector<std::string> errors(static_cast<std::size_t>(cfg.realizations));
        parallel_for(static_cast<std::size_t>(cfg.realizations), cfg.threads, [&](std::size_t k) {
            try {
                Realization r = sample_config_realization(cfg, static_cast<int>(k), j);
                SpectralDecomposition spec = diagonalize(build_bath_hamiltonian(r));
                cells[k] = std::make_pair(std::move(r), std::move(spec));
            } catch (const std::exception& e) {
                errors[k] = e.what();
            }
        });
        double sum_r = 0.0;
        int count_r = 0;
        for (int k = 0; k < cfg.realizations; ++k) {
            const auto ku = static_cast<std::size_t>(k);
            const std::string cell_id = "realization=" + std::to_string(k) + " J=" + j_tag(j);
            if (!cells[ku]) {
                log << "error: spectrum cell " << cell_id << ": " << errors[ku] << "\n";
                manifest.failures.push_back(cell_id + ": " + errors[ku]);
                continue;
            }
            const auto& [realization, spec] = *cells[ku];
            const auto rpath = cfg.out_dir / "realizations" /
                               ("realization_r" + std::to_string(k) + "_J" + j_tag(j) + ".txt");
            write_realization_file(realization, rpath);
            manifest.realization_files.push_back(rpath.string());

            std::vector<double> evals(spec.eigenvalues.data(),
                                      spec.eigenvalues.data() + spec.eigenvalues.size());
            for (std::size_t i = 0; i < evals.size(); ++i)
                spectra.write_row({std::to_string(k), j_tag(j), std::to_string(i),
                                   format_metric(evals[i])});
            const LevelStats ls = r_statistic(evals);
            stats.write_row({j_tag(j), std::to_string(k), format_metric(ls.mean_r),
                             std::to_string(ls.levels_used)});
            sum_r += ls.mean_r;
            ++count_r;

            // normalized consecutive spacings over the trimmed window
            const std::size_t lo = evals.size() / 10, hi = evals.size() - evals.size() / 10;
            std::vector<double> gaps;
            for (std::size_t i = lo; i + 1 < hi; ++i) {
                const double s = evals[i + 1] - evals[i];
                if (s > 1e-12) gaps.push_back(s);
            }
            double mean_gap = 0.0;
            for (double g : gaps) mean_gap += g;
            mean_gap /= static_cast<double>(gaps.size());
            for (double g : gaps)
                spacings.write_row({j_tag(j), std::to_string(k), format_metric(g / mean_gap)});
        }
        if (count_r > 0)
            stats.write_row({j_tag(j), "mean", format_metric(sum_r / count_r),
                             std::to_string(count_r)});
    }
    manifest.finished = detail::timestamp_utc();
    manifest.write(cfg.out_dir / "manifest.txt");
    return manifest;
}

/// Canonical-average scan: |Sigma_x| and |Sigma_z| per (J, realization) plus
/// ensemble means per J.
inline RunManifest run_shift_scan(const RunConfig& cfg, std::ostream& log = std::cerr) {
    validate_config(cfg);
    std::filesystem::create_directories(cfg.out_dir);
    std::filesystem::create_directories(cfg.out_dir / "realizations");

    RunManifest manifest;
    manifest.command = "shift";
    manifest.config = cfg;
    manifest.started = detail::timestamp_utc();

    const auto shift_path = cfg.out_dir / "shift.csv";
    CsvWriter csv(shift_path,
                  {"J", "realization_id", "abs_sigma_x", "abs_sigma_z", "retained_members"});
    manifest.output_files = {shift_path.string()};

    for (double j : cfg.j_list) {
        std::vector<std::optional<std::array<double, 3>>> results(
            static_cast<std::size_t>(cfg.realizations));
        std::vector<std::string> errors(static_cast<std::size_t>(cfg.realizations));
        std::vector<Realization> reals(static_cast<std::size_t>(cfg.realizations));
        parallel_for(static_cast<std::size_t>(cfg.realizations), cfg.threads, [&](std::size_t k) {
            try {
                Realization r = sample_config_realization(cfg, static_cast<int>(k), j);
                const SpectralDecomposition spec = diagonalize(build_bath_hamiltonian(r));
                const ThermalEnsemble ens = thermal_ensemble(spec, cfg.kt, cfg.weight_cut);
                // bath-register views of the coupling operators
                OperatorSum sigma_x(r.bx.size()), sigma_z(r.bx.size());
                {
                    std::vector<PauliTerm> tx, tz;
                    for (std::size_t i = 0; i < r.bx.size(); ++i) {
                        PauliTerm t;
                        t.letters.assign(r.bx.size(), Pauli::I);
                        t.coefficient = r.lambda_x[i];
                        t.letters[i] = Pauli::X;
                        tx.push_back(t);
                        t.coefficient = r.lambda_z[i];
                        t.letters[i] = Pauli::Z;
                        tz.push_back(t);
                    }
                    sigma_x = OperatorSum(r.bx.size(), std::move(tx));
                    sigma_z = OperatorSum(r.bx.size(), std::move(tz));
                }
                results[k] = std::array<double, 3>{
                    std::abs(canonical_average(sigma_x, spec, ens)),
                    std::abs(canonical_average(sigma_z, spec, ens)),
                    static_cast<double>(ens.members.size())};
                reals[k] = std::move(r);
            } catch (const std::exception& e) {
                errors[k] = e.what();
            }
        });
        double sx = 0.0, sz = 0.0;
        int count = 0;
        for (int k = 0; k < cfg.realizations; ++k) {
            const auto ku = static_cast<std::size_t>(k);
            const std::string cell_id = "realization=" + std::to_string(k) + " J=" + j_tag(j);
            if (!results[ku]) {
                log << "error: shift cell " << cell_id << ": " << errors[ku] << "\n";
                manifest.failures.push_back(cell_id + ": " + errors[ku]);
                continue;
            }
            const auto rpath = cfg.out_dir / "realizations" /
                               ("realization_r" + std::to_string(k) + "_J" + j_tag(j) + ".txt");
            write_realization_file(reals[ku], rpath);
            manifest.realization_files.push_back(rpath.string());
            csv.write_row({j_tag(j), std::to_string(k), format_metric((*results[ku])[0]),
                           format_metric((*results[ku])[1]),
                           std::to_string(static_cast<long>((*results[ku])[2]))});
            sx += (*results[ku])[0];
            sz += (*results[ku])[1];
            ++count;
        }
        if (count > 0)
            csv.write_row({j_tag(j), "mean", format_metric(sx / count), format_metric(sz / count),
                           std::to_string(count)});
    }
    manifest.finished = detail::timestamp_utc();
    manifest.write(cfg.out_dir / "manifest.txt");
    return manifest;
}

/// Protocol validation report.
struct GateValidation {
    double cnot_deviation = 0.0;      // max entrywise, after global-phase alignment
    double total_time = 0.0;          // hbar/eps
    double total_time_seconds = 0.0;
    std::vector<std::pair<std::string, double>> null_coupling_fidelities;  // 8 states
    bool passed(double deviation_tol = 1e-10, double fidelity_tol = 1e-8) const {
        if (cnot_deviation >= deviation_tol) return false;
        for (const auto& [label, f] : null_coupling_fidelities)
            if (f < 1.0 - fidelity_tol) return false;
        return true;
    }
};

/// Composes the nine bare segment exponentials and compares against CNOT up
/// to a global phase; then runs the full-register lambda = 0 pipeline and
/// reports endpoint fidelities for all eight initial states.
inline GateValidation validate_gate(const RunConfig& cfg, std::ostream& log = std::cerr) {
    validate_config(cfg);
    GateValidation report;
    const ControlSchedule schedule = build_cnot_schedule(cfg.bx, cfg.bz, cfg.jx_gate);
    report.total_time = schedule.total_duration();
    report.total_time_seconds = report.total_time * seconds_per_time_unit();

    Eigen::Matrix4cd u = Eigen::Matrix4cd::Identity();
    for (const auto& seg : schedule.segments) {
        Eigen::Matrix4cd h = to_dense(seg.hamiltonian);
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix4cd> sol(h);
        u = sol.eigenvectors() *
                (Complex{0.0, -seg.duration} * sol.eigenvalues().array().cast<Complex>())
                    .exp()
                    .matrix()
                    .asDiagonal() *
                sol.eigenvectors().adjoint() * u;
    }
    // align global phase on the largest entry
    Eigen::Index mr = 0, mc = 0;
    u.cwiseAbs().maxCoeff(&mr, &mc);
    const Complex phase = u(mr, mc) / std::abs(u(mr, mc));
    report.cnot_deviation = ((u / phase) - ideal_cnot()).cwiseAbs().maxCoeff();

    // lambda = 0 end-to-end check on the full register
    RunConfig null_cfg = cfg;
    null_cfg.lambda = 0.0;
    const double j = cfg.j_list.front();
    const Realization realization = sample_config_realization(null_cfg, 0, j);
    const SpectralDecomposition spec = diagonalize(build_bath_hamiltonian(realization));
    const ThermalEnsemble ensemble = thermal_ensemble(spec, cfg.kt, cfg.weight_cut);
    log << "validate: retained " << ensemble.members.size() << " thermal members\n";
    const OperatorSum static_h = embed_bath_operator(build_bath_hamiltonian(realization)) +
                                 build_interaction(realization, CouplingType::BitFlip);
    const std::vector<double> times = {report.total_time};

    std::vector<std::vector<detail::ProcessMatrix>> contributions(ensemble.members.size());
    parallel_for(ensemble.members.size(), cfg.threads, [&](std::size_t m) {
        std::vector<detail::ProcessMatrix> acc(1, detail::ProcessMatrix::Zero());
        detail::accumulate_member(schedule, static_h,
                                  spec.eigenvectors.col(ensemble.members[m].eigen_index),
                                  ensemble.members[m].weight, times, cfg.rtol, cfg.atol, 1e-6, acc);
        contributions[m] = std::move(acc);
    });
    detail::ProcessMatrix process = detail::ProcessMatrix::Zero();
    for (const auto& c : contributions) process += c[0];

    for (StateSet set : {StateSet::Standard, StateSet::Bell}) {
        for (const LabeledState& st : states_of(set)) {
            const ReducedDensity rho = detail::state_density(process, st.amplitudes);
            const Eigen::Vector4cd ideal_psi = ideal_cnot() * st.amplitudes;
            const ReducedDensity ideal_rho = ideal_psi * ideal_psi.adjoint();
            report.null_coupling_fidelities.emplace_back(
                std::string(state_set_name(set)) + ":" + st.label, fidelity(rho, ideal_rho));
        }
    }
    return report;
}

inline void write_validation_report(const GateValidation& v, std::ostream& out) {
    out << "cnot_max_deviation = " << format_metric(v.cnot_deviation) << "\n";
    out << "total_gate_time_hbar_over_eps = " << format_metric(v.total_time) << "\n";
    out << "total_gate_time_seconds = " << format_metric(v.total_time_seconds) << "\n";
    for (const auto& [label, f] : v.null_coupling_fidelities)
        out << "null_coupling_fidelity." << label << " = " << format_metric(f) << "\n";
    out << "result = " << (v.passed() ? "pass" : "fail") << "\n";
}

}  // namespace flawsim
