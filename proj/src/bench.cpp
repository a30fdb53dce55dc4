#include "bcad/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "bcad/arity_workload.hpp"
#include "bcad/counters.hpp"
#include "bcad/hmlstm.hpp"
#include "bcad/oracle.hpp"
#include "bcad/parallel.hpp"

namespace bcad::bench {
namespace {

std::uint64_t now_ns() {
    return static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::nanoseconds>(
            std::chrono::steady_clock::now().time_since_epoch())
            .count());
}

// Distinct deterministic stream per (seed, size) pair.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t x = seed ^ (salt * 0x9e3779b97f4a7c15ULL);
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    return x;
}

struct TimingStats {
    std::uint64_t min_ns = 0;
    std::uint64_t median_ns = 0;
    std::uint64_t mean_ns = 0;
};

TimingStats summarize(std::vector<std::uint64_t> samples) {
    TimingStats s;
    std::sort(samples.begin(), samples.end());
    s.min_ns = samples.front();
    const std::size_t n = samples.size();
    s.median_ns = n % 2 ? samples[n / 2]
                        : static_cast<std::uint64_t>(std::llround(
                              (static_cast<double>(samples[n / 2 - 1]) +
                               static_cast<double>(samples[n / 2])) /
                              2.0));
    double total = 0;
    for (std::uint64_t v : samples) total += static_cast<double>(v);
    s.mean_ns = static_cast<std::uint64_t>(std::llround(total / static_cast<double>(n)));
    return s;
}

void validate_common(const BenchConfig& cfg) {
    if (cfg.repetitions < 1) throw ConfigError("repetitions must be >= 1");
    if (cfg.warmup < 0) throw ConfigError("warmup must be >= 0");
    if (cfg.sizes.empty()) throw ConfigError("at least one size is required");
    for (std::int64_t n : cfg.sizes)
        if (n < 1) throw ConfigError("matrix side must be >= 1, got " + std::to_string(n));
    if (cfg.threads < 0) throw ConfigError("threads must be >= 0");
}

bool known_impl(const std::string& name) {
    return name == kImplMixedCache || name == kImplMixedRecompute ||
           name == kImplReverseUnfused || name == kImplForwardOnly;
}

template <class Real>
bool tensors_close(const Tensor<Real>& a, const Tensor<Real>& b, double rtol, double atol) {
    if (!(a.shape() == b.shape())) return false;
    for (std::int64_t e = 0; e < a.volume(); ++e) {
        const double x = static_cast<double>(a[e]);
        const double y = static_cast<double>(b[e]);
        const double scale = std::max(std::fabs(x), std::fabs(y));
        if (std::fabs(x - y) > atol + rtol * scale) return false;
    }
    return true;
}

template <class Real>
struct CellRunResult {
    CellGradients<Real> grads;
    std::uint64_t tape_nodes = 0;
    std::uint64_t peak_cached_bytes = 0;
};

template <class Real>
CellRunResult<Real> run_cell_once(const std::string& impl, const CellInputs<Real>& in,
                                  const Tensor<Real>& seed) {
    CellRunResult<Real> r;
    if (impl == kImplForwardOnly) {
        const BroadcastKernel<Real> kernel = cell_update_kernel<Real>();
        ForwardBroadcastResult<Real> fwd = broadcast_diag_jacobian<Real>(
            kernel, /*want_primal=*/true, in.c_prev, in.f, in.i, in.g, in.z1, in.z2);
        auto vjp = [&](int j) {
            return tensor_zip(seed, fwd.jacobian.entry(0, j), [](Real s, Real d) { return s * d; });
        };
        r.grads = CellGradients<Real>{vjp(0), vjp(1), vjp(2), vjp(3)};
        const std::uint64_t vol = static_cast<std::uint64_t>(fwd.jacobian.out_shape.volume());
        r.peak_cached_bytes = (1 + static_cast<std::uint64_t>(fwd.jacobian.inputs)) * vol * sizeof(Real);
        r.tape_nodes = 0;
        return r;
    }

    Tape<Real> tape;
    CellGraph<Real> graph;
    if (impl == kImplMixedCache) {
        graph = cell_update_fused(tape, in, MixedPolicy::CacheForward);
    } else if (impl == kImplMixedRecompute) {
        graph = cell_update_fused(tape, in, MixedPolicy::RecomputeReverse);
    } else if (impl == kImplReverseUnfused) {
        graph = cell_update_unfused(tape, in);
    } else {
        throw ConfigError("unknown implementation: " + impl);
    }
    Gradients<Real> grads = tape.backward(graph.out, seed);
    r.grads = CellGradients<Real>{grads.at(graph.c_prev), grads.at(graph.f), grads.at(graph.i),
                                  grads.at(graph.g)};
    r.tape_nodes = tape.size();
    r.peak_cached_bytes = static_cast<std::uint64_t>(tape.peak_cached_bytes());
    return r;
}

template <class Real>
void check_gradient_equivalence(const std::vector<std::string>& impls,
                                const std::vector<CellRunResult<Real>>& runs, std::int64_t n) {
    const double rtol = std::is_same_v<Real, double> ? 1e-5 : 1e-4;
    const double atol = rtol;
    for (std::size_t k = 1; k < runs.size(); ++k) {
        const auto check = [&](const Tensor<Real>& a, const Tensor<Real>& b, const char* which) {
            if (!tensors_close(a, b, rtol, atol))
                throw EquivalenceFailure("gradient mismatch between " + impls[0] + " and " +
                                         impls[k] + " on d/d" + which + " at n=" +
                                         std::to_string(n));
        };
        check(runs[0].grads.c_prev, runs[k].grads.c_prev, "c_prev");
        check(runs[0].grads.f, runs[k].grads.f, "f");
        check(runs[0].grads.i, runs[k].grads.i, "i");
        check(runs[0].grads.g, runs[k].grads.g, "g");
    }
}

template <class Real>
void dump_gradients(std::ostream& os, const std::string& impl, std::int64_t n,
                    const CellGradients<Real>& grads) {
    const std::pair<const char*, const Tensor<Real>*> items[] = {
        {"dc_prev", &grads.c_prev}, {"df", &grads.f}, {"di", &grads.i}, {"dg", &grads.g}};
    for (const auto& [name, tensor] : items) {
        os << "# impl=" << impl << " n=" << n << " grad=" << name << "\n";
        tensor->write_csv(os);
    }
}

template <class Real>
std::vector<BenchRecord> run_hmlstm_for(const BenchConfig& cfg) {
    std::vector<BenchRecord> records;
    std::ofstream dump;
    if (!cfg.dump_grads_path.empty()) {
        dump.open(cfg.dump_grads_path);
        if (!dump) throw IoError("cannot open " + cfg.dump_grads_path + " for writing");
    }

    for (std::int64_t n : cfg.sizes) {
        Rng rng(mix_seed(cfg.rng_seed, static_cast<std::uint64_t>(n)));
        const CellInputs<Real> inputs = random_cell_inputs<Real>(n, rng);
        const Tensor<Real> seed(Shape{n, n}, Real(1));

        // Equivalence gate: nothing is timed unless every selected
        // implementation agrees on the gradients for these inputs.
        std::vector<CellRunResult<Real>> gate_runs;
        gate_runs.reserve(cfg.impls.size());
        for (const std::string& impl : cfg.impls)
            gate_runs.push_back(run_cell_once(impl, inputs, seed));
        check_gradient_equivalence(cfg.impls, gate_runs, n);

        if (dump.is_open()) dump_gradients(dump, cfg.impls.front(), n, gate_runs.front().grads);

        for (std::size_t k = 0; k < cfg.impls.size(); ++k) {
            const std::string& impl = cfg.impls[k];
            for (int w = 0; w < cfg.warmup; ++w) (void)run_cell_once(impl, inputs, seed);

            const EvalCounters before = counter_totals();
            (void)run_cell_once(impl, inputs, seed);
            const EvalCounters after = counter_totals();

            std::vector<std::uint64_t> samples;
            samples.reserve(static_cast<std::size_t>(cfg.repetitions));
            for (int rep = 0; rep < cfg.repetitions; ++rep) {
                const std::uint64_t t0 = now_ns();
                (void)run_cell_once(impl, inputs, seed);
                samples.push_back(now_ns() - t0);
            }
            const TimingStats stats = summarize(std::move(samples));

            BenchRecord rec;
            rec.workload = "hmlstm";
            rec.impl = impl;
            rec.n = n;
            rec.arity = 0;
            rec.reps = cfg.repetitions;
            rec.min_ns = stats.min_ns;
            rec.median_ns = stats.median_ns;
            rec.mean_ns = stats.mean_ns;
            rec.tape_nodes = gate_runs[k].tape_nodes;
            rec.peak_cached_bytes = gate_runs[k].peak_cached_bytes;
            rec.transcendental_evals = after.transcendental_evals - before.transcendental_evals;
            rec.rng_seed = cfg.rng_seed;
            records.push_back(std::move(rec));
        }
    }
    return records;
}

template <class Real>
std::vector<BenchRecord> run_arity_for(const BenchConfig& cfg) {
    std::vector<BenchRecord> records;
    const std::int64_t n = cfg.sizes.front();
    const FdConfig<Real> fd_cfg;

    for (int arity : cfg.arities) {
        Rng rng(mix_seed(cfg.rng_seed, static_cast<std::uint64_t>(arity) * 131071u + static_cast<std::uint64_t>(n)));
        const BroadcastKernel<Real> kernel = tanh_product_kernel<Real>(arity);
        std::vector<Tensor<Real>> inputs;
        inputs.reserve(static_cast<std::size_t>(arity));
        for (int j = 0; j < arity; ++j) inputs.push_back(random_pm1<Real>(Shape{n, n}, rng));
        std::vector<const Tensor<Real>*> ptrs;
        for (const Tensor<Real>& t : inputs) ptrs.push_back(&t);

        ForwardBroadcastResult<Real> fwd =
            broadcast_diag_jacobian<Real>(kernel, ptrs, /*want_primal=*/true);
        if (fwd.jacobian.inputs != arity)
            throw Error("partial-vector width does not match the kernel arity");

        // Spot-check a handful of cells against central differences,
        // skipping cells close enough to the branch boundary that the probe
        // would straddle it.
        const std::function<Real(std::span<const Real>)> scalar_fn =
            [&](std::span<const Real> p) {
                Real out;
                kernel.eval(p, std::span<Real>(&out, 1));
                return out;
            };
        const std::int64_t vol = fwd.jacobian.out_shape.volume();
        for (int check = 0; check < 8; ++check) {
            std::size_t j = 0;
            std::int64_t e = 0;
            bool found = false;
            for (int attempt = 0; attempt < 64 && !found; ++attempt) {
                j = static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(arity)));
                e = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(vol)));
                const double x = static_cast<double>(inputs[j][e]);
                found = std::fabs(x - 0.5) > 4.0 * fd_cfg.step_at(x);
            }
            if (!found) continue;
            std::vector<Real> point(static_cast<std::size_t>(arity));
            for (int a = 0; a < arity; ++a) point[static_cast<std::size_t>(a)] = inputs[static_cast<std::size_t>(a)][e];
            const Real fd = fd_partial<Real>(scalar_fn, point, j, fd_cfg);
            const Real ad = fwd.jacobian.entry(0, static_cast<int>(j))[e];
            const double scale = std::max({1.0, std::fabs(static_cast<double>(fd)),
                                           std::fabs(static_cast<double>(ad))});
            if (std::fabs(static_cast<double>(fd - ad)) > fd_cfg.rel_tol * scale)
                throw EquivalenceFailure("arity " + std::to_string(arity) +
                                         ": derivative disagrees with finite differences at cell " +
                                         std::to_string(e));
        }

        for (int w = 0; w < cfg.warmup; ++w)
            (void)broadcast_diag_jacobian<Real>(kernel, ptrs, true);

        const EvalCounters before = counter_totals();
        (void)broadcast_diag_jacobian<Real>(kernel, ptrs, true);
        const EvalCounters after = counter_totals();

        std::vector<std::uint64_t> samples;
        samples.reserve(static_cast<std::size_t>(cfg.repetitions));
        for (int rep = 0; rep < cfg.repetitions; ++rep) {
            const std::uint64_t t0 = now_ns();
            (void)broadcast_diag_jacobian<Real>(kernel, ptrs, true);
            samples.push_back(now_ns() - t0);
        }
        const TimingStats stats = summarize(std::move(samples));

        BenchRecord rec;
        rec.workload = "arity";
        rec.impl = kImplForwardOnly;
        rec.n = n;
        rec.arity = arity;
        rec.reps = cfg.repetitions;
        rec.min_ns = stats.min_ns;
        rec.median_ns = stats.median_ns;
        rec.mean_ns = stats.mean_ns;
        rec.tape_nodes = 0;
        rec.peak_cached_bytes =
            (1 + static_cast<std::uint64_t>(arity)) * static_cast<std::uint64_t>(vol) * sizeof(Real);
        rec.transcendental_evals = after.transcendental_evals - before.transcendental_evals;
        rec.rng_seed = cfg.rng_seed;
        records.push_back(std::move(rec));
    }
    return records;
}

} // namespace

std::vector<BenchRecord> run_hmlstm_bench(const BenchConfig& cfg) {
    validate_common(cfg);
    if (cfg.impls.empty()) throw ConfigError("at least one implementation is required");
    for (const std::string& impl : cfg.impls)
        if (!known_impl(impl)) throw ConfigError("unknown implementation: " + impl);
    set_broadcast_threads(cfg.threads);
    return cfg.precision == Precision::F64 ? run_hmlstm_for<double>(cfg)
                                           : run_hmlstm_for<float>(cfg);
}

std::vector<BenchRecord> run_arity_bench(const BenchConfig& cfg) {
    validate_common(cfg);
    if (cfg.sizes.size() != 1)
        throw ConfigError("the arity workload takes exactly one matrix side");
    if (cfg.arities.empty()) throw ConfigError("at least one arity is required");
    for (int a : cfg.arities)
        if (a < 1 || a > kMaxPartials)
            throw ConfigError("arity " + std::to_string(a) + " outside [1, " +
                              std::to_string(kMaxPartials) + "]");
    set_broadcast_threads(cfg.threads);
    return cfg.precision == Precision::F64 ? run_arity_for<double>(cfg) : run_arity_for<float>(cfg);
}

namespace {

std::vector<BenchRecord> sorted_records(std::span<const BenchRecord> records) {
    std::vector<BenchRecord> out(records.begin(), records.end());
    std::sort(out.begin(), out.end(), [](const BenchRecord& a, const BenchRecord& b) {
        return std::tie(a.workload, a.impl, a.n, a.arity) <
               std::tie(b.workload, b.impl, b.n, b.arity);
    });
    return out;
}

} // namespace

void emit(std::span<const BenchRecord> records, OutputFormat format, std::ostream& os) {
    const std::vector<BenchRecord> rows = sorted_records(records);
    if (format == OutputFormat::Csv) {
        os << kCsvHeader << "\n";
        for (const BenchRecord& r : rows) {
            os << r.workload << ',' << r.impl << ',' << r.n << ',' << r.arity << ',' << r.reps
               << ',' << r.min_ns << ',' << r.median_ns << ',' << r.mean_ns << ','
               << r.tape_nodes << ',' << r.peak_cached_bytes << ',' << r.transcendental_evals
               << ',' << r.rng_seed << "\n";
        }
        return;
    }
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const BenchRecord& r : rows) {
        arr.push_back({{"workload", r.workload},
                       {"impl", r.impl},
                       {"n", r.n},
                       {"arity", r.arity},
                       {"reps", r.reps},
                       {"min_ns", r.min_ns},
                       {"median_ns", r.median_ns},
                       {"mean_ns", r.mean_ns},
                       {"tape_nodes", r.tape_nodes},
                       {"peak_cached_bytes", r.peak_cached_bytes},
                       {"transcendental_evals", r.transcendental_evals},
                       {"rng_seed", r.rng_seed}});
    }
    os << arr.dump(2) << "\n";
}

void emit_to_path(std::span<const BenchRecord> records, OutputFormat format,
                  const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open " + path + " for writing");
    emit(records, format, os);
    if (!os) throw IoError("failed writing " + path);
}

std::vector<BenchRecord> parse_json_records(std::istream& is) {
    nlohmann::json doc;
    try {
        is >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("invalid benchmark JSON: ") + e.what());
    }
    if (!doc.is_array()) throw IoError("benchmark JSON must be an array of records");
    std::vector<BenchRecord> records;
    for (const auto& item : doc) {
        try {
            BenchRecord r;
            r.workload = item.at("workload").get<std::string>();
            r.impl = item.at("impl").get<std::string>();
            r.n = item.at("n").get<std::int64_t>();
            r.arity = item.at("arity").get<int>();
            r.reps = item.at("reps").get<int>();
            r.min_ns = item.at("min_ns").get<std::uint64_t>();
            r.median_ns = item.at("median_ns").get<std::uint64_t>();
            r.mean_ns = item.at("mean_ns").get<std::uint64_t>();
            r.tape_nodes = item.at("tape_nodes").get<std::uint64_t>();
            r.peak_cached_bytes = item.at("peak_cached_bytes").get<std::uint64_t>();
            r.transcendental_evals = item.at("transcendental_evals").get<std::uint64_t>();
            r.rng_seed = item.at("rng_seed").get<std::uint64_t>();
            records.push_back(std::move(r));
        } catch (const nlohmann::json::exception& e) {
            throw IoError(std::string("malformed benchmark record: ") + e.what());
        }
    }
    return records;
}

int bench_main(int argc, const char* const* argv) {
    CLI::App app{"Gradient benchmarks for broadcast automatic differentiation"};
    app.require_subcommand(1);

    BenchConfig cfg;
    std::string precision = "f64";
    std::string format = "csv";
    int max_arity = 0;
    bool sizes_given = false;
    bool arities_given = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--impl", cfg.impls,
                        "implementations: mixed-cache, mixed-recompute, reverse-unfused, "
                        "forward-only")
            ->delimiter(',');
        sub->add_option("--reps", cfg.repetitions, "timed repetitions per configuration");
        sub->add_option("--warmup", cfg.warmup, "untimed warmup repetitions");
        sub->add_option("--seed", cfg.rng_seed, "rng seed for input generation");
        sub->add_option("--precision", precision, "f32 or f64")
            ->check(CLI::IsMember({"f32", "f64"}));
        sub->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
        sub->add_option("--out", cfg.out_path, "output path (default: stdout)");
        sub->add_option("--threads", cfg.threads,
                        "broadcast threads (0 = library default); env BCAD_THREADS overrides");
    };

    CLI::App* hm = app.add_subcommand("hmlstm", "cell-update gradient benchmark");
    hm->add_option("--n", cfg.sizes, "matrix sides (default 64,128,256)")
        ->delimiter(',')
        ->each([&](const std::string&) { sizes_given = true; });
    hm->add_option("--dump-grads", cfg.dump_grads_path,
                   "write the first implementation's gradient tensors to this file");
    add_common(hm);

    CLI::App* ar = app.add_subcommand("arity", "kernel arity scaling study");
    ar->add_option("--n", cfg.sizes, "matrix side (default 256)")
        ->delimiter(',')
        ->each([&](const std::string&) { sizes_given = true; });
    ar->add_option("--arities", cfg.arities, "explicit arity list")
        ->delimiter(',')
        ->each([&](const std::string&) { arities_given = true; });
    ar->add_option("--max-arity", max_arity, "powers of two up to this arity, plus the arity itself");
    add_common(ar);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        (void)app.exit(e);
        return 1;
    }

    try {
        cfg.precision = precision == "f64" ? Precision::F64 : Precision::F32;
        cfg.format = format == "csv" ? OutputFormat::Csv : OutputFormat::Json;
        if (const char* env = std::getenv("BCAD_THREADS")) {
            try {
                cfg.threads = std::stoi(env);
            } catch (const std::exception&) {
                throw ConfigError("BCAD_THREADS must be an integer, got '" + std::string(env) + "'");
            }
        }

        std::vector<BenchRecord> records;
        if (hm->parsed()) {
            cfg.workload = Workload::HmLstm;
            if (!sizes_given) cfg.sizes = {64, 128, 256};
            records = run_hmlstm_bench(cfg);
        } else {
            cfg.workload = Workload::Arity;
            if (!sizes_given) cfg.sizes = {256};
            if (max_arity > 0 && !arities_given) {
                cfg.arities.clear();
                for (int a = 1; a < max_arity; a *= 2) cfg.arities.push_back(a);
                cfg.arities.push_back(max_arity);
            }
            records = run_arity_bench(cfg);
        }

        std::cerr << "bench: " << records.size() << " record(s), threads="
                  << (cfg.threads == 0 ? std::string("default") : std::to_string(cfg.threads))
                  << ", precision=" << precision << ", seed=" << cfg.rng_seed << "\n";

        if (cfg.out_path.empty()) {
            emit(records, cfg.format, std::cout);
        } else {
            emit_to_path(records, cfg.format, cfg.out_path);
        }
        return 0;
    } catch (const EquivalenceFailure& e) {
        std::cerr << "equivalence failure: " << e.what() << "\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 1;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

} // namespace bcad::bench
