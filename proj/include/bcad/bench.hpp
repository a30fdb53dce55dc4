#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace bcad::bench {

enum class Workload { HmLstm, Arity };
enum class Precision { F32, F64 };
enum class OutputFormat { Csv, Json };

inline constexpr const char* kImplMixedCache = "mixed-cache";
inline constexpr const char* kImplMixedRecompute = "mixed-recompute";
inline constexpr const char* kImplReverseUnfused = "reverse-unfused";
inline constexpr const char* kImplForwardOnly = "forward-only";

struct BenchConfig {
    Workload workload = Workload::HmLstm;
    std::vector<std::string> impls = {kImplMixedCache, kImplMixedRecompute, kImplReverseUnfused,
                                      kImplForwardOnly};
    std::vector<std::int64_t> sizes = {64, 128, 256}; // matrix side n
    std::vector<int> arities = {1, 2, 4, 8, 16, 18};  // arity workload only
    int repetitions = 10;
    int warmup = 2;
    std::uint64_t rng_seed = 42;
    Precision precision = Precision::F64;
    OutputFormat format = OutputFormat::Csv;
    std::string out_path;        // empty: stdout
    std::string dump_grads_path; // optional gradient-tensor dump (hmlstm)
    int threads = 0;             // broadcast threads; 0 = library default
};

// One benchmark row. Non-timing fields are fully determined by the config
// and rng_seed; wall times are environment noise by nature and carry no
// assertions.
struct BenchRecord {
    std::string workload;
    std::string impl;
    std::int64_t n = 0;
    int arity = 0;
    int reps = 0;
    std::uint64_t min_ns = 0;
    std::uint64_t median_ns = 0;
    std::uint64_t mean_ns = 0;
    std::uint64_t tape_nodes = 0;
    std::uint64_t peak_cached_bytes = 0;
    std::uint64_t transcendental_evals = 0;
    std::uint64_t rng_seed = 0;

    friend bool operator==(const BenchRecord&, const BenchRecord&) = default;
};

// Gradient timing across the selected implementations. Every selected
// implementation must produce matching gradients before a single repetition
// is timed; mismatches abort with EquivalenceFailure.
std::vector<BenchRecord> run_hmlstm_bench(const BenchConfig& cfg);

// Forward-mode Jacobian of the variable-arity tanh-product kernel, with
// derivative spot checks against finite differences.
std::vector<BenchRecord> run_arity_bench(const BenchConfig& cfg);

inline constexpr const char* kCsvHeader =
    "workload,impl,n,arity,reps,min_ns,median_ns,mean_ns,tape_nodes,peak_cached_bytes,"
    "transcendental_evals,rng_seed";

// Writes records sorted by (workload, impl, n, arity) so output is
// bit-stable for a given record set.
void emit(std::span<const BenchRecord> records, OutputFormat format, std::ostream& os);
void emit_to_path(std::span<const BenchRecord> records, OutputFormat format,
                  const std::string& path);

// Inverse of the JSON emitter, for round-trip checks and downstream tools.
std::vector<BenchRecord> parse_json_records(std::istream& is);

// Full CLI: `bench hmlstm ...` / `bench arity ...`. Returns the process exit
// code: 0 ok, 1 config/io error, 2 gradient-equivalence failure.
int bench_main(int argc, const char* const* argv);

} // namespace bcad::bench
