#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cpa/as_rel.hpp"
#include "cpa/bgp_propagate.hpp"
#include "cpa/centrality.hpp"
#include "cpa/geo_db.hpp"
#include "cpa/rib_ingest.hpp"
#include "cpa/trace_country.hpp"

namespace cpa {

enum class Mode : std::uint8_t { ObservedCc, Validate, FullMesh };
std::string_view mode_name(Mode m);
std::optional<Mode> parse_mode(std::string_view text);

struct PipelineConfig {
    std::string rib_file;
    std::string trace_file;
    std::string registry_file;
    std::string overrides_file;
    /// Optional relationship labels applied over the inferred ones.
    std::string relationships_file;
    /// Optional `ip|asn|country` answers for unresolved addresses.
    std::string lookup_file;
    /// Optional `prefix,country` table; derived from the registry otherwise.
    std::string prefix_table_file;

    double split_ratio = 0.5;
    std::uint64_t seed = 1;
    int workers = 1;
    /// Destination prefixes per full-mesh shard.
    std::size_t shard_size = 8;
    PropagationParams propagation;
    RelationshipParams relationships;
    /// Fraction of model country segments corrupted before validation.
    double segment_noise = 0.0;
    bool whois = false;

    std::string output_dir = "cpa-out";
    std::string cache_dir;
    /// Keep per-shard results so an interrupted full mesh resumes.
    bool checkpoint = true;
    Mode mode = Mode::FullMesh;

    /// Applies one `key = value` setting; throws InputError on unknown keys.
    void set(std::string_view key, std::string_view value);
    /// Every setting, for report metadata and fingerprints.
    std::map<std::string, std::string> echo() const;
    /// Throws InputError if a file needed by `mode` is missing or a value is out of range.
    void validate() const;
};

/// Flat `key = value` lines; '#' and ';' comments and `[section]` headers are ignored.
PipelineConfig read_config(std::istream& in);
PipelineConfig read_config_file(const std::string& path);

/// Content-addressed artifacts keyed by stage name and a fingerprint.
class StageCache {
public:
    StageCache() = default;
    /// An empty directory disables the cache.
    explicit StageCache(std::filesystem::path dir);

    bool enabled() const { return !dir_.empty(); }
    std::optional<std::string> load(std::string_view stage, std::uint64_t key) const;
    void store(std::string_view stage, std::uint64_t key, const std::string& content) const;

    std::size_t hits() const { return hits_; }
    std::size_t misses() const { return misses_; }

    /// FNV-1a over a file's bytes; 0 for an empty path.
    static std::uint64_t file_digest(const std::string& path);

private:
    std::filesystem::path path_for(std::string_view stage, std::uint64_t key) const;

    std::filesystem::path dir_;
    mutable std::size_t hits_ = 0;
    mutable std::size_t misses_ = 0;
};

/// Structured `stage=... key=value` lines; silent without a stream.
class Log {
public:
    explicit Log(std::ostream* out = nullptr) : out_(out) {}
    void event(std::string_view stage, const std::vector<std::pair<std::string, std::string>>& fields) const;

private:
    std::ostream* out_;
    mutable std::mutex mutex_;
};

/// Everything the experiments read, loaded and cross-linked.
struct PipelineData {
    RibCorpus corpus;
    Topology topology;
    RelationshipStats relationship_stats;
    GeoDb geo;
    CountryPrefixTable table;
    std::vector<Traceroute> traces;
    AnnouncementPolicy policy;
    /// Fallback for addresses the registry cannot place; may be null.
    std::unique_ptr<LookupClient> lookup;
    /// Table prefixes whose country could not be resolved.
    std::size_t unresolved_prefixes = 0;
};

PipelineData load_data(const PipelineConfig& config, const StageCache& cache, const Log& log);

/// Registry country of every corpus prefix.
CountryPrefixTable derive_prefix_table(const RibCorpus& corpus, const GeoDb& geo, std::size_t* unresolved = nullptr);

/// Sharded model build; identical to build_model for any worker count.
IngressModel build_model_parallel(std::span<const AnnotatedTrace> traces, int workers);

/// Prefixes originated by one AS inside one country, weighted together.
struct SourceGroup {
    Asn origin;
    CountryCode country;
    /// Sum of the member prefixes' table weights.
    double weight = 0.0;
    /// Base address of the largest member prefix (lowest on ties).
    IpAddr representative;
    std::vector<Prefix> members;
};

/// Groups ordered by (origin, country). Prefixes without a known origin in
/// the topology are left out.
std::vector<SourceGroup> source_groups(const RibCorpus& corpus, const CountryPrefixTable& table,
                                       const Topology& topo);

struct ObservedResult {
    CentralityReport traceroute_cc;
    CentralityReport bgp_cc;
    TraceCorpusStats trace_stats;
    std::size_t traceroute_pairs = 0;
    std::size_t bgp_routes_used = 0;
};

/// CC from traceroute country paths (complete traces only).
/// Throws InputError if no usable path remains.
CentralityReport observed_traceroute_cc(const AnnotatedCorpus& traces, const CountryPrefixTable& table,
                                        std::size_t* pairs = nullptr);
/// CC from RIB AS paths mapped through the country predictor, one pair per
/// (observer source group, route prefix).
CentralityReport observed_bgp_cc(const RibCorpus& corpus, const std::vector<SourceGroup>& groups,
                                 const IngressModel& model, const GeoDb& geo, const CountryPrefixTable& table,
                                 std::size_t* routes_used = nullptr);

/// Model from annotated traces, reusing a cached snapshot under `key`.
IngressModel cached_model(std::span<const AnnotatedTrace> traces, const StageCache& cache, std::uint64_t key,
                          int workers, const Log& log);

ObservedResult run_observed_cc(const PipelineData& data, const PipelineConfig& config, const StageCache& cache,
                               const Log& log);

struct LogLogFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
    std::size_t points = 0;
};

/// OLS of log(y) on log(x) over points with both coordinates positive.
/// nullopt when fewer than 3 such points exist.
std::optional<LogLogFit> fit_loglog(std::span<const std::pair<double, double>> xy);

struct ValidationRow {
    CountryCode country;
    double actual = 0.0;
    double inferred = 0.0;
};

struct ValidationResult {
    std::vector<ValidationRow> rows;
    std::optional<LogLogFit> fit;
    std::string notice;
    CentralityReport actual_cc;
    CentralityReport inferred_cc;
    std::size_t test_traces = 0;
    std::size_t used = 0;
    std::size_t excluded_overlap = 0;
    std::size_t unreachable = 0;
    std::size_t exact_matches = 0;
    double mean_agreement = 0.0;
};

/// Gives a `fraction` of the model's country segments the interior of another
/// randomly drawn segment, keeping their end countries. Returns how many changed.
std::size_t inject_segment_noise(IngressModel& model, double fraction, std::uint64_t seed);

ValidationResult run_validation(const PipelineData& data, const PipelineConfig& config, const StageCache& cache,
                                const Log& log);

struct FullMeshOptions {
    int workers = 1;
    std::size_t shard_size = 8;
    PropagationParams propagation;
    /// Per-shard checkpoint directory; empty disables checkpoints.
    std::filesystem::path checkpoint_dir;
};

struct FullMeshResult {
    CentralityReport cc;
    CentralityReport scc;
    std::size_t destinations = 0;
    std::size_t failed_destinations = 0;
    std::size_t shards = 0;
    std::size_t resumed_shards = 0;
    std::size_t truncated_lists = 0;
};

/// Parallel over destination-prefix shards; reports are bitwise identical
/// for any worker count.
FullMeshResult run_full_mesh(const PipelineData& data, const IngressModel& model, const FullMeshOptions& options,
                             const Log& log);
/// Single-threaded reference: every source prefix separately, no regrouping.
FullMeshResult run_full_mesh_reference(const PipelineData& data, const IngressModel& model,
                                       const PropagationParams& params);

/// Fingerprint of the config and input file contents.
std::uint64_t config_fingerprint(const PipelineConfig& config);

}  // namespace cpa
