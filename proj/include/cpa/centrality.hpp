#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cpa/net_model.hpp"

namespace cpa {

/// Neumaier summation.
struct CompensatedSum {
    double sum = 0.0;
    double carry = 0.0;

    void add(double x);
    void merge(const CompensatedSum& other);
    double value() const { return sum + carry; }
};

/// Freeman betweenness over an undirected unweighted graph given as
/// adjacency lists. Each unordered pair counts once.
std::vector<double> betweenness(const std::vector<std::vector<std::uint32_t>>& adjacency);

/// Endpoint country of every routable prefix, with per-country size weights.
class CountryPrefixTable {
public:
    /// Re-adding a prefix with a different country throws InputError.
    void add(const Prefix& p, CountryCode country);

    std::optional<CountryCode> country_of(const Prefix& p) const;
    /// size(p) / total size of its country's prefixes. Throws InputError
    /// naming the prefix if it is not in the table.
    double weight(const Prefix& p) const;

    /// Total address count of a country's prefixes.
    std::uint64_t country_size(CountryCode c) const;
    /// Countries with prefix space, ascending.
    const std::vector<CountryCode>& countries() const { return countries_; }
    /// Dense ordinal of a table country, or -1.
    int ordinal(CountryCode c) const { return ordinal_[static_cast<std::size_t>(c.index())]; }
    const std::map<Prefix, CountryCode>& prefixes() const { return prefixes_; }
    std::size_t size() const { return prefixes_.size(); }

private:
    std::map<Prefix, CountryCode> prefixes_;
    std::map<CountryCode, std::uint64_t> totals_;
    std::vector<CountryCode> countries_;
    std::array<int, kCountrySlots> ordinal_ = filled_ordinals();

    static std::array<int, kCountrySlots> filled_ordinals() {
        std::array<int, kCountrySlots> a{};
        a.fill(-1);
        return a;
    }
};

/// CSV `prefix,country`; '#' comments.
CountryPrefixTable read_prefix_table(std::istream& in);
CountryPrefixTable read_prefix_table_file(const std::string& path);
void write_prefix_table(std::ostream& out, const CountryPrefixTable& table);

/// Country paths chosen for one ordered prefix pair. An empty `best` marks an
/// unreachable pair, which still counts toward the denominators.
struct PathAssignment {
    Prefix src;
    Prefix dst;
    CountryPath best;
    /// Every available country path; the best is always treated as one of them.
    std::vector<CountryPath> alternates;
};

/// TSV `src<TAB>dst<TAB>best<TAB>alt;alt;...`, country paths comma separated.
std::vector<PathAssignment> read_assignments(std::istream& in);
std::vector<PathAssignment> read_assignments_file(const std::string& path);
void write_assignments(std::ostream& out, std::span<const PathAssignment> assignments);

enum class MetricKind : std::uint8_t { CC, SCC };
enum class PathSource : std::uint8_t { Observed, Inferred };
std::string_view metric_name(MetricKind m);
std::string_view path_source_name(PathSource s);

struct CentralityRow {
    CountryCode country;
    double raw = 0.0;
    double normalized = 0.0;
    double denominator = 0.0;
    std::size_t rank = 0;
};

struct CentralityReport {
    MetricKind metric = MetricKind::CC;
    PathSource source = PathSource::Inferred;
    /// Rank order.
    std::vector<CentralityRow> rows;
    /// Provenance key/values, sorted.
    std::map<std::string, std::string> metadata;

    const CentralityRow* find(CountryCode c) const;
    double normalized(CountryCode c) const;
};

/// Streaming CC and SCC fold. Accumulators from disjoint pair streams merge;
/// merging in a fixed order gives bitwise-reproducible totals.
class CentralityAccumulator {
public:
    explicit CentralityAccumulator(const CountryPrefixTable& table);

    /// Throws InputError naming any prefix missing from the table.
    void add(const PathAssignment& a);
    /// Pre-weighted pair between endpoint countries `s` and `t`.
    void add_weighted(CountryCode s, CountryCode t, double weight, std::span<const CountryCode> best,
                      std::span<const CountryPath> alternates);
    void merge(const CentralityAccumulator& other);

    std::size_t pairs() const { return pairs_; }
    std::size_t unreachable() const { return unreachable_; }

    CentralityReport report(MetricKind metric, PathSource source) const;

    /// Exact text form (hexfloat) for shard checkpoints.
    void write_checkpoint(std::ostream& out) const;
    void read_checkpoint(std::istream& in);

private:
    const CountryPrefixTable* table_;
    std::size_t n_;
    std::vector<CompensatedSum> cc_, scc_;  // kCountrySlots each
    std::vector<CompensatedSum> pair_weight_;  // n_ x n_ table-country ordinals
    std::size_t pairs_ = 0;
    std::size_t unreachable_ = 0;
};

/// Descending normalized value, ties by country code; ranks are 1-based.
void assign_ranks(std::vector<CentralityRow>& rows);
std::vector<CentralityRow> rank_report(const CentralityReport& report, std::size_t top_n);

/// CSV `country,metric,raw,normalized,rank,path_source`.
void write_report_csv(std::ostream& out, std::span<const CentralityReport> reports, bool header = true);
/// One JSON object per row, then one metadata object per report.
void write_report_jsonl(std::ostream& out, std::span<const CentralityReport> reports);
/// Reads rows back from the CSV form (metadata is not stored there).
std::vector<CentralityReport> read_report_csv(std::istream& in);

}  // namespace cpa
