#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "cpa/pipeline.hpp"
#include "cpa/text.hpp"
#include "cpa/whois_client.hpp"

namespace cpa {

std::string_view mode_name(Mode m) {
    switch (m) {
        case Mode::ObservedCc: return "observed-cc";
        case Mode::Validate: return "validate";
        case Mode::FullMesh: return "full-mesh";
    }
    return "?";
}

std::optional<Mode> parse_mode(std::string_view text) {
    if (text == "observed-cc") return Mode::ObservedCc;
    if (text == "validate" || text == "validate-inference") return Mode::Validate;
    if (text == "full-mesh") return Mode::FullMesh;
    return std::nullopt;
}

namespace {

template <typename T>
T number(std::string_view key, std::string_view value) {
    if constexpr (std::is_floating_point_v<T>) {
        if (auto v = text::parse_double(value)) return *v;
    } else {
        if (auto v = text::parse_int<T>(value)) return *v;
    }
    throw InputError("config key '" + std::string(key) + "': bad value '" + std::string(value) + "'");
}

bool boolean(std::string_view key, std::string_view value) {
    if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
    if (value == "false" || value == "0" || value == "no" || value == "off") return false;
    throw InputError("config key '" + std::string(key) + "': expected a boolean, got '" + std::string(value) + "'");
}

}  // namespace

void PipelineConfig::set(std::string_view key, std::string_view value) {
    value = text::trim(value);
    if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'') && value.back() == value.front())
        value = value.substr(1, value.size() - 2);
    const std::string v(value);
    if (key == "rib") rib_file = v;
    else if (key == "traces") trace_file = v;
    else if (key == "registry") registry_file = v;
    else if (key == "overrides") overrides_file = v;
    else if (key == "relationships") relationships_file = v;
    else if (key == "lookup") lookup_file = v;
    else if (key == "prefix_table") prefix_table_file = v;
    else if (key == "split_ratio") split_ratio = number<double>(key, value);
    else if (key == "seed") seed = number<std::uint64_t>(key, value);
    else if (key == "workers") workers = number<int>(key, value);
    else if (key == "shard_size") shard_size = number<std::size_t>(key, value);
    else if (key == "max_pops_per_vertex") propagation.max_pops_per_vertex = number<std::size_t>(key, value);
    else if (key == "max_alternates") propagation.max_alternates = number<std::size_t>(key, value);
    else if (key == "sibling_threshold") relationships.sibling_threshold = number<std::size_t>(key, value);
    else if (key == "peer_degree_ratio") relationships.peer_degree_ratio = number<double>(key, value);
    else if (key == "segment_noise") segment_noise = number<double>(key, value);
    else if (key == "whois") whois = boolean(key, value);
    else if (key == "output_dir") output_dir = v;
    else if (key == "cache_dir") cache_dir = v;
    else if (key == "checkpoint") checkpoint = boolean(key, value);
    else if (key == "mode") {
        auto m = parse_mode(value);
        if (!m) throw InputError("config key 'mode': unknown mode '" + v + "'");
        mode = *m;
    } else {
        throw InputError("unknown config key '" + std::string(key) + "'");
    }
}

std::map<std::string, std::string> PipelineConfig::echo() const {
    return {
        {"rib", rib_file},
        {"traces", trace_file},
        {"registry", registry_file},
        {"overrides", overrides_file},
        {"relationships", relationships_file},
        {"lookup", lookup_file},
        {"prefix_table", prefix_table_file},
        {"split_ratio", text::format_double(split_ratio)},
        {"seed", std::to_string(seed)},
        {"workers", std::to_string(workers)},
        {"shard_size", std::to_string(shard_size)},
        {"max_pops_per_vertex", std::to_string(propagation.max_pops_per_vertex)},
        {"max_alternates", std::to_string(propagation.max_alternates)},
        {"sibling_threshold", std::to_string(relationships.sibling_threshold)},
        {"peer_degree_ratio", text::format_double(relationships.peer_degree_ratio)},
        {"segment_noise", text::format_double(segment_noise)},
        {"whois", whois ? "true" : "false"},
        {"output_dir", output_dir},
        {"cache_dir", cache_dir},
        {"checkpoint", checkpoint ? "true" : "false"},
        {"mode", std::string(mode_name(mode))},
    };
}

void PipelineConfig::validate() const {
    auto need = [](const std::string& key, const std::string& path) {
        if (path.empty()) throw InputError("config: '" + key + "' is required");
        if (!std::filesystem::exists(path)) throw InputError("config: " + key + " file '" + path + "' does not exist");
    };
    auto maybe = [](const std::string& key, const std::string& path) {
        if (!path.empty() && !std::filesystem::exists(path))
            throw InputError("config: " + key + " file '" + path + "' does not exist");
    };
    need("rib", rib_file);
    need("registry", registry_file);
    need("traces", trace_file);
    maybe("overrides", overrides_file);
    maybe("relationships", relationships_file);
    maybe("lookup", lookup_file);
    maybe("prefix_table", prefix_table_file);
    if (workers < 1) throw InputError("config: workers must be at least 1");
    if (shard_size < 1) throw InputError("config: shard_size must be at least 1");
    if (!(split_ratio > 0.0 && split_ratio < 1.0)) throw InputError("config: split_ratio must lie in (0, 1)");
    if (!(segment_noise >= 0.0 && segment_noise <= 1.0)) throw InputError("config: segment_noise must lie in [0, 1]");
    if (propagation.max_pops_per_vertex < 1 || propagation.max_alternates < 1)
        throw InputError("config: propagation limits must be positive");
}

PipelineConfig read_config(std::istream& in) {
    PipelineConfig c;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto t = text::trim(line);
        if (t.empty() || t.front() == '#' || t.front() == ';' || t.front() == '[') continue;
        auto eq = t.find('=');
        if (eq == std::string_view::npos)
            throw ParseError("config line " + std::to_string(lineno) + ": expected key = value");
        c.set(text::trim(t.substr(0, eq)), t.substr(eq + 1));
    }
    return c;
}

PipelineConfig read_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open config file '" + path + "'");
    return read_config(in);
}

std::uint64_t config_fingerprint(const PipelineConfig& config) {
    std::string blob;
    for (const auto& [k, v] : config.echo()) {
        // Execution-only settings do not change results.
        if (k == "workers" || k == "output_dir" || k == "cache_dir" || k == "checkpoint") continue;
        blob += k + "=" + v + "\n";
    }
    for (const auto* f : {&config.rib_file, &config.trace_file, &config.registry_file, &config.overrides_file,
                          &config.relationships_file, &config.lookup_file, &config.prefix_table_file})
        blob += text::hex64(StageCache::file_digest(*f)) + "\n";
    return text::fnv1a(blob);
}

StageCache::StageCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    if (!dir_.empty()) std::filesystem::create_directories(dir_);
}

std::filesystem::path StageCache::path_for(std::string_view stage, std::uint64_t key) const {
    return dir_ / (std::string(stage) + "-" + text::hex64(key) + ".txt");
}

std::optional<std::string> StageCache::load(std::string_view stage, std::uint64_t key) const {
    if (!enabled()) return std::nullopt;
    std::ifstream in(path_for(stage, key), std::ios::binary);
    if (!in) {
        ++misses_;
        return std::nullopt;
    }
    std::stringstream ss;
    ss << in.rdbuf();
    ++hits_;
    return ss.str();
}

void StageCache::store(std::string_view stage, std::uint64_t key, const std::string& content) const {
    if (!enabled()) return;
    const auto path = path_for(stage, key);
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw InputError("cannot write cache file '" + tmp.string() + "'");
        out << content;
    }
    std::filesystem::rename(tmp, path);
}

std::uint64_t StageCache::file_digest(const std::string& path) {
    if (path.empty()) return 0;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read '" + path + "'");
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        h = text::fnv1a(std::string_view(buf, static_cast<std::size_t>(in.gcount())), h);
        if (!in) break;
    }
    return h;
}

void Log::event(std::string_view stage, const std::vector<std::pair<std::string, std::string>>& fields) const {
    if (!out_) return;
    std::ostringstream line;
    line << "stage=" << stage;
    for (const auto& [k, v] : fields) line << ' ' << k << '=' << v;
    line << '\n';
    std::lock_guard lock(mutex_);
    *out_ << line.str() << std::flush;
}

CountryPrefixTable derive_prefix_table(const RibCorpus& corpus, const GeoDb& geo, std::size_t* unresolved) {
    CountryPrefixTable table;
    std::size_t missing = 0;
    for (const auto& p : corpus.prefixes()) {
        if (auto a = geo.lookup(p))
            table.add(p, a->country);
        else
            ++missing;
    }
    if (unresolved) *unresolved = missing;
    return table;
}

PipelineData load_data(const PipelineConfig& config, const StageCache& cache, const Log& log) {
    PipelineData data;

    auto rib = parse_rib_file(config.rib_file);
    data.corpus = std::move(rib.corpus);
    log.event("ingest", {{"routes", std::to_string(data.corpus.size())},
                         {"prefixes", std::to_string(data.corpus.prefixes().size())},
                         {"rejects", std::to_string(rib.rejects.size())},
                         {"as_set_tokens", std::to_string(rib.as_set_tokens_dropped)},
                         {"prepends", std::to_string(rib.prepends_collapsed)}});

    const auto skeleton = extract_topology(data.corpus);
    const std::uint64_t rel_key =
        text::fnv1a(text::hex64(StageCache::file_digest(config.rib_file)) + "|" +
                    std::to_string(config.relationships.sibling_threshold) + "|" +
                    text::format_double(config.relationships.peer_degree_ratio) + "|" +
                    text::hex64(StageCache::file_digest(config.relationships_file)));
    std::map<Edge, Relationship> labels;
    std::size_t low_confidence = 0;
    if (auto hit = cache.load("relationships", rel_key)) {
        std::istringstream in(*hit);
        std::string first;
        std::getline(in, first);
        if (first.rfind("#low_confidence=", 0) == 0)
            low_confidence = text::parse_int<std::size_t>(std::string_view(first).substr(16)).value_or(0);
        labels = read_relationships(in);
    } else {
        auto inferred = infer_relationships(skeleton, data.corpus, config.relationships);
        labels = inferred.topology.labels();
        low_confidence = inferred.stats.low_confidence;
        if (!config.relationships_file.empty())
            labels = apply_overrides(std::move(labels), read_relationships_file(config.relationships_file));
        std::ostringstream out;
        out << "#low_confidence=" << low_confidence << '\n';
        write_relationships(out, labels);
        cache.store("relationships", rel_key, out.str());
    }
    data.topology = Topology(labels, skeleton.vertices);
    data.relationship_stats = count_labels(labels);
    data.relationship_stats.low_confidence = low_confidence;
    log.event("relationships", {{"vertices", std::to_string(data.topology.vertex_count())},
                                {"edges", std::to_string(data.topology.edge_count())},
                                {"c2p", std::to_string(data.relationship_stats.customer_provider)},
                                {"p2p", std::to_string(data.relationship_stats.peer)},
                                {"s2s", std::to_string(data.relationship_stats.sibling)},
                                {"low_confidence", std::to_string(low_confidence)}});

    auto geo = build_geodb(config.registry_file, config.overrides_file.empty()
                                                     ? std::nullopt
                                                     : std::optional<std::string>(config.overrides_file));
    data.geo = std::move(geo.db);
    log.event("geo", {{"entries", std::to_string(data.geo.size())},
                      {"rejects", std::to_string(geo.rejects.size())},
                      {"duplicates", std::to_string(geo.duplicate_rows)},
                      {"vague", std::to_string(geo.vague_rows)},
                      {"hk_rewrites", std::to_string(geo.hk_rewrites)}});

    if (!config.lookup_file.empty())
        data.lookup = std::make_unique<FileLookupClient>(FileLookupClient::from_file(config.lookup_file));
    else if (config.whois)
        data.lookup = std::make_unique<WhoisBulkClient>(WhoisOptions{.enabled = true});

    if (!config.prefix_table_file.empty())
        data.table = read_prefix_table_file(config.prefix_table_file);
    else
        data.table = derive_prefix_table(data.corpus, data.geo, &data.unresolved_prefixes);
    log.event("prefix_table", {{"prefixes", std::to_string(data.table.size())},
                               {"countries", std::to_string(data.table.countries().size())},
                               {"unresolved", std::to_string(data.unresolved_prefixes)}});

    if (!config.trace_file.empty()) data.traces = parse_traceroutes_file(config.trace_file);
    log.event("traces", {{"traces", std::to_string(data.traces.size())}});
    return data;
}

}  // namespace cpa
