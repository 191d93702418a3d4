#include "cpa/trace_country.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "cpa/text.hpp"

namespace cpa {

std::vector<Traceroute> parse_traceroutes(std::istream& in, std::vector<RejectRecord>* rejects) {
    std::vector<Traceroute> out;
    std::string line;
    std::size_t lineno = 0;
    auto reject = [&](std::string reason) {
        if (rejects) rejects->push_back({lineno, std::move(reason)});
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (text::is_comment_or_blank(line)) continue;
        auto f = text::split(text::trim(line), '\t');
        if (f.size() < 2 || f.size() > 3) {
            reject("expected src<TAB>dst<TAB>hops");
            continue;
        }
        auto src = try_parse_ip(text::trim(f[0]));
        auto dst = try_parse_ip(text::trim(f[1]));
        if (!src || !dst) {
            reject("bad src or dst address");
            continue;
        }
        Traceroute t{*src, *dst, {}};
        bool ok = true;
        if (f.size() == 3 && !text::trim(f[2]).empty()) {
            for (auto tok : text::split(f[2], ',')) {
                tok = text::trim(tok);
                if (tok == "*") {
                    t.hops.emplace_back(std::nullopt);
                } else if (auto ip = try_parse_ip(tok)) {
                    t.hops.emplace_back(*ip);
                } else {
                    reject("bad hop '" + std::string(tok) + "'");
                    ok = false;
                    break;
                }
            }
        }
        if (ok) out.push_back(std::move(t));
    }
    return out;
}

std::vector<Traceroute> parse_traceroutes_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open traceroute file '" + path + "'");
    return parse_traceroutes(in);
}

void write_traceroutes(std::ostream& out, std::span<const Traceroute> traces) {
    for (const auto& t : traces) {
        out << to_string(t.src) << '\t' << to_string(t.dst) << '\t';
        for (std::size_t i = 0; i < t.hops.size(); ++i) {
            if (i) out << ',';
            out << (t.hops[i] ? to_string(*t.hops[i]) : std::string("*"));
        }
        out << '\n';
    }
}

AsPath AnnotatedTrace::as_path() const {
    AsPath out;
    for (const auto& s : segments) out.push_back(s.asn);
    return out;
}

CountryPath AnnotatedTrace::country_path() const {
    CountryPath raw;
    for (const auto& h : hops)
        if (h.geo) raw.push_back(h.geo->country);
    return dedupe_countries(raw);
}

bool AnnotatedTrace::complete() const {
    return std::all_of(hops.begin(), hops.end(), [](const AnnotatedHop& h) { return h.ip && h.geo; });
}

std::variant<AnnotatedTrace, Skipped> annotate(const Traceroute& trace, const Resolver& resolver) {
    AnnotatedTrace at;
    at.trace = trace;

    std::vector<std::optional<IpAddr>> seq;
    seq.reserve(trace.hops.size() + 2);
    seq.emplace_back(trace.src);
    std::size_t begin = 0, end = trace.hops.size();
    if (end > 0 && trace.hops.front() == trace.src) ++begin;
    if (end > begin && trace.hops.back() == trace.dst) --end;
    for (std::size_t i = begin; i < end; ++i) seq.push_back(trace.hops[i]);
    seq.emplace_back(trace.dst);

    at.hops.reserve(seq.size());
    for (const auto& ip : seq) at.hops.push_back({ip, ip ? resolver.resolve(*ip) : std::nullopt});
    if (!at.hops.front().geo) return Skipped{"source " + to_string(trace.src) + " unresolved"};
    if (!at.hops.back().geo) return Skipped{"destination " + to_string(trace.dst) + " unresolved"};

    std::vector<bool> gap_before;
    bool pending_gap = false;
    for (std::size_t i = 0; i < at.hops.size(); ++i) {
        const auto& h = at.hops[i];
        if (!h.geo) {
            pending_gap = true;
            continue;
        }
        if (!at.segments.empty() && at.segments.back().asn == h.geo->asn) {
            auto& seg = at.segments.back();
            seg.has_gap = seg.has_gap || pending_gap;
            seg.last = i;
        } else {
            at.segments.push_back({h.geo->asn, i, i, false});
            gap_before.push_back(pending_gap);
        }
        pending_gap = false;
    }

    for (std::size_t s = 0; s + 1 < at.segments.size(); ++s) {
        const auto& cur = at.segments[s];
        const auto& next = at.segments[s + 1];
        AsTransition t;
        t.entry = *at.hops[cur.first].ip;
        t.next_ingress = *at.hops[next.first].ip;
        t.usable = !cur.has_gap && !gap_before[s + 1];
        CountryPath raw;
        for (std::size_t i = cur.first; i <= next.first; ++i)
            if (at.hops[i].geo) raw.push_back(at.hops[i].geo->country);
        t.countries = dedupe_countries(raw);
        at.transitions.push_back(std::move(t));
    }
    return at;
}

AnnotatedCorpus annotate_all(std::span<const Traceroute> traces, const Resolver& resolver) {
    AnnotatedCorpus out;
    std::set<IpAddr> vantage;
    for (const auto& t : traces) {
        ++out.stats.total;
        vantage.insert(t.src);
        auto r = annotate(t, resolver);
        if (std::holds_alternative<Skipped>(r)) {
            ++out.stats.skipped;
            ++out.stats.unresolved_ip;
            continue;
        }
        auto& at = std::get<AnnotatedTrace>(r);
        if (at.complete())
            ++out.stats.complete;
        else if (std::any_of(at.hops.begin(), at.hops.end(),
                             [](const AnnotatedHop& h) { return h.ip && !h.geo; }))
            ++out.stats.unresolved_ip;
        out.traces.push_back(std::move(at));
    }
    out.stats.observation_points = vantage.size();
    return out;
}

std::pair<std::vector<Traceroute>, std::vector<Traceroute>> split_traces(std::span<const Traceroute> traces,
                                                                         double ratio, std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio < 1.0)) throw InputError("split ratio must lie in (0, 1)");
    std::map<IpAddr, std::size_t> counts;
    for (const auto& t : traces) ++counts[t.src];
    if (counts.size() < 2) throw InputError("trace split needs at least 2 vantage points");
    std::vector<IpAddr> points;
    std::vector<std::size_t> weights;
    for (const auto& [ip, c] : counts) {
        points.push_back(ip);
        weights.push_back(c);
    }
    auto to_train = greedy_side_assignment(weights, ratio, seed);
    std::set<IpAddr> train_points;
    for (std::size_t i = 0; i < points.size(); ++i)
        if (to_train[i]) train_points.insert(points[i]);
    std::pair<std::vector<Traceroute>, std::vector<Traceroute>> out;
    for (const auto& t : traces) (train_points.count(t.src) ? out.first : out.second).push_back(t);
    return out;
}

std::string_view match_source_name(MatchSource s) {
    switch (s) {
        case MatchSource::KnownD: return "known_d";
        case MatchSource::KnownS: return "known_s";
        case MatchSource::FreqDC: return "freq_dc";
        case MatchSource::FreqD: return "freq_d";
        case MatchSource::FreqSC: return "freq_sc";
        case MatchSource::FreqS: return "freq_s";
        case MatchSource::Bridge: return "bridge";
    }
    return "?";
}

std::optional<CountryCode> IngressModel::ip_country(IpAddr ip) const {
    auto it = ip_country_.find(ip);
    if (it == ip_country_.end()) return std::nullopt;
    return it->second;
}

std::size_t IngressModel::entry_count() const {
    return known_d_.size() + known_s_.size() + freq_dc_.size() + freq_d_.size() + freq_sc_.size() +
           freq_s_.size();
}

void IngressModelBuilder::add(const AnnotatedTrace& trace) {
    const auto& segs = trace.segments;
    for (std::size_t i = 0; i < trace.transitions.size(); ++i) {
        const auto& t = trace.transitions[i];
        if (!t.usable) continue;
        ++transitions_used_;
        const auto as_i = segs[i].asn.value;
        const auto as_next = segs[i + 1].asn.value;
        const auto country = static_cast<std::uint32_t>(t.countries.front().index());
        const StepValue value{t.next_ingress, t.countries};

        ++freq_s_[{as_next}][t.next_ingress];
        ++freq_sc_[{as_next, country}][t.next_ingress];
        ++freq_d_[{as_i, as_next}][value];
        ++freq_dc_[{as_i, as_next, country}][value];
        ++known_s_[{as_i, as_next, t.entry.value}][value];
        if (i + 2 < segs.size()) ++known_d_[{as_i, as_next, segs[i + 2].asn.value, t.entry.value}][value];

        const auto& hop = trace.hops[segs[i + 1].first];
        ip_country_.emplace(t.next_ingress, hop.geo->country);
        ip_country_.emplace(t.entry, trace.hops[segs[i].first].geo->country);
    }
}

namespace {

template <typename Table>
void merge_counts(Table& into, const Table& from) {
    for (const auto& [key, counts] : from) {
        auto& dst = into[key];
        for (const auto& [value, n] : counts) dst[value] += n;
    }
}

/// Highest count; std::map order breaks ties (lowest IP, then country sequence).
template <typename Counts>
const typename Counts::key_type& most_frequent(const Counts& counts) {
    auto best = counts.begin();
    for (auto it = counts.begin(); it != counts.end(); ++it)
        if (it->second > best->second) best = it;
    return best->first;
}

}  // namespace

void IngressModelBuilder::merge(const IngressModelBuilder& other) {
    merge_counts(known_d_, other.known_d_);
    merge_counts(known_s_, other.known_s_);
    merge_counts(freq_dc_, other.freq_dc_);
    merge_counts(freq_d_, other.freq_d_);
    merge_counts(freq_sc_, other.freq_sc_);
    merge_counts(freq_s_, other.freq_s_);
    for (const auto& [ip, c] : other.ip_country_) ip_country_.emplace(ip, c);
    transitions_used_ += other.transitions_used_;
}

IngressModel IngressModelBuilder::finalize() const {
    IngressModel m;
    std::map<CountryPath, std::uint32_t> pool;
    auto intern = [&](const CountryPath& p) {
        auto [it, fresh] = pool.try_emplace(p, static_cast<std::uint32_t>(m.segments_.size()));
        if (fresh) m.segments_.push_back(p);
        return it->second;
    };
    auto resolve_steps = [&](const Table<StepCounts>& from, IngressModel::StepTable& to) {
        to.reserve(from.size());
        for (const auto& [key, counts] : from) {
            const auto& [ip, path] = most_frequent(counts);
            to.emplace(key, IngressStep{ip, intern(path)});
        }
    };
    auto resolve_ips = [&](const Table<IpCounts>& from, IngressModel::IpTable& to) {
        to.reserve(from.size());
        for (const auto& [key, counts] : from) to.emplace(key, most_frequent(counts));
    };
    resolve_steps(known_d_, m.known_d_);
    resolve_steps(known_s_, m.known_s_);
    resolve_steps(freq_dc_, m.freq_dc_);
    resolve_steps(freq_d_, m.freq_d_);
    resolve_ips(freq_sc_, m.freq_sc_);
    resolve_ips(freq_s_, m.freq_s_);
    m.ip_country_.reserve(ip_country_.size());
    for (const auto& [ip, c] : ip_country_) m.ip_country_.emplace(ip, c);
    return m;
}

namespace {

constexpr std::string_view kModelHeader = "#cpa-ingress-model\tv1";

void write_key(std::ostream& out, const TableKey& k, int arity) {
    const std::uint32_t parts[] = {k.a, k.b, k.c, k.d};
    for (int i = 0; i < arity; ++i) out << (i ? "\t" : "") << parts[i];
}

}  // namespace

void IngressModelBuilder::write(std::ostream& out, const GeoDb* geo) const {
    out << kModelHeader << '\n';
    // Key columns: ASNs as integers, entry IP and country as their integer
    // encodings. Value columns: next ingress, country segment, count.
    auto steps = [&](std::string_view name, const Table<StepCounts>& t, int arity) {
        out << "[" << name << "]\n";
        for (const auto& [key, counts] : t)
            for (const auto& [value, n] : counts) {
                write_key(out, key, arity);
                out << '\t' << to_string(value.first) << '\t' << format_country_path(value.second) << '\t' << n
                    << '\n';
            }
    };
    auto ips = [&](std::string_view name, const Table<IpCounts>& t, int arity) {
        out << "[" << name << "]\n";
        for (const auto& [key, counts] : t)
            for (const auto& [ip, n] : counts) {
                write_key(out, key, arity);
                out << '\t' << to_string(ip) << '\t' << n << '\n';
            }
    };
    steps("known_d", known_d_, 4);
    steps("known_s", known_s_, 3);
    steps("freq_dc", freq_dc_, 3);
    steps("freq_d", freq_d_, 2);
    ips("freq_sc", freq_sc_, 2);
    ips("freq_s", freq_s_, 1);
    out << "[ip_country]\n";
    for (const auto& [ip, c] : ip_country_) out << to_string(ip) << '\t' << c.str() << '\n';
    if (geo) {
        out << "[geo]\n";
        write_geodb(out, *geo);
    }
}

IngressModelBuilder IngressModelBuilder::read(std::istream& in, GeoDb* geo) {
    IngressModelBuilder b;
    std::string line;
    if (!std::getline(in, line) || text::trim(line) != kModelHeader)
        throw ParseError("model snapshot: missing or unsupported version header");
    std::string section;
    std::size_t lineno = 1;
    auto fail = [&](const std::string& why) {
        throw ParseError("model snapshot line " + std::to_string(lineno) + ": " + why);
    };
    auto u32 = [&](std::string_view s) {
        auto v = text::parse_int<std::uint32_t>(s);
        if (!v) fail("bad integer '" + std::string(s) + "'");
        return *v;
    };
    auto u64 = [&](std::string_view s) {
        auto v = text::parse_int<std::uint64_t>(s);
        if (!v) fail("bad count '" + std::string(s) + "'");
        return *v;
    };
    const std::map<std::string, std::pair<Table<StepCounts>*, int>> step_tables = {
        {"known_d", {&b.known_d_, 4}}, {"known_s", {&b.known_s_, 3}},
        {"freq_dc", {&b.freq_dc_, 3}}, {"freq_d", {&b.freq_d_, 2}}};
    const std::map<std::string, std::pair<Table<IpCounts>*, int>> ip_tables = {{"freq_sc", {&b.freq_sc_, 2}},
                                                                               {"freq_s", {&b.freq_s_, 1}}};
    while (std::getline(in, line)) {
        ++lineno;
        auto t = text::trim(line);
        if (t.empty()) continue;
        if (t.front() == '[') {
            section = std::string(t.substr(1, t.size() - 2));
            continue;
        }
        if (section == "geo") {
            auto f = text::split(t, ',');
            if (f.size() != 3) fail("bad geo row");
            if (geo) geo->add(parse_prefix(f[0]), CountryCode::from(f[1]), parse_asn(f[2]));
            continue;
        }
        auto f = text::split(t, '\t');
        if (section == "ip_country") {
            if (f.size() != 2) fail("bad ip_country row");
            b.ip_country_.emplace(parse_ip(f[0]), CountryCode::from(f[1]));
        } else if (auto st = step_tables.find(section); st != step_tables.end()) {
            const int arity = st->second.second;
            if (f.size() != static_cast<std::size_t>(arity) + 3) fail("bad " + section + " row");
            std::uint32_t k[4] = {0, 0, 0, 0};
            for (int i = 0; i < arity; ++i) k[i] = u32(f[i]);
            StepValue value{parse_ip(f[arity]), parse_country_path(f[arity + 1])};
            (*st->second.first)[{k[0], k[1], k[2], k[3]}][value] += u64(f[arity + 2]);
        } else if (auto it = ip_tables.find(section); it != ip_tables.end()) {
            const int arity = it->second.second;
            if (f.size() != static_cast<std::size_t>(arity) + 2) fail("bad " + section + " row");
            std::uint32_t k[4] = {0, 0, 0, 0};
            for (int i = 0; i < arity; ++i) k[i] = u32(f[i]);
            (*it->second.first)[{k[0], k[1], k[2], k[3]}][parse_ip(f[arity])] += u64(f[arity + 1]);
        } else {
            fail("row outside a known section");
        }
    }
    return b;
}

IngressModel build_model(std::span<const AnnotatedTrace> traces) {
    IngressModelBuilder b;
    for (const auto& t : traces) b.add(t);
    return b.finalize();
}

Prediction predict_country_path(std::span<const Asn> as_path, IpAddr src_ip, CountryCode src_country,
                                CountryCode dst_country, const IngressModel& model, const GeoDb& db) {
    if (as_path.empty()) throw InputError("empty AS path");
    Prediction pred;
    CountryPath& path = pred.path;
    path.reserve(as_path.size() * 2 + 2);
    path.push_back(src_country);
    pred.sources.reserve(as_path.size());

    auto append = [&](std::span<const CountryCode> seg) {
        for (const auto& c : seg)
            if (path.back() != c) path.push_back(c);
    };
    auto country_of = [&](IpAddr ip) -> std::optional<CountryCode> {
        if (auto c = model.ip_country(ip)) return c;
        if (auto a = db.lookup(ip)) return a->country;
        return std::nullopt;
    };

    std::optional<IpAddr> entry = src_ip;
    for (std::size_t i = 0; i + 1 < as_path.size(); ++i) {
        const auto as_i = as_path[i].value;
        const auto as_next = as_path[i + 1].value;
        const auto cur = static_cast<std::uint32_t>(path.back().index());
        const IngressStep* step = nullptr;
        MatchSource source = MatchSource::Bridge;

        auto probe = [&](const IngressModel::StepTable& table, const TableKey& key, MatchSource s) {
            ++pred.lookups;
            auto it = table.find(key);
            if (it != table.end()) {
                step = &it->second;
                source = s;
            }
        };

        if (entry && i + 2 < as_path.size())
            probe(model.known_d(), {as_i, as_next, as_path[i + 2].value, entry->value}, MatchSource::KnownD);
        if (!step) {
            ++pred.lookups;
            // The pair has been seen in some trace.
            if (model.freq_d().count({as_i, as_next})) {
                if (entry) probe(model.known_s(), {as_i, as_next, entry->value}, MatchSource::KnownS);
                if (!step) probe(model.freq_dc(), {as_i, as_next, cur}, MatchSource::FreqDC);
                if (!step) probe(model.freq_d(), {as_i, as_next}, MatchSource::FreqD);
            }
        }

        if (step) {
            append(model.segments()[step->segment]);
            entry = step->next_ingress;
        } else {
            std::optional<IpAddr> next;
            ++pred.lookups;
            if (auto it = model.freq_sc().find({as_next, cur}); it != model.freq_sc().end()) {
                next = it->second;
                source = MatchSource::FreqSC;
            } else {
                ++pred.lookups;
                if (auto it2 = model.freq_s().find({as_next}); it2 != model.freq_s().end()) {
                    next = it2->second;
                    source = MatchSource::FreqS;
                }
            }
            if (next) {
                if (auto c = country_of(*next)) append(std::span(&*c, 1));
                entry = next;
            } else {
                // Nothing known about the next AS: bridge with its registry country.
                if (auto c = db.country_of_as(as_path[i + 1])) append(std::span(&*c, 1));
                pred.low_confidence = true;
                entry.reset();
            }
        }
        pred.sources.push_back(source);
    }
    append(std::span(&dst_country, 1));
    return pred;
}

Prediction predict_country_path(std::span<const Asn> as_path, IpAddr src_ip, const Prefix& dst_prefix,
                                const IngressModel& model, const GeoDb& db) {
    std::optional<CountryCode> src = model.ip_country(src_ip);
    if (!src)
        if (auto a = db.lookup(src_ip)) src = a->country;
    if (!src) throw InputError("source " + to_string(src_ip) + " has no country");
    auto dst = db.lookup(dst_prefix);
    if (!dst) throw InputError("destination prefix " + to_string(dst_prefix) + " has no country");
    return predict_country_path(as_path, src_ip, *src, dst->country, model, db);
}

double path_agreement(std::span<const CountryCode> predicted, std::span<const CountryCode> actual) {
    std::set<CountryCode> p(predicted.begin(), predicted.end());
    std::set<CountryCode> a(actual.begin(), actual.end());
    if (p.empty() && a.empty()) return 1.0;
    std::size_t inter = 0;
    for (const auto& c : p) inter += a.count(c);
    const std::size_t uni = p.size() + a.size() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace cpa
