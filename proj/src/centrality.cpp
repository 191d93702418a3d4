#include "cpa/centrality.hpp"

#include <algorithm>
#include <bitset>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <queue>

#include <json.hpp>

#include "cpa/text.hpp"

namespace cpa {

void CompensatedSum::add(double x) {
    const double t = sum + x;
    if (std::abs(sum) >= std::abs(x))
        carry += (sum - t) + x;
    else
        carry += (x - t) + sum;
    sum = t;
}

void CompensatedSum::merge(const CompensatedSum& other) {
    add(other.sum);
    add(other.carry);
}

std::vector<double> betweenness(const std::vector<std::vector<std::uint32_t>>& adjacency) {
    const std::size_t n = adjacency.size();
    std::vector<double> score(n, 0.0);
    std::vector<std::vector<std::uint32_t>> preds(n);
    std::vector<double> sigma(n), delta(n);
    std::vector<long> dist(n);
    std::vector<std::uint32_t> order;
    order.reserve(n);

    // Brandes: one BFS per source, dependencies accumulated in reverse BFS order.
    for (std::uint32_t s = 0; s < n; ++s) {
        for (auto& p : preds) p.clear();
        std::fill(sigma.begin(), sigma.end(), 0.0);
        std::fill(delta.begin(), delta.end(), 0.0);
        std::fill(dist.begin(), dist.end(), -1);
        order.clear();
        sigma[s] = 1.0;
        dist[s] = 0;
        std::queue<std::uint32_t> q;
        q.push(s);
        while (!q.empty()) {
            const auto v = q.front();
            q.pop();
            order.push_back(v);
            for (auto w : adjacency[v]) {
                if (w >= n) throw InputError("adjacency names vertex " + std::to_string(w) + " out of range");
                if (dist[w] < 0) {
                    dist[w] = dist[v] + 1;
                    q.push(w);
                }
                if (dist[w] == dist[v] + 1) {
                    sigma[w] += sigma[v];
                    preds[w].push_back(v);
                }
            }
        }
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            const auto w = *it;
            for (auto v : preds[w]) delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            if (w != s) score[w] += delta[w];
        }
    }
    for (auto& x : score) x /= 2.0;
    return score;
}

void CountryPrefixTable::add(const Prefix& p, CountryCode country) {
    auto [it, fresh] = prefixes_.try_emplace(p, country);
    if (!fresh) {
        if (it->second != country)
            throw InputError("prefix " + to_string(p) + " assigned to both " + it->second.str() + " and " +
                             country.str());
        return;
    }
    totals_[country] += p.size();
    if (ordinal_[static_cast<std::size_t>(country.index())] < 0) {
        countries_.insert(std::lower_bound(countries_.begin(), countries_.end(), country), country);
        for (std::size_t i = 0; i < countries_.size(); ++i)
            ordinal_[static_cast<std::size_t>(countries_[i].index())] = static_cast<int>(i);
    }
}

std::optional<CountryCode> CountryPrefixTable::country_of(const Prefix& p) const {
    auto it = prefixes_.find(p);
    if (it == prefixes_.end()) return std::nullopt;
    return it->second;
}

double CountryPrefixTable::weight(const Prefix& p) const {
    auto it = prefixes_.find(p);
    if (it == prefixes_.end()) throw InputError("prefix " + to_string(p) + " missing from the prefix table");
    return static_cast<double>(p.size()) / static_cast<double>(totals_.at(it->second));
}

std::uint64_t CountryPrefixTable::country_size(CountryCode c) const {
    auto it = totals_.find(c);
    return it == totals_.end() ? 0 : it->second;
}

CountryPrefixTable read_prefix_table(std::istream& in) {
    CountryPrefixTable t;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::is_comment_or_blank(line)) continue;
        auto f = text::split(text::trim(line), ',');
        if (f.size() != 2) throw ParseError("prefix table line " + std::to_string(lineno) + ": expected prefix,country");
        auto cc = normalize_country(CountryCode::from(text::trim(f[1])));
        if (!cc) throw ParseError("prefix table line " + std::to_string(lineno) + ": vague country code");
        t.add(parse_prefix(text::trim(f[0])), *cc);
    }
    return t;
}

CountryPrefixTable read_prefix_table_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open prefix table '" + path + "'");
    return read_prefix_table(in);
}

void write_prefix_table(std::ostream& out, const CountryPrefixTable& table) {
    for (const auto& [p, c] : table.prefixes()) out << to_string(p) << ',' << c.str() << '\n';
}

std::vector<PathAssignment> read_assignments(std::istream& in) {
    std::vector<PathAssignment> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::is_comment_or_blank(line)) continue;
        auto f = text::split(line, '\t');
        if (f.size() < 3 || f.size() > 4)
            throw ParseError("assignment line " + std::to_string(lineno) + ": expected src, dst, best[, alternates]");
        PathAssignment a{parse_prefix(text::trim(f[0])), parse_prefix(text::trim(f[1])),
                         parse_country_path(text::trim(f[2])), {}};
        if (f.size() == 4)
            for (auto alt : text::split(text::trim(f[3]), ';'))
                if (!text::trim(alt).empty()) a.alternates.push_back(parse_country_path(text::trim(alt)));
        out.push_back(std::move(a));
    }
    return out;
}

std::vector<PathAssignment> read_assignments_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open assignments file '" + path + "'");
    return read_assignments(in);
}

void write_assignments(std::ostream& out, std::span<const PathAssignment> assignments) {
    for (const auto& a : assignments) {
        out << to_string(a.src) << '\t' << to_string(a.dst) << '\t' << format_country_path(a.best) << '\t';
        for (std::size_t i = 0; i < a.alternates.size(); ++i)
            out << (i ? ";" : "") << format_country_path(a.alternates[i]);
        out << '\n';
    }
}

std::string_view metric_name(MetricKind m) { return m == MetricKind::CC ? "CC" : "SCC"; }
std::string_view path_source_name(PathSource s) { return s == PathSource::Observed ? "observed" : "inferred"; }

const CentralityRow* CentralityReport::find(CountryCode c) const {
    for (const auto& r : rows)
        if (r.country == c) return &r;
    return nullptr;
}

double CentralityReport::normalized(CountryCode c) const {
    const auto* r = find(c);
    return r ? r->normalized : 0.0;
}

CentralityAccumulator::CentralityAccumulator(const CountryPrefixTable& table)
    : table_(&table),
      n_(table.countries().size()),
      cc_(kCountrySlots),
      scc_(kCountrySlots),
      pair_weight_(n_ * n_) {}

void CentralityAccumulator::add(const PathAssignment& a) {
    const auto s = table_->country_of(a.src);
    if (!s) throw InputError("prefix " + to_string(a.src) + " missing from the prefix table");
    const auto t = table_->country_of(a.dst);
    if (!t) throw InputError("prefix " + to_string(a.dst) + " missing from the prefix table");
    add_weighted(*s, *t, table_->weight(a.src) * table_->weight(a.dst), a.best, a.alternates);
}

void CentralityAccumulator::add_weighted(CountryCode s, CountryCode t, double weight,
                                         std::span<const CountryCode> best,
                                         std::span<const CountryPath> alternates) {
    if (s == t) return;
    const int si = table_->ordinal(s), ti = table_->ordinal(t);
    if (si < 0 || ti < 0) throw InputError("endpoint country without prefix space: " + s.str() + "->" + t.str());
    ++pairs_;
    pair_weight_[static_cast<std::size_t>(si) * n_ + static_cast<std::size_t>(ti)].add(weight);
    if (best.empty()) {
        ++unreachable_;
        return;
    }

    std::bitset<kCountrySlots> on_best;
    for (auto c : best) on_best.set(static_cast<std::size_t>(c.index()));
    on_best.reset(static_cast<std::size_t>(s.index()));
    on_best.reset(static_cast<std::size_t>(t.index()));

    // Unavoidable: on the best path and on every alternate.
    auto unavoidable = on_best;
    for (const auto& alt : alternates) {
        std::bitset<kCountrySlots> on_alt;
        for (auto c : alt) on_alt.set(static_cast<std::size_t>(c.index()));
        unavoidable &= on_alt;
    }

    for (auto c : best) {
        const auto i = static_cast<std::size_t>(c.index());
        if (!on_best.test(i)) continue;  // endpoint, or already credited
        on_best.reset(i);
        cc_[i].add(weight);
        if (unavoidable.test(i)) scc_[i].add(weight);
    }
}

void CentralityAccumulator::merge(const CentralityAccumulator& other) {
    if (other.n_ != n_) throw InvariantError("merging accumulators over different prefix tables");
    for (std::size_t i = 0; i < cc_.size(); ++i) {
        cc_[i].merge(other.cc_[i]);
        scc_[i].merge(other.scc_[i]);
    }
    for (std::size_t i = 0; i < pair_weight_.size(); ++i) pair_weight_[i].merge(other.pair_weight_[i]);
    pairs_ += other.pairs_;
    unreachable_ += other.unreachable_;
}

CentralityReport CentralityAccumulator::report(MetricKind metric, PathSource source) const {
    const auto& sums = metric == MetricKind::CC ? cc_ : scc_;
    CentralityReport rep;
    rep.metric = metric;
    rep.source = source;

    std::vector<bool> listed(kCountrySlots, false);
    for (auto c : table_->countries()) listed[static_cast<std::size_t>(c.index())] = true;
    for (std::size_t i = 0; i < cc_.size(); ++i)
        if (cc_[i].value() != 0.0) listed[i] = true;

    for (std::size_t i = 0; i < listed.size(); ++i) {
        if (!listed[i]) continue;
        const auto c = CountryCode::from_index(static_cast<int>(i));
        const int v = table_->ordinal(c);
        // Weight of streamed pairs whose endpoint countries are distinct and both differ from c.
        CompensatedSum denom;
        for (std::size_t a = 0; a < n_; ++a) {
            if (static_cast<int>(a) == v) continue;
            for (std::size_t b = 0; b < n_; ++b)
                if (b != a && static_cast<int>(b) != v) denom.add(pair_weight_[a * n_ + b].value());
        }
        CentralityRow row;
        row.country = c;
        row.raw = sums[i].value();
        row.denominator = denom.value();
        if (row.denominator > 0.0) row.normalized = row.raw >= row.denominator ? 1.0 : row.raw / row.denominator;
        rep.rows.push_back(row);
    }
    assign_ranks(rep.rows);
    rep.metadata["metric"] = metric_name(metric);
    rep.metadata["path_source"] = path_source_name(source);
    rep.metadata["pairs"] = std::to_string(pairs_);
    rep.metadata["unreachable_pairs"] = std::to_string(unreachable_);
    rep.metadata["denominator"] = "weighted pairs with distinct endpoint countries other than the country";
    return rep;
}

void CentralityAccumulator::write_checkpoint(std::ostream& out) const {
    out << "pairs\t" << pairs_ << "\nunreachable\t" << unreachable_ << '\n';
    auto put = [&](std::string_view tag, std::size_t i, const CompensatedSum& s) {
        if (s.sum == 0.0 && s.carry == 0.0) return;
        out << tag << '\t' << i << '\t' << text::format_hexfloat(s.sum) << '\t' << text::format_hexfloat(s.carry)
            << '\n';
    };
    for (std::size_t i = 0; i < cc_.size(); ++i) put("cc", i, cc_[i]);
    for (std::size_t i = 0; i < scc_.size(); ++i) put("scc", i, scc_[i]);
    for (std::size_t i = 0; i < pair_weight_.size(); ++i) put("pw", i, pair_weight_[i]);
}

void CentralityAccumulator::read_checkpoint(std::istream& in) {
    std::string line;
    while (std::getline(in, line)) {
        if (text::is_comment_or_blank(line)) continue;
        auto f = text::split(line, '\t');
        auto bad = [&] { return ParseError("bad checkpoint row '" + line + "'"); };
        if (f.size() == 2) {
            auto v = text::parse_int<std::size_t>(f[1]);
            if (!v) throw bad();
            if (f[0] == "pairs")
                pairs_ = *v;
            else if (f[0] == "unreachable")
                unreachable_ = *v;
            else
                throw bad();
            continue;
        }
        if (f.size() != 4) throw bad();
        auto i = text::parse_int<std::size_t>(f[1]);
        auto sum = text::parse_hexfloat(f[2]);
        auto carry = text::parse_hexfloat(f[3]);
        if (!i || !sum || !carry) throw bad();
        std::vector<CompensatedSum>* target = nullptr;
        if (f[0] == "cc")
            target = &cc_;
        else if (f[0] == "scc")
            target = &scc_;
        else if (f[0] == "pw")
            target = &pair_weight_;
        if (!target || *i >= target->size()) throw bad();
        (*target)[*i] = CompensatedSum{*sum, *carry};
    }
}

void assign_ranks(std::vector<CentralityRow>& rows) {
    std::sort(rows.begin(), rows.end(), [](const CentralityRow& a, const CentralityRow& b) {
        if (a.normalized != b.normalized) return a.normalized > b.normalized;
        return a.country < b.country;
    });
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i].rank = i + 1;
}

std::vector<CentralityRow> rank_report(const CentralityReport& report, std::size_t top_n) {
    auto rows = report.rows;
    assign_ranks(rows);
    if (rows.size() > top_n) rows.resize(top_n);
    return rows;
}

void write_report_csv(std::ostream& out, std::span<const CentralityReport> reports, bool header) {
    if (header) out << "country,metric,raw,normalized,rank,path_source\n";
    for (const auto& rep : reports)
        for (const auto& r : rep.rows)
            out << r.country.str() << ',' << metric_name(rep.metric) << ',' << text::format_double(r.raw) << ','
                << text::format_double(r.normalized) << ',' << r.rank << ',' << path_source_name(rep.source)
                << '\n';
}

void write_report_jsonl(std::ostream& out, std::span<const CentralityReport> reports) {
    using nlohmann::ordered_json;
    for (const auto& rep : reports) {
        for (const auto& r : rep.rows) {
            ordered_json j;
            j["country"] = r.country.str();
            j["metric"] = metric_name(rep.metric);
            j["raw"] = r.raw;
            j["normalized"] = r.normalized;
            j["denominator"] = r.denominator;
            j["rank"] = r.rank;
            j["path_source"] = path_source_name(rep.source);
            out << j.dump() << '\n';
        }
        ordered_json meta;
        meta["metadata"] = rep.metadata;
        out << meta.dump() << '\n';
    }
}

std::vector<CentralityReport> read_report_csv(std::istream& in) {
    std::vector<CentralityReport> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::is_comment_or_blank(line) || line.rfind("country,", 0) == 0) continue;
        auto f = text::split(text::trim(line), ',');
        auto fail = [&] { return ParseError("report line " + std::to_string(lineno) + ": malformed row"); };
        if (f.size() != 6) throw fail();
        MetricKind metric;
        if (f[1] == "CC")
            metric = MetricKind::CC;
        else if (f[1] == "SCC")
            metric = MetricKind::SCC;
        else
            throw fail();
        PathSource source;
        if (f[5] == "observed")
            source = PathSource::Observed;
        else if (f[5] == "inferred")
            source = PathSource::Inferred;
        else
            throw fail();
        auto raw = text::parse_double(f[2]);
        auto norm = text::parse_double(f[3]);
        auto rank = text::parse_int<std::size_t>(f[4]);
        if (!raw || !norm || !rank) throw fail();
        if (out.empty() || out.back().metric != metric || out.back().source != source) {
            out.emplace_back();
            out.back().metric = metric;
            out.back().source = source;
        }
        out.back().rows.push_back({CountryCode::from(f[0]), *raw, *norm, 0.0, *rank});
    }
    return out;
}

}  // namespace cpa
