#include <atomic>
#include <random>
#include <sstream>
#include <thread>

#include <gtest/gtest.h>

#include "cpa/geo_db.hpp"
#include "cpa/whois_client.hpp"

using namespace cpa;

namespace {

GeoDbBuild build(const std::string& registry, const std::string* overrides = nullptr) {
    std::istringstream reg(registry);
    if (!overrides) return build_geodb(reg);
    std::istringstream ovr(*overrides);
    return build_geodb(reg, &ovr);
}

CountryCode cc(const char* s) { return CountryCode::from(s); }

}  // namespace

TEST(BuildGeoDb, HongKongBecomesChina) {
    auto b = build("1.2.0.0/16,HK,4134\n");
    const auto a = b.db.lookup(parse_ip("1.2.3.4"));
    ASSERT_TRUE(a);
    EXPECT_EQ(a->country, cc("CN"));
    EXPECT_EQ(a->asn, Asn{4134});
    EXPECT_EQ(b.hk_rewrites, 1u);
}

TEST(BuildGeoDb, VagueCodesAreUnresolved) {
    auto b = build("5.0.0.0/8,EU,65010\n6.0.0.0/8,AP,65011\n");
    EXPECT_FALSE(b.db.lookup(parse_ip("5.1.1.1")));
    EXPECT_FALSE(b.db.lookup(parse_ip("6.1.1.1")));
    EXPECT_EQ(b.vague_rows, 2u);
    // The entry is still there for longest-match purposes.
    EXPECT_EQ(longest_match(b.db, parse_ip("5.1.1.1")), parse_prefix("5.0.0.0/8"));
}

TEST(BuildGeoDb, DuplicateRowLastWins) {
    auto b = build("7.0.0.0/8,US,1\n7.0.0.0/8,DE,2\n");
    EXPECT_EQ(b.db.lookup(parse_ip("7.0.0.1"))->country, cc("DE"));
    EXPECT_EQ(b.duplicate_rows, 1u);
    EXPECT_EQ(b.db.size(), 1u);
    // Votes follow the replacement.
    EXPECT_FALSE(b.db.country_of_as(Asn{1}));
    EXPECT_EQ(b.db.country_of_as(Asn{2}), cc("DE"));
}

TEST(BuildGeoDb, MalformedRowsRejected) {
    auto b = build("# c\n7.0.0.0/8,US\n8.0.0.0/8,USA,1\n9.0.0.0/8,US,0\n10.0.0.0/8,US,5\n");
    EXPECT_EQ(b.rejects.size(), 3u);
    EXPECT_EQ(b.rejects[0].line, 2u);
    EXPECT_EQ(b.db.size(), 1u);
}

TEST(BuildGeoDb, OverridesTaggedAndApplied) {
    const std::string ovr = "10.1.0.0/16,FR,9\n10.0.0.0/8,GB,5\n";
    auto b = build("10.0.0.0/8,US,5\n", &ovr);
    EXPECT_EQ(b.db.lookup(parse_ip("10.1.2.3"))->source, GeoSource::Override);
    EXPECT_EQ(b.db.lookup(parse_ip("10.2.0.0"))->country, cc("GB"));
}

TEST(BuildGeoDb, MissingFile) { EXPECT_THROW(build_geodb("/nonexistent/registry.csv"), InputError); }

TEST(GeoDb, LongestMatchExamples) {
    auto b = build("10.0.0.0/8,US,1\n10.1.0.0/16,DE,2\n");
    EXPECT_EQ(longest_match(b.db, parse_ip("10.1.2.3")), parse_prefix("10.1.0.0/16"));
    EXPECT_EQ(longest_match(b.db, parse_ip("10.2.0.1")), parse_prefix("10.0.0.0/8"));
    EXPECT_FALSE(longest_match(b.db, parse_ip("11.0.0.1")));
}

TEST(GeoDb, PrefixLookupUsesCoveringEntry) {
    auto b = build("10.0.0.0/8,US,1\n10.1.0.0/16,DE,2\n");
    EXPECT_EQ(b.db.lookup(parse_prefix("10.1.0.0/16"))->country, cc("DE"));
    EXPECT_EQ(b.db.lookup(parse_prefix("10.1.2.0/24"))->country, cc("DE"));
    EXPECT_EQ(b.db.lookup(parse_prefix("10.0.0.0/9"))->country, cc("US"));
    EXPECT_FALSE(b.db.lookup(parse_prefix("0.0.0.0/0")));
}

TEST(GeoDb, CountryOfAsMajority) {
    auto b = build("1.0.0.0/8,US,7\n2.0.0.0/8,DE,7\n3.0.0.0/8,DE,7\n4.0.0.0/8,EU,7\n");
    EXPECT_EQ(b.db.country_of_as(Asn{7}), cc("DE"));
    auto tie = build("1.0.0.0/8,US,7\n2.0.0.0/8,DE,7\n");
    EXPECT_EQ(tie.db.country_of_as(Asn{7}), cc("DE"));
    EXPECT_FALSE(tie.db.country_of_as(Asn{8}));
}

TEST(GeoDb, NoResolvedAnswerIsVagueOrHk) {
    std::mt19937 rng(4);
    const char* codes[] = {"US", "HK", "EU", "AP", "DE", "CN"};
    GeoDb db;
    for (int i = 0; i < 500; ++i)
        db.add(Prefix(IpAddr{static_cast<std::uint32_t>(rng())}, 8 + static_cast<int>(rng() % 17)),
               cc(codes[rng() % 6]), Asn{1 + static_cast<std::uint32_t>(rng() % 50)});
    for (int q = 0; q < 5000; ++q) {
        if (auto a = db.lookup(IpAddr{static_cast<std::uint32_t>(rng())})) {
            EXPECT_NE(a->country, cc("HK"));
            EXPECT_FALSE(is_vague_code(a->country));
        }
    }
}

TEST(Resolver, LongestMatchBeatsVagueCover) {
    auto b = build("10.0.0.0/8,EU,1\n10.1.0.0/16,DE,2\n");
    Resolver r(b.db);
    EXPECT_EQ(r.resolve(parse_ip("10.1.0.1"))->country, cc("DE"));
}

TEST(Resolver, FallsBackToClientWhenVague) {
    auto b = build("10.0.0.0/8,EU,1\n");
    FileLookupClient client;
    client.set(parse_ip("10.9.9.9"), {cc("DE"), Asn{65020}});
    Resolver r(b.db, &client);
    const auto a = r.resolve(parse_ip("10.9.9.9"));
    ASSERT_TRUE(a);
    EXPECT_EQ(a->country, cc("DE"));
    EXPECT_EQ(a->asn, Asn{65020});
    EXPECT_EQ(a->source, GeoSource::WhoisFallback);
    EXPECT_FALSE(r.resolve(parse_ip("10.9.9.8")));
}

TEST(Resolver, NoMatchAnywhereIsUnresolved) {
    auto b = build("10.0.0.0/8,US,1\n");
    FileLookupClient client;
    Resolver r(b.db, &client);
    EXPECT_FALSE(r.resolve(parse_ip("11.0.0.1")));
}

TEST(Resolver, ClientAnswersAreNormalized) {
    GeoDb db;
    FileLookupClient client;
    client.set(parse_ip("1.1.1.1"), {cc("HK"), Asn{5}});
    client.set(parse_ip("1.1.1.2"), {cc("EU"), Asn{5}});
    Resolver r(db, &client);
    EXPECT_EQ(r.resolve(parse_ip("1.1.1.1"))->country, cc("CN"));
    EXPECT_FALSE(r.resolve(parse_ip("1.1.1.2")));
}

TEST(Resolver, CacheNeverChangesAnswersAndAvoidsRepeatRequests) {
    auto b = build("10.0.0.0/8,EU,1\n");
    FileLookupClient client;
    client.set(parse_ip("10.0.0.1"), {cc("FR"), Asn{3}});
    Resolver r(b.db, &client);
    const auto first = r.resolve(parse_ip("10.0.0.1"));
    for (int i = 0; i < 10; ++i) EXPECT_EQ(r.resolve(parse_ip("10.0.0.1")), first);
    EXPECT_EQ(client.requests(), 1u);
}

TEST(Resolver, ConcurrentResolutionIsConsistent) {
    GeoDb db;
    for (std::uint32_t i = 0; i < 64; ++i) db.add(Prefix(IpAddr{i << 24}, 8), cc(i % 2 ? "US" : "DE"), Asn{i + 1});
    Resolver r(db);
    std::vector<std::thread> threads;
    std::atomic<int> mismatches{0};
    for (int t = 0; t < 4; ++t)
        threads.emplace_back([&, t] {
            for (std::uint32_t i = 0; i < 2000; ++i) {
                const IpAddr ip{((i + static_cast<std::uint32_t>(t)) % 64) << 24 | i};
                if (r.resolve(ip) != db.lookup(ip)) ++mismatches;
            }
        });
    for (auto& th : threads) th.join();
    EXPECT_EQ(mismatches.load(), 0);
}

TEST(BulkProtocol, EncodeAndParse) {
    const std::vector<IpAddr> ips{parse_ip("1.2.3.4"), parse_ip("5.6.7.8")};
    EXPECT_EQ(encode_bulk_request(ips), "begin\n1.2.3.4\n5.6.7.8\nend\n");
    const auto m = parse_bulk_response("1.2.3.4 | 4134 | CN\n5.6.7.8|NA|US\nbroken\n9.9.9.9|7|DE\n");
    ASSERT_EQ(m.size(), 2u);
    EXPECT_EQ(m.at(parse_ip("1.2.3.4")).asn, Asn{4134});
    EXPECT_EQ(m.at(parse_ip("9.9.9.9")).country, cc("DE"));
}

TEST(FileLookupClient, ReadsBulkOutput) {
    std::istringstream in("10.0.0.1|65020|DE\n");
    FileLookupClient c(in);
    EXPECT_EQ(c.request(parse_ip("10.0.0.1"))->asn, Asn{65020});
    EXPECT_FALSE(c.request(parse_ip("10.0.0.2")));
    EXPECT_THROW(FileLookupClient::from_file("/nonexistent/lookup.txt"), InputError);
}

TEST(WhoisBulkClient, DisabledClientNeverConnects) {
    WhoisBulkClient client;
    EXPECT_FALSE(client.request(parse_ip("8.8.8.8")));
    const std::vector<IpAddr> ips{parse_ip("8.8.8.8")};
    EXPECT_TRUE(client.request_bulk(ips).empty());
    EXPECT_EQ(client.round_trips(), 0u);
}

TEST(WhoisBulkClient, UnreachableServerYieldsNothing) {
    WhoisOptions opt;
    opt.enabled = true;
    opt.host = "127.0.0.1";
    opt.port = 1;  // nothing listens here
    opt.min_interval = std::chrono::milliseconds(0);
    opt.timeout = std::chrono::milliseconds(500);
    WhoisBulkClient client(opt);
    EXPECT_FALSE(client.request(parse_ip("8.8.8.8")));
}
