#pragma once

#include <chrono>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>

#include "cpa/geo_db.hpp"

namespace cpa {

struct WhoisOptions {
    std::string host = "whois.cymru.com";
    int port = 43;
    /// Minimum spacing between bulk queries.
    std::chrono::milliseconds min_interval{1000};
    std::chrono::milliseconds timeout{10000};
    /// Network access is opt-in.
    bool enabled = false;
};

/// Bulk whois client over TCP: newline-delimited IPs out, `ip|asn|country`
/// lines back. Disabled clients answer nothing and never open a socket.
class WhoisBulkClient final : public LookupClient {
public:
    explicit WhoisBulkClient(WhoisOptions options = {}) : options_(std::move(options)) {}

    std::optional<LookupAnswer> request(IpAddr ip) override;
    /// One round trip for many addresses; failures yield an empty map.
    std::unordered_map<IpAddr, LookupAnswer> request_bulk(std::span<const IpAddr> ips);

    std::size_t round_trips() const { return round_trips_; }

private:
    std::optional<std::string> exchange(const std::string& payload);

    WhoisOptions options_;
    std::chrono::steady_clock::time_point last_query_{};
    std::size_t round_trips_ = 0;
};

}  // namespace cpa
