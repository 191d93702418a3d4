#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "cpa/net_model.hpp"

namespace cpa {

/// Binary trie keyed by prefix bits. Lookups walk at most 32 levels.
template <typename T>
class PrefixTrie {
public:
    PrefixTrie() { nodes_.emplace_back(); }

    /// Inserts or replaces; returns true if the prefix was already present.
    bool insert(const Prefix& p, T value) {
        std::uint32_t node = 0;
        const auto bits = p.base().value;
        for (int depth = 0; depth < p.length(); ++depth) {
            const int bit = (bits >> (31 - depth)) & 1;
            if (nodes_[node].child[bit] == kNone) {
                nodes_[node].child[bit] = static_cast<std::uint32_t>(nodes_.size());
                nodes_.emplace_back();
            }
            node = nodes_[node].child[bit];
        }
        const bool existed = nodes_[node].slot != kNone;
        if (existed) {
            values_[nodes_[node].slot].second = std::move(value);
        } else {
            nodes_[node].slot = static_cast<std::uint32_t>(values_.size());
            values_.emplace_back(p, std::move(value));
        }
        return existed;
    }

    /// Longest prefix covering `ip`, with its value.
    const std::pair<Prefix, T>* longest_match(IpAddr ip) const { return longest_match(ip, 32); }

    /// Longest stored prefix covering `ip` whose length is at most `max_length`.
    const std::pair<Prefix, T>* longest_match(IpAddr ip, int max_length) const {
        std::uint32_t node = 0;
        std::uint32_t found = nodes_[0].slot;
        for (int depth = 0; depth < max_length; ++depth) {
            const int bit = (ip.value >> (31 - depth)) & 1;
            node = nodes_[node].child[bit];
            if (node == kNone) break;
            if (nodes_[node].slot != kNone) found = nodes_[node].slot;
        }
        return found == kNone ? nullptr : &values_[found];
    }

    /// Longest stored prefix covering all of `p` (including `p` itself).
    const std::pair<Prefix, T>* covering(const Prefix& p) const { return longest_match(p.base(), p.length()); }

    const T* find(const Prefix& p) const {
        auto* hit = covering(p);
        return hit && hit->first == p ? &hit->second : nullptr;
    }

    std::size_t size() const { return values_.size(); }
    /// Entries in insertion order.
    const std::vector<std::pair<Prefix, T>>& entries() const { return values_; }

private:
    static constexpr std::uint32_t kNone = UINT32_MAX;
    struct Node {
        std::uint32_t child[2] = {kNone, kNone};
        std::uint32_t slot = kNone;
    };
    std::vector<Node> nodes_;
    std::vector<std::pair<Prefix, T>> values_;
};

}  // namespace cpa
