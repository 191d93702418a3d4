#include "cpa/whois_client.hpp"

#include <netdb.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstring>
#include <thread>

namespace cpa {

namespace {

class Socket {
public:
    explicit Socket(int fd) : fd_(fd) {}
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;
    ~Socket() {
        if (fd_ >= 0) ::close(fd_);
    }
    int fd() const { return fd_; }

private:
    int fd_;
};

bool wait_for(int fd, short events, std::chrono::milliseconds timeout) {
    pollfd p{fd, events, 0};
    return ::poll(&p, 1, static_cast<int>(timeout.count())) > 0;
}

}  // namespace

std::optional<std::string> WhoisBulkClient::exchange(const std::string& payload) {
    if (!options_.enabled) return std::nullopt;

    const auto now = std::chrono::steady_clock::now();
    if (round_trips_ > 0 && now - last_query_ < options_.min_interval)
        std::this_thread::sleep_for(options_.min_interval - (now - last_query_));
    last_query_ = std::chrono::steady_clock::now();
    ++round_trips_;

    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    const auto port = std::to_string(options_.port);
    if (::getaddrinfo(options_.host.c_str(), port.c_str(), &hints, &res) != 0 || !res) return std::nullopt;
    Socket sock(::socket(res->ai_family, res->ai_socktype, res->ai_protocol));
    const int rc = sock.fd() < 0 ? -1 : ::connect(sock.fd(), res->ai_addr, res->ai_addrlen);
    ::freeaddrinfo(res);
    if (rc != 0) return std::nullopt;

    std::size_t sent = 0;
    while (sent < payload.size()) {
        if (!wait_for(sock.fd(), POLLOUT, options_.timeout)) return std::nullopt;
        auto n = ::send(sock.fd(), payload.data() + sent, payload.size() - sent, MSG_NOSIGNAL);
        if (n <= 0) return std::nullopt;
        sent += static_cast<std::size_t>(n);
    }
    ::shutdown(sock.fd(), SHUT_WR);

    std::string body;
    char buf[4096];
    while (wait_for(sock.fd(), POLLIN, options_.timeout)) {
        auto n = ::recv(sock.fd(), buf, sizeof buf, 0);
        if (n < 0) return std::nullopt;
        if (n == 0) return body;
        body.append(buf, static_cast<std::size_t>(n));
    }
    return std::nullopt;
}

std::unordered_map<IpAddr, LookupAnswer> WhoisBulkClient::request_bulk(std::span<const IpAddr> ips) {
    auto body = exchange(encode_bulk_request(ips));
    if (!body) return {};
    return parse_bulk_response(*body);
}

std::optional<LookupAnswer> WhoisBulkClient::request(IpAddr ip) {
    const IpAddr one[] = {ip};
    auto answers = request_bulk(one);
    auto it = answers.find(ip);
    if (it == answers.end()) return std::nullopt;
    return it->second;
}

}  // namespace cpa
