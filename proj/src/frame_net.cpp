#include "rowserve/frame_net.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstring>

#include "rowserve/clock.hpp"

namespace rowserve {

namespace {

constexpr uint32_t kMaxFrameBytes = 256u << 20;

void set_timeouts(int fd, int timeout_ms) {
    timeval tv{};
    tv.tv_sec = timeout_ms / 1000;
    tv.tv_usec = (timeout_ms % 1000) * 1000;
    setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
    setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof(tv));
    int one = 1;
    setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

bool write_all(int fd, const uint8_t* data, size_t len) {
    size_t off = 0;
    while (off < len) {
        ssize_t n = ::send(fd, data + off, len - off, MSG_NOSIGNAL);
        if (n <= 0) return false;
        off += static_cast<size_t>(n);
    }
    return true;
}

bool read_all(int fd, uint8_t* data, size_t len) {
    size_t off = 0;
    while (off < len) {
        ssize_t n = ::recv(fd, data + off, len - off, 0);
        if (n <= 0) return false;
        off += static_cast<size_t>(n);
    }
    return true;
}

bool write_frame(int fd, const Frame& frame) {
    Bytes payload = encode_frame(frame);
    Bytes wire;
    put_u32(wire, static_cast<uint32_t>(payload.size()));
    wire.insert(wire.end(), payload.begin(), payload.end());
    return write_all(fd, wire.data(), wire.size());
}

// false on clean close / timeout; throws CodecError on protocol garbage
bool read_frame(int fd, Frame& out) {
    uint8_t len_bytes[4];
    if (!read_all(fd, len_bytes, 4)) return false;
    uint32_t len = static_cast<uint32_t>(len_bytes[0]) | static_cast<uint32_t>(len_bytes[1]) << 8 |
                   static_cast<uint32_t>(len_bytes[2]) << 16 |
                   static_cast<uint32_t>(len_bytes[3]) << 24;
    if (len == 0 || len > kMaxFrameBytes) {
        throw CodecError(CodecError::Kind::Framing,
                         "frame length " + std::to_string(len) + " out of range");
    }
    Bytes payload(len);
    if (!read_all(fd, payload.data(), len)) return false;
    out = decode_frame(payload);
    return true;
}

int connect_to(const HostPort& hp, int timeout_ms) {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw NetError("socket: " + std::string(strerror(errno)));
    set_timeouts(fd, timeout_ms);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<uint16_t>(hp.port));
    if (inet_pton(AF_INET, hp.host.c_str(), &addr.sin_addr) != 1) {
        ::close(fd);
        throw NetError("bad peer host '" + hp.host + "' (numeric IPv4 expected)");
    }
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        int err = errno;
        ::close(fd);
        throw NetError("connect " + hp.to_string() + ": " + strerror(err));
    }
    return fd;
}

}  // namespace

HostPort HostPort::parse(const std::string& address) {
    size_t colon = address.rfind(':');
    if (colon == std::string::npos || colon + 1 >= address.size()) {
        throw ConfigError("address '" + address + "' is not host:port");
    }
    HostPort hp;
    hp.host = address.substr(0, colon);
    try {
        hp.port = std::stoi(address.substr(colon + 1));
    } catch (...) {
        throw ConfigError("address '" + address + "' has a bad port");
    }
    if (hp.host.empty() || hp.host == "localhost") hp.host = "127.0.0.1";
    if (hp.host == "0.0.0.0") hp.host = "127.0.0.1";
    return hp;
}

FrameServer::FrameServer(std::string host, int port, Handler handler)
    : host_(std::move(host)), port_(port), handler_(std::move(handler)) {}

FrameServer::~FrameServer() {
    stop();
}

void FrameServer::start() {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw NetError("socket: " + std::string(strerror(errno)));
    int one = 1;
    setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<uint16_t>(port_));
    std::string host = host_.empty() || host_ == "localhost" ? "0.0.0.0" : host_;
    if (host == "127.0.0.1" || host == "0.0.0.0") {
        addr.sin_addr.s_addr = host == "0.0.0.0" ? INADDR_ANY : htonl(INADDR_LOOPBACK);
    } else if (inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
        throw NetError("bad listen host '" + host + "'");
    }
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        throw NetError("bind " + host_ + ":" + std::to_string(port_) + ": " + strerror(errno));
    }
    if (::listen(listen_fd_, 128) != 0) {
        throw NetError("listen: " + std::string(strerror(errno)));
    }
    if (port_ == 0) {
        sockaddr_in bound{};
        socklen_t len = sizeof(bound);
        getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&bound), &len);
        port_ = ntohs(bound.sin_port);
    }
    running_ = true;
    accept_thread_ = std::thread([this] { accept_loop(); });
}

void FrameServer::stop() {
    if (!running_.exchange(false)) return;
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    if (accept_thread_.joinable()) accept_thread_.join();
    std::vector<std::thread> threads;
    {
        std::lock_guard lock(conn_mu_);
        threads.swap(conn_threads_);
    }
    for (auto& t : threads) {
        if (t.joinable()) t.join();
    }
}

void FrameServer::accept_loop() {
    while (running_) {
        int fd = ::accept(listen_fd_, nullptr, nullptr);
        if (fd < 0) {
            if (!running_) break;
            continue;
        }
        set_timeouts(fd, 30000);
        std::lock_guard lock(conn_mu_);
        conn_threads_.emplace_back([this, fd] { serve_connection(fd); });
    }
}

void FrameServer::serve_connection(int fd) {
    while (running_) {
        Frame frame;
        try {
            if (!read_frame(fd, frame)) break;
        } catch (const CodecError&) {
            break;  // protocol error: reset the connection
        }
        Frame reply;
        try {
            reply = handler_(std::move(frame));
        } catch (const std::exception& e) {
            reply = AckFrame{AckFrame::Error, e.what(), 0};
        }
        if (!write_frame(fd, reply)) break;
    }
    ::close(fd);
}

FrameClient::FrameClient(std::string address, int timeout_ms)
    : address_(std::move(address)), timeout_ms_(timeout_ms) {}

FrameClient::~FrameClient() {
    std::lock_guard lock(mu_);
    for (int fd : idle_) ::close(fd);
}

int FrameClient::checkout() {
    {
        std::lock_guard lock(mu_);
        if (!idle_.empty()) {
            int fd = idle_.back();
            idle_.pop_back();
            return fd;
        }
    }
    return connect_to(HostPort::parse(address_), timeout_ms_);
}

void FrameClient::checkin(int fd) {
    std::lock_guard lock(mu_);
    if (idle_.size() < 8) {
        idle_.push_back(fd);
    } else {
        ::close(fd);
    }
}

Frame FrameClient::call(const Frame& frame) {
    int fd = checkout();
    Frame reply;
    bool ok = write_frame(fd, frame);
    if (ok) {
        try {
            ok = read_frame(fd, reply);
        } catch (const CodecError& e) {
            ::close(fd);
            throw NetError("protocol error from " + address_ + ": " + e.what());
        }
    }
    if (!ok) {
        ::close(fd);
        throw NetError("peer " + address_ + " unreachable or closed the connection");
    }
    checkin(fd);
    return reply;
}

FrameClient& PeerPool::to(const std::string& address) {
    std::lock_guard lock(mu_);
    auto it = clients_.find(address);
    if (it == clients_.end()) {
        it = clients_.emplace(address, std::make_unique<FrameClient>(address, timeout_ms_)).first;
    }
    return *it->second;
}

Frame PeerPool::call_with_retry(const std::string& address, const Frame& frame,
                                int64_t deadline_ms) {
    int64_t start = steady_micros() / 1000;
    int64_t backoff = 25;
    std::string last_error;
    while (true) {
        try {
            return to(address).call(frame);
        } catch (const NetError& e) {
            last_error = e.what();
        }
        int64_t elapsed = steady_micros() / 1000 - start;
        if (elapsed + backoff > deadline_ms) {
            throw NetError("peer " + address + " unreachable after " + std::to_string(elapsed) +
                           " ms: " + last_error);
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
        backoff = std::min<int64_t>(backoff * 2, 400);
    }
}

}  // namespace rowserve
