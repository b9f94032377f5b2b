#pragma once

#include <atomic>
#include <functional>
#include <memory>
#include <mutex>
#include <thread>
#include <unordered_map>
#include <vector>

#include "rowserve/frame.hpp"

namespace rowserve {

struct HostPort {
    std::string host;
    int port = 0;

    std::string to_string() const { return host + ":" + std::to_string(port); }
    static HostPort parse(const std::string& address);
};

/// Accepts framed TCP connections; each received frame is answered with the
/// frame the handler returns (normally an Ack). Undecodable input resets the
/// connection.
class FrameServer {
public:
    using Handler = std::function<Frame(Frame&&)>;

    FrameServer(std::string host, int port, Handler handler);
    ~FrameServer();

    /// Binds and starts the accept loop; throws NetError on bind failure.
    /// Port 0 binds an ephemeral port, readable via port().
    void start();
    void stop();
    int port() const { return port_; }

private:
    void accept_loop();
    void serve_connection(int fd);

    std::string host_;
    int port_;
    Handler handler_;
    int listen_fd_ = -1;
    std::atomic<bool> running_{false};
    std::thread accept_thread_;
    std::mutex conn_mu_;
    std::vector<std::thread> conn_threads_;
};

/// Persistent framed connections to one peer; call() is send-frame,
/// read-reply-frame. Connections are pooled and reused.
class FrameClient {
public:
    explicit FrameClient(std::string address, int timeout_ms = 5000);
    ~FrameClient();

    /// Throws NetError on connect/send/receive failure.
    Frame call(const Frame& frame);

    const std::string& address() const { return address_; }

private:
    int checkout();
    void checkin(int fd);

    std::string address_;
    int timeout_ms_;
    std::mutex mu_;
    std::vector<int> idle_;
};

/// Worker-wide client registry keyed by peer address.
class PeerPool {
public:
    explicit PeerPool(int timeout_ms = 5000) : timeout_ms_(timeout_ms) {}

    FrameClient& to(const std::string& address);

    /// call() with bounded retries and backoff up to deadline_ms from now.
    Frame call_with_retry(const std::string& address, const Frame& frame, int64_t deadline_ms);

private:
    int timeout_ms_;
    std::mutex mu_;
    std::unordered_map<std::string, std::unique_ptr<FrameClient>> clients_;
};

}  // namespace rowserve
