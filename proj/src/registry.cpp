#include "rowserve/registry.hpp"

#include "rowserve/codec.hpp"

namespace rowserve {

Bytes RoutingId::encode() const {
    Bytes out;
    put_u32(out, worker_id);
    put_u64(out, seq);
    return out;
}

std::optional<RoutingId> RoutingId::decode(const Bytes& bytes) {
    if (bytes.size() != 12) return std::nullopt;
    ByteReader in(bytes);
    RoutingId id;
    id.worker_id = in.u32();
    id.seq = in.u64();
    return id;
}

bool Responder::complete(HttpResponseData response) {
    {
        std::lock_guard lock(mu_);
        if (completed_) return false;
        completed_ = true;
        response_ = std::move(response);
    }
    cv_.notify_all();
    return true;
}

std::optional<HttpResponseData> Responder::wait(int64_t cap_ms) {
    std::unique_lock lock(mu_);
    cv_.wait_for(lock, std::chrono::milliseconds(cap_ms), [&] { return completed_; });
    return response_;
}

bool Responder::completed() const {
    std::lock_guard lock(mu_);
    return completed_;
}

RequestRegistry::RequestRegistry(uint32_t worker_id, const Clock& clock,
                                 int64_t request_timeout_ms, size_t shard_count)
    : worker_id_(worker_id), clock_(clock), timeout_ms_(request_timeout_ms) {
    if (shard_count == 0) shard_count = 1;
    shards_.reserve(shard_count);
    for (size_t i = 0; i < shard_count; ++i) shards_.push_back(std::make_unique<Shard>());
}

std::pair<RoutingId, ResponderPtr> RequestRegistry::insert() {
    RoutingId id{worker_id_, next_seq_.fetch_add(1)};
    auto responder = std::make_shared<Responder>();
    int64_t now = clock_.now_ms();
    int64_t deadline = now + timeout_ms_.load();
    Entry entry{responder, now, deadline};
    Shard& shard = shard_for(id.seq);
    {
        std::lock_guard lock(shard.mu);
        shard.open.emplace(id.seq, std::move(entry));
        shard.deadlines.emplace_back(deadline, id.seq);
    }
    inserts_.fetch_add(1);
    return {id, std::move(responder)};
}

bool RequestRegistry::complete(const RoutingId& id, HttpResponseData response) {
    if (id.worker_id != worker_id_) return false;
    Shard& shard = shard_for(id.seq);
    ResponderPtr responder;
    {
        std::lock_guard lock(shard.mu);
        auto it = shard.open.find(id.seq);
        if (it == shard.open.end()) return false;
        responder = std::move(it->second.responder);
        shard.open.erase(it);
        // the deadline queue entry is skipped lazily by the sweep
    }
    completions_.fetch_add(1);
    responder->complete(std::move(response));
    return true;
}

std::vector<RoutingId> RequestRegistry::expire_timeouts(int64_t now_ms) {
    std::vector<RoutingId> expired;
    HttpResponseData timeout;
    timeout.status = 504;
    timeout.reason = "Gateway Timeout";
    timeout.set_header("Content-Type", "text/plain");
    std::string body = "request timed out";
    timeout.body.assign(body.begin(), body.end());

    for (auto& shard_ptr : shards_) {
        Shard& shard = *shard_ptr;
        std::vector<ResponderPtr> doomed;
        {
            std::lock_guard lock(shard.mu);
            while (!shard.deadlines.empty() && shard.deadlines.front().first <= now_ms) {
                uint64_t seq = shard.deadlines.front().second;
                shard.deadlines.pop_front();
                auto it = shard.open.find(seq);
                if (it == shard.open.end()) continue;  // completed earlier
                doomed.push_back(std::move(it->second.responder));
                shard.open.erase(it);
                expired.push_back({worker_id_, seq});
            }
        }
        for (auto& responder : doomed) {
            responder->complete(timeout);
            expirations_.fetch_add(1);
        }
    }
    return expired;
}

size_t RequestRegistry::complete_all(const HttpResponseData& response) {
    size_t completed = 0;
    for (auto& shard_ptr : shards_) {
        Shard& shard = *shard_ptr;
        std::vector<ResponderPtr> doomed;
        {
            std::lock_guard lock(shard.mu);
            for (auto& [seq, entry] : shard.open) doomed.push_back(std::move(entry.responder));
            shard.open.clear();
            shard.deadlines.clear();
        }
        for (auto& responder : doomed) {
            responder->complete(response);
            shutdown_completions_.fetch_add(1);
            ++completed;
        }
    }
    return completed;
}

size_t RequestRegistry::size() const {
    size_t total = 0;
    for (const auto& shard : shards_) {
        std::lock_guard lock(shard->mu);
        total += shard->open.size();
    }
    return total;
}

}  // namespace rowserve
