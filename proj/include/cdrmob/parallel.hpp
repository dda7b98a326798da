#pragma once

// Fixed sharding over an index range. Shard boundaries depend only on the
// item count and the shard count, so callers that merge per-shard results in
// shard order get identical output for any thread count.

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace cdrmob {

struct Shard {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t index = 0;
};

inline std::vector<Shard> make_shards(std::size_t n, std::size_t shards) {
    shards = std::max<std::size_t>(1, std::min(shards, std::max<std::size_t>(n, 1)));
    std::vector<Shard> out;
    out.reserve(shards);
    for (std::size_t i = 0; i < shards; ++i)
        out.push_back({n * i / shards, n * (i + 1) / shards, i});
    return out;
}

/// Runs `fn(shard)` for every shard on up to `threads` workers and rethrows
/// the first exception (in shard order) after all workers finish.
template <typename Fn>
void run_shards(const std::vector<Shard>& shards, unsigned threads, Fn&& fn) {
    threads = std::max(1u, threads);
    if (threads == 1 || shards.size() <= 1) {
        for (const auto& s : shards) fn(s);
        return;
    }
    std::vector<std::exception_ptr> errors(shards.size());
    const std::size_t workers = std::min<std::size_t>(threads, shards.size());
    {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                for (std::size_t i = w; i < shards.size(); i += workers) {
                    try {
                        fn(shards[i]);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }
            });
        }
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

} // namespace cdrmob
