#pragma once

#include <atomic>
#include <cstdint>

namespace lad::detail {

// Process-wide counter of attempted network connections. Every live
// transport (chat backend, search provider, page fetcher) bumps it before
// touching a socket, so offline tests can assert it stayed at zero.
inline std::atomic<std::uint64_t>& socket_attempt_counter() {
    static std::atomic<std::uint64_t> counter{0};
    return counter;
}

inline std::uint64_t socket_attempts() { return socket_attempt_counter().load(); }

inline void record_socket_attempt() { socket_attempt_counter().fetch_add(1); }

inline void reset_socket_attempts() { socket_attempt_counter().store(0); }

}  // namespace lad::detail
