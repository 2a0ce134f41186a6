#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <string>

#include "persp/session_actor.hpp"

namespace persp {

struct GatewayConfig {
    std::string host = "127.0.0.1";
    int port = 0;  // 0 picks a free port
    std::chrono::milliseconds stream_poll{200};
};

/// HTTP front end over a SessionManager.
///
///   POST /sessions                   201, session
///   GET  /sessions                   {"sessions": [ids]}
///   GET  /sessions/{id}              session
///   POST /sessions/{id}/decisions    {"gate","value"} -> session + warnings
///   POST /sessions/{id}/speak        retry an undelivered utterance
///   GET  /sessions/{id}/candidate    candidate, 404 if none
///   GET  /sessions/{id}/events       text/event-stream; ?from=<seq>, ?follow=0
///
/// Errors are {"error": <code>, "message": ...} with a matching status.
class Gateway {
public:
    Gateway(std::shared_ptr<SessionManager> sessions, GatewayConfig config);
    ~Gateway();
    Gateway(const Gateway&) = delete;
    Gateway& operator=(const Gateway&) = delete;

    /// Binds and serves on a background thread; returns the bound port.
    /// Throws Io when the address cannot be bound.
    int start();
    int port() const noexcept;
    /// Blocks until stop() is called from elsewhere.
    void wait();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Every session cycles through the candidates in `path`.
SourceFactory fixture_sources(const std::filesystem::path& path);
/// Loads <dir>/context and <dir>/qa; each session gets its own seed derived
/// from `seed` and its id.
SourceFactory model_sources(const std::filesystem::path& dir, std::uint64_t seed);

}  // namespace persp
