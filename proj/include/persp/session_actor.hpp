#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "persp/session.hpp"
#include "persp/speech.hpp"

namespace persp {

enum class EventKind { kPhase, kDecision, kUtterance, kWarning, kDeliveryFailed };
std::string_view to_string(EventKind kind) noexcept;
EventKind parse_event_kind(std::string_view name);

/// One entry of a session's ordered event stream. `phase` is the phase after
/// the event; `decision`/`utterance` are set for those kinds only.
struct SessionEvent {
    std::uint64_t seq = 0;
    EventKind kind = EventKind::kPhase;
    Timestamp timestamp = 0;
    Phase phase = Phase::kAwaitContinue;
    std::optional<DecisionEvent> decision;
    std::optional<Utterance> utterance;
    std::string message;
    friend bool operator==(const SessionEvent&, const SessionEvent&) = default;
};

using Clock = std::function<Timestamp()>;
/// Wall clock in Unix milliseconds.
Clock system_clock();
/// start, start + step, ... Thread safe; handy for deterministic logs.
Clock logical_clock(Timestamp start = 0, Timestamp step = 1);

struct SubmitOutcome {
    SessionState state;
    std::vector<std::string> warnings;
    std::optional<std::string> delivery_error;
};

/// A persisted log line: either a decision or a delivered utterance.
struct LogRecord {
    std::optional<DecisionEvent> decision;
    std::optional<Utterance> utterance;
    Timestamp timestamp = 0;
};
std::vector<LogRecord> read_session_log(const std::filesystem::path& path);

/// Serializes everything that happens to one session. Each decision is
/// applied and any utterance it makes owed is spoken before the next request
/// gets the lock. A failed delivery leaves the state in the speaking phase;
/// retry_speech() tries again.
class SessionActor {
public:
    SessionActor(std::string session_id, std::shared_ptr<CandidateSource> source,
                 std::shared_ptr<SpeechAdapter> speech, SessionConfig config, Clock clock,
                 std::optional<std::filesystem::path> log_path = std::nullopt);

    const std::string& id() const noexcept { return id_; }
    SessionState snapshot() const;

    SubmitOutcome submit(Gate gate, DecisionValue value);
    SubmitOutcome retry_speech();

    /// Events with seq >= from.
    std::vector<SessionEvent> events(std::uint64_t from = 0) const;
    /// Like events(), but waits up to `timeout` for at least one to exist.
    std::vector<SessionEvent> wait_events(std::uint64_t from, std::chrono::milliseconds timeout) const;
    std::uint64_t next_seq() const;

    /// Wakes all waiters; later submissions still work.
    void close();
    bool closed() const;

    /// Rebuilds an actor from its JSONL log by replaying the recorded
    /// decisions. Utterances are re-derived, not re-spoken.
    static std::unique_ptr<SessionActor> restore(std::string session_id, std::shared_ptr<CandidateSource> source,
                                                 std::shared_ptr<SpeechAdapter> speech, SessionConfig config,
                                                 Clock clock, const std::filesystem::path& log_path);

private:
    Timestamp now_locked();
    void push_locked(SessionEvent event);
    void append_log_locked(const LogRecord& record);
    void speak_owed_locked(SubmitOutcome& outcome);

    std::string id_;
    std::shared_ptr<CandidateSource> source_;
    std::shared_ptr<SpeechAdapter> speech_;
    SessionConfig config_;
    Clock clock_;
    std::optional<std::filesystem::path> log_path_;

    mutable std::mutex mutex_;
    mutable std::condition_variable cv_;
    SessionState state_;
    std::vector<SessionEvent> events_;
    Timestamp last_timestamp_ = 0;
    bool closed_ = false;
};

using SourceFactory = std::function<std::shared_ptr<CandidateSource>(const std::string& session_id)>;

struct SessionManagerConfig {
    SessionConfig session;
    std::optional<std::filesystem::path> data_dir;  // logs go to <data_dir>/sessions/<id>.jsonl
    Clock clock = system_clock();
    std::uint64_t id_seed = 0;  // 0 draws from std::random_device
};

class SessionManager {
public:
    SessionManager(SourceFactory sources, std::shared_ptr<SpeechAdapter> speech, SessionManagerConfig config);

    std::shared_ptr<SessionActor> create();
    /// Throws NotFound.
    std::shared_ptr<SessionActor> find(const std::string& session_id) const;
    std::vector<std::string> ids() const;
    /// Loads every log under the data dir that is not already live.
    std::size_t restore_all();
    void close_all();

private:
    std::optional<std::filesystem::path> log_path(const std::string& session_id) const;

    SourceFactory sources_;
    std::shared_ptr<SpeechAdapter> speech_;
    SessionManagerConfig config_;
    mutable std::mutex mutex_;
    std::map<std::string, std::shared_ptr<SessionActor>> sessions_;
    std::uint64_t id_state_;
};

}  // namespace persp
