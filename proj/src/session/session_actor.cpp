#include "persp/session_actor.hpp"

#include <atomic>
#include <cstdio>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "persp/errors.hpp"
#include "persp/random.hpp"

namespace persp {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json record_to_json(const LogRecord& r) {
    json j;
    if (r.decision) {
        j["type"] = "decision";
        j["gate"] = to_string(r.decision->gate);
        j["value"] = to_string(r.decision->value);
    } else {
        j["type"] = "utterance";
        j["role"] = to_string(r.utterance->role);
        j["text"] = r.utterance->text;
    }
    j["timestamp"] = r.timestamp;
    return j;
}

Role parse_role(std::string_view name) {
    for (Role r : {Role::kInitiator, Role::kPrompter, Role::kReinforcer}) {
        if (to_string(r) == name) return r;
    }
    throw Error(ErrorCode::kInvalidArgument, "unknown role '" + std::string(name) + "'");
}

}  // namespace

std::string_view to_string(EventKind kind) noexcept {
    switch (kind) {
        case EventKind::kPhase: return "phase";
        case EventKind::kDecision: return "decision";
        case EventKind::kUtterance: return "utterance";
        case EventKind::kWarning: return "warning";
        case EventKind::kDeliveryFailed: return "delivery_failed";
    }
    return "?";
}

EventKind parse_event_kind(std::string_view name) {
    for (EventKind k : {EventKind::kPhase, EventKind::kDecision, EventKind::kUtterance, EventKind::kWarning,
                        EventKind::kDeliveryFailed}) {
        if (to_string(k) == name) return k;
    }
    throw Error(ErrorCode::kInvalidArgument, "unknown event kind '" + std::string(name) + "'");
}

Clock system_clock() {
    return [] {
        return std::chrono::duration_cast<std::chrono::milliseconds>(
                   std::chrono::system_clock::now().time_since_epoch())
            .count();
    };
}

Clock logical_clock(Timestamp start, Timestamp step) {
    auto counter = std::make_shared<std::atomic<Timestamp>>(start);
    return [counter, step] { return counter->fetch_add(step); };
}

std::vector<LogRecord> read_session_log(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
    std::vector<LogRecord> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const json j = json::parse(line);
            LogRecord r;
            r.timestamp = j.at("timestamp").get<Timestamp>();
            const std::string type = j.at("type").get<std::string>();
            if (type == "decision") {
                r.decision = DecisionEvent{parse_gate(j.at("gate").get<std::string>()),
                                           parse_decision_value(j.at("value").get<std::string>()), r.timestamp};
            } else if (type == "utterance") {
                r.utterance = Utterance{parse_role(j.at("role").get<std::string>()), j.at("text").get<std::string>()};
            } else {
                throw Error(ErrorCode::kMalformedLine, "unknown record type '" + type + "'");
            }
            out.push_back(std::move(r));
        } catch (const json::exception& e) {
            throw Error(ErrorCode::kMalformedLine, path.string() + " line " + std::to_string(line_no) + ": " + e.what());
        } catch (const Error& e) {
            if (e.code() == ErrorCode::kMalformedLine) throw;
            throw Error(ErrorCode::kMalformedLine, path.string() + " line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

SessionActor::SessionActor(std::string session_id, std::shared_ptr<CandidateSource> source,
                           std::shared_ptr<SpeechAdapter> speech, SessionConfig config, Clock clock,
                           std::optional<fs::path> log_path)
    : id_(std::move(session_id)),
      source_(std::move(source)),
      speech_(std::move(speech)),
      config_(std::move(config)),
      clock_(std::move(clock)),
      log_path_(std::move(log_path)),
      state_(start_session(id_)) {
    if (!source_ || !speech_ || !clock_) throw Error(ErrorCode::kInvalidArgument, "session actor needs a source, a speech adapter and a clock");
    if (log_path_) {
        std::ofstream touch(*log_path_, std::ios::app);
        if (!touch) throw Error(ErrorCode::kIo, "cannot create " + log_path_->string());
    }
    std::lock_guard lock(mutex_);
    SessionEvent start;
    start.kind = EventKind::kPhase;
    start.timestamp = now_locked();
    start.phase = state_.phase;
    push_locked(std::move(start));
}

Timestamp SessionActor::now_locked() {
    last_timestamp_ = std::max(last_timestamp_, clock_());
    return last_timestamp_;
}

void SessionActor::push_locked(SessionEvent event) {
    event.seq = events_.size() + 1;
    events_.push_back(std::move(event));
    cv_.notify_all();
}

void SessionActor::append_log_locked(const LogRecord& record) {
    if (!log_path_) return;
    std::ofstream out(*log_path_, std::ios::app);
    out << record_to_json(record).dump() << '\n';
    out.flush();
    if (!out) throw Error(ErrorCode::kIo, "cannot append to " + log_path_->string());
}

SessionState SessionActor::snapshot() const {
    std::lock_guard lock(mutex_);
    return state_;
}

void SessionActor::speak_owed_locked(SubmitOutcome& outcome) {
    while (utterance_pending(state_.phase)) {
        UtteranceResult u = next_utterance(state_, utterance_seed(config_, state_), config_);
        try {
            speech_->speak(u.utterance);
        } catch (const std::exception& e) {
            SessionEvent failed;
            failed.kind = EventKind::kDeliveryFailed;
            failed.timestamp = now_locked();
            failed.phase = state_.phase;
            failed.utterance = u.utterance;
            failed.message = e.what();
            push_locked(std::move(failed));
            outcome.delivery_error = e.what();
            break;
        }
        const Timestamp ts = now_locked();
        append_log_locked({std::nullopt, u.utterance, ts});
        state_ = std::move(u.state);

        SessionEvent spoken;
        spoken.kind = EventKind::kUtterance;
        spoken.timestamp = ts;
        spoken.phase = state_.phase;
        spoken.utterance = u.utterance;
        push_locked(std::move(spoken));

        SessionEvent phase;
        phase.kind = EventKind::kPhase;
        phase.timestamp = ts;
        phase.phase = state_.phase;
        push_locked(std::move(phase));
    }
    outcome.state = state_;
}

SubmitOutcome SessionActor::submit(Gate gate, DecisionValue value) {
    std::lock_guard lock(mutex_);
    const DecisionEvent event{gate, value, now_locked()};
    TransitionResult r = submit_decision(state_, event, *source_, config_);
    append_log_locked({event, std::nullopt, event.timestamp});

    const Phase before = state_.phase;
    state_ = std::move(r.state);
    SubmitOutcome outcome{state_, r.warnings, std::nullopt};

    SessionEvent decided;
    decided.kind = EventKind::kDecision;
    decided.timestamp = event.timestamp;
    decided.phase = state_.phase;
    decided.decision = event;
    push_locked(std::move(decided));
    for (const std::string& w : r.warnings) {
        SessionEvent warn;
        warn.kind = EventKind::kWarning;
        warn.timestamp = event.timestamp;
        warn.phase = state_.phase;
        warn.message = w;
        push_locked(std::move(warn));
    }
    if (state_.phase != before) {
        SessionEvent phase;
        phase.kind = EventKind::kPhase;
        phase.timestamp = event.timestamp;
        phase.phase = state_.phase;
        push_locked(std::move(phase));
    }
    speak_owed_locked(outcome);
    return outcome;
}

SubmitOutcome SessionActor::retry_speech() {
    std::lock_guard lock(mutex_);
    if (!utterance_pending(state_.phase)) {
        throw Error(ErrorCode::kNoUtterancePending, "phase " + std::string(to_string(state_.phase)));
    }
    SubmitOutcome outcome{state_, {}, std::nullopt};
    speak_owed_locked(outcome);
    return outcome;
}

std::vector<SessionEvent> SessionActor::events(std::uint64_t from) const {
    std::lock_guard lock(mutex_);
    const std::size_t first = from == 0 ? 0 : static_cast<std::size_t>(from - 1);
    if (first >= events_.size()) return {};
    return {events_.begin() + static_cast<std::ptrdiff_t>(first), events_.end()};
}

std::vector<SessionEvent> SessionActor::wait_events(std::uint64_t from, std::chrono::milliseconds timeout) const {
    std::unique_lock lock(mutex_);
    const std::size_t first = from == 0 ? 0 : static_cast<std::size_t>(from - 1);
    cv_.wait_for(lock, timeout, [&] { return closed_ || events_.size() > first; });
    if (first >= events_.size()) return {};
    return {events_.begin() + static_cast<std::ptrdiff_t>(first), events_.end()};
}

std::uint64_t SessionActor::next_seq() const {
    std::lock_guard lock(mutex_);
    return events_.size() + 1;
}

void SessionActor::close() {
    std::lock_guard lock(mutex_);
    closed_ = true;
    cv_.notify_all();
}

bool SessionActor::closed() const {
    std::lock_guard lock(mutex_);
    return closed_;
}

std::unique_ptr<SessionActor> SessionActor::restore(std::string session_id, std::shared_ptr<CandidateSource> source,
                                                    std::shared_ptr<SpeechAdapter> speech, SessionConfig config,
                                                    Clock clock, const fs::path& log_path) {
    const std::vector<LogRecord> records = read_session_log(log_path);
    // Replay with a clock that hands back the recorded timestamps.
    auto recorded = std::make_shared<Timestamp>(0);
    auto actor = std::make_unique<SessionActor>(std::move(session_id), std::move(source),
                                                std::make_shared<SilentSpeechAdapter>(), std::move(config),
                                                [recorded] { return *recorded; });
    for (const LogRecord& r : records) {
        if (!r.decision) continue;
        *recorded = r.timestamp;
        actor->submit(r.decision->gate, r.decision->value);
    }
    std::lock_guard lock(actor->mutex_);
    actor->speech_ = std::move(speech);
    actor->clock_ = std::move(clock);
    actor->log_path_ = log_path;
    return actor;
}

SessionManager::SessionManager(SourceFactory sources, std::shared_ptr<SpeechAdapter> speech,
                               SessionManagerConfig config)
    : sources_(std::move(sources)), speech_(std::move(speech)), config_(std::move(config)) {
    if (!sources_ || !speech_) throw Error(ErrorCode::kInvalidArgument, "session manager needs sources and speech");
    id_state_ = config_.id_seed != 0 ? config_.id_seed : (static_cast<std::uint64_t>(std::random_device{}()) << 32) ^ std::random_device{}();
    if (config_.data_dir) {
        std::error_code ec;
        fs::create_directories(*config_.data_dir / "sessions", ec);
        if (ec) throw Error(ErrorCode::kIo, "cannot create " + (*config_.data_dir / "sessions").string() + ": " + ec.message());
    }
}

std::optional<fs::path> SessionManager::log_path(const std::string& session_id) const {
    if (!config_.data_dir) return std::nullopt;
    return *config_.data_dir / "sessions" / (session_id + ".jsonl");
}

std::shared_ptr<SessionActor> SessionManager::create() {
    std::lock_guard lock(mutex_);
    std::string id;
    for (;;) {
        id_state_ = splitmix64(id_state_);
        char buf[32];
        std::snprintf(buf, sizeof buf, "s-%012llx", static_cast<unsigned long long>(id_state_ & 0xFFFFFFFFFFFFULL));
        id = buf;
        const auto path = log_path(id);
        if (!sessions_.contains(id) && !(path && fs::exists(*path))) break;
    }
    auto actor = std::make_shared<SessionActor>(id, sources_(id), speech_, config_.session, config_.clock, log_path(id));
    sessions_.emplace(id, actor);
    return actor;
}

std::shared_ptr<SessionActor> SessionManager::find(const std::string& session_id) const {
    std::lock_guard lock(mutex_);
    auto it = sessions_.find(session_id);
    if (it == sessions_.end()) throw Error(ErrorCode::kNotFound, "no session '" + session_id + "'");
    return it->second;
}

std::vector<std::string> SessionManager::ids() const {
    std::lock_guard lock(mutex_);
    std::vector<std::string> out;
    for (const auto& [id, _] : sessions_) out.push_back(id);
    return out;
}

std::size_t SessionManager::restore_all() {
    if (!config_.data_dir) return 0;
    std::lock_guard lock(mutex_);
    std::size_t restored = 0;
    for (const auto& entry : fs::directory_iterator(*config_.data_dir / "sessions")) {
        if (!entry.is_regular_file() || entry.path().extension() != ".jsonl") continue;
        const std::string id = entry.path().stem().string();
        if (sessions_.contains(id)) continue;
        sessions_.emplace(id, SessionActor::restore(id, sources_(id), speech_, config_.session, config_.clock,
                                                    entry.path()));
        ++restored;
    }
    return restored;
}

void SessionManager::close_all() {
    std::lock_guard lock(mutex_);
    for (auto& [_, actor] : sessions_) actor->close();
}

}  // namespace persp
