#include "persp/api.hpp"

#include "persp/errors.hpp"

namespace persp {
using nlohmann::json;

namespace {

Role parse_role(std::string_view name) {
    for (Role r : {Role::kInitiator, Role::kPrompter, Role::kReinforcer}) {
        if (to_string(r) == name) return r;
    }
    throw Error(ErrorCode::kInvalidArgument, "unknown role '" + std::string(name) + "'");
}

template <typename T>
T field(const json& j, const char* key) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw Error(ErrorCode::kInvalidArgument, std::string("missing or mistyped field '") + key + "'");
    }
}

}  // namespace

ApiSession to_api(const SessionState& state) {
    ApiSession a;
    a.session_id = state.session_id;
    a.phase = std::string(to_string(state.phase));
    a.candidate = state.candidate;
    if (auto g = pending_gate(state.phase)) a.pending_gate = std::string(to_string(*g));
    return a;
}

json candidate_json(const CandidateTriple& c) { return json::parse(candidate_to_json(c)); }

CandidateTriple candidate_of(const json& j) {
    try {
        return candidate_from_json(j.dump());
    } catch (const Error& e) {
        throw Error(ErrorCode::kInvalidArgument, e.what());
    }
}

json api_json(const ApiSession& s) {
    json j{{"session_id", s.session_id}, {"phase", s.phase}};
    j["candidate"] = s.candidate ? candidate_json(*s.candidate) : json(nullptr);
    j["pending_gate"] = s.pending_gate ? json(*s.pending_gate) : json(nullptr);
    return j;
}

ApiSession api_session_of(const json& j) {
    if (!j.is_object()) throw Error(ErrorCode::kInvalidArgument, "session is not a JSON object");
    ApiSession s;
    s.session_id = field<std::string>(j, "session_id");
    s.phase = field<std::string>(j, "phase");
    const Phase phase = parse_phase(s.phase);
    if (auto it = j.find("candidate"); it != j.end() && !it->is_null()) s.candidate = candidate_of(*it);
    if (auto it = j.find("pending_gate"); it != j.end() && !it->is_null()) {
        s.pending_gate = it->get<std::string>();
        parse_gate(*s.pending_gate);
    }
    const auto expected = pending_gate(phase);
    if (expected.has_value() != s.pending_gate.has_value() ||
        (expected && *s.pending_gate != to_string(*expected))) {
        throw Error(ErrorCode::kInvalidArgument, "pending_gate does not match phase " + s.phase);
    }
    return s;
}

json decision_json(const DecisionEvent& e) {
    return {{"gate", to_string(e.gate)}, {"value", to_string(e.value)}, {"timestamp", e.timestamp}};
}

DecisionEvent decision_of(const json& j) {
    DecisionEvent e;
    e.gate = parse_gate(field<std::string>(j, "gate"));
    e.value = parse_decision_value(field<std::string>(j, "value"));
    if (j.contains("timestamp")) e.timestamp = field<Timestamp>(j, "timestamp");
    return e;
}

json state_json(const SessionState& state) {
    json j = api_json(to_api(state));
    json history = json::array();
    for (const DecisionEvent& e : state.history) history.push_back(decision_json(e));
    j["history"] = std::move(history);
    j["consecutive_rejections"] = state.consecutive_rejections;
    j["candidates_fetched"] = state.candidates_fetched;
    j["utterances_emitted"] = state.utterances_emitted;
    return j;
}

SessionState state_of(const json& j) {
    const ApiSession a = api_session_of(j);
    SessionState s;
    s.session_id = a.session_id;
    s.phase = parse_phase(a.phase);
    s.candidate = a.candidate;
    for (const json& e : field<json>(j, "history")) s.history.push_back(decision_of(e));
    s.consecutive_rejections = field<std::size_t>(j, "consecutive_rejections");
    s.candidates_fetched = field<std::uint64_t>(j, "candidates_fetched");
    s.utterances_emitted = field<std::uint64_t>(j, "utterances_emitted");
    return s;
}

json event_json(const SessionEvent& e) {
    json j{{"seq", e.seq}, {"type", to_string(e.kind)}, {"timestamp", e.timestamp}, {"phase", to_string(e.phase)}};
    if (e.decision) {
        j["gate"] = to_string(e.decision->gate);
        j["value"] = to_string(e.decision->value);
    }
    if (e.utterance) {
        j["role"] = to_string(e.utterance->role);
        j["text"] = e.utterance->text;
    }
    if (!e.message.empty()) j["message"] = e.message;
    return j;
}

SessionEvent event_of(const json& j) {
    SessionEvent e;
    e.seq = field<std::uint64_t>(j, "seq");
    e.kind = parse_event_kind(field<std::string>(j, "type"));
    e.timestamp = field<Timestamp>(j, "timestamp");
    e.phase = parse_phase(field<std::string>(j, "phase"));
    if (j.contains("gate")) {
        e.decision = DecisionEvent{parse_gate(field<std::string>(j, "gate")),
                                   parse_decision_value(field<std::string>(j, "value")), e.timestamp};
    }
    if (j.contains("role")) {
        e.utterance = Utterance{parse_role(field<std::string>(j, "role")), field<std::string>(j, "text")};
    }
    if (j.contains("message")) e.message = field<std::string>(j, "message");
    return e;
}

json error_json(std::string_view code, std::string_view message) {
    return {{"error", code}, {"message", message}};
}

int http_status(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::kInvalidArgument:
        case ErrorCode::kMalformedLine:
        case ErrorCode::kMissingField:
            return 400;
        case ErrorCode::kNotFound:
            return 404;
        case ErrorCode::kGateMismatch:
        case ErrorCode::kSessionEnded:
        case ErrorCode::kNoUtterancePending:
            return 409;
        case ErrorCode::kDeliveryFailed:
            return 502;
        case ErrorCode::kEmptyGeneration:
        case ErrorCode::kBackendUnavailable:
            return 503;
        default:
            return 500;
    }
}

}  // namespace persp
