#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "persp/errors.hpp"
#include "persp/session.hpp"
#include "persp/session_actor.hpp"

namespace persp {

/// What the operator console sees of a session.
struct ApiSession {
    std::string session_id;
    std::string phase;
    std::optional<CandidateTriple> candidate;
    std::optional<std::string> pending_gate;  // set iff the phase waits on a gate
    friend bool operator==(const ApiSession&, const ApiSession&) = default;
};

ApiSession to_api(const SessionState& state);

nlohmann::json candidate_json(const CandidateTriple& candidate);
CandidateTriple candidate_of(const nlohmann::json& j);

nlohmann::json api_json(const ApiSession& session);
/// Throws InvalidArgument on unknown phases/gates or when pending_gate does
/// not agree with the phase.
ApiSession api_session_of(const nlohmann::json& j);

nlohmann::json decision_json(const DecisionEvent& event);
DecisionEvent decision_of(const nlohmann::json& j);

/// ApiSession fields plus history and the session counters.
nlohmann::json state_json(const SessionState& state);
SessionState state_of(const nlohmann::json& j);

nlohmann::json event_json(const SessionEvent& event);
SessionEvent event_of(const nlohmann::json& j);

/// {"error": <code name>, "message": <text>}.
nlohmann::json error_json(std::string_view code, std::string_view message);
/// HTTP status for an error code.
int http_status(ErrorCode code) noexcept;

}  // namespace persp
