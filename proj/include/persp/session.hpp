#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "persp/generation.hpp"

namespace persp {

enum class Phase {
    kAwaitContinue,
    kAwaitApproval,
    kInitiate,
    kAwaitChildInitiator,
    kPrompt,
    kAwaitChildPrompter,
    kReinforce,
    kEnded,
};
inline constexpr std::array<Phase, 8> kAllPhases = {
    Phase::kAwaitContinue, Phase::kAwaitApproval, Phase::kInitiate, Phase::kAwaitChildInitiator,
    Phase::kPrompt,        Phase::kAwaitChildPrompter, Phase::kReinforce, Phase::kEnded};

enum class Gate { kUI1, kUI2, kUI3, kUI4 };
inline constexpr std::array<Gate, 4> kAllGates = {Gate::kUI1, Gate::kUI2, Gate::kUI3, Gate::kUI4};

enum class DecisionValue { kYes, kNo, kCorrect, kIncorrect, kNoResponse };
inline constexpr std::array<DecisionValue, 5> kAllValues = {
    DecisionValue::kYes, DecisionValue::kNo, DecisionValue::kCorrect, DecisionValue::kIncorrect,
    DecisionValue::kNoResponse};

enum class Role { kInitiator, kPrompter, kReinforcer };

std::string_view to_string(Phase phase) noexcept;
std::string_view to_string(Gate gate) noexcept;
std::string_view to_string(DecisionValue value) noexcept;
std::string_view to_string(Role role) noexcept;
Phase parse_phase(std::string_view name);
Gate parse_gate(std::string_view name);
DecisionValue parse_decision_value(std::string_view name);

/// The gate the expert must answer in `phase`; empty for phases that are
/// waiting on an utterance or that have ended.
std::optional<Gate> pending_gate(Phase phase) noexcept;
/// UI1/UI2 take yes/no; UI3/UI4 take correct/incorrect/no_response.
bool value_allowed(Gate gate, DecisionValue value) noexcept;
/// Initiate, Prompt and Reinforce each owe one utterance.
bool utterance_pending(Phase phase) noexcept;

/// Milliseconds since the Unix epoch.
using Timestamp = std::int64_t;

struct DecisionEvent {
    Gate gate = Gate::kUI1;
    DecisionValue value = DecisionValue::kYes;
    Timestamp timestamp = 0;
    friend bool operator==(const DecisionEvent&, const DecisionEvent&) = default;
};

struct Utterance {
    Role role = Role::kInitiator;
    std::string text;
    friend bool operator==(const Utterance&, const Utterance&) = default;
};

struct SessionState {
    std::string session_id;
    Phase phase = Phase::kAwaitContinue;
    std::optional<CandidateTriple> candidate;
    std::vector<DecisionEvent> history;
    std::size_t consecutive_rejections = 0;
    std::uint64_t candidates_fetched = 0;
    std::uint64_t utterances_emitted = 0;
    friend bool operator==(const SessionState&, const SessionState&) = default;
};

/// Produces the n-th candidate of a session. Implementations must be pure in
/// `index` so that replaying a history reproduces the same candidates.
class CandidateSource {
public:
    virtual ~CandidateSource() = default;
    virtual CandidateTriple fetch(std::uint64_t index) = 0;
};

/// Cycles through a fixed list.
class FixtureCandidateSource final : public CandidateSource {
public:
    explicit FixtureCandidateSource(std::vector<CandidateTriple> candidates);
    CandidateTriple fetch(std::uint64_t index) override;

private:
    std::vector<CandidateTriple> candidates_;
};

/// Generates a context and then Q/A/B/C with seeds derived from (seed,
/// index). Failed generations are retried with the next derived seed.
class ModelCandidateSource final : public CandidateSource {
public:
    ModelCandidateSource(ModelHandle context_model, ModelHandle qa_model, Pipeline pipeline,
                         std::uint64_t seed, DecodeConfig context_decode = default_context_decode(),
                         DecodeConfig field_decode = default_field_decode(), int max_attempts = 16);
    CandidateTriple fetch(std::uint64_t index) override;

private:
    ModelHandle context_model_;
    ModelHandle qa_model_;
    Pipeline pipeline_;
    std::uint64_t seed_;
    DecodeConfig context_decode_;
    DecodeConfig field_decode_;
    int max_attempts_;
};

struct SessionConfig {
    std::size_t rejection_cap = 5;
    std::vector<std::string> praise = {"Great job!", "That's right, well done!", "Awesome work!"};
    std::uint64_t seed = 0;
};

struct TransitionResult {
    SessionState state;
    std::vector<std::string> warnings;
};

SessionState start_session(std::string session_id);

/// Applies one expert decision. Every (phase, gate, value) combination that
/// is not a defined transition raises GateMismatch; any decision on an ended
/// session raises SessionEnded. The event is appended to history.
TransitionResult submit_decision(const SessionState& state, const DecisionEvent& event,
                                 CandidateSource& source, const SessionConfig& config);

struct UtteranceResult {
    Utterance utterance;
    SessionState state;
};

/// The utterance owed by the current phase and the state after it. Pure:
/// the praise phrase is picked by `seed`.
UtteranceResult next_utterance(const SessionState& state, std::uint64_t seed,
                               const SessionConfig& config);

/// The seed the session actor passes to next_utterance.
std::uint64_t utterance_seed(const SessionConfig& config, const SessionState& state) noexcept;

std::string initiator_text(const CandidateTriple& candidate);
std::string prompter_text(const CandidateTriple& candidate);

/// Rebuilds the final state from a decision history: each decision is
/// applied and any owed utterance is emitted before the next one.
SessionState replay(std::string session_id, std::span<const DecisionEvent> history,
                    CandidateSource& source, const SessionConfig& config,
                    std::vector<Utterance>* utterances = nullptr);

}  // namespace persp
