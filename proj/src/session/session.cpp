#include "persp/session.hpp"

#include "persp/errors.hpp"
#include "persp/random.hpp"

namespace persp {
namespace {

template <typename Enum, std::size_t N>
Enum parse_named(std::string_view name, const std::array<Enum, N>& all, const char* what) {
    for (Enum e : all) {
        if (to_string(e) == name) return e;
    }
    throw Error(ErrorCode::kInvalidArgument, std::string("unknown ") + what + " '" + std::string(name) + "'");
}

std::string gate_mismatch_message(const SessionState& state, const DecisionEvent& event) {
    std::string msg = "phase " + std::string(to_string(state.phase));
    if (auto gate = pending_gate(state.phase)) {
        msg += " expects " + std::string(to_string(*gate));
    } else {
        msg += " expects no decision";
    }
    msg += ", got " + std::string(to_string(event.gate)) + "=" + std::string(to_string(event.value));
    return msg;
}

}  // namespace

std::string_view to_string(Phase phase) noexcept {
    switch (phase) {
        case Phase::kAwaitContinue: return "AwaitContinue";
        case Phase::kAwaitApproval: return "AwaitApproval";
        case Phase::kInitiate: return "Initiate";
        case Phase::kAwaitChildInitiator: return "AwaitChildInitiator";
        case Phase::kPrompt: return "Prompt";
        case Phase::kAwaitChildPrompter: return "AwaitChildPrompter";
        case Phase::kReinforce: return "Reinforce";
        case Phase::kEnded: return "Ended";
    }
    return "?";
}

std::string_view to_string(Gate gate) noexcept {
    switch (gate) {
        case Gate::kUI1: return "UI1";
        case Gate::kUI2: return "UI2";
        case Gate::kUI3: return "UI3";
        case Gate::kUI4: return "UI4";
    }
    return "?";
}

std::string_view to_string(DecisionValue value) noexcept {
    switch (value) {
        case DecisionValue::kYes: return "yes";
        case DecisionValue::kNo: return "no";
        case DecisionValue::kCorrect: return "correct";
        case DecisionValue::kIncorrect: return "incorrect";
        case DecisionValue::kNoResponse: return "no_response";
    }
    return "?";
}

std::string_view to_string(Role role) noexcept {
    switch (role) {
        case Role::kInitiator: return "initiator";
        case Role::kPrompter: return "prompter";
        case Role::kReinforcer: return "reinforcer";
    }
    return "?";
}

Phase parse_phase(std::string_view name) { return parse_named(name, kAllPhases, "phase"); }
Gate parse_gate(std::string_view name) { return parse_named(name, kAllGates, "gate"); }
DecisionValue parse_decision_value(std::string_view name) {
    return parse_named(name, kAllValues, "decision value");
}

std::optional<Gate> pending_gate(Phase phase) noexcept {
    switch (phase) {
        case Phase::kAwaitContinue: return Gate::kUI1;
        case Phase::kAwaitApproval: return Gate::kUI2;
        case Phase::kAwaitChildInitiator: return Gate::kUI3;
        case Phase::kAwaitChildPrompter: return Gate::kUI4;
        default: return std::nullopt;
    }
}

bool value_allowed(Gate gate, DecisionValue value) noexcept {
    const bool yes_no = value == DecisionValue::kYes || value == DecisionValue::kNo;
    return (gate == Gate::kUI1 || gate == Gate::kUI2) ? yes_no : !yes_no;
}

bool utterance_pending(Phase phase) noexcept {
    return phase == Phase::kInitiate || phase == Phase::kPrompt || phase == Phase::kReinforce;
}

FixtureCandidateSource::FixtureCandidateSource(std::vector<CandidateTriple> candidates)
    : candidates_(std::move(candidates)) {
    if (candidates_.empty()) throw Error(ErrorCode::kPrecondition, "fixture has no candidates");
    for (const CandidateTriple& c : candidates_) validate_candidate(c);
}

CandidateTriple FixtureCandidateSource::fetch(std::uint64_t index) {
    return candidates_[static_cast<std::size_t>(index % candidates_.size())];
}

ModelCandidateSource::ModelCandidateSource(ModelHandle context_model, ModelHandle qa_model,
                                           Pipeline pipeline, std::uint64_t seed,
                                           DecodeConfig context_decode, DecodeConfig field_decode,
                                           int max_attempts)
    : context_model_(std::move(context_model)),
      qa_model_(std::move(qa_model)),
      pipeline_(pipeline),
      seed_(seed),
      context_decode_(context_decode),
      field_decode_(field_decode),
      max_attempts_(max_attempts) {
    if (context_model_.kind != ModelKind::kContext || qa_model_.kind != ModelKind::kQa) {
        throw Error(ErrorCode::kPrecondition, "expected a context model and a qa model");
    }
    if (max_attempts_ < 1) throw Error(ErrorCode::kInvalidArgument, "max_attempts must be >= 1");
}

CandidateTriple ModelCandidateSource::fetch(std::uint64_t index) {
    const std::uint64_t base = mix_seed(seed_, index);
    for (int attempt = 0; attempt < max_attempts_; ++attempt) {
        const std::uint64_t s = mix_seed(base, static_cast<std::uint64_t>(attempt));
        try {
            DecodeConfig cd = context_decode_;
            cd.seed = s;
            const std::string context = generate_context(context_model_, cd);
            DecodeConfig fd = field_decode_;
            fd.seed = mix_seed(s, 1);
            CandidateTriple c = generate_qa(qa_model_, context, fd, pipeline_);
            c.generation_seed = s;
            return c;
        } catch (const Error& e) {
            switch (e.code()) {
                case ErrorCode::kEmptyGeneration:
                case ErrorCode::kFieldExtractionFailed:
                case ErrorCode::kParseFailed:
                case ErrorCode::kNoNewContent:
                case ErrorCode::kMarkerCollision:
                    continue;
                default:
                    throw;
            }
        }
    }
    throw Error(ErrorCode::kEmptyGeneration,
                "no valid candidate after " + std::to_string(max_attempts_) + " attempts");
}

SessionState start_session(std::string session_id) {
    SessionState s;
    s.session_id = std::move(session_id);
    return s;
}

TransitionResult submit_decision(const SessionState& state, const DecisionEvent& event,
                                 CandidateSource& source, const SessionConfig& config) {
    if (state.phase == Phase::kEnded) throw Error(ErrorCode::kSessionEnded, "session " + state.session_id);
    const auto gate = pending_gate(state.phase);
    if (!gate || *gate != event.gate || !value_allowed(event.gate, event.value)) {
        throw Error(ErrorCode::kGateMismatch, gate_mismatch_message(state, event));
    }
    if (!state.history.empty() && event.timestamp < state.history.back().timestamp) {
        throw Error(ErrorCode::kPrecondition, "decision timestamps must not decrease");
    }

    TransitionResult out{state, {}};
    SessionState& next = out.state;
    const bool positive = event.value == DecisionValue::kYes || event.value == DecisionValue::kCorrect;
    switch (state.phase) {
        case Phase::kAwaitContinue:
            if (positive) {
                next.candidate = source.fetch(next.candidates_fetched);
                ++next.candidates_fetched;
                next.consecutive_rejections = 0;
                next.phase = Phase::kAwaitApproval;
            } else {
                next.candidate.reset();
                next.phase = Phase::kEnded;
            }
            break;
        case Phase::kAwaitApproval:
            if (positive) {
                next.consecutive_rejections = 0;
                next.phase = Phase::kInitiate;
            } else if (next.consecutive_rejections + 1 >= config.rejection_cap) {
                out.warnings.push_back(std::to_string(config.rejection_cap) +
                                       " candidates rejected in a row; returning to UI1");
                next.consecutive_rejections = 0;
                next.candidate.reset();
                next.phase = Phase::kAwaitContinue;
            } else {
                next.candidate = source.fetch(next.candidates_fetched);
                ++next.candidates_fetched;
                ++next.consecutive_rejections;
            }
            break;
        case Phase::kAwaitChildInitiator:
            next.phase = positive ? Phase::kReinforce : Phase::kPrompt;
            break;
        case Phase::kAwaitChildPrompter:
            if (positive) {
                next.phase = Phase::kReinforce;
            } else {
                next.candidate.reset();
                next.phase = Phase::kAwaitContinue;
            }
            break;
        default:
            throw Error(ErrorCode::kInternal, "unreachable phase");
    }
    next.history.push_back(event);
    return out;
}

std::string initiator_text(const CandidateTriple& c) { return c.context + " " + c.question; }

std::string prompter_text(const CandidateTriple& c) {
    return c.context + " " + c.question + " Is it: A) " + c.option_a + ", B) " + c.option_b +
           ", or C) " + c.option_c + "?";
}

std::uint64_t utterance_seed(const SessionConfig& config, const SessionState& state) noexcept {
    return mix_seed(config.seed, state.utterances_emitted);
}

UtteranceResult next_utterance(const SessionState& state, std::uint64_t seed, const SessionConfig& config) {
    if (!utterance_pending(state.phase)) {
        throw Error(ErrorCode::kNoUtterancePending, "phase " + std::string(to_string(state.phase)));
    }
    UtteranceResult out{{}, state};
    SessionState& next = out.state;
    switch (state.phase) {
        case Phase::kInitiate:
            out.utterance = {Role::kInitiator, initiator_text(*state.candidate)};
            next.phase = Phase::kAwaitChildInitiator;
            break;
        case Phase::kPrompt:
            out.utterance = {Role::kPrompter, prompter_text(*state.candidate)};
            next.phase = Phase::kAwaitChildPrompter;
            break;
        case Phase::kReinforce: {
            if (config.praise.empty()) throw Error(ErrorCode::kInvalidArgument, "praise list is empty");
            Rng rng(seed);
            out.utterance = {Role::kReinforcer, config.praise[rng.index(config.praise.size())]};
            next.candidate.reset();
            next.phase = Phase::kAwaitContinue;
            break;
        }
        default:
            break;
    }
    ++next.utterances_emitted;
    return out;
}

SessionState replay(std::string session_id, std::span<const DecisionEvent> history,
                    CandidateSource& source, const SessionConfig& config,
                    std::vector<Utterance>* utterances) {
    SessionState state = start_session(std::move(session_id));
    for (const DecisionEvent& event : history) {
        state = submit_decision(state, event, source, config).state;
        while (utterance_pending(state.phase)) {
            UtteranceResult u = next_utterance(state, utterance_seed(config, state), config);
            if (utterances != nullptr) utterances->push_back(u.utterance);
            state = std::move(u.state);
        }
    }
    return state;
}

}  // namespace persp
