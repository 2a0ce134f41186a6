#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "persp/session.hpp"
#include "persp/session_actor.hpp"

namespace persp::synth {

/// Events carried by a text/event-stream body.
std::vector<SessionEvent> parse_sse(std::string_view body);

struct ConformanceReport {
    std::size_t sequences = 0;
    std::size_t requests = 0;
    std::size_t mismatches = 0;
    std::string first_mismatch;
};

/// Drives `sequences` random decision sequences (legal and illegal gates
/// mixed) against a gateway in fixture mode and, in lockstep, against the
/// pure session functions. Compares HTTP status against the direct outcome
/// after every step, and at the end the final state, the event stream's
/// decisions and utterances, and the session's JSONL log if `data_dir` is
/// given.
ConformanceReport run_conformance(const std::string& host, int port, const std::vector<CandidateTriple>& fixture,
                                  const SessionConfig& config, std::size_t sequences, std::uint64_t seed,
                                  const std::string& data_dir = {});

}  // namespace persp::synth
