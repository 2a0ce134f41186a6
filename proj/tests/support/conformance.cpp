#include "conformance.hpp"

#include <filesystem>
#include <optional>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "persp/api.hpp"
#include "persp/errors.hpp"
#include "persp/random.hpp"

namespace persp::synth {
using nlohmann::json;

std::vector<SessionEvent> parse_sse(std::string_view body) {
    std::vector<SessionEvent> out;
    std::size_t pos = 0;
    while (pos < body.size()) {
        std::size_t end = body.find("\n\n", pos);
        if (end == std::string_view::npos) end = body.size();
        const std::string_view block = body.substr(pos, end - pos);
        std::size_t line_start = 0;
        while (line_start < block.size()) {
            std::size_t line_end = block.find('\n', line_start);
            if (line_end == std::string_view::npos) line_end = block.size();
            const std::string_view line = block.substr(line_start, line_end - line_start);
            if (line.starts_with("data: ")) out.push_back(event_of(json::parse(line.substr(6))));
            line_start = line_end + 1;
        }
        pos = end + 2;
    }
    return out;
}

namespace {

// A decision or an utterance, reduced to what both sides must agree on.
struct Record {
    std::optional<std::pair<Gate, DecisionValue>> decision;
    std::optional<Utterance> utterance;
    bool operator==(const Record&) const = default;
};

std::string describe(const std::vector<Record>& r) {
    std::string s;
    for (const Record& x : r) {
        if (x.decision) s += std::string(to_string(x.decision->first)) + "=" + std::string(to_string(x.decision->second)) + " ";
        if (x.utterance) s += "[" + std::string(to_string(x.utterance->role)) + "] ";
    }
    return s;
}

}  // namespace

ConformanceReport run_conformance(const std::string& host, int port, const std::vector<CandidateTriple>& fixture,
                                  const SessionConfig& config, std::size_t sequences, std::uint64_t seed,
                                  const std::string& data_dir) {
    ConformanceReport report;
    httplib::Client cli(host, port);
    cli.set_keep_alive(true);
    cli.set_tcp_nodelay(true);
    FixtureCandidateSource source(fixture);
    const auto mismatch = [&](const std::string& what) {
        if (report.mismatches++ == 0) report.first_mismatch = what;
    };

    for (std::size_t k = 0; k < sequences; ++k) {
        Rng rng(mix_seed(seed, k));
        auto created = cli.Post("/sessions");
        ++report.requests;
        if (!created || created->status != 201) {
            mismatch("create failed");
            continue;
        }
        const std::string id = json::parse(created->body).at("session_id").get<std::string>();
        SessionState direct = start_session(id);
        std::vector<Record> expected;
        const std::string where = "sequence " + std::to_string(k) + " (" + id + ")";

        const std::size_t steps = 1 + rng.index(40);
        for (std::size_t step = 0; step < steps; ++step) {
            Gate gate;
            DecisionValue value;
            const auto pending = pending_gate(direct.phase);
            if (pending && rng.uniform() < 0.85) {
                gate = *pending;
                std::vector<DecisionValue> legal;
                for (DecisionValue v : kAllValues) {
                    if (value_allowed(gate, v)) legal.push_back(v);
                }
                value = legal[rng.index(legal.size())];
            } else {
                gate = kAllGates[rng.index(kAllGates.size())];
                value = kAllValues[rng.index(kAllValues.size())];
            }
            const json body{{"gate", to_string(gate)}, {"value", to_string(value)}};
            auto res = cli.Post("/sessions/" + id + "/decisions", body.dump(), "application/json");
            ++report.requests;
            if (!res) {
                mismatch(where + ": request failed");
                break;
            }
            const json answer = json::parse(res->body);

            const Timestamp ts = (res->status == 200 && !answer.at("history").empty())
                                     ? answer.at("history").back().at("timestamp").get<Timestamp>()
                                     : (direct.history.empty() ? 0 : direct.history.back().timestamp);
            std::optional<ErrorCode> direct_error;
            std::optional<TransitionResult> next;
            try {
                next = submit_decision(direct, {gate, value, ts}, source, config);
            } catch (const Error& e) {
                direct_error = e.code();
            }
            const std::string step_where = where + " step " + std::to_string(step) + " " +
                                           std::string(to_string(gate)) + "=" + std::string(to_string(value));
            if (direct_error) {
                const int want = http_status(*direct_error);
                if (res->status != want || answer.value("error", "") != error_code_name(*direct_error)) {
                    mismatch(step_where + ": expected " + std::string(error_code_name(*direct_error)) + ", got " +
                             std::to_string(res->status) + " " + res->body);
                }
                continue;
            }
            if (res->status != 200) {
                mismatch(step_where + ": expected 200, got " + std::to_string(res->status) + " " + res->body);
                continue;
            }
            direct = next->state;
            expected.push_back({std::make_pair(gate, value), std::nullopt});
            while (utterance_pending(direct.phase)) {
                UtteranceResult u = next_utterance(direct, utterance_seed(config, direct), config);
                expected.push_back({std::nullopt, u.utterance});
                direct = std::move(u.state);
            }
            if (state_of(answer) != direct) mismatch(step_where + ": state differs: " + answer.dump());
            if (answer.at("warnings").size() != next->warnings.size()) mismatch(step_where + ": warnings differ");
        }

        auto final_state = cli.Get("/sessions/" + id);
        auto stream = cli.Get("/sessions/" + id + "/events?follow=0");
        report.requests += 2;
        if (!final_state || final_state->status != 200 || state_of(json::parse(final_state->body)) != direct) {
            mismatch(where + ": final state differs");
        }
        if (!stream || stream->status != 200) {
            mismatch(where + ": event stream failed");
        } else {
            std::vector<Record> got;
            const auto events = parse_sse(stream->body);
            for (std::size_t i = 0; i < events.size(); ++i) {
                if (events[i].seq != i + 1) mismatch(where + ": event seq gap at " + std::to_string(i));
                if (events[i].kind == EventKind::kDecision) {
                    got.push_back({std::make_pair(events[i].decision->gate, events[i].decision->value), std::nullopt});
                } else if (events[i].kind == EventKind::kUtterance) {
                    got.push_back({std::nullopt, events[i].utterance});
                }
            }
            if (got != expected) {
                mismatch(where + ": event log differs\n  api:    " + describe(got) + "\n  direct: " + describe(expected));
            }
        }
        if (!data_dir.empty()) {
            std::vector<Record> logged;
            for (const LogRecord& r : read_session_log(std::filesystem::path(data_dir) / "sessions" / (id + ".jsonl"))) {
                if (r.decision) logged.push_back({std::make_pair(r.decision->gate, r.decision->value), std::nullopt});
                if (r.utterance) logged.push_back({std::nullopt, r.utterance});
            }
            if (logged != expected) mismatch(where + ": JSONL log differs");
        }
        ++report.sequences;
    }
    return report;
}

}  // namespace persp::synth
