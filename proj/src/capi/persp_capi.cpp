#include "persp/persp.h"

#include <cstring>
#include <iostream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "persp/api.hpp"
#include "persp/bertscore.hpp"
#include "persp/config.hpp"
#include "persp/corpus.hpp"
#include "persp/discriminability.hpp"
#include "persp/errors.hpp"
#include "persp/gateway.hpp"
#include "persp/generation.hpp"
#include "persp/random.hpp"
#include "persp/session_actor.hpp"
#include "persp/speech.hpp"
#include "persp/surveystats.hpp"

using nlohmann::json;
using persp::Error;
using persp::ErrorCode;

struct persp_corpus {
    persp::Corpus corpus;
};
struct persp_model {
    persp::ModelHandle handle;
};
struct persp_session {
    std::unique_ptr<persp::SessionActor> actor;
};
struct persp_server {
    std::shared_ptr<persp::SessionManager> sessions;
    std::unique_ptr<persp::Gateway> gateway;
};

namespace {

thread_local std::string g_last_error;

persp_status fail(ErrorCode code, std::string message) {
    g_last_error = std::move(message);
    return static_cast<persp_status>(code);
}

// Runs `body`, translating exceptions into a status and a thread-local message.
template <typename F>
persp_status guarded(F&& body) {
    g_last_error.clear();
    try {
        body();
        return PERSP_OK;
    } catch (const Error& e) {
        return fail(e.code(), e.what());
    } catch (const json::exception& e) {
        return fail(ErrorCode::kInvalidArgument, e.what());
    } catch (const std::bad_alloc&) {
        return fail(ErrorCode::kInternal, "out of memory");
    } catch (const std::exception& e) {
        return fail(ErrorCode::kInternal, e.what());
    } catch (...) {
        return fail(ErrorCode::kInternal, "unknown exception");
    }
}

void require(const void* p, const char* what) {
    if (p == nullptr) throw Error(ErrorCode::kInvalidArgument, std::string(what) + " is NULL");
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (out == nullptr) throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

void put(char** out, const std::string& s) {
    if (out != nullptr) *out = dup_string(s);
}

persp::KeyValues key_values(const char* text) {
    if (text == nullptr) return {};
    std::istringstream in(text);
    return persp::parse_key_values(in);
}

persp::DecodeConfig decode_config(const char* text, persp::DecodeConfig base, std::uint64_t seed) {
    persp::KeyValues kv = key_values(text);
    persp::KeyValues decode;
    for (const auto& [k, v] : kv) {
        if (k.rfind("decode.", 0) != 0) throw Error(ErrorCode::kInvalidArgument, "not a decode key: " + k);
        decode.emplace(k, v);
    }
    persp::apply_decode_config(base, decode);
    base.seed = seed;
    base.validate();
    return base;
}

std::vector<std::string> strings(const char* const* items, std::size_t n, const char* what) {
    if (n > 0) require(items, what);
    std::vector<std::string> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (items[i] == nullptr) throw Error(ErrorCode::kInvalidArgument, std::string(what) + "[" + std::to_string(i) + "] is NULL");
        out.emplace_back(items[i]);
    }
    return out;
}

json test_json(const persp::TestResult& t) {
    json j{{"statistic", t.statistic}, {"df", t.df}, {"decision", persp::to_string(t.decision)}, {"alpha", t.alpha}};
    j["p_value"] = t.p_value ? json(*t.p_value) : json(nullptr);
    j["p_band"] = t.p_band ? json(persp::to_string(*t.p_band)) : json(nullptr);
    return j;
}

json train_report_json(const persp::TrainReport& r) {
    json history = json::array();
    for (const auto& e : r.history) {
        history.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"eval_loss", e.eval_loss}});
    }
    return {{"initial_train_loss", r.initial_train_loss},
            {"initial_eval_loss", r.initial_eval_loss},
            {"final_train_loss", r.final_train_loss},
            {"final_eval_loss", r.final_eval_loss},
            {"optimizer_steps", r.optimizer_steps},
            {"history", history}};
}

struct BatchSummary {
    std::size_t attempts = 0;
    std::size_t parsed = 0;
    std::map<std::string, std::size_t> failures;

    json to_json() const {
        return {{"attempts", attempts},
                {"parsed", parsed},
                {"parse_rate", attempts == 0 ? 0.0 : static_cast<double>(parsed) / static_cast<double>(attempts)},
                {"failures", failures}};
    }
};

bool recoverable(ErrorCode code) {
    switch (code) {
        case ErrorCode::kEmptyGeneration:
        case ErrorCode::kFieldExtractionFailed:
        case ErrorCode::kParseFailed:
        case ErrorCode::kNoNewContent:
        case ErrorCode::kMarkerCollision:
            return true;
        default:
            return false;
    }
}

}  // namespace

extern "C" {

const char* persp_version(void) { return "0.1.0"; }

const char* persp_status_name(persp_status status) {
    return persp::error_code_name(static_cast<ErrorCode>(status)).data();
}

const char* persp_last_error(void) { return g_last_error.c_str(); }

void persp_string_free(char* s) { std::free(s); }

persp_status persp_corpus_load(const char* path, persp_corpus** out) {
    return guarded([&] {
        require(path, "path");
        require(out, "out");
        *out = new persp_corpus{persp::load_corpus(path)};
    });
}

persp_status persp_corpus_save(const persp_corpus* corpus, const char* path) {
    return guarded([&] {
        require(corpus, "corpus");
        require(path, "path");
        persp::write_corpus(corpus->corpus, std::filesystem::path(path));
    });
}

size_t persp_corpus_size(const persp_corpus* corpus) { return corpus == nullptr ? 0 : corpus->corpus.size(); }

persp_status persp_corpus_split(const persp_corpus* corpus, double train_fraction, double eval_fraction,
                                double test_fraction, uint64_t seed, persp_corpus** train, persp_corpus** eval,
                                persp_corpus** test) {
    return guarded([&] {
        require(corpus, "corpus");
        require(train, "train");
        require(eval, "eval");
        require(test, "test");
        persp::CorpusSplit s =
            persp::split_corpus(corpus->corpus, persp::SplitSpec{train_fraction, eval_fraction, test_fraction, seed});
        auto a = std::make_unique<persp_corpus>(persp_corpus{std::move(s.train)});
        auto b = std::make_unique<persp_corpus>(persp_corpus{std::move(s.eval)});
        auto c = std::make_unique<persp_corpus>(persp_corpus{std::move(s.test)});
        *train = a.release();
        *eval = b.release();
        *test = c.release();
    });
}

void persp_corpus_free(persp_corpus* corpus) { delete corpus; }

persp_status persp_train(persp_model_kind kind, const char* pipeline, const persp_corpus* train,
                         const persp_corpus* eval, const char* config, persp_epoch_fn on_epoch, void* user,
                         persp_model** model, char** report_json) {
    return guarded([&] {
        require(train, "train");
        require(eval, "eval");
        require(model, "model");
        persp::TrainConfig cfg;
        persp::apply_train_config(cfg, key_values(config));
        persp::EpochCallback cb;
        if (on_epoch != nullptr) {
            cb = [on_epoch, user](const persp::EpochRecord& r) { on_epoch(r.epoch, r.train_loss, r.eval_loss, user); };
        }
        persp::TrainResult result;
        if (kind == PERSP_MODEL_CONTEXT) {
            result = persp::fine_tune_context_lm(train->corpus, eval->corpus, cfg, cb);
        } else if (kind == PERSP_MODEL_QA) {
            require(pipeline, "pipeline");
            result = persp::fine_tune_qa(train->corpus, eval->corpus, cfg, persp::parse_pipeline(pipeline), cb);
        } else {
            throw Error(ErrorCode::kInvalidArgument, "unknown model kind");
        }
        const std::string report = train_report_json(result.report).dump();
        auto m = std::make_unique<persp_model>(persp_model{std::move(result.handle)});
        put(report_json, report);
        *model = m.release();
    });
}

persp_status persp_model_save(const persp_model* model, const char* dir) {
    return guarded([&] {
        require(model, "model");
        require(dir, "dir");
        persp::save_model(model->handle, dir);
    });
}

persp_status persp_model_load(const char* dir, persp_model** out) {
    return guarded([&] {
        require(dir, "dir");
        require(out, "out");
        *out = new persp_model{persp::load_model(dir)};
    });
}

persp_status persp_model_info(const persp_model* model, char** info_json) {
    return guarded([&] {
        require(model, "model");
        require(info_json, "info_json");
        const auto& h = model->handle;
        json j{{"kind", persp::to_string(h.kind)},
               {"vocabulary_size", h.vocabulary.size()},
               {"backend", h.train_config.backend},
               {"epochs", h.train_config.epochs},
               {"seed", h.train_config.seed}};
        j["pipeline"] = h.pipeline ? json(persp::to_string(*h.pipeline)) : json(nullptr);
        put(info_json, j.dump());
    });
}

void persp_model_free(persp_model* model) { delete model; }

persp_status persp_generate_context(const persp_model* context_model, const char* decode, uint64_t seed,
                                    char** text) {
    return guarded([&] {
        require(context_model, "context_model");
        require(text, "text");
        put(text, persp::generate_context(context_model->handle,
                                          decode_config(decode, persp::default_context_decode(), seed)));
    });
}

persp_status persp_generate_qa(const persp_model* qa_model, const char* context, const char* decode,
                               uint64_t seed, char** candidate_json) {
    return guarded([&] {
        require(qa_model, "qa_model");
        require(context, "context");
        require(candidate_json, "candidate_json");
        if (!qa_model->handle.pipeline) throw Error(ErrorCode::kPrecondition, "not a QA model");
        const persp::CandidateTriple c =
            persp::generate_qa(qa_model->handle, context, decode_config(decode, persp::default_field_decode(), seed),
                               *qa_model->handle.pipeline);
        put(candidate_json, persp::candidate_to_json(c));
    });
}

persp_status persp_generate_batch(const persp_model* context_model, const persp_model* qa_model, size_t count,
                                  uint64_t seed, const char* decode, const char* out_path, char** summary_json) {
    return guarded([&] {
        require(context_model, "context_model");
        require(qa_model, "qa_model");
        if (!qa_model->handle.pipeline) throw Error(ErrorCode::kPrecondition, "not a QA model");
        BatchSummary summary;
        std::vector<persp::CandidateTriple> out;
        for (std::size_t i = 0; i < count; ++i) {
            const std::uint64_t s = persp::mix_seed(seed, i);
            ++summary.attempts;
            try {
                const std::string ctx = persp::generate_context(
                    context_model->handle, decode_config(decode, persp::default_context_decode(), s));
                persp::CandidateTriple c =
                    persp::generate_qa(qa_model->handle, ctx,
                                       decode_config(decode, persp::default_field_decode(), persp::mix_seed(s, 1)),
                                       *qa_model->handle.pipeline);
                c.generation_seed = s;
                out.push_back(std::move(c));
                ++summary.parsed;
            } catch (const Error& e) {
                if (!recoverable(e.code())) throw;
                ++summary.failures[std::string(persp::error_code_name(e.code()))];
            }
        }
        if (out_path != nullptr) persp::write_candidates(out, std::filesystem::path(out_path));
        put(summary_json, summary.to_json().dump());
    });
}

persp_status persp_generate_for_corpus(const persp_model* qa_model, const persp_corpus* corpus, uint64_t seed,
                                       const char* decode, const char* out_path, char** summary_json) {
    return guarded([&] {
        require(qa_model, "qa_model");
        require(corpus, "corpus");
        if (!qa_model->handle.pipeline) throw Error(ErrorCode::kPrecondition, "not a QA model");
        BatchSummary summary;
        std::vector<persp::CandidateTriple> out;
        for (std::size_t i = 0; i < corpus->corpus.size(); ++i) {
            const std::uint64_t s = persp::mix_seed(seed, i);
            ++summary.attempts;
            try {
                persp::CandidateTriple c = persp::generate_qa(
                    qa_model->handle, corpus->corpus.points[i].context,
                    decode_config(decode, persp::default_field_decode(), s), *qa_model->handle.pipeline);
                c.generation_seed = s;
                out.push_back(std::move(c));
                ++summary.parsed;
            } catch (const Error& e) {
                if (!recoverable(e.code())) throw;
                ++summary.failures[std::string(persp::error_code_name(e.code()))];
            }
        }
        if (out_path != nullptr) persp::write_candidates(out, std::filesystem::path(out_path));
        put(summary_json, summary.to_json().dump());
    });
}

persp_status persp_bertscore(const char* const* candidates, const char* const* references, size_t n,
                             const char* encoder_id, char** result_json) {
    return guarded([&] {
        require(encoder_id, "encoder_id");
        require(result_json, "result_json");
        const auto cands = strings(candidates, n, "candidates");
        const auto refs = strings(references, n, "references");
        const auto encoder = persp::make_encoder(encoder_id);
        const persp::BertScoreResult r = persp::bert_score(cands, refs, *encoder);
        json pairs = json::array();
        for (const auto& p : r.pairs) pairs.push_back({{"precision", p.precision}, {"recall", p.recall}, {"f1", p.f1}});
        put(result_json, json{{"encoder", encoder->id()},
                              {"mean_precision", r.mean_precision},
                              {"mean_recall", r.mean_recall},
                              {"mean_f1", r.mean_f1},
                              {"pairs", pairs}}
                             .dump());
    });
}

persp_status persp_slice_eval(const persp_corpus* test, const char* generated_path, const char* encoder_ids,
                              char** reports_json) {
    return guarded([&] {
        require(test, "test");
        require(generated_path, "generated_path");
        require(encoder_ids, "encoder_ids");
        require(reports_json, "reports_json");
        const auto generated = persp::load_candidates(generated_path);
        // Pair every candidate with the first unused test record sharing its context.
        persp::Corpus aligned;
        std::vector<bool> used(test->corpus.size(), false);
        for (const auto& c : generated) {
            bool found = false;
            for (std::size_t i = 0; i < test->corpus.size() && !found; ++i) {
                if (!used[i] && test->corpus.points[i].context == c.context) {
                    used[i] = true;
                    aligned.points.push_back(test->corpus.points[i]);
                    found = true;
                }
            }
            if (!found) throw Error(ErrorCode::kPrecondition, "no test record has context '" + c.context + "'");
        }
        std::vector<std::unique_ptr<persp::TokenEncoder>> owned;
        std::stringstream ids(encoder_ids);
        for (std::string id; std::getline(ids, id, ',');) {
            id = persp::trim(id);
            if (!id.empty()) owned.push_back(persp::make_encoder(id));
        }
        std::vector<const persp::TokenEncoder*> encoders;
        for (const auto& e : owned) encoders.push_back(e.get());
        json out = json::array();
        for (const auto& r : persp::slice_eval(aligned, generated, encoders)) {
            out.push_back({{"encoder", r.encoder_id},
                           {"slice", persp::to_string(r.slice)},
                           {"precision", r.precision},
                           {"recall", r.recall},
                           {"f1", r.f1},
                           {"n_pairs", r.n_pairs}});
        }
        put(reports_json, out.dump());
    });
}

persp_status persp_discriminability(const char* const* generated, size_t n_generated, const char* const* held_out,
                                    size_t n_held_out, uint64_t seed, char** report_json) {
    return guarded([&] {
        require(report_json, "report_json");
        const auto gen = strings(generated, n_generated, "generated");
        const auto held = strings(held_out, n_held_out, "held_out");
        const persp::DiscriminabilityReport r = persp::discriminability(gen, held, seed);
        json points = json::array();
        for (const auto& p : r.embedding) {
            points.push_back({{"x", p.x}, {"y", p.y}, {"label", p.label}, {"in_eval_split", p.in_eval_split}});
        }
        put(report_json, json{{"accuracy", r.accuracy},
                              {"f1", r.f1},
                              {"confusion", r.confusion},
                              {"eval_size", r.eval_size()},
                              {"embedding", points}}
                             .dump());
    });
}

persp_status persp_survey_analyze(const char* csv_path, const char* instrument, double alpha, char** report_json,
                                  char** table) {
    return guarded([&] {
        require(csv_path, "csv_path");
        require(instrument, "instrument");
        require(report_json, "report_json");
        const auto responses = persp::load_survey_csv(csv_path);
        const persp::SurveyReport r = persp::analyze_survey(responses, persp::parse_instrument(instrument), alpha);
        json items = json::array();
        for (const auto& it : r.items) {
            json j{{"key", it.item.key},         {"group", it.item.group}, {"label", it.item.label},
                   {"n", it.n},                  {"mean_first", it.mean_first},
                   {"mean_second", it.mean_second}, {"stars", it.stars}, {"note", it.note}};
            j["normality"] = it.normality ? test_json(*it.normality) : json(nullptr);
            j["t_test"] = it.t_test ? test_json(*it.t_test) : json(nullptr);
            j["power"] = it.power ? json(*it.power) : json(nullptr);
            items.push_back(std::move(j));
        }
        const std::string text = persp::format_survey_table(r);
        put(report_json, json{{"instrument", persp::to_string(r.instrument)}, {"alpha", r.alpha}, {"items", items}}.dump());
        put(table, text);
    });
}

persp_status persp_paired_t(const double* x, const double* y, size_t n, double alpha, char** result_json) {
    return guarded([&] {
        if (n > 0) {
            require(x, "x");
            require(y, "y");
        }
        require(result_json, "result_json");
        put(result_json, test_json(persp::paired_t_test({x, n}, {y, n}, alpha)).dump());
    });
}

persp_status persp_ryan_joiner(const double* sample, size_t n, double alpha, char** result_json) {
    return guarded([&] {
        if (n > 0) require(sample, "sample");
        require(result_json, "result_json");
        json j = test_json(persp::ryan_joiner({sample, n}, alpha));
        j["critical_value"] = persp::ryan_joiner_critical(n, alpha);
        put(result_json, j.dump());
    });
}

persp_status persp_power_paired_t(size_t n, double mean_diff, double sd_diff, double alpha, double* power) {
    return guarded([&] {
        require(power, "power");
        *power = persp::power_paired_t(n, mean_diff, sd_diff, alpha);
    });
}

persp_status persp_session_create(const char* fixture_path, uint64_t seed, persp_session** out) {
    return guarded([&] {
        require(fixture_path, "fixture_path");
        require(out, "out");
        persp::SessionConfig cfg;
        cfg.seed = seed;
        auto source = std::make_shared<persp::FixtureCandidateSource>(persp::load_candidates(fixture_path));
        char id[32];
        std::snprintf(id, sizeof id, "local-%016llx", static_cast<unsigned long long>(persp::splitmix64(seed)));
        *out = new persp_session{std::make_unique<persp::SessionActor>(
            id, source, std::make_shared<persp::SilentSpeechAdapter>(), cfg, persp::system_clock())};
    });
}

persp_status persp_session_submit(persp_session* session, const char* gate, const char* value, char** state_json) {
    return guarded([&] {
        require(session, "session");
        require(gate, "gate");
        require(value, "value");
        const persp::SubmitOutcome o =
            session->actor->submit(persp::parse_gate(gate), persp::parse_decision_value(value));
        json j = persp::state_json(o.state);
        j["warnings"] = o.warnings;
        put(state_json, j.dump());
    });
}

persp_status persp_session_state(const persp_session* session, char** state_json) {
    return guarded([&] {
        require(session, "session");
        require(state_json, "state_json");
        put(state_json, persp::state_json(session->actor->snapshot()).dump());
    });
}

persp_status persp_session_events(const persp_session* session, uint64_t from, char** events_json) {
    return guarded([&] {
        require(session, "session");
        require(events_json, "events_json");
        json out = json::array();
        for (const auto& e : session->actor->events(from)) out.push_back(persp::event_json(e));
        put(events_json, out.dump());
    });
}

void persp_session_free(persp_session* session) { delete session; }

void persp_server_options_init(persp_server_options* options) {
    if (options == nullptr) return;
    *options = persp_server_options{};
    options->host = "127.0.0.1";
    options->rejection_cap = 5;
}

persp_status persp_server_start(const persp_server_options* options, persp_server** out) {
    return guarded([&] {
        require(options, "options");
        require(out, "out");
        const bool fixture = options->fixture_path != nullptr && *options->fixture_path != '\0';
        const bool models = options->models_dir != nullptr && *options->models_dir != '\0';
        if (fixture == models) throw Error(ErrorCode::kInvalidArgument, "give exactly one of fixture_path and models_dir");
        if (options->rejection_cap == 0) throw Error(ErrorCode::kInvalidArgument, "rejection_cap must be >= 1");
        persp::SourceFactory sources = fixture ? persp::fixture_sources(options->fixture_path)
                                               : persp::model_sources(options->models_dir, options->seed);
        std::shared_ptr<persp::SpeechAdapter> speech;
        if (options->echo_utterances != 0) {
            speech = std::make_shared<persp::ConsoleSpeechAdapter>(std::cout);
        } else {
            speech = std::make_shared<persp::SilentSpeechAdapter>();
        }
        persp::SessionManagerConfig cfg;
        cfg.session.seed = options->seed;
        cfg.session.rejection_cap = options->rejection_cap;
        if (options->data_dir != nullptr && *options->data_dir != '\0') cfg.data_dir = options->data_dir;
        auto server = std::make_unique<persp_server>();
        server->sessions = std::make_shared<persp::SessionManager>(std::move(sources), speech, cfg);
        server->sessions->restore_all();
        persp::GatewayConfig gw;
        if (options->host != nullptr) gw.host = options->host;
        gw.port = options->port;
        server->gateway = std::make_unique<persp::Gateway>(server->sessions, gw);
        server->gateway->start();
        *out = server.release();
    });
}

int persp_server_port(const persp_server* server) { return server == nullptr ? -1 : server->gateway->port(); }

void persp_server_stop(persp_server* server) {
    if (server != nullptr) server->gateway->stop();
}

void persp_server_free(persp_server* server) { delete server; }

}  // extern "C"
