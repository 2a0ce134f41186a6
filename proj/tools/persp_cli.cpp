// Command line front end. Talks to the library only through persp.h.
#include <algorithm>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <pthread.h>

#include "persp/persp.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Failure : std::runtime_error {
    persp_status status;
    Failure(persp_status s, const std::string& what) : std::runtime_error(what), status(s) {}
};

void check(persp_status s, const std::string& what) {
    if (s != PERSP_OK) {
        throw Failure(s, what + ": " + persp_status_name(s) + ": " + persp_last_error());
    }
}

// Takes ownership of a library string.
std::string take(char* s) {
    if (s == nullptr) return {};
    std::string out(s);
    persp_string_free(s);
    return out;
}

template <typename T, void (*Free)(T*)>
struct Deleter {
    void operator()(T* p) const { Free(p); }
};
using Corpus = std::unique_ptr<persp_corpus, Deleter<persp_corpus, persp_corpus_free>>;
using Model = std::unique_ptr<persp_model, Deleter<persp_model, persp_model_free>>;
using Server = std::unique_ptr<persp_server, Deleter<persp_server, persp_server_free>>;

Corpus load_corpus(const fs::path& path) {
    persp_corpus* c = nullptr;
    check(persp_corpus_load(path.c_str(), &c), "loading " + path.string());
    return Corpus(c);
}

Model load_model(const fs::path& dir) {
    persp_model* m = nullptr;
    check(persp_model_load(dir.c_str(), &m), "loading model " + dir.string());
    return Model(m);
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Failure(PERSP_IO, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw Failure(PERSP_IO, "cannot write " + path.string());
    out << text;
}

std::vector<std::string> read_lines(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Failure(PERSP_IO, "cannot open " + path.string());
    std::vector<std::string> out;
    for (std::string line; std::getline(in, line);) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) out.push_back(line);
    }
    return out;
}

std::vector<const char*> c_strings(const std::vector<std::string>& v) {
    std::vector<const char*> out;
    for (const auto& s : v) out.push_back(s.c_str());
    return out;
}

// Optional flag values appended as "key = value" lines after any config file,
// so flags win over the file.
struct Overrides {
    std::vector<std::pair<std::string, std::string>> pending;
    std::vector<std::unique_ptr<std::string>> storage;

    void add(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
        storage.push_back(std::make_unique<std::string>());
        std::string* slot = storage.back().get();
        app->add_option(flag, *slot, help);
        pending.emplace_back(key, flag);
    }

    std::string render(CLI::App* app, const std::string& base) const {
        std::string text = base;
        if (!text.empty() && text.back() != '\n') text += '\n';
        for (std::size_t i = 0; i < pending.size(); ++i) {
            if (app->count(pending[i].second) > 0) text += pending[i].first + " = " + *storage[i] + "\n";
        }
        return text;
    }
};

void add_train_overrides(CLI::App* app, Overrides& o) {
    o.add(app, "--epochs", "epochs", "training epochs");
    o.add(app, "--batch-size", "batch_size", "examples per batch");
    o.add(app, "--learning-rate", "learning_rate", "step size");
    o.add(app, "--optimizer", "optimizer", "adam (the only one supported)");
    o.add(app, "--seed", "seed", "training seed");
    o.add(app, "--max-tokens", "max_tokens", "token budget per sequence");
    o.add(app, "--backend", "backend", "model backend");
    o.add(app, "--embedding-dim", "embedding_dim", "embedding width");
    o.add(app, "--hidden-dim", "hidden_dim", "hidden width");
}

void add_decode_overrides(CLI::App* app, Overrides& o) {
    o.add(app, "--strategy", "decode.strategy", "greedy or nucleus");
    o.add(app, "--top-p", "decode.top_p", "nucleus mass");
    o.add(app, "--temperature", "decode.temperature", "softmax temperature");
    o.add(app, "--max-new-tokens", "decode.max_new_tokens", "generation budget");
}

std::string pipeline_name(const std::string& flag) {
    if (flag == "staged" || flag == "staged_infilling") return "staged_infilling";
    if (flag == "control" || flag == "control_token") return "control_token";
    throw Failure(PERSP_INVALID_ARGUMENT, "unknown pipeline '" + flag + "'");
}

std::string fixed(double v, int digits = 4) {
    std::ostringstream ss;
    ss << std::fixed << std::setprecision(digits) << v;
    return ss.str();
}

// ---- prepare-data -------------------------------------------------------

int cmd_prepare(const fs::path& in, const fs::path& out, const std::vector<double>& split, std::uint64_t seed) {
    if (split.size() != 3) throw Failure(PERSP_INVALID_SPLIT, "--split takes three fractions");
    Corpus corpus = load_corpus(in);
    persp_corpus *tr = nullptr, *ev = nullptr, *te = nullptr;
    check(persp_corpus_split(corpus.get(), split[0], split[1], split[2], seed, &tr, &ev, &te), "splitting");
    Corpus train(tr), eval(ev), test(te);
    fs::create_directories(out);
    for (auto [name, c] : {std::pair{"train.jsonl", train.get()}, {"eval.jsonl", eval.get()}, {"test.jsonl", test.get()}}) {
        check(persp_corpus_save(c, (out / name).c_str()), std::string("writing ") + name);
        std::cout << name << ": " << persp_corpus_size(c) << " records\n";
    }
    return 0;
}

// ---- train --------------------------------------------------------------

void print_epoch(size_t epoch, double train_loss, double eval_loss, void*) {
    std::cout << "epoch " << epoch << "  train " << fixed(train_loss) << "  eval " << fixed(eval_loss) << std::endl;
}

int cmd_train(persp_model_kind kind, const std::string& pipeline, const fs::path& data, const fs::path& out,
              const std::string& config) {
    Corpus train = load_corpus(data / "train.jsonl");
    Corpus eval = load_corpus(data / "eval.jsonl");
    persp_model* m = nullptr;
    char* report = nullptr;
    check(persp_train(kind, pipeline.empty() ? nullptr : pipeline.c_str(), train.get(), eval.get(), config.c_str(),
                      print_epoch, nullptr, &m, &report),
          "training");
    Model model(m);
    const std::string report_text = take(report);
    check(persp_model_save(model.get(), out.c_str()), "saving model");
    write_file(out / "train_report.json", json::parse(report_text).dump(2) + "\n");
    std::cout << "model written to " << out.string() << "\n";
    return 0;
}

// ---- generate -----------------------------------------------------------

int cmd_generate(const std::string& context_dir, const fs::path& qa_dir, const std::string& pipeline,
                 std::size_t n, std::uint64_t seed, const fs::path& out, const std::string& test,
                 const std::string& decode) {
    Model qa = load_model(qa_dir);
    char* info = nullptr;
    check(persp_model_info(qa.get(), &info), "model info");
    const json qa_info = json::parse(take(info));
    if (qa_info.value("kind", "") != "qa") throw Failure(PERSP_PRECONDITION, qa_dir.string() + " is not a QA model");
    if (!pipeline.empty() && qa_info.value("pipeline", "") != pipeline_name(pipeline)) {
        throw Failure(PERSP_PRECONDITION, qa_dir.string() + " was trained for " + qa_info.value("pipeline", "?") +
                                              ", not " + pipeline_name(pipeline));
    }
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    char* summary = nullptr;
    if (!test.empty()) {
        Corpus corpus = load_corpus(test);
        check(persp_generate_for_corpus(qa.get(), corpus.get(), seed, decode.c_str(), out.c_str(), &summary),
              "generating");
    } else {
        if (context_dir.empty()) throw Failure(PERSP_INVALID_ARGUMENT, "--context-model or --test is required");
        Model context = load_model(context_dir);
        check(persp_generate_batch(context.get(), qa.get(), n, seed, decode.c_str(), out.c_str(), &summary),
              "generating");
    }
    std::cout << json::parse(take(summary)).dump(2) << "\n";
    return 0;
}

// ---- eval ---------------------------------------------------------------

std::string first_pipeline(const fs::path& candidates) {
    for (const std::string& line : read_lines(candidates)) {
        const json j = json::parse(line, nullptr, false);
        if (j.is_object() && j.contains("pipeline") && j["pipeline"].is_string()) return j["pipeline"];
        break;
    }
    return candidates.stem().string();
}

int cmd_bertscore(const fs::path& test_path, const std::vector<std::string>& candidate_files,
                  const std::string& encoders, const std::string& csv_path) {
    Corpus test = load_corpus(test_path);
    static const std::vector<std::string> slices = {"Q+A+B+C", "A+B+C", "Q"};
    struct Row {
        std::string model, encoder;
        std::map<std::string, json> by_slice;
    };
    std::vector<Row> rows;
    for (const std::string& file : candidate_files) {
        char* out = nullptr;
        check(persp_slice_eval(test.get(), file.c_str(), encoders.c_str(), &out), "scoring " + file);
        const json reports = json::parse(take(out));
        const std::string model = first_pipeline(file);
        for (const json& r : reports) {
            const std::string enc = r.at("encoder");
            auto it = std::find_if(rows.begin(), rows.end(),
                                   [&](const Row& x) { return x.model == model && x.encoder == enc; });
            if (it == rows.end()) {
                rows.push_back({model, enc, {}});
                it = rows.end() - 1;
            }
            it->by_slice[r.at("slice")] = r;
        }
    }

    std::size_t model_w = 5, enc_w = 7;
    for (const Row& r : rows) {
        model_w = std::max(model_w, r.model.size());
        enc_w = std::max(enc_w, r.encoder.size());
    }
    const int cell = 9;
    std::ostringstream t;
    t << std::left << std::setw(int(model_w) + 2) << "" << std::setw(int(enc_w) + 2) << "";
    for (const auto& s : slices) t << std::left << std::setw(cell * 3) << s;
    t << "\n" << std::setw(int(model_w) + 2) << "Model" << std::setw(int(enc_w) + 2) << "Encoder";
    for (std::size_t i = 0; i < slices.size(); ++i) t << std::setw(cell) << "P" << std::setw(cell) << "R" << std::setw(cell) << "F-1";
    t << "\n";
    std::ostringstream csv;
    csv << "model,encoder";
    for (const auto& s : slices) csv << "," << s << " precision," << s << " recall," << s << " f1";
    csv << ",n_pairs\n";
    for (const Row& r : rows) {
        t << std::setw(int(model_w) + 2) << r.model << std::setw(int(enc_w) + 2) << r.encoder;
        csv << r.model << "," << r.encoder;
        std::size_t n_pairs = 0;
        for (const auto& s : slices) {
            const json& x = r.by_slice.at(s);
            n_pairs = x.at("n_pairs");
            for (const char* k : {"precision", "recall", "f1"}) {
                t << std::setw(cell) << fixed(x.at(k).get<double>());
                csv << "," << fixed(x.at(k).get<double>(), 6);
            }
        }
        t << "\n";
        csv << "," << n_pairs << "\n";
    }
    std::cout << t.str();
    if (!csv_path.empty()) {
        write_file(csv_path, csv.str());
        std::cout << "csv written to " << csv_path << "\n";
    }
    return 0;
}

int cmd_discriminability(const fs::path& generated, const fs::path& test, std::uint64_t seed,
                         const fs::path& report_path, const fs::path& scatter_path) {
    const auto gen = read_lines(generated);
    const auto held = read_lines(test);
    const auto g = c_strings(gen), h = c_strings(held);
    char* out = nullptr;
    check(persp_discriminability(g.data(), g.size(), h.data(), h.size(), seed, &out), "discriminability");
    const json report = json::parse(take(out));
    write_file(report_path, report.dump(2) + "\n");
    std::ostringstream csv;
    csv << "x,y,label,in_eval_split\n" << std::setprecision(10);
    for (const json& p : report.at("embedding")) {
        csv << p.at("x").get<double>() << "," << p.at("y").get<double>() << "," << p.at("label").get<int>() << ","
            << (p.at("in_eval_split").get<bool>() ? 1 : 0) << "\n";
    }
    write_file(scatter_path, csv.str());
    std::cout << "accuracy " << fixed(report.at("accuracy").get<double>()) << "  f1 "
              << fixed(report.at("f1").get<double>()) << "  eval points " << report.at("eval_size") << "\n"
              << "report " << report_path.string() << ", scatter " << scatter_path.string() << "\n";
    return 0;
}

// ---- serve --------------------------------------------------------------

int cmd_serve(const std::string& host, int port, const std::string& models, const std::string& fixture,
              const std::string& data_dir, std::uint64_t seed, std::size_t cap, bool echo) {
    // Block the signals before any server thread exists so only sigwait sees them.
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);

    persp_server_options o;
    persp_server_options_init(&o);
    o.host = host.c_str();
    o.port = port;
    o.fixture_path = fixture.empty() ? nullptr : fixture.c_str();
    o.models_dir = models.empty() ? nullptr : models.c_str();
    o.data_dir = data_dir.empty() ? nullptr : data_dir.c_str();
    o.seed = seed;
    if (cap > 0) o.rejection_cap = cap;
    o.echo_utterances = echo ? 1 : 0;
    persp_server* raw = nullptr;
    check(persp_server_start(&o, &raw), "starting server");
    Server server(raw);
    std::cout << "listening on http://" << host << ":" << persp_server_port(server.get()) << std::endl;
    int sig = 0;
    sigwait(&set, &sig);
    std::cout << "stopping" << std::endl;
    persp_server_stop(server.get());
    return 0;
}

// ---- stats --------------------------------------------------------------

int cmd_stats(const fs::path& survey, const std::string& instrument, double alpha, const std::string& out) {
    char* report = nullptr;
    char* table = nullptr;
    check(persp_survey_analyze(survey.c_str(), instrument.c_str(), alpha, &report, &table), "analysing survey");
    const std::string text = take(table);
    const json j = json::parse(take(report));
    std::cout << text;
    if (!out.empty()) write_file(out, j.dump(2) + "\n");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"persp: perspective-taking question generation tools"};
    app.require_subcommand(1);
    app.set_version_flag("--version", persp_version());

    auto* prep = app.add_subcommand("prepare-data", "split a JSONL corpus into train/eval/test");
    std::string prep_in, prep_out;
    std::vector<double> split = {0.75, 0.15, 0.10};
    std::uint64_t prep_seed = 0;
    prep->add_option("--in", prep_in, "corpus JSONL")->required();
    prep->add_option("--out", prep_out, "output directory")->required();
    prep->add_option("--split", split, "train,eval,test fractions")->delimiter(',')->expected(3);
    prep->add_option("--seed", prep_seed, "shuffle seed");

    auto* train = app.add_subcommand("train", "train a context or QA model");
    train->require_subcommand(1);
    struct TrainArgs {
        std::string data, out, config, pipeline;
        Overrides overrides;
    };
    TrainArgs tc, tq;
    auto* train_ctx = train->add_subcommand("context", "context generator");
    auto* train_qa = train->add_subcommand("qa", "question and option generator");
    for (auto [cmd, args] : {std::pair{train_ctx, &tc}, {train_qa, &tq}}) {
        cmd->add_option("--data", args->data, "directory with train.jsonl and eval.jsonl")->required();
        cmd->add_option("--out", args->out, "model directory")->required();
        cmd->add_option("--config", args->config, "key = value training config")->check(CLI::ExistingFile);
        add_train_overrides(cmd, args->overrides);
    }
    train_qa->add_option("--pipeline", tq.pipeline, "staged or control")
        ->required()
        ->check(CLI::IsMember({"staged", "control"}));

    auto* gen = app.add_subcommand("generate", "sample candidates from trained models");
    std::string gen_ctx, gen_qa, gen_pipeline, gen_out, gen_test, gen_config;
    std::size_t gen_n = 50;
    std::uint64_t gen_seed = 0;
    Overrides gen_overrides;
    gen->add_option("--context-model", gen_ctx, "context model directory");
    gen->add_option("--qa-model", gen_qa, "QA model directory")->required();
    gen->add_option("--pipeline", gen_pipeline, "staged or control; must match the QA model")
        ->check(CLI::IsMember({"staged", "control"}));
    gen->add_option("--n", gen_n, "number of attempts");
    gen->add_option("--seed", gen_seed, "generation seed");
    gen->add_option("--out", gen_out, "candidate JSONL")->required();
    gen->add_option("--test", gen_test, "generate for the contexts of this corpus instead of sampled ones");
    gen->add_option("--decode-config", gen_config, "key = value file with decode.* entries")->check(CLI::ExistingFile);
    add_decode_overrides(gen, gen_overrides);

    auto* eval = app.add_subcommand("eval", "score generated candidates");
    eval->require_subcommand(1);
    auto* bert = eval->add_subcommand("bertscore", "BERTScore per slice and encoder");
    std::string bert_test, bert_csv, bert_encoders = "toy-hash";
    std::vector<std::string> bert_candidates;
    bert->add_option("--test", bert_test, "test corpus JSONL")->required();
    bert->add_option("--candidates", bert_candidates, "candidate JSONL, repeat for more models")->required();
    bert->add_option("--encoders", bert_encoders, "comma separated encoder ids");
    bert->add_option("--csv", bert_csv, "also write the table as CSV");

    auto* disc = eval->add_subcommand("discriminability", "can a classifier tell generated from held-out text");
    std::string disc_gen, disc_test, disc_report = "discriminability.json", disc_scatter = "scatter.csv";
    std::uint64_t disc_seed = 0;
    disc->add_option("--generated", disc_gen, "one generated document per line")->required();
    disc->add_option("--test", disc_test, "one held-out document per line")->required();
    disc->add_option("--seed", disc_seed, "seed");
    disc->add_option("--report", disc_report, "report JSON path");
    disc->add_option("--scatter", disc_scatter, "2-D embedding CSV path");

    auto* serve = app.add_subcommand("serve", "run the session gateway");
    std::string serve_host = "127.0.0.1", serve_models, serve_fixture, serve_data;
    int serve_port = 8080;
    std::uint64_t serve_seed = 0;
    std::size_t serve_cap = 0;
    bool serve_echo = false;
    serve->add_option("--host", serve_host, "bind address");
    serve->add_option("--port", serve_port, "port, 0 for any");
    auto* models_opt = serve->add_option("--models", serve_models, "directory with context/ and qa/ models");
    auto* fixture_opt = serve->add_option("--fixture", serve_fixture, "candidate JSONL to cycle through");
    models_opt->excludes(fixture_opt);
    serve->add_option("--data-dir", serve_data, "session log directory");
    serve->add_option("--seed", serve_seed, "session seed");
    serve->add_option("--rejection-cap", serve_cap, "UI2 rejections before returning to UI1");
    serve->add_flag("--echo", serve_echo, "print utterances");

    auto* stats = app.add_subcommand("stats", "paired survey analysis");
    std::string stats_survey, stats_instrument, stats_out;
    double stats_alpha = 0.05;
    stats->add_option("--survey", stats_survey, "survey CSV")->required()->check(CLI::ExistingFile);
    stats->add_option("--instrument", stats_instrument, "instrument")
        ->required()
        ->check(CLI::IsMember({"nasa_tlx", "godspeed", "appropriateness"}));
    stats->add_option("--alpha", stats_alpha, "significance level");
    stats->add_option("--out", stats_out, "report JSON path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*prep) return cmd_prepare(prep_in, prep_out, split, prep_seed);
        if (*train_ctx || *train_qa) {
            TrainArgs& a = *train_ctx ? tc : tq;
            CLI::App* cmd = *train_ctx ? train_ctx : train_qa;
            const std::string base = a.config.empty() ? std::string() : read_file(a.config);
            return cmd_train(*train_ctx ? PERSP_MODEL_CONTEXT : PERSP_MODEL_QA, a.pipeline, a.data, a.out,
                             a.overrides.render(cmd, base));
        }
        if (*gen) {
            const std::string base = gen_config.empty() ? std::string() : read_file(gen_config);
            return cmd_generate(gen_ctx, gen_qa, gen_pipeline, gen_n, gen_seed, gen_out, gen_test,
                                gen_overrides.render(gen, base));
        }
        if (*bert) return cmd_bertscore(bert_test, bert_candidates, bert_encoders, bert_csv);
        if (*disc) return cmd_discriminability(disc_gen, disc_test, disc_seed, disc_report, disc_scatter);
        if (*serve) {
            if (serve_models.empty() == serve_fixture.empty()) {
                throw Failure(PERSP_INVALID_ARGUMENT, "serve needs exactly one of --models or --fixture");
            }
            return cmd_serve(serve_host, serve_port, serve_models, serve_fixture, serve_data, serve_seed, serve_cap,
                             serve_echo);
        }
        if (*stats) return cmd_stats(stats_survey, stats_instrument, stats_alpha, stats_out);
    } catch (const Failure& f) {
        std::cerr << "error: " << f.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
