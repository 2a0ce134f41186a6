// Links libpersp only; everything goes through the C interface.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "persp/persp.h"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class Owned {
public:
    Owned() = default;
    ~Owned() { persp_string_free(p_); }
    char** out() { return &p_; }
    std::string str() const { return p_ ? p_ : ""; }
    json parse() const { return json::parse(str()); }

private:
    char* p_ = nullptr;
};

class CApi : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() / ("persp_capi_" + std::to_string(std::random_device{}()));
        fs::create_directories(dir_);
        const char* names[] = {"Alex", "Jordan", "Taylor", "Riley", "Casey"};
        const char* acts[] = {"shared lunch with a friend", "won the school race", "lost a favourite toy",
                              "helped a neighbour carry bags"};
        std::ofstream corpus(dir_ / "corpus.jsonl");
        for (int i = 0; i < 40; ++i) {
            const std::string n = names[i % 5];
            corpus << json{{"context", n + " " + acts[i % 4] + "."},
                           {"question", "How would " + n + " feel afterwards?"},
                           {"answerA", "happy"},
                           {"answerB", "sad"},
                           {"answerC", "tired"},
                           {"label", "1"}}
                          .dump()
                   << "\n";
        }
        std::ofstream fixture(dir_ / "fixture.jsonl");
        fixture << json{{"context", "Sam found a lost puppy."}, {"question", "What will Sam do next?"},
                        {"option_a", "look for the owner"}, {"option_b", "eat lunch"}, {"option_c", "go to sleep"}}
                       .dump()
                << "\n";
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string path(const char* name) const { return (dir_ / name).string(); }

    fs::path dir_;
};

TEST_F(CApi, StatusNamesAndLastError) {
    EXPECT_STREQ(persp_status_name(PERSP_GATE_MISMATCH), "GateMismatch");
    EXPECT_STREQ(persp_status_name(PERSP_OK), "Ok");
    persp_corpus* c = nullptr;
    EXPECT_EQ(persp_corpus_load(path("missing.jsonl").c_str(), &c), PERSP_IO);
    EXPECT_EQ(c, nullptr);
    EXPECT_NE(std::string(persp_last_error()).find("missing.jsonl"), std::string::npos);
    EXPECT_EQ(persp_corpus_load(nullptr, &c), PERSP_INVALID_ARGUMENT);
    ASSERT_EQ(persp_corpus_load(path("corpus.jsonl").c_str(), &c), PERSP_OK);
    EXPECT_STREQ(persp_last_error(), "");
    persp_corpus_free(c);
    persp_corpus_free(nullptr);
    persp_string_free(nullptr);
}

TEST_F(CApi, CorpusSplitAndSave) {
    persp_corpus* c = nullptr;
    ASSERT_EQ(persp_corpus_load(path("corpus.jsonl").c_str(), &c), PERSP_OK);
    EXPECT_EQ(persp_corpus_size(c), 40u);
    persp_corpus *tr = nullptr, *ev = nullptr, *te = nullptr;
    EXPECT_EQ(persp_corpus_split(c, 0.5, 0.6, 0.1, 1, &tr, &ev, &te), PERSP_INVALID_SPLIT);
    ASSERT_EQ(persp_corpus_split(c, 0.75, 0.15, 0.10, 1, &tr, &ev, &te), PERSP_OK);
    EXPECT_EQ(persp_corpus_size(tr) + persp_corpus_size(ev) + persp_corpus_size(te), 40u);
    EXPECT_EQ(persp_corpus_size(tr), 30u);
    ASSERT_EQ(persp_corpus_save(te, path("test.jsonl").c_str()), PERSP_OK);
    persp_corpus* back = nullptr;
    ASSERT_EQ(persp_corpus_load(path("test.jsonl").c_str(), &back), PERSP_OK);
    EXPECT_EQ(persp_corpus_size(back), persp_corpus_size(te));
    for (persp_corpus* p : {c, tr, ev, te, back}) persp_corpus_free(p);
}

TEST_F(CApi, TrainGenerateSaveLoad) {
    persp_corpus* c = nullptr;
    ASSERT_EQ(persp_corpus_load(path("corpus.jsonl").c_str(), &c), PERSP_OK);
    persp_model* ctx = nullptr;
    persp_model* qa = nullptr;
    Owned report;
    std::vector<double> losses;
    auto cb = [](size_t, double train_loss, double, void* user) {
        static_cast<std::vector<double>*>(user)->push_back(train_loss);
    };
    EXPECT_EQ(persp_train(PERSP_MODEL_CONTEXT, nullptr, c, c, "epochs = banana", nullptr, nullptr, &ctx, nullptr),
              PERSP_INVALID_ARGUMENT);
    ASSERT_EQ(persp_train(PERSP_MODEL_CONTEXT, nullptr, c, c, "epochs = 2\nseed = 3", cb, &losses, &ctx,
                          report.out()),
              PERSP_OK)
        << persp_last_error();
    EXPECT_EQ(losses.size(), 2u);
    EXPECT_EQ(report.parse()["history"].size(), 2u);
    ASSERT_EQ(persp_train(PERSP_MODEL_QA, "staged", c, c, "epochs = 2", nullptr, nullptr, &qa, nullptr), PERSP_OK);

    Owned text, again;
    ASSERT_EQ(persp_generate_context(ctx, "decode.strategy = greedy", 5, text.out()), PERSP_OK) << persp_last_error();
    ASSERT_EQ(persp_generate_context(ctx, "decode.strategy = greedy", 5, again.out()), PERSP_OK);
    EXPECT_EQ(text.str(), again.str());
    EXPECT_EQ(persp_generate_context(ctx, "epochs = 3", 5, nullptr), PERSP_INVALID_ARGUMENT);

    ASSERT_EQ(persp_model_save(qa, path("qa").c_str()), PERSP_OK);
    persp_model* loaded = nullptr;
    ASSERT_EQ(persp_model_load(path("qa").c_str(), &loaded), PERSP_OK);
    Owned info;
    ASSERT_EQ(persp_model_info(loaded, info.out()), PERSP_OK);
    EXPECT_EQ(info.parse()["kind"], "qa");
    Owned a, b;
    const persp_status sa = persp_generate_qa(qa, "Riley won the school race.", nullptr, 8, a.out());
    const persp_status sb = persp_generate_qa(loaded, "Riley won the school race.", nullptr, 8, b.out());
    EXPECT_EQ(sa, sb);
    EXPECT_EQ(a.str(), b.str());
    EXPECT_EQ(persp_generate_qa(ctx, "x", nullptr, 1, a.out()), PERSP_PRECONDITION);

    Owned summary;
    ASSERT_EQ(persp_generate_batch(ctx, qa, 10, 4, nullptr, path("gen.jsonl").c_str(), summary.out()), PERSP_OK)
        << persp_last_error();
    const json s = summary.parse();
    EXPECT_EQ(s["attempts"], 10);
    std::size_t fail_total = 0;
    for (const auto& [k, v] : s["failures"].items()) fail_total += v.get<std::size_t>();
    EXPECT_EQ(s["parsed"].get<std::size_t>() + fail_total, 10u);

    Owned for_corpus, slices;
    ASSERT_EQ(persp_generate_for_corpus(qa, c, 2, nullptr, path("eval.jsonl").c_str(), for_corpus.out()), PERSP_OK);
    if (for_corpus.parse()["parsed"].get<int>() > 0) {
        ASSERT_EQ(persp_slice_eval(c, path("eval.jsonl").c_str(), "toy-hash", slices.out()), PERSP_OK)
            << persp_last_error();
        const json r = slices.parse();
        ASSERT_EQ(r.size(), 3u);
        EXPECT_EQ(r[0]["slice"], "Q+A+B+C");
    }
    EXPECT_EQ(persp_slice_eval(c, path("eval.jsonl").c_str(), "no-such-encoder", slices.out()),
              PERSP_ENCODER_FAILURE);

    for (persp_model* m : {ctx, qa, loaded}) persp_model_free(m);
    persp_corpus_free(c);
}

TEST_F(CApi, BertScoreAndDiscriminability) {
    const char* cands[] = {"the cat sat on the mat", "a child smiled"};
    Owned r;
    ASSERT_EQ(persp_bertscore(cands, cands, 2, "toy-hash", r.out()), PERSP_OK);
    const json j = r.parse();
    EXPECT_EQ(j["mean_precision"].get<double>(), 1.0);
    EXPECT_EQ(j["mean_recall"].get<double>(), 1.0);
    EXPECT_EQ(j["mean_f1"].get<double>(), 1.0);
    const char* blank[] = {"  ", "x"};
    EXPECT_EQ(persp_bertscore(blank, cands, 2, "toy-hash", r.out()), PERSP_EMPTY_TEXT);

    std::vector<std::string> gen, held;
    for (int i = 0; i < 20; ++i) {
        gen.push_back("apple banana cherry number" + std::to_string(i % 5));
        held.push_back("river mountain valley word" + std::to_string(i % 5));
    }
    std::vector<const char*> g, h;
    for (auto& s : gen) g.push_back(s.c_str());
    for (auto& s : held) h.push_back(s.c_str());
    Owned d;
    ASSERT_EQ(persp_discriminability(g.data(), g.size(), h.data(), h.size(), 1, d.out()), PERSP_OK)
        << persp_last_error();
    const json dj = d.parse();
    EXPECT_EQ(dj["embedding"].size(), 40u);
    EXPECT_GE(dj["accuracy"].get<double>(), 0.0);
    EXPECT_EQ(dj["eval_size"], 8);
}

TEST_F(CApi, Statistics) {
    const double x[] = {5, 6, 5, 5};
    const double y[] = {4, 4, 4, 4};
    Owned t;
    ASSERT_EQ(persp_paired_t(x, y, 4, 0.05, t.out()), PERSP_OK);
    const json j = t.parse();
    EXPECT_NEAR(j["statistic"].get<double>(), 5.0, 1e-12);
    EXPECT_EQ(j["df"].get<double>(), 3.0);
    EXPECT_NEAR(j["p_value"].get<double>(), 0.015392438073302296, 1e-9);
    EXPECT_EQ(j["decision"], "reject_H0");
    EXPECT_EQ(persp_paired_t(x, x, 4, 0.05, t.out()), PERSP_ZERO_VARIANCE);

    double power = -1.0;
    ASSERT_EQ(persp_power_paired_t(4, 0.0, 1.0, 0.05, &power), PERSP_OK);
    EXPECT_EQ(power, 0.05);
    EXPECT_EQ(persp_power_paired_t(1, 1.0, 1.0, 0.05, &power), PERSP_INVALID_ARGUMENT);

    const double sample[] = {1.2, 0.4, -0.3, 2.2, 0.9, -1.1, 0.1, 0.5};
    Owned rj;
    ASSERT_EQ(persp_ryan_joiner(sample, 8, 0.05, rj.out()), PERSP_OK);
    EXPECT_TRUE(rj.parse().contains("critical_value"));

    std::ofstream csv(path("survey.csv"));
    csv << "expert_id,instrument,condition,item,score\n";
    for (int e = 0; e < 4; ++e) {
        for (const char* item : {"MD", "PD", "TD", "Perf", "Eff", "Frus"}) {
            const bool perf = std::string(item) == "Perf";
            csv << "e" << e << ",nasa_tlx,robot," << item << "," << (perf ? (e == 1 ? 6 : 5) : 3 + e % 2) << "\n";
            csv << "e" << e << ",nasa_tlx,no_robot," << item << "," << (perf ? 4 : 3 + (e + 1) % 2) << "\n";
        }
    }
    csv.close();
    Owned report, table;
    ASSERT_EQ(persp_survey_analyze(path("survey.csv").c_str(), "nasa_tlx", 0.05, report.out(), table.out()), PERSP_OK)
        << persp_last_error();
    const json items = report.parse()["items"];
    ASSERT_EQ(items.size(), 6u);
    EXPECT_EQ(items[3]["key"], "Perf");
    EXPECT_EQ(items[3]["stars"], "*");
    EXPECT_NE(table.str().find("Perf"), std::string::npos);
    EXPECT_EQ(persp_survey_analyze(path("survey.csv").c_str(), "bogus", 0.05, report.out(), nullptr),
              PERSP_INVALID_ARGUMENT);
}

TEST_F(CApi, LocalSession) {
    persp_session* s = nullptr;
    ASSERT_EQ(persp_session_create(path("fixture.jsonl").c_str(), 3, &s), PERSP_OK) << persp_last_error();
    Owned state;
    EXPECT_EQ(persp_session_submit(s, "UI3", "correct", state.out()), PERSP_GATE_MISMATCH);
    EXPECT_EQ(persp_session_submit(s, "UI1", "perhaps", state.out()), PERSP_INVALID_ARGUMENT);
    for (auto [g, v] : {std::pair{"UI1", "yes"}, {"UI2", "yes"}, {"UI3", "no_response"}, {"UI4", "correct"}}) {
        ASSERT_EQ(persp_session_submit(s, g, v, state.out()), PERSP_OK) << persp_last_error();
    }
    Owned snapshot, events;
    ASSERT_EQ(persp_session_state(s, snapshot.out()), PERSP_OK);
    EXPECT_EQ(snapshot.parse()["phase"], "AwaitContinue");
    ASSERT_EQ(persp_session_events(s, 0, events.out()), PERSP_OK);
    std::vector<std::string> roles;
    for (const json& e : events.parse()) {
        if (e["type"] == "utterance") roles.push_back(e["role"]);
    }
    EXPECT_EQ(roles, (std::vector<std::string>{"initiator", "prompter", "reinforcer"}));
    persp_session_free(s);
}

TEST_F(CApi, ServerLifecycle) {
    persp_server_options o;
    persp_server_options_init(&o);
    persp_server* server = nullptr;
    EXPECT_EQ(persp_server_start(&o, &server), PERSP_INVALID_ARGUMENT);  // no content source
    const std::string fixture = path("fixture.jsonl");
    const std::string data = path("data");
    o.fixture_path = fixture.c_str();
    o.data_dir = data.c_str();
    ASSERT_EQ(persp_server_start(&o, &server), PERSP_OK) << persp_last_error();
    const int port = persp_server_port(server);
    ASSERT_GT(port, 0);
    httplib::Client cli("127.0.0.1", port);
    auto res = cli.Post("/sessions");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 201);
    const std::string id = json::parse(res->body)["session_id"];
    EXPECT_TRUE(fs::exists(dir_ / "data" / "sessions" / (id + ".jsonl")));
    persp_server_stop(server);
    persp_server_free(server);

    // A restart picks the session up again from its log.
    ASSERT_EQ(persp_server_start(&o, &server), PERSP_OK);
    httplib::Client again("127.0.0.1", persp_server_port(server));
    auto got = again.Get("/sessions/" + id);
    ASSERT_TRUE(got);
    EXPECT_EQ(got->status, 200);
    persp_server_free(server);
}

}  // namespace
