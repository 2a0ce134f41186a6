#include "persp/gateway.hpp"

#include <atomic>
#include <thread>

#include <httplib.h>

#include "persp/api.hpp"
#include "persp/errors.hpp"
#include "persp/random.hpp"

namespace persp {
using nlohmann::json;

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

template <typename F>
void guarded(httplib::Response& res, F&& handler) {
    try {
        handler();
    } catch (const Error& e) {
        send_json(res, http_status(e.code()), error_json(error_code_name(e.code()), e.what()));
    } catch (const json::exception& e) {
        send_json(res, 400, error_json(error_code_name(ErrorCode::kInvalidArgument), e.what()));
    } catch (const std::exception& e) {
        send_json(res, 500, error_json(error_code_name(ErrorCode::kInternal), e.what()));
    }
}

std::uint64_t parse_u64(const std::string& text, const char* what) {
    try {
        std::size_t used = 0;
        const unsigned long long v = std::stoull(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        throw Error(ErrorCode::kInvalidArgument, std::string("bad ") + what + " '" + text + "'");
    }
}

std::string sse_frame(const SessionEvent& e) {
    return "id: " + std::to_string(e.seq) + "\nevent: " + std::string(to_string(e.kind)) +
           "\ndata: " + event_json(e).dump() + "\n\n";
}

json outcome_json(const SubmitOutcome& o) {
    json j = state_json(o.state);
    j["warnings"] = o.warnings;
    j["delivery_error"] = o.delivery_error ? json(*o.delivery_error) : json(nullptr);
    return j;
}

}  // namespace

struct Gateway::Impl {
    std::shared_ptr<SessionManager> sessions;
    GatewayConfig config;
    httplib::Server server;
    std::thread thread;
    std::atomic<bool> stopping{false};
    int port = -1;

    void routes();
    void stream_events(const httplib::Request& req, httplib::Response& res);
};

void Gateway::Impl::routes() {
    server.new_task_queue = [] { return new httplib::ThreadPool(32); };
    server.set_tcp_nodelay(true);
    // SO_REUSEADDR only: with httplib's default SO_REUSEPORT a second server
    // could silently share the port.
    server.set_socket_options([](socket_t sock) {
        int yes = 1;
        setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
    });
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                {"Access-Control-Allow-Headers", "Content-Type"},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    server.Post("/sessions", [this](const httplib::Request&, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 201, state_json(sessions->create()->snapshot())); });
    });
    server.Get("/sessions", [this](const httplib::Request&, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 200, json{{"sessions", sessions->ids()}}); });
    });
    server.Get(R"(/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 200, state_json(sessions->find(req.matches[1])->snapshot())); });
    });
    server.Post(R"(/sessions/([^/]+)/decisions)", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            auto actor = sessions->find(req.matches[1]);
            json body;
            try {
                body = json::parse(req.body);
            } catch (const json::exception& e) {
                throw Error(ErrorCode::kInvalidArgument, std::string("body is not JSON: ") + e.what());
            }
            if (!body.is_object() || !body.contains("gate") || !body.contains("value") ||
                !body["gate"].is_string() || !body["value"].is_string()) {
                throw Error(ErrorCode::kInvalidArgument, "body needs string fields gate and value");
            }
            const Gate gate = parse_gate(body["gate"].get<std::string>());
            const DecisionValue value = parse_decision_value(body["value"].get<std::string>());
            send_json(res, 200, outcome_json(actor->submit(gate, value)));
        });
    });
    server.Post(R"(/sessions/([^/]+)/speak)", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const SubmitOutcome o = sessions->find(req.matches[1])->retry_speech();
            if (o.delivery_error) {
                json body = error_json(error_code_name(ErrorCode::kDeliveryFailed), *o.delivery_error);
                body["session"] = state_json(o.state);
                send_json(res, 502, body);
            } else {
                send_json(res, 200, outcome_json(o));
            }
        });
    });
    server.Get(R"(/sessions/([^/]+)/candidate)", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const SessionState s = sessions->find(req.matches[1])->snapshot();
            if (!s.candidate) {
                throw Error(ErrorCode::kNotFound, "no candidate in phase " + std::string(to_string(s.phase)));
            }
            send_json(res, 200, candidate_json(*s.candidate));
        });
    });
    server.Get(R"(/sessions/([^/]+)/events)",
               [this](const httplib::Request& req, httplib::Response& res) { stream_events(req, res); });
}

void Gateway::Impl::stream_events(const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
        auto actor = sessions->find(req.matches[1]);
        std::uint64_t from = 1;
        if (req.has_param("from")) from = std::max<std::uint64_t>(1, parse_u64(req.get_param_value("from"), "from"));
        else if (req.has_header("Last-Event-ID")) from = parse_u64(req.get_header_value("Last-Event-ID"), "Last-Event-ID") + 1;
        const bool follow = !req.has_param("follow") || req.get_param_value("follow") != "0";

        res.set_header("Cache-Control", "no-cache");
        if (!follow) {
            std::string body;
            for (const SessionEvent& e : actor->events(from)) body += sse_frame(e);
            res.status = 200;
            res.set_content(body, "text/event-stream");
            return;
        }
        auto next = std::make_shared<std::uint64_t>(from);
        res.set_chunked_content_provider(
            "text/event-stream", [this, actor, next](std::size_t, httplib::DataSink& sink) {
                if (stopping) return false;
                const auto batch = actor->wait_events(*next, config.stream_poll);
                for (const SessionEvent& e : batch) {
                    const std::string frame = sse_frame(e);
                    if (!sink.is_writable() || !sink.write(frame.data(), frame.size())) return false;
                    *next = e.seq + 1;
                }
                if (batch.empty() && !sink.is_writable()) return false;
                // An ended session produces nothing more.
                if (actor->snapshot().phase == Phase::kEnded && actor->next_seq() == *next) sink.done();
                return true;
            });
    });
}

Gateway::Gateway(std::shared_ptr<SessionManager> sessions, GatewayConfig config) : impl_(std::make_unique<Impl>()) {
    if (!sessions) throw Error(ErrorCode::kInvalidArgument, "gateway needs a session manager");
    impl_->sessions = std::move(sessions);
    impl_->config = std::move(config);
    impl_->routes();
}

Gateway::~Gateway() { stop(); }

int Gateway::start() {
    if (impl_->thread.joinable()) return impl_->port;
    auto& s = impl_->server;
    const int p = impl_->config.port == 0 ? s.bind_to_any_port(impl_->config.host)
                                          : (s.bind_to_port(impl_->config.host, impl_->config.port)
                                                 ? impl_->config.port
                                                 : -1);
    if (p < 0) {
        throw Error(ErrorCode::kIo, "cannot bind " + impl_->config.host + ":" + std::to_string(impl_->config.port));
    }
    impl_->port = p;
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return p;
}

int Gateway::port() const noexcept { return impl_->port; }

void Gateway::wait() {
    if (impl_->thread.joinable()) impl_->thread.join();
}

void Gateway::stop() {
    if (!impl_) return;
    impl_->stopping = true;
    impl_->sessions->close_all();
    impl_->server.stop();
    if (impl_->thread.joinable() && impl_->thread.get_id() != std::this_thread::get_id()) impl_->thread.join();
}

SourceFactory fixture_sources(const std::filesystem::path& path) {
    auto source = std::make_shared<FixtureCandidateSource>(load_candidates(path));
    return [source](const std::string&) -> std::shared_ptr<CandidateSource> { return source; };
}

SourceFactory model_sources(const std::filesystem::path& dir, std::uint64_t seed) {
    ModelHandle context = load_model(dir / "context");
    ModelHandle qa = load_model(dir / "qa");
    if (!qa.pipeline) throw Error(ErrorCode::kPrecondition, (dir / "qa").string() + " has no pipeline");
    const Pipeline pipeline = *qa.pipeline;
    return [context, qa, pipeline, seed](const std::string& id) -> std::shared_ptr<CandidateSource> {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (unsigned char ch : id) h = (h ^ ch) * 0x100000001b3ULL;
        return std::make_shared<ModelCandidateSource>(context, qa, pipeline, mix_seed(seed, h));
    };
}

}  // namespace persp
