#include "crowdscore/server.hpp"

#include <fstream>
#include <mutex>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "crowdscore/io.hpp"
#include "crowdscore/pipeline.hpp"

namespace crowdscore::app {

using nlohmann::json;

namespace {

json state_json(const qc::ContributorState& st) {
    return json{{"contributor_id", st.contributor_id},
                {"status", qc::status_name(st.status)},
                {"trust", st.trust()},
                {"test_seen", st.test_seen},
                {"test_correct", st.test_correct},
                {"work_images_reviewed", st.work_images_reviewed},
                {"judgments_submitted", st.judgments_submitted},
                {"speed_violations", st.speed_violations}};
}

json task_json(const qc::VisibleTask& t) {
    json slots = json::array();
    for (const auto& image_id : t.image_ids) slots.push_back({{"image_id", image_id}});
    return json{{"task_id", t.task_id},
                {"contributor_id", t.contributor_id},
                {"mode", mode_name(t.mode)},
                {"slots", slots}};
}

int http_status(Errc code) {
    switch (code) {
        case Errc::not_found: return 404;
        case Errc::no_work: return 404;
        case Errc::already_registered: return 409;
        case Errc::stale_task: return 409;
        case Errc::not_eligible: return 403;
        case Errc::io: return 500;
        default: return 400;
    }
}

void set_error(httplib::Response& res, const Error& e) {
    res.status = http_status(e.code());
    res.set_content(
        json{{"error", {{"code", errc_name(e.code())}, {"message", e.what()}}}}.dump(),
        "application/json");
}

Answer answer_from_json(const json& j, qc::JobKind kind) {
    if (kind == qc::JobKind::ImageLabeling) {
        if (!j.is_string())
            fail(Errc::malformed_submission, "label answers must be strings A..D");
        std::string s = j.get<std::string>();
        if (s.size() != 1) fail(Errc::malformed_submission, "bad label token '" + s + "'");
        return ClassLabel::from_letter(s[0]);
    }
    if (!j.is_object()) fail(Errc::malformed_submission, "nuclei answers must be objects");
    NucleiAnnotation ann;
    ann.has_nuclei = j.at("has_nuclei").get<bool>();
    for (const auto& d : j.value("positive", json::array()))
        ann.positive.emplace_back(d.at(0).get<int>(), d.at(1).get<int>());
    for (const auto& d : j.value("negative", json::array()))
        ann.negative.emplace_back(d.at(0).get<int>(), d.at(1).get<int>());
    return ann;
}

} // namespace

struct JobService::Impl {
    qc::JobEngine& engine;
    std::filesystem::path log_path;
    std::ofstream log_out;
    std::mutex mutex;
    httplib::Server server;
    std::thread thread;

    explicit Impl(qc::JobEngine& eng, std::filesystem::path path)
        : engine(eng), log_path(std::move(path)) {}

    void open_log() {
        if (log_path.has_parent_path()) {
            std::error_code ec;
            std::filesystem::create_directories(log_path.parent_path(), ec);
        }
        log_out.open(log_path, std::ios::binary);
        if (!log_out) fail(Errc::io, "cannot open log " + log_path.string());
        if (engine.kind() == qc::JobKind::ImageLabeling)
            log_out << io::kLabelLogHeader << '\n';
        engine.set_record_sink([this](const qc::LogRecord& rec) {
            if (engine.kind() == qc::JobKind::ImageLabeling)
                log_out << io::label_log_row(rec) << '\n';
            else
                log_out << io::nuclei_log_line(rec) << '\n';
            log_out.flush();
        });
    }

    void routes() {
        server.Post("/v1/contributors", [this](const httplib::Request& req,
                                               httplib::Response& res) {
            handle(res, [&]() -> json {
                json body = json::parse(req.body);
                std::string id = body.at("contributor_id").get<std::string>();
                auto [st, task] = engine.start_session(id);
                return json{{"contributor", state_json(st)}, {"task", task_json(task)}};
            });
        });

        server.Get(R"(/v1/contributors/([^/]+)/task)",
                   [this](const httplib::Request& req, httplib::Response& res) {
                       handle(res, [&]() -> json {
                           auto task = engine.current_task(req.matches[1].str());
                           return json{{"task", task_json(task)}};
                       });
                   });

        server.Post(R"(/v1/tasks/([^/]+)/judgments)",
                    [this](const httplib::Request& req, httplib::Response& res) {
                        handle(res, [&]() -> json {
                            json body = json::parse(req.body);
                            std::string task_id = req.matches[1].str();
                            std::string who = body.at("contributor_id").get<std::string>();
                            if (engine.task_owner(task_id) != who)
                                fail(Errc::stale_task,
                                     "task " + task_id + " was not issued to " + who);
                            std::vector<Answer> answers;
                            for (const auto& a : body.at("answers"))
                                answers.push_back(answer_from_json(a, engine.kind()));
                            auto [st, verdict] = engine.submit_task(
                                task_id, answers, body.at("elapsed_seconds").get<double>());
                            return json{{"verdict", qc::verdict_name(verdict)},
                                        {"contributor", state_json(st)}};
                        });
                    });

        server.Get("/v1/job/progress", [this](const httplib::Request&, httplib::Response& res) {
            handle(res, [&]() -> json {
                auto p = engine.progress();
                return json{{"images_total", p.images_total},
                            {"images_complete", p.images_complete},
                            {"valid_judgments", p.valid_judgments},
                            {"contributors", p.contributors},
                            {"by_status", p.by_status},
                            {"complete", p.complete}};
            });
        });

        server.Get("/v1/job/results", [this](const httplib::Request& req,
                                             httplib::Response& res) {
            handle(res, [&]() -> json {
                auto method = agg::method_from_name(req.get_param_value("method").empty()
                                                        ? "cv"
                                                        : req.get_param_value("method"));
                auto weights = agg::ClassWeights::defaults();
                json images = json::array();
                for (const auto& [image_id, votes] : engine.valid_votes()) {
                    ClassLabel label = aggregate_image(votes, method, weights);
                    images.push_back({{"image_id", image_id},
                                      {"label", std::string(1, label.letter())},
                                      {"votes", votes.size()}});
                }
                return json{{"method", agg::method_name(method)}, {"images", images}};
            });
        });
    }

    template <typename Fn>
    void handle(httplib::Response& res, Fn&& fn) {
        std::lock_guard<std::mutex> lock(mutex);
        try {
            json out = fn();
            res.status = 200;
            res.set_content(out.dump(), "application/json");
        } catch (const Error& e) {
            set_error(res, e);
        } catch (const json::exception& e) {
            set_error(res, Error(Errc::parse, std::string("bad request body: ") + e.what()));
        }
    }
};

JobService::JobService(qc::JobEngine& engine, std::filesystem::path log_path)
    : impl_(std::make_unique<Impl>(engine, std::move(log_path))) {}

JobService::~JobService() {
    try {
        stop();
    } catch (...) {
    }
}

void JobService::start(int port) {
    impl_->open_log();
    impl_->routes();
    if (port == 0) {
        port_ = impl_->server.bind_to_any_port("127.0.0.1");
        if (port_ <= 0) fail(Errc::startup, "cannot bind a free port");
    } else {
        if (!impl_->server.bind_to_port("0.0.0.0", port))
            fail(Errc::startup, "cannot bind port " + std::to_string(port));
        port_ = port;
    }
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
}

void JobService::stop() {
    if (impl_->thread.joinable()) {
        impl_->server.stop();
        impl_->thread.join();
    }
    if (impl_->log_out.is_open()) {
        impl_->log_out.flush();
        impl_->log_out.close();
    }
}

} // namespace crowdscore::app
