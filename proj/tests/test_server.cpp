#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "crowdscore/io.hpp"
#include "crowdscore/server.hpp"

using namespace crowdscore;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::vector<GroundTruthImage> server_test_pool(int n) {
    std::vector<GroundTruthImage> pool;
    for (int i = 0; i < n; ++i) {
        GroundTruthImage img;
        char buf[16];
        std::snprintf(buf, sizeof buf, "tq%03d", i + 1);
        img.image_id = buf;
        img.patient_id = "test";
        img.true_label = ClassLabel::from_letter('A', Scheme::FourClass);
        pool.push_back(img);
    }
    return pool;
}

std::vector<std::string> server_images(int n) {
    std::vector<std::string> out;
    for (int i = 0; i < n; ++i) {
        char buf[16];
        std::snprintf(buf, sizeof buf, "img%03d", i + 1);
        out.push_back(buf);
    }
    return out;
}

struct ServerFixture {
    fs::path log_path;
    qc::JobEngine engine;
    app::JobService service;
    httplib::Client client;

    ServerFixture()
        : log_path(fs::temp_directory_path() /
                   ("crowdscore-server-" + std::to_string(::getpid()) + ".csv")),
          engine(qc::JobConfig{}, qc::JobKind::ImageLabeling, server_test_pool(40),
                 server_images(60), 7),
          service(engine, log_path),
          client("127.0.0.1", (service.start(0), service.port())) {
        client.set_connection_timeout(5);
    }
    ~ServerFixture() {
        service.stop();
        std::error_code ec;
        fs::remove(log_path, ec);
    }
};

json body_of(const httplib::Result& res) {
    REQUIRE(res);
    return json::parse(res->body);
}

} // namespace

TEST_CASE("service runs the full quiz-and-work flow") {
    ServerFixture fx;

    // register -> quiz task with 5 structurally identical slots
    auto reg = fx.client.Post("/v1/contributors", json{{"contributor_id", "alice"}}.dump(),
                              "application/json");
    REQUIRE(reg);
    CHECK(reg->status == 200);
    json regj = json::parse(reg->body);
    CHECK(regj["contributor"]["status"] == "in_quiz");
    json task = regj["task"];
    CHECK(task["mode"] == "quiz");
    REQUIRE(task["slots"].size() == 5);
    for (const auto& slot : task["slots"]) {
        CHECK(slot.size() == 1); // image_id only, no test marker
        CHECK(slot.contains("image_id"));
    }

    // answer every quiz question with the true label A in >= 10 s
    json answers = json::array();
    for (int i = 0; i < 5; ++i) answers.push_back("A");
    auto sub = fx.client.Post("/v1/tasks/" + task["task_id"].get<std::string>() + "/judgments",
                              json{{"contributor_id", "alice"},
                                   {"elapsed_seconds", 25.0},
                                   {"answers", answers}}
                                  .dump(),
                              "application/json");
    json subj = body_of(sub);
    CHECK(sub->status == 200);
    CHECK(subj["verdict"] == "quiz_passed");
    CHECK(subj["contributor"]["status"] == "active");
    CHECK(subj["contributor"]["trust"] == doctest::Approx(1.0));

    // fetch a work task and submit labels
    auto get = fx.client.Get("/v1/contributors/alice/task");
    json work = body_of(get)["task"];
    CHECK(work["mode"] == "work");
    REQUIRE(work["slots"].size() == 5);
    json wanswers = json::array();
    for (int i = 0; i < 5; ++i) wanswers.push_back("B");
    auto wsub = fx.client.Post("/v1/tasks/" + work["task_id"].get<std::string>() + "/judgments",
                               json{{"contributor_id", "alice"},
                                    {"elapsed_seconds", 40.0},
                                    {"answers", wanswers}}
                                   .dump(),
                               "application/json");
    CHECK(body_of(wsub)["verdict"] == "accepted");

    // progress and results reflect the submission
    auto prog = body_of(fx.client.Get("/v1/job/progress"));
    CHECK(prog["valid_judgments"] == 4);
    CHECK(prog["contributors"] == 1);
    auto results = body_of(fx.client.Get("/v1/job/results?method=cv"));
    CHECK(results["images"].size() == 4);
    for (const auto& img : results["images"]) CHECK(img["label"] == "B");

    // the log file on disk is the canonical CSV
    auto log = io::ingest_label_judgments(fx.log_path);
    CHECK(log.size() == 10);
}

TEST_CASE("service maps domain errors to machine-readable codes") {
    ServerFixture fx;
    fx.client.Post("/v1/contributors", json{{"contributor_id", "bob"}}.dump(),
                   "application/json");

    // duplicate registration
    auto dup = fx.client.Post("/v1/contributors", json{{"contributor_id", "bob"}}.dump(),
                              "application/json");
    REQUIRE(dup);
    CHECK(dup->status == 409);
    CHECK(json::parse(dup->body)["error"]["code"] == "already_registered");

    // wrong answer arity
    auto task = body_of(fx.client.Get("/v1/contributors/bob/task"))["task"];
    auto bad = fx.client.Post("/v1/tasks/" + task["task_id"].get<std::string>() + "/judgments",
                              json{{"contributor_id", "bob"},
                                   {"elapsed_seconds", 30.0},
                                   {"answers", json::array({"A", "B", "C"})}}
                                  .dump(),
                              "application/json");
    REQUIRE(bad);
    CHECK(bad->status == 400);
    CHECK(json::parse(bad->body)["error"]["code"] == "malformed_submission");

    // unknown contributor
    auto missing = fx.client.Get("/v1/contributors/ghost/task");
    REQUIRE(missing);
    CHECK(missing->status == 404);
    CHECK(json::parse(missing->body)["error"]["code"] == "not_found");

    // excluded contributor cannot fetch tasks
    json fail_answers = json::array();
    for (int i = 0; i < 5; ++i) fail_answers.push_back("D");
    fx.client.Post("/v1/tasks/" + task["task_id"].get<std::string>() + "/judgments",
                   json{{"contributor_id", "bob"},
                        {"elapsed_seconds", 30.0},
                        {"answers", fail_answers}}
                       .dump(),
                   "application/json");
    auto blocked = fx.client.Get("/v1/contributors/bob/task");
    REQUIRE(blocked);
    CHECK(blocked->status == 403);
    CHECK(json::parse(blocked->body)["error"]["code"] == "not_eligible");

    // malformed JSON body
    auto garbage = fx.client.Post("/v1/contributors", "{oops", "application/json");
    REQUIRE(garbage);
    CHECK(garbage->status == 400);
}

TEST_CASE("concurrent clients never oversubscribe an image") {
    ServerFixture fx;
    const int n_clients = 8;
    std::vector<std::thread> threads;
    std::atomic<int> failures{0};

    for (int c = 0; c < n_clients; ++c) {
        threads.emplace_back([&fx, c, &failures] {
            httplib::Client client("127.0.0.1", fx.service.port());
            client.set_connection_timeout(5);
            std::string id = "par" + std::to_string(c);
            auto reg = client.Post("/v1/contributors", json{{"contributor_id", id}}.dump(),
                                   "application/json");
            if (!reg || reg->status != 200) {
                ++failures;
                return;
            }
            json task = json::parse(reg->body)["task"];
            for (int round = 0; round < 30; ++round) {
                json answers = json::array();
                for (std::size_t i = 0; i < task["slots"].size(); ++i) answers.push_back("A");
                auto sub = client.Post(
                    "/v1/tasks/" + task["task_id"].get<std::string>() + "/judgments",
                    json{{"contributor_id", id}, {"elapsed_seconds", 30.0}, {"answers", answers}}
                        .dump(),
                    "application/json");
                if (!sub || sub->status != 200) {
                    ++failures;
                    return;
                }
                auto next = client.Get("/v1/contributors/" + id + "/task");
                if (!next) {
                    ++failures;
                    return;
                }
                if (next->status != 200) return; // no_work or capped ends the run
                task = json::parse(next->body)["task"];
            }
        });
    }
    for (auto& t : threads) t.join();
    CHECK(failures == 0);

    // accounting stayed linearizable: every image has at most 3 valid labels
    // and aggregate counters match the log on disk
    auto prog = body_of(fx.client.Get("/v1/job/progress"));
    fx.service.stop();
    auto log = io::ingest_label_judgments(fx.log_path);
    std::map<std::string, int> per_image;
    int valid_work = 0;
    for (const auto& rec : io::effective_records(log)) {
        if (rec.is_test || !rec.valid || rec.mode != Mode::Work) continue;
        per_image[rec.image_id] += 1;
        ++valid_work;
    }
    for (const auto& [image, count] : per_image) CHECK(count <= 3);
    CHECK(prog["valid_judgments"].get<int>() == valid_work);
    CHECK(prog["images_complete"].get<int>() ==
          static_cast<int>(std::count_if(per_image.begin(), per_image.end(),
                                         [](const auto& kv) { return kv.second >= 3; })));
}

TEST_CASE("a task cannot be answered by a different contributor") {
    ServerFixture fx;
    auto reg = fx.client.Post("/v1/contributors", json{{"contributor_id", "owner"}}.dump(),
                              "application/json");
    REQUIRE(reg);
    json task = json::parse(reg->body)["task"];
    fx.client.Post("/v1/contributors", json{{"contributor_id", "thief"}}.dump(),
                   "application/json");

    json answers = json::array();
    for (int i = 0; i < 5; ++i) answers.push_back("A");
    auto res = fx.client.Post("/v1/tasks/" + task["task_id"].get<std::string>() + "/judgments",
                              json{{"contributor_id", "thief"},
                                   {"elapsed_seconds", 30.0},
                                   {"answers", answers}}
                                  .dump(),
                              "application/json");
    REQUIRE(res);
    CHECK(res->status == 409);
    CHECK(json::parse(res->body)["error"]["code"] == "stale_task");
}
