#include <chrono>
#include <thread>

#include "igaiva/service.hpp"

#include <httplib.h>
#include <json.hpp>

#include "igaiva/error.hpp"
#include "igaiva/template_corpus.hpp"
#include "support.hpp"

using namespace igaiva;
using nlohmann::json;

namespace {

struct Server {
    testutil::TempDir dir{"svc"};
    workbench::Workbench bench{dir.path()};
    service::Service svc{bench, [] {
                             service::ServiceOptions o;
                             o.port = 0;
                             o.cors_origin = "http://ui.local";
                             return o;
                         }()};
    int port = svc.start();
    httplib::Client client{"127.0.0.1", port};

    Server() { client.set_read_timeout(30, 0); }

    json get(const std::string& path, int expect = 200) {
        auto r = client.Get(path);
        REQUIRE(r);
        CHECK_MESSAGE(r->status == expect, path << " -> " << r->body);
        return r->body.empty() ? json() : json::parse(r->body);
    }

    json post(const std::string& path, const json& body, int expect, const httplib::Headers& h = {}) {
        auto r = client.Post(path, h, body.dump(), "application/json");
        REQUIRE(r);
        CHECK_MESSAGE(r->status == expect, path << " -> " << r->body);
        return json::parse(r->body);
    }

    json wait_job(const std::string& id) {
        for (int i = 0; i < 600; ++i) {
            const auto j = get("/jobs/" + id);
            if (j["state"] == "done" || j["state"] == "failed") return j;
            std::this_thread::sleep_for(std::chrono::milliseconds(50));
        }
        FAIL("job did not finish: " << id);
        return {};
    }

    // Template corpus, split and a finished baseline experiment.
    std::string seed_baseline() {
        post("/datasets", {{"name", "main"}, {"template", {{"num_classes", 3}, {"class_sizes", {50}}}}}, 201);
        post("/split", {{"dataset", "main"}, {"seed", 3}, {"name", "s"}}, 201);
        const auto t = post("/train", {{"dataset", "main"}, {"split", "s"}, {"name", "base"}, {"config", {{"epochs", 10}}}}, 202);
        CHECK(wait_job(t["job"])["state"] == "done");
        return t["experiment"];
    }
};

}  // namespace

TEST_CASE("health, CORS and preflight") {
    Server s;
    const auto h = s.get("/health");
    CHECK(h["status"] == "ok");
    auto r = s.client.Get("/health");
    CHECK(r->get_header_value("Access-Control-Allow-Origin") == "http://ui.local");
    auto pre = s.client.Options("/train");
    REQUIRE(pre);
    CHECK(pre->status == 204);
    CHECK(pre->get_header_value("Access-Control-Allow-Headers").find("Idempotency-Key") != std::string::npos);
    CHECK(s.get("/session")["experiment"].is_null());
}

TEST_CASE("dataset import, listing and error statuses") {
    Server s;
    const auto d = s.post("/datasets", {{"name", "main"}, {"template", {{"num_classes", 2}, {"class_sizes", {20}}}}}, 201);
    CHECK(d["size"] == 40);
    CHECK(d["main"] == true);
    CHECK(d["origin"] == "collected");
    CHECK(d["classes"].size() == 2);
    const auto csv = s.post("/datasets", {{"name", "c"}, {"format", "csv"}, {"content", "id,text,label\nx,hola mundo,A\n"}}, 201);
    CHECK(csv["size"] == 1);
    const auto list = s.get("/datasets");
    CHECK(list["main"] == "main");
    CHECK(list["datasets"].size() == 2);
    CHECK(list["capacity"] == 20);

    const auto bad = s.post("/datasets", {{"name", "j"}, {"content", "{\"id\":1}\n"}}, 422);
    CHECK(bad["kind"] == "data");
    CHECK(s.post("/datasets", {{"content", "x"}}, 400)["kind"] == "usage");
    auto raw = s.client.Post("/split", "{not json", "application/json");
    CHECK(raw->status == 400);

    auto del = s.client.Delete("/datasets/main");
    CHECK(del->status == 400);
    del = s.client.Delete("/datasets/c");
    CHECK(del->status == 200);
    CHECK(s.get("/datasets")["datasets"].size() == 1);
}

TEST_CASE("split, train, projection, heatmap and reports") {
    Server s;
    const auto exp = s.seed_baseline();
    CHECK(exp == "exp-0001");
    const auto job = s.get("/jobs/job-0001");
    CHECK(job["kind"] == "train");
    CHECK(job["progress"] == 1.0);
    CHECK(job["experiment"] == exp);
    CHECK(s.get("/jobs/job-0042", 400)["kind"] == "usage");

    const auto p = s.get("/projection?experiment=" + exp);
    CHECK(p["method"] == "pca(0,1)");
    CHECK(p["points"].size() == 150);
    std::size_t train = 0, judged = 0;
    for (const auto& pt : p["points"]) {
        if (pt["role"] == "train") ++train;
        if (pt["role"] == "test_correct" || pt["role"] == "test_incorrect") ++judged;
    }
    CHECK(train == 120);
    CHECK(judged == 30);
    const auto focus = s.get("/projection?dataset=main&split=s&label=T1");
    std::size_t other = 0;
    for (const auto& pt : focus["points"])
        if (pt["role"] == "other") ++other;
    CHECK(other == 100);
    s.get("/projection?dataset=main", 400);
    s.get("/projection?experiment=" + std::string(exp) + "&method=umap", 400);

    const auto hm = s.get("/heatmap?experiment=" + std::string(exp) + "&grid=16&epsilon=0.3");
    CHECK(hm["width"] == 16);
    CHECK(hm["value"].size() == 256);
    CHECK(hm["confidence"].size() == 256);
    CHECK(hm["epsilon"] == 0.3);
    for (const auto& v : hm["value"]) CHECK((v.get<double>() >= 0.0 && v.get<double>() <= 1.0));
    s.get("/heatmap?experiment=" + std::string(exp) + "&grid=abc", 400);
    s.get("/heatmap", 400);
    const auto session = s.get("/session");
    CHECK(session["experiment"] == exp);
    CHECK(session["heatmap"]["grid"] == 16);

    const auto reports = s.get("/reports");
    REQUIRE(reports["experiments"].size() == 1);
    CHECK(reports["experiments"][0]["status"] == "complete");
    CHECK(reports["experiments"][0].contains("overall_recall"));
    const auto rep = s.get("/reports/" + std::string(exp));
    CHECK(rep["schema"] == "igaiva.report/1");

    const auto tm = s.get("/tagtreemap?experiment=" + std::string(exp) + "&top_k=3");
    CHECK(tm["schema"] == "igaiva.treemap/1");
    CHECK(tm["cells"].size() == 3);
    const auto outcome = s.get("/tagtreemap?experiment=" + std::string(exp) + "&group=outcome");
    CHECK(outcome["cells"].size() >= 1);
    s.get("/tagtreemap?dataset=main&split=s&group=outcome", 400);
}

TEST_CASE("selection, synthesis job, merge and comparison") {
    Server s;
    const auto base = s.seed_baseline();
    const auto rnd = s.post("/select", {{"experiment", base}, {"mode", "random"}, {"label", "T2"}, {"n", 3}}, 200);
    CHECK(rnd["count"] == 3);
    const auto kw = s.post("/select", {{"experiment", base}, {"mode", "keywords"}, {"label", "T2"}, {"terms", {"zzzz"}}}, 200);
    CHECK(kw["count"] == 0);
    CHECK(kw["warning"] == "empty selection");
    const auto region = s.post("/select",
                               {{"experiment", base},
                                {"mode", "region"},
                                {"region", {{"type", "rectangle"}, {"x_min", -1e9}, {"y_min", -1e9}, {"x_max", 1e9}, {"y_max", 1e9}}}},
                               200);
    CHECK(region["count"] == 120);
    s.post("/select", {{"experiment", base}, {"mode", "region"}, {"region", {{"type", "circle"}}}}, 400);
    s.post("/select", {{"experiment", base}, {"mode", "magic"}}, 400);

    // A test message as an example is refused before a job is queued.
    const auto points = s.get("/projection?experiment=" + std::string(base))["points"];
    std::string test_id;
    for (const auto& p : points)
        if (p["split"] == "test") test_id = p["id"];
    const auto leak = s.post("/synthesize", {{"experiment", base}, {"label", "T2"}, {"example_ids", {test_id}}}, 409);
    CHECK(leak["kind"] == "leakage");

    const auto syn = s.post("/synthesize", {{"experiment", base}, {"label", "T2"}, {"example_ids", rnd["ids"]}, {"run_id", "r1"}}, 202);
    CHECK(syn["run_id"] == "r1");
    const auto done = s.wait_job(syn["job"]);
    CHECK(done["state"] == "done");
    CHECK(done["result"] == "r1");
    CHECK(s.get("/datasets")["batches"] == json::array({"r1"}));

    auto events = s.client.Get("/jobs/" + done["id"].get<std::string>() + "/events");
    REQUIRE(events);
    CHECK(events->get_header_value("Content-Type") == "text/event-stream");
    CHECK(events->body.find("id: 0\ndata:") != std::string::npos);
    CHECK(events->body.find("\"message\":\"done\"") != std::string::npos);
    CHECK(events->body.find("event: end") != std::string::npos);

    const auto again = s.post("/synthesize", {{"experiment", base}, {"label", "T2"}, {"example_ids", rnd["ids"]}, {"run_id", "r1"}}, 202);
    CHECK(s.wait_job(again["job"])["state"] == "failed");

    const auto merged = s.post("/merge", {{"name", "m"}, {"base", "main"}, {"others", {"r1"}}}, 201);
    CHECK(merged["size"].get<int>() > 150);

    const auto t = s.post("/train", {{"dataset", "main"}, {"split", "s"}, {"batches", {"r1"}}, {"baseline", base}, {"name", "aug"}, {"config", {{"epochs", 10}}}}, 202);
    CHECK(s.wait_job(t["job"])["state"] == "done");
    const auto cmp = s.get("/reports/compare?baseline=" + std::string(base) + "&ids=" + t["experiment"].get<std::string>());
    REQUIRE(cmp["columns"].size() == 1);
    CHECK(cmp["columns"][0]["name"] == "aug");
    CHECK(cmp["columns"][0]["overall"]["test_count"] == 30);
    CHECK(cmp["markdown"].get<std::string>().find("| Overall |") != std::string::npos);
    s.get("/reports/compare?baseline=" + std::string(base), 400);
    s.post("/train", {{"dataset", "main"}, {"split", "nope"}}, 400);
}

TEST_CASE("idempotency keys replay the first response") {
    Server s;
    s.post("/datasets", {{"name", "main"}, {"template", {{"num_classes", 2}, {"class_sizes", {20}}}}}, 201);
    const httplib::Headers key{{"Idempotency-Key", "k1"}};
    const auto first = s.post("/split", {{"dataset", "main"}, {"seed", 1}}, 201, key);
    auto second = s.client.Post("/split", key, json{{"dataset", "main"}, {"seed", 1}}.dump(), "application/json");
    REQUIRE(second);
    CHECK(second->status == 201);
    CHECK(second->get_header_value("Idempotent-Replay") == "true");
    CHECK(json::parse(second->body) == first);

    const auto bad1 = s.post("/split", {{"dataset", "ghost"}}, 400, {{"Idempotency-Key", "k2"}});
    auto bad2 = s.client.Post("/split", {{"Idempotency-Key", "k2"}}, json{{"dataset", "ghost"}}.dump(), "application/json");
    CHECK(bad2->status == 400);
    CHECK(json::parse(bad2->body) == bad1);
    std::size_t splits = 0;
    for (const auto& e : std::filesystem::directory_iterator(s.bench.store().root() / "splits")) splits += e.is_regular_file();
    CHECK(splits == 1);
}

TEST_CASE("dataset listing on the fifteen-class fixture") {
    Server s;
    s.post("/datasets",
           {{"name", "main"}, {"template", {{"num_classes", 15}, {"class_sizes", corpus::reference_class_sizes()}}}}, 201);
    const auto list = s.get("/datasets");
    REQUIRE(list["datasets"].size() == 1);
    CHECK(list["datasets"][0]["classes"].size() == 15);
    CHECK(list["datasets"][0]["total"] == 39100);
}

TEST_CASE("a busy port is refused") {
    Server s;
    testutil::TempDir other("svc2");
    workbench::Workbench bench(other.path());
    service::ServiceOptions o;
    o.port = s.port;
    service::Service second(bench, o);
    CHECK_THROWS_AS(second.bind(), UsageError);
}
