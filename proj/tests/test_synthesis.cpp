#include "igaiva/error.hpp"
#include "igaiva/synthesis.hpp"
#include "igaiva/template_corpus.hpp"
#include "igaiva/util.hpp"

#include <atomic>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "support.hpp"

using namespace igaiva;
using namespace igaiva::synthesis;
using nlohmann::json;

namespace {

struct Fixture {
    corpus::Dataset ds;
    corpus::SplitAssignment split;

    Fixture() {
        corpus::TemplateCorpusConfig cfg;
        cfg.num_classes = 4;
        cfg.class_sizes = {40};
        ds = corpus::generate_template_corpus(cfg);
        split = corpus::stratified_split(ds, 0.25, 5);
    }

    std::vector<std::string> train_of(const std::string& label, std::size_t n) const {
        std::vector<std::string> out;
        for (const auto& id : ds.class_index().at(label)) {
            if (split.train_ids.count(id) && out.size() < n) out.push_back(id);
        }
        return out;
    }
    std::string a_test_id() const { return *split.test_ids.begin(); }
};

// Stand-in for a chat-completions endpoint.
class FakeChatServer {
public:
    std::atomic<int> calls{0};
    int fail_first = 0;
    int status = 200;
    std::string content = "1. Primer mensaje nuevo\n2) Segundo mensaje nuevo\n- Tercero\n\n* Cuarto";
    json last_body;
    std::string last_auth;
    std::mutex mu;

    FakeChatServer() {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            const int call = ++calls;
            {
                std::lock_guard lock(mu);
                last_body = json::parse(req.body);
                last_auth = req.get_header_value("Authorization");
            }
            if (call <= fail_first) {
                res.status = 503;
                return;
            }
            res.status = status;
            json reply{{"choices", json::array({{{"message", {{"role", "assistant"}, {"content", content}}}}})}};
            res.set_content(reply.dump(), "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~FakeChatServer() {
        server_.stop();
        thread_.join();
    }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

RemoteConfig remote(const FakeChatServer& s) {
    RemoteConfig c;
    c.base_url = s.url();
    c.model = "test-model";
    c.api_key = "secret";
    c.backoff = std::chrono::milliseconds(1);
    c.timeout = std::chrono::seconds(5);
    return c;
}

}  // namespace

TEST_CASE("generation defaults") {
    const GenerationParams p;
    CHECK(p.temperature == 0.7);
    CHECK(p.max_tokens == 550);
    CHECK(p.top_p == 0.5);
    CHECK(p.frequency_penalty == 0.3);
    CHECK(p.presence_penalty == 0.0);
    CHECK(p.k == 5);
    CHECK_NOTHROW(p.validate());
    auto bad = p;
    bad.k = 0;
    CHECK_THROWS_AS(bad.validate(), UsageError);
    bad = p;
    bad.top_p = 0.0;
    CHECK_THROWS_AS(bad.validate(), UsageError);
    bad = p;
    bad.temperature = -0.1;
    CHECK_THROWS_AS(bad.validate(), UsageError);
}

TEST_CASE("region selection keeps training ids of the class in dataset order") {
    const Fixture f;
    projection::Embedding2D emb;
    for (std::size_t i = 0; i < f.ds.size(); ++i) {
        emb.ids.push_back(f.ds.messages()[i].id);
        emb.points.push_back({static_cast<double>(i), 0.0});
    }
    const heatmap::Region everything = heatmap::Rectangle{-1, -1, 1e6, 1};
    const auto all = select_examples_in_region(f.ds, f.split, emb, everything);
    CHECK(all.size() == f.split.train_ids.size());
    const auto t2 = select_examples_in_region(f.ds, f.split, emb, everything, std::string("T2"));
    CHECK(t2.size() == 30);
    for (std::size_t i = 1; i < t2.size(); ++i) CHECK(t2[i - 1] < t2[i]);
    const heatmap::Region left = heatmap::HalfPlane{heatmap::DivisionLine::vertical(39.5), heatmap::Side::a};
    const auto first_class = select_examples_in_region(f.ds, f.split, emb, left);
    for (const auto& id : first_class) CHECK(f.ds.at(id).label == "T1");

    CHECK_THROWS_AS(select_examples_in_region(f.ds, f.split, emb, everything, std::string("T99")), UsageError);
    emb.ids[0] = "ghost";
    CHECK_THROWS_AS(select_examples_in_region(f.ds, f.split, emb, everything), UsageError);
}

TEST_CASE("keyword selection tokenizes the terms like the messages") {
    corpus::Dataset d("k", {{"1", "El Router falla", "A"}, {"2", "factura pendiente", "A"},
                             {"3", "router nuevo", "A"}, {"4", "router roto", "B"}});
    corpus::SplitAssignment s;
    s.train_ids = {"1", "2", "4"};
    s.test_ids = {"3"};
    const std::vector<std::string> terms{"ROUTER!"};
    CHECK(select_examples_by_keywords(d, s, "A", terms) == std::vector<std::string>{"1"});
    CHECK_THROWS_AS(select_examples_by_keywords(d, s, "A", std::vector<std::string>{}), UsageError);
    CHECK_THROWS_AS(select_examples_by_keywords(d, s, "Q", terms), UsageError);
}

TEST_CASE("random selection is seeded, distinct and bounded") {
    const Fixture f;
    const auto a = select_examples_random(f.ds, f.split, "T3", 10, 4);
    CHECK(a.size() == 10);
    CHECK(std::set<std::string>(a.begin(), a.end()).size() == 10);
    CHECK(select_examples_random(f.ds, f.split, "T3", 10, 4) == a);
    CHECK(select_examples_random(f.ds, f.split, "T3", 10, 5) != a);
    for (const auto& id : a) {
        CHECK(f.split.train_ids.count(id));
        CHECK(f.ds.at(id).label == "T3");
    }
    CHECK(select_examples_random(f.ds, f.split, "T3", 30, 1).size() == 30);
    CHECK_THROWS_AS(select_examples_random(f.ds, f.split, "T3", 31, 1), UsageError);
    CHECK_THROWS_AS(select_examples_random(f.ds, f.split, "T3", 0, 1), UsageError);
}

TEST_CASE("mock generator produces distinct, reproducible variants") {
    const MockGenerator gen(3);
    CHECK(gen.id() == "mock:3");
    const corpus::Message ex{"e1", "Hola, tengo un problema con la factura, saludos.", "T2"};
    const auto r = gen.generate(ex, {});
    CHECK(!r.failure);
    REQUIRE(r.texts.size() == 5);
    std::set<std::string> uniq(r.texts.begin(), r.texts.end());
    CHECK(uniq.size() == 5);
    CHECK(!uniq.count(ex.text));
    CHECK(gen.generate(ex, {}).texts == r.texts);
    CHECK(MockGenerator(4).generate(ex, {}).texts != r.texts);
    CHECK(!r.prompt_hash.empty());
}

TEST_CASE("mock generator reports when no perturbation exists") {
    const MockGenerator gen(1, {});
    const corpus::Message single{"e", "una sola clausula", "A"};
    const auto r = gen.generate(single, {});
    CHECK(r.texts.empty());
    CHECK(r.failure);
    const corpus::Message blank{"e", " , . ", "A"};
    CHECK(gen.generate(blank, {}).failure);
}

TEST_CASE("property: mock variants never repeat the example or each other") {
    const Fixture f;
    const MockGenerator gen(9);
    GenerationParams p;
    for (std::size_t k : {1u, 3u, 8u}) {
        p.k = k;
        for (const auto& m : f.ds.messages()) {
            const auto r = gen.generate(m, p);
            CHECK(r.texts.size() <= k);
            std::set<std::string> uniq(r.texts.begin(), r.texts.end());
            CHECK(uniq.size() == r.texts.size());
            CHECK(!uniq.count(m.text));
        }
    }
}

TEST_CASE("synthesize labels, numbers and records provenance") {
    const Fixture f;
    SynthesisRequest req;
    req.label = "T1";
    req.example_ids = f.train_of("T1", 4);
    req.run_id = "run-a";
    const auto batch = synthesize(req, f.ds, f.split, MockGenerator(1));
    CHECK(batch.size() == 20);
    CHECK(batch.generator_id == "mock:1");
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& m = batch.messages[i];
        CHECK(m.id == "run-a/" + std::to_string(i + 1));
        CHECK(m.label == "T1");
        CHECK(m.origin == corpus::Origin::synthetic);
        REQUIRE(m.provenance);
        CHECK(m.provenance->generator_id == "mock:1");
        CHECK(m.provenance->example_ids.size() == 1);
    }
    CHECK(batch.messages[0].provenance->example_ids[0] == req.example_ids[0]);
    CHECK(synthesize(req, f.ds, f.split, MockGenerator(1)).messages == batch.messages);

    testutil::TempDir dir("batch");
    batch.save(dir / "run-a.jsonl");
    CHECK(std::filesystem::exists(dir / "run-a.manifest.json"));
    const auto back = SyntheticBatch::load(dir / "run-a.jsonl");
    CHECK(back.messages == batch.messages);
    CHECK(back.request.example_ids == req.example_ids);
    CHECK(back.request.params == req.params);
    const auto manifest = json::parse(read_file(dir / "run-a.manifest.json"));
    CHECK(manifest["count"] == 20);
    CHECK(manifest["schema"] == "igaiva.batch/1");
    write_file(dir / "run-a.jsonl", corpus::to_jsonl(corpus::Dataset("x", {batch.messages[0]})));
    CHECK_THROWS_AS(SyntheticBatch::load(dir / "run-a.jsonl"), DataError);
    CHECK(manifest_path_for("a/b.jsonl") == "a/b.manifest.json");
    CHECK(manifest_path_for("a/b") == "a/b.manifest.json");
}

TEST_CASE("synthesize guards its inputs") {
    const Fixture f;
    SynthesisRequest req;
    req.label = "T1";
    req.run_id = "r";
    req.example_ids = {f.a_test_id()};
    CHECK_THROWS_AS(synthesize(req, f.ds, f.split, MockGenerator(1)), LeakageError);
    req.example_ids = {"nope"};
    CHECK_THROWS_AS(synthesize(req, f.ds, f.split, MockGenerator(1)), DataError);
    const auto ids = f.train_of("T1", 1);
    req.example_ids = {ids[0], ids[0]};
    CHECK_THROWS_AS(synthesize(req, f.ds, f.split, MockGenerator(1)), UsageError);
    req.example_ids = {};
    CHECK_THROWS_AS(synthesize(req, f.ds, f.split, MockGenerator(1)), UsageError);
    req.example_ids = ids;
    req.run_id = "";
    CHECK_THROWS_AS(synthesize(req, f.ds, f.split, MockGenerator(1)), UsageError);
    req.run_id = "r";
    req.generator = "remote";
    CHECK_THROWS_AS(synthesize(req, f.ds, f.split, MockGenerator(1)), UsageError);

    auto trimmed = f.split;
    trimmed.train_ids.erase(ids[0]);
    req.generator = "mock";
    CHECK_THROWS_AS(synthesize(req, f.ds, trimmed, MockGenerator(1)), UsageError);

    corpus::Dataset one("one", {{"x", "sin cambios", "A"}, {"y", "otra", "A"}});
    corpus::SplitAssignment s1;
    s1.train_ids = {"x"};
    s1.test_ids = {"y"};
    req.label = "A";
    req.example_ids = {"x"};
    CHECK_THROWS_AS(synthesize(req, one, s1, MockGenerator(1, {})), GeneratorError);
}

TEST_CASE("synthesize drops duplicates, blanks and surplus lines") {
    struct Echo final : Generator {
        std::string kind() const override { return "mock"; }
        std::string id() const override { return "echo"; }
        GenerationResult generate(const corpus::Message& ex, const GenerationParams&) const override {
            return {{"nuevo a", "  ", ex.text, "nuevo a", "nuevo b", "nuevo c"}, "h", std::nullopt};
        }
    };
    const Fixture f;
    SynthesisRequest req;
    req.label = "T2";
    req.run_id = "e";
    req.example_ids = f.train_of("T2", 2);
    req.params.k = 2;
    const auto b = synthesize(req, f.ds, f.split, Echo{});
    REQUIRE(b.size() == 3);
    CHECK(b.messages[0].text == "nuevo a");
    CHECK(b.messages[1].text == "nuevo b");
    CHECK(b.messages[2].text == "nuevo c");
    std::map<std::string, int> reasons;
    for (const auto& r : b.rejected) ++reasons[r.reason];
    CHECK(reasons["empty"] == 2);
    CHECK(reasons["duplicate"] == 6);
    CHECK(reasons["surplus"] == 1);
}

TEST_CASE("completion parsing strips list markers") {
    const auto lines = parse_completion_lines("1. uno\n  2) dos \n- tres\n* cuatro\n\xE2\x80\xA2 cinco\n\n10. diez\n2024 fue\n");
    CHECK(lines == std::vector<std::string>{"uno", "dos", "tres", "cuatro", "cinco", "diez", "2024 fue"});
    CHECK(system_prompt(5).find("produce 5 distinct new messages") != std::string::npos);
}

TEST_CASE("remote generator speaks the chat-completions protocol") {
    FakeChatServer server;
    const ChatCompletionGenerator gen(remote(server));
    CHECK(gen.kind() == "remote");
    CHECK(gen.id() == "remote:test-model");
    CHECK(gen.parallelism() == 4);
    const corpus::Message ex{"e1", "Hola, no funciona", "T1"};
    const auto r = gen.generate(ex, {});
    CHECK(r.texts == std::vector<std::string>{"Primer mensaje nuevo", "Segundo mensaje nuevo", "Tercero", "Cuarto"});
    CHECK(!r.failure);
    CHECK(server.last_auth == "Bearer secret");
    const auto& body = server.last_body;
    CHECK(body["model"] == "test-model");
    CHECK(body["temperature"] == 0.7);
    CHECK(body["max_tokens"] == 550);
    CHECK(body["top_p"] == 0.5);
    CHECK(body["frequency_penalty"] == 0.3);
    CHECK(body["presence_penalty"] == 0.0);
    CHECK(body["messages"][0]["role"] == "system");
    CHECK(body["messages"][1]["content"] == "Hola, no funciona");
    CHECK(r.prompt_hash == to_hex(fnv1a64(gen.request_body(ex, {}))));
}

TEST_CASE("remote generator retries transient failures then gives up") {
    FakeChatServer server;
    server.fail_first = 2;
    auto cfg = remote(server);
    const corpus::Message ex{"e1", "Hola", "T1"};
    CHECK(ChatCompletionGenerator(cfg).generate(ex, {}).texts.size() == 4);
    CHECK(server.calls == 3);

    server.calls = 0;
    server.fail_first = 100;
    CHECK_THROWS_AS(ChatCompletionGenerator(cfg).generate(ex, {}), GeneratorError);
    CHECK(server.calls == 4);

    server.fail_first = 0;
    server.content = "\n\n";
    CHECK(ChatCompletionGenerator(cfg).generate(ex, {}).failure);
}

TEST_CASE("remote generator configuration checks") {
    RemoteConfig c;
    c.model = "m";
    CHECK_THROWS_AS(ChatCompletionGenerator{c}, UsageError);
    c.base_url = "ftp://x";
    CHECK_THROWS_AS(ChatCompletionGenerator{c}, UsageError);
    c.base_url = "http://127.0.0.1:1";
    c.model = "";
    CHECK_THROWS_AS(ChatCompletionGenerator{c}, UsageError);
    c.model = "m";
    c.retries = 0;
    c.timeout = std::chrono::seconds(1);
    const corpus::Message ex{"e1", "Hola", "T1"};
    CHECK_THROWS_AS(ChatCompletionGenerator(c).generate(ex, {}), GeneratorError);
}

TEST_CASE("synthesize runs a parallel remote generator in example order") {
    FakeChatServer server;
    server.content = "uno\ndos";
    const Fixture f;
    SynthesisRequest req;
    req.label = "T1";
    req.run_id = "rem";
    req.generator = "remote";
    req.example_ids = f.train_of("T1", 6);
    req.params.k = 2;
    const auto b = synthesize(req, f.ds, f.split, ChatCompletionGenerator(remote(server)));
    // Identical completions for every example: only the first pair survives dedup.
    CHECK(b.size() == 2);
    CHECK(b.messages[0].provenance->example_ids[0] == req.example_ids[0]);
    CHECK(b.rejected.size() == 10);
    for (const auto& r : b.rejected) CHECK(r.reason == "duplicate");
    CHECK(b.generator_id == "remote:test-model");
}
