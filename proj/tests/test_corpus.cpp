#include <numeric>

#include "igaiva/corpus.hpp"
#include "igaiva/error.hpp"
#include "igaiva/template_corpus.hpp"
#include "igaiva/util.hpp"
#include "support.hpp"

using namespace igaiva;
using namespace igaiva::corpus;

namespace {

Dataset small_dataset() {
    std::vector<Message> ms;
    for (int i = 0; i < 10; ++i) ms.push_back({"a" + std::to_string(i), "texto a " + std::to_string(i), "A"});
    for (int i = 0; i < 5; ++i) ms.push_back({"b" + std::to_string(i), "texto b " + std::to_string(i), "B"});
    return Dataset("small", ms);
}

Message synthetic(const std::string& id, const std::string& label) {
    return {id, "gen " + id, label, Origin::synthetic, Provenance{"mock:1", {"a0"}, "h"}};
}

}  // namespace

TEST_CASE("dataset validates ids, text, labels and provenance") {
    CHECK_THROWS_AS(Dataset("d", {{"", "t", "A"}}), DataError);
    CHECK_THROWS_AS(Dataset("d", {{"x", "", "A"}}), DataError);
    CHECK_THROWS_AS(Dataset("d", {{"x", "t", ""}}), DataError);
    CHECK_THROWS_AS(Dataset("d", {{"x", "t", "A"}, {"x", "u", "A"}}), DataError);
    CHECK_THROWS_AS(Dataset("d", {{"x", "t", "A", Origin::synthetic, std::nullopt}}), DataError);
    CHECK_NOTHROW(Dataset("d", {synthetic("s1", "A")}));
}

TEST_CASE("labels keep first-appearance order") {
    Dataset d("d", {{"1", "t", "Z"}, {"2", "t", "A"}, {"3", "t", "Z"}, {"4", "t", "M"}});
    CHECK(d.labels() == std::vector<std::string>{"Z", "A", "M"});
    CHECK(d.class_index().at("Z") == std::vector<std::string>{"1", "3"});
    const auto s = class_summary(d);
    CHECK(s.total == 4);
    CHECK(s.count_of("Z") == 2);
    CHECK(s.count_of("nope") == 0);
}

TEST_CASE("subset keeps dataset order") {
    const auto d = small_dataset();
    const auto sub = d.subset({"b1", "a3", "a0"}, "sub");
    REQUIRE(sub.size() == 3);
    CHECK(sub.messages()[0].id == "a0");
    CHECK(sub.messages()[1].id == "a3");
    CHECK(sub.messages()[2].id == "b1");
    CHECK_THROWS_AS(d.at("zz"), DataError);
}

TEST_CASE("jsonl round trip preserves messages and provenance") {
    std::vector<Message> ms = small_dataset().messages();
    ms.push_back(synthetic("s1", "B"));
    ms.push_back({"u", "ñandú \"citado\"\n línea", "C"});
    const Dataset d("rt", ms);
    const auto back = parse_jsonl(to_jsonl(d), "rt");
    CHECK(back.messages() == d.messages());

    testutil::TempDir dir("corpus");
    save_jsonl(d, dir / "x.jsonl");
    const auto loaded = load_dataset(dir / "x.jsonl");
    CHECK(loaded.name() == "x");
    CHECK(loaded.messages() == d.messages());
}

TEST_CASE("jsonl errors name the line") {
    const std::string bad = "{\"id\":\"1\",\"text\":\"t\",\"label\":\"A\"}\n\n{\"id\":\"2\",\"text\":\"t\"}\n";
    try {
        parse_jsonl(bad, "bad");
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
    const std::string dup = "{\"id\":\"1\",\"text\":\"t\",\"label\":\"A\"}\n{\"id\":\"1\",\"text\":\"u\",\"label\":\"A\"}\n";
    try {
        parse_jsonl(dup, "dup");
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_jsonl("{not json}\n", "x"), DataError);
    CHECK_THROWS_AS(parse_jsonl("{\"id\":\"1\",\"text\":\"t\",\"label\":\"A\",\"origin\":\"alien\"}\n", "x"),
                    DataError);
}

TEST_CASE("csv handles quoting, embedded newlines and column order") {
    const std::string csv = "label,id,text\r\nA,1,\"hola, \"\"mundo\"\"\"\nB,2,\"dos\nlineas\"\n";
    const auto d = parse_csv(csv, "c");
    REQUIRE(d.size() == 2);
    CHECK(d.messages()[0].text == "hola, \"mundo\"");
    CHECK(d.messages()[0].label == "A");
    CHECK(d.messages()[1].text == "dos\nlineas");
    CHECK_THROWS_AS(parse_csv("id,text\n1,t\n", "c"), DataError);
    CHECK_THROWS_AS(parse_csv("id,text,label\n1,t\n", "c"), DataError);
    CHECK_THROWS_AS(parse_csv("id,text,label\n1,\"open,A\n", "c"), DataError);
    CHECK(format_from_path("x.csv") == Format::csv);
    CHECK(format_from_path("x.jsonl") == Format::jsonl);
    CHECK_THROWS_AS(load_dataset("/nonexistent/file.jsonl"), DataError);
}

TEST_CASE("stratified test count rounds and clamps") {
    CHECK(stratified_test_count(10, 0.2) == 2);
    CHECK(stratified_test_count(2, 0.2) == 1);
    CHECK(stratified_test_count(3, 0.9) == 2);
    CHECK(stratified_test_count(250, 0.2) == 50);
    CHECK(stratified_test_count(180, 0.25) == 45);
    CHECK_THROWS_AS(stratified_test_count(1, 0.2), DataError);
}

TEST_CASE("split ignores synthetic messages and round-trips through json") {
    auto ms = small_dataset().messages();
    ms.push_back(synthetic("s1", "A"));
    const Dataset d("d", ms);
    const auto s = stratified_split(d, 0.2, 3);
    CHECK(s.test_ids.size() == 3);
    CHECK(s.train_ids.size() == 12);
    CHECK(!s.test_ids.count("s1"));
    CHECK(!s.train_ids.count("s1"));
    CHECK_NOTHROW(validate_split(d, s));
    const auto back = split_from_json(split_to_json(s));
    CHECK(back == s);
    CHECK(back.test_fingerprint() == s.test_fingerprint());

    auto bad = s;
    bad.test_ids.insert("s1");
    CHECK_THROWS_AS(validate_split(d, bad), DataError);
    bad = s;
    bad.train_ids.erase(bad.train_ids.begin());
    CHECK_THROWS_AS(validate_split(d, bad), DataError);
    CHECK_THROWS_AS(stratified_split(d, 0.0, 1), UsageError);
    CHECK_THROWS_AS(stratified_split(d, 1.0, 1), UsageError);
    CHECK_THROWS_AS(split_from_json("{\"schema\":\"other\"}"), DataError);
}

TEST_CASE("property: stratified split partitions every class with the clamped count") {
    Rng rng(2024);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t classes = 2 + rng.uniform_index(5);
        std::vector<Message> ms;
        std::map<std::string, std::size_t> sizes;
        for (std::size_t c = 0; c < classes; ++c) {
            const std::size_t n = 2 + rng.uniform_index(60);
            const std::string label = "L" + std::to_string(c);
            sizes[label] = n;
            for (std::size_t i = 0; i < n; ++i)
                ms.push_back({label + "-" + std::to_string(i), "t", label});
        }
        const Dataset d("p", ms);
        const double fraction = 0.05 + 0.9 * rng.uniform01();
        const auto seed = rng.next_u64();
        const auto s = stratified_split(d, fraction, seed);
        CHECK_NOTHROW(validate_split(d, s));
        CHECK(s.train_ids.size() + s.test_ids.size() == d.size());
        for (const auto& [label, n] : sizes) {
            std::size_t test = 0;
            for (const auto& id : d.class_index().at(label)) test += s.test_ids.count(id);
            CHECK(test == stratified_test_count(n, fraction));
        }
        CHECK(stratified_split(d, fraction, seed) == s);
    }
}

TEST_CASE("downsampling keeps the test side and the requested training count") {
    const auto d = small_dataset();
    const auto s = stratified_split(d, 0.2, 1);
    const auto [d2, s2] = downsample_training_class(d, s, "A", 3, 9);
    std::size_t train_a = 0;
    for (const auto& id : d2.class_index().at("A")) train_a += s2.train_ids.count(id);
    CHECK(train_a == 3);
    CHECK(s2.test_ids == s.test_ids);
    CHECK(d2.class_index().at("B").size() == 5);
    CHECK_NOTHROW(validate_split(d2, s2));
    CHECK_THROWS_AS(downsample_training_class(d, s, "A", 0, 9), UsageError);
    CHECK_THROWS_AS(downsample_training_class(d, s, "A", 99, 9), UsageError);
    CHECK_THROWS_AS(downsample_training_class(d, s, "Q", 1, 9), DataError);
}

TEST_CASE("merge reports new labels and rejects id collisions") {
    const auto base = small_dataset();
    const std::vector<Dataset> adds{Dataset("x", {synthetic("s1", "B"), synthetic("s2", "C")})};
    const auto r = merge_datasets(base, adds, "merged");
    CHECK(r.dataset.name() == "merged");
    CHECK(r.dataset.size() == base.size() + 2);
    CHECK(r.new_labels == std::vector<std::string>{"C"});
    CHECK(r.dataset.count(Origin::synthetic) == 2);
    const std::vector<Dataset> clash{Dataset("y", {{"a0", "dup", "A"}})};
    CHECK_THROWS_AS(merge_datasets(base, clash), DataError);
}

TEST_CASE("fifteen-class table sizes total 39,100") {
    const auto sizes = reference_class_sizes();
    REQUIRE(sizes.size() == 15);
    CHECK(std::accumulate(sizes.begin(), sizes.end(), std::size_t{0}) == 39100);
    CHECK(sizes[12] == 180);
    CHECK(builtin_topics().size() == 15);
    CHECK(builtin_topics()[12].label == "T13");
}

TEST_CASE("template corpus is deterministic and honours sizes") {
    TemplateCorpusConfig cfg;
    cfg.class_sizes = {30, 40, 50};
    cfg.num_classes = 3;
    const auto a = generate_template_corpus(cfg);
    const auto b = generate_template_corpus(cfg);
    CHECK(to_jsonl(a) == to_jsonl(b));
    CHECK(a.class_index().at("T1").size() == 30);
    CHECK(a.class_index().at("T3").size() == 50);
    cfg.seed = 8;
    CHECK(to_jsonl(generate_template_corpus(cfg)) != to_jsonl(a));

    cfg.downsample = std::make_pair(std::string("T2"), std::size_t{10});
    CHECK(generate_template_corpus(cfg).class_index().at("T2").size() == 10);
    cfg.downsample = std::make_pair(std::string("T9"), std::size_t{10});
    CHECK_THROWS_AS(generate_template_corpus(cfg), UsageError);
    cfg.downsample.reset();
    cfg.num_classes = 1;
    CHECK_THROWS_AS(generate_template_corpus(cfg), UsageError);
    cfg.num_classes = 3;
    cfg.class_sizes = {1, 2};
    CHECK_THROWS_AS(generate_template_corpus(cfg), UsageError);
}
