#include <cmath>

#include "igaiva/error.hpp"
#include "igaiva/features.hpp"
#include "igaiva/text.hpp"
#include "igaiva/util.hpp"
#include "support.hpp"

using namespace igaiva;
using namespace igaiva::features;

TEST_CASE("fnv1a64 matches the published test vectors") {
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
    CHECK(to_hex(0xabcULL) == "0000000000000abc");
}

TEST_CASE("format_double round-trips") {
    Rng rng(5);
    for (int i = 0; i < 1000; ++i) {
        const double v = (rng.uniform01() - 0.5) * std::pow(10.0, static_cast<double>(rng.uniform_index(40)) - 20.0);
        CHECK(std::strtod(format_double(v).c_str(), nullptr) == v);
    }
    CHECK(format_double(0.1) == "0.1");
    CHECK(format_double(1.0) == "1");
}

TEST_CASE("rng is reproducible and uniform_index stays in range") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    Rng r(1);
    std::vector<int> hits(7, 0);
    for (int i = 0; i < 7000; ++i) {
        const auto k = r.uniform_index(7);
        REQUIRE(k < 7);
        ++hits[k];
    }
    for (int h : hits) CHECK(h > 800);
}

TEST_CASE("utf8 decoding and case folding") {
    CHECK(text::lowercase("ÑANDÚ Straße ΣΑΣ ДОМ") == "ñandú straße σασ дом");
    const auto cps = text::decode_utf8("a\xff" "b");
    REQUIRE(cps.size() == 3);
    CHECK(cps[1] == U'�');
    CHECK(text::encode_utf8(text::decode_utf8("€ñ")) == "€ñ");
}

TEST_CASE("tokenizer lowercases, splits on punctuation and drops stopwords") {
    CHECK(tokenize("Hola, NO funciona el Router!!") == std::vector<std::string>{"hola", "funciona", "router"});
    TokenizerConfig keep;
    keep.stopwords = Stopwords::none;
    keep.min_token_length = 1;
    CHECK(tokenize("a b-c", keep) == std::vector<std::string>{"a", "b", "c"});
    TokenizerConfig en;
    en.stopwords = Stopwords::english;
    CHECK(tokenize("the de router", en) == std::vector<std::string>{"de", "router"});
    TokenizerConfig cased;
    cased.lowercase = false;
    CHECK(tokenize("Hola Mundo", cased) == std::vector<std::string>{"Hola", "Mundo"});
    CHECK(parse_stopwords("es+en") == Stopwords::spanish_english);
    CHECK_THROWS_AS(parse_stopwords("fr"), UsageError);
}

TEST_CASE("tf-idf weights match a hand computation") {
    // df: router 2, lento 1, cable 2, caido 1 over N = 3 documents.
    const std::vector<std::string> docs{"router lento router", "cable caido", "router cable"};
    const auto model = fit_tfidf(docs, {}, "hand");
    REQUIRE(model.vocabulary().terms == std::vector<std::string>{"cable", "caido", "lento", "router"});
    const double idf2 = std::log(4.0 / 3.0) + 1.0;
    const double idf1 = std::log(4.0 / 2.0) + 1.0;
    CHECK(model.idf()[0] == doctest::Approx(idf2).epsilon(1e-15));
    CHECK(model.idf()[1] == doctest::Approx(idf1).epsilon(1e-15));

    const auto v = model.transform("router lento router");
    REQUIRE(v.indices == std::vector<std::uint32_t>{2, 3});
    const double w_lento = idf1, w_router = 2.0 * idf2;
    const double norm = std::sqrt(w_lento * w_lento + w_router * w_router);
    CHECK(v.values[0] == doctest::Approx(w_lento / norm).epsilon(1e-14));
    CHECK(v.values[1] == doctest::Approx(w_router / norm).epsilon(1e-14));
    CHECK(model.transform("nada conocido").nnz() == 0);
}

TEST_CASE("min_df and max_features prune the vocabulary") {
    const std::vector<std::string> docs{"alfa beta", "alfa gamma", "alfa beta delta"};
    TfidfConfig cfg;
    cfg.min_df = 2;
    CHECK(fit_tfidf(docs, cfg).vocabulary().terms == std::vector<std::string>{"alfa", "beta"});
    cfg.min_df = 1;
    cfg.max_features = 2;
    CHECK(fit_tfidf(docs, cfg).vocabulary().terms == std::vector<std::string>{"alfa", "beta"});
    cfg.min_df = 5;
    CHECK_THROWS_AS(fit_tfidf(docs, cfg), DataError);
    CHECK_THROWS_AS(fit_tfidf(std::vector<std::string>{}), DataError);
    cfg = {};
    cfg.min_df = 0;
    CHECK_THROWS_AS(fit_tfidf(docs, cfg), UsageError);
}

TEST_CASE("fitting on a split uses training messages only") {
    corpus::Dataset d("d", {{"1", "alfa comun", "A"}, {"2", "beta comun", "B"}, {"3", "secreto comun", "A"},
                             {"4", "gamma comun", "B"}});
    corpus::SplitAssignment s;
    s.train_ids = {"1", "2", "4"};
    s.test_ids = {"3"};
    const auto m = fit_tfidf(d, s);
    CHECK(!m.vocabulary().find("secreto"));
    CHECK(m.vocabulary().find("alfa"));
    CHECK(m.num_documents() == 3);
    CHECK(m.vocabulary().fitted_on.rfind("d@", 0) == 0);
    const auto fm = featurize(m, d);
    CHECK(fm.size() == 4);
    CHECK(fm.dim == m.dim());
    const auto some = featurize(m, d, {"4", "1"});
    CHECK(some.ids == std::vector<std::string>{"4", "1"});
}

TEST_CASE("property: rows are unit norm with increasing indices") {
    Rng rng(11);
    const std::vector<std::string> words{"router", "cable", "fibra", "factura", "pago", "cuenta", "clave",
                                         "acceso", "correo", "remoto", "lento", "caido"};
    auto random_doc = [&] {
        std::string s;
        const auto n = 1 + rng.uniform_index(8);
        for (std::size_t i = 0; i < n; ++i) s += words[rng.uniform_index(words.size())] + " ";
        return s;
    };
    std::vector<std::string> docs;
    for (int i = 0; i < 50; ++i) docs.push_back(random_doc());
    const auto model = fit_tfidf(docs);
    for (int i = 0; i < 300; ++i) {
        const auto v = model.transform(random_doc());
        CHECK(v.squared_norm() == doctest::Approx(1.0).epsilon(1e-12));
        for (std::size_t k = 1; k < v.nnz(); ++k) CHECK(v.indices[k - 1] < v.indices[k]);
        for (double w : v.values) CHECK(w > 0.0);
    }
}

TEST_CASE("tf-idf serialization round-trips exactly") {
    TfidfConfig cfg;
    cfg.tokenizer.stopwords = Stopwords::spanish;
    cfg.tokenizer.min_token_length = 3;
    const std::vector<std::string> docs{"ñandú rápido", "router rápido lento", "más router"};
    const auto m = fit_tfidf(docs, cfg, "src");
    const auto back = TfidfModel::deserialize(m.serialize());
    CHECK(back == m);
    CHECK(back.transform("router ñandú") == m.transform("router ñandú"));
    testutil::TempDir dir("tfidf");
    m.save(dir / "m.tfidf");
    CHECK(TfidfModel::load(dir / "m.tfidf") == m);
    CHECK_THROWS_AS(TfidfModel::deserialize("garbage\n"), DataError);
}

TEST_CASE("keyword stats rank by count with lexicographic ties") {
    std::vector<corpus::Message> ms{{"1", "router cable router", "A"}, {"2", "cable fibra", "A"},
                                    {"3", "zeta alfa", "A"}};
    const auto s = keyword_stats(ms, 3);
    REQUIRE(s.entries.size() == 3);
    CHECK(s.entries[0].term == "cable");
    CHECK(s.entries[1].term == "router");
    CHECK(s.entries[2].term == "alfa");
    CHECK(s.subset_size == 3);
    double sum = 0.0;
    for (const auto& e : s.entries) sum += e.weight;
    CHECK(sum == doctest::Approx(1.0));
    CHECK(s.entries[0].weight == doctest::Approx(2.0 / 5.0));
    CHECK_THROWS_AS(keyword_stats(ms, 0), UsageError);
}
