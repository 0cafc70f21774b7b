#include "igaiva/synthesis.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <exception>
#include <filesystem>
#include <numeric>
#include <set>
#include <thread>

#include <json.hpp>

#include "igaiva/error.hpp"
#include "igaiva/text.hpp"
#include "igaiva/template_corpus.hpp"
#include "igaiva/util.hpp"

namespace igaiva::synthesis {

using nlohmann::json;

void GenerationParams::validate() const {
    if (k < 1) throw UsageError("k must be at least 1");
    if (!(temperature >= 0.0)) throw UsageError("temperature must be non-negative");
    if (!(top_p > 0.0 && top_p <= 1.0)) throw UsageError("top_p must be in (0, 1]");
    if (max_tokens < 1) throw UsageError("max_tokens must be at least 1");
}

namespace {

void check_no_leak(const std::vector<std::string>& ids, const corpus::SplitAssignment& split) {
    for (const auto& id : ids) {
        if (split.test_ids.count(id)) throw LeakageError("selection returned test message '" + id + "'");
    }
}

void require_label(const corpus::Dataset& dataset, const std::string& label) {
    if (!dataset.class_index().count(label)) throw UsageError("unknown class '" + label + "'");
}

std::vector<std::string> train_ids_of(const corpus::Dataset& dataset, const corpus::SplitAssignment& split,
                                      const std::string& label) {
    std::vector<std::string> out;
    for (const auto& id : dataset.class_index().at(label)) {
        if (split.train_ids.count(id)) out.push_back(id);
    }
    return out;
}

json params_json(const GenerationParams& p) {
    return {{"temperature", p.temperature},         {"max_tokens", p.max_tokens},
            {"top_p", p.top_p},                     {"frequency_penalty", p.frequency_penalty},
            {"presence_penalty", p.presence_penalty}, {"k", p.k}};
}

GenerationParams params_from(const json& j) {
    GenerationParams p;
    p.temperature = j.at("temperature").get<double>();
    p.max_tokens = j.at("max_tokens").get<std::size_t>();
    p.top_p = j.at("top_p").get<double>();
    p.frequency_penalty = j.at("frequency_penalty").get<double>();
    p.presence_penalty = j.at("presence_penalty").get<double>();
    p.k = j.at("k").get<std::size_t>();
    return p;
}

}  // namespace

std::vector<std::string> select_examples_in_region(const corpus::Dataset& dataset,
                                                   const corpus::SplitAssignment& split,
                                                   const projection::Embedding2D& embedding,
                                                   const heatmap::Region& region,
                                                   const std::optional<std::string>& class_filter) {
    if (class_filter) require_label(dataset, *class_filter);
    for (const auto& id : embedding.ids) {
        if (!dataset.contains(id)) throw UsageError("embedding point '" + id + "' is not in the dataset");
    }
    const auto points = heatmap::id_points(embedding);
    const auto members = heatmap::region_membership(points, region);
    std::vector<std::string> out;
    for (const auto& m : dataset.messages()) {
        if (!members.count(m.id) || !split.train_ids.count(m.id)) continue;
        if (class_filter && m.label != *class_filter) continue;
        out.push_back(m.id);
    }
    check_no_leak(out, split);
    return out;
}

std::vector<std::string> select_examples_by_keywords(const corpus::Dataset& dataset,
                                                     const corpus::SplitAssignment& split,
                                                     const std::string& label,
                                                     std::span<const std::string> terms,
                                                     const features::TokenizerConfig& tokenizer) {
    if (terms.empty()) throw UsageError("keyword selection needs at least one term");
    require_label(dataset, label);
    std::set<std::string> wanted;
    for (const auto& t : terms) {
        for (auto& tok : features::tokenize(t, tokenizer)) wanted.insert(std::move(tok));
    }
    std::vector<std::string> out;
    for (const auto& id : train_ids_of(dataset, split, label)) {
        for (const auto& tok : features::tokenize(dataset.at(id).text, tokenizer)) {
            if (wanted.count(tok)) {
                out.push_back(id);
                break;
            }
        }
    }
    check_no_leak(out, split);
    return out;
}

std::vector<std::string> select_examples_random(const corpus::Dataset& dataset,
                                                const corpus::SplitAssignment& split,
                                                const std::string& label, std::size_t n,
                                                std::uint64_t seed) {
    require_label(dataset, label);
    auto pool = train_ids_of(dataset, split, label);
    if (n < 1) throw UsageError("random selection needs n >= 1");
    if (n > pool.size())
        throw UsageError("class '" + label + "' has only " + std::to_string(pool.size()) +
                         " training messages, cannot select " + std::to_string(n));
    Rng rng(mix64(seed, fnv1a64(label)));
    std::vector<std::size_t> pos(pool.size());
    std::iota(pos.begin(), pos.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.uniform_index(pos.size() - i));
        std::swap(pos[i], pos[j]);
    }
    pos.resize(n);
    std::sort(pos.begin(), pos.end());
    std::vector<std::string> out;
    for (auto p : pos) out.push_back(pool[p]);
    check_no_leak(out, split);
    return out;
}

// ---------------------------------------------------------------------------
// Mock generator

MockGenerator::MockGenerator(std::uint64_t seed) : MockGenerator(seed, corpus::lexicon_synonym_groups()) {}

MockGenerator::MockGenerator(std::uint64_t seed, std::vector<std::vector<std::string>> synonym_groups)
    : seed_(seed), groups_(std::move(synonym_groups)) {
    for (std::size_t g = 0; g < groups_.size(); ++g) {
        if (groups_[g].size() < 2) continue;
        for (const auto& w : groups_[g]) group_of_.emplace(text::lowercase(w), g);
    }
}

std::string MockGenerator::id() const { return "mock:" + std::to_string(seed_); }

namespace {

std::vector<std::string> clauses_of(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        auto t = trim(cur);
        if (!t.empty()) out.push_back(std::move(t));
        cur.clear();
    };
    for (char ch : text) {
        if (ch == ',' || ch == ';' || ch == '.' || ch == '\n') {
            flush();
        } else {
            cur += ch;
        }
    }
    flush();
    return out;
}

}  // namespace

GenerationResult MockGenerator::generate(const corpus::Message& example, const GenerationParams& params) const {
    GenerationResult result;
    result.prompt_hash = to_hex(fnv1a64(id() + "\n" + std::to_string(params.k) + "\n" + example.text));
    auto clauses = clauses_of(example.text);
    if (clauses.empty()) {
        result.failure = "example has no text to perturb";
        return result;
    }
    std::vector<std::vector<std::string>> words;
    for (const auto& c : clauses) words.push_back(split(c, ' '));

    Rng rng(mix64(mix64(seed_, fnv1a64(example.id)), fnv1a64(example.text)));
    std::set<std::string> seen{example.text};
    const auto budget = static_cast<std::size_t>(max_attempts) * params.k;
    for (std::size_t attempt = 0; attempt < budget && result.texts.size() < params.k; ++attempt) {
        bool changed = false;
        std::vector<std::string> parts;
        for (const auto& clause : words) {
            std::vector<std::string> out;
            for (const auto& w : clause) {
                const auto it = group_of_.find(text::lowercase(w));
                if (it != group_of_.end() && rng.uniform01() < substitution_probability) {
                    const auto& group = groups_[it->second];
                    std::vector<const std::string*> others;
                    for (const auto& s : group) {
                        if (text::lowercase(s) != it->first) others.push_back(&s);
                    }
                    if (!others.empty()) {
                        out.push_back(*others[rng.uniform_index(others.size())]);
                        changed = true;
                        continue;
                    }
                }
                out.push_back(w);
            }
            parts.push_back(join(out, " "));
        }
        std::vector<std::size_t> order(parts.size());
        std::iota(order.begin(), order.end(), 0);
        rng.shuffle(order);
        for (std::size_t i = 0; i < order.size(); ++i) changed = changed || order[i] != i;
        if (!changed) continue;
        std::vector<std::string> shuffled;
        for (auto i : order) shuffled.push_back(parts[i]);
        auto text = join(shuffled, ", ") + ".";
        if (seen.insert(text).second) result.texts.push_back(std::move(text));
    }
    if (result.texts.empty()) result.failure = "no distinct perturbation exists for this example";
    return result;
}

// ---------------------------------------------------------------------------
// Remote prompt helpers

std::string system_prompt(std::size_t k) {
    return "You write realistic support-ticket messages. Given an example, produce " + std::to_string(k) +
           " distinct new messages on the same topic and style, same language, one per line, no numbering.";
}

std::vector<std::string> parse_completion_lines(const std::string& content) {
    std::vector<std::string> out;
    for (const auto& raw : split(content, '\n')) {
        std::string line = trim(raw);
        std::size_t p = 0;
        while (p < line.size() && std::isdigit(static_cast<unsigned char>(line[p]))) ++p;
        if (p > 0 && p < line.size() && (line[p] == '.' || line[p] == ')')) {
            line = trim(std::string_view(line).substr(p + 1));
        } else if (line.rfind("- ", 0) == 0 || line.rfind("* ", 0) == 0) {
            line = trim(std::string_view(line).substr(2));
        } else if (line.rfind("\xE2\x80\xA2", 0) == 0) {
            line = trim(std::string_view(line).substr(3));
        }
        if (!line.empty()) out.push_back(std::move(line));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Batches

corpus::Dataset SyntheticBatch::dataset() const { return corpus::Dataset(run_id, messages); }

std::string manifest_path_for(const std::string& batch_path) {
    const std::string ext = ".jsonl";
    if (batch_path.size() > ext.size() && batch_path.compare(batch_path.size() - ext.size(), ext.size(), ext) == 0)
        return batch_path.substr(0, batch_path.size() - ext.size()) + ".manifest.json";
    return batch_path + ".manifest.json";
}

std::string SyntheticBatch::manifest_json() const {
    json rej = json::array();
    for (const auto& r : rejected) rej.push_back({{"example_id", r.example_id}, {"text", r.text}, {"reason", r.reason}});
    json j{{"schema", "igaiva.batch/1"},
           {"run_id", run_id},
           {"generator_id", generator_id},
           {"request",
            {{"label", request.label},
             {"example_ids", request.example_ids},
             {"params", params_json(request.params)},
             {"generator", request.generator},
             {"run_id", request.run_id}}},
           {"count", messages.size()},
           {"rejected", rej}};
    return j.dump(1) + "\n";
}

void SyntheticBatch::save(const std::string& path) const {
    write_file(path, corpus::to_jsonl(dataset()));
    write_file(manifest_path_for(path), manifest_json());
}

SyntheticBatch SyntheticBatch::load(const std::string& path) {
    SyntheticBatch b;
    try {
        const auto j = json::parse(read_file(manifest_path_for(path)));
        if (j.value("schema", std::string{}) != "igaiva.batch/1") throw DataError("unsupported batch manifest schema");
        b.run_id = j.at("run_id").get<std::string>();
        b.generator_id = j.at("generator_id").get<std::string>();
        const auto& r = j.at("request");
        b.request.label = r.at("label").get<std::string>();
        b.request.example_ids = r.at("example_ids").get<std::vector<std::string>>();
        b.request.params = params_from(r.at("params"));
        b.request.generator = r.at("generator").get<std::string>();
        b.request.run_id = r.at("run_id").get<std::string>();
        for (const auto& x : j.at("rejected"))
            b.rejected.push_back({x.at("example_id").get<std::string>(), x.at("text").get<std::string>(),
                                  x.at("reason").get<std::string>()});
        const auto count = j.at("count").get<std::size_t>();
        b.messages = corpus::load_dataset(path, corpus::Format::jsonl).messages();
        if (b.messages.size() != count)
            throw DataError("batch '" + path + "' holds " + std::to_string(b.messages.size()) +
                            " messages but its manifest records " + std::to_string(count));
    } catch (const json::exception& e) {
        throw DataError("malformed batch manifest for '" + path + "': " + e.what());
    }
    return b;
}

SyntheticBatch synthesize(const SynthesisRequest& request, const corpus::Dataset& dataset,
                          const corpus::SplitAssignment& split, const Generator& generator) {
    request.params.validate();
    if (request.label.empty()) throw UsageError("synthesis needs a target class");
    if (request.run_id.empty()) throw UsageError("synthesis needs a run id");
    if (request.example_ids.empty()) throw UsageError("synthesis needs at least one example");
    if (request.generator != generator.kind())
        throw UsageError("request names generator '" + request.generator + "' but a '" + generator.kind() +
                         "' generator was supplied");
    std::set<std::string> unique;
    std::vector<const corpus::Message*> examples;
    for (const auto& id : request.example_ids) {
        if (!dataset.contains(id)) throw DataError("example '" + id + "' is not in the dataset");
        if (split.test_ids.count(id)) throw LeakageError("example '" + id + "' belongs to the test split");
        if (!split.train_ids.count(id)) throw UsageError("example '" + id + "' is not a training message");
        if (!unique.insert(id).second) throw UsageError("example '" + id + "' listed twice");
        examples.push_back(&dataset.at(id));
    }

    const auto n = examples.size();
    std::vector<GenerationResult> results(n);
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                results[i] = generator.generate(*examples[i], request.params);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const auto threads = std::min(n, std::max<std::size_t>(1, generator.parallelism()));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }

    SyntheticBatch batch;
    batch.run_id = request.run_id;
    batch.generator_id = generator.id();
    batch.request = request;
    std::set<std::string> seen;
    for (const auto* e : examples) seen.insert(e->text);
    std::size_t serial = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& ex = *examples[i];
        if (results[i].failure) batch.rejected.push_back({ex.id, "", *results[i].failure});
        std::size_t accepted = 0;
        for (const auto& raw : results[i].texts) {
            auto t = trim(raw);
            const char* reason = nullptr;
            if (t.empty()) {
                reason = "empty";
            } else if (accepted == request.params.k) {
                reason = "surplus";
            } else if (!seen.insert(t).second) {
                reason = "duplicate";
            }
            if (reason) {
                batch.rejected.push_back({ex.id, t, reason});
                continue;
            }
            ++accepted;
            corpus::Message m;
            m.id = request.run_id + "/" + std::to_string(++serial);
            m.text = std::move(t);
            m.label = request.label;
            m.origin = corpus::Origin::synthetic;
            m.provenance = corpus::Provenance{generator.id(), {ex.id}, results[i].prompt_hash};
            batch.messages.push_back(std::move(m));
        }
    }
    if (batch.messages.empty()) throw GeneratorError("generation failed for every example");
    return batch;
}

}  // namespace igaiva::synthesis
