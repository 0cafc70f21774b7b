#include "igaiva/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "igaiva/error.hpp"
#include "igaiva/util.hpp"

namespace igaiva::corpus {

using nlohmann::json;

std::string to_string(Origin origin) {
    return origin == Origin::collected ? "collected" : "synthetic";
}

Origin parse_origin(const std::string& text) {
    if (text == "collected") return Origin::collected;
    if (text == "synthetic") return Origin::synthetic;
    throw DataError("unknown origin '" + text + "'");
}

Dataset::Dataset(std::string name, std::vector<Message> messages)
    : name_(std::move(name)), messages_(std::move(messages)) {
    for (std::size_t i = 0; i < messages_.size(); ++i) {
        const auto& m = messages_[i];
        if (m.id.empty()) throw DataError("message " + std::to_string(i) + " has an empty id");
        if (m.text.empty()) throw DataError("message '" + m.id + "' has empty text");
        if (m.label.empty()) throw DataError("message '" + m.id + "' has an empty label");
        if (m.origin == Origin::synthetic && !m.provenance)
            throw DataError("synthetic message '" + m.id + "' has no provenance");
        if (!by_id_.emplace(m.id, i).second) throw DataError("duplicate id '" + m.id + "'");
        auto [it, inserted] = class_index_.try_emplace(m.label);
        if (inserted) labels_.push_back(m.label);
        it->second.push_back(m.id);
    }
}

const Message& Dataset::at(const std::string& id) const {
    const auto it = by_id_.find(id);
    if (it == by_id_.end()) throw DataError("unknown message id '" + id + "'");
    return messages_[it->second];
}

std::size_t Dataset::count(Origin origin) const {
    return static_cast<std::size_t>(std::count_if(
        messages_.begin(), messages_.end(), [&](const Message& m) { return m.origin == origin; }));
}

Dataset Dataset::subset(const std::set<std::string>& ids, std::string name) const {
    std::vector<Message> out;
    out.reserve(ids.size());
    for (const auto& m : messages_) {
        if (ids.count(m.id)) out.push_back(m);
    }
    return Dataset(std::move(name), std::move(out));
}

// ---------------------------------------------------------------------------
// File formats

Format format_from_path(const std::string& path) {
    const auto ext = std::filesystem::path(path).extension().string();
    if (ext == ".csv") return Format::csv;
    return Format::jsonl;
}

namespace {

std::string dataset_name_from_path(const std::string& path) {
    return std::filesystem::path(path).stem().string();
}

Message message_from_json(const json& rec, std::size_t line_no) {
    auto where = [&] { return "line " + std::to_string(line_no) + ": "; };
    if (!rec.is_object()) throw DataError(where() + "record is not an object");
    Message m;
    for (const char* key : {"id", "text", "label"}) {
        if (!rec.contains(key) || !rec[key].is_string())
            throw DataError(where() + "missing string field '" + key + "'");
    }
    m.id = rec["id"].get<std::string>();
    m.text = rec["text"].get<std::string>();
    m.label = rec["label"].get<std::string>();
    if (m.text.empty()) throw DataError(where() + "empty text for id '" + m.id + "'");
    if (rec.contains("origin")) m.origin = parse_origin(rec["origin"].get<std::string>());
    if (rec.contains("provenance") && !rec["provenance"].is_null()) {
        const auto& p = rec["provenance"];
        Provenance prov;
        prov.generator_id = p.value("generator_id", std::string{});
        prov.prompt_hash = p.value("prompt_hash", std::string{});
        if (p.contains("example_ids"))
            prov.example_ids = p["example_ids"].get<std::vector<std::string>>();
        m.provenance = std::move(prov);
    }
    return m;
}

json message_to_json(const Message& m) {
    json rec{{"id", m.id}, {"text", m.text}, {"label", m.label}, {"origin", to_string(m.origin)}};
    if (m.provenance) {
        rec["provenance"] = {{"generator_id", m.provenance->generator_id},
                             {"example_ids", m.provenance->example_ids},
                             {"prompt_hash", m.provenance->prompt_hash}};
    }
    return rec;
}

// Builds the dataset, rewording constructor failures with a line number.
Dataset build_checked(std::string name, std::vector<Message> messages,
                      const std::vector<std::size_t>& lines) {
    std::map<std::string, std::size_t> seen;
    for (std::size_t i = 0; i < messages.size(); ++i) {
        auto [it, inserted] = seen.emplace(messages[i].id, lines[i]);
        if (!inserted)
            throw DataError("line " + std::to_string(lines[i]) + ": duplicate id '" +
                            messages[i].id + "' (first seen on line " +
                            std::to_string(it->second) + ")");
    }
    return Dataset(std::move(name), std::move(messages));
}

}  // namespace

Dataset parse_jsonl(const std::string& content, std::string name) {
    std::vector<Message> messages;
    std::vector<std::size_t> lines;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= content.size()) {
        auto end = content.find('\n', start);
        if (end == std::string::npos) end = content.size();
        ++line_no;
        const auto line = trim(std::string_view(content).substr(start, end - start));
        start = end + 1;
        if (line.empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error& e) {
            throw DataError("line " + std::to_string(line_no) + ": parse error: " + e.what());
        }
        try {
            messages.push_back(message_from_json(rec, line_no));
        } catch (const json::exception& e) {
            throw DataError("line " + std::to_string(line_no) + ": " + e.what());
        }
        lines.push_back(line_no);
    }
    return build_checked(std::move(name), std::move(messages), lines);
}

namespace {

// RFC 4180 records. Returns (fields, physical line where the record started).
std::vector<std::pair<std::vector<std::string>, std::size_t>> parse_csv_records(
    const std::string& content) {
    std::vector<std::pair<std::vector<std::string>, std::size_t>> records;
    std::vector<std::string> fields;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;
    std::size_t line = 1;
    std::size_t record_line = 1;
    auto end_record = [&] {
        if (field_started || !fields.empty() || !field.empty()) {
            fields.push_back(std::move(field));
            records.emplace_back(std::move(fields), record_line);
        }
        fields.clear();
        field.clear();
        field_started = false;
    };
    for (std::size_t i = 0; i < content.size(); ++i) {
        const char c = content[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < content.size() && content[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                if (c == '\n') ++line;
                field.push_back(c);
            }
            continue;
        }
        if (c == '"') {
            in_quotes = true;
            field_started = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
            field_started = true;
        } else if (c == '\n') {
            end_record();
            ++line;
            record_line = line;
        } else if (c != '\r') {
            field.push_back(c);
            field_started = true;
        }
    }
    if (in_quotes) throw DataError("line " + std::to_string(record_line) + ": unterminated quote");
    end_record();
    return records;
}

}  // namespace

Dataset parse_csv(const std::string& content, std::string name) {
    const auto records = parse_csv_records(content);
    if (records.empty()) return Dataset(std::move(name), {});
    const auto& header = records.front().first;
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header.size(); ++i) col[trim(header[i])] = i;
    for (const char* key : {"id", "text", "label"}) {
        if (!col.count(key)) throw DataError("line 1: CSV header lacks column '" + std::string(key) + "'");
    }
    std::vector<Message> messages;
    std::vector<std::size_t> lines;
    for (std::size_t r = 1; r < records.size(); ++r) {
        const auto& [fields, line] = records[r];
        if (fields.size() != header.size())
            throw DataError("line " + std::to_string(line) + ": expected " +
                            std::to_string(header.size()) + " fields, got " +
                            std::to_string(fields.size()));
        Message m;
        m.id = fields[col["id"]];
        m.text = fields[col["text"]];
        m.label = fields[col["label"]];
        if (m.id.empty()) throw DataError("line " + std::to_string(line) + ": empty id");
        if (m.text.empty())
            throw DataError("line " + std::to_string(line) + ": empty text for id '" + m.id + "'");
        if (m.label.empty()) throw DataError("line " + std::to_string(line) + ": empty label");
        messages.push_back(std::move(m));
        lines.push_back(line);
    }
    return build_checked(std::move(name), std::move(messages), lines);
}

Dataset load_dataset(const std::string& path, Format format) {
    if (!std::filesystem::exists(path)) throw DataError("dataset file not found: " + path);
    const auto content = read_file(path);
    return format == Format::csv ? parse_csv(content, dataset_name_from_path(path))
                                 : parse_jsonl(content, dataset_name_from_path(path));
}

Dataset load_dataset(const std::string& path) { return load_dataset(path, format_from_path(path)); }

std::string to_jsonl(const Dataset& dataset) {
    std::string out;
    for (const auto& m : dataset.messages()) {
        out += message_to_json(m).dump();
        out += '\n';
    }
    return out;
}

void save_jsonl(const Dataset& dataset, const std::string& path) { write_file(path, to_jsonl(dataset)); }

// ---------------------------------------------------------------------------
// Splits

std::string SplitAssignment::test_fingerprint() const {
    std::uint64_t h = fnv1a64("igaiva-test-set");
    for (const auto& id : test_ids) {
        h = fnv1a64(id, h);
        h = fnv1a64("\n", h);
    }
    return to_hex(h);
}

std::size_t stratified_test_count(std::size_t class_size, double test_fraction) {
    if (class_size < 2) throw DataError("class with fewer than 2 members cannot be split");
    const auto raw = static_cast<long long>(std::llround(test_fraction * static_cast<double>(class_size)));
    const auto hi = static_cast<long long>(class_size) - 1;
    return static_cast<std::size_t>(std::clamp(raw, 1LL, hi));
}

SplitAssignment stratified_split(const Dataset& dataset, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw UsageError("test fraction must lie strictly between 0 and 1");
    SplitAssignment split;
    split.seed = seed;
    split.test_fraction = test_fraction;
    for (const auto& label : dataset.labels()) {
        std::vector<std::string> ids;
        for (const auto& id : dataset.class_index().at(label)) {
            if (dataset.at(id).origin == Origin::collected) ids.push_back(id);
        }
        if (ids.empty()) continue;
        if (ids.size() < 2)
            throw DataError("class '" + label + "' has fewer than 2 collected messages");
        const auto n_test = stratified_test_count(ids.size(), test_fraction);
        Rng rng(mix64(seed, fnv1a64(label)));
        rng.shuffle(ids);
        split.test_ids.insert(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_test));
        split.train_ids.insert(ids.begin() + static_cast<std::ptrdiff_t>(n_test), ids.end());
    }
    return split;
}

void validate_split(const Dataset& dataset, const SplitAssignment& split) {
    for (const auto& id : split.test_ids) {
        if (!dataset.contains(id)) throw DataError("split test id '" + id + "' not in dataset");
        if (dataset.at(id).origin == Origin::synthetic)
            throw DataError("synthetic id '" + id + "' in test split");
        if (split.train_ids.count(id)) throw DataError("id '" + id + "' on both sides of split");
    }
    for (const auto& id : split.train_ids) {
        if (!dataset.contains(id)) throw DataError("split train id '" + id + "' not in dataset");
    }
    for (const auto& m : dataset.messages()) {
        if (m.origin == Origin::collected && !split.train_ids.count(m.id) && !split.test_ids.count(m.id))
            throw DataError("collected id '" + m.id + "' missing from split");
    }
}

std::string split_to_json(const SplitAssignment& split) {
    json j{{"schema", "igaiva.split/1"},
           {"seed", split.seed},
           {"test_fraction", split.test_fraction},
           {"train_ids", split.train_ids},
           {"test_ids", split.test_ids}};
    return j.dump(1) + "\n";
}

SplitAssignment split_from_json(const std::string& content) {
    try {
        const auto j = json::parse(content);
        if (j.value("schema", std::string{}) != "igaiva.split/1")
            throw DataError("unsupported split schema");
        SplitAssignment s;
        s.seed = j.at("seed").get<std::uint64_t>();
        s.test_fraction = j.at("test_fraction").get<double>();
        s.train_ids = j.at("train_ids").get<std::set<std::string>>();
        s.test_ids = j.at("test_ids").get<std::set<std::string>>();
        return s;
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed split file: ") + e.what());
    }
}

std::pair<Dataset, SplitAssignment> downsample_training_class(const Dataset& dataset,
                                                              const SplitAssignment& split,
                                                              const std::string& label,
                                                              std::size_t keep, std::uint64_t seed) {
    const auto idx = dataset.class_index().find(label);
    if (idx == dataset.class_index().end()) throw DataError("unknown class '" + label + "'");
    std::vector<std::string> train;
    for (const auto& id : idx->second) {
        if (split.train_ids.count(id)) train.push_back(id);
    }
    if (keep == 0 || keep > train.size())
        throw UsageError("cannot keep " + std::to_string(keep) + " of " +
                         std::to_string(train.size()) + " training messages");
    Rng rng(mix64(seed, fnv1a64(label)));
    rng.shuffle(train);
    std::set<std::string> dropped(train.begin() + static_cast<std::ptrdiff_t>(keep), train.end());
    std::vector<Message> kept;
    for (const auto& m : dataset.messages()) {
        if (!dropped.count(m.id)) kept.push_back(m);
    }
    SplitAssignment out = split;
    for (const auto& id : dropped) out.train_ids.erase(id);
    return {Dataset(dataset.name(), std::move(kept)), std::move(out)};
}

// ---------------------------------------------------------------------------

MergeResult merge_datasets(const Dataset& base, std::span<const Dataset> additions, std::string name) {
    if (name.empty()) name = base.name();
    std::vector<Message> all = base.messages();
    std::set<std::string> ids;
    for (const auto& m : all) ids.insert(m.id);
    std::vector<std::string> new_labels;
    for (const auto& add : additions) {
        for (const auto& m : add.messages()) {
            if (!ids.insert(m.id).second)
                throw DataError("id collision while merging '" + add.name() + "': '" + m.id + "'");
            if (!base.class_index().count(m.label) &&
                std::find(new_labels.begin(), new_labels.end(), m.label) == new_labels.end())
                new_labels.push_back(m.label);
            all.push_back(m);
        }
    }
    return {Dataset(std::move(name), std::move(all)), std::move(new_labels)};
}

std::size_t ClassSummary::count_of(const std::string& label) const {
    for (const auto& c : classes) {
        if (c.label == label) return c.count;
    }
    return 0;
}

ClassSummary class_summary(const Dataset& dataset) {
    ClassSummary s;
    for (const auto& label : dataset.labels()) {
        const auto n = dataset.class_index().at(label).size();
        s.classes.push_back({label, n});
        s.total += n;
    }
    return s;
}

}  // namespace igaiva::corpus
