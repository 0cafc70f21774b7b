#include "igaiva/tagtreemap.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "igaiva/error.hpp"

namespace igaiva::tagtreemap {

namespace {

double worst_ratio(std::span<const double> row, double side) {
    const double sum = std::accumulate(row.begin(), row.end(), 0.0);
    const double side2 = side * side;
    const double sum2 = sum * sum;
    double worst = 0.0;
    for (double a : row) worst = std::max({worst, side2 * a / sum2, sum2 / (side2 * a)});
    return worst;
}

}  // namespace

std::vector<Rect> layout_squarified(std::span<const double> weights, const Rect& rect) {
    if (!(rect.w > 0.0) || !(rect.h > 0.0)) throw UsageError("treemap rectangle must have positive area");
    if (weights.empty()) return {};
    for (double w : weights) {
        if (!(w > 0.0) || !std::isfinite(w)) throw UsageError("treemap weights must be positive");
    }
    const std::size_t n = weights.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return weights[a] > weights[b]; });

    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    std::vector<double> areas(n);
    for (std::size_t k = 0; k < n; ++k) areas[k] = weights[order[k]] / total * rect.area();

    std::vector<Rect> out(n);
    Rect free = rect;
    std::size_t i = 0;
    while (i < n) {
        const double side = std::min(free.w, free.h);
        std::size_t j = i + 1;
        double worst = worst_ratio(std::span(areas).subspan(i, 1), side);
        while (j < n) {
            const double next = worst_ratio(std::span(areas).subspan(i, j - i + 1), side);
            if (next > worst) break;
            worst = next;
            ++j;
        }
        const bool last_row = j == n;
        const double row_area = std::accumulate(areas.begin() + static_cast<std::ptrdiff_t>(i),
                                                areas.begin() + static_cast<std::ptrdiff_t>(j), 0.0);
        if (free.w >= free.h) {
            const double thickness = last_row ? free.w : row_area / free.h;
            double y = free.y;
            for (std::size_t k = i; k < j; ++k) {
                const double h = (k + 1 == j) ? free.y + free.h - y : areas[k] / thickness;
                out[order[k]] = {free.x, y, thickness, h};
                y += h;
            }
            free.x += thickness;
            free.w = last_row ? 0.0 : free.w - thickness;
        } else {
            const double thickness = last_row ? free.h : row_area / free.w;
            double x = free.x;
            for (std::size_t k = i; k < j; ++k) {
                const double w = (k + 1 == j) ? free.x + free.w - x : areas[k] / thickness;
                out[order[k]] = {x, free.y, w, thickness};
                x += w;
            }
            free.y += thickness;
            free.h = last_row ? 0.0 : free.h - thickness;
        }
        i = j;
    }
    return out;
}

TreemapLayout build_tag_treemap(std::span<const Group> groups, std::size_t top_k, const Rect& rect,
                                const features::TokenizerConfig& tokenizer) {
    std::vector<const Group*> nonempty;
    for (const auto& g : groups) {
        if (!g.messages.empty()) nonempty.push_back(&g);
    }
    if (nonempty.empty()) throw UsageError("tag treemap needs at least one non-empty group");
    std::stable_sort(nonempty.begin(), nonempty.end(), [](const Group* a, const Group* b) {
        if (a->messages.size() != b->messages.size()) return a->messages.size() > b->messages.size();
        return a->name < b->name;
    });
    std::vector<double> weights;
    for (const auto* g : nonempty) weights.push_back(static_cast<double>(g->messages.size()));
    const auto rects = layout_squarified(weights, rect);

    TreemapLayout layout;
    layout.root = rect;
    for (std::size_t k = 0; k < nonempty.size(); ++k) {
        Cell cell;
        cell.group = nonempty[k]->name;
        cell.rect = rects[k];
        cell.weight = weights[k];
        cell.stats = features::keyword_stats(nonempty[k]->messages, top_k, tokenizer);
        std::size_t max_count = 0;
        for (const auto& e : cell.stats.entries) max_count = std::max(max_count, e.count);
        for (const auto& e : cell.stats.entries) {
            cell.tags.push_back({e.term, e.count, e.weight,
                                 std::sqrt(static_cast<double>(e.count)) /
                                     std::sqrt(static_cast<double>(max_count))});
        }
        layout.cells.push_back(std::move(cell));
    }
    return layout;
}

std::string TreemapLayout::to_json() const {
    using nlohmann::json;
    auto rect_json = [](const Rect& r) { return json{{"x", r.x}, {"y", r.y}, {"w", r.w}, {"h", r.h}}; };
    json cells_json = json::array();
    for (const auto& c : cells) {
        json tags = json::array();
        for (const auto& t : c.tags)
            tags.push_back({{"term", t.term}, {"count", t.count}, {"weight", t.weight}, {"size", t.size}});
        cells_json.push_back({{"group", c.group},
                              {"rect", rect_json(c.rect)},
                              {"weight", c.weight},
                              {"messages", c.stats.subset_size},
                              {"tags", tags}});
    }
    json j{{"schema", "igaiva.treemap/1"}, {"root", rect_json(root)}, {"depth", depth}, {"cells", cells_json}};
    return j.dump(1) + "\n";
}

}  // namespace igaiva::tagtreemap
