#pragma once

#include <span>
#include <string>
#include <vector>

#include "igaiva/corpus.hpp"
#include "igaiva/features.hpp"

namespace igaiva::tagtreemap {

struct Rect {
    double x = 0.0;
    double y = 0.0;
    double w = 1.0;
    double h = 1.0;

    double area() const { return w * h; }
};

/// Squarified treemap (row building that minimises the worst aspect ratio).
///
/// Items are placed in descending weight order (stable, so equal weights keep
/// their input order); the returned rectangles are indexed like `weights`.
/// Rows are laid along the shorter side of the remaining space: a column at
/// the left edge when the space is at least as wide as tall, otherwise a row
/// along the top edge.
std::vector<Rect> layout_squarified(std::span<const double> weights, const Rect& rect);

struct TagEntry {
    std::string term;
    std::size_t count = 0;
    double weight = 0.0;
    /// sqrt(count) relative to the cell's most frequent term, in (0, 1].
    double size = 0.0;
};

struct Cell {
    std::string group;
    Rect rect;
    double weight = 0.0;
    features::KeywordStats stats;
    std::vector<TagEntry> tags;
};

struct TreemapLayout {
    Rect root;
    std::vector<Cell> cells;
    int depth = 1;

    std::string to_json() const;
};

struct Group {
    std::string name;
    std::vector<corpus::Message> messages;
};

/// One cell per non-empty group, sized by message count; ordering is by
/// size descending, ties by group name.
TreemapLayout build_tag_treemap(std::span<const Group> groups, std::size_t top_k, const Rect& rect,
                                const features::TokenizerConfig& tokenizer = {});

}  // namespace igaiva::tagtreemap
