#pragma once

#include <span>
#include <string>
#include <vector>

#include "igaiva/heatmap.hpp"
#include "igaiva/tagtreemap.hpp"

namespace igaiva::svg {

/// Scatter colour roles:
///   training point          #9acd32 (yellow-green)
///   test, correctly labeled #1f77b4 (blue)
///   test, misclassified     #d62728 (red)
///   other classes           #b0b0b0 (grey)
enum class Role { train, test_correct, test_incorrect, other };

const char* colour(Role role);

struct ScatterPoint {
    projection::Point2 point;
    Role role = Role::other;
};

struct Canvas {
    double width = 640.0;
    double height = 640.0;
    double margin = 24.0;
    std::string title;
};

std::string scatter(std::span<const ScatterPoint> points, const Canvas& canvas = {});

/// One cell per grid node shaded from blue (no error) to red (all wrong);
/// opacity is the node's confidence. Optional points are drawn on top.
std::string heatmap(const heatmap::ErrorField& field, std::span<const ScatterPoint> overlay = {},
                    const Canvas& canvas = {});

/// Treemap cells with their tags, font size following the tag size.
std::string treemap(const tagtreemap::TreemapLayout& layout, const Canvas& canvas = {});

}  // namespace igaiva::svg
