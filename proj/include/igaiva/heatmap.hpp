#pragma once

#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "igaiva/projection.hpp"

namespace igaiva::heatmap {

using projection::Point2;

/// Classifier verdict on one test message, placed in projection space.
struct CorrectnessSample {
    std::string id;
    Point2 point;
    bool correct = true;
};

struct BoundingBox {
    double x_min = 0.0;
    double x_max = 1.0;
    double y_min = 0.0;
    double y_max = 1.0;
};

/// Kernel-regression estimate of the error rate on a W x H grid.
///
/// Grid cell (i, j) sits at normalized position (i / (W-1), j / (H-1)) of the
/// padded bounding box; values are stored row-major with j as the row.
struct ErrorField {
    std::size_t width = 0;
    std::size_t height = 0;
    BoundingBox bbox;
    double epsilon = 0.125;
    std::vector<double> value;
    std::vector<double> confidence;

    double value_at(std::size_t i, std::size_t j) const { return value[j * width + i]; }
    double confidence_at(std::size_t i, std::size_t j) const { return confidence[j * width + i]; }
    /// Projection-space coordinates of grid node (i, j).
    Point2 node(std::size_t i, std::size_t j) const;

    std::string serialize() const;
    static ErrorField deserialize(const std::string& content);
};

constexpr double kDefaultEpsilon = 0.125;

/// Padded min-max box; zero-extent axes get a unit span centred on the data.
BoundingBox padded_bounds(std::span<const CorrectnessSample> samples, double padding = 0.05);

/// Nadaraya-Watson estimate with a Gaussian kernel of bandwidth epsilon in
/// normalized coordinates; the confidence channel is the kernel mass over
/// three times the mass of one coincident sample, capped at 1.
ErrorField rbf_error_field(std::span<const CorrectnessSample> samples, std::size_t width,
                           std::size_t height, double epsilon = kDefaultEpsilon);

/// Line a*x + b*y = c with (a, b) != (0, 0).
struct DivisionLine {
    double a = 1.0;
    double b = 0.0;
    double c = 0.0;

    static DivisionLine vertical(double x) { return {1.0, 0.0, x}; }
    static DivisionLine horizontal(double y) { return {0.0, 1.0, y}; }
    static DivisionLine general(double a, double b, double c) { return {a, b, c}; }

    void validate() const;
    double evaluate(Point2 p) const { return a * p.x + b * p.y - c; }
};

enum class Side { a, b };

struct IdPoint {
    std::string id;
    Point2 point;
};

std::vector<IdPoint> id_points(const projection::Embedding2D& embedding);

struct Partition {
    std::vector<std::string> side_a;   // a*x + b*y < c
    std::vector<std::string> side_b;   // a*x + b*y > c
    std::vector<std::string> on_line;  // within 1e-12
};

Partition partition_by_line(std::span<const IdPoint> points, const DivisionLine& line);

struct HalfPlane {
    DivisionLine line;
    Side side = Side::a;
};

/// Half-open box: x_min <= x < x_max, y_min <= y < y_max.
struct Rectangle {
    double x_min = 0.0;
    double y_min = 0.0;
    double x_max = 1.0;
    double y_max = 1.0;
};

struct Polygon {
    std::vector<Point2> vertices;
};

using Region = std::variant<HalfPlane, Rectangle, Polygon>;

void validate_region(const Region& region);
bool contains(const Region& region, Point2 p);
std::set<std::string> region_membership(std::span<const IdPoint> points, const Region& region);

}  // namespace igaiva::heatmap
