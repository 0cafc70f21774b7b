#include "igaiva/heatmap.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "igaiva/error.hpp"
#include "igaiva/util.hpp"

namespace igaiva::heatmap {

namespace {

constexpr double kMassFloor = 1e-12;
constexpr double kOnLineTolerance = 1e-12;

std::pair<double, double> padded_axis(double lo, double hi, double padding) {
    if (hi - lo <= 0.0) return {lo - 0.5, hi + 0.5};
    const double pad = padding * (hi - lo);
    return {lo - pad, hi + pad};
}

double cross(Point2 o, Point2 a, Point2 b) {
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

bool on_segment(Point2 p, Point2 q, Point2 r) {
    return std::min(p.x, r.x) <= q.x && q.x <= std::max(p.x, r.x) && std::min(p.y, r.y) <= q.y &&
           q.y <= std::max(p.y, r.y);
}

bool segments_intersect(Point2 p1, Point2 p2, Point2 p3, Point2 p4) {
    const double d1 = cross(p3, p4, p1);
    const double d2 = cross(p3, p4, p2);
    const double d3 = cross(p1, p2, p3);
    const double d4 = cross(p1, p2, p4);
    if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0)))
        return true;
    if (d1 == 0 && on_segment(p3, p1, p4)) return true;
    if (d2 == 0 && on_segment(p3, p2, p4)) return true;
    if (d3 == 0 && on_segment(p1, p3, p2)) return true;
    if (d4 == 0 && on_segment(p1, p4, p2)) return true;
    return false;
}

void validate_polygon(const Polygon& poly) {
    const auto& v = poly.vertices;
    const auto n = v.size();
    if (n < 3) throw UsageError("polygon needs at least 3 vertices");
    for (const auto& p : v) {
        if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw UsageError("polygon vertex is not finite");
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            // Adjacent edges share a vertex by construction.
            if (j == i + 1 || (i == 0 && j == n - 1)) continue;
            if (segments_intersect(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]))
                throw UsageError("polygon is self-intersecting");
        }
    }
    double area2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) area2 += cross({0, 0}, v[i], v[(i + 1) % n]);
    if (area2 == 0.0) throw UsageError("polygon has zero area");
}

bool inside_polygon(const Polygon& poly, Point2 p) {
    // Even-odd crossing rule.
    const auto& v = poly.vertices;
    bool inside = false;
    for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++) {
        if ((v[i].y > p.y) != (v[j].y > p.y)) {
            const double x_cross = v[j].x + (p.y - v[j].y) * (v[i].x - v[j].x) / (v[i].y - v[j].y);
            if (p.x < x_cross) inside = !inside;
        }
    }
    return inside;
}

}  // namespace

Point2 ErrorField::node(std::size_t i, std::size_t j) const {
    const double u = static_cast<double>(i) / static_cast<double>(width - 1);
    const double v = static_cast<double>(j) / static_cast<double>(height - 1);
    return {bbox.x_min + u * (bbox.x_max - bbox.x_min), bbox.y_min + v * (bbox.y_max - bbox.y_min)};
}

BoundingBox padded_bounds(std::span<const CorrectnessSample> samples, double padding) {
    double x_lo = samples.front().point.x, x_hi = x_lo;
    double y_lo = samples.front().point.y, y_hi = y_lo;
    for (const auto& s : samples) {
        x_lo = std::min(x_lo, s.point.x);
        x_hi = std::max(x_hi, s.point.x);
        y_lo = std::min(y_lo, s.point.y);
        y_hi = std::max(y_hi, s.point.y);
    }
    const auto [xa, xb] = padded_axis(x_lo, x_hi, padding);
    const auto [ya, yb] = padded_axis(y_lo, y_hi, padding);
    return {xa, xb, ya, yb};
}

ErrorField rbf_error_field(std::span<const CorrectnessSample> samples, std::size_t width,
                           std::size_t height, double epsilon) {
    if (samples.empty()) throw UsageError("error field needs at least one sample");
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw UsageError("epsilon must be positive");
    if (width < 2 || height < 2) throw UsageError("grid must be at least 2 x 2");
    for (const auto& s : samples) {
        if (!std::isfinite(s.point.x) || !std::isfinite(s.point.y))
            throw DataError("sample '" + s.id + "' has non-finite coordinates");
    }

    ErrorField field;
    field.width = width;
    field.height = height;
    field.epsilon = epsilon;
    field.bbox = padded_bounds(samples);
    field.value.assign(width * height, 0.0);
    field.confidence.assign(width * height, 0.0);

    const double sx = field.bbox.x_max - field.bbox.x_min;
    const double sy = field.bbox.y_max - field.bbox.y_min;
    std::vector<Point2> normalized;
    normalized.reserve(samples.size());
    for (const auto& s : samples)
        normalized.push_back({(s.point.x - field.bbox.x_min) / sx, (s.point.y - field.bbox.y_min) / sy});

    const double inv_two_eps2 = 1.0 / (2.0 * epsilon * epsilon);
    // Mass of one coincident sample is exp(0) = 1.
    const double reference_mass = 3.0;
    for (std::size_t j = 0; j < height; ++j) {
        const double gy = static_cast<double>(j) / static_cast<double>(height - 1);
        for (std::size_t i = 0; i < width; ++i) {
            const double gx = static_cast<double>(i) / static_cast<double>(width - 1);
            double mass = 0.0;
            double err = 0.0;
            for (std::size_t s = 0; s < samples.size(); ++s) {
                const double dx = gx - normalized[s].x;
                const double dy = gy - normalized[s].y;
                const double w = std::exp(-(dx * dx + dy * dy) * inv_two_eps2);
                mass += w;
                if (!samples[s].correct) err += w;
            }
            if (mass < kMassFloor) continue;
            field.value[j * width + i] = err / mass;
            field.confidence[j * width + i] = std::min(1.0, mass / reference_mass);
        }
    }
    return field;
}

std::string ErrorField::serialize() const {
    std::ostringstream out;
    out << "igaiva-field 1\n";
    out << width << " " << height << "\n";
    out << format_double(bbox.x_min) << " " << format_double(bbox.x_max) << " " << format_double(bbox.y_min)
        << " " << format_double(bbox.y_max) << "\n";
    out << format_double(epsilon) << "\n";
    auto grid = [&](const std::vector<double>& g) {
        for (std::size_t j = 0; j < height; ++j) {
            for (std::size_t i = 0; i < width; ++i) {
                if (i) out << ' ';
                out << format_double(g[j * width + i]);
            }
            out << '\n';
        }
    };
    out << "value\n";
    grid(value);
    out << "confidence\n";
    grid(confidence);
    return out.str();
}

ErrorField ErrorField::deserialize(const std::string& content) {
    std::istringstream in(content);
    std::string word;
    int version = 0;
    if (!(in >> word >> version) || word != "igaiva-field" || version != 1)
        throw DataError("error field: unsupported header");
    ErrorField f;
    if (!(in >> f.width >> f.height >> f.bbox.x_min >> f.bbox.x_max >> f.bbox.y_min >> f.bbox.y_max >> f.epsilon))
        throw DataError("error field: malformed header");
    if (f.width < 2 || f.height < 2) throw DataError("error field: grid too small");
    auto grid = [&](const char* name, std::vector<double>& g) {
        if (!(in >> word) || word != name) throw DataError(std::string("error field: missing ") + name);
        g.resize(f.width * f.height);
        for (auto& v : g) {
            if (!(in >> word)) throw DataError("error field: truncated grid");
            v = std::strtod(word.c_str(), nullptr);
        }
    };
    grid("value", f.value);
    grid("confidence", f.confidence);
    return f;
}

void DivisionLine::validate() const {
    if (!std::isfinite(a) || !std::isfinite(b) || !std::isfinite(c))
        throw UsageError("division line coefficients must be finite");
    if (a == 0.0 && b == 0.0) throw UsageError("division line is degenerate: (a, b) = (0, 0)");
}

std::vector<IdPoint> id_points(const projection::Embedding2D& embedding) {
    std::vector<IdPoint> out;
    out.reserve(embedding.size());
    for (std::size_t i = 0; i < embedding.size(); ++i) out.push_back({embedding.ids[i], embedding.points[i]});
    return out;
}

Partition partition_by_line(std::span<const IdPoint> points, const DivisionLine& line) {
    line.validate();
    Partition part;
    for (const auto& p : points) {
        const double s = line.evaluate(p.point);
        if (std::abs(s) <= kOnLineTolerance) {
            part.on_line.push_back(p.id);
        } else if (s < 0.0) {
            part.side_a.push_back(p.id);
        } else {
            part.side_b.push_back(p.id);
        }
    }
    return part;
}

void validate_region(const Region& region) {
    std::visit(
        [](const auto& r) {
            using T = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<T, HalfPlane>) {
                r.line.validate();
            } else if constexpr (std::is_same_v<T, Rectangle>) {
                if (!(r.x_max > r.x_min) || !(r.y_max > r.y_min))
                    throw UsageError("rectangle must have positive width and height");
            } else {
                validate_polygon(r);
            }
        },
        region);
}

bool contains(const Region& region, Point2 p) {
    return std::visit(
        [&](const auto& r) -> bool {
            using T = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<T, HalfPlane>) {
                const double s = r.line.evaluate(p);
                if (std::abs(s) <= kOnLineTolerance) return false;
                return r.side == Side::a ? s < 0.0 : s > 0.0;
            } else if constexpr (std::is_same_v<T, Rectangle>) {
                return p.x >= r.x_min && p.x < r.x_max && p.y >= r.y_min && p.y < r.y_max;
            } else {
                return inside_polygon(r, p);
            }
        },
        region);
}

std::set<std::string> region_membership(std::span<const IdPoint> points, const Region& region) {
    validate_region(region);
    std::set<std::string> out;
    for (const auto& p : points) {
        if (contains(region, p.point)) out.insert(p.id);
    }
    return out;
}

}  // namespace igaiva::heatmap
