#include "igaiva/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace igaiva::svg {

namespace {

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string open(const Canvas& c) {
    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(c.width) + "\" height=\"" +
                    num(c.height) + "\" viewBox=\"0 0 " + num(c.width) + " " + num(c.height) + "\">\n";
    s += "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
    if (!c.title.empty())
        s += "<text x=\"" + num(c.margin) + "\" y=\"" + num(c.margin * 0.7) +
             "\" font-family=\"sans-serif\" font-size=\"12\">" + escape(c.title) + "</text>\n";
    return s;
}

struct Mapper {
    heatmap::BoundingBox box;
    const Canvas* canvas;

    double x(double v) const {
        return canvas->margin + (v - box.x_min) / (box.x_max - box.x_min) * (canvas->width - 2 * canvas->margin);
    }
    double y(double v) const {
        return canvas->height - canvas->margin -
               (v - box.y_min) / (box.y_max - box.y_min) * (canvas->height - 2 * canvas->margin);
    }
};

heatmap::BoundingBox bounds_of(std::span<const ScatterPoint> points) {
    std::vector<heatmap::CorrectnessSample> samples;
    for (const auto& p : points) samples.push_back({"", p.point, true});
    if (samples.empty()) return {};
    return heatmap::padded_bounds(samples);
}

void dots(std::string& s, std::span<const ScatterPoint> points, const Mapper& m) {
    // Draw grey context first so highlighted roles stay visible.
    for (Role role : {Role::other, Role::train, Role::test_correct, Role::test_incorrect}) {
        for (const auto& p : points) {
            if (p.role != role) continue;
            s += "<circle cx=\"" + num(m.x(p.point.x)) + "\" cy=\"" + num(m.y(p.point.y)) + "\" r=\"2.5\" fill=\"" +
                 colour(role) + "\"/>\n";
        }
    }
}

std::string lerp_colour(double t) {
    // #2166ac -> #f7f7f7 -> #b2182b
    const double lo[3] = {0x21, 0x66, 0xac}, mid[3] = {0xf7, 0xf7, 0xf7}, hi[3] = {0xb2, 0x18, 0x2b};
    t = std::clamp(t, 0.0, 1.0);
    char buf[8];
    int rgb[3];
    for (int k = 0; k < 3; ++k) {
        const double v = t < 0.5 ? lo[k] + (mid[k] - lo[k]) * (t * 2) : mid[k] + (hi[k] - mid[k]) * (t * 2 - 1);
        rgb[k] = static_cast<int>(std::lround(v));
    }
    std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", rgb[0], rgb[1], rgb[2]);
    return buf;
}

}  // namespace

const char* colour(Role role) {
    switch (role) {
        case Role::train: return "#9acd32";
        case Role::test_correct: return "#1f77b4";
        case Role::test_incorrect: return "#d62728";
        case Role::other: return "#b0b0b0";
    }
    return "#000000";
}

std::string scatter(std::span<const ScatterPoint> points, const Canvas& canvas) {
    std::string s = open(canvas);
    const Mapper m{bounds_of(points), &canvas};
    dots(s, points, m);
    return s + "</svg>\n";
}

std::string heatmap(const heatmap::ErrorField& field, std::span<const ScatterPoint> overlay, const Canvas& canvas) {
    std::string s = open(canvas);
    const Mapper m{field.bbox, &canvas};
    const double cw = (canvas.width - 2 * canvas.margin) / static_cast<double>(field.width - 1);
    const double ch = (canvas.height - 2 * canvas.margin) / static_cast<double>(field.height - 1);
    for (std::size_t j = 0; j < field.height; ++j) {
        for (std::size_t i = 0; i < field.width; ++i) {
            const double conf = field.confidence_at(i, j);
            if (conf <= 0.0) continue;
            const auto p = field.node(i, j);
            s += "<rect x=\"" + num(m.x(p.x) - cw / 2) + "\" y=\"" + num(m.y(p.y) - ch / 2) + "\" width=\"" + num(cw) +
                 "\" height=\"" + num(ch) + "\" fill=\"" + lerp_colour(field.value_at(i, j)) + "\" fill-opacity=\"" +
                 num(conf) + "\"/>\n";
        }
    }
    dots(s, overlay, m);
    return s + "</svg>\n";
}

std::string treemap(const tagtreemap::TreemapLayout& layout, const Canvas& canvas) {
    std::string s = open(canvas);
    const double sx = (canvas.width - 2 * canvas.margin) / layout.root.w;
    const double sy = (canvas.height - 2 * canvas.margin) / layout.root.h;
    for (const auto& cell : layout.cells) {
        const double x = canvas.margin + (cell.rect.x - layout.root.x) * sx;
        const double y = canvas.margin + (cell.rect.y - layout.root.y) * sy;
        const double w = cell.rect.w * sx;
        const double h = cell.rect.h * sy;
        s += "<g>\n<rect x=\"" + num(x) + "\" y=\"" + num(y) + "\" width=\"" + num(w) + "\" height=\"" + num(h) +
             "\" fill=\"#f4f4f4\" stroke=\"#333333\"/>\n";
        s += "<text x=\"" + num(x + 4) + "\" y=\"" + num(y + 14) +
             "\" font-family=\"sans-serif\" font-size=\"12\" font-weight=\"bold\">" + escape(cell.group) + " (" +
             std::to_string(cell.stats.subset_size) + ")</text>\n";
        double cursor = y + 18;
        for (const auto& tag : cell.tags) {
            const double size = 8.0 + 16.0 * tag.size;
            if (cursor + size > y + h) break;
            cursor += size;
            s += "<text x=\"" + num(x + 4) + "\" y=\"" + num(cursor) + "\" font-family=\"sans-serif\" font-size=\"" +
                 num(size) + "\">" + escape(tag.term) + "</text>\n";
        }
        s += "</g>\n";
    }
    return s + "</svg>\n";
}

}  // namespace igaiva::svg
