#include <algorithm>
#include <cstdio>

#include "enslens/error.hpp"
#include "enslens/util/parallel.hpp"
#include "enslens/violin/violin.hpp"

namespace enslens {

std::string to_string(ScaleMode mode) { return mode == ScaleMode::GlobalPerParameter ? "global" : "local"; }

ScaleMode scale_mode_from_string(const std::string& s) {
    if (s == "global") return ScaleMode::GlobalPerParameter;
    if (s == "local") return ScaleMode::LocalPerMember;
    throw Error(ErrorCode::SchemaViolation, "scale must be 'global' or 'local', got '" + s + "'");
}

std::vector<DensityCurve> member_curves(const ActivePoints& points, const SelectionMask& mask, std::size_t resolution) {
    if (mask.size() != points.size()) throw Error(ErrorCode::DimensionMismatch, "mask does not match points");
    const auto rows = mask.set_rows();
    std::vector<DensityCurve> curves(points.dims);
    std::vector<double> values(rows.size());
    for (std::size_t p = 0; p < points.dims; ++p) {
        for (std::size_t i = 0; i < rows.size(); ++i) values[i] = points.coord(rows[i], p);
        curves[p] = density_curve(p, values, resolution);
    }
    return curves;
}

std::vector<ViolinLayout> assemble_layouts(std::vector<std::vector<DensityCurve>> curves,
                                           std::span<const std::string> member_ids,
                                           std::span<const std::size_t> selected_counts, std::size_t representative,
                                           ScaleMode mode) {
    if (curves.size() != member_ids.size() || curves.size() != selected_counts.size() || representative >= curves.size())
        throw Error(ErrorCode::DimensionMismatch, "layout inputs disagree in member count");
    const std::size_t d = curves[representative].size();
    for (const auto& c : curves)
        if (c.size() != d) throw Error(ErrorCode::DimensionMismatch, "members differ in parameter count");

    const auto& rep = curves[representative];
    const SideAssignment sides = assign_sides(overlap_similarity(rep), d);
    const std::vector<std::size_t> order = draw_order(rep);
    const ViolinPalette palette = build_palette(d, sides);

    std::vector<double> global(d, 0.0);
    for (const auto& member : curves)
        for (std::size_t p = 0; p < d; ++p) global[p] = std::max(global[p], member[p].max_density);
    for (auto& g : global)
        if (!(g > 0.0)) g = 1.0;

    std::vector<ViolinLayout> out(curves.size());
    for (std::size_t m = 0; m < curves.size(); ++m) {
        auto& l = out[m];
        l.member_id = member_ids[m];
        l.selected = selected_counts[m];
        l.sides = sides;
        l.order = order;
        l.palette = palette;
        l.scale_mode = mode;
        if (mode == ScaleMode::GlobalPerParameter) {
            l.scales = global;
        } else {
            double local = 0.0;
            for (const auto& c : curves[m]) local = std::max(local, c.max_density);
            l.scales.assign(d, local > 0.0 ? local : 1.0);
        }
        l.curves = std::move(curves[m]);
    }
    return out;
}

std::vector<ViolinLayout> layout(std::span<const ActivePoints> points, std::span<const SelectionMask> masks,
                                 std::size_t representative, ScaleMode mode, std::size_t resolution) {
    if (points.size() != masks.size()) throw Error(ErrorCode::DimensionMismatch, "one mask per member required");
    std::vector<std::vector<DensityCurve>> curves(points.size());
    parallel_each(points.size(), [&](std::size_t m) { curves[m] = member_curves(points[m], masks[m], resolution); });
    std::vector<std::string> ids;
    std::vector<std::size_t> counts;
    for (std::size_t m = 0; m < points.size(); ++m) {
        ids.push_back(points[m].member_id);
        counts.push_back(masks[m].count());
    }
    return assemble_layouts(std::move(curves), ids, counts, representative, mode);
}

nlohmann::json to_json(const ViolinLayout& l) {
    nlohmann::json curves = nlohmann::json::array();
    for (const auto& c : l.curves)
        curves.push_back(
            {{"parameter", c.parameter}, {"samples", c.samples}, {"area", c.area}, {"max_density", c.max_density}});
    auto colors = [](const std::vector<Rgb>& cs) {
        nlohmann::json out = nlohmann::json::array();
        for (const auto& c : cs) out.push_back(to_hex(c));
        return out;
    };
    nlohmann::json rgb = nlohmann::json::array();
    for (const auto& c : l.palette.colors) rgb.push_back({c.r, c.g, c.b});
    return {{"member", l.member_id},
            {"selected", l.selected},
            {"curves", curves},
            {"sides", {{"left", l.sides.left}, {"right", l.sides.right}}},
            {"order", l.order},
            {"palette",
             {{"colors", colors(l.palette.colors)},
              {"rgb", rgb},
              {"left", colors(l.palette.left)},
              {"right", colors(l.palette.right)}}},
            {"scale_mode", to_string(l.scale_mode)},
            {"scales", l.scales},
            {"alpha", kBlendAlpha}};
}

namespace {

// Formats short fragments only (numbers, colors, ids).
void append(std::string& out, const char* fmt, auto... args) {
    char buf[512];
    const int n = std::snprintf(buf, sizeof buf, fmt, args...);
    out.append(buf, static_cast<std::size_t>(std::max(0, n)));
}

std::string escape_xml(const std::string& s) {
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

}  // namespace

std::string render_svg(std::span<const ViolinLayout> layouts, const SvgOptions& o) {
    const double label_space = o.labels ? 18.0 : 0.0;
    const double width = o.margin * 2 + o.panel_width * double(std::max<std::size_t>(1, layouts.size()));
    const double height = o.margin * 2 + o.panel_height + label_space;
    std::string svg;
    svg += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    append(svg,
           "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"%.2f\" height=\"%.2f\" "
           "viewBox=\"0 0 %.2f %.2f\">\n",
           width, height, width, height);
    append(svg, "<rect x=\"0\" y=\"0\" width=\"%.2f\" height=\"%.2f\" fill=\"#ffffff\"/>\n", width, height);

    const double half = 0.5 * o.panel_width - 4.0;
    const double top = o.margin;
    const double bottom = o.margin + o.panel_height;
    for (std::size_t m = 0; m < layouts.size(); ++m) {
        const auto& l = layouts[m];
        const double axis_x = o.margin + o.panel_width * (double(m) + 0.5);
        svg += "<g class=\"mpvp\" data-member=\"" + escape_xml(l.member_id) + "\">\n";
        for (auto p : l.order) {
            const auto& curve = l.curves.at(p);
            if (!(curve.max_density > 0.0)) continue;
            const bool left = std::find(l.sides.left.begin(), l.sides.left.end(), p) != l.sides.left.end();
            const double dir = left ? -1.0 : 1.0;
            const std::size_t r = curve.samples.size();
            const std::string color = to_hex(l.palette.colors.at(p));
            std::string path;
            append(path, "M%.2f %.2f", axis_x, bottom);
            for (std::size_t k = 0; k < r; ++k) {
                const double y = bottom - (bottom - top) * double(k) / double(r - 1);
                const double x = axis_x + dir * half * std::min(1.0, curve.samples[k] / l.scales.at(p));
                append(path, " L%.2f %.2f", x, y);
            }
            append(path, " L%.2f %.2f Z", axis_x, top);
            svg += "<path d=\"" + path + "\"";
            append(svg, " fill=\"%s\" fill-opacity=\"%.2f\" stroke=\"%s\" stroke-width=\"%.2f\" data-parameter=\"%zu\"/>\n",
                   color.c_str(), kBlendAlpha, color.c_str(), o.stroke_width, p);
        }
        append(svg, "<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" stroke=\"#000000\" stroke-width=\"1\"/>\n",
               axis_x, top, axis_x, bottom);
        if (o.labels)
            append(svg,
                   "<text x=\"%.2f\" y=\"%.2f\" font-family=\"sans-serif\" font-size=\"11\" "
                   "text-anchor=\"middle\">%s (%zu)</text>\n",
                   axis_x, bottom + 14.0, escape_xml(l.member_id).c_str(), l.selected);
        svg += "</g>\n";
    }
    svg += "</svg>\n";
    return svg;
}

}  // namespace enslens
