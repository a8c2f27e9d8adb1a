#include "enslens/pipeline/pipeline.hpp"

#include <cstdio>

#include "enslens/error.hpp"

namespace enslens {

SelectionMask apply_brush(const MultiParameterBrush& brush, const ActivePoints& points) {
    if (brush.boxes.size() == 1 && !brush.boxes.front().ellipsoid) return apply_box(brush.boxes.front().box, points);
    return apply_refined(brush, points);
}

std::vector<SelectionMask> apply_to_ensemble(const MultiParameterBrush& brush, std::span<const ActivePoints> members) {
    std::vector<SelectionMask> masks;
    masks.reserve(members.size());
    for (const auto& m : members) masks.push_back(apply_brush(brush, m));
    return masks;
}

std::vector<CountRow> count_table(std::span<const SelectionMask> masks, std::optional<std::size_t> cluster_size) {
    std::vector<CountRow> rows;
    rows.reserve(masks.size());
    for (const auto& m : masks) {
        CountRow r{m.member_id(), m.count(), std::nullopt};
        if (cluster_size && *cluster_size > 0) r.ratio_to_cluster = double(m.count()) / double(*cluster_size);
        rows.push_back(std::move(r));
    }
    return rows;
}

std::string count_table_csv(std::span<const CountRow> rows) {
    std::string out = "member_id,count,ratio_to_cluster\n";
    char buf[64];
    for (const auto& r : rows) {
        out += r.member_id;
        std::snprintf(buf, sizeof buf, ",%zu,", r.count);
        out += buf;
        if (r.ratio_to_cluster) {
            std::snprintf(buf, sizeof buf, "%.6f", *r.ratio_to_cluster);
            out += buf;
        }
        out += '\n';
    }
    return out;
}

nlohmann::json to_json(std::span<const CountRow> rows) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : rows) {
        out.push_back({{"member_id", r.member_id},
                       {"count", r.count},
                       {"ratio_to_cluster", r.ratio_to_cluster ? nlohmann::json(*r.ratio_to_cluster) : nlohmann::json()}});
    }
    return out;
}

std::string to_string(Provenance p) {
    switch (p) {
        case Provenance::Cluster: return "cluster";
        case Provenance::ManualEdit: return "manual_edit";
        case Provenance::KdRefined: return "kd_refined";
        case Provenance::EllipsoidRefined: return "ellipsoid_refined";
    }
    return "unknown";
}

MemberSurface member_surface(const EnsembleManifest& manifest, const MemberField& raw, const ActivePoints& points,
                             const SelectionMask& mask, const MultiParameterBrush& brush, const MeshOptions& options) {
    MemberSurface s;
    s.selection = binary_field(manifest.dims, manifest.spacing, points, mask);
    if (options.sigma > 0.0)
        s.mesh = extract_surface(smooth_binary(s.selection, options.sigma), options.iso);
    else
        s.mesh = extract_surface(s.selection, options.iso);
    s.mesh.vertex_param = classify_boundary(s.mesh, s.selection, raw, manifest.parameters, brush);
    return s;
}

}  // namespace enslens
