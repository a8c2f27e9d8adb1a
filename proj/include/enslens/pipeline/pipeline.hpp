#pragma once

// Whole-ensemble steps shared by the CLI and the service.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "enslens/brush/brush.hpp"
#include "enslens/core/ensemble.hpp"
#include "enslens/refine/refine.hpp"
#include "enslens/spatial/surface.hpp"

namespace enslens {

// apply_box for a plain single-box brush, apply_refined otherwise.
SelectionMask apply_brush(const MultiParameterBrush& brush, const ActivePoints& points);
std::vector<SelectionMask> apply_to_ensemble(const MultiParameterBrush& brush, std::span<const ActivePoints> members);

struct CountRow {
    std::string member_id;
    std::size_t count = 0;
    std::optional<double> ratio_to_cluster;  // count / cluster size; empty without a cluster
};

std::vector<CountRow> count_table(std::span<const SelectionMask> masks, std::optional<std::size_t> cluster_size);
// Header member_id,count,ratio_to_cluster; ratio printed with %.6f, blank when absent.
std::string count_table_csv(std::span<const CountRow> rows);
nlohmann::json to_json(std::span<const CountRow> rows);

enum class Provenance { Cluster, ManualEdit, KdRefined, EllipsoidRefined };
std::string to_string(Provenance p);

struct MeshOptions {
    double sigma = kDefaultSmoothingSigma;  // 0 disables smoothing
    double iso = kDefaultIso;
};

struct MemberSurface {
    BinaryField selection;  // unsmoothed
    SurfaceMesh mesh;       // vertex_param filled in
};

// Field, smoothing, extraction and classification for one member.
MemberSurface member_surface(const EnsembleManifest& manifest, const MemberField& raw, const ActivePoints& points,
                             const SelectionMask& mask, const MultiParameterBrush& brush, const MeshOptions& options);

}  // namespace enslens
