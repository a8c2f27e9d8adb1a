#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace enslens {

struct GridDims {
    std::size_t nx = 0;
    std::size_t ny = 0;
    std::size_t nz = 0;

    std::size_t size() const { return nx * ny * nz; }
    std::size_t flat(std::size_t x, std::size_t y, std::size_t z) const { return x + nx * (y + ny * z); }
    bool operator==(const GridDims&) const = default;
};

struct GridSpacing {
    double dx = 1.0;
    double dy = 1.0;
    double dz = 1.0;
    bool operator==(const GridSpacing&) const = default;
};

struct ParameterMeta {
    std::size_t index = 0;
    std::string name;
    std::string units;
    double global_min = 0.0;
    double global_max = 0.0;

    // Min-max scaling against the ensemble-wide extrema; a constant parameter maps to 0.
    double normalize(double raw) const {
        const double range = global_max - global_min;
        if (!(range > 0.0)) return 0.0;
        return (raw - global_min) / range;
    }
};

struct MemberInfo {
    std::string id;
    std::filesystem::path file;
};

struct EnsembleManifest {
    GridDims dims;
    GridSpacing spacing;
    std::vector<ParameterMeta> parameters;
    std::vector<MemberInfo> members;
    std::string representative_id;

    std::size_t param_count() const { return parameters.size(); }
    std::size_t member_count() const { return members.size(); }
    // Throws UnknownMember.
    std::size_t member_index(std::string_view id) const;
    std::size_t representative_index() const { return member_index(representative_id); }
};

// Raw member values, parameter-major: parameter 0 over the whole grid, then parameter 1, ...
struct MemberField {
    std::string member_id;
    GridDims dims;
    std::size_t param_count = 0;
    std::vector<float> values;

    std::span<const float> parameter(std::size_t p) const {
        return {values.data() + p * dims.size(), dims.size()};
    }
    float value(std::size_t p, std::size_t flat_index) const { return values[p * dims.size() + flat_index]; }
};

// Grid points whose normalized parameter vector has Euclidean norm >= 0.1.
struct ActivePoints {
    std::string member_id;
    std::size_t dims = 0;
    std::vector<std::uint32_t> indices;  // strictly increasing flat grid indices
    std::vector<float> coords;           // size() x dims, row-major, normalized to [0,1]

    std::size_t size() const { return indices.size(); }
    std::span<const float> row(std::size_t i) const { return {coords.data() + i * dims, dims}; }
    float coord(std::size_t i, std::size_t p) const { return coords[i * dims + p]; }
    // Row holding the given flat grid index, if that grid point is active.
    std::optional<std::size_t> position_of(std::uint32_t flat_index) const;
};

struct ClusterSelection {
    std::string member_id;
    std::string label;
    std::vector<std::uint32_t> point_indices;  // sorted flat grid indices
};

inline constexpr double kActiveNormThreshold = 0.1;

EnsembleManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const EnsembleManifest& manifest, const std::filesystem::path& path);

MemberField load_member(const EnsembleManifest& manifest, std::size_t member);
void write_member(const MemberField& field, const std::filesystem::path& path);

// Writes ensemble-wide per-parameter extrema into manifest.parameters.
void normalize_ensemble(EnsembleManifest& manifest, std::span<const MemberField> fields);
// Same result, loading one member at a time from disk.
void normalize_ensemble(EnsembleManifest& manifest);

ActivePoints active_points(const MemberField& member, std::span<const ParameterMeta> meta);

std::vector<ClusterSelection> import_clusters(const std::filesystem::path& path,
                                              const EnsembleManifest& manifest,
                                              std::span<const ActivePoints> members);
void export_clusters(std::span<const ClusterSelection> clusters, const std::filesystem::path& path);

// Rows of `points` that hold the cluster's grid indices. Throws NotActivePoint.
std::vector<std::size_t> cluster_rows(const ActivePoints& points, const ClusterSelection& cluster);

// A manifest with normalization applied and every member's active points resident.
struct Ensemble {
    EnsembleManifest manifest;
    std::vector<ActivePoints> active;

    const ActivePoints& member(std::string_view id) const { return active[manifest.member_index(id)]; }
    const ActivePoints& representative() const { return active[manifest.representative_index()]; }
};

Ensemble load_ensemble(const std::filesystem::path& manifest_path);

}  // namespace enslens
