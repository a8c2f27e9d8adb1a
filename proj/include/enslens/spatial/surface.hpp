#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "enslens/brush/selection_mask.hpp"
#include "enslens/core/ensemble.hpp"
#include "enslens/refine/refine.hpp"

namespace enslens {

struct BinaryField {
    std::string member_id;
    GridDims dims;
    GridSpacing spacing;
    std::vector<double> values;  // x fastest; 1 = selected, 0 = not, smoothed values in between

    double at(std::size_t x, std::size_t y, std::size_t z) const { return values[dims.flat(x, y, z)]; }
};

// Scatters the mask's selected active points onto the member grid.
BinaryField binary_field(const GridDims& dims, const GridSpacing& spacing, const ActivePoints& points,
                         const SelectionMask& mask);

inline constexpr double kDefaultSmoothingSigma = 1.0;
inline constexpr double kDefaultIso = 0.1;

// Gaussian kernel truncated at 3 sigma and renormalized; zero outside the grid.
std::vector<double> gaussian_kernel(double sigma);
// Separable blur followed by a pointwise max with the input, so 1s stay 1.
BinaryField smooth_binary(const BinaryField& field, double sigma = kDefaultSmoothingSigma);

// Grid coordinate that may lie one step outside the grid (implicit zero padding).
struct GridPoint {
    std::int64_t x = 0, y = 0, z = 0;
    bool operator==(const GridPoint&) const = default;
};

inline constexpr int kNoBoundingParameter = -1;  // halo, domain border, or outside point satisfies the box
inline constexpr int kEllipsoidBound = -2;       // outside point is in the box but not in its ellipsoid

struct SurfaceMesh {
    std::string member_id;
    GridDims dims;
    GridSpacing spacing;
    double iso = kDefaultIso;
    std::vector<std::array<double, 3>> positions;   // physical units
    std::vector<std::array<std::uint32_t, 3>> triangles;
    std::vector<std::array<GridPoint, 2>> vertex_edges;  // {inside, outside} endpoint of the source cell edge
    std::vector<int> vertex_param;                        // bounding parameter or sentinel; empty until classified

    std::size_t vertex_count() const { return positions.size(); }
};

// Marching cubes at `iso` over the zero-padded grid, vertices welded per cell edge.
// Corners with value > iso are inside. Throws ConfigInvalid unless 0 < iso < 1.
SurfaceMesh extract_surface(const BinaryField& field, double iso = kDefaultIso);

// Per-vertex bounding parameter. `selection` is the unsmoothed field of the same
// brush; `member` holds the raw parameter values. Throws MismatchedInputs.
std::vector<int> classify_boundary(const SurfaceMesh& mesh, const BinaryField& selection, const MemberField& member,
                                   std::span<const ParameterMeta> meta, const MultiParameterBrush& brush);

struct OverlapStats {
    std::size_t intersection = 0;
    std::size_t count_a = 0;
    std::size_t count_b = 0;
    double jaccard = 0.0;  // |A n B| / |A u B|; 1 when both are empty
};

struct ComparisonPayload {
    SurfaceMesh a;
    SurfaceMesh b;
    OverlapStats overlap;
};

// Voxel overlap of two unsmoothed selection fields. Throws GridMismatch.
OverlapStats overlap_stats(const BinaryField& a, const BinaryField& b);
ComparisonPayload comparison_payload(SurfaceMesh mesh_a, const BinaryField& field_a, SurfaceMesh mesh_b,
                                     const BinaryField& field_b);

std::string obj_string(const SurfaceMesh& mesh);
// Throws IoError.
void export_obj(const SurfaceMesh& mesh, const std::filesystem::path& path);

nlohmann::json to_json(const SurfaceMesh& mesh);
nlohmann::json to_json(const OverlapStats& stats);

}  // namespace enslens
