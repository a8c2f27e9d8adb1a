#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "enslens/brush/brush.hpp"

namespace enslens {

struct SplitCandidate {
    std::size_t axis = 0;
    double value = 0.0;  // coordinate of a point in the box
    double cost = 0.0;
    bool left_assign = true;  // points at `value` join the left sub-interval
};

// Minimizes C = N_l*L_l/L + N_r*L_r/L over every distinct point coordinate on
// the axis. Points at the split coordinate join the side that yields the lower
// cost (the shorter side); on equal lengths the side with more points, then
// left. Ties between candidates go to the smaller value. Throws Degenerate when
// all coordinates coincide or the interval has no length.
SplitCandidate sah_best_split(std::span<const double> coords, const AxisInterval& interval, std::size_t axis);

// Moves the boundary of `box` on `axis` that faces the split plane to the
// extreme coordinate of `rows` (the side that did not receive the split point).
HyperBox narrow(const HyperBox& box, const ActivePoints& points, std::span<const std::size_t> rows, std::size_t axis,
                bool faces_upper);
// Tight bounds on every axis.
HyperBox narrow_all(const HyperBox& box, const ActivePoints& points, std::span<const std::size_t> rows);

struct ConfidenceEllipsoid {
    std::vector<double> mean;         // D
    std::vector<double> axes;         // D x D row-major, row k = k-th principal axis
    std::vector<double> eigenvalues;  // D, descending, clamped at 0
    std::vector<double> scales;       // D, sqrt(eigenvalue) * radius
    std::vector<bool> degenerate;     // D, axis ignored by the containment test
    double radius = 0.0;              // empirical 68th-percentile Mahalanobis distance
    double radius_squared = 0.0;      // the value containment compares against

    std::size_t dims() const { return mean.size(); }
};

inline constexpr double kDegenerateEpsilon = 1e-10;
inline constexpr std::size_t kDefaultMinLeaf = 3;
inline constexpr std::size_t kDefaultPassesPerAxis = 2;

// Squared Mahalanobis distance over the non-degenerate principal axes.
double mahalanobis_squared(const ConfidenceEllipsoid& e, std::span<const float> point);
// Throws TooFewPoints (fewer than 2 rows).
ConfidenceEllipsoid fit_ellipsoid(const ActivePoints& points, std::span<const std::size_t> rows);
bool ellipsoid_contains(const ConfidenceEllipsoid& e, std::span<const float> point);

struct RefinedBox {
    HyperBox box;
    std::vector<std::size_t> rows;  // rows of the source ActivePoints inside the box
    std::size_t point_count = 0;    // rows.size() for freshly refined boxes; kept when loaded from JSON
    bool degenerate = false;        // fewer than min_leaf points: no ellipsoid, box-only
    std::optional<ConfidenceEllipsoid> ellipsoid;
};

// Axes visited round-robin, passes_per_axis times. Leaves are tight and never empty;
// their row sets partition `rows`. Throws EmptyCluster.
std::vector<RefinedBox> kd_refine(const HyperBox& box, const ActivePoints& points, std::span<const std::size_t> rows,
                                  std::size_t passes_per_axis = kDefaultPassesPerAxis,
                                  std::size_t min_leaf = kDefaultMinLeaf);

enum class BrushMode { BoxesOnly, BoxesAndEllipsoids };
std::string to_string(BrushMode mode);
BrushMode brush_mode_from_string(const std::string& s);  // throws SchemaViolation

struct MultiParameterBrush {
    std::vector<RefinedBox> boxes;
    BrushMode mode = BrushMode::BoxesOnly;

    std::size_t dims() const { return boxes.empty() ? 0 : boxes.front().box.dims(); }
};

// The unrefined single-box brush.
MultiParameterBrush single_box_brush(const HyperBox& box);

// kd_refine on the cluster rows inside `initial`, then one ellipsoid per
// non-degenerate leaf in BoxesAndEllipsoids mode.
MultiParameterBrush refine_brush(const HyperBox& initial, const ActivePoints& points,
                                 std::span<const std::size_t> cluster_rows, BrushMode mode,
                                 std::size_t passes_per_axis = kDefaultPassesPerAxis,
                                 std::size_t min_leaf = kDefaultMinLeaf);

// A point is selected when some box contains it and, in BoxesAndEllipsoids
// mode, that box's ellipsoid (if any) contains it too. Throws DimensionMismatch.
SelectionMask apply_refined(const MultiParameterBrush& brush, const ActivePoints& points);

nlohmann::json to_json(const ConfidenceEllipsoid& e);
nlohmann::json to_json(const MultiParameterBrush& brush);
// Throws SchemaViolation.
MultiParameterBrush brush_from_json(const nlohmann::json& doc);

}  // namespace enslens
