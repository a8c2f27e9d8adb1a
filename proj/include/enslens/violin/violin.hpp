#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "enslens/brush/selection_mask.hpp"
#include "enslens/core/ensemble.hpp"

namespace enslens {

struct Rgb {
    double r = 1.0, g = 1.0, b = 1.0;
    bool operator==(const Rgb&) const = default;
};

Rgb rgb_from_hex(std::string_view hex);  // "1b9e77" or "#1b9e77"
std::string to_hex(const Rgb& c);        // "#rrggbb"
// HSL hue in degrees [0,360); negative for achromatic colors.
double hsl_hue(const Rgb& c);
Rgb rotate_hue(const Rgb& c, double degrees);

inline constexpr std::size_t kDefaultCurveResolution = 256;
inline constexpr double kBlendAlpha = 0.4;

struct DensityCurve {
    std::size_t parameter = 0;
    std::vector<double> samples;  // density at heights k/(R-1)
    double area = 0.0;            // trapezoidal integral over [0,1]
    double max_density = 0.0;
};

// Gaussian KDE with Silverman bandwidth, evaluated on [0,1] only.
DensityCurve density_curve(std::size_t parameter, std::span<const double> values,
                           std::size_t resolution = kDefaultCurveResolution);
double silverman_bandwidth(std::span<const double> values);

// D x D row-major matrix of d_ij = min(a_ij, a_ji), a_ij = sum min(f_i, f_j) / sum f_i.
std::vector<double> overlap_similarity(std::span<const DensityCurve> curves);

struct SideAssignment {
    std::vector<std::size_t> left;   // in placement order
    std::vector<std::size_t> right;
};

SideAssignment assign_sides(std::span<const double> similarity, std::size_t dims);

// Parameters by non-increasing area, ties by parameter id.
std::vector<std::size_t> draw_order(std::span<const DensityCurve> curves);

struct ViolinPalette {
    std::vector<Rgb> colors;  // per parameter
    std::vector<Rgb> left;    // per-side color sequence (up to 6)
    std::vector<Rgb> right;
};

inline constexpr std::size_t kMaxViolinParameters = 12;

// The eight Dark2 colors, in published order.
std::array<Rgb, 8> dark2();

struct PaletteSplit {
    std::array<std::size_t, 4> left;   // indices into dark2(), hue order, achromatic last
    std::array<std::size_t, 4> right;
    double objective = 0.0;            // larger of the two groups' max circular hue distance
};

double circular_hue_distance(double a, double b);
// Max pairwise circular hue distance among the chromatic colors in `group`.
double group_hue_spread(std::span<const std::size_t> group);
PaletteSplit split_dark2();

// Throws TooManyParameters for more than 12 parameters.
ViolinPalette build_palette(std::size_t dims, const SideAssignment& sides);

// Alpha-composites colors in the given order over white.
Rgb blend_stack(std::span<const Rgb> colors, double alpha = kBlendAlpha);

enum class ScaleMode { GlobalPerParameter, LocalPerMember };
std::string to_string(ScaleMode mode);
ScaleMode scale_mode_from_string(const std::string& s);  // "global" | "local"; throws SchemaViolation

struct ViolinLayout {
    std::string member_id;
    std::size_t selected = 0;
    std::vector<DensityCurve> curves;
    SideAssignment sides;
    std::vector<std::size_t> order;
    ViolinPalette palette;
    ScaleMode scale_mode = ScaleMode::GlobalPerParameter;
    std::vector<double> scales;  // per parameter: density that maps to the full half-width
};

// D curves over the rows selected by mask.
std::vector<DensityCurve> member_curves(const ActivePoints& points, const SelectionMask& mask,
                                        std::size_t resolution = kDefaultCurveResolution);

// Sides, order and palette come from the representative; scales follow `mode`.
std::vector<ViolinLayout> assemble_layouts(std::vector<std::vector<DensityCurve>> curves,
                                           std::span<const std::string> member_ids,
                                           std::span<const std::size_t> selected_counts,
                                           std::size_t representative, ScaleMode mode);

std::vector<ViolinLayout> layout(std::span<const ActivePoints> points, std::span<const SelectionMask> masks,
                                 std::size_t representative, ScaleMode mode,
                                 std::size_t resolution = kDefaultCurveResolution);

nlohmann::json to_json(const ViolinLayout& layout);

struct SvgOptions {
    double panel_width = 120.0;
    double panel_height = 320.0;
    double margin = 16.0;
    double stroke_width = 2.0;
    bool labels = true;
};

std::string render_svg(std::span<const ViolinLayout> layouts, const SvgOptions& options = {});

}  // namespace enslens
