#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "enslens/error.hpp"
#include "enslens/violin/violin.hpp"

namespace enslens {
namespace {

struct Hsl {
    double h, s, l;
};

Hsl to_hsl(const Rgb& c) {
    const double hi = std::max({c.r, c.g, c.b});
    const double lo = std::min({c.r, c.g, c.b});
    const double l = 0.5 * (hi + lo);
    const double delta = hi - lo;
    if (delta == 0.0) return {-1.0, 0.0, l};
    const double s = delta / (1.0 - std::abs(2.0 * l - 1.0));
    double h;
    if (hi == c.r)
        h = 60.0 * std::fmod((c.g - c.b) / delta, 6.0);
    else if (hi == c.g)
        h = 60.0 * ((c.b - c.r) / delta + 2.0);
    else
        h = 60.0 * ((c.r - c.g) / delta + 4.0);
    if (h < 0.0) h += 360.0;
    return {h, s, l};
}

Rgb from_hsl(const Hsl& x) {
    const double c = (1.0 - std::abs(2.0 * x.l - 1.0)) * x.s;
    const double hp = std::fmod(std::max(0.0, x.h), 360.0) / 60.0;
    const double xx = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    if (hp < 1) r = c, g = xx;
    else if (hp < 2) r = xx, g = c;
    else if (hp < 3) g = c, b = xx;
    else if (hp < 4) g = xx, b = c;
    else if (hp < 5) r = xx, b = c;
    else r = c, b = xx;
    const double m = x.l - 0.5 * c;
    return {r + m, g + m, b + m};
}

}  // namespace

Rgb rgb_from_hex(std::string_view hex) {
    if (!hex.empty() && hex.front() == '#') hex.remove_prefix(1);
    if (hex.size() != 6) throw Error(ErrorCode::SchemaViolation, "color must have 6 hex digits");
    auto byte = [&](std::size_t i) {
        unsigned v = 0;
        for (std::size_t k = i; k < i + 2; ++k) {
            const char ch = hex[k];
            v *= 16;
            if (ch >= '0' && ch <= '9') v += unsigned(ch - '0');
            else if (ch >= 'a' && ch <= 'f') v += unsigned(ch - 'a' + 10);
            else if (ch >= 'A' && ch <= 'F') v += unsigned(ch - 'A' + 10);
            else throw Error(ErrorCode::SchemaViolation, "bad hex digit");
        }
        return double(v) / 255.0;
    };
    return {byte(0), byte(2), byte(4)};
}

std::string to_hex(const Rgb& c) {
    auto q = [](double v) { return static_cast<unsigned>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); };
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", q(c.r), q(c.g), q(c.b));
    return buf;
}

double hsl_hue(const Rgb& c) { return to_hsl(c).h; }

Rgb rotate_hue(const Rgb& c, double degrees) {
    Hsl x = to_hsl(c);
    if (x.h < 0.0) return c;
    x.h = std::fmod(x.h + degrees, 360.0);
    if (x.h < 0.0) x.h += 360.0;
    return from_hsl(x);
}

std::array<Rgb, 8> dark2() {
    static const std::array<Rgb, 8> colors = [] {
        const char* hex[] = {"1b9e77", "d95f02", "7570b3", "e7298a", "66a61e", "e6ab02", "a6761e", "666666"};
        std::array<Rgb, 8> out;
        for (std::size_t i = 0; i < 8; ++i) out[i] = rgb_from_hex(hex[i]);
        return out;
    }();
    return colors;
}

double circular_hue_distance(double a, double b) {
    const double d = std::abs(a - b);
    return std::min(d, 360.0 - d);
}

double group_hue_spread(std::span<const std::size_t> group) {
    const auto colors = dark2();
    double spread = 0.0;
    for (std::size_t i = 0; i < group.size(); ++i) {
        const double hi = hsl_hue(colors[group[i]]);
        if (hi < 0.0) continue;
        for (std::size_t j = i + 1; j < group.size(); ++j) {
            const double hj = hsl_hue(colors[group[j]]);
            if (hj < 0.0) continue;
            spread = std::max(spread, circular_hue_distance(hi, hj));
        }
    }
    return spread;
}

PaletteSplit split_dark2() {
    const auto colors = dark2();
    // Hue order with achromatic colors last.
    std::array<std::size_t, 8> by_hue;
    std::iota(by_hue.begin(), by_hue.end(), std::size_t{0});
    std::stable_sort(by_hue.begin(), by_hue.end(), [&](std::size_t a, std::size_t b) {
        const double ha = hsl_hue(colors[a]), hb = hsl_hue(colors[b]);
        if ((ha < 0.0) != (hb < 0.0)) return hb < 0.0;
        return ha < hb;
    });

    PaletteSplit best;
    best.objective = 1e300;
    // Lexicographic 4-subsets of hue positions; the first equal-best wins.
    std::array<std::size_t, 4> pick{0, 1, 2, 3};
    while (true) {
        std::array<std::size_t, 4> a, b;
        std::size_t nb = 0;
        for (std::size_t k = 0; k < 4; ++k) a[k] = by_hue[pick[k]];
        for (std::size_t pos = 0; pos < 8; ++pos)
            if (std::find(pick.begin(), pick.end(), pos) == pick.end()) b[nb++] = by_hue[pos];
        const double objective = std::max(group_hue_spread(a), group_hue_spread(b));
        if (objective < best.objective) best = {a, b, objective};
        int k = 3;
        while (k >= 0 && pick[static_cast<std::size_t>(k)] == static_cast<std::size_t>(4 + k)) --k;
        if (k < 0) break;
        ++pick[static_cast<std::size_t>(k)];
        for (std::size_t j = static_cast<std::size_t>(k) + 1; j < 4; ++j) pick[j] = pick[j - 1] + 1;
    }
    return best;
}

ViolinPalette build_palette(std::size_t dims, const SideAssignment& sides) {
    if (dims > kMaxViolinParameters)
        throw Error(ErrorCode::TooManyParameters, std::to_string(dims) + " parameters, at most 12 supported");
    const auto colors = dark2();
    const auto split = split_dark2();
    auto side_colors = [&](const std::array<std::size_t, 4>& own, const std::array<std::size_t, 4>& other) {
        std::vector<Rgb> out;
        for (auto i : own) out.push_back(colors[i]);
        out.push_back(rotate_hue(colors[other[0]], 180.0));
        out.push_back(rotate_hue(colors[other[2]], 180.0));
        return out;
    };
    ViolinPalette palette;
    palette.left = side_colors(split.left, split.right);
    palette.right = side_colors(split.right, split.left);
    palette.colors.assign(dims, Rgb{0.4, 0.4, 0.4});
    for (std::size_t k = 0; k < sides.left.size(); ++k) palette.colors.at(sides.left[k]) = palette.left.at(k);
    for (std::size_t k = 0; k < sides.right.size(); ++k) palette.colors.at(sides.right[k]) = palette.right.at(k);
    return palette;
}

Rgb blend_stack(std::span<const Rgb> colors, double alpha) {
    Rgb c{1.0, 1.0, 1.0};
    for (const auto& v : colors) {
        c.r = alpha * v.r + (1.0 - alpha) * c.r;
        c.g = alpha * v.g + (1.0 - alpha) * c.g;
        c.b = alpha * v.b + (1.0 - alpha) * c.b;
    }
    return c;
}

}  // namespace enslens
