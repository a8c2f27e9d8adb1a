#include <algorithm>
#include <cmath>
#include <numeric>

#include "enslens/error.hpp"
#include "enslens/violin/violin.hpp"

namespace enslens {
namespace {

constexpr double kBandwidthFloor = 1e-3;
constexpr double kKernelCutoff = 8.0;  // kernel support in bandwidths

// Linear-interpolation quantile of sorted data.
double quantile(std::span<const double> sorted, double q) {
    const double pos = q * double(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - double(lo)) * (sorted[hi] - sorted[lo]);
}

double silverman_sorted(std::span<const double> sorted) {
    const std::size_t n = sorted.size();
    if (n < 2) return kBandwidthFloor;
    const double mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / double(n);
    double ss = 0.0;
    for (double v : sorted) ss += (v - mean) * (v - mean);
    const double sigma = std::sqrt(ss / double(n - 1));
    const double iqr = quantile(sorted, 0.75) - quantile(sorted, 0.25);
    const double h = 0.9 * std::min(sigma, iqr / 1.34) * std::pow(double(n), -0.2);
    return std::max(h, kBandwidthFloor);
}

}  // namespace

double silverman_bandwidth(std::span<const double> values) {
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    return silverman_sorted(sorted);
}

DensityCurve density_curve(std::size_t parameter, std::span<const double> values, std::size_t resolution) {
    if (resolution < 2) throw Error(ErrorCode::ConfigInvalid, "curve resolution must be >= 2");
    DensityCurve curve;
    curve.parameter = parameter;
    curve.samples.assign(resolution, 0.0);
    if (values.empty()) return curve;

    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const double h = silverman_sorted(sorted);
    const double norm = 1.0 / (double(sorted.size()) * h * std::sqrt(2.0 * M_PI));
    const double step = 1.0 / double(resolution - 1);
    for (std::size_t k = 0; k < resolution; ++k) {
        const double y = double(k) * step;
        auto first = std::lower_bound(sorted.begin(), sorted.end(), y - kKernelCutoff * h);
        auto last = std::upper_bound(first, sorted.end(), y + kKernelCutoff * h);
        double sum = 0.0;
        for (auto it = first; it != last; ++it) {
            const double u = (y - *it) / h;
            sum += std::exp(-0.5 * u * u);
        }
        curve.samples[k] = sum * norm;
    }
    for (std::size_t k = 0; k + 1 < resolution; ++k) curve.area += 0.5 * (curve.samples[k] + curve.samples[k + 1]) * step;
    curve.max_density = *std::max_element(curve.samples.begin(), curve.samples.end());
    return curve;
}

std::vector<double> overlap_similarity(std::span<const DensityCurve> curves) {
    const std::size_t d = curves.size();
    for (const auto& c : curves)
        if (c.samples.size() != curves.front().samples.size())
            throw Error(ErrorCode::DimensionMismatch, "curves differ in resolution");
    std::vector<double> mass(d, 0.0);
    for (std::size_t i = 0; i < d; ++i)
        for (double s : curves[i].samples) mass[i] += s;

    std::vector<double> sim(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        sim[i * d + i] = mass[i] > 0.0 ? 1.0 : 0.0;
        for (std::size_t j = i + 1; j < d; ++j) {
            double shared = 0.0;
            for (std::size_t k = 0; k < curves[i].samples.size(); ++k)
                shared += std::min(curves[i].samples[k], curves[j].samples[k]);
            const double a_ij = mass[i] > 0.0 ? shared / mass[i] : 0.0;
            const double a_ji = mass[j] > 0.0 ? shared / mass[j] : 0.0;
            sim[i * d + j] = sim[j * d + i] = std::min(a_ij, a_ji);
        }
    }
    return sim;
}

SideAssignment assign_sides(std::span<const double> sim, std::size_t d) {
    if (sim.size() != d * d) throw Error(ErrorCode::DimensionMismatch, "similarity matrix must be D x D");
    SideAssignment sides;
    std::vector<bool> placed(d, false);
    auto side_max = [&](std::size_t i, const std::vector<std::size_t>& side) {
        double m = 0.0;
        for (auto k : side) m = std::max(m, sim[i * d + k]);
        return m;
    };

    std::size_t remaining = d;
    while (remaining >= 2) {
        std::size_t bi = 0, bj = 0;
        double best = -1.0;
        for (std::size_t i = 0; i < d; ++i) {
            if (placed[i]) continue;
            for (std::size_t j = i + 1; j < d; ++j) {
                if (placed[j]) continue;
                if (sim[i * d + j] > best) {
                    best = sim[i * d + j];
                    bi = i;
                    bj = j;
                }
            }
        }
        const double i_left = side_max(bi, sides.left) + side_max(bj, sides.right);
        const double i_right = side_max(bi, sides.right) + side_max(bj, sides.left);
        if (i_left <= i_right) {
            sides.left.push_back(bi);
            sides.right.push_back(bj);
        } else {
            sides.right.push_back(bi);
            sides.left.push_back(bj);
        }
        placed[bi] = placed[bj] = true;
        remaining -= 2;
    }
    if (remaining == 1) {
        const auto last = static_cast<std::size_t>(std::find(placed.begin(), placed.end(), false) - placed.begin());
        (sides.right.size() < sides.left.size() ? sides.right : sides.left).push_back(last);
    }
    return sides;
}

std::vector<std::size_t> draw_order(std::span<const DensityCurve> curves) {
    std::vector<std::size_t> order(curves.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return curves[a].area > curves[b].area; });
    for (auto& o : order) o = curves[o].parameter;
    return order;
}

}  // namespace enslens
