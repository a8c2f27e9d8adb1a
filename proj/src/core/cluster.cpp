#include "enslens/core/cluster.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <unordered_map>

#include "enslens/error.hpp"

namespace enslens {
namespace {

// Uniform hash grid over the first (up to) three coordinates with cell size eps.
class NeighborIndex {
public:
    NeighborIndex(const ActivePoints& points, double eps)
        : points_(points), eps_(eps), keyed_(std::min<std::size_t>(3, points.dims)) {
        for (std::size_t i = 0; i < points.size(); ++i) cells_[key(cell_of(i))].push_back(i);
    }

    // Neighbors within eps (including i itself), ascending index order.
    void query(std::size_t i, std::vector<std::size_t>& out) const {
        out.clear();
        const auto base = cell_of(i);
        std::array<std::int64_t, 3> off{};
        const int span = 1;
        const std::size_t combos = keyed_ == 0 ? 1 : static_cast<std::size_t>(std::pow(3, keyed_));
        for (std::size_t c = 0; c < combos; ++c) {
            std::size_t r = c;
            for (std::size_t k = 0; k < 3; ++k) {
                off[k] = k < keyed_ ? static_cast<std::int64_t>(r % 3) - span : 0;
                if (k < keyed_) r /= 3;
            }
            std::array<std::int64_t, 3> cell{base[0] + off[0], base[1] + off[1], base[2] + off[2]};
            auto it = cells_.find(key(cell));
            if (it == cells_.end()) continue;
            for (auto j : it->second)
                if (dist_sq(i, j) <= eps_ * eps_) out.push_back(j);
        }
        std::sort(out.begin(), out.end());
    }

private:
    std::array<std::int64_t, 3> cell_of(std::size_t i) const {
        std::array<std::int64_t, 3> c{0, 0, 0};
        for (std::size_t k = 0; k < keyed_; ++k)
            c[k] = static_cast<std::int64_t>(std::floor(points_.coord(i, k) / eps_));
        return c;
    }
    static std::uint64_t key(const std::array<std::int64_t, 3>& c) {
        return (static_cast<std::uint64_t>(c[0] + (1 << 20)) << 42) ^
               (static_cast<std::uint64_t>(c[1] + (1 << 20)) << 21) ^ static_cast<std::uint64_t>(c[2] + (1 << 20));
    }
    double dist_sq(std::size_t a, std::size_t b) const {
        double s = 0.0;
        for (std::size_t p = 0; p < points_.dims; ++p) {
            const double d = double(points_.coord(a, p)) - double(points_.coord(b, p));
            s += d * d;
        }
        return s;
    }

    const ActivePoints& points_;
    double eps_;
    std::size_t keyed_;
    std::unordered_map<std::uint64_t, std::vector<std::size_t>> cells_;
};

}  // namespace

std::vector<ClusterSelection> baseline_cluster(const ActivePoints& points, double eps, std::size_t min_pts) {
    if (!(eps > 0.0)) throw Error(ErrorCode::ConfigInvalid, "eps must be positive");
    if (min_pts < 1) throw Error(ErrorCode::ConfigInvalid, "min_pts must be >= 1");

    constexpr std::int64_t kUnvisited = -2;
    constexpr std::int64_t kNoise = -1;
    std::vector<std::int64_t> label(points.size(), kUnvisited);
    NeighborIndex index(points, eps);
    std::vector<std::size_t> neighbors, frontier, inner;
    std::int64_t next_label = 0;

    for (std::size_t i = 0; i < points.size(); ++i) {
        if (label[i] != kUnvisited) continue;
        index.query(i, neighbors);
        if (neighbors.size() < min_pts) {
            label[i] = kNoise;
            continue;
        }
        const std::int64_t cluster = next_label++;
        label[i] = cluster;
        frontier.clear();
        auto absorb = [&](const std::vector<std::size_t>& found) {
            for (auto j : found) {
                if (label[j] == kNoise) label[j] = cluster;  // border point, already known non-core
                if (label[j] != kUnvisited) continue;
                label[j] = cluster;
                frontier.push_back(j);
            }
        };
        absorb(neighbors);
        for (std::size_t f = 0; f < frontier.size(); ++f) {
            index.query(frontier[f], inner);
            if (inner.size() >= min_pts) absorb(inner);
        }
    }

    std::vector<ClusterSelection> out(static_cast<std::size_t>(next_label));
    for (std::size_t c = 0; c < out.size(); ++c) {
        out[c].member_id = points.member_id;
        out[c].label = "c" + std::to_string(c);
    }
    for (std::size_t i = 0; i < points.size(); ++i)
        if (label[i] >= 0) out[static_cast<std::size_t>(label[i])].point_indices.push_back(points.indices[i]);
    return out;
}

}  // namespace enslens
