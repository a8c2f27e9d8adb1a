#include "enslens/refine/refine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "enslens/error.hpp"
#include "enslens/util/linalg.hpp"
#include "enslens/util/parallel.hpp"

namespace enslens {

SplitCandidate sah_best_split(std::span<const double> coords, const AxisInterval& interval, std::size_t axis) {
    const double length = interval.length();
    if (!(length > 0.0)) throw Error(ErrorCode::Degenerate, "interval has no length");
    std::vector<double> sorted(coords.begin(), coords.end());
    std::sort(sorted.begin(), sorted.end());
    if (sorted.empty() || sorted.front() == sorted.back())
        throw Error(ErrorCode::Degenerate, "all coordinates on axis " + std::to_string(axis) + " coincide");

    const std::size_t n = sorted.size();
    SplitCandidate best;
    best.axis = axis;
    best.cost = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n;) {
        const double v = sorted[i];
        std::size_t j = i;
        while (j < n && sorted[j] == v) ++j;
        const double below = double(i), at = double(j - i), above = double(n - j);
        const double len_l = v - interval.lo;
        const double len_r = interval.hi - v;
        const double cost_left = (below + at) * len_l / length + above * len_r / length;
        const double cost_right = below * len_l / length + (above + at) * len_r / length;
        bool left;
        if (cost_left != cost_right)
            left = cost_left < cost_right;
        else
            left = below >= above;
        const double cost = left ? cost_left : cost_right;
        if (cost < best.cost) {
            best.value = v;
            best.cost = cost;
            best.left_assign = left;
        }
        i = j;
    }
    return best;
}

HyperBox narrow(const HyperBox& box, const ActivePoints& points, std::span<const std::size_t> rows, std::size_t axis,
                bool faces_upper) {
    if (rows.empty()) return box;
    HyperBox out = box;
    double extreme = faces_upper ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
    for (auto r : rows) {
        const double v = points.coord(r, axis);
        extreme = faces_upper ? std::max(extreme, v) : std::min(extreme, v);
    }
    if (faces_upper)
        out.intervals[axis].hi = extreme;
    else
        out.intervals[axis].lo = extreme;
    return out;
}

HyperBox narrow_all(const HyperBox& box, const ActivePoints& points, std::span<const std::size_t> rows) {
    if (rows.empty()) return box;
    return brush_from_rows(points, rows);
}

double mahalanobis_squared(const ConfidenceEllipsoid& e, std::span<const float> point) {
    const std::size_t d = e.dims();
    double sum = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
        if (e.degenerate[k]) continue;
        double proj = 0.0;
        for (std::size_t p = 0; p < d; ++p) proj += (double(point[p]) - e.mean[p]) * e.axes[k * d + p];
        sum += proj * proj / e.eigenvalues[k];
    }
    return sum;
}

ConfidenceEllipsoid fit_ellipsoid(const ActivePoints& points, std::span<const std::size_t> rows) {
    const std::size_t n = rows.size();
    if (n < 2) throw Error(ErrorCode::TooFewPoints, "an ellipsoid needs at least 2 points");
    const std::size_t d = points.dims;

    ConfidenceEllipsoid e;
    e.mean.assign(d, 0.0);
    for (auto r : rows)
        for (std::size_t p = 0; p < d; ++p) e.mean[p] += points.coord(r, p);
    for (auto& m : e.mean) m /= double(n);

    std::vector<double> cov(d * d, 0.0);
    std::vector<double> dev(d);
    for (auto r : rows) {
        for (std::size_t p = 0; p < d; ++p) dev[p] = double(points.coord(r, p)) - e.mean[p];
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = i; j < d; ++j) cov[i * d + j] += dev[i] * dev[j];
    }
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i; j < d; ++j) {
            cov[i * d + j] /= double(n - 1);
            cov[j * d + i] = cov[i * d + j];
        }

    auto eig = linalg::jacobi_eigen(cov, d);
    e.axes = std::move(eig.vectors);
    e.eigenvalues = std::move(eig.values);
    e.degenerate.assign(d, false);
    for (std::size_t k = 0; k < d; ++k) {
        e.eigenvalues[k] = std::max(0.0, e.eigenvalues[k]);
        e.degenerate[k] = e.eigenvalues[k] < kDegenerateEpsilon;
    }

    std::vector<double> dist(n);
    for (std::size_t i = 0; i < n; ++i) dist[i] = mahalanobis_squared(e, points.row(rows[i]));
    std::sort(dist.begin(), dist.end());
    const std::size_t needed = (68 * n + 99) / 100;  // ceil(0.68 n)
    e.radius_squared = dist[needed - 1];
    e.radius = std::sqrt(e.radius_squared);
    e.scales.resize(d);
    for (std::size_t k = 0; k < d; ++k) e.scales[k] = std::sqrt(e.eigenvalues[k]) * e.radius;
    return e;
}

bool ellipsoid_contains(const ConfidenceEllipsoid& e, std::span<const float> point) {
    if (point.size() != e.dims()) throw Error(ErrorCode::DimensionMismatch, "point and ellipsoid dimensions differ");
    return mahalanobis_squared(e, point) <= e.radius_squared;
}

std::vector<RefinedBox> kd_refine(const HyperBox& box, const ActivePoints& points, std::span<const std::size_t> rows,
                                  std::size_t passes_per_axis, std::size_t min_leaf) {
    if (rows.empty()) throw Error(ErrorCode::EmptyCluster, "kd_refine needs cluster points");
    if (box.dims() != points.dims) throw Error(ErrorCode::DimensionMismatch, "box and points dimensions differ");
    struct Leaf {
        HyperBox box;
        std::vector<std::size_t> rows;
    };
    std::vector<Leaf> leaves{{box, {rows.begin(), rows.end()}}};
    std::vector<double> coords;

    for (std::size_t pass = 0; pass < passes_per_axis; ++pass) {
        for (std::size_t axis = 0; axis < points.dims; ++axis) {
            std::vector<Leaf> next;
            next.reserve(leaves.size() * 2);
            for (auto& leaf : leaves) {
                coords.resize(leaf.rows.size());
                for (std::size_t i = 0; i < leaf.rows.size(); ++i) coords[i] = points.coord(leaf.rows[i], axis);
                SplitCandidate split;
                try {
                    split = sah_best_split(coords, leaf.box.intervals[axis], axis);
                } catch (const Error& e) {
                    if (e.code() != ErrorCode::Degenerate) throw;
                    next.push_back(std::move(leaf));
                    continue;
                }
                Leaf left{leaf.box, {}}, right{leaf.box, {}};
                for (std::size_t i = 0; i < leaf.rows.size(); ++i) {
                    const bool go_left = coords[i] < split.value || (coords[i] == split.value && split.left_assign);
                    (go_left ? left : right).rows.push_back(leaf.rows[i]);
                }
                left.box.intervals[axis].hi = split.value;
                right.box.intervals[axis].lo = split.value;
                if (split.left_assign)
                    right.box = narrow(right.box, points, right.rows, axis, false);
                else
                    left.box = narrow(left.box, points, left.rows, axis, true);
                if (!left.rows.empty()) next.push_back(std::move(left));
                if (!right.rows.empty()) next.push_back(std::move(right));
            }
            leaves = std::move(next);
        }
    }

    std::vector<RefinedBox> out;
    out.reserve(leaves.size());
    for (auto& leaf : leaves) {
        RefinedBox rb;
        rb.box = narrow_all(leaf.box, points, leaf.rows);
        rb.point_count = leaf.rows.size();
        rb.rows = std::move(leaf.rows);
        rb.degenerate = rb.point_count < min_leaf;
        out.push_back(std::move(rb));
    }
    return out;
}

std::string to_string(BrushMode mode) {
    return mode == BrushMode::BoxesOnly ? "boxes_only" : "boxes_and_ellipsoids";
}

BrushMode brush_mode_from_string(const std::string& s) {
    if (s == "boxes_only" || s == "kd") return BrushMode::BoxesOnly;
    if (s == "boxes_and_ellipsoids" || s == "ellipsoid") return BrushMode::BoxesAndEllipsoids;
    throw Error(ErrorCode::SchemaViolation, "unknown brush mode '" + s + "'");
}

MultiParameterBrush single_box_brush(const HyperBox& box) {
    MultiParameterBrush brush;
    RefinedBox rb;
    rb.box = box;
    rb.degenerate = true;
    brush.boxes.push_back(std::move(rb));
    return brush;
}

MultiParameterBrush refine_brush(const HyperBox& initial, const ActivePoints& points,
                                 std::span<const std::size_t> cluster_rows, BrushMode mode,
                                 std::size_t passes_per_axis, std::size_t min_leaf) {
    if (initial.dims() != points.dims) throw Error(ErrorCode::DimensionMismatch, "box and points dimensions differ");
    std::vector<std::size_t> inside;
    for (auto r : cluster_rows)
        if (initial.contains(points.row(r))) inside.push_back(r);
    if (inside.empty()) throw Error(ErrorCode::EmptyCluster, "no cluster point lies inside the brush");

    MultiParameterBrush brush;
    brush.mode = mode;
    brush.boxes = kd_refine(initial, points, inside, passes_per_axis, min_leaf);
    if (mode == BrushMode::BoxesAndEllipsoids) {
        parallel_each(brush.boxes.size(), [&](std::size_t i) {
            auto& rb = brush.boxes[i];
            if (!rb.degenerate) rb.ellipsoid = fit_ellipsoid(points, rb.rows);
        });
    }
    return brush;
}

namespace {

// Bounding-volume hierarchy over the brush boxes so each point only visits
// boxes whose bounds contain it.
class BoxIndex {
public:
    explicit BoxIndex(const MultiParameterBrush& brush) : brush_(brush), dims_(brush.dims()) {
        ids_.resize(brush.boxes.size());
        std::iota(ids_.begin(), ids_.end(), std::size_t{0});
        if (!ids_.empty()) build(0, ids_.size());
    }

    bool selects(std::span<const float> row) const {
        if (nodes_.empty()) return false;
        std::size_t stack[128];
        std::size_t top = 0;
        stack[top++] = 0;
        while (top) {
            const Node& node = nodes_[stack[--top]];
            if (!inside(node.lo, node.hi, row)) continue;
            if (node.leaf) {
                for (std::size_t k = node.begin; k < node.end; ++k)
                    if (box_selects(brush_.boxes[ids_[k]], row)) return true;
            } else {
                stack[top++] = node.right;
                stack[top++] = node.left;
            }
        }
        return false;
    }

private:
    struct Node {
        std::vector<double> lo, hi;
        std::size_t left = 0, right = 0, begin = 0, end = 0;
        bool leaf = false;
    };

    bool inside(const std::vector<double>& lo, const std::vector<double>& hi, std::span<const float> row) const {
        for (std::size_t p = 0; p < dims_; ++p)
            if (!(lo[p] <= row[p] && row[p] <= hi[p])) return false;
        return true;
    }

    bool box_selects(const RefinedBox& rb, std::span<const float> row) const {
        if (!rb.box.contains(row)) return false;
        if (brush_.mode == BrushMode::BoxesOnly || !rb.ellipsoid) return true;
        return ellipsoid_contains(*rb.ellipsoid, row);
    }

    std::size_t build(std::size_t begin, std::size_t end) {
        const std::size_t index = nodes_.size();
        nodes_.emplace_back();
        Node node;
        node.lo.assign(dims_, std::numeric_limits<double>::infinity());
        node.hi.assign(dims_, -std::numeric_limits<double>::infinity());
        for (std::size_t k = begin; k < end; ++k)
            for (std::size_t p = 0; p < dims_; ++p) {
                node.lo[p] = std::min(node.lo[p], brush_.boxes[ids_[k]].box.intervals[p].lo);
                node.hi[p] = std::max(node.hi[p], brush_.boxes[ids_[k]].box.intervals[p].hi);
            }
        node.begin = begin;
        node.end = end;
        if (end - begin <= 4) {
            node.leaf = true;
            nodes_[index] = std::move(node);
            return index;
        }
        std::size_t axis = 0;
        double widest = -1.0;
        for (std::size_t p = 0; p < dims_; ++p)
            if (node.hi[p] - node.lo[p] > widest) {
                widest = node.hi[p] - node.lo[p];
                axis = p;
            }
        auto center = [&](std::size_t id) {
            const auto& iv = brush_.boxes[id].box.intervals[axis];
            return iv.lo + iv.hi;
        };
        const auto first = ids_.begin() + static_cast<std::ptrdiff_t>(begin);
        const auto last = ids_.begin() + static_cast<std::ptrdiff_t>(end);
        std::stable_sort(first, last, [&](std::size_t a, std::size_t b) { return center(a) < center(b); });
        const std::size_t mid = begin + (end - begin) / 2;
        nodes_[index] = std::move(node);
        const std::size_t l = build(begin, mid);
        const std::size_t r = build(mid, end);
        nodes_[index].left = l;
        nodes_[index].right = r;
        return index;
    }

    const MultiParameterBrush& brush_;
    std::size_t dims_;
    std::vector<std::size_t> ids_;
    std::vector<Node> nodes_;
};

}  // namespace

SelectionMask apply_refined(const MultiParameterBrush& brush, const ActivePoints& points) {
    if (brush.boxes.empty()) throw Error(ErrorCode::SchemaViolation, "brush has no boxes");
    for (const auto& rb : brush.boxes)
        if (rb.box.dims() != points.dims) throw Error(ErrorCode::DimensionMismatch, "brush and points dimensions differ");
    const BoxIndex index(brush);
    SelectionMask mask(points.member_id, points.size());
    auto& words = mask.mutable_words();
    parallel_for(points.size(), 64, [&](std::size_t begin, std::size_t end) {
        for (std::size_t w = begin / 64; w * 64 < end; ++w) {
            std::uint64_t bits = 0;
            const std::size_t stop = std::min(end, w * 64 + 64);
            for (std::size_t i = w * 64; i < stop; ++i)
                if (index.selects(points.row(i))) bits |= std::uint64_t{1} << (i - w * 64);
            words[w] = bits;
        }
    });
    mask.recount();
    return mask;
}

nlohmann::json to_json(const ConfidenceEllipsoid& e) {
    std::vector<int> degenerate(e.degenerate.begin(), e.degenerate.end());
    return {{"mean", e.mean},   {"axes", e.axes},
            {"eigenvalues", e.eigenvalues}, {"scales", e.scales},
            {"radius", e.radius}, {"radius_squared", e.radius_squared},
            {"degenerate", degenerate}};
}

nlohmann::json to_json(const MultiParameterBrush& brush) {
    nlohmann::json boxes = nlohmann::json::array();
    for (const auto& rb : brush.boxes) {
        nlohmann::json b = {{"box", to_json(rb.box)}, {"points", rb.point_count}, {"degenerate", rb.degenerate}};
        b["ellipsoid"] = rb.ellipsoid ? to_json(*rb.ellipsoid) : nlohmann::json(nullptr);
        boxes.push_back(std::move(b));
    }
    return {{"mode", to_string(brush.mode)}, {"dims", brush.dims()}, {"boxes", boxes}};
}

MultiParameterBrush brush_from_json(const nlohmann::json& doc) {
    try {
        MultiParameterBrush brush;
        brush.mode = brush_mode_from_string(doc.at("mode").get<std::string>());
        for (const auto& b : doc.at("boxes")) {
            RefinedBox rb;
            rb.box = box_from_json(b.at("box"));
            rb.point_count = b.value("points", std::size_t{0});
            rb.degenerate = b.value("degenerate", false);
            if (b.contains("ellipsoid") && !b.at("ellipsoid").is_null()) {
                const auto& j = b.at("ellipsoid");
                ConfidenceEllipsoid e;
                e.mean = j.at("mean").get<std::vector<double>>();
                e.axes = j.at("axes").get<std::vector<double>>();
                e.eigenvalues = j.at("eigenvalues").get<std::vector<double>>();
                e.scales = j.at("scales").get<std::vector<double>>();
                e.radius = j.at("radius").get<double>();
                e.radius_squared = j.at("radius_squared").get<double>();
                for (int flag : j.at("degenerate").get<std::vector<int>>()) e.degenerate.push_back(flag != 0);
                const std::size_t d = e.mean.size();
                if (d != rb.box.dims() || e.axes.size() != d * d || e.eigenvalues.size() != d ||
                    e.scales.size() != d || e.degenerate.size() != d)
                    throw Error(ErrorCode::SchemaViolation, "ellipsoid dimensions do not match its box");
                rb.ellipsoid = std::move(e);
            }
            brush.boxes.push_back(std::move(rb));
        }
        if (brush.boxes.empty()) throw Error(ErrorCode::SchemaViolation, "brush has no boxes");
        for (const auto& rb : brush.boxes)
            if (rb.box.dims() != brush.dims()) throw Error(ErrorCode::SchemaViolation, "boxes differ in dimension");
        return brush;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::SchemaViolation, e.what());
    }
}

}  // namespace enslens
