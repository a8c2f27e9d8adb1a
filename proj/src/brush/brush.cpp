#include "enslens/brush/brush.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "enslens/error.hpp"
#include "enslens/util/parallel.hpp"

namespace enslens {

bool HyperBox::encloses(const HyperBox& other) const {
    if (other.dims() != dims()) return false;
    for (std::size_t p = 0; p < dims(); ++p)
        if (other.intervals[p].lo < intervals[p].lo || other.intervals[p].hi > intervals[p].hi) return false;
    return true;
}

nlohmann::json to_json(const HyperBox& box) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& iv : box.intervals) out.push_back({iv.lo, iv.hi});
    return out;
}

HyperBox box_from_json(const nlohmann::json& doc) {
    if (!doc.is_array() || doc.empty()) throw Error(ErrorCode::SchemaViolation, "box must be a non-empty array");
    HyperBox box;
    for (const auto& iv : doc) {
        if (!iv.is_array() || iv.size() != 2 || !iv[0].is_number() || !iv[1].is_number())
            throw Error(ErrorCode::SchemaViolation, "box interval must be [lo, hi]");
        const double lo = iv[0].get<double>(), hi = iv[1].get<double>();
        if (!(lo <= hi)) throw Error(ErrorCode::BadInterval, "lo > hi");
        box.intervals.push_back({lo, hi});
    }
    return box;
}

HyperBox brush_from_rows(const ActivePoints& points, std::span<const std::size_t> rows) {
    if (rows.empty()) throw Error(ErrorCode::EmptyCluster, "cannot derive a brush from no points");
    HyperBox box;
    box.intervals.assign(points.dims, {std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()});
    for (auto r : rows) {
        const auto row = points.row(r);
        for (std::size_t p = 0; p < points.dims; ++p) {
            box.intervals[p].lo = std::min(box.intervals[p].lo, static_cast<double>(row[p]));
            box.intervals[p].hi = std::max(box.intervals[p].hi, static_cast<double>(row[p]));
        }
    }
    return box;
}

HyperBox brush_from_cluster(const ActivePoints& points, const ClusterSelection& cluster) {
    if (cluster.point_indices.empty()) throw Error(ErrorCode::EmptyCluster, cluster.label);
    const auto rows = cluster_rows(points, cluster);
    return brush_from_rows(points, rows);
}

SelectionMask apply_box(const HyperBox& box, const ActivePoints& points) {
    if (box.dims() != points.dims)
        throw Error(ErrorCode::DimensionMismatch,
                    "box has " + std::to_string(box.dims()) + " intervals, data has " + std::to_string(points.dims));
    const std::size_t d = points.dims;
    std::vector<float> lo(d), hi(d);
    // Float bounds that admit exactly the float coordinates the double interval admits.
    for (std::size_t p = 0; p < d; ++p) {
        float l = static_cast<float>(box.intervals[p].lo);
        if (double(l) < box.intervals[p].lo) l = std::nextafter(l, std::numeric_limits<float>::infinity());
        float h = static_cast<float>(box.intervals[p].hi);
        if (double(h) > box.intervals[p].hi) h = std::nextafter(h, -std::numeric_limits<float>::infinity());
        lo[p] = l;
        hi[p] = h;
    }
    SelectionMask mask(points.member_id, points.size());
    auto& words = mask.mutable_words();
    const float* coords = points.coords.data();
    parallel_for(points.size(), 64, [&](std::size_t begin, std::size_t end) {
        for (std::size_t w = begin / 64; w * 64 < end; ++w) {
            std::uint64_t bits = 0;
            const std::size_t stop = std::min(end, w * 64 + 64);
            for (std::size_t i = w * 64; i < stop; ++i) {
                const float* row = coords + i * d;
                bool in = true;
                for (std::size_t p = 0; p < d; ++p) in &= (row[p] >= lo[p]) & (row[p] <= hi[p]);
                bits |= std::uint64_t(in) << (i - w * 64);
            }
            words[w] = bits;
        }
    });
    mask.recount();
    return mask;
}

HyperBox edit_interval(const HyperBox& box, std::size_t p, double lo, double hi) {
    if (p >= box.dims()) throw Error(ErrorCode::DimensionMismatch, "parameter " + std::to_string(p) + " out of range");
    if (!(0.0 <= lo && lo <= hi && hi <= 1.0))
        throw Error(ErrorCode::BadInterval, "need 0 <= lo <= hi <= 1, got [" + std::to_string(lo) + ", " +
                                                std::to_string(hi) + "]");
    HyperBox out = box;
    out.intervals[p] = {lo, hi};
    return out;
}

PriorityOrder priority_order(const ActivePoints& points, std::size_t axis, double value) {
    if (axis >= points.dims) throw Error(ErrorCode::DimensionMismatch, "axis out of range");
    PriorityOrder order;
    order.axis = axis;
    order.value = value;
    std::vector<double> dist(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) dist[i] = std::abs(double(points.coord(i, axis)) - value);
    order.permutation.resize(points.size());
    std::iota(order.permutation.begin(), order.permutation.end(), std::size_t{0});
    std::stable_sort(order.permutation.begin(), order.permutation.end(),
                     [&](std::size_t a, std::size_t b) { return dist[a] > dist[b]; });
    order.distances.resize(points.size());
    for (std::size_t k = 0; k < points.size(); ++k) order.distances[k] = dist[order.permutation[k]];
    return order;
}

HistogramPair histogram_pair(const ActivePoints& points, const SelectionMask& mask, std::size_t p,
                             std::size_t bin_count) {
    if (bin_count < 1) throw Error(ErrorCode::ConfigInvalid, "bin_count must be >= 1");
    if (p >= points.dims) throw Error(ErrorCode::DimensionMismatch, "parameter out of range");
    if (mask.size() != points.size()) throw Error(ErrorCode::DimensionMismatch, "mask does not match points");
    HistogramPair h;
    h.parameter = p;
    h.bin_count = bin_count;
    h.dataset_counts.assign(bin_count, 0);
    h.selection_counts.assign(bin_count, 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
        const double v = points.coord(i, p);
        auto bin = static_cast<std::size_t>(std::clamp(std::floor(v * double(bin_count)), 0.0, double(bin_count - 1)));
        ++h.dataset_counts[bin];
        if (mask.test(i)) ++h.selection_counts[bin];
    }
    h.pie_fraction.resize(bin_count);
    for (std::size_t b = 0; b < bin_count; ++b)
        h.pie_fraction[b] = h.dataset_counts[b] ? double(h.selection_counts[b]) / double(h.dataset_counts[b]) : 0.0;
    return h;
}

nlohmann::json to_json(const HistogramPair& h) {
    return {{"parameter", h.parameter},
            {"bin_count", h.bin_count},
            {"dataset_counts", h.dataset_counts},
            {"selection_counts", h.selection_counts},
            {"pie_fraction", h.pie_fraction}};
}

double selection_ratio(const ClusterSelection& cluster, const SelectionMask& mask) {
    if (cluster.member_id != mask.member_id())
        throw Error(ErrorCode::UnknownMember, "cluster and mask belong to different members");
    if (mask.count() == 0) throw Error(ErrorCode::EmptySelection, "mask selects no points");
    return double(cluster.point_indices.size()) / double(mask.count());
}

}  // namespace enslens
