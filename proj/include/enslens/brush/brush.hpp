#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <json.hpp>

#include "enslens/brush/selection_mask.hpp"
#include "enslens/core/ensemble.hpp"

namespace enslens {

// Closed interval in normalized parameter units.
struct AxisInterval {
    double lo = 0.0;
    double hi = 1.0;

    bool contains(double v) const { return lo <= v && v <= hi; }
    double length() const { return hi - lo; }
    bool operator==(const AxisInterval&) const = default;
};

struct HyperBox {
    std::vector<AxisInterval> intervals;

    static HyperBox unit(std::size_t dims) { return {std::vector<AxisInterval>(dims)}; }
    std::size_t dims() const { return intervals.size(); }
    bool contains(std::span<const float> row) const {
        for (std::size_t p = 0; p < intervals.size(); ++p)
            if (!intervals[p].contains(row[p])) return false;
        return true;
    }
    // Interval-wise containment of `other` in this box.
    bool encloses(const HyperBox& other) const;
    bool operator==(const HyperBox&) const = default;
};

nlohmann::json to_json(const HyperBox& box);
// Expects [[lo,hi], ...]; throws SchemaViolation or BadInterval.
HyperBox box_from_json(const nlohmann::json& doc);

// Extreme values of every parameter over the cluster. Throws EmptyCluster.
HyperBox brush_from_cluster(const ActivePoints& points, const ClusterSelection& cluster);
HyperBox brush_from_rows(const ActivePoints& points, std::span<const std::size_t> rows);

// Throws DimensionMismatch.
SelectionMask apply_box(const HyperBox& box, const ActivePoints& points);

// Copy of box with interval p replaced. Throws BadInterval.
HyperBox edit_interval(const HyperBox& box, std::size_t p, double lo, double hi);

struct PriorityOrder {
    std::size_t axis = 0;
    double value = 0.0;
    std::vector<std::size_t> permutation;  // rows, farthest first
    std::vector<double> distances;
};

PriorityOrder priority_order(const ActivePoints& points, std::size_t axis, double value);

struct HistogramPair {
    std::size_t parameter = 0;
    std::size_t bin_count = 0;
    std::vector<std::size_t> dataset_counts;
    std::vector<std::size_t> selection_counts;
    std::vector<double> pie_fraction;
};

// Uniform bins over [0,1]; bins are half-open except the last, which also holds 1.0.
HistogramPair histogram_pair(const ActivePoints& points, const SelectionMask& mask, std::size_t p,
                             std::size_t bin_count);
nlohmann::json to_json(const HistogramPair& h);

// |cluster| / count(mask). Throws EmptySelection.
double selection_ratio(const ClusterSelection& cluster, const SelectionMask& mask);

}  // namespace enslens
