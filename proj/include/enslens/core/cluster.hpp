#pragma once

#include <cstddef>
#include <vector>

#include "enslens/core/ensemble.hpp"

namespace enslens {

// Density-based clustering (DBSCAN) over normalized coordinates. Points are
// visited in index order so labels are deterministic; noise stays unlabeled.
// Clusters are labelled c0, c1, ... in discovery order.
std::vector<ClusterSelection> baseline_cluster(const ActivePoints& points, double eps, std::size_t min_pts);

}  // namespace enslens
