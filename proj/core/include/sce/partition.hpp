#pragma once

#include <vector>

#include "sce/atlas.hpp"

namespace sce {

// Chart-subordinate weights U_k sampled on each chart's own nodes.
struct PartitionOfUnity {
    AtlasPtr atlas;
    std::vector<Samples> weight;  // weight[k] on chart k's grid
    std::vector<double> eps_chart;  // eps_k: distance from supp U_k to the chart boundary
    double eps0 = 0.0;  // 1/4 min eps_k
    double margin = 0.0;
};

}  // namespace sce
