#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include <json.hpp>

#include "enslens/core/ensemble.hpp"

namespace enslens {

// An oblique Gaussian in parameter space occupying a contiguous spatial blob.
struct PlantedCluster {
    std::vector<double> center;      // D values in [0,1]
    std::vector<double> covariance;  // D x D, row-major, symmetric positive definite
    std::size_t size = 0;            // number of grid points in the blob
    double member_jitter = 0.0;      // std-dev of the per-member center shift (not applied to the representative)
    std::array<double, 3> spatial_center{0.5, 0.5, 0.5};  // blob center as a fraction of the grid extent
};

struct SynthConfig {
    std::size_t members = 4;
    std::size_t params = 4;
    GridDims dims{24, 24, 24};
    GridSpacing spacing{};
    std::vector<PlantedCluster> clusters;
    double background_density = 0.1;  // fraction of non-blob grid points filled with uniform values
    std::vector<double> background_lo;  // per-parameter lower bound of the uniform background (default 0)
    std::vector<double> background_hi;  // per-parameter upper bound (default 1)
};

struct SynthEnsemble {
    EnsembleManifest manifest;  // member files are named but not yet written
    std::vector<MemberField> fields;
    std::vector<ClusterSelection> ground_truth;  // one per planted cluster, on the representative
};

// Throws ConfigInvalid.
void validate(const SynthConfig& config);
SynthConfig synth_config_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const SynthConfig& config);

// Small default: one 500-point cluster with correlation 0.9 between parameters 0 and 1.
SynthConfig default_synth_config();
// Desk-scale stand-in for the over-selection scenario: M=10, D=9, 40^3 grid, one oblique cluster.
SynthConfig reduction_synth_config();

SynthEnsemble synth_ensemble(std::uint64_t seed, const SynthConfig& config);
// Writes manifest.json, one member_<id>.bin per member and clusters.json.
EnsembleManifest write_synth_ensemble(const SynthEnsemble& ensemble, const std::filesystem::path& out_dir);

}  // namespace enslens
