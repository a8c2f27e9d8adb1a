#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "enslens/core/ensemble.hpp"

namespace enslens {

struct CsvIngestOptions {
    GridSpacing spacing{};
    std::optional<GridDims> dims;           // default: max index + 1 per axis over all files
    std::optional<std::string> representative;  // default: first file's member id
};

// Converts per-member CSV files (header x,y,z,<param>...; x/y/z integer grid
// indices) into the binary member format plus manifest.json in out_dir.
// The member id is the file stem; grid points absent from a file are 0.
EnsembleManifest ingest_csv(const std::vector<std::filesystem::path>& csv_files, const std::filesystem::path& out_dir,
                            const CsvIngestOptions& options = {});

}  // namespace enslens
