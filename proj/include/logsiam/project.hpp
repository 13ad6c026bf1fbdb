#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "logsiam/net.hpp"

namespace logsiam {

// 2-D (or dims-D) layout of embedded sequences for plot export.
struct Projection2D {
    std::vector<std::string> ids;
    std::vector<int> labels;
    Matrix points;  // dims x N
    std::string method;
    nlohmann::json params;
    // contiguous id ranges tagging split membership: (name, first_row, count)
    std::vector<std::tuple<std::string, std::size_t, std::size_t>> splits;
};

struct PcaResult {
    Projection2D projection;
    Matrix components;          // D x dims, orthonormal columns
    Vector eigenvalues;         // descending
    Vector explained_variance;  // fraction of total variance per component
    double total_variance = 0.0;
};

// Projects the centered data onto the top principal components of the sample
// covariance. Eigenpairs come from power iteration with deflation.
PcaResult pca_project(const Matrix& vectors, const std::vector<std::string>& ids,
                      const std::vector<int>& labels, int dims = 2);

// Exact O(n^2) t-SNE with the standard early-exaggeration schedule; inputs
// above 5,000 points must be subsampled by the caller.
Projection2D tsne_project(const Matrix& vectors, const std::vector<std::string>& ids,
                          const std::vector<int>& labels, double perplexity = 30.0,
                          int iterations = 1000, std::uint64_t seed = 0);

// CSV `id,label,x,y` preceded by `#`-prefixed metadata lines. Coordinates are
// serialized at 9 significant digits (float precision), which round-trips
// exactly.
void export_plot_data(const Projection2D& p, const std::filesystem::path& path);

Projection2D parse_plot_data(const std::filesystem::path& path);

}  // namespace logsiam
