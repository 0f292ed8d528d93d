#pragma once

#include <cstdint>
#include <vector>

#include "bc/quant.hpp"

namespace bc {

struct CSCMatrix {
    std::vector<double> values;
    std::vector<std::size_t> row_idx;
    std::vector<std::size_t> col_ptr; // length cols + 1, nondecreasing
    int index_bits = 16;
    int value_bits = 32;
};

// Explicit zeros are dropped. ShapeError when the row count exceeds the index
// range.
CSCMatrix csc_encode(const Tensor& m, int index_bits = 16, int value_bits = 32);

// nnz (value_bits + index_bits) + (cols + 1) index_bits.
std::size_t csc_bits(const CSCMatrix& m);

struct Codebook {
    std::vector<double> centroids; // sorted ascending
    int index_bits = 0;            // ceil(log2 k) per stored weight
};

struct KMeansResult {
    Codebook codebook;
    std::vector<std::size_t> assignments; // into sorted centroids
    bool converged = true;
    double objective = 0.0; // summed squared distance
};

// Lloyd's with k-means++ seeding; deterministic for a given seed. k is
// reduced to the number of distinct values when larger.
KMeansResult kmeans_1d(const std::vector<double>& values, std::size_t k,
                       std::size_t max_iters = 100, std::uint64_t seed = 0);

struct CompressionReport {
    double sparsity_pct = 100.0; // retained weights / all weights, percent
    double rate_pruning = 1.0;   // scenario (i): compacted dense, 32-bit
    double rate_fast = 1.0;      // scenario (ii): per-layer bit widths, weights only
    double rate_max = 1.0;       // scenario (iii): k-means codebook, k <= 32
    double error_pct = 0.0;      // deterministic test error of the masked model
    std::size_t original_bits = 0;
    std::size_t bits_pruning = 0, bits_fast = 0, bits_max = 0;
    bool kmeans_converged = true;
};

// Byte accounting over the three storage scenarios. Architecture metadata is
// charged at 32 bits per retained weight-shape dimension.
CompressionReport compression_report(const Network& net, const PruneReport& prune,
                                     const QuantReport& quant, double error_pct,
                                     std::size_t kmeans_k = 32);

} // namespace bc
