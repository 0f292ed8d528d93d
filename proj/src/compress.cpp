#include "bc/compress.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "bc/rng.hpp"

namespace bc {

CSCMatrix csc_encode(const Tensor& m, int index_bits, int value_bits) {
    if (m.rank() != 2) throw ShapeError("csc_encode expects a matrix");
    std::size_t rows = m.shape[0], cols = m.shape[1];
    if (index_bits < 64 && rows > (std::size_t{1} << index_bits))
        throw ShapeError("csc_encode: " + std::to_string(rows) + " rows exceed " +
                         std::to_string(index_bits) + "-bit indices");
    CSCMatrix out;
    out.index_bits = index_bits;
    out.value_bits = value_bits;
    out.col_ptr.push_back(0);
    for (std::size_t j = 0; j < cols; ++j) {
        for (std::size_t i = 0; i < rows; ++i) {
            double v = m.at(i, j);
            if (v != 0.0) {
                out.values.push_back(v);
                out.row_idx.push_back(i);
            }
        }
        out.col_ptr.push_back(out.values.size());
    }
    return out;
}

std::size_t csc_bits(const CSCMatrix& m) {
    return m.values.size() * (m.value_bits + m.index_bits) +
           m.col_ptr.size() * m.index_bits;
}

KMeansResult kmeans_1d(const std::vector<double>& values, std::size_t k,
                       std::size_t max_iters, std::uint64_t seed) {
    if (values.empty()) throw DomainError("kmeans_1d: empty input");
    if (k < 1) throw DomainError("kmeans_1d: k must be >= 1");
    std::set<double> distinct(values.begin(), values.end());
    k = std::min(k, distinct.size());

    // k-means++ seeding.
    Rng rng(seed);
    std::vector<double> centroids;
    centroids.push_back(values[rng.integer(values.size())]);
    std::vector<double> d2(values.size());
    while (centroids.size() < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < values.size(); ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (double c : centroids) best = std::min(best, (values[i] - c) * (values[i] - c));
            d2[i] = best;
            total += best;
        }
        double target = rng.uniform() * total;
        std::size_t pick = 0;
        double acc = 0.0;
        for (std::size_t i = 0; i < values.size(); ++i) {
            acc += d2[i];
            if (acc >= target && d2[i] > 0.0) { pick = i; break; }
        }
        centroids.push_back(values[pick]);
    }

    std::vector<std::size_t> assign(values.size(), 0);
    bool converged = false;
    for (std::size_t it = 0; it < max_iters && !converged; ++it) {
        converged = true;
        for (std::size_t i = 0; i < values.size(); ++i) {
            std::size_t best = 0;
            double bd = std::abs(values[i] - centroids[0]);
            for (std::size_t c = 1; c < centroids.size(); ++c) {
                double d = std::abs(values[i] - centroids[c]);
                if (d < bd) { bd = d; best = c; }
            }
            if (assign[i] != best) { assign[i] = best; converged = false; }
        }
        std::vector<double> sum(centroids.size(), 0.0);
        std::vector<std::size_t> cnt(centroids.size(), 0);
        for (std::size_t i = 0; i < values.size(); ++i) {
            sum[assign[i]] += values[i];
            ++cnt[assign[i]];
        }
        for (std::size_t c = 0; c < centroids.size(); ++c) {
            if (cnt[c] > 0) {
                centroids[c] = sum[c] / static_cast<double>(cnt[c]);
            } else {
                // Re-seed an empty cluster at the farthest point.
                std::size_t far = 0;
                double fd = -1.0;
                for (std::size_t i = 0; i < values.size(); ++i) {
                    double d = std::abs(values[i] - centroids[assign[i]]);
                    if (d > fd) { fd = d; far = i; }
                }
                centroids[c] = values[far];
                converged = false;
            }
        }
    }

    // Sort the codebook and remap assignments.
    std::vector<std::size_t> order(centroids.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return centroids[a] < centroids[b]; });
    std::vector<std::size_t> rank(centroids.size());
    for (std::size_t r = 0; r < order.size(); ++r) rank[order[r]] = r;

    KMeansResult res;
    res.codebook.centroids.resize(centroids.size());
    for (std::size_t r = 0; r < order.size(); ++r)
        res.codebook.centroids[r] = centroids[order[r]];
    res.codebook.index_bits =
        centroids.size() <= 1
            ? 0
            : static_cast<int>(std::ceil(std::log2(static_cast<double>(centroids.size()))));
    res.assignments.resize(values.size());
    res.converged = converged;
    for (std::size_t i = 0; i < values.size(); ++i) {
        res.assignments[i] = rank[assign[i]];
        double d = values[i] - res.codebook.centroids[res.assignments[i]];
        res.objective += d * d;
    }
    return res;
}

CompressionReport compression_report(const Network& net, const PruneReport& prune,
                                     const QuantReport& quant, double error_pct,
                                     std::size_t kmeans_k) {
    CompressionReport rep;
    rep.error_pct = error_pct;
    rep.sparsity_pct = 100.0 * static_cast<double>(prune.weights_retained) /
                       static_cast<double>(prune.weights_original);

    // Shape metadata, 32 bits per weight dimension. Pruning preserves each
    // layer's rank, so the original model carries the same charge — with
    // nothing pruned, rate_pruning is exactly 1.
    std::size_t meta_bits = 0;
    for (const auto& info : prune.layers) meta_bits += 32 * info.weight_dims.size();
    rep.original_bits =
        32 * (prune.weights_original + prune.biases_original) + meta_bits;

    rep.bits_pruning = meta_bits;
    rep.bits_fast = meta_bits;
    rep.bits_max = meta_bits;
    for (std::size_t li = 0; li < prune.layers.size(); ++li) {
        const LayerPruneInfo& info = prune.layers[li];
        std::size_t bias_bits = 32 * info.bias_count;
        rep.bits_pruning += 32 * info.weight_count + bias_bits;

        int width = quant.layers[li].fully_pruned ? 0 : quant.layers[li].total_bits;
        rep.bits_fast += static_cast<std::size_t>(width) * info.weight_count + bias_bits;

        if (info.weight_count > 0) {
            std::vector<double> w = retained_weights(*net.layers[li], info);
            KMeansResult km = kmeans_1d(w, kmeans_k);
            if (!km.converged) rep.kmeans_converged = false;
            rep.bits_max += static_cast<std::size_t>(km.codebook.index_bits) * w.size() +
                            32 * km.codebook.centroids.size() + bias_bits;
        } else {
            rep.bits_max += bias_bits;
        }
    }
    double orig = static_cast<double>(rep.original_bits);
    rep.rate_pruning = orig / static_cast<double>(rep.bits_pruning);
    rep.rate_fast = orig / static_cast<double>(rep.bits_fast);
    rep.rate_max = orig / static_cast<double>(rep.bits_max);
    return rep;
}

} // namespace bc
