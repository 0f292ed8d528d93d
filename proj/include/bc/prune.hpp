#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "bc/layers.hpp"

namespace bc {

// Per-layer group scores; larger = more prunable. GNJ layers score
// log alpha_i, GHS layers the negative log-mode of the composed scale.
struct GroupScores {
    std::vector<std::vector<double>> per_layer;
    std::string kind; // "nj_log_alpha" | "hs_neg_log_mode"
};

GroupScores model_scores(const Network& net);

double default_threshold(PriorKind prior); // 3 for GNJ, 0 for GHS

// mask[i] = 1 iff score[i] < threshold; ties prune. `thresholds` is either a
// single global value or one per Bayesian layer.
ModelMask build_masks(const GroupScores& scores, const std::vector<double>& thresholds);

struct LayerPruneInfo {
    std::string kind;
    std::size_t groups_original = 0;
    std::size_t groups_retained = 0;
    double threshold = 0.0;
    // Keep flags after cascading (dense: rows/cols of W; conv: in-channels /
    // filters). keep_out of the last layer is all ones.
    LayerMask keep_in, keep_out;
    std::vector<std::size_t> weight_dims; // retained W shape
    std::size_t weight_count = 0;
    std::size_t bias_count = 0;
};

struct PruneReport {
    ModelMask masks;
    std::vector<LayerPruneInfo> layers;
    std::string architecture; // retained group counts, e.g. "278-98-13"
    std::size_t weights_retained = 0, weights_original = 0;
    std::size_t biases_retained = 0, biases_original = 0;
};

// Propagates masks through the network (dropped inputs remove the previous
// layer's columns; dropped filters remove the next layer's input channels,
// spatially expanded across a flatten) and tallies retained parameters.
PruneReport cascade(const Network& net, const ModelMask& masks,
                    const std::vector<double>& thresholds);

// Deterministic logits of the physically compacted model: masked rows,
// columns, filters and channels are removed rather than zeroed.
Tensor compact_forward(const Network& net, const PruneReport& report, const Tensor& X);

// The layer's folded (test-time) weights surviving the cascade, flattened.
std::vector<double> retained_weights(const Layer& layer, const LayerPruneInfo& info);

struct HistogramRow {
    std::size_t layer;
    double bin_left, bin_right;
    std::size_t count;
};

// 100 uniform bins per layer over [min, max] of that layer's scores.
std::vector<HistogramRow> score_histogram(const GroupScores& scores);

// Midpoint of the widest run of empty bins per layer; +inf when the scores
// have no internal gap (nothing clearly separable).
std::vector<double> suggest_thresholds(const GroupScores& scores);

// Header `layer,bin_left,bin_right,count`.
void write_histogram_csv(const std::vector<HistogramRow>& rows, std::ostream& out);

} // namespace bc
