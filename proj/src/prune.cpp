#include "bc/prune.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

namespace bc {

namespace {

std::size_t popcount(const LayerMask& m) {
    return static_cast<std::size_t>(std::count(m.begin(), m.end(), 1));
}

bool is_conv(const Layer& l) { return l.weight_mean().rank() == 4; }

std::vector<double> expand_thresholds(std::size_t n, const std::vector<double>& t) {
    if (t.size() == 1) return std::vector<double>(n, t[0]);
    if (t.size() != n)
        throw ShapeError("expected 1 or " + std::to_string(n) + " thresholds, got " +
                         std::to_string(t.size()));
    return t;
}

Tensor select_dense(const Tensor& W, const LayerMask& rows, const LayerMask& cols) {
    std::size_t R = popcount(rows), C = popcount(cols);
    Tensor out(Shape{R, C});
    std::size_t r = 0;
    for (std::size_t i = 0; i < W.shape[0]; ++i) {
        if (!rows[i]) continue;
        std::size_t c = 0;
        for (std::size_t j = 0; j < W.shape[1]; ++j)
            if (cols[j]) out.at(r, c++) = W.at(i, j);
        ++r;
    }
    return out;
}

Tensor select_conv(const Tensor& K, const LayerMask& chans, const LayerMask& filters) {
    std::size_t kh = K.shape[0], kw = K.shape[1], Ci = K.shape[2], F = K.shape[3];
    Tensor out(Shape{kh, kw, popcount(chans), popcount(filters)});
    std::size_t o = 0;
    for (std::size_t a = 0; a < kh; ++a)
        for (std::size_t b = 0; b < kw; ++b)
            for (std::size_t c = 0; c < Ci; ++c) {
                if (!chans[c]) continue;
                for (std::size_t f = 0; f < F; ++f)
                    if (filters[f]) out[o++] = K[((a * kw + b) * Ci + c) * F + f];
            }
    return out;
}

std::vector<double> select_vec(const Tensor& v, const LayerMask& keep) {
    std::vector<double> out;
    out.reserve(popcount(keep));
    for (std::size_t i = 0; i < v.size(); ++i)
        if (keep[i]) out.push_back(v[i]);
    return out;
}

// Drops columns of a [N, D_compact] batch. `axis_keep` flags the full axis;
// `present` flags which full positions the compact batch currently holds.
Tensor select_cols(const Tensor& h, const LayerMask& present, const LayerMask& axis_keep) {
    std::size_t N = h.shape[0];
    std::size_t D = 0;
    for (std::size_t i = 0; i < present.size(); ++i)
        if (present[i] && axis_keep[i]) ++D;
    Tensor out(Shape{N, D});
    for (std::size_t n = 0; n < N; ++n) {
        std::size_t j = 0, o = 0;
        for (std::size_t i = 0; i < present.size(); ++i) {
            if (!present[i]) continue;
            if (axis_keep[i]) out.at(n, o++) = h.at(n, j);
            ++j;
        }
    }
    return out;
}

Tensor dense_eval(const Tensor& h, const Tensor& W, const std::vector<double>& b) {
    Tensor out = matmul(h, W);
    for (std::size_t n = 0; n < out.shape[0]; ++n)
        for (std::size_t j = 0; j < out.shape[1]; ++j) out.at(n, j) += b[j];
    return out;
}

} // namespace

GroupScores model_scores(const Network& net) {
    GroupScores s;
    s.kind = net.prior == PriorKind::GNJ ? "nj_log_alpha" : "hs_neg_log_mode";
    for (const auto& l : net.layers) s.per_layer.push_back(l->scores());
    return s;
}

double default_threshold(PriorKind prior) { return prior == PriorKind::GNJ ? 3.0 : 0.0; }

ModelMask build_masks(const GroupScores& scores, const std::vector<double>& thresholds) {
    auto t = expand_thresholds(scores.per_layer.size(), thresholds);
    ModelMask masks;
    for (std::size_t li = 0; li < scores.per_layer.size(); ++li) {
        LayerMask m(scores.per_layer[li].size());
        for (std::size_t i = 0; i < m.size(); ++i)
            m[i] = scores.per_layer[li][i] < t[li] ? 1 : 0;
        masks.push_back(std::move(m));
    }
    return masks;
}

PruneReport cascade(const Network& net, const ModelMask& masks,
                    const std::vector<double>& thresholds) {
    const std::size_t L = net.layers.size();
    if (masks.size() != L) throw ShapeError("cascade: mask count does not match layers");
    auto t = expand_thresholds(L, thresholds);

    PruneReport rep;
    rep.masks = masks;
    rep.layers.resize(L);

    // First pass: input-side keep flags, cascading conv channel masks forward.
    LayerMask prev_channels; // filter mask of the most recent conv
    for (std::size_t li = 0; li < L; ++li) {
        const Layer& l = *net.layers[li];
        if (masks[li].size() != l.groups())
            throw ShapeError("cascade: mask length mismatch at layer " + std::to_string(li));
        LayerPruneInfo& info = rep.layers[li];
        info.kind = l.kind();
        info.threshold = t[li];
        info.groups_original = l.groups();
        info.groups_retained = popcount(masks[li]);
        const Shape& ws = l.weight_mean().shape;
        if (is_conv(l)) {
            info.keep_in = prev_channels.empty() ? all_ones_mask(ws[2]) : prev_channels;
            prev_channels = masks[li];
        } else {
            info.keep_in = masks[li];
            if (!prev_channels.empty()) {
                // A flatten sits between; full index ((h W)+w) C + c.
                std::size_t C = prev_channels.size();
                for (std::size_t i = 0; i < info.keep_in.size(); ++i)
                    if (!prev_channels[i % C]) info.keep_in[i] = 0;
                prev_channels.clear();
            }
            info.groups_retained = popcount(info.keep_in);
        }
    }

    // Second pass: output-side keep flags come from the next layer's inputs.
    for (std::size_t li = 0; li < L; ++li) {
        const Layer& l = *net.layers[li];
        LayerPruneInfo& info = rep.layers[li];
        const Shape& ws = l.weight_mean().shape;
        if (is_conv(l)) {
            info.keep_out = masks[li];
            info.weight_dims = {ws[0], ws[1], popcount(info.keep_in),
                                popcount(info.keep_out)};
        } else {
            bool next_dense = li + 1 < L && !is_conv(*net.layers[li + 1]);
            info.keep_out = next_dense ? rep.layers[li + 1].keep_in : all_ones_mask(ws[1]);
            info.weight_dims = {popcount(info.keep_in), popcount(info.keep_out)};
        }
        info.weight_count = std::accumulate(info.weight_dims.begin(), info.weight_dims.end(),
                                            std::size_t{1}, std::multiplies<>());
        info.bias_count = popcount(info.keep_out);

        rep.weights_retained += info.weight_count;
        rep.weights_original += l.weight_mean().size();
        rep.biases_retained += info.bias_count;
        rep.biases_original += l.bias_mean().size();
        std::size_t retained =
            is_conv(l) ? popcount(info.keep_out) : popcount(info.keep_in);
        if (!rep.architecture.empty()) rep.architecture += "-";
        rep.architecture += std::to_string(retained);
    }
    return rep;
}

Tensor compact_forward(const Network& net, const PruneReport& rep, const Tensor& X) {
    Tensor h = X;
    if (!net.arch.items.empty() && net.arch.items[0].kind == ArchItem::Kind::Dense &&
        h.rank() != 2)
        h = Tensor(Shape{h.shape[0], numel(h.shape) / h.shape[0]}, h.data);

    std::size_t li = 0;
    const std::size_t L = net.layers.size();
    LayerMask present; // full-axis flags of the features the compact h carries
    for (const auto& it : net.arch.items) {
        switch (it.kind) {
        case ArchItem::Kind::Dense: {
            const Layer& l = *net.layers[li];
            const LayerPruneInfo& info = rep.layers[li];
            if (present.empty()) present = all_ones_mask(l.weight_mean().shape[0]);
            h = select_cols(h, present, info.keep_in);
            Tensor W = select_dense(l.folded_weights(all_ones_mask(l.groups())),
                                    info.keep_in, info.keep_out);
            Tensor out = dense_eval(h, W, select_vec(l.bias_mean(), info.keep_out));
            h = li + 1 < L ? relu(out) : out;
            present = info.keep_out;
            ++li;
            break;
        }
        case ArchItem::Kind::Conv: {
            const Layer& l = *net.layers[li];
            const LayerPruneInfo& info = rep.layers[li];
            Padding pad = Padding::Valid;
            if (auto* c = dynamic_cast<const GNJConv*>(&l)) pad = c->pad;
            if (auto* c = dynamic_cast<const GHSConv*>(&l)) pad = c->pad;
            Tensor K = select_conv(l.folded_weights(all_ones_mask(l.groups())),
                                   info.keep_in, info.keep_out);
            Tensor out = conv2d(h, K, pad);
            std::vector<double> b = select_vec(l.bias_mean(), info.keep_out);
            std::size_t F = out.shape[3], HW = out.shape[1] * out.shape[2];
            for (std::size_t n = 0; n < out.shape[0]; ++n)
                for (std::size_t p = 0; p < HW; ++p)
                    for (std::size_t f = 0; f < F; ++f)
                        out[(n * HW + p) * F + f] += b[f];
            h = li + 1 < L ? relu(out) : out;
            present = info.keep_out;
            ++li;
            break;
        }
        case ArchItem::Kind::Pool:
            h = mean_pool2(h);
            break;
        case ArchItem::Kind::Flatten: {
            std::size_t HW = h.shape[1] * h.shape[2];
            LayerMask chan = present;
            present.assign(HW * chan.size(), 0);
            std::size_t idx = 0;
            for (std::size_t p = 0; p < HW; ++p)
                for (std::size_t c = 0; c < chan.size(); ++c, ++idx)
                    if (chan[c]) present[idx] = 1;
            h = Tensor(Shape{h.shape[0], numel(h.shape) / h.shape[0]}, h.data);
            break;
        }
        }
    }
    return h;
}

std::vector<double> retained_weights(const Layer& layer, const LayerPruneInfo& info) {
    Tensor folded = layer.folded_weights(all_ones_mask(layer.groups()));
    Tensor sel = is_conv(layer) ? select_conv(folded, info.keep_in, info.keep_out)
                                : select_dense(folded, info.keep_in, info.keep_out);
    return sel.data;
}

std::vector<HistogramRow> score_histogram(const GroupScores& scores) {
    std::vector<HistogramRow> rows;
    for (std::size_t li = 0; li < scores.per_layer.size(); ++li) {
        const auto& s = scores.per_layer[li];
        if (s.empty()) continue;
        auto [mn_it, mx_it] = std::minmax_element(s.begin(), s.end());
        double mn = *mn_it, mx = *mx_it;
        if (mn == mx) {
            rows.push_back({li, mn, mx, s.size()});
            continue;
        }
        constexpr std::size_t nbins = 100;
        double w = (mx - mn) / nbins;
        std::vector<std::size_t> counts(nbins, 0);
        for (double v : s) {
            auto b = static_cast<std::size_t>((v - mn) / w);
            ++counts[std::min(b, nbins - 1)];
        }
        for (std::size_t b = 0; b < nbins; ++b)
            rows.push_back({li, mn + b * w, mn + (b + 1) * w, counts[b]});
    }
    return rows;
}

std::vector<double> suggest_thresholds(const GroupScores& scores) {
    std::vector<double> out;
    auto rows = score_histogram(scores);
    for (std::size_t li = 0; li < scores.per_layer.size(); ++li) {
        std::vector<HistogramRow> layer;
        for (const auto& r : rows)
            if (r.layer == li) layer.push_back(r);
        double best_width = 0.0, best_mid = std::numeric_limits<double>::infinity();
        std::size_t i = 0;
        while (i < layer.size()) {
            if (layer[i].count != 0) { ++i; continue; }
            std::size_t j = i;
            while (j < layer.size() && layer[j].count == 0) ++j;
            bool interior = i > 0 && j < layer.size();
            double width = layer[j - 1].bin_right - layer[i].bin_left;
            if (interior && width > best_width) {
                best_width = width;
                best_mid = 0.5 * (layer[i].bin_left + layer[j - 1].bin_right);
            }
            i = j;
        }
        out.push_back(best_mid);
    }
    return out;
}

void write_histogram_csv(const std::vector<HistogramRow>& rows, std::ostream& out) {
    out << "layer,bin_left,bin_right,count\n";
    for (const auto& r : rows)
        out << r.layer << ',' << r.bin_left << ',' << r.bin_right << ',' << r.count << '\n';
}

} // namespace bc
