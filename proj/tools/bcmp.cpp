// bcmp: train / prune / quantize / compress / report pipeline driver.
//
// Every subcommand echoes its resolved configuration; JSON artifacts carry it
// under "config", CSV artifacts as a leading `# config` comment line.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bc/compress.hpp"
#include "bc/prune.hpp"
#include "bc/quant.hpp"
#include "bc/shrinkage.hpp"
#include "bc/store.hpp"
#include "bc/train.hpp"

using nlohmann::json;
using namespace bc;

namespace {

std::string default_data_dir() {
    const char* env = std::getenv("BCMP_DATA_DIR");
    return env ? env : "data/mnist";
}

Dataset load_split(const std::string& dir, const std::string& split) {
    bool train = split == "train";
    std::string img = dir + (train ? "/train-images-idx3-ubyte" : "/t10k-images-idx3-ubyte");
    std::string lab = dir + (train ? "/train-labels-idx1-ubyte" : "/t10k-labels-idx1-ubyte");
    Dataset d = rescale(load_idx(img, lab));
    d.split = split;
    return d;
}

// MLP arch strings may omit the class count ("784-300-100" on MNIST means
// LeNet-300-100 with a 10-way output); append it when missing.
Arch resolve_arch(const std::string& text, std::size_t classes) {
    Arch a = Arch::parse(text);
    if (text == "lenet5" || a.items.empty()) return a;
    const ArchItem& last = a.items.back();
    if (last.kind == ArchItem::Kind::Dense && last.b != classes) {
        std::vector<std::size_t> dims;
        for (const ArchItem& it : a.items) dims.push_back(it.a);
        dims.push_back(a.items.back().b);
        dims.push_back(classes);
        return Arch::mlp(dims);
    }
    return a;
}

PriorKind parse_prior(const std::string& s) {
    if (s == "gnj") return PriorKind::GNJ;
    if (s == "ghs") return PriorKind::GHS;
    throw CLI::ValidationError("--prior must be gnj or ghs");
}

void require_model_file(const std::string& path) {
    if (!std::filesystem::exists(path)) {
        std::cerr << "model file not found: " << path << "\n";
        std::exit(2);
    }
}

std::vector<double> resolve_thresholds(const std::vector<double>& flag, PriorKind prior) {
    return flag.empty() ? std::vector<double>{default_threshold(prior)} : flag;
}

RoundoffRule parse_rule(const std::string& s) {
    if (s == "sqrt-mean-variance") return RoundoffRule::SqrtMeanVariance;
    if (s == "mean-variance") return RoundoffRule::MeanVariance;
    throw CLI::ValidationError("--roundoff-rule must be sqrt-mean-variance or mean-variance");
}

json prune_json(const PruneReport& r) {
    json layers = json::array();
    for (const auto& l : r.layers)
        layers.push_back({{"kind", l.kind},
                          {"groups_original", l.groups_original},
                          {"groups_retained", l.groups_retained},
                          {"threshold", l.threshold},
                          {"weight_dims", l.weight_dims},
                          {"weight_count", l.weight_count},
                          {"bias_count", l.bias_count}});
    return {{"architecture", r.architecture},
            {"weights_retained", r.weights_retained},
            {"weights_original", r.weights_original},
            {"biases_retained", r.biases_retained},
            {"biases_original", r.biases_original},
            {"layers", layers}};
}

json quant_json(const QuantReport& r) {
    json layers = json::array();
    for (const auto& l : r.layers)
        layers.push_back({{"layer", l.layer},
                          {"mean_var", l.mean_var},
                          {"unit_roundoff", l.unit_roundoff},
                          {"mantissa_bits", l.mantissa_bits},
                          {"total_bits", l.total_bits},
                          {"clamped", l.clamped},
                          {"fully_pruned", l.fully_pruned}});
    return {{"roundoff_rule", roundoff_rule_name(r.rule)}, {"layers", layers}};
}

json compression_json(const CompressionReport& r) {
    return {{"sparsity_pct", r.sparsity_pct},
            {"rate_pruning", r.rate_pruning},
            {"rate_fast", r.rate_fast},
            {"rate_max", r.rate_max},
            {"error_pct", r.error_pct},
            {"original_bits", r.original_bits},
            {"bits_pruning", r.bits_pruning},
            {"bits_fast", r.bits_fast},
            {"bits_max", r.bits_max},
            {"kmeans_converged", r.kmeans_converged}};
}

void emit(const json& doc, const std::string& path) {
    if (path.empty() || path == "-") {
        std::cout << doc.dump(2) << "\n";
    } else {
        std::ofstream out(path);
        if (!out) throw IoError("cannot write " + path);
        out << doc.dump(2) << "\n";
        std::cout << "wrote " << path << "\n";
    }
}

void write_csv_with_config(const std::string& path, const json& config,
                           const std::function<void(std::ostream&)>& body) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "# config " << config.dump() << "\n";
    body(out);
    std::cout << "wrote " << path << "\n";
}

// Shared prune -> quantize chain. Stored masks are used when present and the
// caller gave no explicit thresholds.
struct Pipeline {
    ModelMask masks;
    PruneReport prune;
    QuantReport quant;
    std::vector<double> thresholds;
    bool used_stored_masks = false;
};

Pipeline run_pipeline(const LoadedModel& m, const std::vector<double>& threshold_flag,
                      RoundoffRule rule) {
    Pipeline p;
    p.thresholds = resolve_thresholds(threshold_flag, m.net.prior);
    if (threshold_flag.empty() && m.masks) {
        p.masks = *m.masks;
        p.used_stored_masks = true;
    } else {
        p.masks = build_masks(model_scores(m.net), p.thresholds);
    }
    p.prune = cascade(m.net, p.masks, p.thresholds);
    p.quant = assign_bits(m.net, p.prune, rule);
    return p;
}

int cmd_train(const std::string& prior_s, const std::string& arch_s, TrainConfig cfg,
              std::size_t subset_n, const std::string& dataset, const std::string& data_dir,
              const std::string& output, const std::string& log_file,
              const std::string& std_ceilings_s) {
    PriorKind prior = parse_prior(prior_s);
    Dataset tr, te;
    if (dataset == "mnist") {
        tr = load_split(data_dir, "train");
        te = load_split(data_dir, "test");
    } else if (dataset == "blobs") {
        tr = synth_blobs(512, 2, 2, 8.0, cfg.seed);
        te = synth_blobs(256, 2, 2, 8.0, cfg.seed + 1);
    } else {
        throw CLI::ValidationError("--dataset must be mnist or blobs");
    }
    if (subset_n > 0) tr = subset(tr, std::min(subset_n, tr.size()));

    if (!std_ceilings_s.empty()) {
        std::istringstream in(std_ceilings_s);
        std::string tok;
        while (std::getline(in, tok, ',')) cfg.std_ceilings.push_back(std::stod(tok));
    }

    cfg.warmup_epochs = std::min(cfg.warmup_epochs, cfg.epochs);
    Arch arch = resolve_arch(arch_s, tr.classes);
    json config = {{"subcommand", "train"},
                   {"prior", prior_s},
                   {"arch", arch.to_string()},
                   {"epochs", cfg.epochs},
                   {"warmup_epochs", cfg.warmup_epochs},
                   {"batch_size", cfg.batch_size},
                   {"learning_rate", cfg.learning_rate},
                   {"seed", cfg.seed},
                   {"tau0", cfg.tau0},
                   {"std_ceilings", cfg.std_ceilings},
                   {"subset", subset_n},
                   {"dataset", dataset},
                   {"data_dir", data_dir},
                   {"output", output}};
    std::cout << "config " << config.dump() << "\n";

    Network net = init_model(arch, prior, cfg.seed, cfg.tau0);
    std::ofstream log_stream;
    if (!log_file.empty()) {
        log_stream.open(log_file);
        if (!log_stream) throw IoError("cannot write " + log_file);
        log_stream << "# config " << config.dump() << "\n";
    }
    std::ostringstream log;
    auto logs = train(net, cfg, tr, te, &log);
    std::cout << log.str();
    if (log_stream) log_stream << log.str();

    save_model(net, output);
    std::cout << "wrote " << output << "\n";
    if (!logs.empty())
        std::cout << "final test error " << 100.0 * logs.back().test_error << "%\n";
    return 0;
}

int cmd_prune(const std::string& model_path, const std::vector<double>& thresholds,
              const std::string& output, const std::string& save_masked) {
    require_model_file(model_path);
    LoadedModel m = load_model(model_path);
    Pipeline p = run_pipeline(m, thresholds, RoundoffRule::SqrtMeanVariance);
    json config = {{"subcommand", "prune"},
                   {"model", model_path},
                   {"thresholds", p.thresholds},
                   {"used_stored_masks", p.used_stored_masks}};
    json doc = {{"config", config}, {"prune", prune_json(p.prune)}};
    emit(doc, output);
    if (!save_masked.empty()) {
        save_model(m.net, save_masked, &p.masks);
        std::cout << "wrote " << save_masked << "\n";
    }
    return 0;
}

int cmd_quantize(const std::string& model_path, const std::vector<double>& thresholds,
                 const std::string& rule_s, const std::string& output) {
    require_model_file(model_path);
    LoadedModel m = load_model(model_path);
    Pipeline p = run_pipeline(m, thresholds, parse_rule(rule_s));
    json config = {{"subcommand", "quantize"},
                   {"model", model_path},
                   {"thresholds", p.thresholds},
                   {"roundoff_rule", rule_s},
                   {"used_stored_masks", p.used_stored_masks}};
    json doc = {{"config", config}, {"quant", quant_json(p.quant)}};
    emit(doc, output);
    return 0;
}

int cmd_compress(const std::string& model_path, const std::vector<double>& thresholds,
                 const std::string& rule_s, const std::string& data_dir,
                 const std::string& output, const std::string& histograms_path,
                 std::size_t kmeans_k) {
    require_model_file(model_path);
    LoadedModel m = load_model(model_path);
    Pipeline p = run_pipeline(m, thresholds, parse_rule(rule_s));

    Dataset te = load_split(data_dir, "test");
    double err = 100.0 * m.net.error_rate(te.inputs, te.labels, p.masks);
    CompressionReport comp = compression_report(m.net, p.prune, p.quant, err, kmeans_k);

    json config = {{"subcommand", "compress"},
                   {"model", model_path},
                   {"thresholds", p.thresholds},
                   {"roundoff_rule", rule_s},
                   {"used_stored_masks", p.used_stored_masks},
                   {"data_dir", data_dir},
                   {"kmeans_k", kmeans_k}};
    json doc = {{"config", config},
                {"prune", prune_json(p.prune)},
                {"quant", quant_json(p.quant)},
                {"compression", compression_json(comp)}};
    emit(doc, output);

    GroupScores scores = model_scores(m.net);
    auto rows = score_histogram(scores);
    auto suggested = suggest_thresholds(scores);
    write_csv_with_config(histograms_path, config,
                          [&](std::ostream& out) { write_histogram_csv(rows, out); });
    std::cout << "suggested thresholds:";
    for (double t : suggested) std::cout << " " << t;
    std::cout << "\n";
    return 0;
}

int cmd_report(const std::string& model_path, const std::vector<double>& thresholds,
               const std::string& data_dir) {
    require_model_file(model_path);
    LoadedModel m = load_model(model_path);
    Pipeline p = run_pipeline(m, thresholds, RoundoffRule::SqrtMeanVariance);
    json config = {{"subcommand", "report"},
                   {"model", model_path},
                   {"thresholds", p.thresholds},
                   {"data_dir", data_dir}};
    std::cout << "config " << config.dump() << "\n";
    std::cout << "prior: " << (m.net.prior == PriorKind::GNJ ? "gnj" : "ghs") << "\n";
    std::cout << "architecture: " << m.net.arch.to_string() << "\n";
    std::cout << "tau0: " << m.net.tau0 << "\n";
    std::cout << "retained architecture: " << p.prune.architecture << "\n";
    std::cout << "weights: " << p.prune.weights_retained << " / "
              << p.prune.weights_original << "\n";
    std::cout << "biases: " << p.prune.biases_retained << " / " << p.prune.biases_original
              << "\n";
    std::cout << "bit widths:";
    for (const auto& q : p.quant.layers) std::cout << " " << q.total_bits;
    std::cout << "\n";
    if (!data_dir.empty()) {
        Dataset te = load_split(data_dir, "test");
        double err = 100.0 * m.net.error_rate(te.inputs, te.labels, p.masks);
        CompressionReport comp = compression_report(m.net, p.prune, p.quant, err);
        std::cout << "test error: " << err << "%\n";
        std::cout << "sparsity: " << comp.sparsity_pct << "%\n";
        std::cout << "rates: pruning " << comp.rate_pruning << "x, fast " << comp.rate_fast
                  << "x, max " << comp.rate_max << "x\n";
    }
    return 0;
}

int cmd_analyze_shrinkage(std::size_t samples, std::uint64_t seed, std::size_t bins,
                          double scale, double nj_eps, const std::string& out_dir) {
    json config = {{"subcommand", "analyze-shrinkage"}, {"samples", samples},
                   {"seed", seed},           {"bins", bins},
                   {"scale", scale},         {"nj_eps", nj_eps},
                   {"output_dir", out_dir}};
    std::cout << "config " << config.dump() << "\n";

    auto density_csv = [&](const std::vector<double>& lam, bool with_beta,
                           std::ostream& out) {
        out << "bin_center,empirical_density" << (with_beta ? ",beta_density" : "")
            << "\n";
        std::vector<std::size_t> counts(bins, 0);
        for (double l : lam) {
            auto b = std::min<std::size_t>(bins - 1, std::size_t(l * bins));
            ++counts[b];
        }
        for (std::size_t b = 0; b < bins; ++b) {
            double center = (b + 0.5) / bins;
            out << center << "," << double(counts[b]) * bins / double(lam.size());
            if (with_beta)
                out << "," << 1.0 / (M_PI * std::sqrt(center * (1.0 - center)));
            out << "\n";
        }
    };

    auto hs = shrinkage_map(sample_half_cauchy(scale, samples, seed));
    double ks = ks_against_beta(hs, 0.5, 0.5);
    write_csv_with_config(out_dir + "/hs_shrinkage.csv", config,
                          [&](std::ostream& out) { density_csv(hs, true, out); });

    // The normal-Jeffreys shrinkage profile: the Beta(eps, eps) horseshoe
    // limit, mass escaping to the endpoints as eps -> 0.
    auto nj = sample_beta(nj_eps, nj_eps, samples, seed + 1);
    write_csv_with_config(out_dir + "/nj_shrinkage.csv", config,
                          [&](std::ostream& out) { density_csv(nj, false, out); });

    std::cout << "ks_hs_vs_beta_half " << ks << "\n";
    std::cout << "hs_endpoint_mass " << endpoint_mass(hs) << "\n";
    std::cout << "nj_endpoint_mass " << endpoint_mass(nj) << "\n";
    return 0;
}

int cmd_export_histograms(const std::string& model_path, const std::string& output) {
    require_model_file(model_path);
    LoadedModel m = load_model(model_path);
    GroupScores scores = model_scores(m.net);
    json config = {{"subcommand", "export-histograms"},
                   {"model", model_path},
                   {"output", output},
                   {"score_kind", scores.kind}};
    write_csv_with_config(output, config, [&](std::ostream& out) {
        write_histogram_csv(score_histogram(scores), out);
    });
    std::cout << "suggested thresholds:";
    for (double t : suggest_thresholds(scores)) std::cout << " " << t;
    std::cout << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian compression pipeline"};
    app.require_subcommand(1);

    // train
    std::string prior = "gnj", arch = "784-300-100", dataset = "mnist";
    std::string data_dir = default_data_dir();
    std::string output = "model.bcmp", log_file, std_ceilings;
    std::size_t subset_n = 0;
    TrainConfig cfg;
    auto* t = app.add_subcommand("train", "Train a Bayesian network");
    t->add_option("--prior", prior, "gnj | ghs")->required();
    t->add_option("--arch", arch, "dense dims or 'lenet5'");
    t->add_option("--epochs", cfg.epochs);
    t->add_option("--warmup-epochs", cfg.warmup_epochs);
    t->add_option("--batch-size", cfg.batch_size);
    t->add_option("--learning-rate", cfg.learning_rate);
    t->add_option("--seed", cfg.seed);
    t->add_option("--tau0", cfg.tau0);
    t->add_option("--std-ceilings", std_ceilings, "comma list of per-layer std caps");
    t->add_option("--subset", subset_n, "use only the first N training samples");
    t->add_option("--dataset", dataset, "mnist | blobs");
    t->add_option("--data-dir", data_dir);
    t->add_option("--output", output);
    t->add_option("--log-file", log_file);

    // shared model-consuming flags
    std::string model_path = "model.bcmp", rule = "sqrt-mean-variance";
    std::vector<double> thresholds;
    std::string report_out, save_masked, histograms = "score_histograms.csv";
    std::size_t kmeans_k = 32;

    auto* p = app.add_subcommand("prune", "Score, threshold, and cascade group masks");
    p->add_option("--model", model_path);
    p->add_option("--threshold", thresholds, "global or one per layer");
    p->add_option("--output", report_out, "JSON path, '-' for stdout");
    p->add_option("--save-masked", save_masked, "write model with masks attached");

    auto* q = app.add_subcommand("quantize", "Assign per-layer bit precisions");
    q->add_option("--model", model_path);
    q->add_option("--threshold", thresholds);
    q->add_option("--roundoff-rule", rule, "sqrt-mean-variance | mean-variance");
    q->add_option("--output", report_out);

    auto* c = app.add_subcommand("compress", "Full compression report");
    c->add_option("--model", model_path);
    c->add_option("--threshold", thresholds);
    c->add_option("--roundoff-rule", rule);
    c->add_option("--data-dir", data_dir);
    c->add_option("--output", report_out);
    c->add_option("--histograms", histograms, "score histogram CSV path");
    c->add_option("--kmeans-k", kmeans_k);

    auto* r = app.add_subcommand("report", "Human-readable model summary");
    r->add_option("--model", model_path);
    r->add_option("--threshold", thresholds);
    std::string report_data_dir;
    r->add_option("--data-dir", report_data_dir, "enables error and rate reporting");

    std::size_t samples = 1000000, bins = 100;
    std::uint64_t seed = 1;
    double scale = 1.0, nj_eps = 0.05;
    std::string out_dir = ".";
    auto* a = app.add_subcommand("analyze-shrinkage", "Shrinkage density CSVs and KS");
    a->add_option("--samples", samples);
    a->add_option("--seed", seed);
    a->add_option("--bins", bins);
    a->add_option("--scale", scale, "half-Cauchy scale");
    a->add_option("--nj-eps", nj_eps, "Beta(eps,eps) NJ-limit parameter");
    a->add_option("--output-dir", out_dir);

    auto* e = app.add_subcommand("export-histograms", "Per-layer score histogram CSV");
    e->add_option("--model", model_path);
    std::string hist_out = "score_histograms.csv";
    e->add_option("--output", hist_out);

    CLI11_PARSE(app, argc, argv);

    try {
        if (t->parsed())
            return cmd_train(prior, arch, cfg, subset_n, dataset, data_dir, output,
                             log_file, std_ceilings);
        if (p->parsed()) return cmd_prune(model_path, thresholds, report_out, save_masked);
        if (q->parsed()) return cmd_quantize(model_path, thresholds, rule, report_out);
        if (c->parsed())
            return cmd_compress(model_path, thresholds, rule, data_dir, report_out,
                                histograms, kmeans_k);
        if (r->parsed()) return cmd_report(model_path, thresholds, report_data_dir);
        if (a->parsed())
            return cmd_analyze_shrinkage(samples, seed, bins, scale, nj_eps, out_dir);
        if (e->parsed()) return cmd_export_histograms(model_path, hist_out);
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }
    return 1;
}
