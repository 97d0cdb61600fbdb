// confwise — segmentation-loss and confidence-calibration toolkit CLI.
//
// Subcommands: gen, eval, loss, train, compare, reliability.
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <regex>

#include "confwise/experiment.hpp"
#include "confwise/metrics.hpp"
#include "confwise/model.hpp"
#include "confwise/synth.hpp"
#include "confwise/tensor_io.hpp"
#include "confwise/version.hpp"

namespace fs = std::filesystem;
using namespace confwise;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

StructShape parse_shape(const std::string& s) {
    if (s == "square") return StructShape::square;
    if (s == "cross") return StructShape::cross;
    throw CLI::ValidationError("--shape must be square or cross");
}

/// Indexed corpus: prob_%05d.segt predictions paired with lbl_%05d.segt
/// labels by index.
struct CorpusPair {
    size_t index;
    fs::path probs;
    fs::path labels;
};

std::vector<CorpusPair> match_corpus(const std::string& pred_dir, const std::string& label_dir) {
    if (!fs::is_directory(pred_dir)) throw DataError("not a directory: " + pred_dir);
    if (!fs::is_directory(label_dir)) throw DataError("not a directory: " + label_dir);
    const std::regex lbl_re("lbl_([0-9]{5})\\.segt");
    std::vector<CorpusPair> pairs;
    for (const auto& entry : fs::directory_iterator(label_dir)) {
        std::smatch m;
        const std::string name = entry.path().filename().string();
        if (!std::regex_match(name, m, lbl_re)) continue;
        const size_t index = std::stoul(m[1]);
        char prob_name[32];
        std::snprintf(prob_name, sizeof(prob_name), "prob_%05zu.segt", index);
        const fs::path prob_path = fs::path(pred_dir) / prob_name;
        if (!fs::exists(prob_path))
            throw DataError("missing prediction for index " + std::to_string(index) + ": " +
                            prob_path.string());
        pairs.push_back({index, prob_path, entry.path()});
    }
    std::sort(pairs.begin(), pairs.end(),
              [](const CorpusPair& a, const CorpusPair& b) { return a.index < b.index; });
    if (pairs.empty()) throw DataError("no lbl_*.segt files under " + label_dir);
    return pairs;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct EvalOutputs {
    CalibrationReport ece;
    CalibrationReport bece;
};

/// Shared by `eval` and `reliability`: walks the corpus, writes the
/// per-image metrics CSV when requested, and returns pooled calibration.
EvalOutputs evaluate_corpus(const std::vector<CorpusPair>& pairs, size_t bins, size_t radius,
                            StructShape shape, const std::string& metrics_csv_path,
                            const std::string& provenance) {
    CalibrationAccumulator ece_acc(bins), bece_acc(bins);
    std::ofstream metrics;
    if (!metrics_csv_path.empty()) {
        metrics.open(metrics_csv_path, std::ios::trunc);
        if (!metrics) throw DataError("cannot write " + metrics_csv_path);
        metrics << "# toolkit_version=" << CONFWISE_VERSION << "\n";
        metrics << "# " << provenance << "\n";
        metrics << "image,class,dsc,iou,hd95\n";
    }

    std::vector<double> dsc_all, iou_all, hd_all;
    for (const CorpusPair& pair : pairs) {
        const ProbMap probs{read_tensor(pair.probs.string())};
        Tensor lbl = read_tensor(pair.labels.string());
        const LabelMap labels(std::move(lbl), probs.num_classes());

        Tensor pred({labels.height(), labels.width()}, DType::u8);
        uint8_t* pd = pred.ptr<uint8_t>();
        for (size_t p = 0; p < labels.pixels(); ++p) {
            size_t best = 0;
            double bv = probs.at_flat(0, p);
            for (size_t c = 1; c < probs.num_classes(); ++c)
                if (probs.at_flat(c, p) > bv) {
                    bv = probs.at_flat(c, p);
                    best = c;
                }
            pd[p] = static_cast<uint8_t>(best);
        }
        const SegScores scores = seg_scores(LabelMap(std::move(pred), probs.num_classes()), labels);
        if (metrics.is_open()) {
            for (size_t c = 0; c < scores.per_class.size(); ++c)
                metrics << pair.index << ',' << c << ',' << fmt(scores.per_class[c].dsc) << ','
                        << fmt(scores.per_class[c].iou) << ',' << fmt(scores.per_class[c].hd95)
                        << '\n';
        }
        dsc_all.push_back(scores.mean_dsc);
        iou_all.push_back(scores.mean_iou);
        if (scores.mean_hd95_defined) hd_all.push_back(scores.mean_hd95);

        accumulate_calibration(ece_acc, probs, labels);
        const BinaryMask band = boundary_mask(labels, radius, shape);
        accumulate_calibration(bece_acc, probs, labels, &band);
    }

    auto mean = [](const std::vector<double>& v) {
        if (v.empty()) return 0.0;
        double s = 0.0;
        for (double x : v) s += x;
        return s / static_cast<double>(v.size());
    };
    EvalOutputs out{ece_acc.finalize(), bece_acc.finalize()};
    if (metrics.is_open()) {
        metrics << "mean,all," << fmt(mean(dsc_all)) << ',' << fmt(mean(iou_all)) << ','
                << fmt(mean(hd_all)) << '\n';
        if (!metrics) throw DataError("write failed: " + metrics_csv_path);
    }
    return out;
}

int run(int argc, char** argv) {
    CLI::App app{std::string("confwise ") + CONFWISE_VERSION +
                 " — segmentation losses and boundary calibration"};
    app.require_subcommand(1);

    // ---- gen ----------------------------------------------------------
    auto* gen = app.add_subcommand("gen", "Generate a synthetic lens-like dataset");
    std::string gen_out;
    SynthConfig gen_cfg;
    size_t gen_n = 200;
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen->add_option("--n", gen_n, "Number of samples")->check(CLI::PositiveNumber);
    gen->add_option("--seed", gen_cfg.seed, "Generator seed");
    gen->add_option("--height", gen_cfg.height, "Image height");
    gen->add_option("--width", gen_cfg.width, "Image width");
    gen->add_option("--ring-thickness", gen_cfg.ring_thickness, "Capsule ring thickness (px)");
    gen->add_option("--blur-sigma", gen_cfg.boundary_blur_sigma, "Boundary blur sigma (px)");
    gen->add_option("--noise-sigma", gen_cfg.noise_sigma, "Additive noise sigma");
    gen->add_option("--artifact-prob", gen_cfg.artifact_prob, "Bright-stripe probability");

    // ---- eval ---------------------------------------------------------
    auto* eval = app.add_subcommand("eval", "Evaluate predictions against labels");
    std::string eval_pred, eval_labels, eval_out;
    size_t eval_bins = 10, eval_radius = 2;
    std::string eval_shape = "square";
    eval->add_option("--pred", eval_pred, "Directory of prob_%05d.segt prediction maps")
        ->required();
    eval->add_option("--labels", eval_labels, "Directory of lbl_%05d.segt label maps")
        ->required();
    eval->add_option("--out", eval_out, "Output directory")->required();
    eval->add_option("--bins", eval_bins, "Calibration bins")->check(CLI::PositiveNumber);
    eval->add_option("--radius", eval_radius, "Boundary band radius (px)")
        ->check(CLI::PositiveNumber);
    eval->add_option("--shape", eval_shape, "Structuring element: square|cross");

    // ---- loss ---------------------------------------------------------
    auto* loss = app.add_subcommand("loss", "Evaluate one loss on a probs/labels pair");
    std::string loss_probs, loss_labels, loss_name_arg = "ce", loss_grad_out;
    double loss_alpha = 0.4, loss_q = 0.8, loss_gamma = 2.0, loss_a = 0.3, loss_b = 0.7,
           loss_gamma_ft = 0.75, loss_smooth = 1e-5, loss_combo = 0.5;
    loss->add_option("--probs", loss_probs, "SEGT [C,H,W] probability map")->required();
    loss->add_option("--labels", loss_labels, "SEGT [H,W] u8 label map")->required();
    loss->add_option("--loss", loss_name_arg,
                     "ce|focal|dice|tversky|focal_tversky|acw|acw+<other>");
    loss->add_option("--alpha", loss_alpha, "ACW rebalanced weight");
    loss->add_option("--q", loss_q, "ACW high-confidence fraction");
    loss->add_option("--gamma", loss_gamma, "Focal gamma");
    loss->add_option("--a", loss_a, "Tversky false-positive weight");
    loss->add_option("--b", loss_b, "Tversky false-negative weight");
    loss->add_option("--gamma-ft", loss_gamma_ft, "Focal-Tversky exponent");
    loss->add_option("--smooth", loss_smooth, "Smooth term");
    loss->add_option("--combo-weight", loss_combo, "ACW weight in acw+X combinations");
    loss->add_option("--grad-out", loss_grad_out, "Write the logit gradient as SEGT");

    // ---- train --------------------------------------------------------
    auto* train_cmd = app.add_subcommand("train", "Train TinyNet per the config file");
    std::string train_config, train_out;
    std::vector<std::string> train_sets;
    bool train_dump = false;
    train_cmd->add_option("--config", train_config, "Experiment config file")->required();
    train_cmd->add_option("--out", train_out, "Output directory")->required();
    train_cmd->add_option("--set", train_sets, "Override key=value (repeatable)");
    train_cmd->add_flag("--dump-predictions", train_dump,
                        "Write test-split prob_/lbl_ SEGT files per seed (for eval)");

    // ---- compare ------------------------------------------------------
    auto* compare = app.add_subcommand("compare", "Run a config matrix and aggregate results");
    std::string cmp_matrix, cmp_out;
    std::vector<std::string> cmp_sets;
    size_t cmp_jobs = default_jobs();
    compare->add_option("--matrix", cmp_matrix, "Matrix config file (with [sweep])")->required();
    compare->add_option("--out", cmp_out, "Output directory")->required();
    compare->add_option("--set", cmp_sets, "Override key=value (repeatable)");
    compare->add_option("--jobs", cmp_jobs, "Parallel cells (default $CONFWISE_JOBS or 1)")
        ->check(CLI::PositiveNumber);

    // ---- reliability ----------------------------------------------------
    auto* rel = app.add_subcommand("reliability", "Export pooled reliability-diagram data");
    std::string rel_pred, rel_labels, rel_out, rel_svg;
    size_t rel_bins = 10, rel_radius = 2;
    std::string rel_shape = "square";
    bool rel_boundary = false;
    rel->add_option("--pred", rel_pred, "Directory of prob_%05d.segt prediction maps")
        ->required();
    rel->add_option("--labels", rel_labels, "Directory of lbl_%05d.segt label maps")->required();
    rel->add_option("--out", rel_out, "Reliability CSV path")->required();
    rel->add_option("--svg", rel_svg, "Optional SVG bar chart path");
    rel->add_option("--bins", rel_bins, "Calibration bins")->check(CLI::PositiveNumber);
    rel->add_flag("--boundary", rel_boundary, "Restrict to the boundary band (BECE)");
    rel->add_option("--radius", rel_radius, "Boundary band radius (px)");
    rel->add_option("--shape", rel_shape, "Structuring element: square|cross");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);  // prints message/help; 0 for --help
        return code == 0 ? kExitOk : kExitUsage;
    }

    if (gen->parsed()) {
        write_dataset(gen_out, gen_cfg, gen_n);
        std::cout << "wrote " << gen_n << " samples to " << gen_out << "\n";
        return kExitOk;
    }

    if (eval->parsed()) {
        const auto pairs = match_corpus(eval_pred, eval_labels);
        fs::create_directories(eval_out);
        const std::string provenance = "pred=" + eval_pred + ";labels=" + eval_labels +
                                       ";bins=" + std::to_string(eval_bins) +
                                       ";radius=" + std::to_string(eval_radius) +
                                       ";shape=" + eval_shape;
        const EvalOutputs out = evaluate_corpus(pairs, eval_bins, eval_radius,
                                                parse_shape(eval_shape),
                                                (fs::path(eval_out) / "metrics.csv").string(),
                                                provenance);
        export_reliability(out.ece, (fs::path(eval_out) / "reliability.csv").string(),
                           provenance);
        export_reliability(out.bece,
                           (fs::path(eval_out) / "reliability_boundary.csv").string(),
                           provenance);
        std::cout << "images: " << pairs.size() << "\n";
        std::cout << "pooled ECE:  " << fmt(out.ece.score) << "  (x100: " << out.ece.score * 100
                  << ")\n";
        std::cout << "pooled BECE: " << fmt(out.bece.score) << "  (x100: " << out.bece.score * 100
                  << (out.bece.empty_domain ? ", empty boundary" : "") << ")\n";
        return kExitOk;
    }

    if (loss->parsed()) {
        Tensor pt = read_tensor(loss_probs);
        const ProbMap probs{pt};
        Tensor lt = read_tensor(loss_labels);
        const LabelMap labels(std::move(lt), probs.num_classes());
        LossSpec spec = parse_loss_name(loss_name_arg);
        spec.acw.alpha = loss_alpha;
        spec.acw.partition.q = loss_q;
        spec.gamma = loss_gamma;
        spec.tversky_fp = loss_a;
        spec.tversky_fn = loss_b;
        spec.gamma_ft = loss_gamma_ft;
        spec.smooth = loss_smooth;
        spec.combo_w1 = loss_combo;
        spec.combo_w2 = 1.0 - loss_combo;
        const LossResult result = evaluate_loss(spec, probs, labels);
        if (!std::isfinite(result.value))
            throw std::domain_error("loss value is not finite");
        std::cout << loss_name(spec) << " = " << fmt(result.value) << "\n";
        if (!loss_grad_out.empty()) write_tensor(loss_grad_out, result.grad_logits);
        return kExitOk;
    }

    if (train_cmd->parsed()) {
        const ExperimentConfig cfg = load_config(train_config, train_sets);
        fs::create_directories(train_out);
        ResultsTable table;
        std::vector<std::string> no_sweep;
        for (uint64_t seed : cfg.seeds) {
            TinyNet net;
            TrainLog log;
            ResultRow row = run_cell(cfg, seed, config_id(cfg, no_sweep), &net, &log);
            table.rows.push_back(row);
            save_checkpoint(net,
                            (fs::path(train_out) / ("checkpoint_" + std::to_string(seed))).string());
            if (train_dump) {
                const fs::path pdir =
                    fs::path(train_out) / ("predictions_" + std::to_string(seed));
                fs::create_directories(pdir);
                const std::vector<Sample> all = generate(cfg.dataset, cfg.dataset_n);
                const size_t train_n = (cfg.dataset_n * 8) / 10;
                char name[32];
                for (size_t k = train_n; k < all.size(); ++k) {
                    const ProbMap probs = softmax_logits(forward(net, all[k].image));
                    std::snprintf(name, sizeof(name), "prob_%05zu.segt", k - train_n);
                    write_tensor((pdir / name).string(), probs.tensor());
                    std::snprintf(name, sizeof(name), "lbl_%05zu.segt", k - train_n);
                    write_tensor((pdir / name).string(), all[k].labels.tensor());
                }
            }
            std::ofstream tl(fs::path(train_out) / ("trainlog_" + std::to_string(seed) + ".csv"),
                             std::ios::trunc);
            tl << "# toolkit_version=" << CONFWISE_VERSION << "\n";
            tl << "# config=" << cfg.serialize() << "\n";
            tl << "epoch,lr,mean_loss,val_mean_dsc\n";
            for (const TrainLogRow& r : log.rows)
                tl << r.epoch << ',' << fmt(r.lr) << ',' << fmt(r.mean_loss) << ','
                   << (r.has_val ? fmt(r.val_mean_dsc) : "") << '\n';
        }
        std::ofstream rf(fs::path(train_out) / "results.csv", std::ios::trunc);
        rf << table.to_csv(cfg.serialize());
        std::cout << table.render_text();
        return kExitOk;
    }

    if (compare->parsed()) {
        const std::vector<ExperimentConfig> configs = expand_matrix(cmp_matrix, cmp_sets);
        // swept keys, in file order, for the config ids
        std::vector<std::string> swept;
        {
            std::ifstream f(cmp_matrix);
            std::string line;
            bool in_sweep = false;
            while (std::getline(f, line)) {
                const size_t hash = line.find('#');
                if (hash != std::string::npos) line.erase(hash);
                const auto first = line.find_first_not_of(" \t\r");
                if (first == std::string::npos) continue;
                line = line.substr(first);
                if (line.rfind("[sweep]", 0) == 0) {
                    in_sweep = true;
                    continue;
                }
                if (!line.empty() && line.front() == '[') {
                    in_sweep = false;
                    continue;
                }
                if (in_sweep) {
                    const size_t eq = line.find('=');
                    if (eq != std::string::npos) {
                        std::string key = line.substr(0, eq);
                        key.erase(key.find_last_not_of(" \t") + 1);
                        swept.push_back(key);
                    }
                }
            }
        }
        const ResultsTable table = run_matrix(configs, swept, cmp_jobs);
        fs::create_directories(cmp_out);
        const std::string base_cfg =
            configs.empty() ? std::string() : configs.front().serialize();
        std::ofstream rf(fs::path(cmp_out) / "results.csv", std::ios::trunc);
        rf << table.to_csv(base_cfg);
        std::ofstream tf(fs::path(cmp_out) / "results.txt", std::ios::trunc);
        const std::string text = table.render_text();
        tf << text;
        std::cout << text;
        for (const ResultRow& r : table.rows)
            if (r.failed) return kExitNumeric;
        return kExitOk;
    }

    if (rel->parsed()) {
        const auto pairs = match_corpus(rel_pred, rel_labels);
        const std::string provenance = "pred=" + rel_pred + ";labels=" + rel_labels + ";bins=" +
                                       std::to_string(rel_bins) +
                                       (rel_boundary ? ";scope=boundary;radius=" +
                                                           std::to_string(rel_radius)
                                                     : ";scope=all");
        const EvalOutputs out = evaluate_corpus(pairs, rel_bins, rel_radius,
                                                parse_shape(rel_shape), "", provenance);
        const CalibrationReport& report = rel_boundary ? out.bece : out.ece;
        export_reliability(report, rel_out, provenance);
        if (!rel_svg.empty()) export_reliability_svg(report, rel_svg);
        std::cout << (rel_boundary ? "BECE" : "ECE") << " = " << fmt(report.score) << "\n";
        return kExitOk;
    }

    return kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const CLI::Error&) {
        return kExitUsage;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const SegtError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::domain_error& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::invalid_argument& e) {
        // config/flag problems are usage errors; everything else is data
        const std::string msg = e.what();
        if (msg.rfind("config:", 0) == 0 || msg.rfind("override", 0) == 0 ||
            msg.rfind("unknown loss", 0) == 0) {
            std::cerr << "usage error: " << msg << "\n";
            return kExitUsage;
        }
        std::cerr << "data error: " << msg << "\n";
        return kExitData;
    } catch (const std::runtime_error& e) {
        const std::string msg = e.what();
        if (msg.find("diverged") != std::string::npos) {
            std::cerr << "numeric failure: " << msg << "\n";
            return kExitNumeric;
        }
        std::cerr << "data error: " << msg << "\n";
        return kExitData;
    }
}
