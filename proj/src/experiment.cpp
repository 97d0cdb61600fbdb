#include "confwise/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "confwise/metrics.hpp"
#include "confwise/version.hpp"

namespace confwise {

namespace {

std::string trim(const std::string& s) {
    const size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(trim(item));
    return out;
}

bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw std::invalid_argument("config: bad boolean value '" + v + "'");
}

/// Applies one "section.key" = value assignment.
void apply_kv(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "experiment.loss") {
        parse_loss_name(value);  // validate
        cfg.loss = value;
    } else if (key == "experiment.alpha") {
        cfg.alpha = std::stod(value);
    } else if (key == "experiment.q") {
        cfg.q = std::stod(value);
    } else if (key == "experiment.bins") {
        cfg.bins = std::stoul(value);
    } else if (key == "experiment.radius") {
        cfg.radius = std::stoul(value);
    } else if (key == "experiment.shape") {
        if (value == "square")
            cfg.shape = StructShape::square;
        else if (value == "cross")
            cfg.shape = StructShape::cross;
        else
            throw std::invalid_argument("config: shape must be square or cross");
    } else if (key == "experiment.combo_weight") {
        cfg.combo_weight = std::stod(value);
    } else if (key == "experiment.include_background") {
        cfg.include_background = parse_bool(value);
    } else if (key == "experiment.epochs") {
        cfg.epochs = std::stoul(value);
    } else if (key == "experiment.base_lr") {
        cfg.base_lr = std::stod(value);
    } else if (key == "experiment.augment_flip") {
        cfg.augment_flip = parse_bool(value);
    } else if (key == "experiment.seeds") {
        cfg.seeds.clear();
        for (const std::string& s : split_list(value)) cfg.seeds.push_back(std::stoull(s));
        if (cfg.seeds.empty()) throw std::invalid_argument("config: seeds list is empty");
    } else if (key == "dataset.n") {
        cfg.dataset_n = std::stoul(value);
    } else if (key == "dataset.height") {
        cfg.dataset.height = std::stoul(value);
    } else if (key == "dataset.width") {
        cfg.dataset.width = std::stoul(value);
    } else if (key == "dataset.seed") {
        cfg.dataset.seed = std::stoull(value);
    } else if (key == "dataset.ring_thickness") {
        cfg.dataset.ring_thickness = std::stod(value);
    } else if (key == "dataset.blur_sigma") {
        cfg.dataset.boundary_blur_sigma = std::stod(value);
    } else if (key == "dataset.noise_sigma") {
        cfg.dataset.noise_sigma = std::stod(value);
    } else if (key == "dataset.artifact_prob") {
        cfg.dataset.artifact_prob = std::stod(value);
    } else {
        throw std::invalid_argument("config: unknown key '" + key + "'");
    }
}

struct ParsedFile {
    std::vector<std::pair<std::string, std::string>> assignments;  // qualified key -> value
    std::vector<std::pair<std::string, std::string>> sweep;        // key -> value list
};

ParsedFile parse_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::invalid_argument("config: cannot open " + path);
    ParsedFile out;
    std::string section = "experiment";
    std::string line;
    size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[' && line.back() == ']') {
            section = trim(line.substr(1, line.size() - 2));
            if (section != "experiment" && section != "dataset" && section != "sweep")
                throw std::invalid_argument("config: unknown section [" + section + "] at line " +
                                            std::to_string(lineno));
            continue;
        }
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config: expected key = value at line " +
                                        std::to_string(lineno));
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty())
            throw std::invalid_argument("config: empty key or value at line " +
                                        std::to_string(lineno));
        if (section == "sweep")
            out.sweep.emplace_back(key, value);
        else
            out.assignments.emplace_back(section + "." + key, value);
    }
    return out;
}

std::string qualify(const std::string& key) {
    if (key.find('.') != std::string::npos) return key;
    static const char* dataset_keys[] = {"n",          "height",      "width",
                                         "seed",       "ring_thickness", "blur_sigma",
                                         "noise_sigma", "artifact_prob"};
    for (const char* k : dataset_keys)
        if (key == k) return std::string("dataset.") + k;
    return "experiment." + key;
}

void apply_overrides(ExperimentConfig& cfg, const std::vector<std::string>& overrides) {
    for (const std::string& ov : overrides) {
        const size_t eq = ov.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("override must be key=value: " + ov);
        apply_kv(cfg, qualify(trim(ov.substr(0, eq))), trim(ov.substr(eq + 1)));
    }
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt_short(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

}  // namespace

LossSpec ExperimentConfig::loss_spec() const {
    LossSpec spec = parse_loss_name(loss);
    spec.acw.alpha = alpha;
    spec.acw.partition.q = q;
    spec.acw.include_background = include_background;
    spec.combo_w1 = combo_weight;
    spec.combo_w2 = 1.0 - combo_weight;
    return spec;
}

std::string ExperimentConfig::serialize() const {
    std::ostringstream os;
    os << "loss=" << loss << ";alpha=" << alpha << ";q=" << q << ";bins=" << bins
       << ";radius=" << radius << ";shape=" << (shape == StructShape::square ? "square" : "cross")
       << ";combo_weight=" << combo_weight
       << ";include_background=" << (include_background ? "true" : "false")
       << ";epochs=" << epochs << ";base_lr=" << base_lr
       << ";augment_flip=" << (augment_flip ? "true" : "false") << ";seeds=";
    for (size_t i = 0; i < seeds.size(); ++i) os << (i ? "|" : "") << seeds[i];
    os << ";dataset.n=" << dataset_n << ";dataset.height=" << dataset.height
       << ";dataset.width=" << dataset.width << ";dataset.seed=" << dataset.seed
       << ";dataset.ring_thickness=" << dataset.ring_thickness
       << ";dataset.blur_sigma=" << dataset.boundary_blur_sigma
       << ";dataset.noise_sigma=" << dataset.noise_sigma
       << ";dataset.artifact_prob=" << dataset.artifact_prob;
    return os.str();
}

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
    ExperimentConfig cfg;
    if (!path.empty()) {
        const ParsedFile parsed = parse_file(path);
        if (!parsed.sweep.empty())
            throw std::invalid_argument("config: [sweep] section only valid for compare");
        for (const auto& [k, v] : parsed.assignments) apply_kv(cfg, k, v);
    }
    apply_overrides(cfg, overrides);
    return cfg;
}

std::vector<ExperimentConfig> expand_matrix(const std::string& path,
                                            const std::vector<std::string>& overrides) {
    const ParsedFile parsed = parse_file(path);
    ExperimentConfig base;
    for (const auto& [k, v] : parsed.assignments) apply_kv(base, k, v);
    apply_overrides(base, overrides);

    std::vector<ExperimentConfig> configs{base};
    for (const auto& [key, values] : parsed.sweep) {
        const std::vector<std::string> options = split_list(values);
        if (options.empty()) throw std::invalid_argument("config: empty sweep axis " + key);
        std::vector<ExperimentConfig> next;
        for (const ExperimentConfig& c : configs) {
            for (const std::string& v : options) {
                ExperimentConfig cell = c;
                apply_kv(cell, qualify(key), v);
                next.push_back(cell);
            }
        }
        configs = std::move(next);
    }
    return configs;
}

std::string config_id(const ExperimentConfig& cfg, const std::vector<std::string>& swept_keys) {
    if (swept_keys.empty()) return cfg.loss;
    std::ostringstream os;
    for (size_t i = 0; i < swept_keys.size(); ++i) {
        const std::string& k = swept_keys[i];
        if (i) os << ";";
        os << k << "=";
        if (k == "loss")
            os << cfg.loss;
        else if (k == "alpha")
            os << cfg.alpha;
        else if (k == "q")
            os << cfg.q;
        else if (k == "epochs")
            os << cfg.epochs;
        else if (k == "combo_weight")
            os << cfg.combo_weight;
        else if (k == "radius")
            os << cfg.radius;
        else if (k == "bins")
            os << cfg.bins;
        else
            os << "?";
    }
    return os.str();
}

ResultRow run_cell(const ExperimentConfig& cfg, uint64_t seed, const std::string& cell_id,
                   TinyNet* trained_out, TrainLog* log_out) {
    ResultRow row;
    row.config_id = cell_id;
    row.seed = std::to_string(seed);

    const std::vector<Sample> all = generate(cfg.dataset, cfg.dataset_n);
    const size_t train_n = (cfg.dataset_n * 8) / 10;
    if (train_n == 0 || train_n == all.size())
        throw std::invalid_argument("run_cell: dataset too small for an 80/20 split");
    const std::vector<Sample> train_set(all.begin(), all.begin() + train_n);
    const std::vector<Sample> test_set(all.begin() + train_n, all.end());

    TinyNet net = TinyNet::init(SynthConfig::num_classes, seed);
    TrainOptions opt;
    opt.epochs = cfg.epochs;
    opt.base_lr = cfg.base_lr;
    opt.augment_flip = cfg.augment_flip;
    opt.seed = seed;
    TrainLog log = train(net, train_set, nullptr, cfg.loss_spec(), opt);

    const size_t C = SynthConfig::num_classes;
    std::vector<double> dsc_sum(C, 0.0), iou_sum(C, 0.0);
    double hd_sum = 0.0;
    size_t hd_count = 0;
    CalibrationAccumulator ece_acc(cfg.bins), bece_acc(cfg.bins);
    for (const Sample& s : test_set) {
        ProbMap probs = softmax_logits(forward(net, s.image));
        Tensor pred({s.labels.height(), s.labels.width()}, DType::u8);
        uint8_t* pd = pred.ptr<uint8_t>();
        for (size_t p = 0; p < s.labels.pixels(); ++p) {
            size_t best = 0;
            double bv = probs.at_flat(0, p);
            for (size_t c = 1; c < C; ++c)
                if (probs.at_flat(c, p) > bv) {
                    bv = probs.at_flat(c, p);
                    best = c;
                }
            pd[p] = static_cast<uint8_t>(best);
        }
        const LabelMap pred_labels(std::move(pred), C);
        const SegScores scores = seg_scores(pred_labels, s.labels);
        for (size_t c = 0; c < C; ++c) {
            dsc_sum[c] += scores.per_class[c].dsc;
            iou_sum[c] += scores.per_class[c].iou;
        }
        if (scores.mean_hd95_defined) {
            hd_sum += scores.mean_hd95;
            ++hd_count;
        }
        accumulate_calibration(ece_acc, probs, s.labels);
        const BinaryMask band = boundary_mask(s.labels, cfg.radius, cfg.shape);
        accumulate_calibration(bece_acc, probs, s.labels, &band);
    }

    const double nt = static_cast<double>(test_set.size());
    row.per_class_dsc.resize(C);
    double mean_dsc = 0.0, mean_iou = 0.0;
    for (size_t c = 0; c < C; ++c) {
        row.per_class_dsc[c] = dsc_sum[c] / nt;
        mean_dsc += dsc_sum[c] / nt;
        mean_iou += iou_sum[c] / nt;
    }
    row.mean_dsc = mean_dsc / static_cast<double>(C);
    row.mean_iou = mean_iou / static_cast<double>(C);
    row.mean_hd95 = hd_count > 0 ? hd_sum / static_cast<double>(hd_count) : 0.0;
    row.ece = ece_acc.finalize().score;
    row.bece = bece_acc.finalize().score;

    if (trained_out) *trained_out = std::move(net);
    if (log_out) *log_out = std::move(log);
    return row;
}

ResultsTable run_matrix(const std::vector<ExperimentConfig>& configs,
                        const std::vector<std::string>& swept_keys, size_t jobs) {
    struct Cell {
        size_t config_idx;
        uint64_t seed;
    };
    std::vector<Cell> cells;
    for (size_t i = 0; i < configs.size(); ++i)
        for (uint64_t seed : configs[i].seeds) cells.push_back({i, seed});

    std::vector<ResultRow> rows(cells.size());
    std::mutex next_mutex;
    size_t next = 0;
    auto worker = [&]() {
        while (true) {
            size_t k;
            {
                std::lock_guard<std::mutex> lock(next_mutex);
                if (next >= cells.size()) return;
                k = next++;
            }
            const Cell& cell = cells[k];
            const std::string id = config_id(configs[cell.config_idx], swept_keys);
            try {
                rows[k] = run_cell(configs[cell.config_idx], cell.seed, id);
            } catch (const std::exception& e) {
                rows[k].config_id = id;
                rows[k].seed = std::to_string(cell.seed);
                rows[k].failed = true;
                rows[k].error = e.what();
            }
        }
    };

    if (jobs <= 1 || cells.size() <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        const size_t n_threads = std::min(jobs, cells.size());
        for (size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
    }

    ResultsTable table;
    table.rows = rows;

    // mean / stdev over seeds per config, in config order
    size_t base = 0;
    for (const ExperimentConfig& cfg : configs) {
        const size_t n_seeds = cfg.seeds.size();
        std::vector<const ResultRow*> ok;
        for (size_t i = 0; i < n_seeds; ++i)
            if (!rows[base + i].failed) ok.push_back(&rows[base + i]);
        const std::string id = config_id(cfg, swept_keys);
        if (!ok.empty()) {
            const size_t C = ok.front()->per_class_dsc.size();
            auto aggregate = [&](const std::string& tag, auto f) {
                ResultRow agg;
                agg.config_id = id;
                agg.seed = tag;
                agg.per_class_dsc.resize(C);
                for (size_t c = 0; c < C; ++c)
                    agg.per_class_dsc[c] = f([c](const ResultRow& r) { return r.per_class_dsc[c]; });
                agg.mean_dsc = f([](const ResultRow& r) { return r.mean_dsc; });
                agg.mean_iou = f([](const ResultRow& r) { return r.mean_iou; });
                agg.mean_hd95 = f([](const ResultRow& r) { return r.mean_hd95; });
                agg.ece = f([](const ResultRow& r) { return r.ece; });
                agg.bece = f([](const ResultRow& r) { return r.bece; });
                return agg;
            };
            auto mean_of = [&](auto field) {
                double s = 0.0;
                for (const ResultRow* r : ok) s += field(*r);
                return s / static_cast<double>(ok.size());
            };
            auto stdev_of = [&](auto field) {
                if (ok.size() < 2) return 0.0;
                const double m = mean_of(field);
                double s = 0.0;
                for (const ResultRow* r : ok) s += (field(*r) - m) * (field(*r) - m);
                return std::sqrt(s / static_cast<double>(ok.size() - 1));
            };
            table.rows.push_back(aggregate("mean", mean_of));
            table.rows.push_back(aggregate("stdev", stdev_of));
        }
        base += n_seeds;
    }
    return table;
}

std::string ResultsTable::to_csv(const std::string& config_line) const {
    std::ostringstream os;
    os << "# toolkit_version=" << CONFWISE_VERSION << "\n";
    os << "# config=" << config_line << "\n";
    const size_t C = rows.empty() ? 0 : rows.front().per_class_dsc.size();
    os << "config_id,seed";
    for (size_t c = 0; c < C; ++c) os << ",dsc_c" << c;
    os << ",mean_dsc,mean_iou,mean_hd95,ece,bece,status\n";
    for (const ResultRow& r : rows) {
        os << r.config_id << ',' << r.seed;
        if (r.failed) {
            for (size_t c = 0; c < C; ++c) os << ',';
            os << ",,,,,failed:" << r.error << "\n";
            continue;
        }
        for (size_t c = 0; c < r.per_class_dsc.size(); ++c) os << ',' << fmt(r.per_class_dsc[c]);
        os << ',' << fmt(r.mean_dsc) << ',' << fmt(r.mean_iou) << ',' << fmt(r.mean_hd95) << ','
           << fmt(r.ece) << ',' << fmt(r.bece) << ",ok\n";
    }
    return os.str();
}

std::string ResultsTable::render_text() const {
    std::ostringstream os;
    os << "config_id                     seed    mean_dsc  mean_iou  hd95     ece      bece\n";
    os << "-----------------------------------------------------------------------------------\n";
    for (const ResultRow& r : rows) {
        char line[256];
        if (r.failed) {
            std::snprintf(line, sizeof(line), "%-29s %-7s FAILED: %s\n", r.config_id.c_str(),
                          r.seed.c_str(), r.error.c_str());
        } else {
            std::snprintf(line, sizeof(line), "%-29s %-7s %-9s %-9s %-8s %-8s %-8s\n",
                          r.config_id.c_str(), r.seed.c_str(), fmt_short(r.mean_dsc).c_str(),
                          fmt_short(r.mean_iou).c_str(), fmt_short(r.mean_hd95).c_str(),
                          fmt_short(r.ece).c_str(), fmt_short(r.bece).c_str());
        }
        os << line;
    }
    return os.str();
}

size_t default_jobs() {
    const char* env = std::getenv("CONFWISE_JOBS");
    if (!env) return 1;
    const long v = std::strtol(env, nullptr, 10);
    return v > 0 ? static_cast<size_t>(v) : 1;
}

}  // namespace confwise
