#include "confwise/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace confwise {

namespace {

void require_match(const ProbMap& probs, const LabelMap& labels) {
    if (probs.height() != labels.height() || probs.width() != labels.width() ||
        probs.num_classes() != labels.num_classes())
        throw std::invalid_argument("calibration: probability/label shape mismatch");
}

std::string fmt_full(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

CalibrationAccumulator::CalibrationAccumulator(size_t num_bins)
    : counts_(num_bins, 0), conf_sums_(num_bins, 0.0), correct_counts_(num_bins, 0) {
    if (num_bins < 1) throw std::invalid_argument("calibration: need at least one bin");
    edges_.resize(num_bins + 1);
    for (size_t m = 0; m <= num_bins; ++m)
        edges_[m] = static_cast<double>(m) / static_cast<double>(num_bins);
}

void CalibrationAccumulator::add(double confidence, bool correct) {
    const size_t M = counts_.size();
    size_t idx =
        static_cast<size_t>(std::ceil(confidence * static_cast<double>(M)));
    if (idx < 1) idx = 1;
    if (idx > M) idx = M;
    // Fix up against the actual edges so membership is exactly
    // lower < conf <= upper.
    while (idx > 1 && confidence <= edges_[idx - 1]) --idx;
    while (idx < M && confidence > edges_[idx]) ++idx;
    counts_[idx - 1] += 1;
    conf_sums_[idx - 1] += confidence;
    correct_counts_[idx - 1] += correct ? 1 : 0;
}

void CalibrationAccumulator::merge(const CalibrationAccumulator& other) {
    if (other.counts_.size() != counts_.size())
        throw std::invalid_argument("calibration: bin count mismatch in merge");
    for (size_t m = 0; m < counts_.size(); ++m) {
        counts_[m] += other.counts_[m];
        conf_sums_[m] += other.conf_sums_[m];
        correct_counts_[m] += other.correct_counts_[m];
    }
}

CalibrationReport CalibrationAccumulator::finalize() const {
    CalibrationReport rep;
    const size_t M = counts_.size();
    rep.num_bins = M;
    rep.bins.resize(M);
    size_t n = 0;
    for (size_t m = 0; m < M; ++m) n += counts_[m];
    rep.n = n;
    rep.empty_domain = n == 0;
    double score = 0.0;
    for (size_t m = 0; m < M; ++m) {
        CalibrationReport::Bin& b = rep.bins[m];
        b.lo = edges_[m];
        b.hi = edges_[m + 1];
        b.count = counts_[m];
        if (b.count > 0) {
            b.confidence = conf_sums_[m] / static_cast<double>(b.count);
            b.accuracy =
                static_cast<double>(correct_counts_[m]) / static_cast<double>(b.count);
            score += (static_cast<double>(b.count) / static_cast<double>(n)) *
                     std::fabs(b.accuracy - b.confidence);
        }
    }
    rep.score = n == 0 ? 0.0 : score;
    return rep;
}

SegScores seg_scores(const LabelMap& pred_labels, const LabelMap& gt_labels) {
    if (pred_labels.height() != gt_labels.height() || pred_labels.width() != gt_labels.width() ||
        pred_labels.num_classes() != gt_labels.num_classes())
        throw std::invalid_argument("seg_scores: shape mismatch");
    const size_t C = gt_labels.num_classes(), n = gt_labels.pixels();

    std::vector<size_t> tp(C, 0), fp(C, 0), fn(C, 0);
    for (size_t p = 0; p < n; ++p) {
        const uint8_t pr = pred_labels.at_flat(p);
        const uint8_t gt = gt_labels.at_flat(p);
        if (pr == gt) {
            tp[pr] += 1;
        } else {
            fp[pr] += 1;
            fn[gt] += 1;
        }
    }

    SegScores out;
    out.per_class.resize(C);
    double dsc_sum = 0.0, iou_sum = 0.0, hd_sum = 0.0;
    size_t hd_defined = 0;
    for (size_t c = 0; c < C; ++c) {
        ClassScore& s = out.per_class[c];
        const size_t denom = 2 * tp[c] + fp[c] + fn[c];
        if (denom == 0) {
            // absent from both maps
            s.dsc = 1.0;
            s.iou = 1.0;
            s.hd95 = 0.0;
        } else {
            s.dsc = 2.0 * static_cast<double>(tp[c]) / static_cast<double>(denom);
            s.iou = static_cast<double>(tp[c]) /
                    static_cast<double>(tp[c] + fp[c] + fn[c]);
            const Hd95Result hd = hd95(class_mask(pred_labels, static_cast<uint8_t>(c)),
                                       class_mask(gt_labels, static_cast<uint8_t>(c)));
            s.hd95 = hd.value;
            s.hd95_defined = hd.defined;
        }
        dsc_sum += s.dsc;
        iou_sum += s.iou;
        if (s.hd95_defined) {
            hd_sum += s.hd95;
            ++hd_defined;
        }
    }
    out.mean_dsc = dsc_sum / static_cast<double>(C);
    out.mean_iou = iou_sum / static_cast<double>(C);
    if (hd_defined > 0) {
        out.mean_hd95 = hd_sum / static_cast<double>(hd_defined);
    } else {
        out.mean_hd95 = std::sqrt(static_cast<double>(n));
        out.mean_hd95_defined = false;
    }
    return out;
}

void accumulate_calibration(CalibrationAccumulator& acc, const ProbMap& probs,
                            const LabelMap& gt_labels, const BinaryMask* scope) {
    require_match(probs, gt_labels);
    if (scope && (scope->height() != probs.height() || scope->width() != probs.width()))
        throw std::invalid_argument("calibration: scope mask shape mismatch");
    const size_t C = probs.num_classes(), n = probs.pixels();
    const uint8_t* sd = scope ? scope->t.ptr<uint8_t>() : nullptr;
    for (size_t p = 0; p < n; ++p) {
        if (sd && !sd[p]) continue;
        size_t best = 0;
        double conf = probs.at_flat(0, p);
        for (size_t c = 1; c < C; ++c) {
            const double v = probs.at_flat(c, p);
            if (v > conf) {  // ties keep the lowest class index
                conf = v;
                best = c;
            }
        }
        acc.add(conf, best == gt_labels.at_flat(p));
    }
}

CalibrationReport ece(const ProbMap& probs, const LabelMap& gt_labels, size_t num_bins) {
    CalibrationAccumulator acc(num_bins);
    accumulate_calibration(acc, probs, gt_labels);
    return acc.finalize();
}

CalibrationReport bece(const ProbMap& probs, const LabelMap& gt_labels, size_t num_bins,
                       size_t radius, StructShape shape) {
    require_match(probs, gt_labels);
    const BinaryMask band = boundary_mask(gt_labels, radius, shape);
    CalibrationAccumulator acc(num_bins);
    accumulate_calibration(acc, probs, gt_labels, &band);
    return acc.finalize();
}

void export_reliability(const CalibrationReport& report, const std::string& path,
                        const std::string& provenance) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    if (!provenance.empty()) f << "# " << provenance << "\n";
    f << "bin_lo,bin_hi,count,confidence,accuracy,gap\n";
    for (const auto& b : report.bins) {
        f << fmt_full(b.lo) << ',' << fmt_full(b.hi) << ',' << b.count << ',';
        if (b.count > 0) {
            f << fmt_full(b.confidence) << ',' << fmt_full(b.accuracy) << ','
              << fmt_full(b.accuracy - b.confidence);
        } else {
            f << ",,";
        }
        f << '\n';
    }
    if (!f) throw std::runtime_error("write failed: " + path);
}

CalibrationReport parse_reliability(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open for reading: " + path);
    CalibrationReport rep;
    std::string line;
    bool header_seen = false;
    while (std::getline(f, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            if (line.rfind("bin_lo,", 0) != 0)
                throw std::runtime_error(path + ": missing reliability header");
            header_seen = true;
            continue;
        }
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        while (fields.size() < 6) fields.emplace_back();
        CalibrationReport::Bin b;
        b.lo = std::stod(fields[0]);
        b.hi = std::stod(fields[1]);
        b.count = static_cast<size_t>(std::stoull(fields[2]));
        if (b.count > 0) {
            b.confidence = std::stod(fields[3]);
            b.accuracy = std::stod(fields[4]);
        }
        rep.bins.push_back(b);
    }
    rep.num_bins = rep.bins.size();
    for (const auto& b : rep.bins) rep.n += b.count;
    rep.empty_domain = rep.n == 0;
    if (rep.n > 0) {
        for (const auto& b : rep.bins)
            if (b.count > 0)
                rep.score += (static_cast<double>(b.count) / static_cast<double>(rep.n)) *
                             std::fabs(b.accuracy - b.confidence);
    }
    return rep;
}

void export_reliability_svg(const CalibrationReport& report, const std::string& path) {
    const int width = 420, height = 420, margin = 40;
    const int plot = width - 2 * margin;
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\">\n";
    f << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    f << "<line x1=\"" << margin << "\" y1=\"" << height - margin << "\" x2=\""
      << width - margin << "\" y2=\"" << margin
      << "\" stroke=\"#999\" stroke-dasharray=\"4\"/>\n";
    const size_t M = report.bins.size();
    for (size_t m = 0; m < M; ++m) {
        const auto& b = report.bins[m];
        const double x0 = margin + (static_cast<double>(m) / M) * plot;
        const double bw = static_cast<double>(plot) / M;
        if (b.count > 0) {
            const double bh = b.accuracy * plot;
            f << "<rect x=\"" << x0 + 1 << "\" y=\"" << height - margin - bh << "\" width=\""
              << bw - 2 << "\" height=\"" << bh
              << "\" fill=\"#4878a8\" fill-opacity=\"0.8\"/>\n";
            const double cy = height - margin - b.confidence * plot;
            f << "<line x1=\"" << x0 << "\" y1=\"" << cy << "\" x2=\"" << x0 + bw
              << "\" y2=\"" << cy << "\" stroke=\"#c04040\" stroke-width=\"2\"/>\n";
        }
    }
    f << "<rect x=\"" << margin << "\" y=\"" << margin << "\" width=\"" << plot
      << "\" height=\"" << plot << "\" fill=\"none\" stroke=\"black\"/>\n";
    f << "<text x=\"" << width / 2 << "\" y=\"" << height - 8
      << "\" text-anchor=\"middle\" font-size=\"12\">confidence</text>\n";
    f << "<text x=\"12\" y=\"" << height / 2
      << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 12 "
      << height / 2 << ")\">accuracy</text>\n";
    f << "</svg>\n";
}

}  // namespace confwise
