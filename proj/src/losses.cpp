#include "confwise/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "confwise/rng.hpp"

namespace confwise {

namespace {

constexpr double kProbFloor = 1e-12;

double safe_log(double p) { return std::log(std::max(p, kProbFloor)); }

void require_match(const ProbMap& probs, const LabelMap& labels) {
    if (probs.height() != labels.height() || probs.width() != labels.width() ||
        probs.num_classes() != labels.num_classes())
        throw std::invalid_argument("loss: probability/label shape mismatch");
}

/// Chain rule through the per-pixel softmax: given dL/dp for every channel
/// of pixel `pix`, accumulate dL/dz into grad.
void softmax_chain_pixel(const ProbMap& probs, size_t pix, const double* dl_dp,
                         double* grad, size_t plane) {
    const size_t C = probs.num_classes();
    double dot = 0.0;
    for (size_t j = 0; j < C; ++j) dot += dl_dp[j] * probs.at_flat(j, pix);
    for (size_t k = 0; k < C; ++k) {
        const double pk = probs.at_flat(k, pix);
        grad[k * plane + pix] += pk * (dl_dp[k] - dot);
    }
}

struct SoftCounts {
    double tp = 0.0, fp = 0.0, fn = 0.0;
    double psum = 0.0, gsum = 0.0, isum = 0.0;
};

std::vector<SoftCounts> soft_counts(const ProbMap& probs, const LabelMap& labels) {
    const size_t C = probs.num_classes(), n = probs.pixels();
    std::vector<SoftCounts> out(C);
    for (size_t i = 0; i < C; ++i) {
        SoftCounts& s = out[i];
        for (size_t p = 0; p < n; ++p) {
            const double pv = probs.at_flat(i, p);
            const double y = labels.at_flat(p) == i ? 1.0 : 0.0;
            s.tp += pv * y;
            s.fp += pv * (1.0 - y);
            s.fn += (1.0 - pv) * y;
            s.psum += pv;
            s.gsum += y;
        }
        s.isum = s.tp;
    }
    return out;
}

}  // namespace

ProbMap softmax_logits(const Tensor& logits) {
    if (logits.ndim() != 3) throw std::invalid_argument("softmax: logits must be [C,H,W]");
    Tensor z = logits.to_f64();
    const size_t C = z.dim(0), H = z.dim(1), W = z.dim(2);
    const size_t plane = H * W;
    const double* zd = z.ptr<double>();
    Tensor out({C, H, W}, DType::f64);
    double* od = out.ptr<double>();
    for (size_t p = 0; p < plane; ++p) {
        double m = zd[p];
        for (size_t c = 1; c < C; ++c) m = std::max(m, zd[c * plane + p]);
        if (std::isnan(m)) throw std::invalid_argument("softmax: NaN logit");
        double sum = 0.0;
        for (size_t c = 0; c < C; ++c) {
            const double e = std::exp(zd[c * plane + p] - m);
            od[c * plane + p] = e;
            sum += e;
        }
        for (size_t c = 0; c < C; ++c) od[c * plane + p] /= sum;
    }
    return ProbMap::trusted(std::move(out));
}

LossResult ce_loss(const ProbMap& probs, const LabelMap& labels) {
    require_match(probs, labels);
    const size_t C = probs.num_classes(), n = probs.pixels();
    const double inv_n = 1.0 / static_cast<double>(n);

    double value = 0.0;
    Tensor grad({C, probs.height(), probs.width()}, DType::f64);
    double* g = grad.ptr<double>();
    for (size_t p = 0; p < n; ++p) {
        const size_t t = labels.at_flat(p);
        value -= safe_log(probs.at_flat(t, p));
        for (size_t c = 0; c < C; ++c) {
            const double y = (c == t) ? 1.0 : 0.0;
            g[c * n + p] = (probs.at_flat(c, p) - y) * inv_n;
        }
    }
    return {value * inv_n, std::move(grad)};
}

LossResult focal_loss(const ProbMap& probs, const LabelMap& labels, double gamma) {
    require_match(probs, labels);
    if (gamma < 0.0) throw std::invalid_argument("focal: gamma must be >= 0");
    const size_t C = probs.num_classes(), n = probs.pixels();
    const double inv_n = 1.0 / static_cast<double>(n);

    double value = 0.0;
    Tensor grad({C, probs.height(), probs.width()}, DType::f64);
    double* g = grad.ptr<double>();
    std::vector<double> dl_dp(C);
    for (size_t p = 0; p < n; ++p) {
        const size_t t = labels.at_flat(p);
        const double pt = std::max(probs.at_flat(t, p), kProbFloor);
        const double one_minus = 1.0 - pt;
        const double logpt = std::log(pt);
        value -= std::pow(one_minus, gamma) * logpt;

        // d/dpt of -(1-pt)^g log pt; the first term vanishes at g=0 and as pt->1.
        double dl_dpt = -std::pow(one_minus, gamma) / pt;
        if (gamma > 0.0 && one_minus > 0.0)
            dl_dpt += gamma * std::pow(one_minus, gamma - 1.0) * logpt;
        dl_dpt *= inv_n;

        std::fill(dl_dp.begin(), dl_dp.end(), 0.0);
        dl_dp[t] = dl_dpt;
        softmax_chain_pixel(probs, p, dl_dp.data(), g, n);
    }
    return {value * inv_n, std::move(grad)};
}

LossResult dice_loss(const ProbMap& probs, const LabelMap& labels, double smooth) {
    return tversky_loss(probs, labels, 0.5, 0.5, smooth);
}

LossResult tversky_loss(const ProbMap& probs, const LabelMap& labels, double a, double b,
                        double smooth) {
    require_match(probs, labels);
    if (!(a > 0.0 && b > 0.0)) throw std::invalid_argument("tversky: weights must be > 0");
    if (!(smooth > 0.0)) throw std::invalid_argument("tversky: smooth must be > 0");
    const size_t C = probs.num_classes(), n = probs.pixels();
    const std::vector<SoftCounts> counts = soft_counts(probs, labels);

    double index_sum = 0.0;
    std::vector<double> num(C), den(C);
    for (size_t i = 0; i < C; ++i) {
        num[i] = 2.0 * counts[i].tp + smooth;
        den[i] = 2.0 * counts[i].tp + 2.0 * a * counts[i].fp + 2.0 * b * counts[i].fn + smooth;
        index_sum += num[i] / den[i];
    }
    const double value = 1.0 - index_sum / static_cast<double>(C);

    Tensor grad({C, probs.height(), probs.width()}, DType::f64);
    double* g = grad.ptr<double>();
    std::vector<double> dl_dp(C);
    for (size_t p = 0; p < n; ++p) {
        const size_t t = labels.at_flat(p);
        for (size_t i = 0; i < C; ++i) {
            const double y = (i == t) ? 1.0 : 0.0;
            const double dnum = 2.0 * y;
            const double dden = 2.0 * y + 2.0 * a * (1.0 - y) - 2.0 * b * y;
            const double dindex = (dnum * den[i] - num[i] * dden) / (den[i] * den[i]);
            dl_dp[i] = -dindex / static_cast<double>(C);
        }
        softmax_chain_pixel(probs, p, dl_dp.data(), g, n);
    }
    return {value, std::move(grad)};
}

LossResult focal_tversky_loss(const ProbMap& probs, const LabelMap& labels, double a, double b,
                              double gamma_ft, double smooth) {
    require_match(probs, labels);
    if (!(gamma_ft > 0.0)) throw std::invalid_argument("focal tversky: gamma_ft must be > 0");
    if (!(a > 0.0 && b > 0.0)) throw std::invalid_argument("focal tversky: weights must be > 0");
    const size_t C = probs.num_classes(), n = probs.pixels();
    const std::vector<SoftCounts> counts = soft_counts(probs, labels);

    double value = 0.0;
    std::vector<double> num(C), den(C), factor(C);
    for (size_t i = 0; i < C; ++i) {
        num[i] = 2.0 * counts[i].tp + smooth;
        den[i] = 2.0 * counts[i].tp + 2.0 * a * counts[i].fp + 2.0 * b * counts[i].fn + smooth;
        const double one_minus_ti = 1.0 - num[i] / den[i];
        value += std::pow(std::max(one_minus_ti, 0.0), gamma_ft);
        factor[i] = one_minus_ti > 0.0 ? gamma_ft * std::pow(one_minus_ti, gamma_ft - 1.0) : 0.0;
    }
    value /= static_cast<double>(C);

    Tensor grad({C, probs.height(), probs.width()}, DType::f64);
    double* g = grad.ptr<double>();
    std::vector<double> dl_dp(C);
    for (size_t p = 0; p < n; ++p) {
        const size_t t = labels.at_flat(p);
        for (size_t i = 0; i < C; ++i) {
            const double y = (i == t) ? 1.0 : 0.0;
            const double dnum = 2.0 * y;
            const double dden = 2.0 * y + 2.0 * a * (1.0 - y) - 2.0 * b * y;
            const double dindex = (dnum * den[i] - num[i] * dden) / (den[i] * den[i]);
            dl_dp[i] = -factor[i] * dindex / static_cast<double>(C);
        }
        softmax_chain_pixel(probs, p, dl_dp.data(), g, n);
    }
    return {value, std::move(grad)};
}

LossResult acw_loss_with_partition(const ProbMap& probs, const LabelMap& labels,
                                   const ConfidencePartition& partition, const AcwConfig& cfg) {
    require_match(probs, labels);
    if (!(cfg.alpha >= 0.0 && cfg.alpha < 1.0))
        throw std::invalid_argument("acw: alpha must lie in [0,1)");

    if (cfg.alpha_zero_plain_ce && cfg.alpha == 0.0) return ce_loss(probs, labels);

    const size_t C = probs.num_classes(), n = probs.pixels();

    std::vector<size_t> present;
    for (size_t i = 0; i < C; ++i) {
        if (partition.classes[i].empty()) continue;
        if (!cfg.include_background && i == 0) continue;
        present.push_back(i);
    }
    if (present.empty()) throw std::invalid_argument("acw: no class has a ground-truth region");

    const double w_high = 1.0 - cfg.alpha;
    const double w_low = 1.0 + cfg.alpha;
    const double inv_classes = 1.0 / static_cast<double>(present.size());

    // Per-pixel weights; the partition itself carries no gradient.
    std::vector<double> pixel_weight(n, 0.0);
    double value = 0.0;
    for (size_t i : present) {
        const ClassPartition& part = partition.classes[i];
        double class_loss = 0.0;
        if (part.degenerate) {
            const double w = 1.0 / static_cast<double>(part.region_size);
            for (size_t p : part.high_idx) {
                class_loss -= w * safe_log(probs.at_flat(i, p));
                pixel_weight[p] = w * inv_classes;
            }
            for (size_t p : part.low_idx) {
                class_loss -= w * safe_log(probs.at_flat(i, p));
                pixel_weight[p] = w * inv_classes;
            }
        } else {
            const double wh = w_high / static_cast<double>(part.high_idx.size());
            const double wl = w_low / static_cast<double>(part.low_idx.size());
            for (size_t p : part.high_idx) {
                class_loss -= wh * safe_log(probs.at_flat(i, p));
                pixel_weight[p] = wh * inv_classes;
            }
            for (size_t p : part.low_idx) {
                class_loss -= wl * safe_log(probs.at_flat(i, p));
                pixel_weight[p] = wl * inv_classes;
            }
        }
        value += class_loss;
    }
    value *= inv_classes;

    Tensor grad({C, probs.height(), probs.width()}, DType::f64);
    double* g = grad.ptr<double>();
    for (size_t p = 0; p < n; ++p) {
        const double w = pixel_weight[p];
        if (w == 0.0) continue;
        const size_t t = labels.at_flat(p);
        for (size_t c = 0; c < C; ++c) {
            const double y = (c == t) ? 1.0 : 0.0;
            g[c * n + p] = w * (probs.at_flat(c, p) - y);
        }
    }
    return {value, std::move(grad)};
}

std::pair<LossResult, ConfidencePartition> acw_loss(const ProbMap& probs, const LabelMap& labels,
                                                    const AcwConfig& cfg) {
    ConfidencePartition partition = cluster(probs, labels, cfg.partition);
    LossResult result = acw_loss_with_partition(probs, labels, partition, cfg);
    return {std::move(result), std::move(partition)};
}

double check_gradient(const std::function<LossResult(const Tensor&)>& loss_fn,
                      const Tensor& logits, double epsilon, size_t max_coords, uint64_t seed) {
    if (!(epsilon > 0.0)) throw std::invalid_argument("check_gradient: epsilon must be > 0");
    Tensor z = logits.to_f64();
    const size_t n = z.size();

    std::vector<size_t> coords(n);
    std::iota(coords.begin(), coords.end(), size_t{0});
    if (max_coords > 0 && max_coords < n) {
        Rng rng(seed);
        rng.shuffle(coords);
        coords.resize(max_coords);
    }

    const LossResult base = loss_fn(z);
    const double* analytic = base.grad_logits.ptr<double>();

    double max_rel = 0.0;
    double* zd = z.ptr<double>();
    for (size_t k : coords) {
        const double orig = zd[k];
        zd[k] = orig + epsilon;
        const double up = loss_fn(z).value;
        zd[k] = orig - epsilon;
        const double down = loss_fn(z).value;
        zd[k] = orig;
        const double fd = (up - down) / (2.0 * epsilon);
        const double denom = std::max({std::fabs(fd), std::fabs(analytic[k]), 1e-4});
        max_rel = std::max(max_rel, std::fabs(fd - analytic[k]) / denom);
    }
    return max_rel;
}

LossSpec parse_loss_name(const std::string& name) {
    auto kind_of = [](const std::string& s) -> LossSpec::Kind {
        if (s == "ce") return LossSpec::Kind::ce;
        if (s == "focal") return LossSpec::Kind::focal;
        if (s == "dice") return LossSpec::Kind::dice;
        if (s == "tversky") return LossSpec::Kind::tversky;
        if (s == "focal_tversky") return LossSpec::Kind::focal_tversky;
        if (s == "acw") return LossSpec::Kind::acw;
        throw std::invalid_argument("unknown loss name: " + s);
    };
    LossSpec spec;
    const size_t plus = name.find('+');
    if (plus == std::string::npos) {
        spec.primary = kind_of(name);
        return spec;
    }
    spec.primary = kind_of(name.substr(0, plus));
    if (spec.primary != LossSpec::Kind::acw)
        throw std::invalid_argument("combined losses must start with acw: " + name);
    spec.combined = true;
    spec.secondary = kind_of(name.substr(plus + 1));
    if (spec.secondary == LossSpec::Kind::acw)
        throw std::invalid_argument("acw+acw is not a valid combination");
    return spec;
}

std::string loss_name(const LossSpec& spec) {
    auto name_of = [](LossSpec::Kind k) -> std::string {
        switch (k) {
            case LossSpec::Kind::ce: return "ce";
            case LossSpec::Kind::focal: return "focal";
            case LossSpec::Kind::dice: return "dice";
            case LossSpec::Kind::tversky: return "tversky";
            case LossSpec::Kind::focal_tversky: return "focal_tversky";
            case LossSpec::Kind::acw: return "acw";
        }
        return "?";
    };
    if (!spec.combined) return name_of(spec.primary);
    return name_of(spec.primary) + "+" + name_of(spec.secondary);
}

LossResult evaluate_loss(const LossSpec& spec, const ProbMap& probs, const LabelMap& labels) {
    auto single = [&](LossSpec::Kind k) -> LossResult {
        switch (k) {
            case LossSpec::Kind::ce: return ce_loss(probs, labels);
            case LossSpec::Kind::focal: return focal_loss(probs, labels, spec.gamma);
            case LossSpec::Kind::dice: return dice_loss(probs, labels, spec.smooth);
            case LossSpec::Kind::tversky:
                return tversky_loss(probs, labels, spec.tversky_fp, spec.tversky_fn, spec.smooth);
            case LossSpec::Kind::focal_tversky:
                return focal_tversky_loss(probs, labels, spec.tversky_fp, spec.tversky_fn,
                                          spec.gamma_ft, spec.smooth);
            case LossSpec::Kind::acw: return acw_loss(probs, labels, spec.acw).first;
        }
        throw std::logic_error("unreachable loss kind");
    };
    if (!spec.combined) return single(spec.primary);

    LossResult first = single(spec.primary);
    const LossResult second = single(spec.secondary);
    LossResult out;
    out.value = spec.combo_w1 * first.value + spec.combo_w2 * second.value;
    out.grad_logits = std::move(first.grad_logits);
    double* g = out.grad_logits.ptr<double>();
    const double* g2 = second.grad_logits.ptr<double>();
    for (size_t i = 0; i < out.grad_logits.size(); ++i)
        g[i] = spec.combo_w1 * g[i] + spec.combo_w2 * g2[i];
    return out;
}

}  // namespace confwise
