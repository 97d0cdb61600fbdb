// Acceptance suite: one pass/fail line per criterion, nonzero exit on
// any failure. Tolerances and thresholds are pinned here, in code.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <string>
#include <thread>
#include <vector>

#include "confwise/experiment.hpp"
#include "confwise/losses.hpp"
#include "confwise/metrics.hpp"
#include "confwise/model.hpp"
#include "confwise/morphology.hpp"
#include "confwise/partition.hpp"
#include "confwise/synth.hpp"
#include "confwise/tensor_io.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace confwise;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

void report(int number, const std::string& name, bool pass, const std::string& detail,
            double elapsed) {
    std::printf("[%s] %d. %-28s %s (%.1fs)\n", pass ? "PASS" : "FAIL", number, name.c_str(),
                detail.c_str(), elapsed);
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

std::string fmt(const char* format, ...) {
    char buf[512];
    va_list args;
    va_start(args, format);
    std::vsnprintf(buf, sizeof(buf), format, args);
    va_end(args);
    return buf;
}

// --------------------------------------------------------------------
// 1. group-weighted form vs suppression/enhancement reformulation
// --------------------------------------------------------------------
void criterion_1() {
    const auto t0 = Clock::now();
    Rng rng(1001);
    const double q_options[3] = {0.5, 0.8, 0.9};
    double worst = 0.0;
    int cases = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const size_t H = 4 + rng.below(8), W = 4 + rng.below(8);
        const ProbMap probs = testutil::random_probs(3, H, W, rng);
        const LabelMap labels = testutil::random_labels(3, H, W, rng, 2);
        AcwConfig cfg;
        cfg.alpha = rng.uniform(0.0, 0.9);
        cfg.partition.q = q_options[rng.below(3)];
        const auto [result, partition] = acw_loss(probs, labels, cfg);
        const double reform =
            oracle::acw_reformulated_bruteforce(probs, labels, partition, cfg.alpha, true);
        const double rel =
            std::fabs(result.value - reform) / std::max(1.0, std::fabs(result.value));
        worst = std::max(worst, rel);
        ++cases;
    }
    const double el = seconds_since(t0);
    const bool pass = worst <= 1e-10 && cases >= 1000 && el < 10.0;
    report(1, "algebraic identity", pass,
           fmt("%d cases, max rel err %.2e (tol 1e-10)", cases, worst), el);
}

// --------------------------------------------------------------------
// 2. Analytic gradients vs central finite differences
// --------------------------------------------------------------------
void criterion_2() {
    const auto t0 = Clock::now();
    Rng rng(2002);
    const Tensor logits = testutil::random_logits(3, 8, 8, rng);
    const LabelMap labels = testutil::random_labels(3, 8, 8, rng, 6);
    const double tol = 1e-5;

    double worst = 0.0;
    std::string worst_name = "-";
    auto probe = [&](const char* name, auto&& fn) {
        const double err = check_gradient(
            [&](const Tensor& z) { return fn(softmax_logits(z)); }, logits, 1e-5);
        if (err > worst) {
            worst = err;
            worst_name = name;
        }
    };
    probe("ce", [&](const ProbMap& p) { return ce_loss(p, labels); });
    probe("focal", [&](const ProbMap& p) { return focal_loss(p, labels, 2.0); });
    probe("dice", [&](const ProbMap& p) { return dice_loss(p, labels); });
    probe("tversky", [&](const ProbMap& p) { return tversky_loss(p, labels, 0.3, 0.7); });
    probe("focal_tversky",
          [&](const ProbMap& p) { return focal_tversky_loss(p, labels, 0.3, 0.7, 0.75); });
    AcwConfig acw_cfg;
    const ConfidencePartition frozen =
        cluster(softmax_logits(logits), labels, acw_cfg.partition);
    probe("acw", [&](const ProbMap& p) {
        return acw_loss_with_partition(p, labels, frozen, acw_cfg);
    });

    // end-to-end: loss(TinyNet) parameter gradients on >= 100 coordinates
    TinyNet net = TinyNet::init(3, 2024);
    Tensor image({1, 8, 8}, DType::f64);
    for (size_t i = 0; i < image.size(); ++i) image.set(i, rng.uniform01());
    const ForwardCache fc = forward_cached(net, image);
    const LossResult base = ce_loss(softmax_logits(fc.logits), labels);
    NetGrads grads = backward(net, image, fc, base.grad_logits);
    auto ps = net.params();
    auto gs = grads.params();
    double e2e_worst = 0.0;
    Rng pick(2025);
    const double eps = 1e-5;
    int coords = 0;
    for (; coords < 150; ++coords) {
        const size_t t = pick.below(ps.size());
        const size_t i = pick.below(ps[t]->size());
        double* p = ps[t]->ptr<double>();
        const double orig = p[i];
        auto value = [&]() {
            return ce_loss(softmax_logits(forward(net, image)), labels).value;
        };
        p[i] = orig + eps;
        const double up = value();
        p[i] = orig - eps;
        const double down = value();
        p[i] = orig;
        const double fd = (up - down) / (2 * eps);
        const double g = gs[t]->get(i);
        e2e_worst = std::max(
            e2e_worst, std::fabs(fd - g) / std::max({std::fabs(fd), std::fabs(g), 1e-4}));
    }

    const double el = seconds_since(t0);
    const bool pass = worst <= tol && e2e_worst <= tol && el < 60.0;
    report(2, "gradient correctness", pass,
           fmt("losses max %.2e (worst: %s), end-to-end %.2e over %d coords (tol 1e-5)",
               worst, worst_name.c_str(), e2e_worst, coords),
           el);
}

// --------------------------------------------------------------------
// 3. Implementation vs brute-force oracles
// --------------------------------------------------------------------
void criterion_3() {
    const auto t0 = Clock::now();
    Rng rng(3003);
    int q_cases = 0, morph_cases = 0, calib_cases = 0, hd_cases = 0;
    bool q_ok = true, morph_ok = true, hd_ok = true;
    double calib_worst = 0.0;

    for (int trial = 0; trial < 220; ++trial) {
        // quantile vs counting oracle, exact
        {
            const size_t n = 1 + rng.below(64);
            std::vector<double> v(n);
            for (double& x : v) x = rng.uniform01();
            const double f = rng.uniform(0.01, 0.99);
            q_ok &= quantile(v, f) == oracle::quantile_by_counting(v, f);
            ++q_cases;
        }
        const size_t H = 2 + rng.below(15), W = 2 + rng.below(15);
        // dilate / boundary_mask vs double loop, exact
        {
            BinaryMask m = BinaryMask::zeros(H, W);
            for (size_t i = 0; i < H * W; ++i)
                m.t.ptr<uint8_t>()[i] = rng.bernoulli(0.35) ? 1 : 0;
            const size_t radius = 1 + rng.below(3);
            const StructShape shape = rng.bernoulli(0.5) ? StructShape::square : StructShape::cross;
            morph_ok &= dilate(m, radius, shape).t ==
                        oracle::dilate_bruteforce(m, static_cast<long>(radius), shape).t;
            const LabelMap labels = testutil::random_labels(3, H, W, rng);
            morph_ok &=
                boundary_mask(labels, radius, shape).t ==
                oracle::boundary_mask_bruteforce(labels, static_cast<long>(radius), shape).t;
            ++morph_cases;
        }
        // ece/bece vs explicit binning, <= 1e-12
        {
            const ProbMap probs = testutil::random_probs(3, H, W, rng);
            const LabelMap labels = testutil::random_labels(3, H, W, rng);
            const size_t bins = 1 + rng.below(15);
            const CalibrationReport e = ece(probs, labels, bins);
            const oracle::CalibOracle eo =
                oracle::calibration_bruteforce(probs, labels, bins, nullptr);
            calib_worst = std::max(calib_worst, std::fabs(e.score - eo.score));
            const size_t radius = 1 + rng.below(2);
            const CalibrationReport b = bece(probs, labels, bins, radius, StructShape::square);
            const BinaryMask band = boundary_mask(labels, radius, StructShape::square);
            const oracle::CalibOracle bo =
                oracle::calibration_bruteforce(probs, labels, bins, &band);
            calib_worst = std::max(calib_worst, std::fabs(b.score - bo.score));
            ++calib_cases;
        }
        // hd95 vs all-pairs, exact
        {
            BinaryMask a = BinaryMask::zeros(H, W), b = BinaryMask::zeros(H, W);
            for (size_t i = 0; i < H * W; ++i) {
                a.t.ptr<uint8_t>()[i] = rng.bernoulli(0.3) ? 1 : 0;
                b.t.ptr<uint8_t>()[i] = rng.bernoulli(0.3) ? 1 : 0;
            }
            const Hd95Result r = hd95(a, b);
            if (r.defined) {
                hd_ok &= r.value == oracle::hd95_bruteforce(a, b);
                ++hd_cases;
            }
        }
    }
    const double el = seconds_since(t0);
    const bool pass = q_ok && morph_ok && hd_ok && calib_worst <= 1e-12 && q_cases >= 200 &&
                      morph_cases >= 200 && calib_cases >= 200 && hd_cases >= 200 && el < 30.0;
    report(3, "oracle equivalence", pass,
           fmt("quantile %s/%d, morphology %s/%d, calib %.1e/%d (tol 1e-12), hd95 %s/%d",
               q_ok ? "exact" : "MISMATCH", q_cases, morph_ok ? "exact" : "MISMATCH",
               morph_cases, calib_worst, calib_cases, hd_ok ? "exact" : "MISMATCH", hd_cases),
           el);
}

// --------------------------------------------------------------------
// 4. Partition ratio contract at q = 0.8
// --------------------------------------------------------------------
void criterion_4() {
    const auto t0 = Clock::now();
    Rng rng(4004);
    bool ratio_ok = true, ties_ok = true, degen_ok = true;
    int checked = 0;
    for (int trial = 0; trial < 300; ++trial) {
        const size_t H = 4 + rng.below(12), W = 4 + rng.below(12);
        // all-distinct probabilities: jitter a strictly increasing ramp
        Tensor zt({3, H, W}, DType::f64);
        for (size_t i = 0; i < zt.size(); ++i)
            zt.set(i, rng.uniform(-2, 2) + 1e-7 * static_cast<double>(i));
        const ProbMap probs = softmax_logits(zt);
        const LabelMap labels = testutil::random_labels(3, H, W, rng, 3);
        PartitionConfig cfg;
        cfg.q = 0.8;
        const ConfidencePartition part = cluster(probs, labels, cfg);
        for (size_t c = 0; c < 3; ++c) {
            const ClassPartition& cp = part.classes[c];
            if (cp.empty()) continue;
            const double n = static_cast<double>(cp.region_size);
            const double ratio = static_cast<double>(cp.high_idx.size()) / n;
            ratio_ok &= ratio >= 0.8 - 1.0 / n - 1e-12 && ratio <= 0.8 + 1.0 / n + 1e-12;
            for (size_t p : cp.low_idx) ties_ok &= probs.at_flat(c, p) <= cp.threshold;
            for (size_t p : cp.high_idx) ties_ok &= probs.at_flat(c, p) > cp.threshold;
            ++checked;
        }
    }
    // degenerate constant input: everything ties to low, single group
    {
        Tensor pt({2, 1, 9}, DType::f64);
        for (size_t i = 0; i < 9; ++i) {
            pt.set(i, 0.5);
            pt.set(9 + i, 0.5);
        }
        Tensor lt({1, 9}, DType::u8);
        for (size_t i = 0; i < 9; ++i) lt.set(i, 1.0);
        const ConfidencePartition part =
            cluster(ProbMap(pt), LabelMap(lt, 2), PartitionConfig{});
        degen_ok = part.classes[1].degenerate && part.classes[1].high_idx.empty() &&
                   part.classes[1].low_idx.size() == 9;
    }
    const double el = seconds_since(t0);
    const bool pass = ratio_ok && ties_ok && degen_ok && checked > 500;
    report(4, "partition ratio 8:2", pass,
           fmt("%d class regions, ratio %s, ties-to-low %s, degenerate fallback %s", checked,
               ratio_ok ? "ok" : "VIOLATED", ties_ok ? "ok" : "VIOLATED",
               degen_ok ? "ok" : "VIOLATED"),
           el);
}

// --------------------------------------------------------------------
// 5. Reductions between losses
// --------------------------------------------------------------------
void criterion_5() {
    const auto t0 = Clock::now();
    Rng rng(5005);
    double worst = 0.0;
    bool bece_exact = true;
    for (int trial = 0; trial < 100; ++trial) {
        const size_t H = 3 + rng.below(10), W = 3 + rng.below(10);
        const ProbMap probs = testutil::random_probs(3, H, W, rng);
        const LabelMap labels = testutil::random_labels(3, H, W, rng);
        auto gap = [&](const LossResult& a, const LossResult& b) {
            double g = std::fabs(a.value - b.value);
            for (size_t i = 0; i < a.grad_logits.size(); ++i)
                g = std::max(g, std::fabs(a.grad_logits.get(i) - b.grad_logits.get(i)));
            return g;
        };
        worst = std::max(worst, gap(focal_loss(probs, labels, 0.0), ce_loss(probs, labels)));
        worst = std::max(worst,
                         gap(tversky_loss(probs, labels, 0.5, 0.5), dice_loss(probs, labels)));
        worst = std::max(worst, gap(focal_tversky_loss(probs, labels, 0.3, 0.7, 1.0),
                                    tversky_loss(probs, labels, 0.3, 0.7)));
    }
    // BECE with an all-covering band equals ECE exactly (checkerboard)
    for (int trial = 0; trial < 20; ++trial) {
        const size_t H = 4 + rng.below(8), W = 4 + rng.below(8);
        Tensor lt({H, W}, DType::u8);
        for (size_t h = 0; h < H; ++h)
            for (size_t w = 0; w < W; ++w) lt.set(h * W + w, static_cast<double>((h + w) % 2));
        const LabelMap labels(lt, 2);
        const ProbMap probs = testutil::random_probs(2, H, W, rng);
        const CalibrationReport e = ece(probs, labels, 10);
        const CalibrationReport b = bece(probs, labels, 10, 1, StructShape::square);
        bece_exact &= e.score == b.score && e.n == b.n;
    }
    const double el = seconds_since(t0);
    const bool pass = worst <= 1e-12 && bece_exact;
    report(5, "loss reductions", pass,
           fmt("focal0/tversky55/ft1 max gap %.1e (tol 1e-12), all-boundary BECE==ECE %s",
               worst, bece_exact ? "exact" : "VIOLATED"),
           el);
}

// --------------------------------------------------------------------
// 6. Shipped defaults and ablation axes
// --------------------------------------------------------------------
void criterion_6() {
    const auto t0 = Clock::now();
    const AcwConfig acw_defaults;
    const ExperimentConfig exp_defaults;
    bool defaults_ok = acw_defaults.alpha == 0.4 && acw_defaults.partition.q == 0.8 &&
                       exp_defaults.alpha == 0.4 && exp_defaults.q == 0.8;

    bool alpha_axis_ok = false, q_axis_ok = false;
    std::string detail;
    try {
        const std::string base = std::string(CONFWISE_SOURCE_DIR) + "/configs/";
        const auto alpha_cells = expand_matrix(base + "alpha_ablation.conf");
        const std::vector<double> alpha_expect = {0.0, 0.2, 0.4, 0.6, 0.8};
        alpha_axis_ok = alpha_cells.size() == alpha_expect.size();
        for (size_t i = 0; alpha_axis_ok && i < alpha_cells.size(); ++i)
            alpha_axis_ok &= alpha_cells[i].alpha == alpha_expect[i];

        const auto q_cells = expand_matrix(base + "q_ablation.conf");
        q_axis_ok = q_cells.size() == 9;
        for (size_t i = 0; q_axis_ok && i < q_cells.size(); ++i)
            q_axis_ok &= std::fabs(q_cells[i].q - 0.1 * static_cast<double>(i + 1)) < 1e-12;
    } catch (const std::exception& e) {
        detail = std::string(" (") + e.what() + ")";
    }
    const double el = seconds_since(t0);
    const bool pass = defaults_ok && alpha_axis_ok && q_axis_ok;
    report(6, "default fidelity", pass,
           fmt("alpha=0.4,q=0.8 defaults %s; alpha axis {0.0..0.8} %s; q axis Q10..Q90 %s%s",
               defaults_ok ? "ok" : "WRONG", alpha_axis_ok ? "ok" : "WRONG",
               q_axis_ok ? "ok" : "WRONG", detail.c_str()),
           el);
}

// --------------------------------------------------------------------
// 7 & 8. Directional synthetic experiment + determinism
// --------------------------------------------------------------------
ExperimentConfig directional_config(const std::string& loss) {
    ExperimentConfig cfg;
    cfg.loss = loss;
    cfg.dataset.height = 64;
    cfg.dataset.width = 64;
    cfg.dataset.seed = 20240501;
    cfg.dataset_n = 200;  // 160 train / 40 test
    cfg.epochs = 30;
    cfg.seeds = {11, 12, 13, 14, 15};
    return cfg;
}

struct DirectionalOutcome {
    ResultsTable table;
    double ce_ring_dsc = 0.0, acw_ring_dsc = 0.0;
    double ce_bece = 0.0, acw_bece = 0.0;
    bool ran_ok = false;
};

DirectionalOutcome run_directional() {
    const std::vector<ExperimentConfig> configs = {directional_config("ce"),
                                                   directional_config("acw")};
    const size_t jobs = std::max(1u, std::thread::hardware_concurrency());
    DirectionalOutcome out;
    out.table = run_matrix(configs, {"loss"}, jobs);
    for (const ResultRow& row : out.table.rows) {
        if (row.failed) return out;
        if (row.seed != "mean") continue;
        if (row.config_id == "loss=ce") {
            out.ce_ring_dsc = row.per_class_dsc[1];
            out.ce_bece = row.bece;
        } else if (row.config_id == "loss=acw") {
            out.acw_ring_dsc = row.per_class_dsc[1];
            out.acw_bece = row.bece;
        }
    }
    out.ran_ok = true;
    return out;
}

std::string per_seed_rows_fingerprint(const ResultsTable& table) {
    std::string out;
    for (const ResultRow& r : table.rows) {
        if (r.seed == "mean" || r.seed == "stdev") continue;
        out += r.config_id + "|" + r.seed;
        auto put = [&](double v) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "|%.17g", v);
            out += buf;
        };
        for (double d : r.per_class_dsc) put(d);
        put(r.mean_dsc);
        put(r.mean_iou);
        put(r.mean_hd95);
        put(r.ece);
        put(r.bece);
        out += "\n";
    }
    return out;
}

void criteria_7_and_8() {
    auto t0 = Clock::now();
    const DirectionalOutcome first = run_directional();
    double el = seconds_since(t0);
    {
        const bool direction_ok = first.ran_ok && first.acw_ring_dsc >= first.ce_ring_dsc &&
                                  first.acw_bece <= first.ce_bece;
        const bool pass = direction_ok && el < 900.0;
        report(7, "directional experiment", pass,
               fmt("ring DSC acw %.4f vs ce %.4f; BECE acw %.4f vs ce %.4f (5 seeds)",
                   first.acw_ring_dsc, first.ce_ring_dsc, first.acw_bece, first.ce_bece),
               el);
    }

    t0 = Clock::now();
    const DirectionalOutcome second = run_directional();
    const bool rows_identical = first.ran_ok && second.ran_ok &&
                                per_seed_rows_fingerprint(first.table) ==
                                    per_seed_rows_fingerprint(second.table);

    // SEGT round-trips stay bit-exact
    bool segt_ok = true;
    {
        Rng rng(8008);
        const std::string path = "acceptance_roundtrip.segt";
        for (DType dtype : {DType::f32, DType::f64, DType::u8}) {
            Tensor t({3, 5, 7}, dtype);
            for (size_t i = 0; i < t.size(); ++i)
                t.set(i, dtype == DType::u8 ? static_cast<double>(rng.below(256))
                                            : rng.uniform(-5, 5));
            write_tensor(path, t);
            segt_ok &= read_tensor(path) == t;
        }
        std::remove(path.c_str());
    }
    el = seconds_since(t0);
    report(8, "determinism", rows_identical && segt_ok,
           fmt("repeated run rows %s, SEGT round-trip %s",
               rows_identical ? "bit-identical" : "DIFFER", segt_ok ? "bit-exact" : "BROKEN"),
           el);
}

}  // namespace

int main() {
    std::printf("confwise acceptance suite\n");
    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();
    criterion_5();
    criterion_6();
    criteria_7_and_8();
    if (g_failures > 0) {
        std::printf("%d criterion(s) FAILED\n", g_failures);
        return 1;
    }
    std::printf("all criteria passed\n");
    return 0;
}
