#pragma once

#include <functional>
#include <string>

#include "confwise/partition.hpp"
#include "confwise/tensor.hpp"

namespace confwise {

/// Scalar loss plus its gradient with respect to the pre-softmax logits.
/// Losses consume probabilities; the softmax Jacobian is composed
/// internally so a model only needs plain layer backprop.
struct LossResult {
    double value = 0.0;
    Tensor grad_logits;  // [C,H,W] f64
};

struct AcwConfig {
    double alpha = 0.4;  // W_h = 1-alpha, W_l = 1+alpha
    PartitionConfig partition;
    bool include_background = true;
    /// When alpha == 0 the group-mean weighting is mathematically not
    /// plain cross-entropy; set this to make alpha == 0 fall back to CE
    /// instead.
    bool alpha_zero_plain_ce = false;
};

/// Per-pixel softmax over channels, stabilized by max subtraction.
/// Throws on non-finite logits.
ProbMap softmax_logits(const Tensor& logits);

LossResult ce_loss(const ProbMap& probs, const LabelMap& labels);
LossResult focal_loss(const ProbMap& probs, const LabelMap& labels, double gamma = 2.0);
LossResult dice_loss(const ProbMap& probs, const LabelMap& labels, double smooth = 1e-5);

/// Soft Tversky loss with false-positive weight `a` and false-negative
/// weight `b`. The smooth term is applied at the same scale as in
/// dice_loss, so tversky_loss(0.5, 0.5) reduces to dice_loss exactly.
LossResult tversky_loss(const ProbMap& probs, const LabelMap& labels, double a = 0.3,
                        double b = 0.7, double smooth = 1e-5);
LossResult focal_tversky_loss(const ProbMap& probs, const LabelMap& labels, double a = 0.3,
                              double b = 0.7, double gamma_ft = 0.75, double smooth = 1e-5);

/// Adaptive confidence-wise loss. Clusters each class's ground-truth
/// region by the configured quantile threshold and reweights the groups:
/// the high-confidence group is averaged with weight 1-alpha, the
/// low-confidence group with 1+alpha, and class terms are averaged over
/// the classes present. The partition is treated as constant in the
/// backward pass.
std::pair<LossResult, ConfidencePartition> acw_loss(const ProbMap& probs,
                                                    const LabelMap& labels,
                                                    const AcwConfig& cfg);

/// Same loss evaluated against a caller-supplied (frozen) partition.
LossResult acw_loss_with_partition(const ProbMap& probs, const LabelMap& labels,
                                   const ConfidencePartition& partition, const AcwConfig& cfg);

/// Central finite-difference check of an analytic logit gradient.
/// Perturbs up to `max_coords` coordinates (all of them when the tensor
/// is small enough) and returns the largest relative error, where the
/// error is scaled by max(|analytic|, |numeric|, 1e-4) so that
/// coordinates dominated by differencing noise read as absolute error.
double check_gradient(const std::function<LossResult(const Tensor&)>& loss_fn,
                      const Tensor& logits, double epsilon = 1e-5, size_t max_coords = 0,
                      uint64_t seed = 0);

/// Loss selection as it appears in experiment configs, including the
/// equally weighted "acw+X" combinations.
struct LossSpec {
    enum class Kind { ce, focal, dice, tversky, focal_tversky, acw };

    Kind primary = Kind::ce;
    bool combined = false;  // primary is acw, secondary added on top
    Kind secondary = Kind::dice;
    double combo_w1 = 0.5;
    double combo_w2 = 0.5;

    double gamma = 2.0;       // focal
    double tversky_fp = 0.3;  // a
    double tversky_fn = 0.7;  // b
    double gamma_ft = 0.75;
    double smooth = 1e-5;
    AcwConfig acw;
};

/// Parses names like "ce", "acw", "acw+dice". Throws on unknown names.
LossSpec parse_loss_name(const std::string& name);
std::string loss_name(const LossSpec& spec);

LossResult evaluate_loss(const LossSpec& spec, const ProbMap& probs, const LabelMap& labels);

}  // namespace confwise
