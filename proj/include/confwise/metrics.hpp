#pragma once

#include <optional>
#include <string>
#include <vector>

#include "confwise/morphology.hpp"
#include "confwise/tensor.hpp"

namespace confwise {

/// Per-bin calibration data plus the bin-weighted |acc - conf| score.
struct CalibrationReport {
    struct Bin {
        double lo = 0.0, hi = 0.0;
        size_t count = 0;
        double confidence = 0.0;  // mean over the bin; meaningless when count == 0
        double accuracy = 0.0;
    };
    std::vector<Bin> bins;
    double score = 0.0;
    size_t n = 0;
    size_t num_bins = 0;
    bool empty_domain = false;  // set when no pixel fell in scope (n == 0)
};

/// Mergeable per-bin sums, for pooling calibration over a corpus.
/// Bins are M equal-width intervals on (0,1]; bin m covers
/// ((m-1)/M, m/M], with confidence 0 assigned to bin 1.
class CalibrationAccumulator {
public:
    explicit CalibrationAccumulator(size_t num_bins);

    void add(double confidence, bool correct);
    void merge(const CalibrationAccumulator& other);
    CalibrationReport finalize() const;

    size_t num_bins() const { return counts_.size(); }

private:
    std::vector<size_t> counts_;
    std::vector<double> conf_sums_;
    std::vector<size_t> correct_counts_;
    std::vector<double> edges_;  // num_bins+1 entries
};

struct ClassScore {
    double dsc = 0.0;
    double iou = 0.0;
    double hd95 = 0.0;
    bool hd95_defined = true;
};

struct SegScores {
    std::vector<ClassScore> per_class;
    double mean_dsc = 0.0;
    double mean_iou = 0.0;
    double mean_hd95 = 0.0;  // over classes with a defined HD95
    bool mean_hd95_defined = true;
};

/// Hard overlap metrics per class. Classes absent from both maps score
/// 1.0 (DSC/IoU) and HD95 0 by convention.
SegScores seg_scores(const LabelMap& pred_labels, const LabelMap& gt_labels);

/// Per-pixel confidence = max softmax probability; correctness = argmax
/// vs the label (argmax ties break to the lowest class index).
CalibrationReport ece(const ProbMap& probs, const LabelMap& gt_labels, size_t num_bins = 10);

/// ECE restricted to boundary_mask(gt_labels, radius, shape). An empty
/// boundary yields score 0 with n == 0 and empty_domain set.
CalibrationReport bece(const ProbMap& probs, const LabelMap& gt_labels, size_t num_bins = 10,
                       size_t radius = 2, StructShape shape = StructShape::square);

/// Pools one image into an accumulator; `scope` restricts to mask==1
/// when given.
void accumulate_calibration(CalibrationAccumulator& acc, const ProbMap& probs,
                            const LabelMap& gt_labels, const BinaryMask* scope = nullptr);

/// Writes "bin_lo,bin_hi,count,confidence,accuracy,gap" rows, one per
/// bin, full precision. Empty bins leave confidence/accuracy/gap blank.
/// Lines starting with '#' carry provenance and are skipped on parse.
void export_reliability(const CalibrationReport& report, const std::string& path,
                        const std::string& provenance = "");

/// Parses a reliability CSV back into a report (score and n recomputed
/// from the rows).
CalibrationReport parse_reliability(const std::string& path);

/// Simple bar chart of per-bin accuracy against the diagonal.
void export_reliability_svg(const CalibrationReport& report, const std::string& path);

}  // namespace confwise
