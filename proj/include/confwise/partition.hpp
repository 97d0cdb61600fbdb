#pragma once

#include <cstdint>
#include <vector>

#include "confwise/tensor.hpp"

namespace confwise {

/// Controls the confidence clustering.
///
/// `q` is the target fraction of a region that lands in the
/// high-confidence group (default 0.8, i.e. an 8:2 high:low split), so
/// the threshold sits at the (1-q) nearest-rank quantile of the region's
/// probabilities. `literal_percentile` flips that: the threshold sits at
/// the q quantile instead, leaving roughly (1-q) of the region above it.
struct PartitionConfig {
    double q = 0.8;
    enum class Scope { per_class_gt_region, global } scope = Scope::per_class_gt_region;
    bool literal_percentile = false;
};

/// One class's split of its ground-truth pixels. Indices are flat h*W+w.
/// `degenerate` means the threshold failed to separate the region (one
/// group came out empty); downstream weighting then treats the whole
/// region as a single group with weight 1.
struct ClassPartition {
    std::vector<size_t> high_idx;
    std::vector<size_t> low_idx;
    double threshold = 0.0;
    double beta = 0.0;  // |high| / |region|
    size_t region_size = 0;
    bool degenerate = false;

    bool empty() const { return region_size == 0; }
};

struct ConfidencePartition {
    std::vector<ClassPartition> classes;
};

/// Nearest-rank quantile: sort ascending, return the element at index
/// ceil(fraction * n) - 1. Throws on empty input or fraction outside (0,1).
double quantile(std::vector<double> values, double fraction);

/// Splits each class's ground-truth region into high- and low-confidence
/// groups. Pixels strictly above the threshold go high; ties go low.
/// Classes absent from the labels yield empty partitions.
ConfidencePartition cluster(const ProbMap& probs, const LabelMap& labels,
                            const PartitionConfig& cfg);

}  // namespace confwise
