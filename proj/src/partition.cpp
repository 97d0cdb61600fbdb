#include "confwise/partition.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace confwise {

double quantile(std::vector<double> values, double fraction) {
    if (values.empty()) throw std::invalid_argument("quantile of empty sequence");
    if (!(fraction > 0.0 && fraction < 1.0))
        throw std::invalid_argument("quantile fraction must lie in (0,1)");
    std::sort(values.begin(), values.end());
    const double n = static_cast<double>(values.size());
    size_t rank = static_cast<size_t>(std::ceil(fraction * n));
    if (rank < 1) rank = 1;
    if (rank > values.size()) rank = values.size();
    return values[rank - 1];
}

ConfidencePartition cluster(const ProbMap& probs, const LabelMap& labels,
                            const PartitionConfig& cfg) {
    if (probs.height() != labels.height() || probs.width() != labels.width() ||
        probs.num_classes() != labels.num_classes())
        throw std::invalid_argument("cluster: probability/label shape mismatch");
    if (!(cfg.q > 0.0 && cfg.q < 1.0))
        throw std::invalid_argument("cluster: q must lie in (0,1)");

    const size_t C = probs.num_classes();
    const size_t n_pix = labels.pixels();
    const double fraction = cfg.literal_percentile ? cfg.q : 1.0 - cfg.q;

    std::vector<std::vector<size_t>> regions(C);
    for (size_t p = 0; p < n_pix; ++p) regions[labels.at_flat(p)].push_back(p);

    double global_threshold = 0.0;
    if (cfg.scope == PartitionConfig::Scope::global) {
        // Pool the true-class probability of every pixel.
        std::vector<double> pooled(n_pix);
        for (size_t p = 0; p < n_pix; ++p) pooled[p] = probs.at_flat(labels.at_flat(p), p);
        global_threshold = quantile(std::move(pooled), fraction);
    }

    ConfidencePartition out;
    out.classes.resize(C);
    for (size_t i = 0; i < C; ++i) {
        ClassPartition& part = out.classes[i];
        const std::vector<size_t>& region = regions[i];
        part.region_size = region.size();
        if (region.empty()) continue;

        double threshold;
        if (cfg.scope == PartitionConfig::Scope::global) {
            threshold = global_threshold;
        } else {
            std::vector<double> vals(region.size());
            for (size_t k = 0; k < region.size(); ++k) vals[k] = probs.at_flat(i, region[k]);
            threshold = quantile(std::move(vals), fraction);
        }
        part.threshold = threshold;

        for (size_t p : region) {
            if (probs.at_flat(i, p) > threshold)
                part.high_idx.push_back(p);
            else
                part.low_idx.push_back(p);
        }
        part.beta = static_cast<double>(part.high_idx.size()) /
                    static_cast<double>(part.region_size);
        part.degenerate = part.high_idx.empty() || part.low_idx.empty();
    }
    return out;
}

}  // namespace confwise
