#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>

#include "confwise/partition.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace confwise;

namespace {

/// Builds a 2-class prob map whose class-1 channel takes the given
/// per-pixel values on a 1xN image, labelled entirely class 1.
std::pair<ProbMap, LabelMap> single_region(const std::vector<double>& p1) {
    const size_t n = p1.size();
    Tensor pt({2, 1, n}, DType::f64);
    for (size_t i = 0; i < n; ++i) {
        pt.set(i, 1.0 - p1[i]);
        pt.set(n + i, p1[i]);
    }
    Tensor lt({1, n}, DType::u8);
    for (size_t i = 0; i < n; ++i) lt.set(i, 1.0);
    return {ProbMap(pt), LabelMap(lt, 2)};
}

}  // namespace

TEST_CASE("nearest-rank quantile") {
    SUBCASE("spec example: fraction 0.2 of 0.1..1.0 is the 2nd smallest") {
        std::vector<double> v;
        for (int i = 1; i <= 10; ++i) v.push_back(i / 10.0);
        CHECK(quantile(v, 0.2) == doctest::Approx(0.2).epsilon(1e-15));
    }
    SUBCASE("single element wins at any fraction") {
        CHECK(quantile({0.7}, 0.01) == 0.7);
        CHECK(quantile({0.7}, 0.5) == 0.7);
        CHECK(quantile({0.7}, 0.99) == 0.7);
    }
    SUBCASE("constant input") { CHECK(quantile({0.9, 0.9, 0.9, 0.9}, 0.3) == 0.9); }
    SUBCASE("empty input and bad fraction throw") {
        CHECK_THROWS_AS(quantile({}, 0.5), std::invalid_argument);
        CHECK_THROWS_AS(quantile({0.5}, 0.0), std::invalid_argument);
        CHECK_THROWS_AS(quantile({0.5}, 1.0), std::invalid_argument);
    }
    SUBCASE("matches the counting oracle on random input") {
        Rng rng(11);
        for (int trial = 0; trial < 300; ++trial) {
            const size_t n = 1 + rng.below(40);
            std::vector<double> v(n);
            for (double& x : v) x = rng.uniform01();
            const double f = rng.uniform(0.01, 0.99);
            CHECK(quantile(v, f) == oracle::quantile_by_counting(v, f));
        }
    }
}

TEST_CASE("cluster splits the worked 10-pixel example") {
    std::vector<double> p1 = {0.95, 0.95, 0.95, 0.95, 0.95, 0.95, 0.95, 0.95, 0.6, 0.5};
    auto [probs, labels] = single_region(p1);
    PartitionConfig cfg;
    cfg.q = 0.8;
    const ConfidencePartition part = cluster(probs, labels, cfg);

    CHECK(part.classes[0].empty());
    const ClassPartition& c1 = part.classes[1];
    CHECK(c1.threshold == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(c1.high_idx.size() == 8);
    CHECK(c1.low_idx.size() == 2);
    CHECK(c1.beta == doctest::Approx(0.8));
    CHECK_FALSE(c1.degenerate);
    // ties go low: the 0.6 pixel sits in the low group
    CHECK(std::find(c1.low_idx.begin(), c1.low_idx.end(), size_t{8}) != c1.low_idx.end());
    CHECK(std::find(c1.low_idx.begin(), c1.low_idx.end(), size_t{9}) != c1.low_idx.end());
}

TEST_CASE("all-equal probabilities degenerate to a single group") {
    auto [probs, labels] = single_region(std::vector<double>(12, 0.5));
    const ConfidencePartition part = cluster(probs, labels, PartitionConfig{});
    const ClassPartition& c1 = part.classes[1];
    CHECK(c1.degenerate);
    CHECK(c1.high_idx.empty());  // p > t false for every pixel
    CHECK(c1.low_idx.size() == 12);
}

TEST_CASE("class absent from the labels yields an empty partition") {
    Rng rng(3);
    const ProbMap probs = testutil::random_probs(3, 4, 4, rng);
    Tensor lt({4, 4}, DType::u8);  // all zeros: classes 1 and 2 absent
    const LabelMap labels(lt, 3);
    const ConfidencePartition part = cluster(probs, labels, PartitionConfig{});
    CHECK_FALSE(part.classes[0].empty());
    CHECK(part.classes[1].empty());
    CHECK(part.classes[2].empty());
}

TEST_CASE("partition is exhaustive and disjoint over each region") {
    Rng rng(17);
    for (int trial = 0; trial < 50; ++trial) {
        const size_t H = 3 + rng.below(8), W = 3 + rng.below(8);
        const ProbMap probs = testutil::random_probs(3, H, W, rng);
        const LabelMap labels = testutil::random_labels(3, H, W, rng);
        const ConfidencePartition part = cluster(probs, labels, PartitionConfig{});
        for (size_t c = 0; c < 3; ++c) {
            std::set<size_t> seen;
            for (size_t p : part.classes[c].high_idx) CHECK(seen.insert(p).second);
            for (size_t p : part.classes[c].low_idx) CHECK(seen.insert(p).second);
            std::set<size_t> region;
            for (size_t p = 0; p < H * W; ++p)
                if (labels.at_flat(p) == c) region.insert(p);
            CHECK(seen == region);
            for (size_t p : part.classes[c].high_idx)
                CHECK(probs.at_flat(c, p) > part.classes[c].threshold);
            for (size_t p : part.classes[c].low_idx)
                CHECK(probs.at_flat(c, p) <= part.classes[c].threshold);
        }
    }
}

TEST_CASE("q=0.8 keeps the 8:2 ratio within nearest-rank granularity") {
    Rng rng(23);
    for (int trial = 0; trial < 50; ++trial) {
        const size_t n = 5 + rng.below(200);
        std::vector<double> p1(n);
        for (double& v : p1) v = rng.uniform(0.05, 0.95);
        std::sort(p1.begin(), p1.end());
        for (size_t i = 1; i < n; ++i)
            if (p1[i] <= p1[i - 1]) p1[i] = p1[i - 1] + 1e-9;  // force all-distinct
        auto [probs, labels] = single_region(p1);
        PartitionConfig cfg;
        cfg.q = 0.8;
        const ConfidencePartition part = cluster(probs, labels, cfg);
        const ClassPartition& c1 = part.classes[1];
        const double ratio = static_cast<double>(c1.high_idx.size()) / static_cast<double>(n);
        const double slack = 1.0 / static_cast<double>(n);
        CHECK(ratio >= 0.8 - slack - 1e-12);
        CHECK(ratio <= 0.8 + slack + 1e-12);
    }
}

TEST_CASE("raising q only grows the high group (and the literal mode only shrinks it)") {
    Rng rng(31);
    for (int trial = 0; trial < 30; ++trial) {
        const size_t n = 4 + rng.below(60);
        std::vector<double> p1(n);
        for (double& v : p1) v = rng.uniform(0.05, 0.95);
        auto [probs, labels] = single_region(p1);

        auto high_set = [&](double q, bool literal) {
            PartitionConfig cfg;
            cfg.q = q;
            cfg.literal_percentile = literal;
            const ConfidencePartition part = cluster(probs, labels, cfg);
            const ClassPartition& c1 = part.classes[1];
            return std::set<size_t>(c1.high_idx.begin(), c1.high_idx.end());
        };

        const double q_lo = rng.uniform(0.1, 0.5), q_hi = rng.uniform(0.55, 0.9);
        // default semantics: q is the high-group fraction
        const auto lo = high_set(q_lo, false), hi = high_set(q_hi, false);
        CHECK(std::includes(hi.begin(), hi.end(), lo.begin(), lo.end()));
        // literal percentile: raising q raises the threshold, never low->high
        const auto lo_lit = high_set(q_lo, true), hi_lit = high_set(q_hi, true);
        CHECK(std::includes(lo_lit.begin(), lo_lit.end(), hi_lit.begin(), hi_lit.end()));
    }
}

TEST_CASE("threshold and membership are permutation invariant") {
    Rng rng(37);
    std::vector<double> p1(40);
    for (double& v : p1) v = rng.uniform(0.05, 0.95);
    auto [probs, labels] = single_region(p1);
    const ConfidencePartition base_part = cluster(probs, labels, PartitionConfig{});
    const ClassPartition& base = base_part.classes[1];

    std::vector<size_t> perm(p1.size());
    for (size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    rng.shuffle(perm);
    std::vector<double> shuffled(p1.size());
    for (size_t i = 0; i < perm.size(); ++i) shuffled[i] = p1[perm[i]];
    auto [probs2, labels2] = single_region(shuffled);
    const ConfidencePartition other_part = cluster(probs2, labels2, PartitionConfig{});
    const ClassPartition& other = other_part.classes[1];

    CHECK(base.threshold == other.threshold);
    auto values_of = [&](const std::vector<double>& src, const std::vector<size_t>& idx) {
        std::multiset<double> out;
        for (size_t p : idx) out.insert(src[p]);
        return out;
    };
    CHECK(values_of(p1, base.high_idx) == values_of(shuffled, other.high_idx));
    CHECK(values_of(p1, base.low_idx) == values_of(shuffled, other.low_idx));
}

TEST_CASE("global scope applies one pooled threshold to every class") {
    Rng rng(41);
    const ProbMap probs = testutil::random_probs(3, 6, 6, rng);
    const LabelMap labels = testutil::random_labels(3, 6, 6, rng, 4);
    PartitionConfig cfg;
    cfg.scope = PartitionConfig::Scope::global;
    const ConfidencePartition part = cluster(probs, labels, cfg);

    std::vector<double> pooled;
    for (size_t p = 0; p < labels.pixels(); ++p)
        pooled.push_back(probs.at_flat(labels.at_flat(p), p));
    const double expect = oracle::quantile_by_counting(pooled, 1.0 - cfg.q);
    for (size_t c = 0; c < 3; ++c) {
        if (part.classes[c].empty()) continue;
        CHECK(part.classes[c].threshold == expect);
    }
}

TEST_CASE("shape mismatch is rejected") {
    Rng rng(5);
    const ProbMap probs = testutil::random_probs(3, 4, 4, rng);
    const LabelMap labels = testutil::random_labels(3, 4, 5, rng);
    CHECK_THROWS_AS(cluster(probs, labels, PartitionConfig{}), std::invalid_argument);
}
