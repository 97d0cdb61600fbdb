#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "confwise/losses.hpp"
#include "confwise/model.hpp"
#include "confwise/morphology.hpp"
#include "confwise/synth.hpp"

namespace confwise {

/// One experiment: a loss, its hyperparameters, the optimizer schedule
/// and the dataset to train on. Serialized in full into every results
/// file.
struct ExperimentConfig {
    std::string loss = "acw";
    double alpha = 0.4;
    double q = 0.8;
    size_t bins = 10;
    size_t radius = 2;
    StructShape shape = StructShape::square;
    double combo_weight = 0.5;  // weight of the acw term in "acw+X"
    bool include_background = true;
    size_t epochs = 30;
    double base_lr = 0.0015;
    bool augment_flip = true;
    std::vector<uint64_t> seeds = {1, 2, 3, 4, 5};
    SynthConfig dataset;
    size_t dataset_n = 200;

    LossSpec loss_spec() const;
    std::string serialize() const;  // single-line key=value form
};

/// Parses the documented `key = value` config grammar with [experiment]
/// and [dataset] sections. `overrides` ("key=value" strings, section
/// prefix optional) win over file values; pass an empty path to start
/// from defaults.
ExperimentConfig load_config(const std::string& path,
                             const std::vector<std::string>& overrides = {});

/// A matrix file is a config file plus a [sweep] section whose keys take
/// comma-separated value lists; the cross product of the sweep axes
/// defines the configs.
std::vector<ExperimentConfig> expand_matrix(const std::string& path,
                                            const std::vector<std::string>& overrides = {});

/// Short identifier for a swept config, e.g. "alpha=0.4".
std::string config_id(const ExperimentConfig& cfg, const std::vector<std::string>& swept_keys);

struct ResultRow {
    std::string config_id;
    std::string seed;  // number, or "mean"/"stdev" for aggregates
    std::vector<double> per_class_dsc;
    double mean_dsc = 0.0;
    double mean_iou = 0.0;
    double mean_hd95 = 0.0;
    double ece = 0.0;
    double bece = 0.0;
    bool failed = false;
    std::string error;
};

struct ResultsTable {
    std::vector<ResultRow> rows;  // per-cell rows then aggregates

    std::string to_csv(const std::string& config_line) const;
    std::string render_text() const;
};

/// Trains on the config's dataset (80/20 split by sample index) with the
/// given seed and evaluates the held-out split: per-class DSC and mean
/// DSC/IoU/HD95 averaged over test images, ECE/BECE pooled over test
/// pixels.
ResultRow run_cell(const ExperimentConfig& cfg, uint64_t seed, const std::string& cell_id,
                   TinyNet* trained_out = nullptr, TrainLog* log_out = nullptr);

/// Runs every (config, seed) cell, up to `jobs` in parallel (each cell
/// is single-threaded), and appends mean/stdev aggregate rows per
/// config. Cell failures are recorded in their row; other cells proceed.
ResultsTable run_matrix(const std::vector<ExperimentConfig>& configs,
                        const std::vector<std::string>& swept_keys, size_t jobs = 1);

/// Default parallelism: CONFWISE_JOBS env var, else 1.
size_t default_jobs();

}  // namespace confwise
