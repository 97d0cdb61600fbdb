#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "confwise/rng.hpp"
#include "confwise/tensor.hpp"

namespace confwise {

/// Lens-like nested-ellipse generator. Class layout is fixed:
/// 0 background, 1 capsule ring, 2 cortex, 3 nucleus.
struct SynthConfig {
    size_t height = 64;
    size_t width = 64;
    static constexpr size_t num_classes = 4;
    double ring_thickness = 2.0;
    double boundary_blur_sigma = 1.5;
    double noise_sigma = 0.05;
    double artifact_prob = 0.2;
    uint64_t seed = 1234;
};

struct Sample {
    Tensor image;  // [1,H,W] f32, intensities in [0,1]
    LabelMap labels;
};

/// Generates n samples. Sample k depends only on (cfg, k) — the rng
/// stream is split per sample index — so the same config and seed
/// reproduce the dataset bit-exactly, at any n. Throws when the
/// requested geometry cannot produce all four classes with the ring as
/// the smallest foreground class.
std::vector<Sample> generate(const SynthConfig& cfg, size_t n);

/// Mirrors image and labels left-right.
Sample flip_horizontal(const Sample& s);

/// Applies flip_horizontal with probability 0.5 drawn from `rng`.
Sample random_flip(const Sample& s, Rng& rng);

/// Writes img_%05d.segt / lbl_%05d.segt plus manifest.csv with rows
/// "index,image,label,seed".
void write_dataset(const std::string& dir, const SynthConfig& cfg, size_t n);

/// Loads a dataset directory written by write_dataset (or anything with
/// the same naming scheme). num_classes applies to the label maps.
std::vector<Sample> read_dataset(const std::string& dir, size_t num_classes = 4);

}  // namespace confwise
