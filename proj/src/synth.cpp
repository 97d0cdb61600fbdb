#include "confwise/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "confwise/tensor_io.hpp"

namespace confwise {

namespace {

constexpr double kBaseIntensity[4] = {0.1, 0.55, 0.45, 0.7};  // bg, capsule, cortex, nucleus
constexpr double kArtifactIntensity = 0.9;
constexpr size_t kArtifactWidth = 3;
constexpr int kMaxGeometryTries = 64;

struct Ellipse {
    double cx, cy, cos_t, sin_t;

    bool inside(double x, double y, double a, double b) const {
        const double dx = x - cx, dy = y - cy;
        const double u = dx * cos_t + dy * sin_t;
        const double v = -dx * sin_t + dy * cos_t;
        return (u / a) * (u / a) + (v / b) * (v / b) <= 1.0;
    }
};

/// Symmetric-reflection index for blur padding (edge pixel repeated).
size_t reflect(long i, long n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
    return static_cast<size_t>(i);
}

void gaussian_blur_inplace(std::vector<double>& img, size_t H, size_t W, double sigma) {
    if (sigma <= 0.0) return;
    const long r = static_cast<long>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(2 * r + 1);
    double sum = 0.0;
    for (long i = -r; i <= r; ++i) {
        kernel[i + r] = std::exp(-static_cast<double>(i * i) / (2.0 * sigma * sigma));
        sum += kernel[i + r];
    }
    for (double& k : kernel) k /= sum;

    std::vector<double> tmp(H * W);
    for (size_t h = 0; h < H; ++h)
        for (size_t w = 0; w < W; ++w) {
            double acc = 0.0;
            for (long i = -r; i <= r; ++i)
                acc += kernel[i + r] * img[h * W + reflect(static_cast<long>(w) + i, W)];
            tmp[h * W + w] = acc;
        }
    for (size_t h = 0; h < H; ++h)
        for (size_t w = 0; w < W; ++w) {
            double acc = 0.0;
            for (long i = -r; i <= r; ++i)
                acc += kernel[i + r] * tmp[reflect(static_cast<long>(h) + i, H) * W + w];
            img[h * W + w] = acc;
        }
}

Sample make_sample(const SynthConfig& cfg, Rng& rng) {
    const size_t H = cfg.height, W = cfg.width;
    const double m = static_cast<double>(std::min(H, W));
    const double t = cfg.ring_thickness;

    Tensor label_t({H, W}, DType::u8);
    uint8_t* lab = label_t.ptr<uint8_t>();

    bool ok = false;
    for (int attempt = 0; attempt < kMaxGeometryTries && !ok; ++attempt) {
        const double cx = 0.5 * static_cast<double>(W) + m * rng.uniform(-0.03, 0.03);
        const double cy = 0.5 * static_cast<double>(H) + m * rng.uniform(-0.03, 0.03);
        // The axis sum drives the ring area (~ pi * t * (a+b-t)); the
        // absolute floor keeps the interior large enough to dominate the
        // ring even on 32x32 images.
        const double axis_sum =
            rng.uniform(std::max(24.5, 0.40 * m), std::max(25.6, 0.48 * m));
        const double aspect = rng.uniform(1.30, 1.42);
        const double a = axis_sum * aspect / (1.0 + aspect);
        const double b = axis_sum - a;
        const double theta = rng.uniform(0.0, M_PI);
        const double nucleus_frac = rng.uniform(0.70, 0.735);
        if (a - t <= 1.0 || b - t <= 1.0) continue;

        const Ellipse e{cx, cy, std::cos(theta), std::sin(theta)};
        const double an = nucleus_frac * (a - t), bn = nucleus_frac * (b - t);
        size_t counts[4] = {0, 0, 0, 0};
        for (size_t h = 0; h < H; ++h) {
            for (size_t w = 0; w < W; ++w) {
                const double x = static_cast<double>(w), y = static_cast<double>(h);
                uint8_t cls = 0;
                if (e.inside(x, y, an, bn))
                    cls = 3;
                else if (e.inside(x, y, a - t, b - t))
                    cls = 2;
                else if (e.inside(x, y, a, b))
                    cls = 1;
                lab[h * W + w] = cls;
                counts[cls] += 1;
            }
        }
        ok = counts[0] > 0 && counts[1] > 0 && counts[2] > 0 && counts[3] > 0 &&
             counts[1] < counts[2] && counts[1] < counts[3];
    }
    if (!ok)
        throw std::invalid_argument(
            "synth: geometry does not fit (ring thickness too large for the image?)");

    std::vector<double> img(H * W);
    for (size_t i = 0; i < H * W; ++i) img[i] = kBaseIntensity[lab[i]];
    gaussian_blur_inplace(img, H, W, cfg.boundary_blur_sigma);
    if (cfg.noise_sigma > 0.0)
        for (size_t i = 0; i < H * W; ++i) img[i] += rng.normal(0.0, cfg.noise_sigma);
    for (double& v : img) v = std::clamp(v, 0.0, 1.0);
    if (cfg.artifact_prob > 0.0 && rng.bernoulli(cfg.artifact_prob)) {
        const size_t x0 = static_cast<size_t>(rng.below(W - kArtifactWidth + 1));
        for (size_t h = 0; h < H; ++h)
            for (size_t dw = 0; dw < kArtifactWidth; ++dw)
                img[h * W + x0 + dw] = kArtifactIntensity;
    }

    Tensor image({1, H, W}, DType::f32);
    float* id = image.ptr<float>();
    for (size_t i = 0; i < H * W; ++i) id[i] = static_cast<float>(img[i]);
    return {std::move(image), LabelMap(std::move(label_t), SynthConfig::num_classes)};
}

}  // namespace

std::vector<Sample> generate(const SynthConfig& cfg, size_t n) {
    if (n < 1) throw std::invalid_argument("synth: n must be >= 1");
    if (std::min(cfg.height, cfg.width) < 32)
        throw std::invalid_argument("synth: minimum image dimension is 32");
    if (cfg.ring_thickness < 1.0)
        throw std::invalid_argument("synth: ring thickness must be >= 1");
    std::vector<Sample> out;
    out.reserve(n);
    for (size_t k = 0; k < n; ++k) {
        Rng rng(split_seed(cfg.seed, k));
        out.push_back(make_sample(cfg, rng));
    }
    return out;
}

Sample flip_horizontal(const Sample& s) {
    const size_t H = s.labels.height(), W = s.labels.width();
    Tensor image(s.image.shape(), DType::f32);
    Tensor labels({H, W}, DType::u8);
    const float* si = s.image.ptr<float>();
    float* di = image.ptr<float>();
    uint8_t* dl = labels.ptr<uint8_t>();
    for (size_t h = 0; h < H; ++h) {
        for (size_t w = 0; w < W; ++w) {
            di[h * W + w] = si[h * W + (W - 1 - w)];
            dl[h * W + w] = s.labels.at(h, W - 1 - w);
        }
    }
    return {std::move(image), LabelMap(std::move(labels), s.labels.num_classes())};
}

Sample random_flip(const Sample& s, Rng& rng) {
    if (rng.bernoulli(0.5)) return flip_horizontal(s);
    return {s.image, s.labels};
}

void write_dataset(const std::string& dir, const SynthConfig& cfg, size_t n) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::vector<Sample> samples = generate(cfg, n);
    std::ofstream manifest(fs::path(dir) / "manifest.csv", std::ios::trunc);
    if (!manifest) throw std::runtime_error("cannot write manifest in " + dir);
    manifest << "index,image,label,seed\n";
    char img_name[32], lbl_name[32];
    for (size_t k = 0; k < n; ++k) {
        std::snprintf(img_name, sizeof(img_name), "img_%05zu.segt", k);
        std::snprintf(lbl_name, sizeof(lbl_name), "lbl_%05zu.segt", k);
        write_tensor((fs::path(dir) / img_name).string(), samples[k].image);
        write_tensor((fs::path(dir) / lbl_name).string(), samples[k].labels.tensor());
        manifest << k << ',' << img_name << ',' << lbl_name << ',' << split_seed(cfg.seed, k)
                 << '\n';
    }
}

std::vector<Sample> read_dataset(const std::string& dir, size_t num_classes) {
    namespace fs = std::filesystem;
    std::vector<Sample> out;
    char img_name[32], lbl_name[32];
    for (size_t k = 0;; ++k) {
        std::snprintf(img_name, sizeof(img_name), "img_%05zu.segt", k);
        std::snprintf(lbl_name, sizeof(lbl_name), "lbl_%05zu.segt", k);
        const fs::path img_path = fs::path(dir) / img_name;
        const fs::path lbl_path = fs::path(dir) / lbl_name;
        if (!fs::exists(img_path)) break;
        if (!fs::exists(lbl_path))
            throw std::runtime_error("dataset: missing label for index " + std::to_string(k));
        Tensor image = read_tensor(img_path.string());
        Tensor labels = read_tensor(lbl_path.string());
        out.push_back({std::move(image), LabelMap(std::move(labels), num_classes)});
    }
    if (out.empty()) throw std::runtime_error("dataset: no img_00000.segt under " + dir);
    return out;
}

}  // namespace confwise
