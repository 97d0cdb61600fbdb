#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "confwise/losses.hpp"
#include "confwise/synth.hpp"
#include "confwise/tensor.hpp"

namespace confwise {

struct ConvLayer {
    size_t in_ch = 0, out_ch = 0, ksize = 0;
    Tensor weights;  // [out,in,k,k] f64
    Tensor bias;     // [out] f64
};

/// Desk-scale per-pixel classifier:
/// conv 3x3 (1->8) / ReLU / conv 3x3 (8->16) / ReLU / conv 1x1 (16->C),
/// zero-padded "same". Weights draw uniform(-limit, limit) with
/// limit = sqrt(6 / (fan_in + fan_out)); biases start at zero.
struct TinyNet {
    ConvLayer conv1, conv2, conv3;
    size_t num_classes = 0;

    static TinyNet init(size_t num_classes, uint64_t seed);
    size_t param_count() const;

    std::vector<Tensor*> params();
    std::vector<const Tensor*> params() const;
    std::vector<std::string> param_names() const;
};

struct ForwardCache {
    Tensor z1, a1, z2, a2, logits;
};

Tensor forward(const TinyNet& net, const Tensor& image);
ForwardCache forward_cached(const TinyNet& net, const Tensor& image);

struct NetGrads {
    Tensor w1, b1, w2, b2, w3, b3;
    std::vector<Tensor*> params();
};

NetGrads backward(const TinyNet& net, const Tensor& image, const ForwardCache& cache,
                  const Tensor& grad_logits);

/// Adam with bias correction; moments live alongside each parameter.
class AdamState {
public:
    explicit AdamState(const TinyNet& net);

    void step(TinyNet& net, NetGrads& grads, double lr);
    size_t steps() const { return step_; }

    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

private:
    std::vector<Tensor> m_, v_;
    size_t step_ = 0;
};

/// lr_t = base_lr * (1 + cos(pi * t / T)) / 2.
double cosine_lr(double base_lr, size_t epoch, size_t total_epochs);

struct TrainOptions {
    size_t epochs = 30;
    double base_lr = 0.0015;
    bool augment_flip = true;
    uint64_t seed = 1;
};

struct TrainLogRow {
    size_t epoch = 0;
    double lr = 0.0;
    double mean_loss = 0.0;
    double val_mean_dsc = 0.0;
    bool has_val = false;
};

struct TrainLog {
    std::vector<TrainLogRow> rows;
};

/// Shuffled full pass per epoch, batch size 1, Adam update per sample.
/// ACW re-clusters on every forward pass. Fully deterministic given the
/// seed. Throws on a non-finite loss.
TrainLog train(TinyNet& net, const std::vector<Sample>& train_set,
               const std::vector<Sample>* val_set, const LossSpec& loss, const TrainOptions& opt);

/// Checkpoints: one SEGT file per parameter in a directory, plus
/// manifest.csv listing "name,file,shape".
void save_checkpoint(const TinyNet& net, const std::string& dir);
TinyNet load_checkpoint(const std::string& dir);

}  // namespace confwise
