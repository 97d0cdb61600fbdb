#include "confwise/model.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "confwise/metrics.hpp"
#include "confwise/rng.hpp"
#include "confwise/tensor_io.hpp"

namespace confwise {

namespace {

ConvLayer make_layer(size_t in_ch, size_t out_ch, size_t ksize, Rng& rng) {
    ConvLayer l;
    l.in_ch = in_ch;
    l.out_ch = out_ch;
    l.ksize = ksize;
    l.weights = Tensor({out_ch, in_ch, ksize, ksize}, DType::f64);
    l.bias = Tensor({out_ch}, DType::f64);
    const double fan_in = static_cast<double>(in_ch * ksize * ksize);
    const double fan_out = static_cast<double>(out_ch * ksize * ksize);
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    double* w = l.weights.ptr<double>();
    for (size_t i = 0; i < l.weights.size(); ++i) w[i] = rng.uniform(-limit, limit);
    return l;
}

/// Same-padded convolution; inner loops run contiguously over the width.
void conv_forward(const ConvLayer& l, const double* x, size_t H, size_t W, double* y) {
    const size_t K = l.ksize;
    const long pad = static_cast<long>(K / 2);
    const size_t plane = H * W;
    const double* wts = l.weights.ptr<double>();
    const double* bias = l.bias.ptr<double>();

    for (size_t f = 0; f < l.out_ch; ++f) {
        double* yf = y + f * plane;
        const double bf = bias[f];
        for (size_t i = 0; i < plane; ++i) yf[i] = bf;
        for (size_t c = 0; c < l.in_ch; ++c) {
            const double* xc = x + c * plane;
            for (size_t ki = 0; ki < K; ++ki) {
                for (size_t kj = 0; kj < K; ++kj) {
                    const double wv = wts[((f * l.in_ch + c) * K + ki) * K + kj];
                    const long dh = static_cast<long>(ki) - pad;
                    const long dw = static_cast<long>(kj) - pad;
                    const size_t h0 = dh < 0 ? static_cast<size_t>(-dh) : 0;
                    const size_t h1 = dh > 0 ? H - static_cast<size_t>(dh) : H;
                    const size_t w0 = dw < 0 ? static_cast<size_t>(-dw) : 0;
                    const size_t w1 = dw > 0 ? W - static_cast<size_t>(dw) : W;
                    for (size_t h = h0; h < h1; ++h) {
                        double* yrow = yf + h * W;
                        const double* xrow = xc + (h + dh) * W + dw;
                        for (size_t w = w0; w < w1; ++w) yrow[w] += wv * xrow[w];
                    }
                }
            }
        }
    }
}

/// Gradients w.r.t. weights/bias and (optionally) the layer input.
void conv_backward(const ConvLayer& l, const double* x, const double* dy, size_t H, size_t W,
                   double* dw, double* db, double* dx) {
    const size_t K = l.ksize;
    const long pad = static_cast<long>(K / 2);
    const size_t plane = H * W;

    for (size_t f = 0; f < l.out_ch; ++f) {
        const double* dyf = dy + f * plane;
        double acc = 0.0;
        for (size_t i = 0; i < plane; ++i) acc += dyf[i];
        db[f] += acc;
        for (size_t c = 0; c < l.in_ch; ++c) {
            const double* xc = x + c * plane;
            double* dxc = dx ? dx + c * plane : nullptr;
            for (size_t ki = 0; ki < K; ++ki) {
                for (size_t kj = 0; kj < K; ++kj) {
                    const long dh = static_cast<long>(ki) - pad;
                    const long dw_off = static_cast<long>(kj) - pad;
                    const size_t h0 = dh < 0 ? static_cast<size_t>(-dh) : 0;
                    const size_t h1 = dh > 0 ? H - static_cast<size_t>(dh) : H;
                    const size_t w0 = dw_off < 0 ? static_cast<size_t>(-dw_off) : 0;
                    const size_t w1 = dw_off > 0 ? W - static_cast<size_t>(dw_off) : W;
                    double wacc = 0.0;
                    const double wv = l.weights.ptr<double>()[((f * l.in_ch + c) * K + ki) * K + kj];
                    for (size_t h = h0; h < h1; ++h) {
                        const double* dyrow = dyf + h * W;
                        const double* xrow = xc + (h + dh) * W + dw_off;
                        double* dxrow = dxc ? dxc + (h + dh) * W + dw_off : nullptr;
                        if (dxrow) {
                            for (size_t w = w0; w < w1; ++w) {
                                wacc += dyrow[w] * xrow[w];
                                dxrow[w] += wv * dyrow[w];
                            }
                        } else {
                            for (size_t w = w0; w < w1; ++w) wacc += dyrow[w] * xrow[w];
                        }
                    }
                    dw[((f * l.in_ch + c) * K + ki) * K + kj] += wacc;
                }
            }
        }
    }
}

void relu(const double* z, double* a, size_t n) {
    for (size_t i = 0; i < n; ++i) a[i] = z[i] > 0.0 ? z[i] : 0.0;
}

void relu_backward(const double* z, const double* da, double* dz, size_t n) {
    for (size_t i = 0; i < n; ++i) dz[i] = z[i] > 0.0 ? da[i] : 0.0;
}

}  // namespace

TinyNet TinyNet::init(size_t num_classes, uint64_t seed) {
    if (num_classes < 2) throw std::invalid_argument("tinynet: need >= 2 classes");
    Rng rng(split_seed(seed, 0));
    TinyNet net;
    net.num_classes = num_classes;
    net.conv1 = make_layer(1, 8, 3, rng);
    net.conv2 = make_layer(8, 16, 3, rng);
    net.conv3 = make_layer(16, num_classes, 1, rng);
    return net;
}

size_t TinyNet::param_count() const {
    size_t n = 0;
    for (const Tensor* t : params()) n += t->size();
    return n;
}

std::vector<Tensor*> TinyNet::params() {
    return {&conv1.weights, &conv1.bias, &conv2.weights,
            &conv2.bias,    &conv3.weights, &conv3.bias};
}

std::vector<const Tensor*> TinyNet::params() const {
    return {&conv1.weights, &conv1.bias, &conv2.weights,
            &conv2.bias,    &conv3.weights, &conv3.bias};
}

std::vector<std::string> TinyNet::param_names() const {
    return {"conv1.weight", "conv1.bias", "conv2.weight",
            "conv2.bias",   "conv3.weight", "conv3.bias"};
}

ForwardCache forward_cached(const TinyNet& net, const Tensor& image) {
    if (image.ndim() != 3 || image.dim(0) != 1)
        throw std::invalid_argument("tinynet: image must be [1,H,W]");
    Tensor x = image.to_f64();
    const size_t H = x.dim(1), W = x.dim(2);

    ForwardCache fc;
    fc.z1 = Tensor({net.conv1.out_ch, H, W}, DType::f64);
    conv_forward(net.conv1, x.ptr<double>(), H, W, fc.z1.ptr<double>());
    fc.a1 = Tensor({net.conv1.out_ch, H, W}, DType::f64);
    relu(fc.z1.ptr<double>(), fc.a1.ptr<double>(), fc.z1.size());

    fc.z2 = Tensor({net.conv2.out_ch, H, W}, DType::f64);
    conv_forward(net.conv2, fc.a1.ptr<double>(), H, W, fc.z2.ptr<double>());
    fc.a2 = Tensor({net.conv2.out_ch, H, W}, DType::f64);
    relu(fc.z2.ptr<double>(), fc.a2.ptr<double>(), fc.z2.size());

    fc.logits = Tensor({net.num_classes, H, W}, DType::f64);
    conv_forward(net.conv3, fc.a2.ptr<double>(), H, W, fc.logits.ptr<double>());
    return fc;
}

Tensor forward(const TinyNet& net, const Tensor& image) {
    return forward_cached(net, image).logits;
}

std::vector<Tensor*> NetGrads::params() { return {&w1, &b1, &w2, &b2, &w3, &b3}; }

NetGrads backward(const TinyNet& net, const Tensor& image, const ForwardCache& cache,
                  const Tensor& grad_logits) {
    if (!grad_logits.same_shape(cache.logits))
        throw std::invalid_argument("tinynet: gradient shape mismatch");
    Tensor x = image.to_f64();
    const size_t H = x.dim(1), W = x.dim(2);

    NetGrads g;
    g.w1 = Tensor(net.conv1.weights.shape(), DType::f64);
    g.b1 = Tensor(net.conv1.bias.shape(), DType::f64);
    g.w2 = Tensor(net.conv2.weights.shape(), DType::f64);
    g.b2 = Tensor(net.conv2.bias.shape(), DType::f64);
    g.w3 = Tensor(net.conv3.weights.shape(), DType::f64);
    g.b3 = Tensor(net.conv3.bias.shape(), DType::f64);

    Tensor da2(cache.a2.shape(), DType::f64);
    conv_backward(net.conv3, cache.a2.ptr<double>(), grad_logits.to_f64().ptr<double>(), H, W,
                  g.w3.ptr<double>(), g.b3.ptr<double>(), da2.ptr<double>());

    Tensor dz2(cache.z2.shape(), DType::f64);
    relu_backward(cache.z2.ptr<double>(), da2.ptr<double>(), dz2.ptr<double>(), dz2.size());

    Tensor da1(cache.a1.shape(), DType::f64);
    conv_backward(net.conv2, cache.a1.ptr<double>(), dz2.ptr<double>(), H, W, g.w2.ptr<double>(),
                  g.b2.ptr<double>(), da1.ptr<double>());

    Tensor dz1(cache.z1.shape(), DType::f64);
    relu_backward(cache.z1.ptr<double>(), da1.ptr<double>(), dz1.ptr<double>(), dz1.size());

    conv_backward(net.conv1, x.ptr<double>(), dz1.ptr<double>(), H, W, g.w1.ptr<double>(),
                  g.b1.ptr<double>(), nullptr);
    return g;
}

AdamState::AdamState(const TinyNet& net) {
    for (const Tensor* p : net.params()) {
        m_.emplace_back(p->shape(), DType::f64);
        v_.emplace_back(p->shape(), DType::f64);
    }
}

void AdamState::step(TinyNet& net, NetGrads& grads, double lr) {
    ++step_;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_));
    std::vector<Tensor*> ps = net.params();
    std::vector<Tensor*> gs = grads.params();
    for (size_t t = 0; t < ps.size(); ++t) {
        double* p = ps[t]->ptr<double>();
        const double* g = gs[t]->ptr<double>();
        double* m = m_[t].ptr<double>();
        double* v = v_[t].ptr<double>();
        const size_t n = ps[t]->size();
        for (size_t i = 0; i < n; ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

double cosine_lr(double base_lr, size_t epoch, size_t total_epochs) {
    if (total_epochs == 0) return base_lr;
    const double t = static_cast<double>(epoch) / static_cast<double>(total_epochs);
    return base_lr * (1.0 + std::cos(M_PI * t)) / 2.0;
}

TrainLog train(TinyNet& net, const std::vector<Sample>& train_set,
               const std::vector<Sample>* val_set, const LossSpec& loss,
               const TrainOptions& opt) {
    if (train_set.empty()) throw std::invalid_argument("train: empty dataset");
    AdamState adam(net);
    Rng shuffle_rng(split_seed(opt.seed, 1));
    Rng flip_rng(split_seed(opt.seed, 2));

    TrainLog log;
    std::vector<size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), size_t{0});

    for (size_t epoch = 0; epoch < opt.epochs; ++epoch) {
        const double lr = cosine_lr(opt.base_lr, epoch, opt.epochs);
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        for (size_t idx : order) {
            const Sample* s = &train_set[idx];
            std::optional<Sample> flipped;
            if (opt.augment_flip) {
                flipped = random_flip(*s, flip_rng);
                s = &*flipped;
            }
            ForwardCache fc = forward_cached(net, s->image);
            LossResult lr_res;
            try {
                ProbMap probs = softmax_logits(fc.logits);
                lr_res = evaluate_loss(loss, probs, s->labels);
            } catch (const std::invalid_argument& e) {
                // shapes were validated on the first pass; NaN logits mean
                // the optimization blew up
                throw std::runtime_error("train: loss diverged at epoch " +
                                         std::to_string(epoch) + ", sample " +
                                         std::to_string(idx) + " (" + e.what() + ")");
            }
            if (!std::isfinite(lr_res.value))
                throw std::runtime_error(
                    "train: loss diverged (non-finite value at epoch " +
                    std::to_string(epoch) + ", sample " + std::to_string(idx) + ")");
            loss_sum += lr_res.value;
            NetGrads grads = backward(net, s->image, fc, lr_res.grad_logits);
            adam.step(net, grads, lr);
        }

        TrainLogRow row;
        row.epoch = epoch;
        row.lr = lr;
        row.mean_loss = loss_sum / static_cast<double>(train_set.size());
        if (val_set && !val_set->empty()) {
            double dsc_sum = 0.0;
            for (const Sample& v : *val_set) {
                ProbMap probs = softmax_logits(forward(net, v.image));
                Tensor pred({v.labels.height(), v.labels.width()}, DType::u8);
                uint8_t* pd = pred.ptr<uint8_t>();
                for (size_t p = 0; p < v.labels.pixels(); ++p) {
                    size_t best = 0;
                    double bv = probs.at_flat(0, p);
                    for (size_t c = 1; c < probs.num_classes(); ++c)
                        if (probs.at_flat(c, p) > bv) {
                            bv = probs.at_flat(c, p);
                            best = c;
                        }
                    pd[p] = static_cast<uint8_t>(best);
                }
                // DSC only per epoch; HD95 is left to the final evaluation.
                std::vector<size_t> tp(net.num_classes, 0), fps(net.num_classes, 0),
                    fns(net.num_classes, 0);
                for (size_t p = 0; p < v.labels.pixels(); ++p) {
                    const uint8_t pr = pd[p], gt = v.labels.at_flat(p);
                    if (pr == gt)
                        tp[pr] += 1;
                    else {
                        fps[pr] += 1;
                        fns[gt] += 1;
                    }
                }
                double dsc = 0.0;
                for (size_t c = 0; c < net.num_classes; ++c) {
                    const size_t den = 2 * tp[c] + fps[c] + fns[c];
                    dsc += den == 0 ? 1.0 : 2.0 * static_cast<double>(tp[c]) / den;
                }
                dsc_sum += dsc / static_cast<double>(net.num_classes);
            }
            row.val_mean_dsc = dsc_sum / static_cast<double>(val_set->size());
            row.has_val = true;
        }
        log.rows.push_back(row);
    }
    return log;
}

void save_checkpoint(const TinyNet& net, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::ofstream manifest(fs::path(dir) / "manifest.csv", std::ios::trunc);
    if (!manifest) throw std::runtime_error("cannot write checkpoint manifest in " + dir);
    manifest << "name,file,shape\n";
    const std::vector<std::string> names = net.param_names();
    const std::vector<const Tensor*> params = net.params();
    for (size_t i = 0; i < params.size(); ++i) {
        std::string file = names[i];
        std::replace(file.begin(), file.end(), '.', '_');
        file += ".segt";
        write_tensor((fs::path(dir) / file).string(), *params[i]);
        manifest << names[i] << ',' << file << ',';
        const auto& shape = params[i]->shape();
        for (size_t d = 0; d < shape.size(); ++d)
            manifest << (d ? "x" : "") << shape[d];
        manifest << '\n';
    }
}

TinyNet load_checkpoint(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream manifest(fs::path(dir) / "manifest.csv");
    if (!manifest) throw std::runtime_error("missing checkpoint manifest in " + dir);
    std::string line;
    std::getline(manifest, line);  // header
    std::vector<std::pair<std::string, Tensor>> entries;
    while (std::getline(manifest, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string name, file;
        std::getline(ss, name, ',');
        std::getline(ss, file, ',');
        entries.emplace_back(name, read_tensor((fs::path(dir) / file).string()));
    }
    TinyNet net;
    auto find = [&](const std::string& name) -> Tensor {
        for (auto& [n, t] : entries)
            if (n == name) return t;
        throw std::runtime_error("checkpoint missing parameter: " + name);
    };
    net.conv1 = {1, 8, 3, find("conv1.weight"), find("conv1.bias")};
    net.conv2 = {8, 16, 3, find("conv2.weight"), find("conv2.bias")};
    net.conv3 = {16, find("conv3.weight").dim(0), 1, find("conv3.weight"), find("conv3.bias")};
    net.num_classes = net.conv3.out_ch;
    return net;
}

}  // namespace confwise
