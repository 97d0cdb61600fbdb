#include "confwise/tensor.hpp"

#include <cmath>

namespace confwise {

Tensor::Tensor(std::vector<size_t> shape, DType dtype)
    : shape_(std::move(shape)), dtype_(dtype) {
    if (shape_.empty()) throw std::invalid_argument("tensor shape must have >= 1 dimension");
    count_ = 1;
    for (size_t d : shape_) {
        if (d == 0) throw std::invalid_argument("tensor dimensions must be >= 1");
        count_ *= d;
    }
    data_.assign(count_ * dtype_size(dtype_), 0);
}

Tensor Tensor::zeros(std::vector<size_t> shape, DType dtype) {
    return Tensor(std::move(shape), dtype);
}

double Tensor::get(size_t flat) const {
    switch (dtype_) {
        case DType::f32: return reinterpret_cast<const float*>(data_.data())[flat];
        case DType::f64: return reinterpret_cast<const double*>(data_.data())[flat];
        case DType::u8: return data_[flat];
    }
    return 0;
}

void Tensor::set(size_t flat, double v) {
    switch (dtype_) {
        case DType::f32:
            reinterpret_cast<float*>(data_.data())[flat] = static_cast<float>(v);
            break;
        case DType::f64:
            reinterpret_cast<double*>(data_.data())[flat] = v;
            break;
        case DType::u8:
            data_[flat] = static_cast<unsigned char>(v);
            break;
    }
}

Tensor Tensor::to_f64() const {
    if (dtype_ == DType::f64) return *this;
    Tensor out(shape_, DType::f64);
    double* d = out.ptr<double>();
    for (size_t i = 0; i < count_; ++i) d[i] = get(i);
    return out;
}

Tensor Tensor::to_f32() const {
    if (dtype_ == DType::f32) return *this;
    Tensor out(shape_, DType::f32);
    float* d = out.ptr<float>();
    for (size_t i = 0; i < count_; ++i) d[i] = static_cast<float>(get(i));
    return out;
}

ProbMap::ProbMap(Tensor t) {
    if (t.ndim() != 3) throw std::invalid_argument("probability map must be [C,H,W]");
    if (t.dtype() == DType::u8) throw std::invalid_argument("probability map must be f32 or f64");
    t_ = t.to_f64();
    c_ = t_.dim(0);
    h_ = t_.dim(1);
    w_ = t_.dim(2);
    data_ = t_.ptr<double>();
    for (size_t p = 0; p < h_ * w_; ++p) {
        double sum = 0.0;
        for (size_t c = 0; c < c_; ++c) {
            double v = data_[c * h_ * w_ + p];
            if (!(v >= 0.0 && v <= 1.0))
                throw std::invalid_argument("probability outside [0,1]");
            sum += v;
        }
        if (std::fabs(sum - 1.0) > 1e-5)
            throw std::invalid_argument("pixel probabilities do not sum to 1");
    }
}

ProbMap ProbMap::trusted(Tensor f64_chw) {
    if (f64_chw.ndim() != 3 || f64_chw.dtype() != DType::f64)
        throw std::invalid_argument("trusted probability map must be f64 [C,H,W]");
    ProbMap p;
    p.t_ = std::move(f64_chw);
    p.c_ = p.t_.dim(0);
    p.h_ = p.t_.dim(1);
    p.w_ = p.t_.dim(2);
    p.data_ = p.t_.ptr<double>();
    return p;
}

LabelMap::LabelMap(Tensor t, size_t num_classes) : t_(std::move(t)), classes_(num_classes) {
    if (t_.ndim() != 2 || t_.dtype() != DType::u8)
        throw std::invalid_argument("label map must be [H,W] u8");
    if (classes_ == 0) throw std::invalid_argument("num_classes must be >= 1");
    h_ = t_.dim(0);
    w_ = t_.dim(1);
    data_ = t_.ptr<uint8_t>();
    for (size_t i = 0; i < h_ * w_; ++i)
        if (data_[i] >= classes_) throw std::invalid_argument("label value >= num_classes");
}

Tensor one_hot(const LabelMap& labels) {
    const size_t C = labels.num_classes(), H = labels.height(), W = labels.width();
    Tensor out({C, H, W}, DType::f64);
    double* d = out.ptr<double>();
    for (size_t p = 0; p < H * W; ++p) d[labels.at_flat(p) * H * W + p] = 1.0;
    return out;
}

}  // namespace confwise
