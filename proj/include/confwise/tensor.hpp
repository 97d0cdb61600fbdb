#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace confwise {

enum class DType : uint8_t { f32 = 0, f64 = 1, u8 = 2 };

inline size_t dtype_size(DType d) {
    switch (d) {
        case DType::f32: return 4;
        case DType::f64: return 8;
        case DType::u8: return 1;
    }
    return 0;
}

inline const char* dtype_name(DType d) {
    switch (d) {
        case DType::f32: return "f32";
        case DType::f64: return "f64";
        case DType::u8: return "u8";
    }
    return "?";
}

/// Dense row-major array with explicit shape. Immutable sharing is the
/// intended usage: fill it once, then treat it as read-only.
class Tensor {
public:
    Tensor() = default;
    Tensor(std::vector<size_t> shape, DType dtype);

    static Tensor zeros(std::vector<size_t> shape, DType dtype = DType::f64);

    const std::vector<size_t>& shape() const { return shape_; }
    DType dtype() const { return dtype_; }
    size_t ndim() const { return shape_.size(); }
    size_t dim(size_t i) const { return shape_.at(i); }
    size_t size() const { return count_; }
    size_t byte_size() const { return data_.size(); }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    unsigned char* bytes() { return data_.data(); }
    const unsigned char* bytes() const { return data_.data(); }

    template <typename T>
    T* ptr() {
        check_type<T>();
        return reinterpret_cast<T*>(data_.data());
    }

    template <typename T>
    const T* ptr() const {
        check_type<T>();
        return reinterpret_cast<const T*>(data_.data());
    }

    template <typename T>
    std::span<T> values() { return {ptr<T>(), count_}; }

    template <typename T>
    std::span<const T> values() const { return {ptr<T>(), count_}; }

    /// dtype-dispatched scalar read/write, widening to double.
    double get(size_t flat) const;
    void set(size_t flat, double v);

    Tensor to_f64() const;
    Tensor to_f32() const;

    /// Bit-exact equality: shape, dtype and raw payload.
    bool operator==(const Tensor& other) const {
        return shape_ == other.shape_ && dtype_ == other.dtype_ && data_ == other.data_;
    }
    bool operator!=(const Tensor& other) const { return !(*this == other); }

private:
    template <typename T>
    void check_type() const {
        bool ok = (std::is_same_v<T, float> && dtype_ == DType::f32) ||
                  (std::is_same_v<T, double> && dtype_ == DType::f64) ||
                  (std::is_same_v<T, uint8_t> && dtype_ == DType::u8);
        if (!ok) throw std::logic_error(std::string("tensor dtype is ") + dtype_name(dtype_));
    }

    std::vector<size_t> shape_;
    DType dtype_ = DType::f64;
    size_t count_ = 0;
    std::vector<unsigned char> data_;
};

inline size_t flat2(size_t h, size_t w, size_t W) { return h * W + w; }
inline size_t flat3(size_t c, size_t h, size_t w, size_t H, size_t W) {
    return (c * H + h) * W + w;
}

/// Per-pixel class probabilities, shape [C,H,W]. f32 input is widened;
/// all internal math runs in f64. Construction checks that values lie in
/// [0,1] and that each pixel's channel sum is 1 within 1e-5.
class ProbMap {
public:
    explicit ProbMap(Tensor t);

    ProbMap(const ProbMap& o) : t_(o.t_), c_(o.c_), h_(o.h_), w_(o.w_) { rebind(); }
    ProbMap(ProbMap&& o) noexcept : t_(std::move(o.t_)), c_(o.c_), h_(o.h_), w_(o.w_) {
        rebind();
    }
    ProbMap& operator=(const ProbMap& o) {
        t_ = o.t_;
        c_ = o.c_;
        h_ = o.h_;
        w_ = o.w_;
        rebind();
        return *this;
    }
    ProbMap& operator=(ProbMap&& o) noexcept {
        t_ = std::move(o.t_);
        c_ = o.c_;
        h_ = o.h_;
        w_ = o.w_;
        rebind();
        return *this;
    }

    /// Skips validation; for producers that guarantee the invariants
    /// (e.g. softmax).
    static ProbMap trusted(Tensor f64_chw);

    size_t num_classes() const { return c_; }
    size_t height() const { return h_; }
    size_t width() const { return w_; }
    size_t pixels() const { return h_ * w_; }

    double at(size_t c, size_t h, size_t w) const {
        return data_[flat3(c, h, w, h_, w_)];
    }
    double at_flat(size_t c, size_t pix) const { return data_[c * h_ * w_ + pix]; }

    const double* data() const { return data_; }
    const Tensor& tensor() const { return t_; }

private:
    ProbMap() = default;
    void rebind() { data_ = t_.ptr<double>(); }

    Tensor t_;
    const double* data_ = nullptr;
    size_t c_ = 0, h_ = 0, w_ = 0;
};

/// Ground-truth class indices, shape [H,W], u8, values in [0, num_classes).
class LabelMap {
public:
    LabelMap(Tensor t, size_t num_classes);

    LabelMap(const LabelMap& o) : t_(o.t_), h_(o.h_), w_(o.w_), classes_(o.classes_) {
        rebind();
    }
    LabelMap(LabelMap&& o) noexcept
        : t_(std::move(o.t_)), h_(o.h_), w_(o.w_), classes_(o.classes_) {
        rebind();
    }
    LabelMap& operator=(const LabelMap& o) {
        t_ = o.t_;
        h_ = o.h_;
        w_ = o.w_;
        classes_ = o.classes_;
        rebind();
        return *this;
    }
    LabelMap& operator=(LabelMap&& o) noexcept {
        t_ = std::move(o.t_);
        h_ = o.h_;
        w_ = o.w_;
        classes_ = o.classes_;
        rebind();
        return *this;
    }

    size_t height() const { return h_; }
    size_t width() const { return w_; }
    size_t pixels() const { return h_ * w_; }
    size_t num_classes() const { return classes_; }

    uint8_t at(size_t h, size_t w) const { return data_[h * w_ + w]; }
    uint8_t at_flat(size_t pix) const { return data_[pix]; }

    const Tensor& tensor() const { return t_; }

private:
    void rebind() { data_ = t_.ptr<uint8_t>(); }

    Tensor t_;
    const uint8_t* data_ = nullptr;
    size_t h_ = 0, w_ = 0;
    size_t classes_ = 0;
};

/// Expands labels to a one-hot [C,H,W] f64 tensor.
Tensor one_hot(const LabelMap& labels);

}  // namespace confwise
