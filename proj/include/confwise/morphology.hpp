#pragma once

#include <vector>

#include "confwise/tensor.hpp"

namespace confwise {

/// [H,W] u8 mask, values exactly 0 or 1.
struct BinaryMask {
    Tensor t;

    size_t height() const { return t.dim(0); }
    size_t width() const { return t.dim(1); }
    uint8_t at(size_t h, size_t w) const { return t.ptr<uint8_t>()[h * width() + w]; }

    static BinaryMask zeros(size_t h, size_t w) { return {Tensor({h, w}, DType::u8)}; }
};

enum class StructShape { square, cross };

/// Binary mask for one class of a label map.
BinaryMask class_mask(const LabelMap& labels, uint8_t cls);

/// Morphological dilation. square: Chebyshev distance <= radius;
/// cross: Manhattan distance <= radius. Pixels beyond the image border
/// count as 0. Throws on non-binary input or radius < 1.
BinaryMask dilate(const BinaryMask& mask, size_t radius, StructShape shape = StructShape::square);

/// Boundary band of a label map: the union over classes c of
/// Y_c AND dilate(NOT Y_c), i.e. an inner band of thickness <= radius
/// inside each class region. Constant label maps give an empty mask.
BinaryMask boundary_mask(const LabelMap& labels, size_t radius,
                         StructShape shape = StructShape::square);

/// Mask pixels that have a 4-neighbor outside the mask (out-of-image
/// counts as outside).
BinaryMask mask_boundary_pixels(const BinaryMask& mask);

/// Exact Euclidean distance from every pixel to the nearest 1-pixel of
/// `features` (row-major H*W result). Squared distances are computed
/// exactly with the two-pass lower-envelope transform, then rooted.
std::vector<double> distance_to_nearest(const BinaryMask& features);

struct Hd95Result {
    double value = 0.0;
    /// False when either input mask was empty; value then holds the
    /// sentinel (the image diagonal by default).
    bool defined = true;
};

/// 95th nearest-rank percentile of the pooled symmetric boundary-to-
/// boundary distances between the two masks.
Hd95Result hd95(const BinaryMask& pred, const BinaryMask& gt);

}  // namespace confwise
