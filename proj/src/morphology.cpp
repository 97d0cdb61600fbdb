#include "confwise/morphology.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace confwise {

namespace {

void require_binary(const BinaryMask& mask) {
    const uint8_t* d = mask.t.ptr<uint8_t>();
    for (size_t i = 0; i < mask.t.size(); ++i)
        if (d[i] > 1) throw std::invalid_argument("mask is not binary");
}

/// 1D "any 1 within +-radius" pass along a row-major axis, via a running
/// window count.
void dilate_line(const uint8_t* in, uint8_t* out, size_t n, size_t stride, size_t radius) {
    long count = 0;
    const long r = static_cast<long>(radius);
    const long len = static_cast<long>(n);
    for (long i = 0; i < std::min(r, len); ++i) count += in[i * stride];
    for (long i = 0; i < len; ++i) {
        if (i + r < len) count += in[(i + r) * stride];
        out[i * stride] = count > 0 ? 1 : 0;
        if (i - r >= 0) count -= in[(i - r) * stride];
    }
}

BinaryMask dilate_cross_step(const BinaryMask& mask) {
    const size_t H = mask.height(), W = mask.width();
    BinaryMask out = BinaryMask::zeros(H, W);
    const uint8_t* in = mask.t.ptr<uint8_t>();
    uint8_t* od = out.t.ptr<uint8_t>();
    for (size_t h = 0; h < H; ++h) {
        for (size_t w = 0; w < W; ++w) {
            uint8_t v = in[h * W + w];
            if (!v && h > 0) v = in[(h - 1) * W + w];
            if (!v && h + 1 < H) v = in[(h + 1) * W + w];
            if (!v && w > 0) v = in[h * W + w - 1];
            if (!v && w + 1 < W) v = in[h * W + w + 1];
            od[h * W + w] = v ? 1 : 0;
        }
    }
    return out;
}

constexpr double kFar = 1e20;

/// Felzenszwalb-Huttenlocher 1D squared-distance transform.
void envelope_1d(const double* f, double* out, size_t n, std::vector<int>& v,
                 std::vector<double>& z) {
    v.assign(n, 0);
    z.assign(n + 1, 0.0);
    int k = 0;
    z[0] = -kFar;
    z[1] = kFar;
    for (size_t q = 1; q < n; ++q) {
        const double fq = f[q] + static_cast<double>(q) * static_cast<double>(q);
        double s;
        while (true) {
            const double vk = v[k];
            s = (fq - (f[v[k]] + vk * vk)) / (2.0 * static_cast<double>(q) - 2.0 * vk);
            if (s <= z[k] && k > 0) {
                --k;
            } else {
                break;
            }
        }
        ++k;
        v[k] = static_cast<int>(q);
        z[k] = s;
        z[k + 1] = kFar;
    }
    k = 0;
    for (size_t q = 0; q < n; ++q) {
        while (z[k + 1] < static_cast<double>(q)) ++k;
        const double d = static_cast<double>(q) - v[k];
        out[q] = d * d + f[v[k]];
    }
}

}  // namespace

BinaryMask class_mask(const LabelMap& labels, uint8_t cls) {
    BinaryMask out = BinaryMask::zeros(labels.height(), labels.width());
    uint8_t* d = out.t.ptr<uint8_t>();
    for (size_t i = 0; i < labels.pixels(); ++i) d[i] = labels.at_flat(i) == cls ? 1 : 0;
    return out;
}

BinaryMask dilate(const BinaryMask& mask, size_t radius, StructShape shape) {
    if (radius < 1) throw std::invalid_argument("dilate: radius must be >= 1");
    require_binary(mask);
    const size_t H = mask.height(), W = mask.width();

    if (shape == StructShape::square) {
        // Separable: rows then columns.
        BinaryMask tmp = BinaryMask::zeros(H, W);
        BinaryMask out = BinaryMask::zeros(H, W);
        const uint8_t* in = mask.t.ptr<uint8_t>();
        uint8_t* td = tmp.t.ptr<uint8_t>();
        uint8_t* od = out.t.ptr<uint8_t>();
        for (size_t h = 0; h < H; ++h) dilate_line(in + h * W, td + h * W, W, 1, radius);
        for (size_t w = 0; w < W; ++w) dilate_line(td + w, od + w, H, W, radius);
        return out;
    }

    // cross: the radius-r diamond is r chained unit steps.
    BinaryMask out = dilate_cross_step(mask);
    for (size_t i = 1; i < radius; ++i) out = dilate_cross_step(out);
    return out;
}

BinaryMask boundary_mask(const LabelMap& labels, size_t radius, StructShape shape) {
    if (radius < 1) throw std::invalid_argument("boundary_mask: radius must be >= 1");
    const size_t H = labels.height(), W = labels.width();
    BinaryMask out = BinaryMask::zeros(H, W);
    uint8_t* od = out.t.ptr<uint8_t>();
    for (size_t c = 0; c < labels.num_classes(); ++c) {
        BinaryMask yc = class_mask(labels, static_cast<uint8_t>(c));
        BinaryMask comp = BinaryMask::zeros(H, W);
        uint8_t* cd = comp.t.ptr<uint8_t>();
        const uint8_t* yd = yc.t.ptr<uint8_t>();
        bool any_comp = false;
        for (size_t i = 0; i < H * W; ++i) {
            cd[i] = 1 - yd[i];
            any_comp |= cd[i] != 0;
        }
        if (!any_comp) continue;  // class covers the image: no boundary
        BinaryMask grown = dilate(comp, radius, shape);
        const uint8_t* gd = grown.t.ptr<uint8_t>();
        for (size_t i = 0; i < H * W; ++i) od[i] |= yd[i] & gd[i];
    }
    return out;
}

BinaryMask mask_boundary_pixels(const BinaryMask& mask) {
    require_binary(mask);
    const size_t H = mask.height(), W = mask.width();
    BinaryMask out = BinaryMask::zeros(H, W);
    const uint8_t* in = mask.t.ptr<uint8_t>();
    uint8_t* od = out.t.ptr<uint8_t>();
    for (size_t h = 0; h < H; ++h) {
        for (size_t w = 0; w < W; ++w) {
            if (!in[h * W + w]) continue;
            const bool edge = h == 0 || h + 1 == H || w == 0 || w + 1 == W ||
                              !in[(h - 1) * W + w] || !in[(h + 1) * W + w] ||
                              !in[h * W + w - 1] || !in[h * W + w + 1];
            od[h * W + w] = edge ? 1 : 0;
        }
    }
    return out;
}

std::vector<double> distance_to_nearest(const BinaryMask& features) {
    const size_t H = features.height(), W = features.width();
    const uint8_t* fd = features.t.ptr<uint8_t>();

    // Column pass: nearest feature row per column (two linear scans),
    // stored squared.
    std::vector<double> colsq(H * W, kFar);
    for (size_t w = 0; w < W; ++w) {
        double dist = kFar;
        for (size_t h = 0; h < H; ++h) {
            dist = fd[h * W + w] ? 0.0 : (dist >= kFar ? kFar : dist + 1.0);
            colsq[h * W + w] = dist;
        }
        dist = colsq[(H - 1) * W + w];
        for (size_t h = H; h-- > 0;) {
            dist = fd[h * W + w] ? 0.0 : std::min(colsq[h * W + w], dist + 1.0);
            colsq[h * W + w] = dist >= kFar ? kFar : dist * dist;
        }
    }

    // Row pass: lower envelope over squared column distances.
    std::vector<double> out(H * W);
    std::vector<int> v;
    std::vector<double> z;
    std::vector<double> row(W);
    for (size_t h = 0; h < H; ++h) {
        envelope_1d(colsq.data() + h * W, row.data(), W, v, z);
        for (size_t w = 0; w < W; ++w) {
            const double sq = row[w];
            out[h * W + w] = sq >= kFar ? std::numeric_limits<double>::infinity() : std::sqrt(sq);
        }
    }
    return out;
}

Hd95Result hd95(const BinaryMask& pred, const BinaryMask& gt) {
    require_binary(pred);
    require_binary(gt);
    if (pred.height() != gt.height() || pred.width() != gt.width())
        throw std::invalid_argument("hd95: mask shape mismatch");
    const size_t H = pred.height(), W = pred.width();

    auto any = [](const BinaryMask& m) {
        const uint8_t* d = m.t.ptr<uint8_t>();
        for (size_t i = 0; i < m.t.size(); ++i)
            if (d[i]) return true;
        return false;
    };
    if (!any(pred) || !any(gt)) {
        const double diag = std::sqrt(static_cast<double>(H * H + W * W));
        return {diag, false};
    }

    BinaryMask pb = mask_boundary_pixels(pred);
    BinaryMask gb = mask_boundary_pixels(gt);
    std::vector<double> to_gb = distance_to_nearest(gb);
    std::vector<double> to_pb = distance_to_nearest(pb);

    std::vector<double> dists;
    const uint8_t* pbd = pb.t.ptr<uint8_t>();
    const uint8_t* gbd = gb.t.ptr<uint8_t>();
    for (size_t i = 0; i < H * W; ++i) {
        if (pbd[i]) dists.push_back(to_gb[i]);
        if (gbd[i]) dists.push_back(to_pb[i]);
    }
    std::sort(dists.begin(), dists.end());
    size_t rank = static_cast<size_t>(std::ceil(0.95 * static_cast<double>(dists.size())));
    if (rank < 1) rank = 1;
    if (rank > dists.size()) rank = dists.size();
    return {dists[rank - 1], true};
}

}  // namespace confwise
