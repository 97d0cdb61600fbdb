#pragma once

#include <stdexcept>
#include <string>

#include "confwise/tensor.hpp"

namespace confwise {

/// Errors raised by the SEGT reader/writer, tagged so callers can tell
/// the failure modes apart.
class SegtError : public std::runtime_error {
public:
    enum class Kind { io, bad_magic, bad_version, bad_dtype, bad_shape, truncated, trailing_data };

    SegtError(Kind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

/// SEGT container, little-endian throughout:
///
///   offset  size  field
///   0       4     magic "SEGT"
///   4       2     format version (u16, currently 1)
///   6       1     dtype code (0=f32, 1=f64, 2=u8)
///   7       1     ndim (u8)
///   8       4*n   dimension sizes (u32 each)
///   ...           payload, raw row-major element bytes
void write_tensor(const std::string& path, const Tensor& t);

/// Inverse of write_tensor. Rejects unknown magic, version or dtype code,
/// zero dimensions, short files and trailing bytes.
Tensor read_tensor(const std::string& path);

/// Interoperability import: CSV rows "h,w,c,value" (optional header line).
/// Produces an f64 [C,H,W] tensor sized from the largest indices seen;
/// unlisted cells stay 0.
Tensor import_csv(const std::string& path);

}  // namespace confwise
