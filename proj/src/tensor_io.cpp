#include "confwise/tensor_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace confwise {

namespace {

constexpr char kMagic[4] = {'S', 'E', 'G', 'T'};
constexpr uint16_t kVersion = 1;
constexpr size_t kMaxNdim = 8;

void put_u16(std::string& out, uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint64_t load_le(const unsigned char* p, size_t n) {
    uint64_t v = 0;
    for (size_t i = 0; i < n; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
    return v;
}

void store_le(unsigned char* p, uint64_t v, size_t n) {
    for (size_t i = 0; i < n; ++i) p[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
}

}  // namespace

void write_tensor(const std::string& path, const Tensor& t) {
    std::string header;
    header.append(kMagic, 4);
    put_u16(header, kVersion);
    header.push_back(static_cast<char>(t.dtype()));
    header.push_back(static_cast<char>(t.ndim()));
    for (size_t d : t.shape()) put_u32(header, static_cast<uint32_t>(d));

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw SegtError(SegtError::Kind::io, "cannot open for writing: " + path);
    f.write(header.data(), static_cast<std::streamsize>(header.size()));

    // Payload element-by-element in little-endian order.
    const size_t esz = dtype_size(t.dtype());
    std::vector<unsigned char> payload(t.byte_size());
    const unsigned char* src = t.bytes();
    for (size_t i = 0; i < t.size(); ++i) {
        uint64_t bits = 0;
        std::memcpy(&bits, src + i * esz, esz);  // host is assumed little-endian for memcpy
        if constexpr (std::endian::native == std::endian::big) {
            // re-load from host order
            bits = 0;
            for (size_t b = 0; b < esz; ++b)
                bits |= static_cast<uint64_t>(src[i * esz + (esz - 1 - b)]) << (8 * b);
        }
        store_le(payload.data() + i * esz, bits, esz);
    }
    f.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size()));
    if (!f) throw SegtError(SegtError::Kind::io, "write failed: " + path);
}

Tensor read_tensor(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw SegtError(SegtError::Kind::io, "cannot open for reading: " + path);
    std::string blob((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    const auto* p = reinterpret_cast<const unsigned char*>(blob.data());
    const size_t n = blob.size();

    if (n < 8) throw SegtError(SegtError::Kind::truncated, "file shorter than header: " + path);
    if (std::memcmp(p, kMagic, 4) != 0)
        throw SegtError(SegtError::Kind::bad_magic, "not a SEGT file: " + path);
    if (load_le(p + 4, 2) != kVersion)
        throw SegtError(SegtError::Kind::bad_version, "unsupported SEGT version in " + path);
    const uint8_t dcode = p[6];
    if (dcode > 2) throw SegtError(SegtError::Kind::bad_dtype, "unknown dtype code in " + path);
    const DType dtype = static_cast<DType>(dcode);
    const size_t ndim = p[7];
    if (ndim == 0 || ndim > kMaxNdim)
        throw SegtError(SegtError::Kind::bad_shape, "bad dimension count in " + path);
    if (n < 8 + 4 * ndim)
        throw SegtError(SegtError::Kind::truncated, "header cut short: " + path);

    std::vector<size_t> shape(ndim);
    size_t count = 1;
    for (size_t i = 0; i < ndim; ++i) {
        shape[i] = load_le(p + 8 + 4 * i, 4);
        if (shape[i] == 0) throw SegtError(SegtError::Kind::bad_shape, "zero dimension in " + path);
        count *= shape[i];
    }
    const size_t esz = dtype_size(dtype);
    const size_t off = 8 + 4 * ndim;
    if (n < off + count * esz)
        throw SegtError(SegtError::Kind::truncated, "payload cut short: " + path);
    if (n > off + count * esz)
        throw SegtError(SegtError::Kind::trailing_data, "trailing bytes after payload: " + path);

    Tensor t(shape, dtype);
    unsigned char* dst = t.bytes();
    for (size_t i = 0; i < count; ++i) {
        uint64_t bits = load_le(p + off + i * esz, esz);
        if constexpr (std::endian::native == std::endian::big) {
            for (size_t b = 0; b < esz; ++b)
                dst[i * esz + b] = static_cast<unsigned char>((bits >> (8 * (esz - 1 - b))) & 0xff);
        } else {
            std::memcpy(dst + i * esz, &bits, esz);
        }
    }
    return t;
}

Tensor import_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw SegtError(SegtError::Kind::io, "cannot open for reading: " + path);
    struct Cell {
        size_t h, w, c;
        double v;
    };
    std::vector<Cell> cells;
    size_t maxh = 0, maxw = 0, maxc = 0;
    std::string line;
    size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        if (lineno == 1 && line.find_first_not_of("hwc,value ") == std::string::npos) continue;
        std::istringstream is(line);
        Cell cell{};
        char c1, c2, c3;
        if (!(is >> cell.h >> c1 >> cell.w >> c2 >> cell.c >> c3 >> cell.v) || c1 != ',' ||
            c2 != ',' || c3 != ',')
            throw SegtError(SegtError::Kind::io,
                            path + ": malformed CSV row " + std::to_string(lineno));
        maxh = std::max(maxh, cell.h);
        maxw = std::max(maxw, cell.w);
        maxc = std::max(maxc, cell.c);
        cells.push_back(cell);
    }
    if (cells.empty()) throw SegtError(SegtError::Kind::io, path + ": no data rows");
    Tensor t({maxc + 1, maxh + 1, maxw + 1}, DType::f64);
    double* d = t.ptr<double>();
    for (const Cell& cell : cells)
        d[flat3(cell.c, cell.h, cell.w, maxh + 1, maxw + 1)] = cell.v;
    return t;
}

}  // namespace confwise
