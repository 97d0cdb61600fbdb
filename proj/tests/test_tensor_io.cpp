#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "confwise/rng.hpp"
#include "confwise/tensor.hpp"
#include "confwise/tensor_io.hpp"

using namespace confwise;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const char* name) {
    fs::path dir = fs::temp_directory_path() / "confwise_io_tests";
    fs::create_directories(dir);
    return dir / name;
}

Tensor random_tensor(Rng& rng, std::vector<size_t> shape, DType dtype) {
    Tensor t(std::move(shape), dtype);
    for (size_t i = 0; i < t.size(); ++i) {
        switch (dtype) {
            case DType::u8: t.set(i, static_cast<double>(rng.below(256))); break;
            default: t.set(i, rng.uniform(-100.0, 100.0)); break;
        }
    }
    return t;
}

}  // namespace

TEST_CASE("round-trip is bit-exact for all dtypes and shapes") {
    Rng rng(42);
    const DType dtypes[] = {DType::f32, DType::f64, DType::u8};
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<size_t> shape;
        const size_t ndim = 1 + rng.below(4);
        for (size_t i = 0; i < ndim; ++i) shape.push_back(1 + rng.below(6));
        const Tensor t = random_tensor(rng, shape, dtypes[trial % 3]);
        const auto path = temp_file("roundtrip.segt");
        write_tensor(path.string(), t);
        CHECK(read_tensor(path.string()) == t);
    }
}

TEST_CASE("header layout gives a 16-byte file for a single f32 zero") {
    Tensor t({1}, DType::f32);
    const auto path = temp_file("single.segt");
    write_tensor(path.string(), t);
    CHECK(fs::file_size(path) == 16);  // 4 magic + 2 version + 1 dtype + 1 ndim + 4 dim + 4 data
}

TEST_CASE("u8 payload bytes appear verbatim after the header") {
    Tensor t({2, 2}, DType::u8);
    t.set(0, 0);
    t.set(1, 1);
    t.set(2, 1);
    t.set(3, 0);
    const auto path = temp_file("payload.segt");
    write_tensor(path.string(), t);
    std::ifstream f(path, std::ios::binary);
    std::string blob((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    REQUIRE(blob.size() == 20);  // 16-byte header (2 dims) + 4 payload bytes
    CHECK(blob.substr(16) == std::string("\x00\x01\x01\x00", 4));
}

TEST_CASE("reader rejects bad magic, bad version, bad dtype, truncation, trailing bytes") {
    Tensor t({2, 3}, DType::f32);
    const auto path = temp_file("corrupt.segt");
    write_tensor(path.string(), t);
    std::ifstream in(path, std::ios::binary);
    std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();

    auto write_blob = [&](std::string b) {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(b.data(), static_cast<std::streamsize>(b.size()));
    };
    auto kind_of = [&]() {
        try {
            read_tensor(path.string());
        } catch (const SegtError& e) {
            return e.kind();
        }
        return SegtError::Kind::io;
    };

    std::string bad = blob;
    bad.replace(0, 4, "XXXX");
    write_blob(bad);
    CHECK(kind_of() == SegtError::Kind::bad_magic);

    bad = blob;
    bad[4] = 9;
    write_blob(bad);
    CHECK(kind_of() == SegtError::Kind::bad_version);

    bad = blob;
    bad[6] = 7;
    write_blob(bad);
    CHECK(kind_of() == SegtError::Kind::bad_dtype);

    write_blob(blob.substr(0, blob.size() - 3));
    CHECK(kind_of() == SegtError::Kind::truncated);

    write_blob(blob + "zz");
    CHECK(kind_of() == SegtError::Kind::trailing_data);

    CHECK_THROWS_AS(read_tensor("/nonexistent/nowhere.segt"), SegtError);
}

TEST_CASE("one_hot matches the definition and argmax inverts it") {
    SUBCASE("hand case") {
        Tensor lt({1, 2}, DType::u8);
        lt.set(0, 0);
        lt.set(1, 1);
        const Tensor oh = one_hot(LabelMap(lt, 2));
        REQUIRE(oh.shape() == std::vector<size_t>{2, 1, 2});
        CHECK(oh.get(0) == 1.0);  // c0 @ (0,0)
        CHECK(oh.get(1) == 0.0);  // c0 @ (0,1)
        CHECK(oh.get(2) == 0.0);  // c1 @ (0,0)
        CHECK(oh.get(3) == 1.0);  // c1 @ (0,1)
    }
    SUBCASE("all-zero labels put everything in channel 0") {
        Tensor lt({3, 3}, DType::u8);
        const Tensor oh = one_hot(LabelMap(lt, 3));
        for (size_t p = 0; p < 9; ++p) {
            CHECK(oh.get(p) == 1.0);
            CHECK(oh.get(9 + p) == 0.0);
            CHECK(oh.get(18 + p) == 0.0);
        }
    }
    SUBCASE("channel sum is 1 everywhere and argmax recovers the labels") {
        Rng rng(7);
        Tensor lt({5, 4}, DType::u8);
        for (size_t i = 0; i < 20; ++i) lt.set(i, static_cast<double>(rng.below(3)));
        const LabelMap labels(lt, 3);
        const Tensor oh = one_hot(labels);
        for (size_t p = 0; p < 20; ++p) {
            double sum = 0.0;
            size_t argmax = 0;
            for (size_t c = 0; c < 3; ++c) {
                sum += oh.get(c * 20 + p);
                if (oh.get(c * 20 + p) > oh.get(argmax * 20 + p)) argmax = c;
            }
            CHECK(sum == 1.0);
            CHECK(argmax == labels.at_flat(p));
        }
    }
}

TEST_CASE("CSV import builds the tensor from h,w,c,value rows") {
    const auto path = temp_file("import.csv");
    {
        std::ofstream f(path);
        f << "h,w,c,value\n0,0,0,0.5\n0,1,0,0.25\n1,0,1,1.0\n";
    }
    const Tensor t = import_csv(path.string());
    REQUIRE(t.shape() == std::vector<size_t>{2, 2, 2});
    CHECK(t.get(flat3(0, 0, 0, 2, 2)) == 0.5);
    CHECK(t.get(flat3(0, 0, 1, 2, 2)) == 0.25);
    CHECK(t.get(flat3(1, 1, 0, 2, 2)) == 1.0);
    CHECK(t.get(flat3(1, 0, 0, 2, 2)) == 0.0);

    {
        std::ofstream f(path);
        f << "0,0,not-a-number\n";
    }
    CHECK_THROWS_AS(import_csv(path.string()), SegtError);
}

TEST_CASE("probability and label invariants are enforced") {
    Tensor bad({2, 1, 1}, DType::f64);
    bad.set(0, 0.9);
    bad.set(1, 0.3);  // sums to 1.2
    CHECK_THROWS_AS(ProbMap{bad}, std::invalid_argument);

    Tensor lt({1, 2}, DType::u8);
    lt.set(1, 5.0);
    CHECK_THROWS_AS(LabelMap(lt, 3), std::invalid_argument);

    CHECK_THROWS_AS(Tensor({0, 2}, DType::f32), std::invalid_argument);
}
