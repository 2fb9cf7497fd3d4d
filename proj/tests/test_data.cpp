#include <doctest.h>

#include <zlib.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>

#include "bcnn/data.hpp"
#include "bcnn/errors.hpp"
#include "bcnn/synth.hpp"

using namespace bcnn;
namespace fs = std::filesystem;

namespace {

std::string test_dir() {
    const auto dir = fs::temp_directory_path() / "bcnn_data_tests";
    fs::create_directories(dir);
    return dir.string();
}

void write_raw(const std::string& path, const std::vector<std::uint8_t>& b) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f.write(reinterpret_cast<const char*>(b.data()),
            static_cast<std::streamsize>(b.size()));
}

std::vector<std::uint8_t> read_raw(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(f),
            std::istreambuf_iterator<char>()};
}

void append_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

} // namespace

TEST_SUITE_BEGIN("data");

TEST_CASE("parse_mnist reads synthetic IDX files") {
    const auto dir = test_dir();
    synth::write_digit_set(dir, 64, 16, 42);
    const auto ds = parse_mnist(dir + "/train-images-idx3-ubyte",
                                dir + "/train-labels-idx1-ubyte");
    CHECK(ds.size() == 64);
    CHECK(ds.num_classes == 10);
    CHECK(ds.images->shape == Shape{64, 1, 28, 28});
    for (double p : ds.images->data) {
        CHECK(p >= 0.0);
        CHECK(p <= 1.0);
    }
    for (int label : ds.labels) {
        CHECK(label >= 0);
        CHECK(label < 10);
    }
}

TEST_CASE("parsed pixels round-trip to the source bytes") {
    const auto dir = test_dir();
    synth::write_digit_set(dir, 8, 4, 7);
    const auto ds = parse_mnist(dir + "/train-images-idx3-ubyte",
                                dir + "/train-labels-idx1-ubyte");
    const auto raw = read_raw(dir + "/train-images-idx3-ubyte");
    for (int i = 0; i < 28 * 28; ++i) {
        const auto back = static_cast<std::uint8_t>(
            std::lround(ds.images->data[static_cast<std::size_t>(i)] * 255.0));
        CHECK(back == raw[static_cast<std::size_t>(16 + i)]);
    }
}

TEST_CASE("parse_mnist rejects a wrong magic, naming the observed value") {
    const auto dir = test_dir();
    std::vector<std::uint8_t> bad;
    append_be32(bad, 1234);
    append_be32(bad, 0);
    append_be32(bad, 28);
    append_be32(bad, 28);
    write_raw(dir + "/bad-images", bad);
    std::vector<std::uint8_t> labels;
    append_be32(labels, 2049);
    append_be32(labels, 0);
    write_raw(dir + "/ok-labels", labels);

    CHECK_THROWS_WITH_AS(parse_mnist(dir + "/bad-images", dir + "/ok-labels"),
                         doctest::Contains("1234"), FormatError);
}

TEST_CASE("parse_mnist rejects truncated payloads") {
    const auto dir = test_dir();
    std::vector<std::uint8_t> img;
    append_be32(img, 2051);
    append_be32(img, 2); // two images declared
    append_be32(img, 28);
    append_be32(img, 28);
    img.resize(img.size() + 28 * 28); // only one present
    write_raw(dir + "/short-images", img);
    std::vector<std::uint8_t> labels;
    append_be32(labels, 2049);
    append_be32(labels, 2);
    labels.push_back(1);
    labels.push_back(2);
    write_raw(dir + "/two-labels", labels);

    CHECK_THROWS_AS(parse_mnist(dir + "/short-images", dir + "/two-labels"),
                    LengthError);
}

TEST_CASE("parse_mnist rejects image/label count mismatches") {
    const auto dir = test_dir();
    std::vector<std::uint8_t> img;
    append_be32(img, 2051);
    append_be32(img, 1);
    append_be32(img, 28);
    append_be32(img, 28);
    img.resize(img.size() + 28 * 28);
    write_raw(dir + "/one-image", img);
    std::vector<std::uint8_t> labels;
    append_be32(labels, 2049);
    append_be32(labels, 3);
    labels.insert(labels.end(), {0, 1, 2});
    write_raw(dir + "/three-labels", labels);

    CHECK_THROWS_AS(parse_mnist(dir + "/one-image", dir + "/three-labels"),
                    ConsistencyError);
}

TEST_CASE("zero-image files with valid headers parse to an empty dataset") {
    const auto dir = test_dir();
    std::vector<std::uint8_t> img;
    append_be32(img, 2051);
    append_be32(img, 0);
    append_be32(img, 28);
    append_be32(img, 28);
    write_raw(dir + "/empty-images", img);
    std::vector<std::uint8_t> labels;
    append_be32(labels, 2049);
    append_be32(labels, 0);
    write_raw(dir + "/empty-labels", labels);

    const auto ds = parse_mnist(dir + "/empty-images", dir + "/empty-labels");
    CHECK(ds.size() == 0);
    CHECK(ds.labels.empty());
}

TEST_CASE("gzip-compressed IDX files decompress transparently") {
    const auto dir = test_dir();
    synth::write_digit_set(dir, 12, 4, 9);
    const auto plain = parse_mnist(dir + "/train-images-idx3-ubyte",
                                   dir + "/train-labels-idx1-ubyte");

    for (const std::string name :
         {"train-images-idx3-ubyte", "train-labels-idx1-ubyte"}) {
        const auto raw = read_raw(dir + "/" + name);
        gzFile gz = gzopen((dir + "/" + name + ".gz").c_str(), "wb");
        REQUIRE(gz != nullptr);
        gzwrite(gz, raw.data(), static_cast<unsigned>(raw.size()));
        gzclose(gz);
    }
    const auto gzipped = parse_mnist(dir + "/train-images-idx3-ubyte.gz",
                                     dir + "/train-labels-idx1-ubyte.gz");
    CHECK(gzipped.size() == plain.size());
    CHECK(gzipped.images->data == plain.images->data);
    CHECK(gzipped.labels == plain.labels);
}

TEST_CASE("parse_cifar handles a synthetic record") {
    const auto dir = test_dir();
    std::vector<std::uint8_t> rec(3073, 255);
    rec[0] = 7;
    write_raw(dir + "/one-record.bin", rec);
    const auto ds = parse_cifar({dir + "/one-record.bin"},
                                CifarVariant::cifar10);
    CHECK(ds.size() == 1);
    CHECK(ds.labels[0] == 7);
    CHECK(ds.images->shape == Shape{1, 3, 32, 32});
    for (double p : ds.images->data) CHECK(p == 1.0);
}

TEST_CASE("parse_cifar validates record size and label range") {
    const auto dir = test_dir();
    write_raw(dir + "/ragged.bin", std::vector<std::uint8_t>(3072, 0));
    CHECK_THROWS_AS(parse_cifar({dir + "/ragged.bin"}, CifarVariant::cifar10),
                    FormatError);

    std::vector<std::uint8_t> bad_label(3073, 0);
    bad_label[0] = 11;
    write_raw(dir + "/bad-label.bin", bad_label);
    CHECK_THROWS_AS(
        parse_cifar({dir + "/bad-label.bin"}, CifarVariant::cifar10),
        ConsistencyError);
}

TEST_CASE("parse_cifar reads the fine label for the 100-class variant") {
    const auto dir = test_dir();
    std::vector<std::uint8_t> rec(3074, 0);
    rec[0] = 3;  // coarse, ignored
    rec[1] = 42; // fine
    write_raw(dir + "/c100.bin", rec);
    const auto ds = parse_cifar({dir + "/c100.bin"}, CifarVariant::cifar100);
    CHECK(ds.num_classes == 100);
    CHECK(ds.labels[0] == 42);
}

TEST_CASE("parse_cifar across multiple batch files") {
    const auto dir = test_dir();
    synth::write_shape_set(dir, 50, 10, 3);
    std::vector<std::string> paths;
    for (int b = 1; b <= 5; ++b) {
        paths.push_back(dir + "/data_batch_" + std::to_string(b) + ".bin");
    }
    const auto train = parse_cifar(paths, CifarVariant::cifar10);
    CHECK(train.size() == 50);
    CHECK(train.num_classes == 10);
    const auto val = parse_cifar({dir + "/test_batch.bin"},
                                 CifarVariant::cifar10);
    CHECK(val.size() == 10);
}

TEST_CASE("adapt_input pads 28x28 to 32x32 with a zero border") {
    const auto dir = test_dir();
    synth::write_digit_set(dir, 4, 2, 5);
    const auto ds = parse_mnist(dir + "/train-images-idx3-ubyte",
                                dir + "/train-labels-idx1-ubyte");
    const auto adapted = adapt_input(ds, {1, 32, 32});
    CHECK(adapted.images->shape == Shape{4, 1, 32, 32});
    for (std::int64_t img = 0; img < 4; ++img) {
        for (std::int64_t r = 0; r < 32; ++r) {
            for (std::int64_t c = 0; c < 32; ++c) {
                const double v = adapted.images->at({img, 0, r, c});
                if (r < 2 || r >= 30 || c < 2 || c >= 30) {
                    CHECK(v == 0.0);
                } else {
                    CHECK(v == ds.images->at({img, 0, r - 2, c - 2}));
                }
            }
        }
    }
}

TEST_CASE("adapt_input replicates grayscale into three channels") {
    const auto dir = test_dir();
    synth::write_digit_set(dir, 3, 2, 6);
    const auto ds = parse_mnist(dir + "/train-images-idx3-ubyte",
                                dir + "/train-labels-idx1-ubyte");
    const auto adapted = adapt_input(ds, {3, 32, 32});
    CHECK(adapted.images->shape == Shape{3, 3, 32, 32});
    for (std::int64_t img = 0; img < 3; ++img) {
        for (std::int64_t i = 0; i < 32 * 32; ++i) {
            const double ch0 = adapted.images->data[(img * 3 + 0) * 1024 + i];
            CHECK(adapted.images->data[(img * 3 + 1) * 1024 + i] == ch0);
            CHECK(adapted.images->data[(img * 3 + 2) * 1024 + i] == ch0);
        }
    }
}

TEST_CASE("adapt_input passes 3x32x32 through untouched") {
    Dataset ds;
    ds.images = Tensor::full({2, 3, 32, 32}, 0.25);
    ds.labels = {0, 1};
    ds.num_classes = 10;
    const auto adapted = adapt_input(ds, {3, 32, 32});
    CHECK(adapted.images.get() == ds.images.get());
}

TEST_CASE("adapt_input rejects unsupported targets") {
    Dataset ds;
    ds.images = Tensor::full({1, 3, 32, 32}, 0.5);
    ds.labels = {0};
    CHECK_THROWS_AS(adapt_input(ds, {2, 32, 32}), ContractError);
    CHECK_THROWS_AS(adapt_input(ds, {1, 32, 32}), ContractError);
}

TEST_CASE("add_noise with gamma 0 is the identity") {
    Dataset ds;
    ds.images = Tensor::full({2, 1, 4, 4}, 0.5);
    ds.labels = {1, 2};
    const auto out = add_noise(ds, {0.0, 99});
    CHECK(out.images->data == ds.images->data);
}

TEST_CASE("add_noise matches the requested moments over many pixels") {
    Dataset ds;
    ds.images = Tensor::full({1, 1, 1000, 1000}, 0.5);
    ds.labels = {0};
    const double gamma = 0.1;
    const auto noisy = add_noise(ds, {gamma, 1234});

    double mean = 0.0;
    for (std::size_t i = 0; i < noisy.images->data.size(); ++i) {
        mean += noisy.images->data[i] - 0.5;
    }
    const auto n = static_cast<double>(noisy.images->data.size());
    mean /= n;
    double var = 0.0;
    for (std::size_t i = 0; i < noisy.images->data.size(); ++i) {
        const double d = noisy.images->data[i] - 0.5 - mean;
        var += d * d;
    }
    var /= n - 1;

    CHECK(std::abs(mean) < 3.0 * gamma / std::sqrt(n));
    CHECK(std::sqrt(var) == doctest::Approx(gamma).epsilon(0.01));
}

TEST_CASE("add_noise differs across seeds") {
    Dataset ds;
    ds.images = Tensor::full({1, 1, 8, 8}, 0.5);
    ds.labels = {0};
    const auto a = add_noise(ds, {0.2, 1});
    const auto b = add_noise(ds, {0.2, 2});
    CHECK(a.images->data != b.images->data);
}

TEST_CASE("batches split, shuffle deterministically and index from 1") {
    Dataset ds;
    ds.images = Tensor::zeros({10, 1, 2, 2});
    for (int i = 0; i < 10; ++i) {
        ds.images->data[static_cast<std::size_t>(i) * 4] = i;
        ds.labels.push_back(i % 3);
    }
    ds.num_classes = 3;

    const BatchPlan plan{4, 77};
    CHECK(plan.minibatches(10) == 3);
    CHECK(BatchPlan{128, 0}.minibatches(60000) == 469);

    const auto run1 = batches(ds, plan);
    REQUIRE(run1.size() == 3);
    CHECK(run1[0].images->shape[0] == 4);
    CHECK(run1[1].images->shape[0] == 4);
    CHECK(run1[2].images->shape[0] == 2);
    CHECK(run1[0].index == 1);
    CHECK(run1[2].index == 3);

    const auto run2 = batches(ds, plan);
    for (std::size_t b = 0; b < run1.size(); ++b) {
        CHECK(run1[b].images->data == run2[b].images->data);
        CHECK(run1[b].labels == run2[b].labels);
    }

    const auto other = batches(ds, {4, 78});
    bool any_diff = false;
    for (std::size_t b = 0; b < run1.size(); ++b) {
        if (run1[b].images->data != other[b].images->data) any_diff = true;
    }
    CHECK(any_diff);

    Dataset empty;
    CHECK(batches(empty, plan).empty());
}

TEST_SUITE_END();
