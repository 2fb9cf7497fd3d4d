#include "bcnn/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <numeric>

#include "bcnn/errors.hpp"

namespace bcnn {

namespace {

std::vector<unsigned char> gunzip(const std::vector<unsigned char>& in,
                                  const std::string& path) {
    z_stream zs{};
    if (inflateInit2(&zs, 15 + 16) != Z_OK) {
        throw Error("zlib: inflateInit2 failed");
    }
    std::vector<unsigned char> out(std::max<std::size_t>(in.size() * 4, 4096));
    zs.next_in = const_cast<Bytef*>(in.data());
    zs.avail_in = static_cast<uInt>(in.size());
    std::size_t written = 0;
    for (;;) {
        if (written == out.size()) out.resize(out.size() * 2);
        zs.next_out = out.data() + written;
        zs.avail_out = static_cast<uInt>(out.size() - written);
        const int ret = inflate(&zs, Z_NO_FLUSH);
        written = out.size() - zs.avail_out;
        if (ret == Z_STREAM_END) break;
        if (ret != Z_OK) {
            inflateEnd(&zs);
            throw FormatError(path + ": corrupt gzip stream");
        }
        if (zs.avail_in == 0 && zs.avail_out != 0) {
            inflateEnd(&zs);
            throw LengthError(path + ": truncated gzip stream");
        }
    }
    inflateEnd(&zs);
    out.resize(written);
    return out;
}

std::uint32_t read_be32(const unsigned char* p) {
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
           (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

constexpr std::uint32_t kMnistImageMagic = 2051; // 0x00000803
constexpr std::uint32_t kMnistLabelMagic = 2049; // 0x00000801

} // namespace

std::vector<unsigned char> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open file: " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    if (bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b) {
        return gunzip(bytes, path);
    }
    return bytes;
}

Dataset parse_mnist(const std::string& images_path,
                    const std::string& labels_path) {
    const auto img_bytes = read_file_bytes(images_path);
    const auto lbl_bytes = read_file_bytes(labels_path);

    if (img_bytes.size() < 16) {
        throw LengthError(images_path + ": image header truncated");
    }
    const std::uint32_t img_magic = read_be32(img_bytes.data());
    if (img_magic != kMnistImageMagic) {
        throw FormatError(images_path + ": expected image magic " +
                          std::to_string(kMnistImageMagic) + ", observed " +
                          std::to_string(img_magic));
    }
    const std::int64_t n = read_be32(img_bytes.data() + 4);
    const std::int64_t rows = read_be32(img_bytes.data() + 8);
    const std::int64_t cols = read_be32(img_bytes.data() + 12);
    if (static_cast<std::int64_t>(img_bytes.size()) < 16 + n * rows * cols) {
        throw LengthError(images_path + ": image payload truncated, need " +
                          std::to_string(16 + n * rows * cols) +
                          " bytes, have " + std::to_string(img_bytes.size()));
    }

    if (lbl_bytes.size() < 8) {
        throw LengthError(labels_path + ": label header truncated");
    }
    const std::uint32_t lbl_magic = read_be32(lbl_bytes.data());
    if (lbl_magic != kMnistLabelMagic) {
        throw FormatError(labels_path + ": expected label magic " +
                          std::to_string(kMnistLabelMagic) + ", observed " +
                          std::to_string(lbl_magic));
    }
    const std::int64_t n_labels = read_be32(lbl_bytes.data() + 4);
    if (static_cast<std::int64_t>(lbl_bytes.size()) < 8 + n_labels) {
        throw LengthError(labels_path + ": label payload truncated");
    }
    if (n != n_labels) {
        throw ConsistencyError("image count " + std::to_string(n) +
                               " does not match label count " +
                               std::to_string(n_labels));
    }

    Dataset ds;
    ds.name = "mnist";
    ds.num_classes = 10;
    if (n == 0) {
        // Valid but empty container.
        ds.images = nullptr;
        return ds;
    }
    ds.images = Tensor::zeros({n, 1, rows, cols});
    const unsigned char* px = img_bytes.data() + 16;
    for (std::size_t i = 0; i < ds.images->data.size(); ++i) {
        ds.images->data[i] = static_cast<double>(px[i]) / 255.0;
    }
    ds.labels.resize(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        const int label = lbl_bytes[static_cast<std::size_t>(8 + i)];
        if (label >= ds.num_classes) {
            throw ConsistencyError(labels_path + ": label " +
                                   std::to_string(label) + " out of range");
        }
        ds.labels[static_cast<std::size_t>(i)] = label;
    }
    return ds;
}

Dataset parse_cifar(const std::vector<std::string>& paths,
                    CifarVariant variant) {
    const bool fine = variant == CifarVariant::cifar100;
    const std::size_t record = fine ? 3074 : 3073;
    const int num_classes = fine ? 100 : 10;
    constexpr std::size_t kPixels = 3 * 32 * 32;

    std::vector<unsigned char> all;
    for (const auto& path : paths) {
        auto bytes = read_file_bytes(path);
        if (bytes.size() % record != 0) {
            throw FormatError(path + ": file length " +
                              std::to_string(bytes.size()) +
                              " is not a multiple of the record size " +
                              std::to_string(record));
        }
        all.insert(all.end(), bytes.begin(), bytes.end());
    }

    const std::int64_t n = static_cast<std::int64_t>(all.size() / record);
    Dataset ds;
    ds.name = fine ? "cifar100" : "cifar10";
    ds.num_classes = num_classes;
    if (n == 0) return ds;

    ds.images = Tensor::zeros({n, 3, 32, 32});
    ds.labels.resize(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        const unsigned char* rec = all.data() + i * record;
        const int label = fine ? rec[1] : rec[0];
        if (label >= num_classes) {
            throw ConsistencyError("record " + std::to_string(i) + ": label " +
                                   std::to_string(label) +
                                   " out of range for " + ds.name);
        }
        ds.labels[static_cast<std::size_t>(i)] = label;
        const unsigned char* px = rec + (fine ? 2 : 1);
        double* dst = ds.images->data.data() + i * kPixels;
        for (std::size_t j = 0; j < kPixels; ++j) {
            dst[j] = static_cast<double>(px[j]) / 255.0;
        }
    }
    return ds;
}

Dataset adapt_input(const Dataset& ds, const Shape& arch_input) {
    if (arch_input.size() != 3 || arch_input[1] != 32 || arch_input[2] != 32 ||
        (arch_input[0] != 1 && arch_input[0] != 3)) {
        throw ContractError("adapt_input: unsupported target shape");
    }
    const std::int64_t want_c = arch_input[0];
    if (ds.size() == 0) return ds;

    const std::int64_t n = ds.images->shape[0];
    const std::int64_t c = ds.images->shape[1];
    const std::int64_t h = ds.images->shape[2];
    const std::int64_t w = ds.images->shape[3];

    if (c == want_c && h == 32 && w == 32) return ds;

    // Zero-pad to 32x32 first (symmetric border), then replicate channels.
    if (h > 32 || w > 32 || (c != want_c && c != 1)) {
        throw ContractError("adapt_input: cannot adapt " +
                            ds.images->shape_str() + " to the target shape");
    }
    const std::int64_t top = (32 - h) / 2;
    const std::int64_t left = (32 - w) / 2;

    Dataset out;
    out.labels = ds.labels;
    out.num_classes = ds.num_classes;
    out.name = ds.name;
    out.images = Tensor::zeros({n, want_c, 32, 32});
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t ch = 0; ch < want_c; ++ch) {
            const std::int64_t src_ch = c == want_c ? ch : 0;
            const double* src =
                ds.images->data.data() + (i * c + src_ch) * h * w;
            double* dst =
                out.images->data.data() + (i * want_c + ch) * 32 * 32;
            for (std::int64_t r = 0; r < h; ++r) {
                std::memcpy(dst + (top + r) * 32 + left, src + r * w,
                            static_cast<std::size_t>(w) * sizeof(double));
            }
        }
    }
    return out;
}

Dataset add_noise(const Dataset& ds, const NoiseSpec& spec) {
    if (spec.gamma < 0.0) throw ContractError("add_noise: gamma must be >= 0");
    Dataset out;
    out.labels = ds.labels;
    out.num_classes = ds.num_classes;
    out.name = ds.name;
    if (ds.size() == 0) return out;
    out.images = Tensor::from_vector(ds.images->shape, ds.images->data);
    if (spec.gamma == 0.0) return out;
    NoiseStream noise(spec.seed);
    for (double& p : out.images->data) {
        p += spec.gamma * noise.gaussian();
    }
    return out;
}

std::vector<Batch> batches(const Dataset& ds, const BatchPlan& plan) {
    if (plan.batch_size < 1) {
        throw ContractError("batches: batch_size must be >= 1");
    }
    std::vector<Batch> result;
    const std::int64_t n = ds.size();
    if (n == 0) return result;

    std::vector<std::int64_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    NoiseStream rng(plan.shuffle_seed);
    for (std::int64_t i = n - 1; i > 0; --i) {
        const std::int64_t j = static_cast<std::int64_t>(
            rng.bounded(static_cast<std::uint64_t>(i + 1)));
        std::swap(order[static_cast<std::size_t>(i)],
                  order[static_cast<std::size_t>(j)]);
    }

    const std::int64_t m = plan.minibatches(n);
    result.reserve(static_cast<std::size_t>(m));
    for (std::int64_t b = 0; b < m; ++b) {
        const std::int64_t lo = b * plan.batch_size;
        const std::int64_t hi = std::min(n, lo + plan.batch_size);
        std::span<const std::int64_t> idx(order.data() + lo,
                                          static_cast<std::size_t>(hi - lo));
        Batch batch;
        batch.images = gather_images(ds.images, idx);
        batch.labels.reserve(idx.size());
        for (std::int64_t i : idx) {
            batch.labels.push_back(ds.labels[static_cast<std::size_t>(i)]);
        }
        batch.index = static_cast<int>(b + 1);
        result.push_back(std::move(batch));
    }
    return result;
}

Dataset take(const Dataset& ds, std::int64_t offset, std::int64_t count) {
    const std::int64_t n = ds.size();
    offset = std::min(offset, n);
    count = std::min(count, n - offset);
    Dataset out;
    out.num_classes = ds.num_classes;
    out.name = ds.name;
    if (count <= 0) return out;
    std::vector<std::int64_t> idx(static_cast<std::size_t>(count));
    std::iota(idx.begin(), idx.end(), offset);
    out.images = gather_images(ds.images, idx);
    out.labels.assign(ds.labels.begin() + offset,
                      ds.labels.begin() + offset + count);
    return out;
}

TensorPtr gather_images(const TensorPtr& images,
                        std::span<const std::int64_t> indices) {
    const std::int64_t row =
        images->numel() / images->shape[0]; // elements per image
    Shape shape = images->shape;
    shape[0] = static_cast<std::int64_t>(indices.size());
    auto out = Tensor::zeros(shape);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        std::memcpy(out->data.data() + static_cast<std::int64_t>(i) * row,
                    images->data.data() + indices[i] * row,
                    static_cast<std::size_t>(row) * sizeof(double));
    }
    return out;
}

} // namespace bcnn
