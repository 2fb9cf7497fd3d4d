#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bcnn/rng.hpp"
#include "bcnn/tensor.hpp"

namespace bcnn {

// Labeled image set. Pixels are scaled to [0, 1]; labels index classes.
struct Dataset {
    TensorPtr images; // [N, C, H, W]
    std::vector<int> labels;
    int num_classes = 0;
    std::string name;

    std::int64_t size() const { return images ? images->shape[0] : 0; }
};

// Additive pixel noise: p -> p + gamma * z with z ~ N(0, 1) from the
// seeded stream. Pixels are not clipped afterwards.
struct NoiseSpec {
    double gamma = 0.0;
    std::uint64_t seed = 0;
};

// Minibatch layout for one epoch.
struct BatchPlan {
    int batch_size = 128;
    std::uint64_t shuffle_seed = 0;

    std::int64_t minibatches(std::int64_t n) const {
        return (n + batch_size - 1) / batch_size;
    }
};

struct Batch {
    TensorPtr images;
    std::vector<int> labels;
    int index = 0; // 1-based position within the epoch
};

enum class CifarVariant { cifar10, cifar100 };

// Reads a whole file; gzip-compressed contents are decompressed
// transparently.
std::vector<unsigned char> read_file_bytes(const std::string& path);

// IDX container files (big-endian headers, magic 2051/2049).
Dataset parse_mnist(const std::string& images_path,
                    const std::string& labels_path);

// CIFAR binary files: 3073-byte records (label + RGB planes) for cifar10,
// 3074-byte records (coarse label, fine label, RGB planes) for cifar100;
// the fine label is used.
Dataset parse_cifar(const std::vector<std::string>& paths,
                    CifarVariant variant);

// Pads MNIST 28x28 to 32x32 with a zero border and replicates the single
// channel when a 3-channel input is required; 3x32x32 data passes through.
Dataset adapt_input(const Dataset& ds, const Shape& arch_input);

Dataset add_noise(const Dataset& ds, const NoiseSpec& spec);

// Deterministic Fisher-Yates shuffle per plan seed; the last batch may be
// short; batch indices run 1..M.
std::vector<Batch> batches(const Dataset& ds, const BatchPlan& plan);

// Copies rows [offset, offset + count) into a fresh dataset.
Dataset take(const Dataset& ds, std::int64_t offset, std::int64_t count);

TensorPtr gather_images(const TensorPtr& images,
                        std::span<const std::int64_t> indices);

} // namespace bcnn
