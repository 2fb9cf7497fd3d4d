#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace bcnn::synth {

// Deterministic synthetic benchmark data, written in the same binary
// formats as the reference datasets so the regular loaders and the whole
// training pipeline run unchanged when the originals are not on disk.
//
// The digit set renders jittered 5x7 glyphs (shift, shear, scale,
// intensity, background noise) on 28x28 grayscale canvases; the shape set
// draws one of ten textured shapes in random colors and positions on noisy
// 32x32 RGB canvases.

// Writes train-images-idx3-ubyte, train-labels-idx1-ubyte,
// t10k-images-idx3-ubyte, t10k-labels-idx1-ubyte into dir.
void write_digit_set(const std::string& dir, std::int64_t train_n,
                     std::int64_t test_n, std::uint64_t seed);

// Writes data_batch_1..5.bin and test_batch.bin into dir.
void write_shape_set(const std::string& dir, std::int64_t train_n,
                     std::int64_t test_n, std::uint64_t seed);

// Raw IDX writers, also used by tests that need well-formed files.
void write_idx_images(const std::string& path,
                      const std::vector<std::uint8_t>& pixels, std::int64_t n,
                      std::int64_t rows, std::int64_t cols);
void write_idx_labels(const std::string& path,
                      const std::vector<std::uint8_t>& labels);

} // namespace bcnn::synth
