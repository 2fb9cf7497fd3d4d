#include "bcnn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>

#include "bcnn/errors.hpp"
#include "bcnn/rng.hpp"

namespace bcnn::synth {

namespace {

// 5x7 digit glyphs, one bit per pixel, row-major top to bottom.
constexpr std::uint8_t kGlyphs[10][7] = {
    {0b01110, 0b10001, 0b10011, 0b10101, 0b11001, 0b10001, 0b01110}, // 0
    {0b00100, 0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110}, // 1
    {0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b01000, 0b11111}, // 2
    {0b11111, 0b00010, 0b00100, 0b00010, 0b00001, 0b10001, 0b01110}, // 3
    {0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010}, // 4
    {0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110}, // 5
    {0b00110, 0b01000, 0b10000, 0b11110, 0b10001, 0b10001, 0b01110}, // 6
    {0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b01000, 0b01000}, // 7
    {0b01110, 0b10001, 0b10001, 0b01110, 0b10001, 0b10001, 0b01110}, // 8
    {0b01110, 0b10001, 0b10001, 0b01111, 0b00001, 0b00010, 0b01100}, // 9
};

std::uint8_t quantize(double v) {
    v = std::clamp(v, 0.0, 1.0);
    return static_cast<std::uint8_t>(std::lround(v * 255.0));
}

void paint_glyph(double* img, NoiseStream& rng, int glyph, double intensity) {
    // Centered like the reference digit sets, with a small placement jitter.
    const int scale = 2 + static_cast<int>(rng.bounded(2)); // 2 or 3
    const int gw = 5 * scale;
    const int gh = 7 * scale;
    const int ox = (28 - gw) / 2 - 2 + static_cast<int>(rng.bounded(5));
    const int oy = (28 - gh) / 2 - 2 + static_cast<int>(rng.bounded(5));
    const double shear = (rng.uniform() - 0.5) * 0.24;

    for (int r = 0; r < gh; ++r) {
        const int gy = r / scale;
        const int shift =
            static_cast<int>(std::lround(shear * (r - gh / 2.0)));
        for (int c = 0; c < gw; ++c) {
            const int gx = c / scale;
            if (!((kGlyphs[glyph][gy] >> (4 - gx)) & 1)) continue;
            const int x = ox + c + shift;
            const int y = oy + r;
            if (x < 0 || x >= 28 || y < 0 || y >= 28) continue;
            const double v = intensity + (rng.uniform() - 0.5) * 0.16;
            img[y * 28 + x] = std::max(img[y * 28 + x], v);
        }
    }
}

// Most images carry one digit. A twelfth of them overlay two digits at
// equal intensity and carry either component's label with equal
// probability, so the class posterior on them is an even coin flip. That
// irreducible part is what the data-noise half of the predictive variance
// should report.
int render_digit(NoiseStream& rng, std::uint8_t* out28x28) {
    double img[28 * 28];
    for (double& p : img) p = std::abs(rng.gaussian()) * 0.04;

    int label = static_cast<int>(rng.bounded(10));
    if (rng.bounded(12) == 0) {
        const int other = static_cast<int>((label + 1 + rng.bounded(9)) % 10);
        const double intensity = 0.7 + rng.uniform() * 0.2;
        paint_glyph(img, rng, label, intensity);
        paint_glyph(img, rng, other, intensity);
        if (rng.bounded(2) == 0) label = other;
    } else {
        paint_glyph(img, rng, label, 0.75 + rng.uniform() * 0.25);
    }
    for (int i = 0; i < 28 * 28; ++i) out28x28[i] = quantize(img[i]);
    return label;
}

// Adds one class-specific shape to the coverage mask.
void paint_shape(double* mask, NoiseStream& rng, int label) {
    const double cx = 12.0 + rng.uniform() * 8.0;
    const double cy = 12.0 + rng.uniform() * 8.0;
    const double size = 6.0 + rng.uniform() * 6.0;
    const int period = 2 + static_cast<int>(rng.bounded(3));
    const double diag_sign = rng.bounded(2) ? 1.0 : -1.0;

    for (int y = 0; y < 32; ++y) {
        for (int x = 0; x < 32; ++x) {
            const double dx = x - cx;
            const double dy = y - cy;
            const double r = std::sqrt(dx * dx + dy * dy);
            bool on = false;
            switch (label) {
            case 0: on = r <= size; break;                       // disk
            case 1:                                              // box outline
                on = std::max(std::abs(dx), std::abs(dy)) <= size &&
                     std::max(std::abs(dx), std::abs(dy)) >= size - 2.0;
                break;
            case 2: // filled triangle
                on = dy >= -size / 2 && dy <= size / 2 &&
                     std::abs(dx) <= (dy + size / 2) * 0.8;
                break;
            case 3: // plus sign
                on = (std::abs(dx) <= 1.5 && std::abs(dy) <= size) ||
                     (std::abs(dy) <= 1.5 && std::abs(dx) <= size);
                break;
            case 4: on = r <= size && r >= size - 2.5; break;    // ring
            case 5: // horizontal stripes
                on = std::abs(dx) <= size && std::abs(dy) <= size &&
                     (y / period) % 2 == 0;
                break;
            case 6: // vertical stripes
                on = std::abs(dx) <= size && std::abs(dy) <= size &&
                     (x / period) % 2 == 0;
                break;
            case 7: // checkerboard
                on = std::abs(dx) <= size && std::abs(dy) <= size &&
                     ((x / period) + (y / period)) % 2 == 0;
                break;
            case 8: // diagonal bar
                on = std::abs(dx - diag_sign * dy) <= 2.0 &&
                     std::abs(dx) <= size && std::abs(dy) <= size;
                break;
            default: { // three small disks
                const double r1 = std::hypot(dx - size * 0.5, dy);
                const double r2 = std::hypot(dx + size * 0.4, dy - size * 0.5);
                const double r3 = std::hypot(dx + size * 0.2, dy + size * 0.6);
                on = r1 <= 2.5 || r2 <= 2.5 || r3 <= 2.5;
                break;
            }
            }
            if (on) mask[y * 32 + x] = 1.0;
        }
    }
}

// One 32x32 RGB canvas with a class-specific shape in arbitrary colors.
// Colors carry no class information, so the shape itself must be learned.
// A tenth of the images overlay a second shape and take either label with
// equal probability.
int render_shape(NoiseStream& rng, std::uint8_t* out) {
    double fg[3], bg[3];
    for (int ch = 0; ch < 3; ++ch) bg[ch] = rng.uniform() * 0.5;
    for (int ch = 0; ch < 3; ++ch) fg[ch] = 0.5 + rng.uniform() * 0.5;

    int label = static_cast<int>(rng.bounded(10));
    double mask[32 * 32] = {};
    paint_shape(mask, rng, label);
    if (rng.bounded(10) == 0) {
        const int other = static_cast<int>((label + 1 + rng.bounded(9)) % 10);
        paint_shape(mask, rng, other);
        if (rng.bounded(2) == 0) label = other;
    }

    for (int ch = 0; ch < 3; ++ch) {
        for (int i = 0; i < 32 * 32; ++i) {
            const double base = mask[i] > 0.0 ? fg[ch] : bg[ch];
            out[ch * 32 * 32 + i] = quantize(base + rng.gaussian() * 0.07);
        }
    }
    return label;
}

void write_bytes(const std::string& path,
                 const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write file: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

void append_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

} // namespace

void write_idx_images(const std::string& path,
                      const std::vector<std::uint8_t>& pixels, std::int64_t n,
                      std::int64_t rows, std::int64_t cols) {
    std::vector<std::uint8_t> out;
    out.reserve(16 + pixels.size());
    append_be32(out, 2051);
    append_be32(out, static_cast<std::uint32_t>(n));
    append_be32(out, static_cast<std::uint32_t>(rows));
    append_be32(out, static_cast<std::uint32_t>(cols));
    out.insert(out.end(), pixels.begin(), pixels.end());
    write_bytes(path, out);
}

void write_idx_labels(const std::string& path,
                      const std::vector<std::uint8_t>& labels) {
    std::vector<std::uint8_t> out;
    out.reserve(8 + labels.size());
    append_be32(out, 2049);
    append_be32(out, static_cast<std::uint32_t>(labels.size()));
    out.insert(out.end(), labels.begin(), labels.end());
    write_bytes(path, out);
}

void write_digit_set(const std::string& dir, std::int64_t train_n,
                     std::int64_t test_n, std::uint64_t seed) {
    NoiseStream rng(seed);
    const auto make_split = [&rng](std::int64_t n,
                                   const std::string& img_path,
                                   const std::string& lbl_path) {
        std::vector<std::uint8_t> pixels(
            static_cast<std::size_t>(n) * 28 * 28);
        std::vector<std::uint8_t> labels(static_cast<std::size_t>(n));
        for (std::int64_t i = 0; i < n; ++i) {
            labels[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(
                render_digit(rng, pixels.data() + i * 28 * 28));
        }
        write_idx_images(img_path, pixels, n, 28, 28);
        write_idx_labels(lbl_path, labels);
    };
    make_split(train_n, dir + "/train-images-idx3-ubyte",
               dir + "/train-labels-idx1-ubyte");
    make_split(test_n, dir + "/t10k-images-idx3-ubyte",
               dir + "/t10k-labels-idx1-ubyte");
}

void write_shape_set(const std::string& dir, std::int64_t train_n,
                     std::int64_t test_n, std::uint64_t seed) {
    NoiseStream rng(seed);
    const auto make_records = [&rng](std::int64_t n) {
        std::vector<std::uint8_t> records(
            static_cast<std::size_t>(n) * 3073);
        for (std::int64_t i = 0; i < n; ++i) {
            std::uint8_t* rec = records.data() + i * 3073;
            rec[0] = static_cast<std::uint8_t>(render_shape(rng, rec + 1));
        }
        return records;
    };

    // Five train batches, sized as evenly as the total allows.
    std::int64_t remaining = train_n;
    for (int b = 1; b <= 5; ++b) {
        const std::int64_t here = remaining / (6 - b);
        remaining -= here;
        const auto records = make_records(here);
        write_bytes(dir + "/data_batch_" + std::to_string(b) + ".bin",
                    records);
    }
    write_bytes(dir + "/test_batch.bin", make_records(test_n));
}

} // namespace bcnn::synth
