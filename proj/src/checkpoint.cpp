#include "bcnn/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

#include "bcnn/errors.hpp"

namespace bcnn {

namespace {

constexpr char kMagic[4] = {'B', 'C', 'N', 'N'};

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
}

void put_i64(std::string& out, std::int64_t v) {
    put_u64(out, static_cast<std::uint64_t>(v));
}

void put_f32(std::string& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

class Reader {
public:
    Reader(const std::string& bytes, std::string path)
        : bytes_(bytes), path_(std::move(path)) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) {
            v = (v << 8) |
                static_cast<std::uint8_t>(bytes_[pos_ + static_cast<std::size_t>(i)]);
        }
        pos_ += 4;
        return v;
    }

    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i) {
            v = (v << 8) |
                static_cast<std::uint8_t>(bytes_[pos_ + static_cast<std::size_t>(i)]);
        }
        pos_ += 8;
        return v;
    }

    std::int64_t i64() { return static_cast<std::int64_t>(u64()); }

    float f32() {
        const std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }

    std::string str(std::uint64_t len) {
        need(len);
        std::string s = bytes_.substr(pos_, len);
        pos_ += len;
        return s;
    }

    void expect_magic() {
        need(4);
        if (std::memcmp(bytes_.data(), kMagic, 4) != 0) {
            throw FormatError(path_ + ": not a checkpoint file (bad magic)");
        }
        pos_ += 4;
    }

private:
    void need(std::uint64_t n) {
        if (pos_ + n > bytes_.size()) {
            throw LengthError(path_ + ": checkpoint truncated");
        }
    }

    const std::string& bytes_;
    std::string path_;
    std::size_t pos_ = 0;
};

} // namespace

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
    std::string out;
    out.append(kMagic, 4);
    put_u32(out, checkpoint.version);
    put_u64(out, checkpoint.config_json.size());
    out.append(checkpoint.config_json);
    put_u64(out, checkpoint.tensors.size());
    for (const auto& [name, tensor] : checkpoint.tensors) {
        put_u64(out, name.size());
        out.append(name);
        put_u32(out, static_cast<std::uint32_t>(tensor->shape.size()));
        for (std::int64_t d : tensor->shape) put_i64(out, d);
        put_u64(out, tensor->data.size());
        for (double v : tensor->data) put_f32(out, static_cast<float>(v));
    }
    put_u64(out, checkpoint.adam_step);
    put_u32(out, checkpoint.epoch);

    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw Error("cannot write checkpoint: " + tmp);
        f.write(out.data(), static_cast<std::streamsize>(out.size()));
        if (!f) throw Error("short write to " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open checkpoint: " + path);
    std::string bytes((std::istreambuf_iterator<char>(f)),
                      std::istreambuf_iterator<char>());

    Reader r(bytes, path);
    r.expect_magic();
    Checkpoint c;
    c.version = r.u32();
    if (c.version != 1) {
        throw FormatError(path + ": unsupported checkpoint version " +
                          std::to_string(c.version));
    }
    c.config_json = r.str(r.u64());
    const std::uint64_t count = r.u64();
    c.tensors.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        std::string name = r.str(r.u64());
        const std::uint32_t rank = r.u32();
        Shape shape(rank);
        for (auto& d : shape) d = r.i64();
        const std::uint64_t numel = r.u64();
        auto t = Tensor::zeros(shape);
        if (static_cast<std::uint64_t>(t->numel()) != numel) {
            throw ConsistencyError(path + ": tensor \"" + name +
                                   "\" element count does not match shape");
        }
        for (auto& v : t->data) v = static_cast<double>(r.f32());
        c.tensors.emplace_back(std::move(name), std::move(t));
    }
    c.adam_step = r.u64();
    c.epoch = r.u32();
    return c;
}

} // namespace bcnn
