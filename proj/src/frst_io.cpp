#include "frs/frst_io.hpp"

#include <cstring>
#include <fstream>

namespace frs {

namespace {

void put_u16(std::string& out, uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

class Reader {
public:
    Reader(std::string bytes, std::string path) : bytes_(std::move(bytes)), path_(std::move(path)) {}

    void set_context(const std::string& tensor_name) { context_ = tensor_name; }

    uint8_t u8() { return static_cast<uint8_t>(take(1)[0]); }

    uint16_t u16() {
        const unsigned char* p = take(2);
        return static_cast<uint16_t>(p[0] | (p[1] << 8));
    }

    uint32_t u32() {
        const unsigned char* p = take(4);
        return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
               (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
    }

    double f64() {
        const unsigned char* p = take(8);
        uint64_t bits = 0;
        for (int i = 7; i >= 0; --i) bits = (bits << 8) | p[i];
        double v;
        std::memcpy(&v, &bits, sizeof v);
        return v;
    }

    std::string str(size_t n) {
        const unsigned char* p = take(n);
        return std::string(reinterpret_cast<const char*>(p), n);
    }

private:
    const unsigned char* take(size_t n) {
        if (pos_ + n > bytes_.size()) {
            std::string where = context_.empty() ? "header" : "tensor '" + context_ + "'";
            throw CodecError("frst: " + path_ + ": truncated while reading " + where);
        }
        const unsigned char* p = reinterpret_cast<const unsigned char*>(bytes_.data()) + pos_;
        pos_ += n;
        return p;
    }

    std::string bytes_;
    std::string path_;
    std::string context_;
    size_t pos_ = 0;
};

}  // namespace

void write_frst(const std::string& path, const NamedTensors& tensors) {
    std::string out;
    out += "FRST";
    put_u16(out, 1);
    put_u32(out, static_cast<uint32_t>(tensors.size()));
    for (const auto& [name, tensor] : tensors) {
        if (name.size() > 0xffff) throw CodecError("frst: tensor name too long: " + name);
        put_u16(out, static_cast<uint16_t>(name.size()));
        out += name;
        const Shape& shape = tensor.shape();
        out.push_back(static_cast<char>(shape.size()));
        for (int d : shape) put_u32(out, static_cast<uint32_t>(d));
        out.push_back(0);  // dtype f64
        for (double v : tensor.data()) put_f64(out, v);
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw CodecError("frst: cannot open for writing: " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw CodecError("frst: write failed: " + path);
}

NamedTensors read_frst(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw CodecError("frst: cannot open: " + path);
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    Reader r(std::move(bytes), path);

    if (r.str(4) != "FRST") throw CodecError("frst: " + path + ": bad magic bytes");
    const uint16_t version = r.u16();
    if (version != 1)
        throw CodecError("frst: " + path + ": unsupported version " + std::to_string(version));
    const uint32_t count = r.u32();

    NamedTensors result;
    result.reserve(count);
    for (uint32_t t = 0; t < count; ++t) {
        const uint16_t name_len = r.u16();
        std::string name = r.str(name_len);
        r.set_context(name.empty() ? "#" + std::to_string(t) : name);
        const uint8_t rank = r.u8();
        Shape shape(rank);
        int64_t n = 1;
        for (uint8_t i = 0; i < rank; ++i) {
            shape[i] = static_cast<int>(r.u32());
            n *= shape[i];
        }
        const uint8_t dtype = r.u8();
        if (dtype != 0)
            throw CodecError("frst: " + path + ": tensor '" + name + "': unknown dtype code " +
                             std::to_string(dtype));
        std::vector<double> data(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) data[static_cast<size_t>(i)] = r.f64();
        result.emplace_back(std::move(name), Tensor::from(std::move(shape), std::move(data)));
    }
    return result;
}

void write_pgm(const std::string& path, int width, int height,
               const std::vector<unsigned char>& gray) {
    if (static_cast<size_t>(width) * height != gray.size())
        throw CodecError("pgm: pixel count mismatch for " + path);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw CodecError("pgm: cannot open for writing: " + path);
    f << "P5\n" << width << " " << height << "\n255\n";
    f.write(reinterpret_cast<const char*>(gray.data()), static_cast<std::streamsize>(gray.size()));
    if (!f) throw CodecError("pgm: write failed: " + path);
}

void write_ppm(const std::string& path, int width, int height,
               const std::vector<unsigned char>& rgb) {
    if (static_cast<size_t>(width) * height * 3 != rgb.size())
        throw CodecError("ppm: pixel count mismatch for " + path);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw CodecError("ppm: cannot open for writing: " + path);
    f << "P6\n" << width << " " << height << "\n255\n";
    f.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
    if (!f) throw CodecError("ppm: write failed: " + path);
}

std::vector<unsigned char> read_pgm(const std::string& path, int& width, int& height) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw CodecError("pgm: cannot open: " + path);
    std::string magic;
    int maxval = 0;
    f >> magic >> width >> height >> maxval;
    if (magic != "P5" || maxval != 255)
        throw CodecError("pgm: " + path + ": expected binary P5 with maxval 255");
    f.get();  // single whitespace after header
    std::vector<unsigned char> gray(static_cast<size_t>(width) * height);
    f.read(reinterpret_cast<char*>(gray.data()), static_cast<std::streamsize>(gray.size()));
    if (!f) throw CodecError("pgm: " + path + ": truncated pixel data");
    return gray;
}

}  // namespace frs
