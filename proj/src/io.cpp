#include "dsconv/io.hpp"

#include <array>
#include <bit>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

namespace dsconv {
namespace {

constexpr std::array<char, 4> kTensorMagic = {'D', 'S', 'C', '1'};
constexpr std::array<char, 4> kModelMagic = {'D', 'S', 'M', '1'};

class ByteWriter {
public:
    explicit ByteWriter(std::ostream& os) : os_(os) {}

    void bytes(const void* p, std::size_t n) {
        os_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
        if (!os_) {
            throw FormatError("write failed", offset_);
        }
        offset_ += n;
    }
    void u8(std::uint8_t v) { bytes(&v, 1); }
    void i8(std::int8_t v) { bytes(&v, 1); }
    void u16(std::uint16_t v) {
        const std::uint8_t b[2] = {static_cast<std::uint8_t>(v),
                                   static_cast<std::uint8_t>(v >> 8)};
        bytes(b, 2);
    }
    void u32(std::uint32_t v) {
        const std::uint8_t b[4] = {
            static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8),
            static_cast<std::uint8_t>(v >> 16), static_cast<std::uint8_t>(v >> 24)};
        bytes(b, 4);
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

private:
    std::ostream& os_;
    std::size_t offset_ = 0;
};

class ByteReader {
public:
    explicit ByteReader(std::istream& is) : is_(is) {}

    std::size_t offset() const { return offset_; }

    void bytes(void* p, std::size_t n) {
        is_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        const auto got = static_cast<std::size_t>(is_.gcount());
        if (got != n) {
            throw FormatError("truncated file: expected " + std::to_string(n) +
                                  " more bytes, got " + std::to_string(got),
                              offset_);
        }
        offset_ += n;
    }
    std::uint8_t u8() {
        std::uint8_t v;
        bytes(&v, 1);
        return v;
    }
    std::int8_t i8() { return static_cast<std::int8_t>(u8()); }
    std::uint16_t u16() {
        std::uint8_t b[2];
        bytes(b, 2);
        return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
    }
    std::uint32_t u32() {
        std::uint8_t b[4];
        bytes(b, 4);
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) |
               (static_cast<std::uint32_t>(b[3]) << 24);
    }
    float f32() { return std::bit_cast<float>(u32()); }

    bool at_eof() {
        is_.peek();
        return is_.eof();
    }

private:
    std::istream& is_;
    std::size_t offset_ = 0;
};

std::uint32_t extent_u32(std::int64_t d) {
    if (d < 0 || d > static_cast<std::int64_t>(std::numeric_limits<std::uint32_t>::max())) {
        throw FormatError("tensor extent " + std::to_string(d) + " does not fit the format");
    }
    return static_cast<std::uint32_t>(d);
}

void write_header(ByteWriter& w, TensorDType dtype, int bits, std::int64_t block,
                  const Shape4& shape) {
    w.bytes(kTensorMagic.data(), kTensorMagic.size());
    w.u8(static_cast<std::uint8_t>(dtype));
    w.u8(static_cast<std::uint8_t>(bits));
    if (block < 0 || block > 0xFFFF) {
        throw FormatError("block size " + std::to_string(block) + " does not fit the format");
    }
    w.u16(static_cast<std::uint16_t>(block));
    w.u8(4);
    for (int i = 0; i < 4; ++i) {
        w.u32(extent_u32(shape[i]));
    }
}

struct Header {
    TensorDType dtype;
    int bits;
    std::int64_t block;
    Shape4 shape;
};

Header read_header(ByteReader& r) {
    std::array<char, 4> magic;
    const std::size_t magic_offset = r.offset();
    r.bytes(magic.data(), magic.size());
    if (magic != kTensorMagic) {
        throw FormatError("bad tensor magic", magic_offset);
    }
    const std::uint8_t dtype = r.u8();
    if (dtype > 2) {
        throw FormatError("unknown dtype code " + std::to_string(dtype), r.offset() - 1);
    }
    const int bits = r.u8();
    const std::int64_t block = r.u16();
    const std::uint8_t ndim = r.u8();
    if (ndim != 4) {
        throw FormatError("unsupported rank " + std::to_string(ndim), r.offset() - 1);
    }
    std::array<std::int64_t, 4> dims;
    for (auto& d : dims) {
        const std::size_t off = r.offset();
        d = r.u32();
        if (d < 1) {
            throw FormatError("tensor extent must be >= 1", off);
        }
    }
    return Header{static_cast<TensorDType>(dtype), bits, block,
                  Shape4(dims[0], dims[1], dims[2], dims[3])};
}

void write_tensor_impl(ByteWriter& w, const Tensor4D& t) {
    write_header(w, TensorDType::Fp32, 0, 0, t.shape());
    for (float v : t.values()) {
        w.f32(v);
    }
}

Tensor4D read_tensor_impl(ByteReader& r) {
    const Header h = read_header(r);
    if (h.dtype != TensorDType::Fp32) {
        throw FormatError("expected an fp32 tensor block", r.offset());
    }
    std::vector<float> data(static_cast<std::size_t>(h.shape.numel()));
    for (float& v : data) {
        v = r.f32();
    }
    return Tensor4D(h.shape, std::move(data));
}

void write_vqk_impl(ByteWriter& w, const Vqk& v, const QuantConfig& cfg) {
    cfg.validate();
    if (static_cast<std::int64_t>(v.data.size()) != v.shape.numel()) {
        throw ShapeError("VQK payload length does not match its shape");
    }
    write_header(w, TensorDType::VqkInt8, cfg.bits, cfg.block, v.shape);
    w.bytes(v.data.data(), v.data.size());
}

std::pair<Vqk, QuantConfig> read_vqk_impl(ByteReader& r) {
    const Header h = read_header(r);
    if (h.dtype != TensorDType::VqkInt8) {
        throw FormatError("expected a VQK tensor block", r.offset());
    }
    QuantConfig cfg{h.bits, h.block};
    try {
        cfg.validate();
    } catch (const ConfigError& e) {
        throw FormatError(std::string("invalid VQK header: ") + e.what(), r.offset());
    }
    Vqk v{h.shape, std::vector<std::int8_t>(static_cast<std::size_t>(h.shape.numel()))};
    const std::size_t payload_offset = r.offset();
    r.bytes(v.data.data(), v.data.size());
    const int lo = -(1 << (cfg.bits - 1));
    const int hi = (1 << (cfg.bits - 1)) - 1;
    for (std::size_t i = 0; i < v.data.size(); ++i) {
        if (v.data[i] < lo || v.data[i] > hi) {
            throw FormatError("VQK value outside " + std::to_string(cfg.bits) + "-bit range",
                              payload_offset + i);
        }
    }
    return {std::move(v), cfg};
}

void write_bfp_impl(ByteWriter& w, const BfpTensor& t) {
    const std::int64_t nb = block_count(t.shape[1], t.block);
    if (t.shape[0] != 1 || !(t.exp_shape == Shape4(1, nb, t.shape[2], t.shape[3])) ||
        static_cast<std::int64_t>(t.mantissa.size()) != t.shape.numel() ||
        static_cast<std::int64_t>(t.exponent.size()) != t.exp_shape.numel()) {
        throw ShapeError("inconsistent BFP tensor layout");
    }
    write_header(w, TensorDType::Bfp, t.bits, t.block, t.shape);
    w.bytes(t.mantissa.data(), t.mantissa.size());
    w.bytes(t.exponent.data(), t.exponent.size());
}

BfpTensor read_bfp_impl(ByteReader& r) {
    const Header h = read_header(r);
    if (h.dtype != TensorDType::Bfp) {
        throw FormatError("expected a BFP tensor block", r.offset());
    }
    if (h.bits < 2 || h.bits > 8 || h.block < 1) {
        throw FormatError("invalid BFP header", r.offset());
    }
    if (h.shape[0] != 1) {
        throw FormatError("BFP batch extent must be 1", r.offset());
    }
    const std::int64_t nb = block_count(h.shape[1], h.block);
    BfpTensor t{h.bits,
                h.block,
                h.shape,
                Shape4(1, nb, h.shape[2], h.shape[3]),
                std::vector<std::uint8_t>(static_cast<std::size_t>(h.shape.numel())),
                std::vector<std::int8_t>(
                    static_cast<std::size_t>(nb * h.shape[2] * h.shape[3]))};
    const std::size_t payload_offset = r.offset();
    r.bytes(t.mantissa.data(), t.mantissa.size());
    const std::uint32_t limit = 1u << h.bits;
    for (std::size_t i = 0; i < t.mantissa.size(); ++i) {
        if (t.mantissa[i] >= limit) {
            throw FormatError("mantissa value outside " + std::to_string(h.bits) + "-bit range",
                              payload_offset + i);
        }
    }
    r.bytes(t.exponent.data(), t.exponent.size());
    return t;
}

void write_model_impl(ByteWriter& w, const Model& m) {
    if (m.layers.size() > 0xFFFF) {
        throw FormatError("too many layers for the format");
    }
    w.bytes(kModelMagic.data(), kModelMagic.size());
    w.u16(static_cast<std::uint16_t>(m.layers.size()));
    for (const Model::Layer& entry : m.layers) {
        if (entry.name.size() > 0xFFFF) {
            throw FormatError("layer name too long for the format");
        }
        w.u16(static_cast<std::uint16_t>(entry.name.size()));
        w.bytes(entry.name.data(), entry.name.size());
        const ConvParams& p = entry.layer.params();
        w.u32(extent_u32(p.stride_h));
        w.u32(extent_u32(p.stride_w));
        w.u32(extent_u32(p.pad_h));
        w.u32(extent_u32(p.pad_w));
        write_vqk_impl(w, entry.layer.vqk(), entry.layer.cfg());
        write_tensor_impl(w, Tensor4D(entry.layer.kds().shape, entry.layer.kds().data));
        w.u32(extent_u32(static_cast<std::int64_t>(entry.layer.bias().size())));
        for (float b : entry.layer.bias()) {
            w.f32(b);
        }
    }
}

Model read_model_impl(ByteReader& r) {
    std::array<char, 4> magic;
    const std::size_t magic_offset = r.offset();
    r.bytes(magic.data(), magic.size());
    if (magic != kModelMagic) {
        throw FormatError("bad model magic", magic_offset);
    }
    const std::uint16_t count = r.u16();
    if (count == 0) {
        throw FormatError("model has no layers", r.offset() - 2);
    }
    Model m;
    m.layers.reserve(count);
    for (std::uint16_t i = 0; i < count; ++i) {
        std::string name(r.u16(), '\0');
        r.bytes(name.data(), name.size());
        ConvParams params;
        params.stride_h = r.u32();
        params.stride_w = r.u32();
        params.pad_h = r.u32();
        params.pad_w = r.u32();
        auto [vqk, cfg] = read_vqk_impl(r);
        Tensor4D kds_tensor = read_tensor_impl(r);
        Kds kds{kds_tensor.shape(),
                std::vector<float>(kds_tensor.values().begin(), kds_tensor.values().end())};
        const std::uint32_t bias_len = r.u32();
        std::vector<float> bias(bias_len);
        for (float& b : bias) {
            b = r.f32();
        }
        m.layers.push_back(Model::Layer{
            std::move(name),
            DSConvLayer(std::move(vqk), std::move(kds), std::move(bias), cfg, params)});
    }
    return m;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) {
        throw FormatError("cannot open " + path + " for writing");
    }
    return os;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw FormatError("cannot open " + path);
    }
    return is;
}

void expect_eof(ByteReader& r, const std::string& path) {
    if (!r.at_eof()) {
        throw FormatError("trailing bytes after payload in " + path, r.offset());
    }
}

}  // namespace

void write_tensor(std::ostream& os, const Tensor4D& t) {
    ByteWriter w(os);
    write_tensor_impl(w, t);
}

Tensor4D read_tensor(std::istream& is) {
    ByteReader r(is);
    return read_tensor_impl(r);
}

void write_vqk(std::ostream& os, const Vqk& v, const QuantConfig& cfg) {
    ByteWriter w(os);
    write_vqk_impl(w, v, cfg);
}

std::pair<Vqk, QuantConfig> read_vqk(std::istream& is) {
    ByteReader r(is);
    return read_vqk_impl(r);
}

void write_bfp(std::ostream& os, const BfpTensor& t) {
    ByteWriter w(os);
    write_bfp_impl(w, t);
}

BfpTensor read_bfp(std::istream& is) {
    ByteReader r(is);
    return read_bfp_impl(r);
}

void write_model(std::ostream& os, const Model& m) {
    ByteWriter w(os);
    write_model_impl(w, m);
}

Model read_model(std::istream& is) {
    ByteReader r(is);
    return read_model_impl(r);
}

void write_tensor_file(const std::string& path, const Tensor4D& t) {
    std::ofstream os = open_out(path);
    write_tensor(os, t);
}

Tensor4D read_tensor_file(const std::string& path) {
    std::ifstream is = open_in(path);
    ByteReader r(is);
    Tensor4D t = read_tensor_impl(r);
    expect_eof(r, path);
    return t;
}

void write_bfp_file(const std::string& path, const BfpTensor& t) {
    std::ofstream os = open_out(path);
    write_bfp(os, t);
}

BfpTensor read_bfp_file(const std::string& path) {
    std::ifstream is = open_in(path);
    ByteReader r(is);
    BfpTensor t = read_bfp_impl(r);
    expect_eof(r, path);
    return t;
}

void write_model_file(const std::string& path, const Model& m) {
    std::ofstream os = open_out(path);
    write_model(os, m);
}

Model read_model_file(const std::string& path) {
    std::ifstream is = open_in(path);
    ByteReader r(is);
    Model m = read_model_impl(r);
    expect_eof(r, path);
    return m;
}

}  // namespace dsconv
