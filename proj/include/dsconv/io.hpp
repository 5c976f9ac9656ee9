#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "dsconv/engine.hpp"

namespace dsconv {

// Binary tensor container, little-endian throughout. Layout:
//   magic "DSC1" | dtype u8 | bits u8 | block u16 | ndim u8 (always 4) |
//   dims u32 x ndim | payload
// Payloads: fp32 raw IEEE-754 LE; VQK one signed byte per value; BFP the
// mantissa bytes then the per-block exponent bytes. Round-trips are bitwise
// exact; see docs/FORMAT.md for the normative description.
enum class TensorDType : std::uint8_t {
    Fp32 = 0,
    VqkInt8 = 1,
    Bfp = 2,
};

void write_tensor(std::ostream& os, const Tensor4D& t);
Tensor4D read_tensor(std::istream& is);

void write_vqk(std::ostream& os, const Vqk& v, const QuantConfig& cfg);
std::pair<Vqk, QuantConfig> read_vqk(std::istream& is);

void write_bfp(std::ostream& os, const BfpTensor& t);
BfpTensor read_bfp(std::istream& is);

// Named stack of quantized layers, the unit the CLI pipes between commands.
// Cross-layer shape compatibility is not a file invariant; it is checked
// when the model runs.
struct Model {
    struct Layer {
        std::string name;
        DSConvLayer layer;
    };
    std::vector<Layer> layers;
};

// Model container: magic "DSM1" | layer count u16 | per layer: name
// (u16 length + UTF-8 bytes), conv params (4 x u32: stride h/w, pad h/w),
// VQK tensor block, KDS tensor block (dtype fp32), bias (u32 count + f32s).
void write_model(std::ostream& os, const Model& m);
Model read_model(std::istream& is);

// File wrappers; these also reject trailing bytes after the payload.
void write_tensor_file(const std::string& path, const Tensor4D& t);
Tensor4D read_tensor_file(const std::string& path);
void write_bfp_file(const std::string& path, const BfpTensor& t);
BfpTensor read_bfp_file(const std::string& path);
void write_model_file(const std::string& path, const Model& m);
Model read_model_file(const std::string& path);

}  // namespace dsconv
