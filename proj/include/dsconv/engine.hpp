#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "dsconv/bfp.hpp"
#include "dsconv/conv.hpp"
#include "dsconv/weight_quant.hpp"

namespace dsconv {

// Batch-normalization parameters, one entry per output channel.
struct BNParams {
    std::vector<float> gamma;
    std::vector<float> beta;
    std::vector<float> mean;
    std::vector<float> var;
    float eps = 1e-5f;
};

// Nominal multiply-accumulate counts of the integer dataflow: one FP MAC per
// depth block per kernel tap per output element, one INT MAC per weight per
// output element.
struct MacCounts {
    std::uint64_t int_macs = 0;
    std::uint64_t fp_macs = 0;
};

// A quantized convolution layer. Immutable after construction; forward passes
// only read layer state, so one layer may serve many threads. Construction
// validates shape consistency and the 32-bit accumulator guard, so forward
// passes can never overflow a block accumulator.
class DSConvLayer {
public:
    DSConvLayer(Vqk vqk, Kds kds, std::vector<float> bias, QuantConfig cfg, ConvParams params);

    const Vqk& vqk() const { return vqk_; }
    const Kds& kds() const { return kds_; }
    std::span<const float> bias() const { return bias_; }
    const QuantConfig& cfg() const { return cfg_; }
    const ConvParams& params() const { return params_; }

private:
    Vqk vqk_;
    Kds kds_;
    std::vector<float> bias_;
    QuantConfig cfg_;
    ConvParams params_;
};

// Integer-dominant convolution: per kernel tap and depth block, an integer
// dot product of VQK values against mantissas accumulated in 32 bits; the
// block result is scaled by scale * 2^exponent (exact power-of-two merge)
// and block results are summed in FP32 in fixed order (ascending block,
// then kernel row, then kernel column), bias added last. Equals
// fp_conv_reference on the dequantized weights and decoded activations up
// to FP summation-order error.
Tensor4D dsconv_forward(const DSConvLayer& layer, const BfpTensor& act, int threads = 1,
                        MacCounts* macs = nullptr);

// Folds batch normalization into the per-block scales and the bias:
// scale *= gamma/sqrt(var+eps), bias' = beta + gamma*(bias-mean)/sqrt(var+eps).
// The integer kernel is untouched.
std::pair<Kds, std::vector<float>> fold_bn(const Kds& kds, std::span<const float> bias,
                                           const BNParams& bn);
DSConvLayer fold_bn(const DSConvLayer& layer, const BNParams& bn);

struct RunOptions {
    int act_bits = 8;
    // The first layer's input is encoded as-is by default; it must already be
    // non-negative. Later layers always see a ReLU before encoding.
    bool relu_before_first = false;
    int threads = 1;
};

// Chains layers: ReLU (except optionally before the first), block-float
// encoding at each layer's block size, then the integer-path convolution.
Tensor4D run_model(std::span<const DSConvLayer> layers, const Tensor4D& input,
                   const RunOptions& opts = {}, MacCounts* macs = nullptr);

}  // namespace dsconv
