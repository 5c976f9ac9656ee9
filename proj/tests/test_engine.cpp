#include "doctest.h"

#include <cmath>
#include <cstring>

#include "dsconv/engine.hpp"
#include "dsconv/cost.hpp"
#include "dsconv/synthetic.hpp"
#include "support.hpp"

using namespace dsconv;
using testing_support::random_tensor;
using testing_support::rel_rms;

namespace {

DSConvLayer make_random_layer(const Shape4& wshape, const QuantConfig& cfg, std::uint32_t seed,
                              const ConvParams& params = {}) {
    const Tensor4D w = random_tensor(wshape, seed);
    QuantizedWeights q = quantize_weights(w, cfg);
    const std::vector<float> bias =
        testing_support::random_values(static_cast<std::size_t>(wshape[0]), seed + 1);
    return DSConvLayer(std::move(q.vqk), std::move(q.kds), bias, cfg, params);
}

// The FP oracle of the integer path: convolution of the decoded activations
// with the dequantized weights.
Tensor4D oracle_forward(const DSConvLayer& layer, const BfpTensor& act) {
    const Tensor4D w = dequantize(layer.vqk(), layer.kds(), layer.cfg());
    return fp_conv_reference(bfp_decode(act), w, layer.bias(), layer.params());
}

}  // namespace

TEST_CASE("layer construction validates shapes and values") {
    const QuantConfig cfg{4, 2};
    const Vqk vqk{Shape4(1, 4, 1, 1), {7, -3, 2, 0}};
    const Kds kds{Shape4(1, 2, 1, 1), {0.5f, 0.25f}};

    CHECK_NOTHROW(DSConvLayer(vqk, kds, {0.0f}, cfg, {}));
    CHECK_THROWS_AS(DSConvLayer(vqk, Kds{Shape4(1, 1, 1, 1), {0.5f}}, {0.0f}, cfg, {}),
                    ShapeError);
    CHECK_THROWS_AS(DSConvLayer(vqk, kds, {0.0f, 1.0f}, cfg, {}), ShapeError);
    CHECK_THROWS_AS(DSConvLayer(Vqk{Shape4(1, 4, 1, 1), {9, 0, 0, 0}}, kds, {0.0f}, cfg, {}),
                    ValueError);
    CHECK_THROWS_AS(DSConvLayer(vqk, kds, {0.0f}, QuantConfig{9, 2}, {}), ConfigError);
    CHECK_THROWS_AS(DSConvLayer(vqk, kds, {0.0f}, cfg, ConvParams{0, 1, 0, 0}), ConfigError);
}

TEST_CASE("layer construction enforces the accumulator guard") {
    // b=8 with a 2^16-deep block would need a 32-bit-plus accumulator.
    const std::int64_t c_in = 1 << 16;
    const QuantConfig cfg{8, c_in};
    Vqk vqk{Shape4(1, c_in, 1, 1),
            std::vector<std::int8_t>(static_cast<std::size_t>(c_in), 127)};
    Kds kds{Shape4(1, 1, 1, 1), {1.0f}};
    CHECK_THROWS_AS(DSConvLayer(std::move(vqk), std::move(kds), {0.0f}, cfg, {}), ConfigError);
}

TEST_CASE("forward: zero activations broadcast the bias") {
    const QuantConfig cfg{4, 4};
    DSConvLayer layer = make_random_layer(Shape4(3, 8, 3, 3), cfg, 11);
    const BfpTensor act = bfp_encode_tensor(Tensor4D::zeros(Shape4(1, 8, 5, 5)), 4, cfg.block);
    const Tensor4D out = dsconv_forward(layer, act);
    for (std::int64_t co = 0; co < 3; ++co) {
        for (std::int64_t oh = 0; oh < out.shape()[2]; ++oh) {
            for (std::int64_t ow = 0; ow < out.shape()[3]; ++ow) {
                CHECK(out(0, co, oh, ow) == layer.bias()[static_cast<std::size_t>(co)]);
            }
        }
    }
}

TEST_CASE("forward: single-block hand computation") {
    // wq=7, scale=0.5, mantissa=6, exponent=-1: 7*6 * 0.5*2^-1 = 42 * 0.25 = 10.5.
    const QuantConfig cfg{4, 1};
    DSConvLayer layer(Vqk{Shape4(1, 1, 1, 1), {7}}, Kds{Shape4(1, 1, 1, 1), {0.5f}}, {0.0f},
                      cfg, {});
    const BfpTensor act{3, 1, Shape4(1, 1, 1, 1), Shape4(1, 1, 1, 1), {6}, {-1}};
    const Tensor4D out = dsconv_forward(layer, act);
    CHECK(out(0, 0, 0, 0) == 10.5f);
    // Same value through the FP path: 3.5 * 3.0.
    CHECK(oracle_forward(layer, act)(0, 0, 0, 0) == 10.5f);
}

TEST_CASE("forward: matches the dequantize-then-convolve oracle") {
    const QuantConfig cfg{8, 16};
    DSConvLayer layer = make_random_layer(Shape4(8, 16, 3, 3), cfg, 21, ConvParams{1, 1, 1, 1});
    const Tensor4D x = random_tensor(Shape4(1, 16, 5, 5), 23, 0.0f, 2.0f);
    const BfpTensor act = bfp_encode_tensor(x, 8, cfg.block);
    const Tensor4D got = dsconv_forward(layer, act);
    const Tensor4D want = oracle_forward(layer, act);
    CHECK(rel_rms(got.values(), want.values()) <= 1e-5);
}

TEST_CASE("forward: partial trailing blocks align with the weight blocks") {
    const QuantConfig cfg{4, 4};
    DSConvLayer layer = make_random_layer(Shape4(2, 10, 1, 1), cfg, 31);
    const Tensor4D x = random_tensor(Shape4(1, 10, 3, 3), 33, 0.0f, 1.0f);
    const BfpTensor act = bfp_encode_tensor(x, 6, cfg.block);
    const Tensor4D got = dsconv_forward(layer, act);
    const Tensor4D want = oracle_forward(layer, act);
    CHECK(rel_rms(got.values(), want.values()) <= 1e-5);
}

TEST_CASE("forward: rejects mismatched activations") {
    const QuantConfig cfg{4, 4};
    DSConvLayer layer = make_random_layer(Shape4(2, 8, 1, 1), cfg, 41);
    const Tensor4D x = random_tensor(Shape4(1, 8, 2, 2), 42, 0.0f, 1.0f);
    CHECK_THROWS_AS(dsconv_forward(layer, bfp_encode_tensor(x, 4, 8)), ShapeError);

    const Tensor4D wrong_c = random_tensor(Shape4(1, 6, 2, 2), 43, 0.0f, 1.0f);
    CHECK_THROWS_AS(dsconv_forward(layer, bfp_encode_tensor(wrong_c, 4, 4)), ShapeError);

    BfpTensor wide = bfp_encode_tensor(random_tensor(Shape4(1, 8, 2, 2), 44, 0.0f, 1.0f), 4, 4);
    wide.mantissa[0] = 200;  // outside the declared 4-bit range
    CHECK_THROWS_AS(dsconv_forward(layer, wide), ValueError);
}

TEST_CASE("forward: MAC counters equal the analytic model") {
    const QuantConfig cfg{4, 16};
    const Shape4 wshape(5, 37, 3, 3);
    DSConvLayer layer = make_random_layer(wshape, cfg, 51, ConvParams{1, 1, 1, 1});
    const Tensor4D x = random_tensor(Shape4(1, 37, 7, 6), 52, 0.0f, 1.0f);
    MacCounts macs;
    const Tensor4D out = dsconv_forward(layer, bfp_encode_tensor(x, 4, cfg.block), 1, &macs);

    const MacModel model = mac_counts(wshape, cfg.block, out.shape()[2], out.shape()[3]);
    CHECK(macs.int_macs == model.int_total);
    CHECK(macs.fp_macs == model.fp_total);
}

TEST_CASE("forward: byte-identical across thread counts") {
    const QuantConfig cfg{8, 16};
    DSConvLayer layer = make_random_layer(Shape4(9, 16, 3, 3), cfg, 61, ConvParams{1, 1, 1, 1});
    const Tensor4D x = random_tensor(Shape4(1, 16, 6, 6), 62, 0.0f, 2.0f);
    const BfpTensor act = bfp_encode_tensor(x, 8, cfg.block);
    const Tensor4D a = dsconv_forward(layer, act, 1);
    const Tensor4D b = dsconv_forward(layer, act, 4);
    CHECK(std::memcmp(a.values().data(), b.values().data(),
                      a.values().size() * sizeof(float)) == 0);
}

TEST_CASE("forward: extreme magnitudes stay inside the 32-bit accumulator") {
    const std::int64_t c_in = 128;
    const QuantConfig cfg{8, 128};
    Vqk vqk{Shape4(1, c_in, 1, 1),
            std::vector<std::int8_t>(static_cast<std::size_t>(c_in), 127)};
    Kds kds{Shape4(1, 1, 1, 1), {1.0f}};
    DSConvLayer layer(std::move(vqk), std::move(kds), {0.0f}, cfg, {});
    const BfpTensor act{8, 128, Shape4(1, c_in, 1, 1), Shape4(1, 1, 1, 1),
                        std::vector<std::uint8_t>(static_cast<std::size_t>(c_in), 255),
                        {0}};
    const Tensor4D out = dsconv_forward(layer, act);
    CHECK(out(0, 0, 0, 0) == static_cast<float>(128.0 * 127.0 * 255.0));
}

TEST_CASE("exponent merge is exact power-of-two scaling") {
    // scale * 2^E via ldexp must equal the real product to the last bit.
    const float scales[] = {0.137681f, 0.5f, 1.0f, 3.25e-3f, 7.75e2f};
    for (float s : scales) {
        for (int e = -126; e <= 120; e += 7) {
            const float merged = std::ldexp(s, e);
            const double exact = static_cast<double>(s) * std::ldexp(1.0, e);
            if (std::fabs(exact) >= std::numeric_limits<float>::min() &&
                std::fabs(exact) <= std::numeric_limits<float>::max()) {
                CHECK(static_cast<double>(merged) == exact);
            }
        }
    }
}

TEST_CASE("fold_bn: identity parameters change nothing") {
    const Kds kds{Shape4(2, 3, 1, 1), {0.5f, 0.25f, -0.75f, 1.5f, 2.0f, 0.0f}};
    const std::vector<float> bias{0.125f, -2.0f};
    BNParams bn;
    bn.gamma = {1.0f, 1.0f};
    bn.beta = {0.0f, 0.0f};
    bn.mean = {0.0f, 0.0f};
    bn.var = {1.0f, 1.0f};
    bn.eps = 0.0f;
    const auto [folded, folded_bias] = fold_bn(kds, bias, bn);
    CHECK(folded.data == kds.data);
    CHECK(folded_bias == bias);
}

TEST_CASE("fold_bn: hand-applied fold") {
    const Kds kds{Shape4(1, 2, 1, 1), {0.5f, -0.25f}};
    BNParams bn;
    bn.gamma = {2.0f};
    bn.beta = {3.0f};
    bn.mean = {1.0f};
    bn.var = {4.0f};
    bn.eps = 0.0f;
    const auto [folded, folded_bias] = fold_bn(kds, std::vector<float>{0.0f}, bn);
    // factor = 2/sqrt(4) = 1: scales unchanged, bias = 3 - 2*1/2 = 2.
    CHECK(folded.data == kds.data);
    CHECK(folded_bias == std::vector<float>{2.0f});
}

TEST_CASE("fold_bn: validation") {
    const Kds kds{Shape4(2, 1, 1, 1), {0.5f, 0.25f}};
    BNParams bn;
    bn.gamma = {1.0f};  // wrong length
    bn.beta = {0.0f, 0.0f};
    bn.mean = {0.0f, 0.0f};
    bn.var = {1.0f, 1.0f};
    CHECK_THROWS_AS(fold_bn(kds, std::vector<float>{0.0f, 0.0f}, bn), ShapeError);

    bn.gamma = {1.0f, 1.0f};
    bn.var = {-1.0f, 1.0f};
    CHECK_THROWS_AS(fold_bn(kds, std::vector<float>{0.0f, 0.0f}, bn), ValueError);

    bn.var = {0.0f, 1.0f};
    bn.eps = 0.0f;  // zero variance with zero eps divides by zero
    CHECK_THROWS_AS(fold_bn(kds, std::vector<float>{0.0f, 0.0f}, bn), ValueError);
}

TEST_CASE("fold_bn: folded layer equals FP convolution followed by BN") {
    const QuantConfig cfg{8, 16};
    DSConvLayer layer = make_random_layer(Shape4(6, 16, 3, 3), cfg, 71, ConvParams{1, 1, 1, 1});
    BNParams bn;
    for (int o = 0; o < 6; ++o) {
        bn.gamma.push_back(0.5f + 0.3f * static_cast<float>(o));
        bn.beta.push_back(-0.2f + 0.1f * static_cast<float>(o));
        bn.mean.push_back(0.05f * static_cast<float>(o));
        bn.var.push_back(0.5f + 0.25f * static_cast<float>(o));
    }
    bn.eps = 1e-5f;

    const Tensor4D x = random_tensor(Shape4(1, 16, 5, 5), 72, 0.0f, 1.0f);
    const BfpTensor act = bfp_encode_tensor(x, 8, cfg.block);

    const Tensor4D conv = oracle_forward(layer, act);
    std::vector<float> want(conv.values().size());
    const std::int64_t per_channel = conv.shape()[2] * conv.shape()[3];
    for (std::int64_t co = 0; co < 6; ++co) {
        const auto o = static_cast<std::size_t>(co);
        const double f =
            static_cast<double>(bn.gamma[o]) / std::sqrt(static_cast<double>(bn.var[o]) + bn.eps);
        for (std::int64_t i = 0; i < per_channel; ++i) {
            const std::size_t idx = static_cast<std::size_t>(co * per_channel + i);
            want[idx] = static_cast<float>(
                f * (static_cast<double>(conv.values()[idx]) - bn.mean[o]) + bn.beta[o]);
        }
    }

    const DSConvLayer folded = fold_bn(layer, bn);
    const Tensor4D got = dsconv_forward(folded, act);
    CHECK(rel_rms(got.values(), want) <= 1e-4);
}

TEST_CASE("run_model: one layer reduces to encode plus forward") {
    const QuantConfig cfg{6, 8};
    DSConvLayer layer = make_random_layer(Shape4(4, 8, 3, 3), cfg, 81, ConvParams{1, 1, 1, 1});
    const Tensor4D x = random_tensor(Shape4(1, 8, 5, 5), 82, 0.0f, 1.0f);

    const std::vector<DSConvLayer> layers{layer};
    const Tensor4D got = run_model(layers, x, RunOptions{6, false, 1});
    const Tensor4D want = dsconv_forward(layer, bfp_encode_tensor(x, 6, cfg.block));
    CHECK(std::memcmp(got.values().data(), want.values().data(),
                      got.values().size() * sizeof(float)) == 0);
}

TEST_CASE("run_model: stacked identity layers stay near the input") {
    // 1x1 kernels with identity weights at b=8, B=1.
    const std::int64_t c = 3;
    std::vector<float> eye(static_cast<std::size_t>(c * c), 0.0f);
    for (std::int64_t i = 0; i < c; ++i) {
        eye[static_cast<std::size_t>(i * c + i)] = 1.0f;
    }
    const Tensor4D w(Shape4(c, c, 1, 1), eye);
    const QuantConfig cfg{8, 1};
    QuantizedWeights q1 = quantize_weights(w, cfg);
    QuantizedWeights q2 = quantize_weights(w, cfg);
    const std::vector<float> zero_bias(static_cast<std::size_t>(c), 0.0f);
    std::vector<DSConvLayer> layers;
    layers.emplace_back(std::move(q1.vqk), std::move(q1.kds), zero_bias, cfg, ConvParams{});
    layers.emplace_back(std::move(q2.vqk), std::move(q2.kds), zero_bias, cfg, ConvParams{});

    const Tensor4D x = random_tensor(Shape4(1, c, 6, 6), 91, 0.1f, 4.0f);
    const Tensor4D out = run_model(layers, x, RunOptions{8, false, 1});
    CHECK(rel_rms(out.values(), x.values()) < 0.01);
}

TEST_CASE("run_model: three quantized layers track the FP pipeline") {
    const std::vector<Shape4> shapes{Shape4(8, 16, 3, 3), Shape4(8, 8, 3, 3),
                                     Shape4(4, 8, 1, 1)};
    std::vector<DSConvLayer> layers;
    std::vector<Tensor4D> fp_weights;
    std::vector<std::vector<float>> biases;
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        const Tensor4D w = gaussian_tensor(shapes[i], 1000 + i, 0.0f, 0.25f);
        fp_weights.push_back(w);
        biases.push_back(testing_support::random_values(
            static_cast<std::size_t>(shapes[i][0]), static_cast<std::uint32_t>(2000 + i)));
        const QuantConfig layer_cfg{8, std::min<std::int64_t>(16, shapes[i][1])};
        QuantizedWeights q = quantize_weights(w, layer_cfg);
        const ConvParams p = (shapes[i][2] == 3) ? ConvParams{1, 1, 1, 1} : ConvParams{};
        layers.emplace_back(std::move(q.vqk), std::move(q.kds), biases[i], layer_cfg, p);
    }

    const Tensor4D x = random_tensor(Shape4(1, 16, 7, 7), 95, 0.0f, 1.0f);
    const Tensor4D got = run_model(layers, x, RunOptions{8, false, 1});

    Tensor4D want = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const Tensor4D cur = (i == 0) ? want : relu(want);
        want = fp_conv_reference(cur, fp_weights[i], biases[i], layers[i].params());
    }
    CHECK(rel_rms(got.values(), want.values()) < 0.01);
}
