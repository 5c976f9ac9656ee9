// Python bindings: numpy arrays in, numpy arrays out. Weight tensors are
// float32 (C_o, C_i, K_h, K_w); activations are float32 (1, C, H, W).

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <utility>
#include <vector>

#include "dsconv/cost.hpp"
#include "dsconv/engine.hpp"
#include "dsconv/io.hpp"
#include "dsconv/synthetic.hpp"

namespace py = pybind11;
using namespace dsconv;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using Int8Array = py::array_t<std::int8_t, py::array::c_style | py::array::forcecast>;
using UInt8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

Shape4 shape_of(const py::array& a) {
    if (a.ndim() != 4) {
        throw ShapeError("expected a rank-4 array");
    }
    return Shape4(a.shape(0), a.shape(1), a.shape(2), a.shape(3));
}

Tensor4D to_tensor(const FloatArray& a) {
    const Shape4 shape = shape_of(a);
    const float* p = a.data();
    return Tensor4D(shape, std::vector<float>(p, p + shape.numel()));
}

py::array_t<float> from_tensor(const Tensor4D& t) {
    const Shape4& s = t.shape();
    py::array_t<float> a({s[0], s[1], s[2], s[3]});
    std::copy(t.values().begin(), t.values().end(), a.mutable_data());
    return a;
}

template <typename T, typename Array>
std::vector<T> to_vector(const Array& a) {
    return std::vector<T>(a.data(), a.data() + a.size());
}

Vqk to_vqk(const Int8Array& a) {
    return Vqk{shape_of(a), to_vector<std::int8_t>(a)};
}

Kds to_kds(const FloatArray& a) {
    return Kds{shape_of(a), to_vector<float>(a)};
}

template <typename T>
py::array_t<T> rank4_array(const Shape4& s, const std::vector<T>& data) {
    py::array_t<T> a({s[0], s[1], s[2], s[3]});
    std::copy(data.begin(), data.end(), a.mutable_data());
    return a;
}

ConvParams make_params(std::pair<std::int64_t, std::int64_t> stride,
                       std::pair<std::int64_t, std::int64_t> pad) {
    return ConvParams{stride.first, stride.second, pad.first, pad.second};
}

BfpTensor make_bfp(const UInt8Array& mantissa, const Int8Array& exponent, int bits,
                   std::int64_t block) {
    BfpTensor t{bits,
                block,
                shape_of(mantissa),
                shape_of(exponent),
                to_vector<std::uint8_t>(mantissa),
                to_vector<std::int8_t>(exponent)};
    return t;
}

ScaleFit parse_mode(const std::string& mode) {
    if (mode == "l2") return ScaleFit::L2;
    if (mode == "kl") return ScaleFit::KL;
    throw ConfigError("mode must be 'l2' or 'kl'");
}

}  // namespace

PYBIND11_MODULE(_dsconv, m) {
    m.doc() = "Block-quantized convolution: integer kernels with per-block FP "
              "scales and block-floating-point activations";

    const py::object base = py::register_exception<Error>(m, "Error");
    py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
    py::register_exception<ValueError>(m, "DataError", base.ptr());
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<DegenerateBlockError>(m, "DegenerateBlockError", base.ptr());
    py::register_exception<FormatError>(m, "FormatError", base.ptr());

    m.def(
        "fp_conv_reference",
        [](const FloatArray& input, const FloatArray& weights, const std::vector<float>& bias,
           std::pair<std::int64_t, std::int64_t> stride,
           std::pair<std::int64_t, std::int64_t> pad, int threads) {
            return from_tensor(fp_conv_reference(to_tensor(input), to_tensor(weights), bias,
                                                 make_params(stride, pad), threads));
        },
        py::arg("input"), py::arg("weights"), py::arg("bias"),
        py::arg("stride") = std::pair<std::int64_t, std::int64_t>{1, 1},
        py::arg("pad") = std::pair<std::int64_t, std::int64_t>{0, 0}, py::arg("threads") = 1,
        "Direct full-precision convolution (the correctness oracle).");

    m.def(
        "quantize_weights",
        [](const FloatArray& weights, int bits, std::int64_t block, const std::string& mode) {
            const QuantizedWeights q =
                quantize_weights(to_tensor(weights), QuantConfig{bits, block}, parse_mode(mode));
            return py::make_tuple(rank4_array(q.vqk.shape, q.vqk.data),
                                  rank4_array(q.kds.shape, q.kds.data));
        },
        py::arg("weights"), py::arg("bits"), py::arg("block"), py::arg("mode") = "l2",
        "Split weights into an int8 kernel and per-block scales (VQK, KDS).");

    m.def(
        "dequantize",
        [](const Int8Array& vqk, const FloatArray& kds, int bits, std::int64_t block) {
            return from_tensor(dequantize(to_vqk(vqk), to_kds(kds), QuantConfig{bits, block}));
        },
        py::arg("vqk"), py::arg("kds"), py::arg("bits"), py::arg("block"),
        "Reconstruct weights as scale * integer.");

    m.def(
        "quantize_block",
        [](const std::vector<float>& w, int bits) {
            const BlockQuant q = quantize_block(w, bits);
            py::array_t<std::int8_t> wq(static_cast<py::ssize_t>(q.wq.size()));
            std::copy(q.wq.begin(), q.wq.end(), wq.mutable_data());
            return py::make_tuple(wq, q.scale);
        },
        py::arg("w"), py::arg("bits"), "Quantize one depth block; returns (wq, scale).");

    m.def(
        "l2_fit_scale",
        [](const std::vector<float>& w, const std::vector<std::int8_t>& wq) {
            return l2_fit_scale(w, wq);
        },
        py::arg("w"), py::arg("wq"));

    m.def(
        "kl_fit_scale",
        [](const std::vector<float>& w, const std::vector<std::int8_t>& wq) {
            return kl_fit_scale(w, wq);
        },
        py::arg("w"), py::arg("wq"));

    m.def(
        "bfp_encode",
        [](const FloatArray& x, int bits, std::int64_t block) {
            const BfpTensor t = bfp_encode_tensor(to_tensor(x), bits, block);
            return py::make_tuple(rank4_array(t.shape, t.mantissa),
                                  rank4_array(t.exp_shape, t.exponent));
        },
        py::arg("x"), py::arg("bits"), py::arg("block"),
        "Block-floating-point encode; returns (mantissa, exponent).");

    m.def(
        "bfp_decode",
        [](const UInt8Array& mantissa, const Int8Array& exponent, int bits,
           std::int64_t block) {
            return from_tensor(bfp_decode(make_bfp(mantissa, exponent, bits, block)));
        },
        py::arg("mantissa"), py::arg("exponent"), py::arg("bits"), py::arg("block"));

    py::class_<DSConvLayer>(m, "Layer",
                            "A quantized convolution layer: integer kernel, per-block "
                            "scales, bias, and convolution parameters. Immutable.")
        .def(py::init([](const Int8Array& vqk, const FloatArray& kds,
                         const std::vector<float>& bias, int bits, std::int64_t block,
                         std::pair<std::int64_t, std::int64_t> stride,
                         std::pair<std::int64_t, std::int64_t> pad) {
                 return DSConvLayer(to_vqk(vqk), to_kds(kds), bias, QuantConfig{bits, block},
                                    make_params(stride, pad));
             }),
             py::arg("vqk"), py::arg("kds"), py::arg("bias"), py::arg("bits"),
             py::arg("block"), py::arg("stride") = std::pair<std::int64_t, std::int64_t>{1, 1},
             py::arg("pad") = std::pair<std::int64_t, std::int64_t>{0, 0})
        .def_property_readonly(
            "vqk", [](const DSConvLayer& l) { return rank4_array(l.vqk().shape, l.vqk().data); })
        .def_property_readonly(
            "kds", [](const DSConvLayer& l) { return rank4_array(l.kds().shape, l.kds().data); })
        .def_property_readonly(
            "bias",
            [](const DSConvLayer& l) {
                return std::vector<float>(l.bias().begin(), l.bias().end());
            })
        .def_property_readonly("bits", [](const DSConvLayer& l) { return l.cfg().bits; })
        .def_property_readonly("block", [](const DSConvLayer& l) { return l.cfg().block; })
        .def_property_readonly("stride",
                               [](const DSConvLayer& l) {
                                   return std::make_pair(l.params().stride_h,
                                                         l.params().stride_w);
                               })
        .def_property_readonly("pad", [](const DSConvLayer& l) {
            return std::make_pair(l.params().pad_h, l.params().pad_w);
        });

    m.def(
        "dsconv_forward",
        [](const DSConvLayer& layer, const UInt8Array& mantissa, const Int8Array& exponent,
           int act_bits, int threads) {
            MacCounts macs;
            const Tensor4D out = dsconv_forward(
                layer, make_bfp(mantissa, exponent, act_bits, layer.cfg().block), threads,
                &macs);
            return py::make_tuple(from_tensor(out),
                                  py::dict(py::arg("int_macs") = macs.int_macs,
                                           py::arg("fp_macs") = macs.fp_macs));
        },
        py::arg("layer"), py::arg("mantissa"), py::arg("exponent"), py::arg("act_bits") = 8,
        py::arg("threads") = 1, "Integer-path convolution; returns (output, mac_counts).");

    m.def(
        "run_model",
        [](const std::vector<DSConvLayer>& layers, const FloatArray& x, int act_bits,
           bool relu_first, int threads) {
            MacCounts macs;
            const Tensor4D out = run_model(layers, to_tensor(x),
                                           RunOptions{act_bits, relu_first, threads}, &macs);
            return py::make_tuple(from_tensor(out),
                                  py::dict(py::arg("int_macs") = macs.int_macs,
                                           py::arg("fp_macs") = macs.fp_macs));
        },
        py::arg("layers"), py::arg("x"), py::arg("act_bits") = 8,
        py::arg("relu_first") = false, py::arg("threads") = 1,
        "Chain layers (ReLU, BFP encode, integer convolution per layer).");

    m.def(
        "fold_bn_layer",
        [](const DSConvLayer& layer, const std::vector<float>& gamma,
           const std::vector<float>& beta, const std::vector<float>& mean,
           const std::vector<float>& var, float eps) {
            BNParams bn;
            bn.gamma = gamma;
            bn.beta = beta;
            bn.mean = mean;
            bn.var = var;
            bn.eps = eps;
            return fold_bn(layer, bn);
        },
        py::arg("layer"), py::arg("gamma"), py::arg("beta"), py::arg("mean"), py::arg("var"),
        py::arg("eps") = 1e-5f, "Fold batch-norm into a layer's scales and bias.");

    m.def(
        "load_model",
        [](const std::string& path) {
            const Model model = read_model_file(path);
            py::list out;
            for (const Model::Layer& entry : model.layers) {
                out.append(py::make_tuple(entry.name, entry.layer));
            }
            return out;
        },
        py::arg("path"), "Read a model file; returns [(name, Layer), ...].");
    m.def(
        "save_model",
        [](const std::string& path,
           const std::vector<std::pair<std::string, DSConvLayer>>& layers) {
            Model model;
            for (const auto& [name, layer] : layers) {
                model.layers.push_back(Model::Layer{name, layer});
            }
            write_model_file(path, model);
        },
        py::arg("path"), py::arg("layers"), "Write [(name, Layer), ...] as a model file.");

    m.def(
        "fold_bn",
        [](const FloatArray& kds, const std::vector<float>& bias,
           const std::vector<float>& gamma, const std::vector<float>& beta,
           const std::vector<float>& mean, const std::vector<float>& var, float eps) {
            BNParams bn;
            bn.gamma = gamma;
            bn.beta = beta;
            bn.mean = mean;
            bn.var = var;
            bn.eps = eps;
            auto [folded, folded_bias] = fold_bn(to_kds(kds), bias, bn);
            return py::make_tuple(rank4_array(folded.shape, folded.data), folded_bias);
        },
        py::arg("kds"), py::arg("bias"), py::arg("gamma"), py::arg("beta"), py::arg("mean"),
        py::arg("var"), py::arg("eps") = 1e-5f,
        "Fold batch-norm into the scales and bias; returns (kds, bias).");

    m.def("memory_saving", &memory_saving, py::arg("c_in"), py::arg("block"), py::arg("bits"),
          "Fraction of FP32 weight memory kept: bits/32 + ceil(C_i/B)/C_i.");
    m.def("speed_ratio_threshold", &speed_ratio_threshold, py::arg("c_in"), py::arg("block"),
          py::arg("eta") = 0.0);
    m.def("max_speedup", &max_speedup, py::arg("c_in"), py::arg("block"));
    m.def(
        "mac_counts",
        [](std::array<std::int64_t, 4> weights, std::int64_t block, std::int64_t out_h,
           std::int64_t out_w) {
            const MacModel mm = mac_counts(
                Shape4(weights[0], weights[1], weights[2], weights[3]), block, out_h, out_w);
            return py::dict(py::arg("int_per_position") = mm.int_per_position,
                            py::arg("fp_per_position") = mm.fp_per_position,
                            py::arg("int_total") = mm.int_total,
                            py::arg("fp_total") = mm.fp_total);
        },
        py::arg("weights_shape"), py::arg("block"), py::arg("out_h") = 1, py::arg("out_w") = 1);

    m.def(
        "gaussian_tensor",
        [](std::array<std::int64_t, 4> shape, std::uint64_t seed, float mean, float stddev,
           bool nonneg) {
            return from_tensor(gaussian_tensor(Shape4(shape[0], shape[1], shape[2], shape[3]),
                                               seed, mean, stddev, nonneg));
        },
        py::arg("shape"), py::arg("seed") = 0, py::arg("mean") = 0.0f,
        py::arg("stddev") = 1.0f, py::arg("nonneg") = false,
        "Seeded Gaussian tensor, matching the CLI generator.");

    m.def(
        "save_tensor",
        [](const std::string& path, const FloatArray& x) {
            write_tensor_file(path, to_tensor(x));
        },
        py::arg("path"), py::arg("x"), "Write a float32 tensor file.");
    m.def(
        "load_tensor", [](const std::string& path) { return from_tensor(read_tensor_file(path)); },
        py::arg("path"), "Read a float32 tensor file.");
}
