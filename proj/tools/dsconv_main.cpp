// Command-line front end: quantization, inference, oracle comparison,
// batch-norm folding, cost reports, and synthetic tensor generation.
//
// Exit codes: 0 ok, 2 invalid configuration, 3 file/format problem,
// 4 shape mismatch, 5 comparison threshold exceeded.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dsconv/cost.hpp"
#include "dsconv/engine.hpp"
#include "dsconv/io.hpp"
#include "dsconv/synthetic.hpp"

namespace {

using dsconv::Shape4;
using dsconv::Tensor4D;

// Line-oriented report: aligned "key: value" text or "key=value" pairs.
class Report {
public:
    explicit Report(bool structured) : structured_(structured) {}

    void kv(const std::string& key, const std::string& value) const {
        if (structured_) {
            std::cout << key << "=" << value << "\n";
        } else {
            std::cout << "  " << key << ": " << value << "\n";
        }
    }
    void kv(const std::string& key, std::uint64_t value) const {
        kv(key, std::to_string(value));
    }
    void kv(const std::string& key, double value, const char* fmt = "%.6g") const {
        char buf[64];
        std::snprintf(buf, sizeof(buf), fmt, value);
        kv(key, std::string(buf));
    }
    void heading(const std::string& text) const {
        if (!structured_) {
            std::cout << text << "\n";
        }
    }

private:
    bool structured_;
};

std::string format_percent(double fraction) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3g%%", fraction * 100.0);
    return buf;
}

Shape4 parse_shape(const std::string& text) {
    std::array<std::int64_t, 4> dims{};
    std::size_t pos = 0;
    for (int i = 0; i < 4; ++i) {
        std::size_t used = 0;
        dims[static_cast<std::size_t>(i)] = std::stoll(text.substr(pos), &used);
        pos += used;
        if (i < 3) {
            if (pos >= text.size() || (text[pos] != ',' && text[pos] != 'x')) {
                throw dsconv::ConfigError("shape must be four extents like 8,16,3,3");
            }
            ++pos;
        }
    }
    if (pos != text.size()) {
        throw dsconv::ConfigError("shape must be four extents like 8,16,3,3");
    }
    return Shape4(dims[0], dims[1], dims[2], dims[3]);
}

double rel_rms(std::span<const float> a, std::span<const float> b) {
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        num += d * d;
        den += static_cast<double>(b[i]) * static_cast<double>(b[i]);
    }
    return den == 0.0 ? std::sqrt(num) : std::sqrt(num / den);
}

struct GenArgs {
    std::string shape;
    std::string output;
    std::uint64_t seed = 0;
    double mean = 0.0;
    double stddev = 1.0;
    bool nonneg = false;
};

int cmd_gen(const GenArgs& a, const Report& report) {
    const Shape4 shape = parse_shape(a.shape);
    const Tensor4D t = dsconv::gaussian_tensor(shape, a.seed, static_cast<float>(a.mean),
                                               static_cast<float>(a.stddev), a.nonneg);
    dsconv::write_tensor_file(a.output, t);
    report.kv("shape", shape.str());
    report.kv("seed", a.seed);
    report.kv("output", a.output);
    return 0;
}

struct QuantizeArgs {
    std::vector<std::string> inputs;
    std::string output;
    int bits = 4;
    std::int64_t block = 64;
    std::string mode = "l2";
    std::int64_t stride = 1;
    std::int64_t pad = 0;
    std::string name_prefix = "layer";
};

int cmd_quantize(const QuantizeArgs& a, const Report& report) {
    const dsconv::QuantConfig cfg{a.bits, a.block};
    cfg.validate();
    const dsconv::ScaleFit fit =
        (a.mode == "kl") ? dsconv::ScaleFit::KL : dsconv::ScaleFit::L2;
    const dsconv::ConvParams params{a.stride, a.stride, a.pad, a.pad};

    dsconv::Model model;
    for (std::size_t i = 0; i < a.inputs.size(); ++i) {
        const Tensor4D w = dsconv::read_tensor_file(a.inputs[i]);
        dsconv::QuantizedWeights q = dsconv::quantize_weights(w, cfg, fit);
        const Tensor4D back = dsconv::dequantize(q.vqk, q.kds, cfg);
        const std::string name = a.name_prefix + std::to_string(i);
        const std::vector<float> bias(static_cast<std::size_t>(w.shape()[0]), 0.0f);

        const dsconv::MacModel macs = dsconv::mac_counts(w.shape(), cfg.block, 1, 1);
        report.heading(name + " " + w.shape().str());
        report.kv(name + ".reconstruction_rms", rel_rms(back.values(), w.values()));
        report.kv(name + ".memory_saving",
                  format_percent(dsconv::memory_saving(w.shape()[1], cfg.block, cfg.bits)));
        report.kv(name + ".fp_macs_per_filter_pos",
                  std::to_string(macs.int_per_position) + " -> " +
                      std::to_string(macs.fp_per_position));
        model.layers.push_back(dsconv::Model::Layer{
            name, dsconv::DSConvLayer(std::move(q.vqk), std::move(q.kds), bias, cfg, params)});
    }
    dsconv::write_model_file(a.output, model);
    report.kv("output", a.output);
    return 0;
}

struct InferArgs {
    std::string model;
    std::string input;
    std::string output;
    int act_bits = 8;
    int threads = 1;
    bool relu_first = false;
};

int cmd_infer(const InferArgs& a, const Report& report) {
    const dsconv::Model model = dsconv::read_model_file(a.model);
    const Tensor4D x = dsconv::read_tensor_file(a.input);

    std::vector<dsconv::DSConvLayer> layers;
    layers.reserve(model.layers.size());
    for (const auto& entry : model.layers) {
        layers.push_back(entry.layer);
    }
    dsconv::MacCounts macs;
    const dsconv::RunOptions opts{a.act_bits, a.relu_first, a.threads};
    const Tensor4D y = dsconv::run_model(layers, x, opts, &macs);
    dsconv::write_tensor_file(a.output, y);

    report.kv("layers", static_cast<std::uint64_t>(layers.size()));
    report.kv("output_shape", y.shape().str());
    report.kv("int_macs", macs.int_macs);
    report.kv("fp_macs", macs.fp_macs);
    report.kv("output", a.output);
    return 0;
}

struct CompareArgs {
    std::string model;
    std::vector<std::string> weights;
    std::string input;
    int act_bits = 8;
    bool relu_first = false;
    std::optional<double> max_rms;     // bound on the dataflow (oracle) error
    std::optional<double> max_fp_rms;  // bound on the quantization error
};

int cmd_compare(const CompareArgs& a, const Report& report) {
    const dsconv::Model model = dsconv::read_model_file(a.model);
    const Tensor4D input = dsconv::read_tensor_file(a.input);
    if (!a.weights.empty() && a.weights.size() != model.layers.size()) {
        throw dsconv::ShapeError("need one FP weight file per model layer");
    }

    // Quantized pipeline and its per-layer FP oracle (decoded activations,
    // dequantized weights) advance together so the comparison isolates the
    // integer dataflow from the quantization error itself.
    Tensor4D quant = input;
    Tensor4D oracle = input;
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        const dsconv::DSConvLayer& layer = model.layers[i].layer;
        const bool apply_relu = (i > 0) || a.relu_first;
        const Tensor4D q_in = apply_relu ? dsconv::relu(quant) : quant;
        const Tensor4D o_in = apply_relu ? dsconv::relu(oracle) : oracle;

        const dsconv::BfpTensor q_enc =
            dsconv::bfp_encode_tensor(q_in, a.act_bits, layer.cfg().block);
        quant = dsconv::dsconv_forward(layer, q_enc);

        const dsconv::BfpTensor o_enc =
            dsconv::bfp_encode_tensor(o_in, a.act_bits, layer.cfg().block);
        const Tensor4D dequant = dsconv::dequantize(layer.vqk(), layer.kds(), layer.cfg());
        oracle = dsconv::fp_conv_reference(dsconv::bfp_decode(o_enc), dequant, layer.bias(),
                                           layer.params());
    }
    const double oracle_rms = rel_rms(quant.values(), oracle.values());
    report.kv("oracle_rms", oracle_rms, "%.3e");

    // Optional end-to-end comparison against the original FP weights; this
    // measures the quantization error, not the dataflow.
    std::optional<double> fp_rms;
    if (!a.weights.empty()) {
        Tensor4D fp = input;
        for (std::size_t i = 0; i < model.layers.size(); ++i) {
            const Tensor4D w = dsconv::read_tensor_file(a.weights[i]);
            const bool apply_relu = (i > 0) || a.relu_first;
            const Tensor4D x = apply_relu ? dsconv::relu(fp) : fp;
            fp = dsconv::fp_conv_reference(x, w, model.layers[i].layer.bias(),
                                           model.layers[i].layer.params());
        }
        fp_rms = rel_rms(quant.values(), fp.values());
        report.kv("fp_rms", *fp_rms, "%.3e");
    }

    if (a.max_rms && oracle_rms > *a.max_rms) {
        std::cerr << "oracle RMS " << oracle_rms << " exceeds threshold " << *a.max_rms
                  << "\n";
        return 5;
    }
    if (a.max_fp_rms) {
        if (!fp_rms) {
            throw dsconv::ConfigError("--max-fp-rms needs the FP weight files (-w)");
        }
        if (*fp_rms > *a.max_fp_rms) {
            std::cerr << "FP RMS " << *fp_rms << " exceeds threshold " << *a.max_fp_rms
                      << "\n";
            return 5;
        }
    }
    return 0;
}

struct CostArgs {
    std::int64_t ci = 0;
    std::int64_t block = 0;
    int bits = 0;
    double eta = 0.0;
    std::int64_t co = 1;
    std::int64_t kh = 1;
    std::int64_t kw = 1;
    std::int64_t oh = 1;
    std::int64_t ow = 1;
};

int cmd_cost(const CostArgs& a, const Report& report) {
    const dsconv::CostReport r = dsconv::cost_report(Shape4(a.co, a.ci, a.kh, a.kw), a.block,
                                                     a.bits, a.eta, a.oh, a.ow);
    report.kv("memory_saving", format_percent(r.memory_saving));
    report.kv("speed_ratio_threshold", r.speed_ratio_threshold, "%.3f");
    report.kv("max_speedup", r.max_speedup, "%.6g");
    report.kv("int_macs_per_filter_pos", r.macs.int_per_position);
    report.kv("fp_macs_per_filter_pos", r.macs.fp_per_position);
    report.kv("int_macs_total", r.macs.int_total);
    report.kv("fp_macs_total", r.macs.fp_total);
    return 0;
}

struct FoldBnArgs {
    std::string model;
    std::string bn;
    std::string output;
    std::string layer = "0";
};

dsconv::BNParams load_bn_params(const std::string& path) {
    std::ifstream is(path);
    if (!is) {
        throw dsconv::FormatError("cannot open " + path);
    }
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw dsconv::FormatError("invalid BN parameter file " + path + ": " + e.what());
    }
    dsconv::BNParams bn;
    try {
        bn.gamma = j.at("gamma").get<std::vector<float>>();
        bn.beta = j.at("beta").get<std::vector<float>>();
        bn.mean = j.at("mean").get<std::vector<float>>();
        bn.var = j.at("var").get<std::vector<float>>();
        bn.eps = j.value("eps", 1e-5f);
    } catch (const nlohmann::json::exception& e) {
        throw dsconv::FormatError("invalid BN parameter file " + path + ": " + e.what());
    }
    return bn;
}

int cmd_fold_bn(const FoldBnArgs& a, const Report& report) {
    dsconv::Model model = dsconv::read_model_file(a.model);
    const dsconv::BNParams bn = load_bn_params(a.bn);

    std::size_t index = model.layers.size();
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        if (model.layers[i].name == a.layer || std::to_string(i) == a.layer) {
            index = i;
            break;
        }
    }
    if (index == model.layers.size()) {
        throw dsconv::ConfigError("no layer named '" + a.layer + "' in " + a.model);
    }
    model.layers[index].layer = dsconv::fold_bn(model.layers[index].layer, bn);
    dsconv::write_model_file(a.output, model);
    report.kv("folded_layer", model.layers[index].name);
    report.kv("output", a.output);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Block-quantized convolution toolkit: integer kernels with "
                 "per-block FP scales, block-floating-point activations, and "
                 "analytic cost models"};
    app.require_subcommand(1);
    std::string format = "text";
    app.add_option("--format", format, "Report format")
        ->check(CLI::IsMember({"text", "structured"}));

    GenArgs gen;
    CLI::App* gen_cmd = app.add_subcommand("gen", "Generate a seeded Gaussian tensor file");
    gen_cmd->add_option("--shape", gen.shape, "Extents d0,d1,d2,d3")->required();
    gen_cmd->add_option("-o,--output", gen.output, "Output tensor file")->required();
    gen_cmd->add_option("--seed", gen.seed, "RNG seed");
    gen_cmd->add_option("--mean", gen.mean, "Gaussian mean");
    gen_cmd->add_option("--stddev", gen.stddev, "Gaussian standard deviation");
    gen_cmd->add_flag("--nonneg", gen.nonneg, "Fold to absolute values (activation domain)");

    QuantizeArgs quant;
    CLI::App* quant_cmd =
        app.add_subcommand("quantize", "Split FP32 weights into integer kernel plus scales");
    quant_cmd->add_option("-i,--input", quant.inputs, "FP32 weight tensor file(s)")
        ->required();
    quant_cmd->add_option("-o,--output", quant.output, "Output model file")->required();
    quant_cmd->add_option("-b,--bits", quant.bits, "Integer bit width (2..8)");
    quant_cmd->add_option("-B,--block", quant.block, "Depth block size");
    quant_cmd->add_option("--mode", quant.mode, "Scale fit: l2 or kl")
        ->check(CLI::IsMember({"l2", "kl"}));
    quant_cmd->add_option("--stride", quant.stride, "Convolution stride");
    quant_cmd->add_option("--pad", quant.pad, "Zero padding");
    quant_cmd->add_option("--name", quant.name_prefix, "Layer name prefix");

    InferArgs infer;
    CLI::App* infer_cmd = app.add_subcommand("infer", "Run the integer-path convolution");
    infer_cmd->add_option("-m,--model", infer.model, "Model file")->required();
    infer_cmd->add_option("-i,--input", infer.input, "Input tensor file")->required();
    infer_cmd->add_option("-o,--output", infer.output, "Output tensor file")->required();
    infer_cmd->add_option("--act-bits", infer.act_bits, "Activation mantissa width (2..8)");
    infer_cmd->add_option("--threads", infer.threads, "Worker threads");
    infer_cmd->add_flag("--relu-first", infer.relu_first, "Apply ReLU before the first layer");

    CompareArgs cmp;
    CLI::App* cmp_cmd =
        app.add_subcommand("compare", "Compare the integer path against the FP oracle");
    cmp_cmd->add_option("-m,--model", cmp.model, "Model file")->required();
    cmp_cmd->add_option("-w,--weights", cmp.weights, "Original FP32 weight file(s)");
    cmp_cmd->add_option("-i,--input", cmp.input, "Input tensor file")->required();
    cmp_cmd->add_option("--act-bits", cmp.act_bits, "Activation mantissa width (2..8)");
    cmp_cmd->add_flag("--relu-first", cmp.relu_first, "Apply ReLU before the first layer");
    double max_rms = 0.0;
    CLI::Option* max_rms_opt =
        cmp_cmd->add_option("--max-rms", max_rms, "Fail (exit 5) when oracle RMS exceeds this");
    double max_fp_rms = 0.0;
    CLI::Option* max_fp_rms_opt = cmp_cmd->add_option(
        "--max-fp-rms", max_fp_rms, "Fail (exit 5) when the RMS against the FP weights exceeds this");

    CostArgs cost;
    CLI::App* cost_cmd = app.add_subcommand("cost", "Analytic memory and MAC models");
    cost_cmd->add_option("ci", cost.ci, "Input channel count")->required();
    cost_cmd->add_option("block", cost.block, "Depth block size")->required();
    cost_cmd->add_option("bits", cost.bits, "Integer bit width")->required();
    cost_cmd->add_option("--eta", cost.eta, "Overhead (ideality) parameter");
    cost_cmd->add_option("--co", cost.co, "Filter count");
    cost_cmd->add_option("--kh", cost.kh, "Kernel height");
    cost_cmd->add_option("--kw", cost.kw, "Kernel width");
    cost_cmd->add_option("--oh", cost.oh, "Output height");
    cost_cmd->add_option("--ow", cost.ow, "Output width");

    FoldBnArgs fold;
    CLI::App* fold_cmd =
        app.add_subcommand("fold-bn", "Fold batch-norm parameters into scales and bias");
    fold_cmd->add_option("-m,--model", fold.model, "Model file")->required();
    fold_cmd->add_option("--bn", fold.bn, "BN parameter JSON file")->required();
    fold_cmd->add_option("-o,--output", fold.output, "Output model file")->required();
    fold_cmd->add_option("--layer", fold.layer, "Layer name or index (default 0)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    const Report report(format == "structured");
    if (max_rms_opt->count() > 0) {
        cmp.max_rms = max_rms;
    }
    if (max_fp_rms_opt->count() > 0) {
        cmp.max_fp_rms = max_fp_rms;
    }

    try {
        if (gen_cmd->parsed()) return cmd_gen(gen, report);
        if (quant_cmd->parsed()) return cmd_quantize(quant, report);
        if (infer_cmd->parsed()) return cmd_infer(infer, report);
        if (cmp_cmd->parsed()) return cmd_compare(cmp, report);
        if (cost_cmd->parsed()) return cmd_cost(cost, report);
        if (fold_cmd->parsed()) return cmd_fold_bn(fold, report);
    } catch (const dsconv::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const dsconv::DegenerateBlockError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const dsconv::FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const dsconv::ValueError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const dsconv::ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
