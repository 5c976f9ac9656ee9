"""Block-quantized convolution: integer kernels with per-block FP scales,
block-floating-point activations, and analytic cost models."""

from dsconv._dsconv import (
    ConfigError,
    DataError,
    DegenerateBlockError,
    Error,
    FormatError,
    Layer,
    ShapeError,
    bfp_decode,
    bfp_encode,
    dequantize,
    dsconv_forward,
    fold_bn,
    fold_bn_layer,
    fp_conv_reference,
    gaussian_tensor,
    kl_fit_scale,
    l2_fit_scale,
    load_model,
    load_tensor,
    mac_counts,
    max_speedup,
    memory_saving,
    quantize_block,
    quantize_weights,
    run_model,
    save_model,
    save_tensor,
    speed_ratio_threshold,
)

__all__ = [
    "ConfigError",
    "DataError",
    "DegenerateBlockError",
    "Error",
    "FormatError",
    "Layer",
    "ShapeError",
    "bfp_decode",
    "bfp_encode",
    "dequantize",
    "dsconv_forward",
    "fold_bn",
    "fold_bn_layer",
    "fp_conv_reference",
    "gaussian_tensor",
    "kl_fit_scale",
    "l2_fit_scale",
    "load_model",
    "load_tensor",
    "mac_counts",
    "max_speedup",
    "memory_saving",
    "quantize_block",
    "quantize_weights",
    "run_model",
    "save_model",
    "save_tensor",
    "speed_ratio_threshold",
]

__version__ = "0.1.0"
