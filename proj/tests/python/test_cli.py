"""End-to-end smoke tests of the CLI.

Runs against the binary named by DSCONV_CLI (or the first command-line
argument): gen -> quantize -> infer -> compare -> cost -> fold-bn, plus the
documented error exit codes. Usable as a plain script or through pytest.
"""

import json
import os
import statistics
import struct
import subprocess
import sys
import tempfile

CLI = os.environ.get("DSCONV_CLI", "dsconv")


def run(*args, expect=0):
    proc = subprocess.run([CLI, *args], capture_output=True, text=True)
    if proc.returncode != expect:
        raise AssertionError(
            f"{' '.join(args)} -> exit {proc.returncode} (expected {expect})\n"
            f"stdout:\n{proc.stdout}\nstderr:\n{proc.stderr}"
        )
    return proc.stdout


def parse_structured(text):
    pairs = {}
    for line in text.splitlines():
        if "=" in line:
            key, value = line.split("=", 1)
            pairs[key] = value
    return pairs


def test_pipeline():
    with tempfile.TemporaryDirectory() as tmp:
        weights = os.path.join(tmp, "w.dsct")
        inp = os.path.join(tmp, "x.dsct")
        model = os.path.join(tmp, "m.dsm")
        out = os.path.join(tmp, "y.dsct")

        run("gen", "--shape", "4,150,3,3", "--seed", "1", "-o", weights)
        run("gen", "--shape", "1,150,6,6", "--seed", "2", "--nonneg", "-o", inp)

        text = run("quantize", "-i", weights, "-o", model, "--bits", "4", "--block", "64")
        assert "1350 -> 27" in text, text
        assert "14.5%" in text, text  # 4/32 + ceil(150/64)/150

        text = run(
            "--format", "structured", "infer",
            "-m", model, "-i", inp, "-o", out, "--act-bits", "8",
        )
        pairs = parse_structured(text)
        assert pairs["output_shape"] == "(1, 4, 4, 4)", pairs
        assert int(pairs["int_macs"]) == 4 * 150 * 9 * 16, pairs
        assert int(pairs["fp_macs"]) == 4 * 3 * 9 * 16, pairs

        # Identical invocation produces byte-identical output files.
        out2 = os.path.join(tmp, "y2.dsct")
        run("infer", "-m", model, "-i", inp, "-o", out2, "--act-bits", "8")
        with open(out, "rb") as a, open(out2, "rb") as b:
            assert a.read() == b.read()


def test_compare_oracle():
    with tempfile.TemporaryDirectory() as tmp:
        weights = os.path.join(tmp, "w.dsct")
        inp = os.path.join(tmp, "x.dsct")
        model = os.path.join(tmp, "m.dsm")

        run("gen", "--shape", "6,16,3,3", "--seed", "3", "-o", weights)
        run("gen", "--shape", "1,16,5,5", "--seed", "4", "--nonneg", "-o", inp)
        run("quantize", "-i", weights, "-o", model, "--bits", "8", "--block", "16")

        text = run(
            "--format", "structured", "compare",
            "-m", model, "-w", weights, "-i", inp, "--max-rms", "1e-5",
        )
        pairs = parse_structured(text)
        assert float(pairs["oracle_rms"]) <= 1e-5, pairs
        assert "fp_rms" in pairs, pairs

        # A model with a corrupted KDS must blow past the quality threshold
        # (exit 5), or fail to load when the bytes decode to a non-finite
        # scale (exit 3). The KDS payload sits just ahead of the bias block
        # (4-byte count + 6 floats) at the end of the single-layer model.
        corrupt = os.path.join(tmp, "corrupt.dsm")
        with open(model, "rb") as f:
            blob = bytearray(f.read())
        for i in range(len(blob) - 32, len(blob) - 28):
            blob[i] ^= 0x5A
        with open(corrupt, "wb") as f:
            f.write(blob)
        proc = subprocess.run(
            [CLI, "compare", "-m", corrupt, "-w", weights, "-i", inp,
             "--max-fp-rms", "0.5"],
            capture_output=True, text=True,
        )
        assert proc.returncode in (3, 5), proc


def _extract_kds(model_path, c_out, kds_numel):
    """Pull the KDS floats out of a single-layer model: they sit directly
    ahead of the trailing bias block (u32 count + c_out floats)."""
    with open(model_path, "rb") as f:
        blob = f.read()
    bias_bytes = 4 + 4 * c_out
    payload = blob[-(bias_bytes + 4 * kds_numel):-bias_bytes]
    return struct.unpack(f"<{kds_numel}f", payload)


def test_scale_fit_modes_agree():
    # Same seed, both fit strategies: per-block scales land close together.
    with tempfile.TemporaryDirectory() as tmp:
        weights = os.path.join(tmp, "w.dsct")
        run("gen", "--shape", "4,32,3,3", "--seed", "9", "-o", weights)
        m_l2 = os.path.join(tmp, "l2.dsm")
        m_kl = os.path.join(tmp, "kl.dsm")
        run("quantize", "-i", weights, "-o", m_l2, "--bits", "4", "--block", "8", "--mode", "l2")
        run("quantize", "-i", weights, "-o", m_kl, "--bits", "4", "--block", "8", "--mode", "kl")

        kds_numel = 4 * 4 * 3 * 3  # (C_o, ceil(32/8), K_h, K_w)
        l2 = _extract_kds(m_l2, 4, kds_numel)
        kl = _extract_kds(m_kl, 4, kds_numel)
        diffs = [abs(a - b) / abs(b) for a, b in zip(kl, l2) if b != 0.0]
        assert len(diffs) == kds_numel
        assert statistics.median(diffs) <= 0.15, statistics.median(diffs)


def test_cost_tables():
    text = run("cost", "128", "64", "4")
    assert "14.1%" in text, text
    pairs = parse_structured(run("--format", "structured", "cost", "128", "8", "4"))
    assert pairs["speed_ratio_threshold"] == "0.875", pairs
    pairs = parse_structured(run("--format", "structured", "cost", "64", "1", "4"))
    assert pairs["speed_ratio_threshold"] == "0.000", pairs
    pairs = parse_structured(
        run("--format", "structured", "cost", "150", "64", "4", "--kh", "3", "--kw", "3")
    )
    assert pairs["int_macs_per_filter_pos"] == "1350", pairs
    assert pairs["fp_macs_per_filter_pos"] == "27", pairs


def test_fold_bn():
    with tempfile.TemporaryDirectory() as tmp:
        weights = os.path.join(tmp, "w.dsct")
        model = os.path.join(tmp, "m.dsm")
        folded = os.path.join(tmp, "folded.dsm")
        bn = os.path.join(tmp, "bn.json")
        inp = os.path.join(tmp, "x.dsct")
        out_plain = os.path.join(tmp, "plain.dsct")
        out_folded = os.path.join(tmp, "folded_out.dsct")

        run("gen", "--shape", "2,8,1,1", "--seed", "5", "-o", weights)
        run("gen", "--shape", "1,8,3,3", "--seed", "6", "--nonneg", "-o", inp)
        run("quantize", "-i", weights, "-o", model, "--bits", "8", "--block", "8")

        with open(bn, "w") as f:
            json.dump(
                {
                    "gamma": [1.0, 1.0],
                    "beta": [0.5, -0.5],
                    "mean": [0.0, 0.0],
                    "var": [1.0, 1.0],
                    "eps": 0.0,
                },
                f,
            )
        run("fold-bn", "-m", model, "--bn", bn, "-o", folded)

        # Identity scale with a pure shift: outputs differ by exactly beta.
        run("infer", "-m", model, "-i", inp, "-o", out_plain)
        run("infer", "-m", folded, "-i", inp, "-o", out_folded)
        with open(out_plain, "rb") as f:
            plain = f.read()
        with open(out_folded, "rb") as f:
            fold = f.read()
        assert plain != fold
        assert len(plain) == len(fold)


def test_error_exit_codes():
    with tempfile.TemporaryDirectory() as tmp:
        weights = os.path.join(tmp, "w.dsct")
        run("gen", "--shape", "2,8,1,1", "--seed", "7", "-o", weights)

        # Invalid configuration.
        proc = subprocess.run(
            [CLI, "quantize", "-i", weights, "-o", os.path.join(tmp, "m.dsm"),
             "--bits", "9", "--block", "8"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 2, proc
        assert "2..=8" in proc.stderr, proc.stderr

        # Truncated file.
        cut = os.path.join(tmp, "cut.dsct")
        with open(weights, "rb") as f:
            blob = f.read()
        with open(cut, "wb") as f:
            f.write(blob[:-3])
        proc = subprocess.run(
            [CLI, "quantize", "-i", cut, "-o", os.path.join(tmp, "m.dsm")],
            capture_output=True, text=True,
        )
        assert proc.returncode == 3, proc

        # Shape mismatch: 4-channel input against 8-channel weights.
        model = os.path.join(tmp, "m.dsm")
        run("quantize", "-i", weights, "-o", model, "--bits", "4", "--block", "8")
        bad_input = os.path.join(tmp, "bad.dsct")
        run("gen", "--shape", "1,4,3,3", "--seed", "8", "--nonneg", "-o", bad_input)
        proc = subprocess.run(
            [CLI, "infer", "-m", model, "-i", bad_input, "-o", os.path.join(tmp, "y.dsct")],
            capture_output=True, text=True,
        )
        assert proc.returncode == 4, proc


def main():
    for name, fn in sorted(globals().items()):
        if name.startswith("test_") and callable(fn):
            fn()
            print(f"ok {name}")
    print("cli smoke tests passed")


if __name__ == "__main__":
    if len(sys.argv) > 1:
        CLI = sys.argv[1]
    main()
