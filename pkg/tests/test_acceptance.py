"""Acceptance suite: one test per release criterion, each printing a
pass line with its runtime budget.  Runs from committed fixture files only.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines as they complete.
"""

import json
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from quantcal.accuracy_aware import (STATUS_ALL_REVERTED,
                                     STATUS_REVERT_BUDGET_EXHAUSTED,
                                     AccuracyAwareConfig, accuracy_aware_quantize)
from quantcal.cli import main as cli_main
from quantcal.data import generate_fractal_dataset, load_image_dir
from quantcal.graph import forward
from quantcal.kernels import avgpool2d, conv2d, linear, maxpool2d
from quantcal.metrics import inception_score, score_dataset, top1_accuracy
from quantcal.model_io import load_model
from quantcal.quantize import (QuantConfig, activation_qparams_from_range,
                               default_quantize, fake_quantize)

from fixture_models import (grid_aligned_model, outlier_fixture_dataset,
                            outlier_fixture_model)
from oracles import avgpool2d_naive, conv2d_naive, linear_naive, maxpool2d_naive

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@contextmanager
def budget(name: str, seconds: float):
    start = time.perf_counter()
    yield
    elapsed = time.perf_counter() - start
    line = f"[acceptance] {name}: PASS ({elapsed:.2f}s < {seconds:.0f}s)"
    print(line)
    assert elapsed < seconds, f"{name} exceeded its {seconds}s runtime budget"


# ---------------------------------------------------------------------------

def test_quantization_roundtrip_properties():
    with budget("quantization-roundtrip", 1.0):
        rng = np.random.default_rng(42)
        for mn, mx in [(-1.0, 1.0), (0.0, 6.3), (-4.2, 0.0), (-0.013, 2.9), (5.0, 11.0)]:
            qp = activation_qparams_from_range(mn, mx)
            xs = rng.uniform(mn, mx, size=10_000).astype(np.float32)
            fq = fake_quantize(xs, qp)
            assert np.all(np.abs(xs - fq) <= qp.scale / 2 + 1e-7)
            # idempotence, exact
            np.testing.assert_array_equal(fake_quantize(fq, qp), fq)
            # monotonicity, exact
            order = np.argsort(xs, kind="stable")
            assert np.all(np.diff(fq[order]) >= 0)


def test_kernel_oracles_randomized():
    with budget("kernel-oracles", 10.0):
        rng = np.random.default_rng(7)
        checked = 0
        while checked < 100:
            kind = checked % 4
            stride = int(rng.integers(1, 3))
            padding = int(rng.integers(0, 2))
            k = int(rng.integers(1, 4))
            h = k + stride * int(rng.integers(0, 3)) - 2 * padding
            if h < 1:
                continue
            n, cin, cout = (int(rng.integers(1, 3)), int(rng.integers(1, 5)),
                            int(rng.integers(1, 5)))
            if kind == 0:
                x = rng.uniform(-1, 1, (n, cin, h, h)).astype(np.float32)
                w = rng.uniform(-1, 1, (cout, cin, k, k)).astype(np.float32)
                b = rng.uniform(-1, 1, cout).astype(np.float32)
                got = conv2d(x, w, b, stride, padding)
                want = conv2d_naive(x, w, b, stride, padding)
            elif kind == 1:
                f, o = int(rng.integers(1, 9)), int(rng.integers(1, 6))
                x = rng.uniform(-1, 1, (n, f)).astype(np.float32)
                w = rng.uniform(-1, 1, (o, f)).astype(np.float32)
                b = rng.uniform(-1, 1, o).astype(np.float32)
                got, want = linear(x, w, b), linear_naive(x, w, b)
            elif kind == 2:
                if padding * 2 > k:
                    continue
                x = rng.uniform(-1, 1, (n, cin, h, h)).astype(np.float32)
                got = maxpool2d(x, k, stride, padding)
                want = maxpool2d_naive(x, k, stride, padding)
            else:
                if padding * 2 > k:
                    continue
                x = rng.uniform(-1, 1, (n, cin, h, h)).astype(np.float32)
                got = avgpool2d(x, k, stride, padding)
                want = avgpool2d_naive(x, k, stride, padding)
            np.testing.assert_allclose(got, want, atol=1e-5)
            checked += 1


def test_grid_aligned_fixture_lossless():
    with budget("grid-aligned-fixture", 1.0):
        graph, sample = grid_aligned_model()
        qm = default_quantize(graph, [sample, sample], QuantConfig())
        batch = sample[None]
        fp32 = forward(graph, batch)
        quant = forward(qm.base, batch, quant=qm)
        assert np.max(np.abs(fp32 - quant)) <= 1e-6


def test_default_quantization_drop_on_committed_fixture():
    with budget("default-quantization-drop", 60.0):
        model = load_model(FIXTURES / "model" / "patch_cnn.json")
        calib = load_image_dir(FIXTURES / "calib")
        evald = load_image_dir(FIXTURES / "eval")
        assert len(calib) == 500
        qm = default_quantize(model, calib, QuantConfig())
        fp32 = top1_accuracy(qm.base, evald)
        quant = top1_accuracy(qm.base, evald, quant=qm)
        drop = (fp32 - quant) * 100
        print(f"  fp32 {fp32:.4f}  int8 {quant:.4f}  drop {drop:.3f} pp")
        assert drop <= 2.0


def test_accuracy_aware_soundness_on_outlier_fixture():
    with budget("accuracy-aware-soundness", 30.0):
        model = outlier_fixture_model()
        data = outlier_fixture_dataset()
        qm0 = default_quantize(model, data, QuantConfig())
        fp32 = top1_accuracy(qm0.base, data)
        broken = top1_accuracy(qm0.base, data, quant=qm0)
        assert (fp32 - broken) * 100 > 5.0

        # exhaustive single-revert oracle
        oracle = {name: top1_accuracy(qm0.base, data, quant=qm0.without_layers([name]))
                  for name in qm0.quantized_layers}
        assert max(oracle, key=oracle.get) == "conv2"

        qm, report = accuracy_aware_quantize(model, data,
                                             AccuracyAwareConfig(max_drop_pp=1.0))
        assert report.reverted_layers == ["conv2"]
        assert report.iterations == 1
        assert report.drop_pp <= 1.0


def test_fractal_non_recovery_analogue():
    with budget("fractal-non-recovery", 60.0):
        model = outlier_fixture_model()
        in_dist = outlier_fixture_dataset(n_per_class=40, seed=8)
        fractal = generate_fractal_dataset(66, 3, 8, seed=7)
        config = AccuracyAwareConfig(max_drop_pp=1.0)
        qm, report = accuracy_aware_quantize(model, fractal, config)
        # measured the way the experiment grid measures: on held-out real data
        fp32 = top1_accuracy(qm.base, in_dist)
        quant = top1_accuracy(qm.base, in_dist, quant=qm)
        eval_drop = (fp32 - quant) * 100
        exhausted = report.status in (STATUS_ALL_REVERTED,
                                      STATUS_REVERT_BUDGET_EXHAUSTED)
        print(f"  eval drop {eval_drop:.2f} pp, status {report.status}, "
              f"reverts {report.reverted_layers}")
        assert eval_drop > config.max_drop_pp or exhausted


def test_inception_score_analytics():
    with budget("inception-score-analytics", 5.0):
        res = inception_score(np.tile([0.25, 0.25, 0.25, 0.25], (16, 1)), splits=1)
        assert abs(res.mean - 1.0) <= 1e-9
        for k in (2, 7, 10):
            res = inception_score(np.tile(np.eye(k), (3, 1)), splits=1)
            assert abs(res.mean - k) <= 1e-6
        res = inception_score(np.asarray([[0.9, 0.1], [0.1, 0.9]]), splits=1)
        assert abs(res.mean - 1.44494) <= 1e-4
        rng = np.random.default_rng(3)
        for _ in range(1000):
            n = int(rng.integers(2, 24))
            k = int(rng.integers(2, 10))
            probs = rng.dirichlet(np.full(k, rng.uniform(0.3, 2.0)), size=n)
            mean = inception_score(probs, splits=1).mean
            assert 1.0 - 1e-9 <= mean <= k + 1e-6


def test_inception_score_ordering():
    with budget("inception-score-ordering", 60.0):
        classifier = load_model(FIXTURES / "model" / "patch_cnn.json")
        in_dist = load_image_dir(FIXTURES / "eval")
        fractal = generate_fractal_dataset(200, 10, 32, seed=77)
        score_real = score_dataset(classifier, in_dist, splits=1)
        score_fractal = score_dataset(classifier, fractal, splits=1)
        print(f"  IS in-distribution {score_real.mean:.3f} vs fractal {score_fractal.mean:.3f}")
        assert score_real.mean > score_fractal.mean


def test_matrix_reproducibility(tmp_path):
    with budget("matrix-reproducibility", 120.0):
        model = FIXTURES / "model" / "patch_cnn.json"
        args = ["matrix", "--model", str(model),
                "--calib", f"real={FIXTURES / 'calib'}",
                "--calib", "fractal=@gen:seed=7,count=100,classes=10,size=32",
                "--eval", str(FIXTURES / "eval"),
                "--max-drop", "1.0", "--seed", "5"]
        out1, out2 = tmp_path / "run1", tmp_path / "run2"
        assert cli_main(args + ["--out", str(out1)]) == 0
        assert cli_main(args + ["--out", str(out2)]) == 0
        assert (out1 / "report.json").read_bytes() == (out2 / "report.json").read_bytes()
        assert (out1 / "report.csv").read_bytes() == (out2 / "report.csv").read_bytes()
        rows = json.loads((out1 / "report.json").read_text())["rows"]
        assert {(r["dataset"], r["mode"]) for r in rows} == {
            ("real", "default"), ("real", "accuracy-aware"),
            ("fractal", "default"), ("fractal", "accuracy-aware")}
