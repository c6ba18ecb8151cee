"""Greedy layer-revert search checked against brute force on small fixtures."""

import numpy as np
import pytest

from quantcal.accuracy_aware import (STATUS_WITHIN_BUDGET, AccuracyAwareConfig,
                                     accuracy_aware_quantize)
from quantcal.data import Dataset, LabeledImage
from quantcal.errors import DataError
from quantcal.graph import ModelGraph
from quantcal.metrics import top1_accuracy
from quantcal.quantize import QuantConfig, default_quantize

from fixture_models import (linear_layer, outlier_fixture_dataset,
                            outlier_fixture_model)


def brute_force_best_single_revert(qm, dataset):
    """Exhaustively score every single-layer revert on the full dataset."""
    results = {}
    for name in qm.quantized_layers:
        results[name] = top1_accuracy(qm.base, dataset, quant=qm.without_layers([name]))
    return results


def test_outlier_layer_is_reverted_first():
    model = outlier_fixture_model()
    data = outlier_fixture_dataset()
    qm0 = default_quantize(model, data, QuantConfig())

    fp32 = top1_accuracy(qm0.base, data)
    broken = top1_accuracy(qm0.base, data, quant=qm0)
    assert fp32 == 1.0
    assert (fp32 - broken) * 100 > 5.0  # the fixture's premise

    oracle = brute_force_best_single_revert(qm0, data)
    assert max(oracle, key=oracle.get) == "conv2"

    qm, report = accuracy_aware_quantize(model, data,
                                         AccuracyAwareConfig(max_drop_pp=1.0))
    assert report.reverted_layers == ["conv2"]
    assert report.iterations == 1
    assert report.drop_pp <= 1.0
    assert report.status == STATUS_WITHIN_BUDGET
    assert set(qm.quantized_layers) == {"conv1", "fc"}
    # report invariant: drop is exactly the accuracy difference in pp
    assert abs(report.drop_pp - (report.fp32_accuracy - report.quantized_accuracy) * 100) < 1e-9


def test_zero_reverts_when_within_budget():
    model = outlier_fixture_model(outlier=1.0)  # benign weights
    data = outlier_fixture_dataset()
    qm, report = accuracy_aware_quantize(model, data,
                                         AccuracyAwareConfig(max_drop_pp=1.0))
    assert report.reverted_layers == []
    assert report.iterations == 0
    assert set(qm.quantized_layers) == {"conv1", "conv2", "fc"}
    ref = default_quantize(model, data, QuantConfig())
    assert qm.quantized_layers == ref.quantized_layers
    for name in ref.quantized_layers:
        np.testing.assert_array_equal(np.atleast_1d(qm.weight_qparams[name].scale),
                                      np.atleast_1d(ref.weight_qparams[name].scale))


def double_poison_model():
    """Two linear layers, each carrying its own dead-dimension outlier."""
    w1 = np.eye(4, dtype=np.float32)
    w1[0, 2] = 300.0
    w1[1, 3] = 300.0
    w2 = np.zeros((2, 4), dtype=np.float32)
    w2[0, 0] = 1.0
    w2[0, 2] = 300.0
    w2[1, 1] = 1.0
    w2[1, 3] = 300.0
    return ModelGraph((linear_layer("l1", ["input"], w1, np.zeros(4)),
                       linear_layer("l2", ["l1"], w2, np.zeros(2))),
                      input_shape=(4,))


def double_poison_dataset(n=80, seed=3):
    rng = np.random.default_rng(seed)
    images = []
    for i in range(n):
        label = i % 2
        x = np.zeros(4, dtype=np.float32)
        x[label] = 0.9 + rng.uniform(0, 0.1)
        x[1 - label] = rng.uniform(0, 0.1)
        images.append(LabeledImage(x, label, f"v{i}"))
    return Dataset(tuple(images), num_classes=2)


def test_zero_budget_reverts_everything():
    model = double_poison_model()
    data = double_poison_dataset()
    qm, report = accuracy_aware_quantize(model, data,
                                         AccuracyAwareConfig(max_drop_pp=0.0))
    assert qm.quantized_layers == ()
    assert sorted(report.reverted_layers) == ["l1", "l2"]
    assert report.drop_pp == 0.0
    assert report.quantized_accuracy == report.fp32_accuracy
    assert report.status == STATUS_WITHIN_BUDGET


def test_greedy_step_matches_exhaustive_recheck():
    model = outlier_fixture_model()
    data = outlier_fixture_dataset(n_per_class=40)
    config = AccuracyAwareConfig(max_drop_pp=0.0, ranking_subset_size=10_000)
    qm0 = default_quantize(model, data, QuantConfig())
    _, report = accuracy_aware_quantize(model, data, config)
    # replay: at each iteration the chosen layer must be the exhaustive argmax
    current = qm0
    for name in report.reverted_layers:
        oracle = brute_force_best_single_revert(current, data)
        best = max(oracle.values())
        chosen = oracle[name]
        assert chosen == best
        earliest = [n for n in current.quantized_layers if oracle[n] == best][0]
        assert name == earliest  # ties break to topological order
        current = current.without_layers([name])


def test_deterministic_revert_sequence():
    model = outlier_fixture_model()
    data = outlier_fixture_dataset()
    cfg = AccuracyAwareConfig(max_drop_pp=0.0, ranking_subset_size=50)
    qcfg = QuantConfig(seed=11)
    _, rep1 = accuracy_aware_quantize(model, data, cfg, qcfg)
    _, rep2 = accuracy_aware_quantize(model, data, cfg, qcfg)
    assert rep1.reverted_layers == rep2.reverted_layers
    assert rep1.drop_pp == rep2.drop_pp


def test_monotone_progress_and_weight_stats():
    model = outlier_fixture_model()
    data = outlier_fixture_dataset()
    _, report = accuracy_aware_quantize(model, data, AccuracyAwareConfig(max_drop_pp=0.0))
    drops = [h["drop_pp"] for h in report.history]
    assert len(report.history) == report.iterations + 1
    assert len(set(report.reverted_layers)) == len(report.reverted_layers)
    # the outlier layer should be visible in the recorded weight spread
    ranges = report.layer_weight_ranges
    assert ranges["conv2"]["crushed_weight_fraction"] == 0.5  # 4 of 8 nonzero weights
    assert ranges["conv1"]["crushed_weight_fraction"] == 0.0
    assert ranges["fc"]["crushed_weight_fraction"] == 0.0
    assert ranges["conv2"]["weight_max"] == 300.0


def test_unlabeled_calibration_rejected():
    model = outlier_fixture_model()
    data = outlier_fixture_dataset()
    unlabeled = Dataset(tuple(LabeledImage(i.pixels, None, i.source_id)
                              for i in data.images))
    with pytest.raises(DataError):
        accuracy_aware_quantize(model, unlabeled)


def test_empty_calibration_rejected():
    with pytest.raises(DataError):
        accuracy_aware_quantize(outlier_fixture_model(), Dataset(()))
