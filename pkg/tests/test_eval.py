import csv
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mvcoattn.datagen import SyntheticSpec, generate
from mvcoattn.eval import (
    CurveSet,
    accuracy,
    attention_weights,
    confusion_matrix,
    evaluate,
    export_attention,
    export_predictions,
    fcl_baseline,
    macro_f1,
    mean_std,
    metric_report,
    probe_error,
    run_ablation,
    run_regularizer_suite,
    sweep,
)
from mvcoattn.model import ModelConfig, MultiViewModel
from mvcoattn.training import TrainingConfig


@pytest.fixture(scope="module")
def small():
    return generate(SyntheticSpec(n=60, d=10, noise_dim=4, seg_width=4, seed=1))


def small_cfg(data, **kw):
    base = dict(segments=data.segments, h=4, d3=6, e_hidden=5, dec_hidden=[5],
                disc_hidden=[8], clf_hidden=6)
    base.update(kw)
    return ModelConfig(**base)


# metrics


def test_accuracy_examples():
    assert accuracy([0, 1, 1], [0, 1, 1]) == 1.0
    assert accuracy([0, 1, 1, 1], [0, 0, 1, 1]) == 0.75
    assert accuracy([0, 1], [1, 0]) == 0.0
    with pytest.raises(ValueError):
        accuracy([], [])
    with pytest.raises(ValueError):
        accuracy([0, 1], [0])


def test_macro_f1_hand_example():
    rep = metric_report([0, 1, 1, 1], [0, 0, 1, 1])
    assert rep.f1[1] == pytest.approx(0.8)
    assert rep.f1[0] == pytest.approx(2 / 3)
    assert abs(rep.macro_f1 - 0.7333) < 1e-4


def test_macro_f1_perfect_and_single_class():
    assert macro_f1([0, 1, 2], [0, 1, 2]) == 1.0
    with pytest.warns(UserWarning, match="absent"):
        rep = metric_report([1, 1, 1], [1, 1, 1], n_classes=2)
    assert rep.f1[1] == 1.0
    assert rep.absent == [0]


def test_absent_class_flagged():
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        rep = metric_report([0, 1], [0, 1], n_classes=3)
    assert rep.absent == [2] and rep.f1[2] == 0.0
    assert any("absent" in str(x.message) for x in w)


@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=60))
def test_confusion_identities(pairs):
    truth, pred = map(np.array, zip(*pairs))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = metric_report(truth, pred, n_classes=4)
    cm = rep.confusion
    assert np.array_equal(cm.sum(axis=1), np.bincount(truth, minlength=4))
    assert rep.accuracy == np.trace(cm) / cm.sum() == accuracy(truth, pred)
    rows = cm.sum(axis=1)
    for i in range(4):
        if rows[i]:
            assert rep.recall[i] == cm[i, i] / rows[i]


def test_confusion_layout():
    cm = confusion_matrix([0, 0, 1], [1, 0, 1])
    assert cm.tolist() == [[1, 1], [0, 1]]


def test_mean_std():
    m, s = mean_std([1.0, 2.0, 3.0])
    assert m == 2.0 and s == 1.0
    assert mean_std([4.0]) == (4.0, 0.0)


def test_report_write(tmp_path):
    metric_report([0, 1, 1], [0, 1, 0]).write(tmp_path)
    txt = (tmp_path / "metrics.txt").read_text()
    assert "accuracy=" in txt and "macro_f1=" in txt
    rows = list(csv.reader(open(tmp_path / "metrics_confusion.csv")))
    assert rows[1] == ["0", "1", "0"] and rows[2] == ["1", "1", "1"]


# attention


def test_attention_rows_are_simplex(small, tmp_path):
    m = MultiViewModel(small_cfg(small))
    path = export_attention(m, small, tmp_path / "a.csv")
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    assert rows[0].keys() == {"sample_id", "view", "segment_index", "weight", "padded"}
    sums = {}
    for r in rows:
        w = float(r["weight"])
        assert w >= 0
        key = (r["sample_id"], r["view"])
        sums[key] = sums.get(key, 0.0) + w
    assert len(sums) == 2 * small.test_idx.size
    assert all(abs(s - 1) <= 1e-9 for s in sums.values())


def test_padded_segments_marked(small, tmp_path):
    # width 14 in segments of 4 leaves two zeros in the last segment
    m = MultiViewModel(small_cfg(small))
    path = export_attention(m, small, tmp_path / "a.csv", rows=small.test_idx[:1])
    with open(path) as fh:
        flags = [(int(r["segment_index"]), int(r["padded"])) for r in csv.DictReader(fh) if r["view"] == "1"]
    assert flags == [(0, 0), (1, 0), (2, 0), (3, 1)]


def test_zero_score_attention_uniform(small):
    m = MultiViewModel(small_cfg(small))
    for w in m.encoder.w_h:
        w.value = np.zeros_like(w.value)
    for a, (k, _) in zip(attention_weights(m, small), small.segments):
        np.testing.assert_allclose(a, 1.0 / k, atol=1e-15)


def test_export_predictions(small, tmp_path):
    m = MultiViewModel(small_cfg(small))
    path = export_predictions(m, small, tmp_path / "p.csv")
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == small.test_idx.size
    r = rows[0]
    assert float(r["p_0"]) + float(r["p_1"]) == pytest.approx(1.0)
    assert int(r["predicted_label"]) == int(float(r["p_1"]) > float(r["p_0"]))


# curves and studies


def test_curveset_increasing():
    c = CurveSet()
    c.add("a", 0, 0.5)
    c.add("a", 10, 0.2)
    with pytest.raises(ValueError):
        c.add("a", 10, 0.1)
    assert c.final("a") == 0.2
    assert c.first_below("a", 0.3) == 10 and c.first_below("a", 0.1) is None


def test_curveset_csv(tmp_path):
    c = CurveSet()
    c.add("x", 1, 0.25)
    c.to_csv(tmp_path / "c.csv")
    assert (tmp_path / "c.csv").read_text().splitlines() == ["series,iteration,error", "x,1,0.25"]


def test_ablation_equal_widths_and_shared_start(small):
    cfg = TrainingConfig(iterations=4, batch_size=16, eval_every=2)
    curves = run_ablation(cfg, small, small_cfg(small))
    assert set(curves.series) == {"method1", "method2"}
    assert [x for x, _ in curves.series["method1"]] == [0, 2, 4]
    w1 = small_cfg(small, fusion="residual").fused_width
    w2 = small_cfg(small, fusion="shared_copies").fused_width
    assert w1 == w2


def test_regularizer_suite_shared_start(small):
    cfg = TrainingConfig(iterations=2, batch_size=16, eval_every=2)
    curves = run_regularizer_suite(cfg, small, small_cfg(small), probe_steps=10)
    assert set(curves.series) == {"reg1", "reg2", "reg3", "reg4", "reg5"}
    starts = {curves.series[n][0][1] for n in curves.series}
    assert len(starts) == 1


def test_probe_error_in_range(small):
    e = probe_error(MultiViewModel(small_cfg(small)), small, steps=5)
    assert 0.0 <= e <= 1.0


def test_sweep_single_point(small):
    cfg = TrainingConfig(iterations=2, batch_size=16)
    curves = sweep("t1", [2], cfg, small, small_cfg(small))
    assert len(curves.series["t1"]) == 1


def test_sweep_h_changes_width(small):
    cfg = TrainingConfig(iterations=1, batch_size=16)
    curves = sweep("h", [2, 3], cfg, small, small_cfg(small))
    assert [x for x, _ in curves.series["h"]] == [2, 3]


def test_sweep_unknown_param(small):
    with pytest.raises(ValueError):
        sweep("lr0", [0.1], TrainingConfig(), small)


def test_defaults_are_sweep_centre():
    cfg = TrainingConfig()
    assert (cfg.t1, cfg.t2, cfg.t3) == (2, 2, 3)


def test_fcl_and_evaluate_reports(small):
    cfg = TrainingConfig(iterations=3, batch_size=16)
    rep = fcl_baseline(small, cfg, hidden=(8,))
    assert 0 <= rep.accuracy <= 1 and rep.confusion.sum() == small.test_idx.size
    rep2 = evaluate(MultiViewModel(small_cfg(small)), small)
    assert rep2.confusion.sum() == small.test_idx.size
