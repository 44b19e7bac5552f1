import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mvcoattn.datagen import (
    DataError,
    MultiViewDataset,
    PAPER_RECIPES,
    SyntheticSpec,
    ViewRecipe,
    gen_base_classification,
    generate,
    load_dataset,
    make_two_views,
    make_view,
    paper_spec,
    save_dataset,
    segment,
    segment_roles,
    segment_shape,
    standardize,
    unsegment,
    view_permutation,
)
from mvcoattn.numerics import sigmoid_map


def test_paper_scale_balanced():
    X, y = gen_base_classification(10_000, 500, 2, seed=0)
    assert X.shape == (10_000, 500)
    assert np.bincount(y).tolist() == [5000, 5000]


def test_single_class_rejected():
    with pytest.raises(ValueError):
        gen_base_classification(10, 5, c=1)


@pytest.mark.parametrize("kw", [dict(informative_fraction=0.0), dict(informative_fraction=1.5),
                                dict(n=3, c=2)])
def test_invalid_arguments(kw):
    args = dict(n=20, d=5, c=2)
    args.update(kw)
    with pytest.raises(ValueError):
        gen_base_classification(**args)


@given(st.integers(4, 301), st.integers(2, 5), st.integers(0, 1000))
def test_class_counts_differ_by_at_most_one(n, c, seed):
    if n < 2 * c:
        return
    _, y = gen_base_classification(n, 6, c, seed=seed)
    counts = np.bincount(y, minlength=c)
    assert counts.max() - counts.min() <= 1


def test_informative_columns_carry_class_means():
    X, y = gen_base_classification(4000, 20, 2, 0.2, seed=1)
    gap = X[y == 1].mean(axis=0) - X[y == 0].mean(axis=0)
    assert np.all(np.abs(gap[:4] - 2.0) < 0.15)
    assert np.all(np.abs(gap[4:]) < 0.15)


def test_seed_determinism():
    a = generate(SyntheticSpec(n=60, d=10, seed=4))
    b = generate(SyntheticSpec(n=60, d=10, seed=4))
    assert all(np.array_equal(u, v) for u, v in zip(a.views, b.views))
    assert np.array_equal(a.labels, b.labels) and np.array_equal(a.test_idx, b.test_idx)


def test_paper_view_widths():
    X, _ = gen_base_classification(200, 500, seed=0)
    X1, X2 = make_two_views(X, noise_dim=50)
    assert X1.shape == X2.shape == (200, 550)
    spec = paper_spec()
    assert (spec.n, spec.d, spec.noise_dim, spec.seg_width) == (10_000, 500, 50, 50)
    assert segment_shape(550, 50) == (11, 50)
    assert (PAPER_RECIPES[0].noise_mean, PAPER_RECIPES[0].noise_std) == (0.0, 0.5)
    assert (PAPER_RECIPES[1].noise_mean, PAPER_RECIPES[1].noise_std) == (1.0, 0.7)


def test_zero_noise_identity_shuffle():
    X = np.random.default_rng(0).normal(size=(30, 4))
    X1 = make_view(X, ViewRecipe("sigmoid", 0.0, 0.0, None), 0, 0)
    Z = standardize(X)
    np.testing.assert_array_equal(X1, sigmoid_map(Z).value)
    np.testing.assert_allclose(X1, 1.0 / (1.0 + np.exp(-Z)), rtol=1e-15, atol=0)


def test_shuffle_is_bijection():
    X = np.random.default_rng(0).normal(size=(25, 6))
    r = ViewRecipe("tanh", 0.0, 0.3, 7)
    shuffled = make_view(X, r, 3, 11)
    plain = make_view(X, ViewRecipe("tanh", 0.0, 0.3, None), 3, 11)
    perm = view_permutation(r, 9)
    np.testing.assert_array_equal(shuffled[:, np.argsort(perm)], plain)


def test_negative_noise_dim_or_std():
    with pytest.raises(ValueError):
        make_view(np.zeros((3, 2)), ViewRecipe(), -1, 0)
    with pytest.raises(ValueError):
        ViewRecipe(noise_std=-0.1)


def test_noise_block_label_independent():
    ds = generate(SyntheticSpec(n=10_000, d=20, noise_dim=10, shuffle=False, seed=0))
    y = ds.labels - ds.labels.mean()
    for v in ds.views:
        noise = v[:, 20:]
        r = (noise - noise.mean(0)).T @ y / (noise.std(0) * y.std() * len(y))
        assert np.all(np.abs(r) < 0.05)


# segmentation


def test_segment_no_padding_paper_shape():
    x = np.arange(550.0)
    sv = segment(x, 11, 50)
    assert sv.segments.shape == (50, 11) and sv.pad_count == 0
    np.testing.assert_array_equal(sv.segments[:, 2], np.arange(100.0, 150.0))


def test_segment_pads_tail():
    sv = segment(np.array([1.0, 2, 3, 4, 5]), 2, 3)
    assert sv.pad_count == 1
    np.testing.assert_array_equal(sv.segments, [[1, 4], [2, 5], [3, 0]])


def test_segment_too_small():
    with pytest.raises(ValueError):
        segment(np.zeros(7), 2, 3)


@given(st.integers(1, 40), st.integers(1, 9), st.integers(0, 3), st.integers(0, 999))
def test_segment_round_trip(l, d, extra, seed):
    k = -(-l // d) + extra
    x = np.random.default_rng(seed).normal(size=(3, l))
    sv = segment(x, k, d)
    assert sv.pad_count == k * d - l
    np.testing.assert_array_equal(unsegment(sv), x)


def test_segment_roles_default():
    roles = segment_roles(SyntheticSpec(shuffle=False))
    assert len(roles) == 2
    assert roles[0].tolist() == ["informative"] * 2 + ["noise"] * 9


def test_segment_roles_require_unshuffled():
    with pytest.raises(ValueError):
        segment_roles(SyntheticSpec())


# dataset and persistence


def small_ds(seed=0):
    return generate(SyntheticSpec(n=30, d=7, noise_dim=2, seg_width=4, seed=seed))


def test_dataset_validation():
    ds = small_ds()
    with pytest.raises(DataError):
        MultiViewDataset(ds.views, ds.labels[:-1], ds.segments, ds.train_idx, ds.test_idx)
    with pytest.raises(DataError):
        MultiViewDataset(ds.views, ds.labels, [(1, 2), (1, 2)], ds.train_idx, ds.test_idx)
    with pytest.raises(DataError):
        MultiViewDataset([v[:0] for v in ds.views], ds.labels[:0], ds.segments, [], [])


def test_split_partitions_rows():
    ds = small_ds()
    both = np.concatenate([ds.train_idx, ds.test_idx])
    assert sorted(both.tolist()) == list(range(30))
    assert ds.test_idx.size == 6


def test_save_load_round_trip(tmp_path):
    ds = small_ds(2)
    save_dataset(ds, tmp_path)
    assert {p.name for p in tmp_path.iterdir()} == {"view1.csv", "view2.csv", "labels.csv", "manifest.json"}
    back = load_dataset(tmp_path)
    assert all(np.array_equal(a, b) for a, b in zip(ds.views, back.views))
    assert np.array_equal(ds.labels, back.labels)
    assert back.segments == ds.segments and back.n_classes == ds.n_classes
    assert np.array_equal(back.test_idx, ds.test_idx)
    assert back.meta["generator"]["seed"] == 2


def test_load_malformed_row_reports_line(tmp_path):
    save_dataset(small_ds(), tmp_path)
    p = tmp_path / "view2.csv"
    lines = p.read_text().splitlines()
    lines[4] = lines[4] + ",1.0"
    p.write_text("\n".join(lines) + "\n")
    with pytest.raises(DataError, match=r"view2\.csv:5"):
        load_dataset(tmp_path)


def test_load_non_numeric_reports_line(tmp_path):
    save_dataset(small_ds(), tmp_path)
    p = tmp_path / "view1.csv"
    lines = p.read_text().splitlines()
    lines[2] = "x" + lines[2][1:]
    p.write_text("\n".join(lines) + "\n")
    with pytest.raises(DataError, match=r"view1\.csv:3"):
        load_dataset(tmp_path)


def test_load_label_row_mismatch(tmp_path):
    save_dataset(small_ds(), tmp_path)
    p = tmp_path / "labels.csv"
    p.write_text("\n".join(p.read_text().splitlines()[:-2]) + "\n")
    with pytest.raises(DataError):
        load_dataset(tmp_path)


def test_load_missing_manifest(tmp_path):
    with pytest.raises(DataError):
        load_dataset(tmp_path)


def test_manifest_records_recipes(tmp_path):
    save_dataset(small_ds(), tmp_path)
    m = json.loads((tmp_path / "manifest.json").read_text())
    assert m["segments"] == [[3, 4], [3, 4]]
    assert m["generator"]["recipes"][1]["nonlinearity"] == "tanh"
