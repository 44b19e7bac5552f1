import numpy as np
import pytest

from mvcoattn.coattention import ConfigError
from mvcoattn.model import ModelConfig, MultiViewModel, load_checkpoint, save_checkpoint


def cfg(**kw):
    base = dict(segments=[(3, 2), (2, 4)], h=3, d3=4, e_hidden=4, dec_hidden=[4],
                disc_hidden=[4], clf_hidden=5)
    base.update(kw)
    return ModelConfig(**base)


def views(rng, b=5, segs=((3, 2), (2, 4))):
    return [rng.normal(size=(b, d, k)) for k, d in segs]


def test_fused_width():
    assert cfg().fused_width == 3 + 6 + 8


@pytest.mark.parametrize("kw", [dict(segments=[(3, 2)]), dict(n_classes=1), dict(fusion="bogus"),
                                dict(h=0), dict(segments=[(3, 2)] * 3, semi_supervised=True)])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        cfg(**kw)


def test_parameter_groups_partition():
    m = MultiViewModel(cfg())
    ids = [id(p) for p in m.params]
    assert len(ids) == len(set(ids))
    assert len(m.named_params()) == len(ids)


def test_forward_shapes(rng):
    m = MultiViewModel(cfg())
    out = m.forward(views(rng))
    assert [z.shape for z in out.codes] == [(5, 3, 1)] * 2
    assert out.probs.shape == (5, 2)
    assert out.residuals[1].shape == (5, 4, 2)
    assert set(out.recon) == {(0, 0), (0, 1), (1, 0), (1, 1)}


def test_codes_bounded_by_tanh_head(rng):
    m = MultiViewModel(cfg())
    for z in m.forward([10 * x for x in views(rng)]).codes:
        assert np.all(np.abs(z.value) < 1)


def test_semi_supervised_heads_average(rng):
    m = MultiViewModel(cfg(semi_supervised=True))
    out = m.forward(views(rng))
    p1, p2 = (p.value for p in out.probs_views)
    np.testing.assert_allclose(out.probs.value, (p1 + p2) / 2, atol=1e-15)


def test_three_views_use_centroid_paths(rng):
    segs = [(2, 3)] * 3
    m = MultiViewModel(cfg(segments=segs))
    out = m.forward(views(rng, segs=segs))
    assert set(out.recon) == {(0, 0), (1, 1), (2, 2)}
    assert out.probs.shape == (5, 2)


def test_seeded_init_differs():
    a, b = MultiViewModel(cfg(), seed=0), MultiViewModel(cfg(), seed=1)
    assert not np.array_equal(a.encoder.W[0].value, b.encoder.W[0].value)


def test_checkpoint_round_trip(tmp_path, rng):
    m = MultiViewModel(cfg(), seed=7)
    path = save_checkpoint(m, tmp_path / "m.npz", {"note": "x"})
    back, meta = load_checkpoint(path)
    assert meta["note"] == "x" and meta["model"]["h"] == 3
    xs = views(rng)
    assert np.array_equal(m.forward(xs).probs.value, back.forward(xs).probs.value)


def test_checkpoint_shape_mismatch(tmp_path):
    save_checkpoint(MultiViewModel(cfg()), tmp_path / "m.npz")
    other = MultiViewModel(cfg(h=4))
    _, _ = load_checkpoint(tmp_path / "m.npz")
    with pytest.raises(ConfigError):
        other.load_state_dict(MultiViewModel(cfg()).state_dict())


def test_not_a_checkpoint(tmp_path):
    np.savez(tmp_path / "x.npz", a=np.zeros(2))
    with pytest.raises(ConfigError):
        load_checkpoint(tmp_path / "x.npz")
