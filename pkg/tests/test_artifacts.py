import numpy as np
import pytest

from rankpool.artifacts import (
    load_checkpoint,
    load_scorers,
    save_checkpoint,
    save_scorers,
)
from rankpool.data import synthetic_blobs
from rankpool.gradcheck import build_tiny_net
from rankpool.nn import TrainConfig, preset_small_net, refit_pool_scorers


@pytest.fixture(scope="module")
def fitted_net():
    ds = synthetic_blobs(40, 14, 14, 2, seed=0)
    net = preset_small_net(
        (14, 14, 1), 2, "multipartite", seed=1,
        conv1_filters=4, conv2_filters=6, fc_units=16, kernel=3, pool_window=2,
    )
    refit_pool_scorers(net, ds.images, ds.labels, TrainConfig(score_sample_cap=2000))
    return net


def test_scorer_round_trip_bitwise(fitted_net, tmp_path):
    path = tmp_path / "scorers.json"
    save_scorers(path, fitted_net.scorers)
    loaded = load_scorers(path)
    assert set(loaded) == set(fitted_net.scorers)
    for idx, (proj, model) in fitted_net.scorers.items():
        lproj, lmodel = loaded[idx]
        assert np.array_equal(lproj.a, proj.a)
        assert lproj.lambda_reg == proj.lambda_reg
        assert lproj.fit_meta.final_objective == proj.fit_meta.final_objective
        assert lmodel.c == model.c and lmodel.bins == model.bins
        assert np.array_equal(lmodel.column_kl, model.column_kl)
        for i in range(model.c):
            assert np.array_equal(lmodel.fg_density[i].mass, model.fg_density[i].mass)
            assert lmodel.fg_density[i].lo == model.fg_density[i].lo
            assert lmodel.bg_density[i].hi == model.bg_density[i].hi


def test_scorer_format_guard(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"format": "something-else", "layers": {}}')
    with pytest.raises(ValueError, match="artifact"):
        load_scorers(bad)


def test_checkpoint_round_trip(tmp_path):
    net = build_tiny_net("max", seed=3)
    path = tmp_path / "ckpt.npz"
    save_checkpoint(path, net)
    other = build_tiny_net("max", seed=99)
    load_checkpoint(path, other)
    for p, q in zip(net.params, other.params):
        if p:
            assert np.array_equal(p["w"], q["w"])
            assert np.array_equal(p["b"], q["b"])


def test_checkpoint_shape_guard(tmp_path):
    net = build_tiny_net("max", seed=3)
    path = tmp_path / "ckpt.npz"
    save_checkpoint(path, net)
    incompatible = preset_small_net(
        (14, 14, 1), 2, "max",
        conv1_filters=4, conv2_filters=6, fc_units=16, kernel=3, pool_window=2,
    )
    with pytest.raises(ValueError, match="shape"):
        load_checkpoint(path, incompatible)
