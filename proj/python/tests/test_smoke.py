import math

import numpy as np
import pytest

import focus_seg as fs

TINY = """
image_size = 32
model.c = 8
model.d = 8
model.cb = 8
model.s = 4
model.l_dec = 1
model.n_enc = 1
model.heads = 2
model.points = 1
model.backbone_heads = 2
clip.image_size = 16
seed = 9
"""


def test_synth_scene_is_pure_and_well_formed():
    a = fs.synth_scene(seed=3, index=1, size=48)
    b = fs.synth_scene(seed=3, index=1, size=48)
    assert a["image"].shape == (3, 48, 48)
    assert a["mask"].shape == (48, 48)
    assert np.array_equal(a["image"], b["image"])
    assert np.array_equal(a["mask"], b["mask"])
    assert set(np.unique(a["mask"])) <= {0.0, 1.0}
    assert 0.05 <= a["area_fraction"] <= 0.60
    assert a["texture_distance"] > 0.25

    c = fs.synth_scene(seed=3, index=2, size=48, mode="camouflage")
    assert c["texture_distance"] < 0.25


def test_model_infer_shapes_and_determinism():
    m = fs.Model(TINY)
    assert m.parameter_count > 0
    assert "image_size = 32" in m.config_text

    scene = fs.synth_scene(seed=5, index=0, size=32)
    r1 = m.infer(scene["image"])
    r2 = m.infer(scene["image"])
    assert r1["soft"].shape == (32, 32)
    assert r1["mask"].shape == (32, 32)
    assert np.array_equal(r1["soft"], r2["soft"])
    assert set(np.unique(r1["mask"])) <= {0.0, 1.0}
    assert r1["soft"].min() >= 0.0 and r1["soft"].max() <= 1.0


def test_loss_probe_backpropagates():
    m = fs.Model(TINY)
    scene = fs.synth_scene(seed=5, index=1, size=32)
    r = m.loss_probe(scene["image"], scene["mask"])
    for key in ("total", "clip", "label", "mask", "bbox", "grad_norm"):
        assert math.isfinite(r[key]), key
    assert r["total"] > 0.0
    assert r["grad_norm"] > 0.0


def test_metrics_on_perfect_prediction():
    gt = np.zeros((16, 16))
    gt[4:10, 5:12] = 1.0
    r = fs.metrics(gt, gt)
    assert r["mae"] == 0.0
    assert r["ber"] == 0.0
    assert r["f1"] == 1.0
    assert r["auc"] == 1.0
    assert r["s_measure"] == pytest.approx(1.0, abs=1e-6)
    assert r["e_measure"] == pytest.approx(1.0, abs=1e-6)
    assert not r["empty_gt_warning"]

    empty = fs.metrics(np.zeros((8, 8)), np.zeros((8, 8)))
    assert empty["empty_gt_warning"]
    assert math.isnan(empty["ber"])
    assert empty["auc"] == 0.5


def test_hungarian_picks_the_cheap_diagonal():
    cost = np.array([[1.0, 10.0, 10.0], [10.0, 1.0, 10.0], [10.0, 10.0, 1.0]])
    assert fs.hungarian(cost) == [0, 1, 2]
    swapped = np.array([[10.0, 1.0], [1.0, 10.0]])
    assert fs.hungarian(swapped) == [1, 0]


def test_image_utilities():
    flat = np.full((24, 24), 0.5)
    assert fs.canny(flat).sum() == 0.0
    assert fs.gaussian_blur(flat, 1.5) == pytest.approx(flat)

    step = np.zeros((24, 24))
    step[:, 12:] = 1.0
    edges = fs.canny(step, sigma=1.0, low=0.05, high=0.15)
    ys, xs = np.nonzero(edges)
    assert len(xs) > 0
    assert set(xs) <= {10, 11, 12, 13}


def test_pca_recovers_dominant_axis():
    rng = np.random.default_rng(11)
    pts = np.outer(rng.normal(size=600) * 5.0, [1.0, 0.0, 0.0])
    pts += rng.normal(size=(600, 3)) * 0.1 + 0.7
    r = fs.pca_top_component(pts)
    assert not r["degenerate"]
    assert abs(r["direction"][0]) > 0.99


def test_contrastive_closed_form():
    assert fs.contrastive_loss_value(0.3, 0.3, 0.3, 0.3, 0.07) == pytest.approx(
        math.log(2.0), abs=1e-12
    )
    tau = 0.3
    want = math.log(1.0 + math.exp(-2.0 / tau))
    assert fs.contrastive_loss_value(1.0, -1.0, -1.0, 1.0, tau) == pytest.approx(
        want, abs=1e-12
    )
