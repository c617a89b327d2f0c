import csv
import io
import json

import numpy as np
import pytest

from advreg.benchmark import (
    CSV_HEADER,
    AugmentationSpec,
    TrialResult,
    add_noise,
    add_outliers,
    format_summary,
    load_plan,
    make_instance,
    partial_overlap_split,
    random_rotation,
    results_to_csv,
    run_experiment,
    success_ratios,
)
from advreg.errors import InvalidArgumentError
from advreg.geometry import angular_distance
from advreg.icp import IcpConfig
from advreg.pointcloud import PointCloud, load_bundled_cloud, rms_radius
from advreg.registration import TrainConfig


@pytest.fixture(scope="module")
def bunny():
    return load_bundled_cloud()


def test_random_rotation_magnitude(rng):
    assert np.array_equal(random_rotation(0, rng).rotation, np.eye(3))
    for deg in (1, 45, 90, 179.5, 180):
        t = random_rotation(deg, rng)
        assert abs(angular_distance(np.eye(3), t.rotation) - np.deg2rad(deg)) < 1e-9
        assert np.all(t.translation == 0)


def test_random_rotation_axes_are_isotropic(rng):
    axes = np.array([random_rotation(30, rng).rotation_vector for _ in range(10_000)])
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    assert np.linalg.norm(axes.mean(axis=0)) < 0.05


def test_random_rotation_range(rng):
    with pytest.raises(InvalidArgumentError):
        random_rotation(181, rng)


def test_noise_statistics(rng):
    pts = rng.normal(size=(20_000, 3))
    out = add_noise(pts, 0.05, rng).points
    nominal = 0.05 * rms_radius(pts)
    assert abs(np.std(out - pts) / nominal - 1) < 0.05
    np.testing.assert_array_equal(add_noise(pts, 0.0, rng).points, pts)
    a = add_noise(pts, 0.02, np.random.default_rng(5)).points
    b = add_noise(pts, 0.02, np.random.default_rng(5)).points
    np.testing.assert_array_equal(a, b)


def test_overlap_index_arithmetic(rng):
    pts = rng.normal(size=(10_000, 3))
    a, b, ia, ib = partial_overlap_split(pts, 0.5, rng, return_indices=True)
    assert len(ia) == len(ib) == 7500
    assert len(np.intersect1d(ia, ib)) == 5000
    assert len(np.union1d(ia, ib)) == 10_000
    np.testing.assert_array_equal(a.points, pts[ia])


@pytest.mark.parametrize("alpha", [0.1, 0.33, 0.7, 0.95])
def test_overlap_arithmetic_general(rng, alpha):
    n = 1001
    _, _, ia, ib = partial_overlap_split(rng.normal(size=(n, 3)), alpha, rng, return_indices=True)
    k = int(np.floor((1 + alpha) / 2 * n + 0.5))
    assert len(ia) == len(ib) == k
    assert len(np.intersect1d(ia, ib)) == 2 * k - n
    assert len(np.union1d(ia, ib)) == n


def test_full_overlap_returns_everything(rng):
    pts = rng.normal(size=(50, 3))
    a, b = partial_overlap_split(pts, 1.0, rng)
    np.testing.assert_array_equal(a.points, pts)
    np.testing.assert_array_equal(b.points, pts)


@pytest.mark.parametrize("alpha", [0.0, 1.5])
def test_overlap_range(rng, alpha):
    with pytest.raises(InvalidArgumentError):
        partial_overlap_split(np.zeros((5, 3)), alpha, rng)


def test_outliers(rng):
    pts = rng.normal(size=(1000, 3))
    out = add_outliers(pts, 0.2, rng).points
    assert out.shape == (1200, 3)
    np.testing.assert_array_equal(out[:1000], pts)
    assert np.all(out[1000:] >= pts.min(0)) and np.all(out[1000:] <= pts.max(0))
    assert add_outliers(pts, 0.0, rng).points.shape == (1000, 3)


@pytest.mark.parametrize("kw", [
    dict(kind="sweep", levels=[1]),
    dict(kind="rotation_sweep", levels=[]),
    dict(kind="rotation_sweep", levels=[200]),
    dict(kind="outliers", levels=[1.0]),
    dict(kind="noise", levels=[0.01], trials_per_level=0),
])
def test_spec_validation(kw):
    with pytest.raises(InvalidArgumentError):
        AugmentationSpec(**kw)


def test_instance_ground_truth_maps_source_to_target(bunny, rng):
    spec = AugmentationSpec("rotation_sweep", [60])
    src, tgt, gt = make_instance(bunny, spec, 60, rng)
    np.testing.assert_allclose(gt.apply(src.points), tgt.points, atol=1e-12)
    spec = AugmentationSpec("mode_comparison", [0])
    src, tgt, gt = make_instance(bunny, spec, 0, rng)
    np.testing.assert_allclose(gt.apply(src.points), tgt.points, atol=1e-12)
    assert np.any(gt.translation != 0)


def _small(bunny, n=300):
    return PointCloud(bunny.points[:: len(bunny.points) // n])


def test_icp_sweep_level_zero_succeeds(bunny):
    res = run_experiment(_small(bunny), AugmentationSpec("rotation_sweep", [0, 12], trials_per_level=3), ["icp"])
    assert success_ratios(res)[("icp", 0.0)] == 1.0
    for r in res:
        assert r.success == (r.angular_error < np.deg2rad(4))


def test_experiment_is_reproducible_and_job_independent(bunny):
    spec = AugmentationSpec("noise", [0.01, 0.03], trials_per_level=2, seed=9)
    cfg = TrainConfig(n_epochs=5)
    kw = dict(methods=["adversarial", "icp"], train_cfg=cfg, icp_cfg=IcpConfig(max_iterations=5))
    a = run_experiment(_small(bunny), spec, jobs=1, **kw)
    b = run_experiment(_small(bunny), spec, jobs=2, **kw)
    strip = lambda rs: [r.csv_row()[:-1] for r in rs]
    assert strip(a) == strip(b)
    assert [(r.level, r.trial_index, r.method) for r in a] == [
        (lv, t, m) for lv in (0.01, 0.03) for t in range(2) for m in ("adversarial", "icp")]


def test_trial_failures_are_recorded(bunny):
    spec = AugmentationSpec("rotation_sweep", [10], trials_per_level=1)
    res = run_experiment(_small(bunny), spec, ["bogus", "icp"])
    assert res[0].error and not res[0].success and np.isnan(res[0].angular_error)
    assert res[1].error is None


def test_csv_format():
    rows = [TrialResult(24.0, 0, "icp", np.deg2rad(3.0), 0.1, True, 7, 0.5)]
    text = results_to_csv(rows)
    assert text.endswith("\n")
    parsed = list(csv.reader(io.StringIO(text)))
    assert parsed[0] == CSV_HEADER
    assert parsed[1][0] == "icp" and parsed[1][5] == "true"
    assert float(parsed[1][3]) == pytest.approx(3.0, rel=1e-15)
    assert "24" in format_summary(rows) and "icp" in format_summary(rows)


def test_load_plan(tmp_path):
    p = tmp_path / "plan.json"
    p.write_text(json.dumps({"kind": "outliers", "levels": [0, 0.5], "trials_per_level": 3,
                             "methods": ["adversarial"], "train": {"n_epochs": 50}, "n_points": 500}))
    plan = load_plan(p)
    assert plan.spec.levels == [0.0, 0.5] and plan.train.n_epochs == 50 and plan.n_points == 500
    p.write_text(json.dumps({"kind": "noise", "levels": [0.01], "colour": 1}))
    with pytest.raises(InvalidArgumentError):
        load_plan(p)
    p.write_text("{not json")
    with pytest.raises(InvalidArgumentError):
        load_plan(p)
