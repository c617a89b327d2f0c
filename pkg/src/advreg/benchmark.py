"""Synthetic registration experiments: instance generation, multi-trial
sweeps and success-ratio aggregation."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
import time
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .errors import AdvRegError, InvalidArgumentError
from .geometry import RigidTransform, angular_distance
from .icp import IcpConfig, icp_register
from .pointcloud import PointCloud, rms_radius
from .registration import TrainConfig, register

log = logging.getLogger(__name__)

KINDS = ("rotation_sweep", "noise", "partial_overlap", "outliers", "mode_comparison")
METHODS = ("adversarial", "icp")
CSV_HEADER = [
    "method", "level", "trial", "angular_error_deg", "translation_error",
    "success", "epochs", "wall_time_s",
]


def _pts(cloud):
    return cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64)


def random_rotation(magnitude_deg, rng):
    """Rotation by exactly ``magnitude_deg`` about a uniformly random axis."""
    if not 0.0 <= magnitude_deg <= 180.0:
        raise InvalidArgumentError(f"rotation magnitude must be in [0, 180], got {magnitude_deg}")
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return RigidTransform(axis * np.deg2rad(magnitude_deg), np.zeros(3))


def add_noise(cloud, sigma_relative, rng):
    """Gaussian jitter with per-coordinate std ``sigma_relative * rms_radius(cloud)``."""
    if sigma_relative < 0:
        raise InvalidArgumentError("noise level must be >= 0")
    pts = _pts(cloud)
    if sigma_relative == 0:
        return PointCloud(pts.copy())
    sigma = sigma_relative * rms_radius(pts)
    return PointCloud(pts + rng.normal(0.0, sigma, size=pts.shape))


def partial_overlap_split(cloud, alpha, rng, return_indices=False):
    """Slice along a random direction into two clouds sharing a fraction ``alpha``.

    Each part keeps ``(1 + alpha) / 2`` of the points: the low end and the
    high end of the projection order respectively.
    """
    if not 0.0 < alpha <= 1.0:
        raise InvalidArgumentError(f"overlap fraction must be in (0, 1], got {alpha}")
    pts = _pts(cloud)
    n = len(pts)
    d = rng.normal(size=3)
    d /= np.linalg.norm(d)
    order = np.argsort(pts @ d, kind="stable")
    k = min(n, int(math.floor((1.0 + alpha) / 2.0 * n + 0.5)))
    ia, ib = np.sort(order[:k]), np.sort(order[n - k:])
    a, b = PointCloud(pts[ia]), PointCloud(pts[ib])
    if return_indices:
        return a, b, ia, ib
    return a, b


def add_outliers(cloud, fraction, rng):
    """Append ``ceil(fraction * n)`` points uniform in the cloud's bounding box."""
    if not 0.0 <= fraction < 1.0:
        raise InvalidArgumentError(f"outlier fraction must be in [0, 1), got {fraction}")
    pts = _pts(cloud)
    m = int(math.ceil(fraction * len(pts) - 1e-9))
    if m == 0:
        return PointCloud(pts.copy())
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    extra = lo + rng.random((m, 3)) * (hi - lo)
    return PointCloud(np.vstack([pts, np.clip(extra, lo, hi)]))


@dataclass
class AugmentationSpec:
    kind: str
    levels: List[float]
    trials_per_level: int = 10
    base_rotation_deg: float = 24.0
    seed: int = 0
    # mode_comparison only: std of the random ground-truth translation
    translation_sigma: float = 0.5

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgumentError(f"unknown experiment kind {self.kind!r}")
        self.levels = [float(v) for v in self.levels]
        if not self.levels:
            raise InvalidArgumentError("levels must not be empty")
        if self.trials_per_level < 1:
            raise InvalidArgumentError("trials_per_level must be >= 1")
        for v in self.levels:
            ok = {
                "rotation_sweep": 0.0 <= v <= 180.0,
                "noise": 0.0 <= v <= 1.0,
                "partial_overlap": 0.0 < v <= 1.0,
                "outliers": 0.0 <= v < 1.0,
                "mode_comparison": True,
            }[self.kind]
            if not ok:
                raise InvalidArgumentError(f"level {v} out of range for {self.kind}")
        if not 0.0 <= self.base_rotation_deg <= 180.0:
            raise InvalidArgumentError("base_rotation_deg must be in [0, 180]")


@dataclass
class TrialResult:
    level: float
    trial_index: int
    method: str
    angular_error: float
    translation_error: float
    success: bool
    epochs_run: int
    wall_time: float
    error: Optional[str] = None

    def csv_row(self):
        return [
            self.method,
            _fmt(self.level),
            str(self.trial_index),
            _fmt(np.rad2deg(self.angular_error)),
            _fmt(self.translation_error),
            "true" if self.success else "false",
            str(self.epochs_run),
            _fmt(self.wall_time),
        ]


def _fmt(x):
    return "%.17g" % float(x)


def trial_seed(spec_seed, level_index, trial):
    ss = np.random.SeedSequence([int(spec_seed) & 0xFFFFFFFFFFFFFFFF, level_index, trial])
    return int(ss.generate_state(1, np.uint64)[0])


def make_instance(base, spec, level, rng):
    """``(source, target, ground_truth)`` with ``ground_truth(source) ~ target``."""
    base = _pts(base)
    if spec.kind == "mode_comparison":
        gt = RigidTransform(rng.normal(size=3), rng.normal(0.0, spec.translation_sigma, size=3))
    else:
        mag = level if spec.kind == "rotation_sweep" else spec.base_rotation_deg
        gt = random_rotation(mag, rng)
    src, tgt = base, base
    if spec.kind == "partial_overlap":
        a, b = partial_overlap_split(base, level, rng)
        src, tgt = a.points, b.points
    source = gt.inverse().apply(src)
    target = tgt
    if spec.kind == "noise":
        source = add_noise(source, level, rng).points
        target = add_noise(target, level, rng).points
    elif spec.kind == "outliers":
        source = add_outliers(source, level, rng).points
        target = add_outliers(target, level, rng).points
    return PointCloud(source), PointCloud(np.array(target)), gt


def _run_trial(args):
    base, spec, li, level, trial, methods, train_cfg, icp_cfg = args
    seed = trial_seed(spec.seed, li, trial)
    rng = np.random.default_rng(seed)
    source, target, gt = make_instance(base, spec, level, rng)
    out = []
    for method in methods:
        t0 = time.perf_counter()
        try:
            if method == "icp":
                res = icp_register(source, target, icp_cfg)
            elif method == "adversarial":
                res = register(source, target, train_cfg.replace(seed=seed))
            elif method.startswith("adversarial-"):
                mode = method.split("-", 1)[1]
                res = register(source, target, train_cfg.replace(seed=seed, mode=mode))
            else:
                raise InvalidArgumentError(f"unknown method {method!r}")
            ang = angular_distance(gt.rotation, res.transform.rotation)
            terr = float(np.linalg.norm(res.transform.translation - gt.translation))
            out.append(TrialResult(level, trial, method, ang, terr,
                                   bool(ang < train_cfg.success_threshold),
                                   res.epochs_run, time.perf_counter() - t0))
        except (AdvRegError, np.linalg.LinAlgError, FloatingPointError) as exc:
            log.warning("trial %s/%d/%s failed: %s", level, trial, method, exc)
            out.append(TrialResult(level, trial, method, float("nan"), float("nan"), False,
                                   0, time.perf_counter() - t0, error=str(exc)))
    return out


def run_experiment(base_cloud, spec, methods=METHODS, train_cfg=None, icp_cfg=None, jobs=1):
    """Run every (level, trial) instance with every method.

    Each instance draws from its own stream seeded by ``(spec.seed, level
    index, trial)``, so results do not depend on ``jobs`` or on ordering.
    """
    train_cfg = TrainConfig() if train_cfg is None else train_cfg
    icp_cfg = IcpConfig() if icp_cfg is None else icp_cfg
    base = _pts(base_cloud)
    tasks = [
        (base, spec, li, level, trial, tuple(methods), train_cfg, icp_cfg)
        for li, level in enumerate(spec.levels)
        for trial in range(spec.trials_per_level)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_run_trial, tasks))
    else:
        chunks = [_run_trial(t) for t in tasks]
    order = {m: i for i, m in enumerate(methods)}
    results = [r for chunk in chunks for r in chunk]
    level_index = {lv: i for i, lv in enumerate(spec.levels)}
    results.sort(key=lambda r: (level_index[r.level], r.trial_index, order[r.method]))
    return results


def success_ratios(results):
    """``{(method, level): fraction of successful trials}``."""
    hits, counts = defaultdict(int), defaultdict(int)
    for r in results:
        counts[(r.method, r.level)] += 1
        hits[(r.method, r.level)] += int(r.success)
    return {k: hits[k] / counts[k] for k in counts}


def median_errors(results):
    errs = defaultdict(list)
    for r in results:
        errs[r.method].append(r.angular_error if not math.isnan(r.angular_error) else math.pi)
    return {m: float(np.median(v)) for m, v in errs.items()}


def write_csv(results, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in results:
        w.writerow(r.csv_row())


def results_to_csv(results):
    buf = io.StringIO()
    write_csv(results, buf)
    return buf.getvalue()


def format_summary(results):
    ratios = success_ratios(results)
    methods = list(dict.fromkeys(r.method for r in results))
    levels = list(dict.fromkeys(r.level for r in results))
    width = max(12, *(len(m) + 2 for m in methods))
    lines = ["level".ljust(10) + "".join(m.rjust(width) for m in methods)]
    for lv in levels:
        cells = "".join(("%.2f" % ratios[(m, lv)]).rjust(width) for m in methods)
        lines.append(("%g" % lv).ljust(10) + cells)
    return "\n".join(lines)


@dataclass
class ExperimentPlan:
    """Everything a benchmark spec file describes."""

    spec: AugmentationSpec
    methods: List[str] = field(default_factory=lambda: list(METHODS))
    train: TrainConfig = field(default_factory=TrainConfig)
    icp: IcpConfig = field(default_factory=IcpConfig)
    n_points: Optional[int] = None


def load_plan(path):
    """Parse a JSON benchmark spec.

    Keys: ``kind``, ``levels``, ``trials_per_level``, ``base_rotation_deg``,
    ``seed``, ``translation_sigma``, ``methods``, ``n_points``, ``train``
    (TrainConfig fields) and ``icp`` (``max_iterations``,
    ``convergence_epsilon``).
    """
    with open(path, "r") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidArgumentError(f"{path}: {exc}") from None
    return plan_from_dict(data)


def plan_from_dict(data):
    if not isinstance(data, dict):
        raise InvalidArgumentError("benchmark spec must be a JSON object")
    data = dict(data)
    try:
        train = TrainConfig.from_dict(data.pop("train", {}))
        icp_d = data.pop("icp", {})
        icp = IcpConfig(**{k: icp_d[k] for k in ("max_iterations", "convergence_epsilon") if k in icp_d})
        methods = list(data.pop("methods", METHODS))
        n_points = data.pop("n_points", None)
        spec_fields = {f.name for f in dataclasses.fields(AugmentationSpec)}
        unknown = set(data) - spec_fields
        if unknown:
            raise InvalidArgumentError(f"unknown benchmark keys: {sorted(unknown)}")
        spec = AugmentationSpec(**data)
    except TypeError as exc:
        raise InvalidArgumentError(str(exc)) from None
    for m in methods:
        if m not in METHODS and not (m.startswith("adversarial-") and m.split("-", 1)[1]
                                     in ("joint", "rotation", "rotation_then_translation")):
            raise InvalidArgumentError(f"unknown method {m!r}")
    return ExperimentPlan(spec, methods, train, icp, n_points)
