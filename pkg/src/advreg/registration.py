"""Adversarial rigid registration.

The critic is trained to tell target points from transformed source points
while the rigid transform is trained to make them indistinguishable. Each
epoch runs ``k_critic`` critic updates followed by ``k_generator``
transform updates, both on fresh mini-batches.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from . import critic as C
from .errors import DegenerateInputError, InvalidArgumentError, NumericalAbort
from .geometry import RigidTransform, exp_map
from .losses import critic_loss_full, generator_loss
from .optimizer import AdamState, Schedule, adam_step, schedule_count, schedule_value
from .pointcloud import NormalizationRecord, PointCloud, normalize, sample_batch

log = logging.getLogger(__name__)

MODES = ("joint", "rotation", "rotation_then_translation")
_MODE_ALIASES = {"two-phase": "rotation_then_translation", "two_phase": "rotation_then_translation"}


@dataclass
class TrainConfig:
    n_epochs: int = 500
    k_critic: int = 10
    k_generator: int = 1
    # 128 doubling every 125 epochs: larger batches late sharpen the final fit
    batch_size: Schedule = field(default_factory=lambda: Schedule("step_decay", 128, 2.0, 125))
    lr_critic: Schedule = field(default_factory=lambda: Schedule("constant", 3e-3))
    lr_generator: Schedule = field(
        default_factory=lambda: Schedule("exponential_decay", 2e-2, 0.99)
    )
    lambda_gp: float = 10.0
    mode: str = "joint"
    # shift/scale augmentation of the rotation phase; off by default since
    # register() already centres both clouds
    augment_shift_sigma: float = 0.0
    augment_scale_range: Tuple[float, float] = (1.0, 1.0)
    normalize_inputs: bool = True
    seed: int = 0
    success_threshold: float = float(np.deg2rad(4.0))
    critic_betas: Tuple[float, float] = (0.5, 0.9)
    generator_betas: Tuple[float, float] = (0.5, 0.9)
    critic_width: int = 32
    critic_depth: int = 4
    # epochs of the translation phase in rotation_then_translation mode
    translation_epochs: Optional[int] = None
    # plateau stop: 0 disables
    early_stop_patience: int = 0
    early_stop_tol: float = 1e-5

    def __post_init__(self):
        self.mode = _MODE_ALIASES.get(self.mode, self.mode)
        for name in ("batch_size", "lr_critic", "lr_generator"):
            setattr(self, name, Schedule.parse(getattr(self, name)))
        self.augment_scale_range = tuple(float(v) for v in self.augment_scale_range)
        self.critic_betas = tuple(float(v) for v in self.critic_betas)
        self.generator_betas = tuple(float(v) for v in self.generator_betas)
        self.validate()

    def validate(self):
        if self.mode not in MODES:
            raise InvalidArgumentError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.n_epochs < 0:
            raise InvalidArgumentError("n_epochs must be >= 0")
        if self.k_critic < 1 or self.k_generator < 1:
            raise InvalidArgumentError("k_critic and k_generator must be >= 1")
        if self.lambda_gp < 0:
            raise InvalidArgumentError("lambda_gp must be >= 0")
        lo, hi = self.augment_scale_range if len(self.augment_scale_range) == 2 else (0, -1)
        if not (0 < lo <= hi):
            raise InvalidArgumentError("augment_scale_range must be positive and ordered")
        if self.augment_shift_sigma < 0:
            raise InvalidArgumentError("augment_shift_sigma must be >= 0")
        if self.translation_epochs is not None and self.translation_epochs < 0:
            raise InvalidArgumentError("translation_epochs must be >= 0")

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        d = dataclasses.asdict(self)
        for name in ("batch_size", "lr_critic", "lr_generator"):
            d[name] = getattr(self, name).to_dict()
        for name in ("augment_scale_range", "critic_betas", "generator_betas"):
            d[name] = list(getattr(self, name))
        return d

    @classmethod
    def from_dict(cls, data):
        known = {f.name: f for f in dataclasses.fields(cls)}
        unknown = set(data) - set(known)
        if unknown:
            raise InvalidArgumentError(f"unknown config keys: {sorted(unknown)}")
        return cls(**{k: _coerce(known[k], v) for k, v in data.items()})

    @classmethod
    def from_file(cls, path):
        """Load a JSON object or ``key = value`` lines (``#`` starts a comment)."""
        with open(path, "r") as fh:
            text = fh.read()
        if text.lstrip().startswith("{"):
            return cls.from_dict(json.loads(text))
        data = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InvalidArgumentError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            data[key] = value
        return cls.from_dict(data)


def _coerce(f, value):
    if not isinstance(value, str):
        return value
    name = f.name
    if name in ("batch_size", "lr_critic", "lr_generator"):
        return Schedule.parse(value)
    if name in ("augment_scale_range", "critic_betas", "generator_betas"):
        lo, hi = value.replace("(", "").replace(")", "").split(",")
        return (float(lo), float(hi))
    if name == "normalize_inputs":
        return value.lower() in ("1", "true", "yes", "on")
    if name == "mode":
        return value
    if name == "translation_epochs":
        return None if value.lower() in ("", "none") else int(value)
    if name in ("n_epochs", "k_critic", "k_generator", "seed", "critic_width",
                "critic_depth", "early_stop_patience"):
        return int(value)
    return float(value)


@dataclass
class RegistrationResult:
    transform: RigidTransform
    epochs_run: int
    loss_trace: List[Tuple[int, float, float]]
    wall_time: float
    # transform in the normalized frame and the records that define it
    normalized_transform: Optional[RigidTransform] = None
    source_record: Optional[NormalizationRecord] = None
    target_record: Optional[NormalizationRecord] = None


class _Game:
    """One run of the alternating critic / transform optimization."""

    def __init__(self, source, target, cfg, seed_seq, active, augment, start=None):
        self.source = source
        self.target = target
        self.cfg = cfg
        init_ss, sample_ss, aug_ss = seed_seq.spawn(3)
        self.rng = np.random.default_rng(sample_ss)
        self.aug_rng = np.random.default_rng(aug_ss)
        self.net = C.init_critic(cfg.critic_width, cfg.critic_depth, np.random.default_rng(init_ss))
        b1, b2 = cfg.critic_betas
        self.critic_opt = AdamState(lr=schedule_value(cfg.lr_critic, 0), beta1=b1, beta2=b2)
        b1, b2 = cfg.generator_betas
        self.gen_opt = AdamState(lr=schedule_value(cfg.lr_generator, 0), beta1=b1, beta2=b2)
        self.theta = np.zeros(6) if start is None else start.params.copy()
        self.active = np.asarray(active, dtype=bool)
        lo, hi = cfg.augment_scale_range
        self.augment = augment and (cfg.augment_shift_sigma > 0 or lo != hi or lo != 1.0)
        self.trace = []

    @property
    def transform(self):
        return RigidTransform.from_params(self.theta)

    def _augmentation(self):
        if not self.augment:
            return 1.0, None, None
        lo, hi = self.cfg.augment_scale_range
        scale = float(self.aug_rng.uniform(lo, hi))
        sigma = self.cfg.augment_shift_sigma
        shift_target = self.aug_rng.normal(0.0, sigma, size=3)
        shift_source = self.aug_rng.normal(0.0, sigma, size=3)
        return scale, shift_target, shift_source

    def epoch(self, e):
        cfg = self.cfg
        bs = schedule_count(cfg.batch_size, e)
        self.critic_opt.lr = schedule_value(cfg.lr_critic, e)
        self.gen_opt.lr = schedule_value(cfg.lr_generator, e)
        scale, shift_t, shift_s = self._augmentation()

        R = exp_map(self.theta[:3])
        t = self.theta[3:]
        lc = np.nan
        for _ in range(cfg.k_critic):
            x = sample_batch(self.target, bs, self.rng)
            moved = sample_batch(self.source, bs, self.rng) @ R.T + t
            if shift_t is not None:
                x = scale * x + shift_t
                moved = scale * moved + shift_s
            lc, grads = critic_loss_full(self.net, x, moved, cfg.lambda_gp, self.rng)
            if not np.isfinite(lc):
                raise NumericalAbort(f"non-finite critic loss at epoch {e}", self.trace)
            self.net.params, _ = adam_step(self.critic_opt, self.net.params, grads.flat)

        lg = np.nan
        for _ in range(cfg.k_generator):
            xs = sample_batch(self.source, bs, self.rng)
            lg, g = generator_loss(self.net, xs, self.transform, scale, shift_s)
            if not np.isfinite(lg):
                raise NumericalAbort(f"non-finite generator loss at epoch {e}", self.trace)
            g[~self.active] = 0.0
            self.theta, _ = adam_step(self.gen_opt, self.theta, g)
        self.trace.append((e, float(lc), float(lg)))

    def run(self, n_epochs):
        cfg = self.cfg
        history = []
        for e in range(n_epochs):
            self.epoch(e)
            if cfg.early_stop_patience > 0:
                history.append(self.theta.copy())
                p = cfg.early_stop_patience
                if len(history) > p and np.max(np.abs(history[-1] - history[-1 - p])) < cfg.early_stop_tol:
                    log.info("plateau reached after %d epochs", e + 1)
                    return e + 1
        return n_epochs


_ROT = np.array([True, True, True, False, False, False])
_TRANS = ~_ROT


def _points(cloud):
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64)
    if len(pts) == 0:
        raise InvalidArgumentError("point cloud is empty")
    return pts


def _seed_seq(cfg, phase):
    return np.random.SeedSequence([int(cfg.seed) & 0xFFFFFFFFFFFFFFFF, phase])


def register_rotation_phase(source, target, cfg, _return_game=False):
    """Learn the rotation only, with the translation frozen at zero.

    With ``augment_shift_sigma`` or ``augment_scale_range`` set, every epoch
    both batches are scaled by one shared random factor and then shifted by
    independent Gaussian vectors. A pointwise critic still sees the mean
    offset, so this does not make the phase blind to a large translation;
    centre the clouds first (``register`` does).
    """
    game = _Game(_points(source), _points(target), cfg, _seed_seq(cfg, 1), _ROT, augment=True)
    game.epochs_run = game.run(cfg.n_epochs)
    if _return_game:
        return game
    return RigidTransform(game.theta[:3], np.zeros(3))


def register_translation_phase(source, target, fixed_rotation, cfg, _return_game=False):
    """Learn the translation with the rotation held at ``fixed_rotation``."""
    n = cfg.n_epochs if cfg.translation_epochs is None else cfg.translation_epochs
    start = RigidTransform(fixed_rotation.rotation_vector, np.zeros(3))
    game = _Game(_points(source), _points(target), cfg, _seed_seq(cfg, 2), _TRANS,
                 augment=False, start=start)
    game.epochs_run = game.run(n)
    if _return_game:
        return game
    return game.transform


def register(source, target, cfg=None):
    """Align ``source`` to ``target``; the result maps source points onto the target."""
    cfg = TrainConfig() if cfg is None else cfg
    t0 = time.perf_counter()
    src = _points(source)
    tgt = _points(target)

    src_rec = tgt_rec = None
    if cfg.normalize_inputs:
        _, tgt_rec = normalize(tgt)
        if cfg.mode == "rotation":
            # translation is pinned to zero in the input frame, so only rescale
            src_rec = NormalizationRecord(np.zeros(3), tgt_rec.scale)
            tgt_rec = NormalizationRecord(np.zeros(3), tgt_rec.scale)
        else:
            _, src_rec0 = normalize(src)
            # shared scale keeps the mapping back to input coordinates rigid
            src_rec = NormalizationRecord(src_rec0.centroid, tgt_rec.scale)
        src_n, tgt_n = src_rec.apply(src), tgt_rec.apply(tgt)
    else:
        for pts in (src, tgt):
            if np.all(pts == pts[0]):
                raise DegenerateInputError("all points of a cloud coincide")
        src_n, tgt_n = src, tgt

    trace = []
    if cfg.n_epochs == 0:
        local = RigidTransform.identity()
        epochs = 0
    elif cfg.mode == "joint":
        game = _Game(src_n, tgt_n, cfg, _seed_seq(cfg, 0), np.ones(6, dtype=bool), augment=False)
        epochs = game.run(cfg.n_epochs)
        local, trace = game.transform, game.trace
    elif cfg.mode == "rotation":
        game = register_rotation_phase(src_n, tgt_n, cfg, _return_game=True)
        local, trace, epochs = game.transform, game.trace, game.epochs_run
    else:
        g1 = register_rotation_phase(src_n, tgt_n, cfg, _return_game=True)
        g2 = register_translation_phase(src_n, tgt_n, g1.transform, cfg, _return_game=True)
        offset = g1.epochs_run
        trace = g1.trace + [(e + offset, lc, lg) for e, lc, lg in g2.trace]
        local, epochs = g2.transform, g1.epochs_run + g2.epochs_run

    if cfg.normalize_inputs:
        transform = denormalize_transform(local, src_rec, tgt_rec)
    else:
        transform = local
    return RegistrationResult(
        transform=transform,
        epochs_run=epochs,
        loss_trace=trace,
        wall_time=time.perf_counter() - t0,
        normalized_transform=local,
        source_record=src_rec,
        target_record=tgt_rec,
    )


def denormalize_transform(local, src_rec, tgt_rec):
    """Express a transform learned between normalized clouds in input coordinates.

    Both records must share one scale; then
    ``tgt_rec.invert(local(src_rec.apply(x))) == R x + t`` exactly.
    """
    if src_rec.scale != tgt_rec.scale:
        raise InvalidArgumentError("source and target records must share a scale")
    R = local.rotation
    t = tgt_rec.centroid + tgt_rec.scale * local.translation - R @ src_rec.centroid
    return RigidTransform(local.rotation_vector, t)
