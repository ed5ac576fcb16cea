"""Two-group Gaussian synthetic data with group-dependent label frequencies.

Features for each group are isotropic Gaussians; the condition probability
is a logistic function of the signed distance to a hyperplane through the
origin; observed labels thin the true labels by a per-group frequency.
Variants cover separable classes, a sweep over the gap between group means,
and a controlled breach of the shared-condition-probability assumption.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

from .data import FeatureMatrix, LabeledDataset

# Sub-stream indices of the per-dataset seed: changing one column's draws
# (e.g. relabeling s under a new c) never perturbs the others.
_STREAM_X, _STREAM_Y, _STREAM_S, _STREAM_SEPARABLE_S = 0, 1, 2, 3


@dataclass
class GaussSynthConfig:
    n_dims: int = 5
    mean_a: np.ndarray | None = None   # default: -1 in every coordinate
    mean_b: np.ndarray | None = None   # default: +1 in every coordinate
    variance: float = 16.0
    n_a: int = 10000
    n_b: int = 20000
    hyperplane: np.ndarray | None = None  # default: all-ones
    c: dict[str, float] = field(default_factory=lambda: {"a": 0.5, "b": 0.25})
    separable: bool = False
    violation_delta: float = 0.0

    def __post_init__(self):
        if self.mean_a is None:
            self.mean_a = -np.ones(self.n_dims)
        if self.mean_b is None:
            self.mean_b = np.ones(self.n_dims)
        if self.hyperplane is None:
            self.hyperplane = np.ones(self.n_dims)
        self.mean_a = np.asarray(self.mean_a, dtype=np.float64)
        self.mean_b = np.asarray(self.mean_b, dtype=np.float64)
        self.hyperplane = np.asarray(self.hyperplane, dtype=np.float64)
        if self.variance <= 0:
            raise ValueError("variance must be positive")
        if set(self.c) != {"a", "b"}:
            raise ValueError("c must map exactly the groups 'a' and 'b'")
        if any(not (0.0 <= v <= 1.0) for v in self.c.values()):
            raise ValueError("labeling frequencies must lie in [0, 1]")
        if not abs(self.violation_delta) < 1.0:
            raise ValueError("violation_delta must satisfy |delta| < 1")
        for name, vec in (("mean_a", self.mean_a), ("mean_b", self.mean_b),
                          ("hyperplane", self.hyperplane)):
            if vec.shape != (self.n_dims,):
                raise ValueError(f"{name} must have length n_dims={self.n_dims}")


def _streams(seed: int):
    return [np.random.default_rng(np.random.SeedSequence([int(seed), k]))
            for k in (_STREAM_X, _STREAM_Y, _STREAM_S)]


def _generate(cfg: GaussSynthConfig, seed: int, violation_delta: float) -> LabeledDataset:
    rng_x, rng_y, rng_s = _streams(seed)
    n = cfg.n_a + cfg.n_b
    group = np.concatenate([np.zeros(cfg.n_a, dtype=np.int64),
                            np.ones(cfg.n_b, dtype=np.int64)])
    std = np.sqrt(cfg.variance)
    # Standard normals first: the x stream is identical across mean/c sweeps.
    x = rng_x.standard_normal((n, cfg.n_dims)) * std
    x[:cfg.n_a] += cfg.mean_a
    x[cfg.n_a:] += cfg.mean_b

    w = cfg.hyperplane
    z = x @ w / np.linalg.norm(w)
    latent_p = expit(z)
    if violation_delta != 0.0:
        half = violation_delta / 2.0
        latent_p = latent_p + np.where(group == 0, half, -half)
        latent_p = np.clip(latent_p, 0.0, 1.0)

    y = (rng_y.uniform(size=n) < latent_p).astype(np.int8)
    c_row = np.where(group == 0, cfg.c["a"], cfg.c["b"])
    s = ((rng_s.uniform(size=n) < c_row) & (y == 1)).astype(np.int8)

    data = LabeledDataset(
        features=FeatureMatrix(x),
        group=group,
        group_names=["a", "b"],
        s=s,
        y=y,
        latent_p=latent_p,
        gen_info={"seed": int(seed), "c": dict(cfg.c), "separable": False,
                  "violation_delta": float(violation_delta)},
    )
    if cfg.separable:
        data = make_separable(data)
    return data


def generate_gauss(config: GaussSynthConfig, seed: int) -> LabeledDataset:
    """Draw one dataset from the generative model.

    Row order is group a's block followed by group b's. ``latent_p`` stores
    the exact per-row condition probability, so s=1 implies y=1 by
    construction and the true relative prevalence is recoverable downstream.
    """
    return _generate(config, seed, config.violation_delta)


def make_separable(data: LabeledDataset) -> LabeledDataset:
    """Collapse condition probabilities to {0, 1} and drop the ambiguous core.

    The 40% of rows with ``latent_p`` closest to 0.5 are removed (ties broken
    by row index); survivors keep their original order, get ``latent_p``
    thresholded to 0/1, ``y`` set equal to it, and ``s`` redrawn from a fresh
    sub-stream of the dataset's recorded seed.
    """
    if data.latent_p is None:
        raise ValueError("make_separable requires latent_p (generated data only)")
    if data.gen_info is None or "seed" not in data.gen_info or "c" not in data.gen_info:
        raise ValueError("make_separable requires generator provenance (seed and c)")
    n = data.n_rows
    closeness = np.abs(data.latent_p - 0.5)
    order = np.argsort(closeness, kind="stable")
    n_drop = int(np.floor(0.4 * n))
    survivors = np.sort(order[n_drop:])

    out = data.take_rows(survivors)
    out.latent_p = (out.latent_p > 0.5).astype(np.float64)
    out.y = out.latent_p.astype(np.int8)

    c_map = data.gen_info["c"]
    c_row = np.asarray([c_map[out.group_names[g]] for g in out.group])
    rng = np.random.default_rng(
        np.random.SeedSequence([int(data.gen_info["seed"]), _STREAM_SEPARABLE_S]))
    out.s = ((rng.uniform(size=out.n_rows) < c_row) & (out.y == 1)).astype(np.int8)
    out.gen_info = dict(data.gen_info, separable=True)
    return out


def shift_sweep_config(v: float) -> GaussSynthConfig:
    """Config with group a's mean fixed at -1 and group b's at v * ones.

    ``v = 1`` reproduces the default configuration; ``v = -1`` makes the two
    group distributions coincide.
    """
    cfg = GaussSynthConfig()
    return replace(cfg, mean_b=float(v) * np.ones(cfg.n_dims))


def generate_violation(config: GaussSynthConfig, delta: float, seed: int) -> LabeledDataset:
    """Generate data where group a's condition probability exceeds group b's.

    Applies a symmetric additive offset of +delta/2 (group a) and -delta/2
    (group b) to the shared logistic probability, clamped to [0, 1], so the
    pooled base rate stays roughly constant while the pointwise gap equals
    delta away from the clamp boundaries. Unlike the config field, the
    explicit delta is not capped at 1, so fully saturating offsets are
    expressible.
    """
    if delta < 0:
        raise ValueError("delta must be non-negative")
    return _generate(config, seed, float(delta))
