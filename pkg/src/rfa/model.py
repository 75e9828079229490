"""Synthetic regression models and seeded dataset generation.

A model is ``Y = m(X) + eps`` with Gaussian noise of standard deviation
``sigma``.  Four bounded mean functions are built in, each with a known
sup norm, and two designs for ``X``: uniform on the unit cube, or a
mixture of two nested uniform boxes whose density is bounded above and
below by known constants.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import rng
from ._io import atomic_write_json, atomic_write_text, fmt
from .errors import ConfigError

__all__ = [
    "MEAN_KINDS",
    "RegressionModel",
    "TrainingSet",
    "NoiseBound",
    "evaluate_m",
    "sample_points",
    "sample_dataset",
    "max_noise_square_bound",
    "write_dataset",
    "read_dataset",
]

MEAN_KINDS = ("constant", "linear", "sines", "step")
X_DISTRIBUTIONS = ("uniform", "mixture")

# side of the inner box of the mixture design, centred in the cube
_INNER_SIDE = 0.5


@dataclass(frozen=True)
class RegressionModel:
    """Mean function, noise level and design distribution.

    Parameters
    ----------
    d : int
        Input dimension.
    mean : str
        One of ``constant`` (``m = value``), ``linear`` (``<a, x>`` clipped
        to ``[-clip, clip]``), ``sines`` (``scale * prod sin(2 pi x_j)``)
        or ``step`` (``height`` where ``x_1 >= threshold``, else 0).
    params : dict
        Parameters of the mean function; missing keys take defaults.
    sigma : float
        Noise standard deviation.
    x_dist : str
        ``uniform`` or ``mixture``.
    density_ratio : float
        Ratio between the highest and lowest density of the mixture
        design, in ``[1, 4]``.
    """

    d: int
    mean: str = "sines"
    params: dict = field(default_factory=dict)
    sigma: float = 0.0
    x_dist: str = "uniform"
    density_ratio: float = 4.0

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ConfigError(f"d must be a positive integer, got {self.d!r}")
        if self.mean not in MEAN_KINDS:
            raise ConfigError(f"mean must be one of {MEAN_KINDS}, got {self.mean!r}")
        if not (self.sigma >= 0 and math.isfinite(self.sigma)):
            raise ConfigError(f"sigma must be finite and non-negative, got {self.sigma!r}")
        if self.x_dist not in X_DISTRIBUTIONS:
            raise ConfigError(f"x_dist must be one of {X_DISTRIBUTIONS}, got {self.x_dist!r}")
        if not 1.0 <= self.density_ratio <= 4.0:
            raise ConfigError("density_ratio must lie in [1, 4]")
        object.__setattr__(self, "params", self._resolved_params())

    def _resolved_params(self) -> dict:
        p = dict(self.params)
        if self.mean == "constant":
            p.setdefault("value", 0.0)
        elif self.mean == "linear":
            a = np.asarray(p.get("a", np.ones(self.d)), dtype=float)
            if a.shape != (self.d,):
                raise ConfigError(f"linear coefficients need length {self.d}, got {a.shape}")
            p["a"] = a.tolist()
            p.setdefault("clip", float(np.abs(a).sum()))
            if p["clip"] < 0:
                raise ConfigError("clip must be non-negative")
        elif self.mean == "sines":
            p.setdefault("scale", 1.0)
        elif self.mean == "step":
            p.setdefault("height", 1.0)
            p.setdefault("threshold", 0.5)
        unknown = set(p) - {"value", "a", "clip", "scale", "height", "threshold"}
        if unknown:
            raise ConfigError(f"unknown mean parameters {sorted(unknown)}")
        return {k: (float(v) if not isinstance(v, list) else v) for k, v in p.items()}

    @property
    def sup_norm(self) -> float:
        """Known value of ``sup |m|`` over the unit cube."""
        p = self.params
        if self.mean == "constant":
            return abs(p["value"])
        if self.mean == "linear":
            a = np.asarray(p["a"])
            reach = max(a[a > 0].sum(), -a[a < 0].sum(), 0.0)
            return float(min(p["clip"], reach))
        if self.mean == "sines":
            return abs(p["scale"])
        return abs(p["height"])

    @property
    def density_bounds(self) -> tuple[float, float]:
        """Lower and upper bounds ``(c, C)`` of the design density."""
        if self.x_dist == "uniform":
            return 1.0, 1.0
        w = _mixture_weight(self.d, self.density_ratio)
        return w, w * self.density_ratio

    @property
    def tag(self) -> str:
        return f"{self.mean}-d{self.d}-s{self.sigma:g}-{self.x_dist}"

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "mean": self.mean,
            "params": self.params,
            "sigma": self.sigma,
            "x_dist": self.x_dist,
            "density_ratio": self.density_ratio,
            "sup_norm": self.sup_norm,
            "density_bounds": list(self.density_bounds),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "RegressionModel":
        keys = ("d", "mean", "params", "sigma", "x_dist", "density_ratio")
        return cls(**{k: obj[k] for k in keys if k in obj})


def _mixture_weight(d: int, ratio: float) -> float:
    # weight of the full-cube component so that inner/outer density = ratio
    v = _INNER_SIDE**d
    return 1.0 / (1.0 + v * (ratio - 1.0))


def evaluate_m(model: RegressionModel, x) -> float | np.ndarray:
    """Regression function at one point ``(d,)`` or a batch ``(n, d)``."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    if X.ndim != 2 or X.shape[1] != model.d:
        raise ConfigError(f"point dimension {x.shape} does not match model dimension {model.d}")
    p = model.params
    if model.mean == "constant":
        out = np.full(X.shape[0], p["value"])
    elif model.mean == "linear":
        out = np.clip(X @ np.asarray(p["a"]), -p["clip"], p["clip"])
    elif model.mean == "sines":
        out = p["scale"] * np.prod(np.sin(2.0 * np.pi * X), axis=1)
    else:
        out = np.where(X[:, 0] >= p["threshold"], p["height"], 0.0)
    return float(out[0]) if single else out


@dataclass(frozen=True, eq=False)
class TrainingSet:
    """Design points in the unit cube with their responses."""

    points: np.ndarray
    responses: np.ndarray
    seed: int
    model_tag: str

    def __post_init__(self):
        X = np.ascontiguousarray(self.points, dtype=np.float64)
        Y = np.ascontiguousarray(self.responses, dtype=np.float64)
        if X.ndim != 2 or Y.ndim != 1 or X.shape[0] != Y.shape[0]:
            raise ConfigError("points must be (n, d) and responses (n,)")
        if X.shape[0] < 1:
            raise ConfigError("a training set needs at least one point")
        if X.size and (X.min() < 0.0 or X.max() > 1.0):
            raise ConfigError("points must lie in the unit cube")
        if not np.all(np.isfinite(Y)):
            raise ConfigError("responses must be finite")
        X.setflags(write=False)
        Y.setflags(write=False)
        object.__setattr__(self, "points", X)
        object.__setattr__(self, "responses", Y)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]


def sample_points(model: RegressionModel, n: int, gen: np.random.Generator) -> np.ndarray:
    """Draw ``n`` design points from the model's ``X`` distribution."""
    X = gen.random((n, model.d))
    if model.x_dist == "mixture":
        w = _mixture_weight(model.d, model.density_ratio)
        inner = gen.random(n) >= w
        lo = 0.5 - 0.5 * _INNER_SIDE
        X[inner] = lo + _INNER_SIDE * X[inner]
    return X


def sample_dataset(model: RegressionModel, n: int, seed: int) -> TrainingSet:
    """Draw ``n`` pairs ``(X_i, m(X_i) + eps_i)``; bit-identical per seed."""
    if int(n) != n or n < 1:
        raise ConfigError(f"n must be a positive integer, got {n!r}")
    gx = rng.generator(seed, "dataset/x")
    ge = rng.generator(seed, "dataset/noise")
    X = sample_points(model, int(n), gx)
    m = evaluate_m(model, X)
    if model.sigma == 0:
        Y = m.copy()
    else:
        Y = m + model.sigma * ge.standard_normal(int(n))
    return TrainingSet(X, Y, int(seed), model.tag)


@dataclass(frozen=True)
class NoiseBound:
    n: int
    sigma: float
    estimate: float
    standard_error: float
    bound: float
    passed: bool


def max_noise_square_bound(n: int, sigma: float, replicates: int, seed: int) -> NoiseBound:
    """Monte Carlo ``E[max_i eps_i^2]`` against ``sigma^2 (1 + 4 log n)``."""
    if n < 1 or replicates < 1:
        raise ConfigError("n and replicates must be positive")
    gen = rng.generator(seed, "noise-max")
    maxima = np.empty(replicates)
    chunk = max(1, 2_000_000 // n)
    for s in range(0, replicates, chunk):
        e = min(replicates, s + chunk)
        maxima[s:e] = np.max(gen.standard_normal((e - s, n)) ** 2, axis=1)
    maxima *= sigma**2
    est = float(maxima.mean())
    se = float(maxima.std(ddof=1) / math.sqrt(replicates)) if replicates > 1 else 0.0
    bound = sigma**2 * (1.0 + 4.0 * math.log(n))
    return NoiseBound(n, float(sigma), est, se, bound, est <= bound + 3.0 * se)


def write_dataset(data: TrainingSet, path: str | Path, model: RegressionModel | None = None) -> None:
    """Write ``x1..xd,y`` rows plus a JSON sidecar next to ``path``."""
    path = Path(path)
    header = ",".join([f"x{j + 1}" for j in range(data.d)] + ["y"])
    rows = np.column_stack([data.points, data.responses])
    body = "\n".join(",".join(fmt(v) for v in row) for row in rows.tolist())
    atomic_write_text(path, header + "\n" + body + "\n")
    meta: dict[str, Any] = {"seed": data.seed, "model_tag": data.model_tag, "n": data.n, "d": data.d}
    if model is not None:
        meta["model"] = model.to_dict()
    atomic_write_json(path.with_suffix(".json"), meta)


def read_dataset(path: str | Path) -> TrainingSet:
    path = Path(path)
    raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    meta = json.loads(path.with_suffix(".json").read_text())
    return TrainingSet(raw[:, :-1], raw[:, -1], int(meta["seed"]), meta["model_tag"])
