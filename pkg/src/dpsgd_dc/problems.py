"""Synthetic objectives with exact per-sample gradients and known optima.

Two kinds are provided:

``quadratic``
    l_i(theta) = 0.5 (theta - c_i)^T A_i (theta - c_i) with A_i symmetric PSD.
    The optimum, smoothness and strong convexity are exact.

``logistic``
    l_i(theta) = log(1 + exp(-y_i x_i^T theta)) + 0.5 lam ||theta||^2.
    The optimum comes from Newton's method; ``smooth_l`` is the Hessian
    bound lambda_max(X^T X / n) / 4 + lam and ``strong_mu`` is lam.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import ConfigurationError, ParameterError

KINDS = ("quadratic", "logistic")


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    kind: str
    dim: int
    n: int
    theta_star: np.ndarray
    smooth_l: float
    strong_mu: float
    # per-sample gradient Lipschitz constant (>= smooth_l)
    sample_smooth_l: float
    # quadratic data
    hessians: np.ndarray | None = None
    centers: np.ndarray | None = None
    # logistic data
    features: np.ndarray | None = None
    labels: np.ndarray | None = None
    lam: float = 0.0
    sgd_sigma: float | None = None
    loss_star: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "loss_star", float(self.population_loss(self.theta_star)))

    # -- per-sample quantities ---------------------------------------------

    def _check_index(self, xi: int) -> int:
        if not 0 <= xi < self.n:
            raise IndexError(f"sample index {xi} out of range for n={self.n}")
        return int(xi)

    def sample_gradient(self, theta, xi: int) -> np.ndarray:
        xi = self._check_index(xi)
        return self.sample_gradients(theta, np.array([xi]))[0]

    def sample_gradients(self, theta, idx=None) -> np.ndarray:
        """Per-sample gradients stacked as rows, for indices ``idx`` (all if None)."""
        theta = np.asarray(theta, dtype=float)
        idx = np.arange(self.n) if idx is None else np.asarray(idx, dtype=int)
        if self.kind == "quadratic":
            diff = theta[None, :] - self.centers[idx]
            return np.einsum("kij,kj->ki", self.hessians[idx], diff)
        x = self.features[idx]
        y = self.labels[idx]
        margin = y * (x @ theta)
        # d/dm log(1 + e^{-m}) = -sigmoid(-m)
        weight = -y * _sigmoid(-margin)
        return weight[:, None] * x + self.lam * theta[None, :]

    def sample_losses(self, theta, idx=None) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        idx = np.arange(self.n) if idx is None else np.asarray(idx, dtype=int)
        if self.kind == "quadratic":
            diff = theta[None, :] - self.centers[idx]
            return 0.5 * np.einsum("ki,kij,kj->k", diff, self.hessians[idx], diff)
        margin = self.labels[idx] * (self.features[idx] @ theta)
        return np.logaddexp(0.0, -margin) + 0.5 * self.lam * float(theta @ theta)

    # -- population quantities ---------------------------------------------

    def population_loss(self, theta) -> float:
        return float(np.mean(self.sample_losses(theta)))

    def population_gradient(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if self.kind == "quadratic":
            # sum_i A_i (theta - c_i), without materialising the per-sample rows
            return (self._mean_hessian() @ theta) - self._mean_hc()
        return np.mean(self.sample_gradients(theta), axis=0)

    def loss_gap(self, theta) -> float:
        return self.population_loss(theta) - self.loss_star

    def sgd_variance(self, theta) -> float:
        """Exact E_i ||grad l_i(theta) - grad l(theta)||^2 by enumerating all samples."""
        grads = self.sample_gradients(theta)
        dev = grads - grads.mean(axis=0)
        return float(np.mean(np.sum(dev * dev, axis=1)))

    def estimate_sgd_sigma(self, probe_points: Iterable) -> float:
        """Square root of the largest per-sample gradient variance over the probes.

        This is a lower bound on any valid sigma_SGD (the true constant is a
        supremum over all theta) and is used as the working value.
        """
        probes = [np.asarray(p, dtype=float) for p in probe_points]
        if not probes:
            raise ParameterError("estimate_sgd_sigma needs at least one probe point")
        return math.sqrt(max(self.sgd_variance(p) for p in probes))

    def with_sgd_sigma(self, probe_points: Iterable) -> "ProblemSpec":
        sigma = self.estimate_sgd_sigma(probe_points)
        clone = _copy(self)
        object.__setattr__(clone, "sgd_sigma", sigma)
        return clone

    # cached helpers for the quadratic kind
    def _mean_hessian(self) -> np.ndarray:
        cached = self.__dict__.get("_mh")
        if cached is None:
            cached = self.hessians.mean(axis=0)
            object.__setattr__(self, "_mh", cached)
        return cached

    def _mean_hc(self) -> np.ndarray:
        cached = self.__dict__.get("_mhc")
        if cached is None:
            cached = np.einsum("kij,kj->i", self.hessians, self.centers) / self.n
            object.__setattr__(self, "_mhc", cached)
        return cached


def _copy(spec: ProblemSpec) -> ProblemSpec:
    clone = object.__new__(ProblemSpec)
    clone.__dict__.update(spec.__dict__)
    return clone


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


# ---------------------------------------------------------------------------
# Constructors


def quadratic_from_arrays(hessians, centers) -> ProblemSpec:
    """Build a quadratic problem from per-sample PSD matrices and centres."""
    hessians = np.asarray(hessians, dtype=float)
    centers = np.asarray(centers, dtype=float)
    if hessians.ndim != 3 or hessians.shape[1] != hessians.shape[2]:
        raise ParameterError("hessians must have shape (n, d, d)")
    n, d, _ = hessians.shape
    if centers.shape != (n, d):
        raise ParameterError(f"centers must have shape ({n}, {d}), got {centers.shape}")
    if not np.allclose(hessians, np.transpose(hessians, (0, 2, 1))):
        raise ParameterError("per-sample hessians must be symmetric")
    sample_eigs = np.linalg.eigvalsh(hessians)
    if sample_eigs.min() < -1e-12:
        raise ParameterError("per-sample hessians must be positive semidefinite")
    mean_h = hessians.mean(axis=0)
    eigs = np.linalg.eigvalsh(mean_h)
    mu, big_l = float(eigs[0]), float(eigs[-1])
    if mu <= 0:
        raise ParameterError("mean hessian must be positive definite")
    rhs = np.einsum("kij,kj->i", hessians, centers) / n
    theta_star = np.linalg.solve(mean_h, rhs)
    return ProblemSpec(
        kind="quadratic", dim=d, n=n, theta_star=theta_star, smooth_l=big_l, strong_mu=mu,
        sample_smooth_l=float(sample_eigs.max()), hessians=hessians, centers=centers,
    )


def make_quadratic(dim: int, n: int, seed: int = 0, *, curvature: float = 1.0, spread: float = 1.0,
                   center=None, anisotropy: float = 0.5) -> ProblemSpec:
    """Random strongly convex quadratic.

    A_i = curvature * I + anisotropy * u_i u_i^T with u_i ~ N(0, I/d); the
    centres are ``center + spread * N(0, I)`` (``center`` defaults to ones).
    """
    if dim < 1 or n < 1:
        raise ParameterError("dim and n must be >= 1")
    rng = np.random.default_rng(seed)
    u = rng.standard_normal((n, dim)) / math.sqrt(dim)
    hessians = curvature * np.eye(dim)[None, :, :] + anisotropy * np.einsum("ki,kj->kij", u, u)
    base = np.ones(dim) if center is None else np.asarray(center, dtype=float)
    centers = base[None, :] + spread * rng.standard_normal((n, dim))
    return quadratic_from_arrays(hessians, centers)


def logistic_from_arrays(features, labels, lam: float, *, tol: float = 1e-10,
                         max_iter: int = 100) -> ProblemSpec:
    """Build a ridge-regularised logistic problem; the optimum is found by Newton's method."""
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=float)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise ParameterError("features must be (n, d) and labels (n,)")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ParameterError("labels must be -1 or +1")
    if not lam > 0:
        raise ParameterError(f"ridge coefficient lam must be positive, got {lam}")
    n, d = x.shape
    theta = np.zeros(d)
    for _ in range(max_iter):
        margin = y * (x @ theta)
        s = _sigmoid(-margin)
        grad = -(x.T @ (y * s)) / n + lam * theta
        if np.linalg.norm(grad) <= tol:
            break
        curv = s * (1.0 - s)
        hess = (x.T * curv) @ x / n + lam * np.eye(d)
        theta = theta - np.linalg.solve(hess, grad)
    else:
        raise ParameterError("Newton solve for the logistic optimum did not converge")
    gram_top = float(np.linalg.eigvalsh(x.T @ x / n)[-1])
    sample_top = float(np.max(np.sum(x * x, axis=1)))
    return ProblemSpec(
        kind="logistic", dim=d, n=n, theta_star=theta, smooth_l=gram_top / 4.0 + lam,
        strong_mu=float(lam), sample_smooth_l=sample_top / 4.0 + lam, features=x, labels=y, lam=float(lam),
    )


def draw_logistic_data(rng: np.random.Generator, n: int, direction: np.ndarray, label_noise: float):
    """Gaussian features with labels sign(x . w) flipped with probability ``label_noise``."""
    x = rng.standard_normal((n, direction.size))
    y = np.where(x @ direction >= 0, 1.0, -1.0)
    flip = rng.random(n) < label_noise
    return x, np.where(flip, -y, y)


def make_logistic(dim: int, n: int, seed: int = 0, *, lam: float = 0.01,
                  label_noise: float = 0.1) -> ProblemSpec:
    rng = np.random.default_rng(seed)
    direction = rng.standard_normal(dim)
    x, y = draw_logistic_data(rng, n, direction, label_noise)
    return logistic_from_arrays(x, y, lam)


# ---------------------------------------------------------------------------
# Config loading

_PROBLEM_KEYS = {
    "kind": str, "dim": int, "n": int, "seed": int, "lam": float, "label_noise": float,
    "curvature": float, "spread": float, "anisotropy": float, "center": str,
}


def problem_from_mapping(values: dict) -> ProblemSpec:
    """Build a problem from flat string/number key-values (the ``[problem]`` section)."""
    unknown = set(values) - set(_PROBLEM_KEYS)
    if unknown:
        raise ConfigurationError(f"unknown problem keys: {sorted(unknown)}")
    try:
        opts = {k: _PROBLEM_KEYS[k](v) for k, v in values.items()}
    except ValueError as exc:
        raise ConfigurationError(f"bad problem value: {exc}") from None
    kind = opts.pop("kind", "quadratic")
    dim = opts.pop("dim", 2)
    n = opts.pop("n", 100)
    seed = opts.pop("seed", 0)
    if kind == "quadratic":
        for key in ("lam", "label_noise"):
            if key in opts:
                raise ConfigurationError(f"{key} does not apply to quadratic problems")
        if "center" in opts:
            opts["center"] = [float(v) for v in opts["center"].split(",")]
            if len(opts["center"]) != dim:
                raise ConfigurationError("center must list dim comma-separated values")
        return make_quadratic(dim, n, seed, **opts)
    if kind == "logistic":
        for key in ("curvature", "spread", "anisotropy", "center"):
            if key in opts:
                raise ConfigurationError(f"{key} does not apply to logistic problems")
        return make_logistic(dim, n, seed, **opts)
    raise ConfigurationError(f"problem kind must be one of {KINDS}, got {kind!r}")


def load_problem(path) -> ProblemSpec:
    """Read the ``[problem]`` section of an INI file."""
    parser = configparser.ConfigParser()
    parser.optionxform = str
    if not parser.read(Path(path)):
        raise ConfigurationError(f"cannot read problem config {path}")
    if "problem" not in parser:
        raise ConfigurationError(f"{path} has no [problem] section")
    return problem_from_mapping(dict(parser["problem"]))
