"""DPSGD with gradient clipping and optional projection onto a ball.

Each update is

    theta <- Proj_D(theta - eta * (mean_i clip_C(grad l_i(theta)) + zeta)),
    zeta ~ N(0, sigma_dp^2 I),

starting from theta_0 = 0 and running exactly ``T`` updates. Without a
radius the projection is skipped and the method is plain DPSGD with
gradient clipping.

Randomness: step ``t`` of a run with seed ``s`` draws from
``numpy.random.default_rng((s, t))`` (PCG64 seeded through SeedSequence).
The batch is drawn first, then ``dim`` standard normals via
``Generator.standard_normal`` (ziggurat). A step is therefore a pure
function of (state, seed, t) and runs are bit-reproducible.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .accountant import MechanismConfig
from .errors import ParameterError
from .problems import ProblemSpec

SAMPLING = ("uniform_without_replacement", "poisson")
TRACE_COLUMNS = ("t", "loss_gap", "grad_norm", "clip_fraction", "projected")


def clip(g, c: float) -> np.ndarray:
    """Scale ``g`` by min(1, c / ||g||)."""
    if not c > 0:
        raise ParameterError(f"clip norm must be positive, got {c}")
    g = np.asarray(g, dtype=float)
    norm = np.linalg.norm(g)
    if norm <= c:
        return g.copy()
    return g * (c / norm)


def clip_rows(grads: np.ndarray, c: float) -> tuple[np.ndarray, np.ndarray]:
    """Clip every row of ``grads``; also return which rows were scaled."""
    norms = np.linalg.norm(grads, axis=1)
    clipped = norms > c
    scale = np.ones_like(norms)
    scale[clipped] = c / norms[clipped]
    return grads * scale[:, None], clipped


def project(theta, d_radius: float) -> np.ndarray:
    """Euclidean projection onto {x : ||x|| <= d_radius}."""
    if not d_radius > 0:
        raise ParameterError(f"projection radius must be positive, got {d_radius}")
    theta = np.asarray(theta, dtype=float)
    norm = np.linalg.norm(theta)
    if norm <= d_radius:
        return theta.copy()
    return theta * (d_radius / norm)


@dataclass(frozen=True)
class TrainConfig:
    mech: MechanismConfig
    seed: int = 0
    sampling: str = "uniform_without_replacement"
    record_every: int = 1

    def __post_init__(self):
        if self.sampling not in SAMPLING:
            raise ParameterError(f"sampling must be one of {SAMPLING}, got {self.sampling!r}")
        if int(self.record_every) < 1:
            raise ParameterError(f"record_every must be >= 1, got {self.record_every}")
        if not 0 <= int(self.seed) < 2**64:
            raise ParameterError(f"seed must be an unsigned 64-bit integer, got {self.seed}")


@dataclass(frozen=True)
class TrainState:
    t: int
    theta: np.ndarray
    clip_fraction: float = 0.0
    projected: bool = False


def initial_state(dim: int) -> TrainState:
    return TrainState(0, np.zeros(dim))


def _draw_batch(rng: np.random.Generator, n: int, b: int, sampling: str) -> np.ndarray:
    if sampling == "poisson":
        return np.flatnonzero(rng.random(n) < b / n)
    return rng.choice(n, size=b, replace=False)


def step(state: TrainState, problem: ProblemSpec, cfg: TrainConfig) -> TrainState:
    """One noisy clipped update from ``state``; deterministic in (seed, state.t)."""
    mech = cfg.mech
    if mech.n != problem.n:
        raise ParameterError(f"mechanism n={mech.n} does not match problem n={problem.n}")
    rng = np.random.default_rng((int(cfg.seed), int(state.t)))
    batch = _draw_batch(rng, mech.n, mech.b, cfg.sampling)
    noise = rng.standard_normal(problem.dim)
    if batch.size:
        grads, clipped = clip_rows(problem.sample_gradients(state.theta, batch), mech.clip_c)
        # divide by the nominal b, also under Poisson sampling
        update = grads.sum(axis=0) / mech.b
        clip_fraction = float(clipped.mean())
    else:
        update = np.zeros(problem.dim)
        clip_fraction = 0.0
    theta = state.theta - mech.eta * (update + mech.sigma_dp * noise)
    projected = False
    if mech.diameter_d is not None:
        projected = bool(np.linalg.norm(theta) > mech.diameter_d)
        if projected:
            theta = theta * (mech.diameter_d / np.linalg.norm(theta))
    return TrainState(state.t + 1, theta, clip_fraction, projected)


def iterate(problem: ProblemSpec, cfg: TrainConfig) -> Iterator[TrainState]:
    """Yield theta_0, theta_1, ..., theta_T."""
    state = initial_state(problem.dim)
    yield state
    for _ in range(cfg.mech.t_iters):
        state = step(state, problem, cfg)
        yield state


@dataclass
class TraceRecord:
    t: int
    theta: np.ndarray
    loss_gap: float
    grad_norm: float
    clip_fraction: float
    projected: bool


@dataclass
class TrainTrace:
    records: list[TraceRecord] = field(default_factory=list)

    @property
    def final(self) -> TraceRecord:
        return self.records[-1]

    @property
    def min_loss_gap(self) -> float:
        return min(r.loss_gap for r in self.records)

    @property
    def min_grad_norm(self) -> float:
        return min(r.grad_norm for r in self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def write_csv(self, fh) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for r in self.records:
            writer.writerow([r.t, fmt(r.loss_gap), fmt(r.grad_norm), fmt(r.clip_fraction), int(r.projected)])

    def to_csv(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()


def fmt(x: float) -> str:
    """Twelve significant digits, the serialisation used for every CSV float."""
    return f"{float(x):.12g}"


def _record(problem: ProblemSpec, state: TrainState) -> TraceRecord:
    return TraceRecord(
        t=state.t,
        theta=state.theta.copy(),
        loss_gap=problem.loss_gap(state.theta),
        grad_norm=float(np.linalg.norm(problem.population_gradient(state.theta))),
        clip_fraction=state.clip_fraction,
        projected=state.projected,
    )


def train(problem: ProblemSpec, cfg: TrainConfig) -> TrainTrace:
    """Run ``T`` updates, recording every ``record_every`` steps and the last one."""
    trace = TrainTrace()
    last_t = cfg.mech.t_iters
    for state in iterate(problem, cfg):
        if state.t % cfg.record_every == 0 or state.t == last_t:
            trace.records.append(_record(problem, state))
    return trace

