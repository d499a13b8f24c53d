"""Membership-inference estimate of the privacy level, per training epoch.

The attack is a loss threshold: a point is called a member when the target
model's loss on it is at most ``tau``. ``tau`` is picked per epoch to
maximise accuracy on shadow models trained the same way on fresh, disjoint
data. The attack's FPR/FNR on the target's member and non-member pools are
turned into an empirical epsilon with

    eps_hat = max(log((1 - delta - FPR) / FNR), log((1 - delta - FNR) / FPR)),

clamped below at zero.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .accountant import best_dp
from .errors import ConfigurationError, ParameterError
from .optimizer import TrainConfig, fmt, iterate
from .problems import draw_logistic_data, logistic_from_arrays

REPORT_COLUMNS = ("epoch", "fpr", "fnr", "eps_hat_median", "eps_hat_lo95", "eps_hat_hi95")


def mia_epsilon(fpr: float, fnr: float, delta: float) -> float:
    """Empirical epsilon from attack error rates; ``inf`` when an error rate is zero."""
    if not (0 <= fpr <= 1 and 0 <= fnr <= 1):
        raise ParameterError(f"fpr and fnr must lie in [0, 1], got fpr={fpr}, fnr={fnr}")
    if not 0 <= delta < 1:
        raise ParameterError(f"delta must lie in [0, 1), got {delta}")
    best = 0.0
    for num, den in ((1.0 - delta - fpr, fnr), (1.0 - delta - fnr, fpr)):
        if num <= 0:
            continue
        if den == 0:
            return math.inf
        best = max(best, math.log(num / den))
    return best


@dataclass(frozen=True)
class LogisticSource:
    """Distribution the member, non-member and shadow pools are drawn from."""

    dim: int = 50
    label_noise: float = 0.2
    lam: float = 1e-3
    seed: int = 0

    @property
    def direction(self) -> np.ndarray:
        return np.random.default_rng((self.seed, 2**32)).standard_normal(self.dim)

    def draw(self, rng: np.random.Generator, n: int):
        return draw_logistic_data(rng, n, self.direction, self.label_noise)


@dataclass(frozen=True)
class AttackConfig:
    epochs: int = 20
    trials: int = 10
    shadows: int = 4
    delta: float = 1e-5
    shuffle_labels: bool = False
    seed: int = 0
    kind: str = "loss_threshold"

    def __post_init__(self):
        if self.epochs < 1 or self.trials < 1 or self.shadows < 1:
            raise ConfigurationError("epochs, trials and shadows must all be >= 1")
        if not 0 <= self.delta < 1:
            raise ConfigurationError(f"delta must lie in [0, 1), got {self.delta}")
        if self.kind != "loss_threshold":
            raise ConfigurationError(f"unsupported attack kind {self.kind!r}")


@dataclass
class AttackReport:
    epochs: np.ndarray
    fpr: np.ndarray  # (trials, epochs)
    fnr: np.ndarray
    eps_hat: np.ndarray
    delta: float
    trials: int
    kind: str = "loss_threshold"
    thresholds: np.ndarray = field(default=None, repr=False)

    def median_eps(self) -> np.ndarray:
        return np.median(self.eps_hat, axis=0)

    def rows(self) -> list[tuple]:
        lo, hi = np.percentile(self.eps_hat, [2.5, 97.5], axis=0)
        fpr = np.median(self.fpr, axis=0)
        fnr = np.median(self.fnr, axis=0)
        med = self.median_eps()
        return [(int(e), fpr[k], fnr[k], med[k], lo[k], hi[k]) for k, e in enumerate(self.epochs)]

    def write_csv(self, fh) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for epoch, *vals in self.rows():
            writer.writerow([epoch, *(fmt(v) for v in vals)])

    def to_csv(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()


def _losses(theta: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    # the ridge term is common to every point and cannot separate members
    return np.logaddexp(0.0, -y * (x @ theta))


def best_threshold(member_losses: np.ndarray, nonmember_losses: np.ndarray) -> float:
    """Threshold maximising accuracy of 'member iff loss <= tau' (lowest such tau on ties)."""
    cands = np.unique(np.concatenate([member_losses, nonmember_losses]))
    m_sorted = np.sort(member_losses)
    nm_sorted = np.sort(nonmember_losses)
    tp = np.searchsorted(m_sorted, cands, side="right")
    fp = np.searchsorted(nm_sorted, cands, side="right")
    correct = tp + (nm_sorted.size - fp)
    # tau = -inf: everything is called a non-member
    if nm_sorted.size >= correct.max():
        return -math.inf
    return float(cands[int(np.argmax(correct))])


def error_rates(member_losses, nonmember_losses, tau: float) -> tuple[float, float]:
    fpr = float(np.mean(nonmember_losses <= tau))
    fnr = float(np.mean(member_losses > tau))
    return fpr, fnr


def _epoch_losses(problem, x_out, y_out, cfg: TrainConfig, steps_per_epoch: int, epochs: int):
    """Member and non-member losses at the end of every epoch."""
    x_in, y_in = problem.features, problem.labels
    out = []
    for state in iterate(problem, cfg):
        if state.t > 0 and state.t % steps_per_epoch == 0:
            out.append((_losses(state.theta, x_in, y_in), _losses(state.theta, x_out, y_out)))
    assert len(out) == epochs
    return out


def run_attack(source: LogisticSource, train_cfg: TrainConfig, attack: AttackConfig) -> AttackReport:
    """Train targets and shadows with DPSGD and attack the targets after each epoch.

    ``train_cfg.mech.n`` is the size of every member (and non-member) pool;
    ``train_cfg.mech.t_iters`` is ignored in favour of
    ``attack.epochs * ceil(n / b)``. Trial ``i`` trains its target with seed
    ``train_cfg.seed + i``.
    """
    mech = train_cfg.mech
    if mech.dim != source.dim:
        raise ConfigurationError(f"mechanism dim={mech.dim} does not match data dim={source.dim}")
    n = mech.n
    if n < 2:
        raise ConfigurationError("member and non-member pools need at least 2 points each")
    steps_per_epoch = math.ceil(n / mech.b)
    run_mech = mech.with_iters(steps_per_epoch * attack.epochs)

    fpr = np.empty((attack.trials, attack.epochs))
    fnr = np.empty_like(fpr)
    eps_hat = np.empty_like(fpr)
    taus = np.empty_like(fpr)
    for trial in range(attack.trials):
        rng = np.random.default_rng((attack.seed, trial))
        shadow_losses = []
        for j in range(attack.shadows):
            x_in, y_in = source.draw(rng, n)
            x_out, y_out = source.draw(rng, n)
            shadow = logistic_from_arrays(x_in, y_in, source.lam)
            seed = train_cfg.seed + attack.trials + trial * attack.shadows + j
            cfg = replace(train_cfg, mech=run_mech, seed=seed % 2**64)
            shadow_losses.append(_epoch_losses(shadow, x_out, y_out, cfg, steps_per_epoch, attack.epochs))
        x_in, y_in = source.draw(rng, n)
        x_out, y_out = source.draw(rng, n)
        target = logistic_from_arrays(x_in, y_in, source.lam)
        cfg = replace(train_cfg, mech=run_mech, seed=(train_cfg.seed + trial) % 2**64)
        target_losses = _epoch_losses(target, x_out, y_out, cfg, steps_per_epoch, attack.epochs)
        perm = rng.permutation(2 * n) if attack.shuffle_labels else None
        for e in range(attack.epochs):
            tau = best_threshold(np.concatenate([s[e][0] for s in shadow_losses]),
                                 np.concatenate([s[e][1] for s in shadow_losses]))
            members, nonmembers = target_losses[e]
            if perm is not None:
                pooled = np.concatenate([members, nonmembers])[perm]
                members, nonmembers = pooled[:n], pooled[n:]
            fpr[trial, e], fnr[trial, e] = error_rates(members, nonmembers, tau)
            eps_hat[trial, e] = mia_epsilon(fpr[trial, e], fnr[trial, e], attack.delta)
            taus[trial, e] = tau
    return AttackReport(np.arange(1, attack.epochs + 1), fpr, fnr, eps_hat, attack.delta,
                        attack.trials, attack.kind, taus)


def theoretical_eps_dp(train_cfg: TrainConfig, epochs: int, delta: float, alpha_grid=None) -> float:
    """Upper bound on eps for the released final model after ``epochs`` epochs."""
    mech = train_cfg.mech
    cfg = mech.with_iters(math.ceil(mech.n / mech.b) * epochs)
    family = "dc" if mech.diameter_d is not None else "gc"
    return best_dp(cfg, family, delta, alpha_grid)[1]
