"""Utility upper bounds for DPSGD and the parameter recommender built on them.

All rates are evaluated with their hidden constant set to ``constant_c``
(default 1). The bounds are big-O shapes: they are meant for comparing
settings and locating trade-off optima, not as literal inequalities.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

from .accountant import MechanismConfig
from .errors import ParameterError, PreconditionError

TARGETS = ("gc_gradient_norm", "dc_optimality_gap")
REGIMES = ("gc_small_noise", "gc_large_noise", "dc_small_noise", "dc_large_noise", "dc_large_T")


@dataclass(frozen=True)
class UtilityQuery:
    """Inputs of a utility bound. ``L`` and ``d`` are read from ``mech``."""

    mech: MechanismConfig
    sgd_sigma: float = 0.0
    strong_mu: float | None = None
    constant_c: float = 1.0
    target: str = "gc_gradient_norm"
    # evaluate even when the step-size condition fails (emits a warning)
    allow_large_step: bool = False

    def __post_init__(self):
        if not self.constant_c > 0:
            raise ParameterError(f"constant_c must be positive, got {self.constant_c}")
        if self.target not in TARGETS:
            raise ParameterError(f"target must be one of {TARGETS}, got {self.target!r}")
        if self.sgd_sigma < 0:
            raise ParameterError(f"sgd_sigma must be nonnegative, got {self.sgd_sigma}")
        if self.target == "dc_optimality_gap":
            if self.strong_mu is None or not self.strong_mu > 0:
                raise ParameterError("dc_optimality_gap needs a positive strong_mu")
            if self.mech.diameter_d is None:
                raise ParameterError("dc_optimality_gap needs a bounded domain (diameter_d)")

    def with_sigma(self, sigma_dp: float) -> "UtilityQuery":
        return replace(self, mech=self.mech.with_sigma(sigma_dp))


@dataclass(frozen=True)
class Recommendation:
    regime: str
    eta: float
    clip_c: float
    t_iters: int
    predicted_utility: float


def _step_guard(q: UtilityQuery, limit: float, label: str) -> None:
    if q.mech.eta > limit:
        msg = f"step size eta={q.mech.eta} exceeds {label}={limit:.6g}"
        if not q.allow_large_step:
            raise PreconditionError(msg)
        warnings.warn(msg, stacklevel=3)


def _common(q: UtilityQuery):
    m = q.mech
    if m.t_iters < 1:
        raise ParameterError("utility bounds need T >= 1")
    if not m.clip_c > 0:
        raise ParameterError("utility bounds need C > 0")
    if not m.eta > 0:
        raise ParameterError("utility bounds need eta > 0")
    return m


def gc_utility_terms(q: UtilityQuery) -> tuple[float, ...]:
    """The six terms bounding min_t E||grad l(theta_t)|| for gradient clipping."""
    m = _common(q)
    big_l = m.smooth_l
    if big_l > 0:
        _step_guard(q, 1.0 / (9.0 * big_l), "1/(9L)")
    s = q.sgd_sigma
    return (
        1.0 / (m.eta * m.clip_c * m.t_iters),
        1.0 / math.sqrt(m.eta * m.t_iters),
        min(s, s * s / m.clip_c),
        math.sqrt(m.eta * big_l) * s / math.sqrt(m.b),
        m.dim * big_l * m.eta / m.clip_c * m.sigma_dp**2,
        math.sqrt(m.dim * big_l * m.eta) * m.sigma_dp,
    )


def gc_utility_bound(q: UtilityQuery) -> float:
    return q.constant_c * sum(gc_utility_terms(q))


def dc_utility_terms(q: UtilityQuery) -> tuple[float, ...]:
    """The six terms bounding min_t E sqrt(l(theta_t) - l*) with projection (strongly convex)."""
    m = _common(q)
    if q.strong_mu is None or m.diameter_d is None:
        raise ParameterError("dc utility bound needs strong_mu and diameter_d")
    big_l, mu, d_rad, s = m.smooth_l, q.strong_mu, m.diameter_d, q.sgd_sigma
    if big_l > 0:
        _step_guard(q, 9.0 / (20.0 * big_l), "9/(20L)")
    return (
        math.sqrt(big_l) * d_rad**2 / (m.eta * m.clip_c * m.t_iters),
        d_rad / math.sqrt(m.eta * m.t_iters),
        min(big_l**0.75 / mu**1.25 * s, math.sqrt(s**3 / (mu * m.clip_c))),
        math.sqrt(m.eta) * s / math.sqrt(m.b),
        m.dim * m.eta * m.sigma_dp**2 * math.sqrt(big_l) / m.clip_c,
        math.sqrt(m.dim * m.eta) * m.sigma_dp,
    )


def dc_utility_bound(q: UtilityQuery) -> float:
    return q.constant_c * sum(dc_utility_terms(q))


# ---------------------------------------------------------------------------
# Privacy-utility trade-off


def gc_noise_for_privacy(mech: MechanismConfig, alpha: float, eps_rdp: float) -> float:
    """sigma_dp with sigma^2 = alpha C^2 T / (eps n b)."""
    if not eps_rdp > 0:
        raise ParameterError(f"eps_rdp must be positive, got {eps_rdp}")
    return math.sqrt(alpha * mech.clip_c**2 * mech.t_iters / (eps_rdp * mech.n * mech.b))


def saturation_iterations(mech: MechanismConfig) -> float:
    """T_bar = (1 + eta L)^2 n b D^2 / (eta^2 C^2), where the bounded-domain privacy cost stops growing."""
    if mech.diameter_d is None:
        raise ParameterError("saturation_iterations needs diameter_d")
    return (1.0 + mech.eta * mech.smooth_l) ** 2 * mech.n * mech.b * mech.diameter_d**2 / (
        mech.eta**2 * mech.clip_c**2)


def dc_noise_for_privacy(mech: MechanismConfig, alpha: float, eps_rdp: float) -> float:
    """sigma_dp with sigma^2 = alpha C^2 min(T, T_bar) / (eps n b)."""
    if not eps_rdp > 0:
        raise ParameterError(f"eps_rdp must be positive, got {eps_rdp}")
    horizon = min(mech.t_iters, saturation_iterations(mech))
    return math.sqrt(alpha * mech.clip_c**2 * horizon / (eps_rdp * mech.n * mech.b))


def tradeoff_terms_gc(q: UtilityQuery, alpha: float, eps_rdp: float) -> tuple[float, ...]:
    return gc_utility_terms(q.with_sigma(gc_noise_for_privacy(q.mech, alpha, eps_rdp)))


def tradeoff_bound_gc(q: UtilityQuery, alpha: float, eps_rdp: float) -> float:
    return q.constant_c * sum(tradeoff_terms_gc(q, alpha, eps_rdp))


def tradeoff_terms_dc(q: UtilityQuery, alpha: float, eps_rdp: float) -> tuple[float, ...]:
    return dc_utility_terms(q.with_sigma(dc_noise_for_privacy(q.mech, alpha, eps_rdp)))


def tradeoff_bound_dc(q: UtilityQuery, alpha: float, eps_rdp: float) -> float:
    return q.constant_c * sum(tradeoff_terms_dc(q, alpha, eps_rdp))


def gc_squared_iteration_terms(t_iters: float, *, dim: int, smooth_l: float, eps_dp: float, delta: float,
                               n: int, eta: float, clip_c: float) -> float:
    """T-dependent part of the squared gradient-clipping bound after the (eps, delta) substitution."""
    log_d = math.log(1.0 / delta)
    t = float(t_iters)
    return (
        1.0 / (eta**2 * clip_c**2 * t**2)
        + 1.0 / (eta * t)
        + dim**2 * smooth_l**2 * eta**2 * clip_c**2 * t**2 * log_d**2 / (eps_dp**4 * n**4)
        + dim * smooth_l * eta * t * log_d * clip_c**2 / (eps_dp**2 * n**2)
    )


def gc_balanced_iterations(*, dim: int, smooth_l: float, eps_dp: float, delta: float, n: int,
                           eta: float, clip_c: float) -> float:
    """T = sqrt(1 / (d L log(1/delta))) * eps n / (eta C), the minimiser of the terms above."""
    return math.sqrt(1.0 / (dim * smooth_l * math.log(1.0 / delta))) * eps_dp * n / (eta * clip_c)


# ---------------------------------------------------------------------------
# Recommender


def _positive_iters(t: float) -> int:
    if not math.isfinite(t):
        raise ParameterError("recommended iteration count is not finite")
    return max(1, math.ceil(t))


def _recommend_gc(m: MechanismConfig, s: float, eps: float, log_d: float) -> Recommendation:
    d, big_l, n, b = m.dim, m.smooth_l, m.n, m.b
    noise_floor = d * big_l * log_d / (eps**2 * n**2)
    # ties go to the small-noise branch
    if noise_floor >= s**2:
        return Recommendation(
            regime="gc_small_noise",
            eta=b / big_l,
            clip_c=math.sqrt(d * big_l * log_d) / (eps * n),
            t_iters=_positive_iters(eps**2 * n**2 / (b * d * log_d)),
            predicted_utility=noise_floor,
        )
    return Recommendation(
        regime="gc_large_noise",
        eta=b / (big_l * s ** (2 / 3)) * noise_floor ** (1 / 3),
        clip_c=s ** (4 / 3) * eps ** (1 / 3) * n ** (1 / 3) / (d * big_l * log_d) ** (1 / 6),
        t_iters=_positive_iters(eps ** (4 / 3) * n ** (4 / 3) * big_l
                                / (b * (d * big_l * log_d) ** (2 / 3) * s ** (2 / 3))),
        predicted_utility=s ** (4 / 3) * noise_floor ** (1 / 3),
    )


def _recommend_dc(m: MechanismConfig, s: float, mu: float, eps: float, log_d: float) -> Recommendation:
    d, big_l, n, b, d_rad = m.dim, m.smooth_l, m.n, m.b, m.diameter_d
    base = d * big_l * log_d / (eps**2 * n**2)
    small = d_rad**2 * base
    if small >= big_l**1.5 / mu**2.5 * s**2:
        rec = Recommendation(
            regime="dc_small_noise",
            eta=b * big_l**1.5 / mu**2.5,
            clip_c=d_rad * big_l * math.sqrt(d * log_d) / (eps * n),
            t_iters=_positive_iters(eps**2 * n**2 * mu**2.5 / (b * big_l**1.5 * log_d)),
            predicted_utility=small,
        )
    else:
        rec = Recommendation(
            regime="dc_large_noise",
            eta=b * d_rad**0.5 / (mu**0.5 * s**0.5) * base ** (1 / 3),
            clip_c=s**1.5 * eps**0.5 * n**0.5 / (mu**0.5 * d_rad**0.5 * (d * big_l * log_d) ** 0.25),
            t_iters=_positive_iters(eps ** (7 / 6) * n ** (7 / 6) * mu * d_rad
                                    / (b * (d * big_l * log_d) ** (2 / 3) * s)),
            predicted_utility=s**1.5 * d_rad**0.5 / mu**0.5 * base**0.25,
        )
    t_bar = (1.0 + rec.eta * big_l) ** 2 * n * b * d_rad**2 / (rec.eta**2 * rec.clip_c**2)
    if rec.t_iters <= t_bar or s == 0:
        return rec
    # The short-horizon choice overshoots the saturation point: use the saturated regime.
    eta = d_rad * math.sqrt(b * d * log_d) / (eps * s)
    predicted = s * d_rad * math.sqrt(d * log_d) / (math.sqrt(b) * eps)
    # C keeps the clipping bias sigma^3 / (mu C) at the predicted level; T keeps D^2/(eta T) there too.
    clip_c = s**3 / (mu * predicted)
    t_bar = (1.0 + eta * big_l) ** 2 * n * b * d_rad**2 / (eta**2 * clip_c**2)
    t_iters = _positive_iters(max(d_rad**2 / (eta * predicted), t_bar))
    return Recommendation("dc_large_T", eta, clip_c, t_iters, predicted)


def recommend(q: UtilityQuery, eps_dp: float, delta: float) -> Recommendation:
    """Pick the trade-off regime and return (C, eta, T) for it, with constants set to 1.

    For gradient clipping the regime is decided by comparing
    d L log(1/delta) / (eps n)^2 with sigma_SGD^2. For the bounded domain
    the analogous test picks between the small- and large-noise choices,
    which switch to the saturated-privacy choice when their T exceeds the
    saturation point T_bar.
    """
    if not eps_dp > 0:
        raise ParameterError(f"eps_dp must be positive, got {eps_dp}")
    if not 0 < delta < 1:
        raise ParameterError(f"delta must lie in (0, 1), got {delta}")
    m = q.mech
    if not m.smooth_l > 0:
        raise ParameterError("recommend needs a positive smoothness constant L")
    log_d = math.log(1.0 / delta)
    if q.target == "gc_gradient_norm":
        return _recommend_gc(m, q.sgd_sigma, eps_dp, log_d)
    return _recommend_dc(m, q.sgd_sigma, q.strong_mu, eps_dp, log_d)
