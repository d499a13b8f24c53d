"""Closed-form Renyi-DP bounds for the final iterate of DPSGD.

Two bounds are native to this package:

* ``gc_bound``: gradient clipping only (unbounded domain), linear in ``T``.
* ``dc_bound``: gradient clipping plus projection onto a ball of radius ``D``.
  The bound is linear in ``T`` until it meets a constant that depends on
  ``D``, and stays there.

Everything else here (the naive post-processing bound, the subsampled
Gaussian composition baseline and three literature baselines) exists so that
the two native bounds can be compared, converted to ``(eps, delta)``-DP and
inverted for a noise level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .errors import CalibrationError, ParameterError, PreconditionError

FAMILIES = ("gc", "dc", "trivial", "composition", "feldman", "altschuler", "kong")
MODES = ("general", "strengthened")

# alpha* grid: alpha = 1 + k * 1e-3 for k = 1 .. 9_999_000, i.e. (1.001, 1e4].
ALPHA_STAR_STEP = 1e-3
ALPHA_STAR_MAX = 1e4
_ALPHA_STAR_KMAX = int(round((ALPHA_STAR_MAX - 1.0) / ALPHA_STAR_STEP))
_ALPHA_STAR_CHUNK = 1_000_000


def default_alpha_grid(lo: float = 1.1, hi: float = 256.0, num: int = 200) -> np.ndarray:
    """Log-spaced Renyi orders used when the caller does not supply a grid."""
    return np.geomspace(lo, hi, num)


def _is_int(x) -> bool:
    try:
        return float(x) == int(x)
    except (TypeError, ValueError, OverflowError):
        return False


@dataclass(frozen=True)
class MechanismConfig:
    """Hyperparameters of one DPSGD run.

    ``diameter_d`` is the radius of the parameter ball; ``None`` means the
    domain is unbounded, i.e. plain gradient clipping.
    """

    n: int
    b: int
    eta: float
    clip_c: float
    sigma_dp: float
    t_iters: int
    smooth_l: float = 0.0
    dim: int = 1
    diameter_d: float | None = None

    def __post_init__(self):
        for name in ("n", "b", "t_iters", "dim"):
            value = getattr(self, name)
            if not _is_int(value):
                raise ParameterError(f"{name} must be an integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        for name in ("eta", "clip_c", "sigma_dp", "smooth_l"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ParameterError(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, value)
        if self.n < 1:
            raise ParameterError(f"n must be >= 1, got {self.n}")
        if not 1 <= self.b <= self.n:
            raise ParameterError(f"batch size b must satisfy 1 <= b <= n, got b={self.b}, n={self.n}")
        # eta = 0 is a legal (frozen) optimizer setting; bounds that divide by eta reject it
        if self.eta < 0:
            raise ParameterError(f"eta must be nonnegative, got {self.eta}")
        if self.sigma_dp <= 0:
            raise ParameterError(f"sigma_dp must be positive, got {self.sigma_dp}")
        # C = 0 and D = 0 are accepted as degenerate limits (zero sensitivity).
        if self.clip_c < 0:
            raise ParameterError(f"clip_c must be nonnegative, got {self.clip_c}")
        if self.t_iters < 0:
            raise ParameterError(f"t_iters must be >= 0, got {self.t_iters}")
        if self.smooth_l < 0:
            raise ParameterError(f"smooth_l must be nonnegative, got {self.smooth_l}")
        if self.dim < 1:
            raise ParameterError(f"dim must be >= 1, got {self.dim}")
        if self.diameter_d is not None:
            d = float(self.diameter_d)
            if not math.isfinite(d) or d < 0:
                raise ParameterError(f"diameter_d must be a nonnegative real, got {self.diameter_d!r}")
            object.__setattr__(self, "diameter_d", d)

    @property
    def bounded(self) -> bool:
        return self.diameter_d is not None

    @property
    def sample_rate(self) -> float:
        return self.b / self.n

    def with_sigma(self, sigma_dp: float) -> "MechanismConfig":
        return replace(self, sigma_dp=sigma_dp)

    def with_iters(self, t_iters: int) -> "MechanismConfig":
        return replace(self, t_iters=t_iters)


@dataclass(frozen=True)
class RdpQuery:
    alpha: float
    beta: float | str = "auto"
    mode: str = "general"

    def __post_init__(self):
        _check_alpha(self.alpha)
        if self.mode not in MODES:
            raise ParameterError(f"mode must be one of {MODES}, got {self.mode!r}")
        if isinstance(self.beta, str):
            if self.beta != "auto":
                raise ParameterError(f"beta must be a number in (0, 1] or 'auto', got {self.beta!r}")
        elif not 0 < float(self.beta) <= 1:
            raise ParameterError(f"beta must lie in (0, 1], got {self.beta}")


@dataclass(frozen=True)
class RdpResult:
    epsilon: float
    family: str
    alpha: float
    regime: str | None = None
    beta_used: float | None = None
    constraints_ok: bool = True
    constraints: dict = field(default_factory=dict)


@dataclass(frozen=True)
class BaselineParams:
    """Constants needed only by the literature baselines.

    ``constant`` multiplies every baseline expression; the published rates
    are stated up to an unspecified constant.
    """

    lipschitz_m: float | None = None
    weak_convex_m: float | None = None
    constant: float = 1.0


def _check_alpha(alpha) -> float:
    alpha = float(alpha)
    if not alpha > 1 or not math.isfinite(alpha):
        raise ParameterError(f"Renyi order alpha must be a finite real > 1, got {alpha}")
    return alpha


def _require_step(cfg: MechanismConfig, what: str) -> float:
    if cfg.eta == 0:
        raise ParameterError(f"{what} is undefined for step size eta = 0")
    return cfg.eta


def _require_domain(cfg: MechanismConfig, what: str) -> float:
    if cfg.diameter_d is None:
        raise ParameterError(f"{what} needs a bounded domain (diameter_d)")
    return cfg.diameter_d


# ---------------------------------------------------------------------------
# Building blocks


def per_step_cost(cfg: MechanismConfig, alpha: float, mode: str = "general") -> float:
    """RDP increment of one noisy update at noise split beta = 1."""
    alpha = _check_alpha(alpha)
    c2 = cfg.clip_c**2
    s2 = cfg.sigma_dp**2
    if mode == "general":
        return 2.0 * alpha * c2 / (cfg.n * cfg.b * s2)
    if mode == "strengthened":
        return 8.0 * alpha * c2 / (cfg.n**2 * s2)
    raise ParameterError(f"mode must be one of {MODES}, got {mode!r}")


def shift_cost(cfg: MechanismConfig, alpha: float) -> float:
    """Cost of absorbing a shift of (1 + eta L) D with the full noise budget."""
    alpha = _check_alpha(alpha)
    d = _require_domain(cfg, "shift_cost")
    _require_step(cfg, "shift_cost")
    grow = 1.0 + cfg.eta * cfg.smooth_l
    return alpha * grow**2 * d**2 / (2.0 * cfg.eta**2 * cfg.sigma_dp**2)


def noise_split_objective(cfg: MechanismConfig, alpha: float, beta: float, mode: str = "general") -> float:
    """Converged bound as a function of the noise split ``beta`` in (0, 1)."""
    if not 0 < beta < 1:
        return math.inf
    return per_step_cost(cfg, alpha, mode) / beta + shift_cost(cfg, alpha) / (1.0 - beta)


def _split(a2: float, b2: float) -> tuple[float, float]:
    """Minimiser and minimum of a2/beta + b2/(1-beta) over beta in (0, 1)."""
    a, b = math.sqrt(a2), math.sqrt(b2)
    if a + b == 0:
        return 1.0, 0.0
    return a / (a + b), (a + b) ** 2


def optimal_beta(cfg: MechanismConfig, alpha: float, mode: str = "general") -> float:
    alpha = _check_alpha(alpha)
    _require_domain(cfg, "optimal_beta")
    beta, _ = _split(per_step_cost(cfg, alpha, mode), shift_cost(cfg, alpha))
    return beta


def converged_value(cfg: MechanismConfig, alpha: float, mode: str = "general") -> float:
    """Constant that the bounded-domain bound saturates at."""
    _require_domain(cfg, "converged_value")
    _, value = _split(per_step_cost(cfg, alpha, mode), shift_cost(cfg, alpha))
    return value


def crossover_iterations(cfg: MechanismConfig, alpha: float, mode: str = "general") -> float:
    """Real-valued T at which the linear branch meets the converged constant."""
    step = per_step_cost(cfg, alpha, mode)
    if step == 0:
        return math.inf
    return converged_value(cfg, alpha, mode) / step


# ---------------------------------------------------------------------------
# Sampled Gaussian mechanism order constraint


def sgm_order_constraints(q: float, sigma: float, alpha):
    """Evaluate both admissibility inequalities for the SGM closed form.

    Vectorised over ``alpha``. Returns a pair of boolean arrays (or bools).
    """
    alpha = np.asarray(alpha, dtype=float)
    log_sigma = math.log(sigma)
    k = np.log1p(1.0 / (q * (alpha - 1.0)))
    first = alpha <= k * sigma**2 / 2.0 - 2.0 * log_sigma
    # the denominator equals log(q*alpha + alpha/(alpha-1)) + 1/(2 sigma^2) > 0
    num = k**2 * sigma**2 / 2.0 - math.log(5.0) - 2.0 * log_sigma
    den = k + np.log(q * alpha) + 1.0 / (2.0 * sigma**2)
    second = alpha * den <= num
    if first.ndim == 0:
        return bool(first), bool(second)
    return first, second


@lru_cache(maxsize=4096)
def _alpha_star_cached(q: float, sigma: float) -> float:
    # Scan from the top of the grid so the first feasible chunk holds the answer.
    hi = _ALPHA_STAR_KMAX
    while hi >= 1:
        lo = max(1, hi - _ALPHA_STAR_CHUNK + 1)
        ks = np.arange(lo, hi + 1, dtype=np.int64)
        alphas = 1.0 + ks * ALPHA_STAR_STEP
        first, second = sgm_order_constraints(q, sigma, alphas)
        ok = np.flatnonzero(first & second)
        if ok.size:
            return float(alphas[ok[-1]])
        hi = lo - 1
    raise PreconditionError(f"no admissible Renyi order on the grid for q={q}, sigma={sigma}")


def alpha_star(q_sample: float, sigma: float) -> float:
    """Largest grid order alpha in (1, 1e4] admissible for the SGM closed form.

    The grid has spacing 1e-3. Defined only for ``q_sample <= 1/5`` and
    ``sigma > 4``.
    """
    q_sample = float(q_sample)
    sigma = float(sigma)
    if not 0 < q_sample <= 0.2:
        raise PreconditionError(f"alpha* needs 0 < q <= 1/5, got q={q_sample}")
    if not sigma > 4:
        raise PreconditionError(f"alpha* needs sigma > 4, got sigma={sigma}")
    return _alpha_star_cached(q_sample, sigma)


def sgm_constraints(cfg: MechanismConfig, alpha: float, beta: float = 1.0) -> dict:
    """Check the extra assumptions under which the per-step cost drops to 8aC^2/(n^2 s^2)."""
    checks = {
        "batch_fraction": cfg.b <= cfg.n / 5.0,
        "noise_scale": cfg.sigma_dp > 8.0 * cfg.clip_c / (cfg.b * math.sqrt(beta)),
        "alpha_order": False,
    }
    if checks["batch_fraction"] and checks["noise_scale"]:
        if cfg.clip_c == 0:
            checks["alpha_order"] = True
        else:
            sigma_sgm = cfg.b * math.sqrt(beta) * cfg.sigma_dp / (2.0 * cfg.clip_c)
            checks["alpha_order"] = alpha <= alpha_star(cfg.sample_rate, sigma_sgm)
    return checks


# ---------------------------------------------------------------------------
# Native bounds


def _resolve_beta(q: RdpQuery) -> float | None:
    return None if q.beta == "auto" else float(q.beta)


def gc_bound(cfg: MechanismConfig, q: RdpQuery) -> RdpResult:
    """Final-iterate RDP of DPSGD with gradient clipping only."""
    beta = _resolve_beta(q)
    beta = 1.0 if beta is None else beta
    general = per_step_cost(cfg, q.alpha, "general") * cfg.t_iters / beta
    if q.mode == "general":
        return RdpResult(general, "gc_linear", q.alpha, beta_used=beta)
    checks = sgm_constraints(cfg, q.alpha, beta)
    if all(checks.values()):
        eps = per_step_cost(cfg, q.alpha, "strengthened") * cfg.t_iters / beta
        return RdpResult(eps, "gc_linear", q.alpha, beta_used=beta, constraints=checks)
    return RdpResult(general, "gc_linear", q.alpha, beta_used=beta, constraints_ok=False, constraints=checks)


def _dc_branches(cfg: MechanismConfig, alpha: float, beta: float | None, mode: str):
    step = per_step_cost(cfg, alpha, mode)
    shift = shift_cost(cfg, alpha)
    if beta is None:
        linear = step * cfg.t_iters
        beta_star, converged = _split(step, shift)
    else:
        linear = step * cfg.t_iters / beta
        beta_star = beta
        converged = step / beta + shift / (1.0 - beta) if beta < 1 else math.inf
    if cfg.t_iters == 0 or linear <= converged:
        return linear, "linear", 1.0 if beta is None else beta
    return converged, "converged", beta_star


def dc_bound(cfg: MechanismConfig, q: RdpQuery) -> RdpResult:
    """Final-iterate RDP of DPSGD with gradient clipping and projection.

    The result is the smaller of the linear-in-T branch and the constant
    obtained by spending a noise fraction ``beta*`` on the per-step cost and
    the rest on absorbing the domain-sized shift.
    """
    _require_domain(cfg, "dc_bound")
    beta = _resolve_beta(q)
    eps, regime, beta_used = _dc_branches(cfg, q.alpha, beta, "general")
    if q.mode == "general":
        return RdpResult(eps, "dc", q.alpha, regime=regime, beta_used=beta_used)
    s_eps, s_regime, s_beta = _dc_branches(cfg, q.alpha, beta, "strengthened")
    checks = sgm_constraints(cfg, q.alpha, s_beta)
    if all(checks.values()):
        return RdpResult(s_eps, "dc", q.alpha, regime=s_regime, beta_used=s_beta, constraints=checks)
    return RdpResult(eps, "dc", q.alpha, regime=regime, beta_used=beta_used,
                     constraints_ok=False, constraints=checks)


# ---------------------------------------------------------------------------
# Comparison bounds


def composition_bound(cfg: MechanismConfig, alpha: float) -> RdpResult:
    """T-fold composition of the SGM closed form, releasing every iterate.

    Uses sampling rate b/n and effective noise b * sigma_dp / (2C), i.e.
    sensitivity 2C/b of the averaged clipped gradient.
    """
    alpha = _check_alpha(alpha)
    q = cfg.sample_rate
    eps = cfg.t_iters * 8.0 * alpha * cfg.clip_c**2 / (cfg.n**2 * cfg.sigma_dp**2)
    sigma_sgm = math.inf if cfg.clip_c == 0 else cfg.b * cfg.sigma_dp / (2.0 * cfg.clip_c)
    checks = {"sample_rate": q <= 0.2, "noise_scale": sigma_sgm > 4, "alpha_order": False}
    if checks["sample_rate"] and checks["noise_scale"]:
        checks["alpha_order"] = math.isinf(sigma_sgm) or alpha <= alpha_star(q, sigma_sgm)
    return RdpResult(eps, "composition", alpha, constraints_ok=all(checks.values()), constraints=checks)


def trivial_bound(cfg: MechanismConfig, alpha: float) -> RdpResult:
    """Post-processing bound: one Gaussian step whose input differs by at most D + eta C / b.

    The noise reaching the parameters has scale eta * sigma_dp.
    """
    alpha = _check_alpha(alpha)
    d = _require_domain(cfg, "trivial_bound")
    _require_step(cfg, "trivial_bound")
    if cfg.t_iters == 0:
        return RdpResult(0.0, "trivial", alpha)
    sens = d + cfg.eta * cfg.clip_c / cfg.b
    eps = 2.0 * alpha * sens**2 / (cfg.eta**2 * cfg.sigma_dp**2)
    return RdpResult(eps, "trivial", alpha)


def _need(value, name: str, family: str) -> float:
    if value is None:
        raise ParameterError(f"{family} bound needs {name}")
    value = float(value)
    if not value > 0:
        raise ParameterError(f"{family} bound needs a positive {name}, got {value}")
    return value


def feldman_bound(cfg: MechanismConfig, alpha: float, bp: BaselineParams) -> RdpResult:
    alpha = _check_alpha(alpha)
    m = _need(bp.lipschitz_m, "lipschitz_m", "feldman")
    eps = bp.constant * alpha * m**2 * cfg.t_iters / (cfg.b**2 * cfg.sigma_dp**2)
    return RdpResult(eps, "feldman", alpha)


def altschuler_bound(cfg: MechanismConfig, alpha: float, bp: BaselineParams) -> RdpResult:
    alpha = _check_alpha(alpha)
    m = _need(bp.lipschitz_m, "lipschitz_m", "altschuler")
    d = _require_domain(cfg, "altschuler_bound")
    _require_step(cfg, "altschuler_bound")
    horizon = min(cfg.t_iters, d * cfg.n / (cfg.eta * m))
    eps = bp.constant * alpha * m**2 * horizon / (cfg.n**2 * cfg.sigma_dp**2)
    return RdpResult(eps, "altschuler", alpha)


def kong_bound(cfg: MechanismConfig, alpha: float, bp: BaselineParams) -> RdpResult:
    alpha = _check_alpha(alpha)
    m = _need(bp.weak_convex_m, "weak_convex_m", "kong")
    d = _require_domain(cfg, "kong_bound")
    _require_step(cfg, "kong_bound")
    if cfg.t_iters == 0:
        return RdpResult(0.0, "kong", alpha)
    stretch = math.sqrt(1.0 + 2.0 * cfg.eta * m * (1.0 + m / (2.0 * (cfg.smooth_l + m))))
    inner = d * stretch + cfg.eta * cfg.clip_c / cfg.b
    eps = bp.constant * alpha * inner**2 / (cfg.eta**2 * cfg.sigma_dp**2)
    return RdpResult(eps, "kong", alpha)


def evaluate(family: str, cfg: MechanismConfig, alpha: float, *, mode: str = "general",
             beta: float | str = "auto", baseline: BaselineParams | None = None) -> RdpResult:
    """Dispatch to the bound named ``family``."""
    if family == "gc":
        return gc_bound(cfg, RdpQuery(alpha, beta, mode))
    if family == "dc":
        return dc_bound(cfg, RdpQuery(alpha, beta, mode))
    if family == "trivial":
        return trivial_bound(cfg, alpha)
    if family == "composition":
        return composition_bound(cfg, alpha)
    baseline = baseline or BaselineParams()
    if family == "feldman":
        return feldman_bound(cfg, alpha, baseline)
    if family == "altschuler":
        return altschuler_bound(cfg, alpha, baseline)
    if family == "kong":
        return kong_bound(cfg, alpha, baseline)
    raise ParameterError(f"unknown bound family {family!r}; expected one of {FAMILIES}")


# ---------------------------------------------------------------------------
# Conversion and calibration


def rdp_to_dp(epsilon_rdp: float, alpha: float, delta: float) -> float:
    """(alpha, eps)-RDP implies (eps + log(1/delta)/(alpha-1), delta)-DP."""
    alpha = _check_alpha(alpha)
    if not 0 < delta < 1:
        raise ParameterError(f"delta must lie in (0, 1), got {delta}")
    if epsilon_rdp < 0:
        raise ParameterError(f"epsilon_rdp must be nonnegative, got {epsilon_rdp}")
    return epsilon_rdp + math.log(1.0 / delta) / (alpha - 1.0)


def best_dp(cfg: MechanismConfig, family: str, delta: float, alpha_grid: Iterable[float] | None = None,
            *, mode: str = "general", baseline: BaselineParams | None = None) -> tuple[float, float]:
    """Return ``(alpha, eps_dp)`` minimising the RDP-to-DP conversion over the grid.

    Ties keep the first grid point.
    """
    grid = default_alpha_grid() if alpha_grid is None else list(alpha_grid)
    if len(grid) == 0:
        raise ParameterError("alpha_grid must be nonempty")
    best_alpha, best_eps = math.nan, math.inf
    for alpha in grid:
        res = evaluate(family, cfg, alpha, mode=mode, baseline=baseline)
        eps = rdp_to_dp(res.epsilon, alpha, delta)
        if eps < best_eps:
            best_alpha, best_eps = float(alpha), eps
    return best_alpha, best_eps


def calibrate_sigma(cfg: MechanismConfig, family: str, target_eps_dp: float, delta: float,
                    alpha_grid: Sequence[float] | None = None, *, mode: str = "general",
                    baseline: BaselineParams | None = None, rtol: float = 1e-6,
                    bracket: tuple[float, float] = (1e-6, 1e6)) -> float:
    """Smallest sigma_dp (to relative tolerance ``rtol``) meeting ``target_eps_dp``.

    ``cfg.sigma_dp`` is ignored. Bisection is done on log(sigma); every
    family is nonincreasing in sigma_dp.
    """
    if not target_eps_dp > 0:
        raise ParameterError(f"target_eps_dp must be positive, got {target_eps_dp}")
    grid = default_alpha_grid() if alpha_grid is None else list(alpha_grid)

    def eps_at(sigma: float) -> float:
        return best_dp(cfg.with_sigma(sigma), family, delta, grid, mode=mode, baseline=baseline)[1]

    lo, hi = bracket
    if eps_at(hi) > target_eps_dp:
        raise CalibrationError(
            f"target eps_dp={target_eps_dp} unreachable for sigma_dp <= {hi} ({family} family)")
    if eps_at(lo) <= target_eps_dp:
        return lo
    while hi > lo * (1.0 + rtol):
        mid = math.sqrt(lo * hi)
        if eps_at(mid) <= target_eps_dp:
            hi = mid
        else:
            lo = mid
    return hi


def bound_curve(family: str, cfg: MechanismConfig, alpha: float, t_values: Iterable[int], *,
                mode: str = "general", baseline: BaselineParams | None = None) -> list[float]:
    """Evaluate one family at every iteration count in ``t_values``."""
    return [evaluate(family, cfg.with_iters(int(t)), alpha, mode=mode, baseline=baseline).epsilon
            for t in t_values]

