"""Command-line front end: ``dpsgd-dc <command> [options]``.

Commands: bound, curve, calibrate, recommend, train, mia. Every command
reads an optional INI config (``--config``); flags override config keys
(see :mod:`dpsgd_dc.config`). Tabular output is CSV with a header row and
floats at 12 significant digits, written to ``--out`` or stdout.

Exit status: 0 success, 1 runtime failure, 2 invalid input.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
import warnings
from pathlib import Path

import numpy as np

from . import accountant as acc
from .config import convert, load_config, merge
from .errors import DPSGDError, ParameterError
from .mia import AttackConfig, LogisticSource, run_attack, theoretical_eps_dp
from .optimizer import TrainConfig, fmt, train
from .problems import problem_from_mapping
from .utility import UtilityQuery, recommend

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2

# (flag, section, key, help)
MECHANISM_FLAGS = [
    ("--n", "mechanism", "n", "dataset size"),
    ("--b", "mechanism", "b", "batch size"),
    ("--eta", "mechanism", "eta", "step size"),
    ("--C", "mechanism", "clip_c", "gradient clipping norm"),
    ("--D", "mechanism", "diameter_d", "radius of the parameter ball (omit for gradient clipping only)"),
    ("--sigma", "mechanism", "sigma_dp", "per-coordinate noise scale"),
    ("--T", "mechanism", "t_iters", "number of updates"),
    ("--L", "mechanism", "smooth_l", "smoothness constant"),
    ("--d", "mechanism", "dim", "model dimension"),
]
ACCOUNTANT_FLAGS = [
    ("--family", "accountant", "family", f"bound family, one of {', '.join(acc.FAMILIES)}"),
    ("--alpha", "accountant", "alpha", "Renyi order"),
    ("--mode", "accountant", "mode", "general or strengthened"),
    ("--beta", "accountant", "beta", "noise split in (0, 1] or 'auto'"),
    ("--delta", "accountant", "delta", "target delta"),
    ("--M", "accountant", "lipschitz_m", "Lipschitz constant for the feldman/altschuler baselines"),
    ("--m", "accountant", "weak_convex_m", "weak convexity constant for the kong baseline"),
    ("--baseline-constant", "accountant", "baseline_constant", "multiplier on every baseline"),
    ("--alpha-min", "accountant", "alpha_min", "smallest order of the search grid"),
    ("--alpha-max", "accountant", "alpha_max", "largest order of the search grid"),
    ("--alpha-num", "accountant", "alpha_num", "number of log-spaced orders in the grid"),
]
TARGET_FLAGS = [("--eps-dp", "accountant", "eps_dp", "target epsilon")]
UTILITY_FLAGS = [
    ("--sgd-sigma", "utility", "sgd_sigma", "per-sample gradient noise level"),
    ("--mu", "utility", "strong_mu", "strong convexity constant"),
    ("--constant-c", "utility", "constant_c", "multiplier on the utility rates"),
    ("--target", "utility", "target", "gc_gradient_norm or dc_optimality_gap"),
]
PROBLEM_FLAGS = [
    ("--problem-kind", "problem", "kind", "quadratic or logistic"),
    ("--problem-dim", "problem", "dim", "problem dimension"),
    ("--problem-n", "problem", "n", "number of samples"),
    ("--problem-seed", "problem", "seed", "seed for the synthetic data"),
    ("--lam", "problem", "lam", "ridge weight (logistic)"),
    ("--label-noise", "problem", "label_noise", "label flip rate (logistic)"),
    ("--curvature", "problem", "curvature", "Hessian scale (quadratic)"),
    ("--spread", "problem", "spread", "spread of the centers (quadratic)"),
    ("--anisotropy", "problem", "anisotropy", "Hessian eigenvalue spread (quadratic)"),
    ("--center", "problem", "center", "comma-separated mean center (quadratic)"),
]
TRAIN_FLAGS = [
    ("--sampling", "train", "sampling", "uniform_without_replacement or poisson"),
    ("--record-every", "train", "record_every", "trace stride"),
]
ATTACK_FLAGS = [
    ("--epochs", "attack", "epochs", "training epochs"),
    ("--trials", "attack", "trials", "independent target models"),
    ("--shadows", "attack", "shadows", "shadow models per trial"),
    ("--data-dim", "attack", "dim", "feature dimension"),
    ("--label-noise", "attack", "label_noise", "label flip rate"),
    ("--lam", "attack", "lam", "ridge weight"),
    ("--data-seed", "attack", "data_seed", "seed of the data distribution"),
]
CURVE_FLAGS = [
    ("--preset", "curve", "preset", "fig1 (baseline comparison) or fig5 (trivial-bound comparison)"),
    ("--families", "curve", "families", "comma-separated families; empty for a header-only CSV"),
    ("--t-min", "curve", "t_min", "first T (default 1)"),
    ("--t-max", "curve", "t_max", "last T"),
    ("--t-step", "curve", "t_step", "stride in T (default 1)"),
]

# Parameter settings of the two reference figures.
PRESETS = {
    "fig1": {
        "mechanism": {"n": 8, "b": 2, "eta": 0.2, "clip_c": 2.0, "diameter_d": 1.0, "sigma_dp": 4.0,
                      "t_iters": 0, "smooth_l": 1.0},
        "accountant": {"alpha": 1.1, "lipschitz_m": 2.0, "weak_convex_m": 1.0},
        "curve": {"families": "dc,composition,feldman,altschuler,kong", "t_max": 200},
    },
    "fig5": {
        "mechanism": {"n": 16, "b": 2, "eta": 0.2, "clip_c": 2.0, "diameter_d": 1.0, "sigma_dp": 4.0,
                      "t_iters": 0, "smooth_l": 1.0},
        "accountant": {"alpha": 1.1},
        "curve": {"families": "dc,trivial", "t_max": 500},
    },
}


# ---------------------------------------------------------------------------
# Parser


def _add_flags(parser: argparse.ArgumentParser, flags, title: str) -> None:
    group = parser.add_argument_group(title)
    for flag, section, key, text in flags:
        group.add_argument(flag, dest=f"{section}.{key}", metavar=key.upper(), default=None, help=text)


def _add_global(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=default, metavar="PATH", help="INI config file")
    parser.add_argument("--out", default=default, metavar="PATH", help="output file (default stdout)")
    parser.add_argument("--seed", default=default, metavar="U64", help="random seed")
    parser.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS if suppress else False,
                        help="suppress informational messages")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dpsgd-dc", allow_abbrev=False,
                                     description="Final-iterate privacy accounting and DPSGD experiments.")
    _add_global(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def command(name: str, text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=text, description=text, allow_abbrev=False)
        _add_global(p, suppress=True)
        return p

    p = command("bound", "Evaluate one RDP bound, optionally converted to (eps, delta)-DP.")
    _add_flags(p, MECHANISM_FLAGS, "mechanism")
    _add_flags(p, ACCOUNTANT_FLAGS, "accountant")
    p.add_argument("--machine", action="store_true", help="print a single key=value line")

    p = command("curve", "Tabulate bounds against the number of iterations.")
    _add_flags(p, MECHANISM_FLAGS, "mechanism")
    _add_flags(p, ACCOUNTANT_FLAGS, "accountant")
    _add_flags(p, CURVE_FLAGS, "sweep")
    p.add_argument("--log-y", dest="curve.log_y", action="store_const", const=True, default=None,
                   help="log-scale the figure's y axis")
    p.add_argument("--figure", metavar="PATH", help="also render the curves to an image file")

    p = command("calibrate", "Find the smallest noise scale meeting a target (eps, delta).")
    _add_flags(p, MECHANISM_FLAGS, "mechanism")
    _add_flags(p, ACCOUNTANT_FLAGS, "accountant")
    _add_flags(p, TARGET_FLAGS, "target")

    p = command("recommend", "Recommend step size, clipping norm and T for a privacy budget.")
    _add_flags(p, MECHANISM_FLAGS, "mechanism")
    _add_flags(p, [f for f in ACCOUNTANT_FLAGS if f[0] == "--delta"] + TARGET_FLAGS, "budget")
    _add_flags(p, UTILITY_FLAGS, "utility")

    p = command("train", "Run DPSGD on a synthetic problem and write its trace.")
    _add_flags(p, MECHANISM_FLAGS, "mechanism")
    _add_flags(p, PROBLEM_FLAGS, "problem")
    _add_flags(p, TRAIN_FLAGS, "training")
    p.add_argument("--figure", metavar="PATH", help="also plot the trace to an image file")

    p = command("mia", "Estimate epsilon with a loss-threshold membership inference attack.")
    _add_flags(p, MECHANISM_FLAGS, "mechanism")
    _add_flags(p, [f for f in ACCOUNTANT_FLAGS if f[0] in ("--delta", "--alpha-min", "--alpha-max",
                                                          "--alpha-num")], "accountant")
    _add_flags(p, ATTACK_FLAGS, "attack")
    _add_flags(p, TRAIN_FLAGS[:1], "training")
    p.add_argument("--shuffle-labels", dest="attack.shuffle_labels", action="store_const", const=True,
                   default=None, help="null experiment: shuffle member labels before scoring")
    p.add_argument("--figure", metavar="PATH", help="also plot eps_hat per epoch to an image file")
    return parser


# ---------------------------------------------------------------------------
# Settings


def _flag_layer(args: argparse.Namespace) -> dict[str, dict]:
    layer: dict[str, dict] = {}
    for dest, value in vars(args).items():
        if "." not in dest or value is None:
            continue
        section, key = dest.split(".", 1)
        layer.setdefault(section, {})[key] = convert(section, key, value)
    return layer


def _settings(args: argparse.Namespace, base: dict | None = None) -> dict[str, dict]:
    file_layer = load_config(args.config) if getattr(args, "config", None) else {}
    return merge(base or {}, file_layer, _flag_layer(args))


def _seed(args: argparse.Namespace, settings: dict) -> int:
    raw = getattr(args, "seed", None)
    if raw is None:
        return int(settings.get("run", {}).get("seed", 0))
    try:
        seed = int(raw)
    except ValueError:
        raise ParameterError(f"--seed must be an integer, got {raw!r}") from None
    if not 0 <= seed < 2**64:
        raise ParameterError(f"--seed must be an unsigned 64-bit integer, got {seed}")
    return seed


_MECH_REQUIRED = ("n", "b", "eta", "clip_c", "sigma_dp", "t_iters")
_MECH_FLAG = {key: flag for flag, _, key, _ in MECHANISM_FLAGS}


def _mechanism(settings: dict, fill: dict | None = None) -> acc.MechanismConfig:
    values = dict(fill or {})
    values.update(settings.get("mechanism", {}))
    missing = [k for k in _MECH_REQUIRED if k not in values]
    if missing:
        raise ParameterError("missing mechanism parameter(s): "
                             + ", ".join(f"{_MECH_FLAG[k]} ({k})" for k in missing))
    return acc.MechanismConfig(**values)


def _baseline(settings: dict) -> acc.BaselineParams:
    a = settings.get("accountant", {})
    return acc.BaselineParams(a.get("lipschitz_m"), a.get("weak_convex_m"), a.get("baseline_constant", 1.0))


def _alpha_grid(settings: dict) -> np.ndarray:
    a = settings.get("accountant", {})
    return acc.default_alpha_grid(a.get("alpha_min", 1.1), a.get("alpha_max", 256.0), a.get("alpha_num", 200))


def _require(settings: dict, section: str, key: str, flag: str):
    value = settings.get(section, {}).get(key)
    if value is None:
        raise ParameterError(f"{flag} ({key}) is required")
    return value


def _family(settings: dict) -> str:
    family = _require(settings, "accountant", "family", "--family")
    if family not in acc.FAMILIES:
        raise ParameterError(f"unknown family {family!r}; expected one of {', '.join(acc.FAMILIES)}")
    return family


# ---------------------------------------------------------------------------
# Output


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([v if isinstance(v, (str, int)) and not isinstance(v, bool) else fmt(v) for v in row])
    return buf.getvalue()


def _emit(args: argparse.Namespace, text: str) -> None:
    out = getattr(args, "out", None)
    if out:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    else:
        sys.stdout.write(text)


def _info(args: argparse.Namespace, message: str) -> None:
    if not getattr(args, "quiet", False):
        print(message, file=sys.stderr)


# ---------------------------------------------------------------------------
# Commands


def cmd_bound(args: argparse.Namespace) -> int:
    s = _settings(args)
    family = _family(s)
    alpha = _require(s, "accountant", "alpha", "--alpha")
    a = s.get("accountant", {})
    cfg = _mechanism(s)
    res = acc.evaluate(family, cfg, alpha, mode=a.get("mode", "general"), beta=a.get("beta", "auto"),
                       baseline=_baseline(s))
    fields = [("family", family), ("alpha", fmt(alpha)), ("epsilon_rdp", fmt(res.epsilon))]
    if res.regime is not None:
        fields.append(("regime", res.regime))
    if res.beta_used is not None:
        fields.append(("beta", fmt(res.beta_used)))
    if a.get("mode") == "strengthened" or family == "composition":
        fields.append(("constraints_ok", str(res.constraints_ok).lower()))
    if "delta" in a:
        best_alpha, eps_dp = acc.best_dp(cfg, family, a["delta"], _alpha_grid(s), mode=a.get("mode", "general"),
                                         baseline=_baseline(s))
        fields += [("delta", fmt(a["delta"])), ("best_alpha", fmt(best_alpha)), ("eps_dp", fmt(eps_dp))]
    if args.machine:
        text = " ".join(f"{k}={v}" for k, v in fields) + "\n"
    else:
        width = max(len(k) for k, _ in fields)
        text = "".join(f"{k:<{width}}  {v}\n" for k, v in fields)
    _emit(args, text)
    return EXIT_OK


def _curve_families(text: str) -> list[str]:
    families = [f.strip() for f in text.split(",") if f.strip()]
    for f in families:
        if f not in acc.FAMILIES:
            raise ParameterError(f"unknown family {f!r}; expected one of {', '.join(acc.FAMILIES)}")
    return families


def cmd_curve(args: argparse.Namespace) -> int:
    # a preset named in the config file or on the command line sits below both
    s = _settings(args)
    preset = s.get("curve", {}).get("preset")
    if preset is not None:
        if preset not in PRESETS:
            raise ParameterError(f"unknown preset {preset!r}; expected one of {', '.join(PRESETS)}")
        s = _settings(args, PRESETS[preset])
    c = s.get("curve", {})
    families = _curve_families(c.get("families", "dc"))
    t_min, t_step = c.get("t_min", 1), c.get("t_step", 1)
    t_max = c.get("t_max")
    if t_max is None:
        raise ParameterError("--t-max is required without a preset")
    if t_min < 0 or t_step < 1 or t_max < t_min:
        raise ParameterError("need 0 <= t_min <= t_max and t_step >= 1")
    header = ["T", *families]
    if not families:
        _emit(args, _csv_text(header, []))
        return EXIT_OK
    alpha = _require(s, "accountant", "alpha", "--alpha")
    a = s.get("accountant", {})
    cfg = _mechanism(s, {"t_iters": 0})
    t_values = list(range(t_min, t_max + 1, t_step))
    columns = {f: acc.bound_curve(f, cfg, alpha, t_values, mode=a.get("mode", "general"), baseline=_baseline(s))
               for f in families}
    rows = [(t, *(columns[f][k] for f in families)) for k, t in enumerate(t_values)]
    _emit(args, _csv_text(header, rows))
    if args.figure:
        from .plotting import plot_curves

        _info(args, f"figure written to {plot_curves(t_values, columns, args.figure, alpha=alpha, log_y=bool(c.get('log_y')))}")
    return EXIT_OK


def cmd_calibrate(args: argparse.Namespace) -> int:
    s = _settings(args)
    family = _family(s)
    target = _require(s, "accountant", "eps_dp", "--eps-dp")
    delta = _require(s, "accountant", "delta", "--delta")
    a = s.get("accountant", {})
    # sigma_dp is what we solve for; any configured value is ignored
    cfg = _mechanism(s, {"sigma_dp": 1.0})
    grid = _alpha_grid(s)
    mode = a.get("mode", "general")
    sigma = acc.calibrate_sigma(cfg, family, target, delta, grid, mode=mode, baseline=_baseline(s))
    best_alpha, eps_dp = acc.best_dp(cfg.with_sigma(sigma), family, delta, grid, mode=mode, baseline=_baseline(s))
    header = ["family", "target_eps_dp", "delta", "sigma_dp", "best_alpha", "eps_dp"]
    _emit(args, _csv_text(header, [(family, target, delta, sigma, best_alpha, eps_dp)]))
    return EXIT_OK


def cmd_recommend(args: argparse.Namespace) -> int:
    s = _settings(args)
    target_eps = _require(s, "accountant", "eps_dp", "--eps-dp")
    delta = _require(s, "accountant", "delta", "--delta")
    # only n, b, d, L and D enter the recommendation
    mech = _mechanism(s, {"eta": 1.0, "clip_c": 1.0, "sigma_dp": 1.0, "t_iters": 1})
    query = UtilityQuery(mech, **s.get("utility", {}))
    rec = recommend(query, target_eps, delta)
    header = ["regime", "eta", "clip_c", "t_iters", "predicted_utility"]
    _emit(args, _csv_text(header, [(rec.regime, rec.eta, rec.clip_c, rec.t_iters, rec.predicted_utility)]))
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    s = _settings(args)
    mech_vals = s.get("mechanism", {})
    prob_vals = dict(s.get("problem", {}))
    # n and dim may be given on either side; they must agree
    for key in ("n", "dim"):
        if key in mech_vals and key in prob_vals and mech_vals[key] != prob_vals[key]:
            raise ParameterError(f"mechanism {key}={mech_vals[key]} disagrees with problem {key}={prob_vals[key]}")
        if key in mech_vals:
            prob_vals.setdefault(key, mech_vals[key])
    problem = problem_from_mapping(prob_vals)
    mech = _mechanism(s, {"n": problem.n, "dim": problem.dim, "smooth_l": problem.smooth_l})
    t = s.get("train", {})
    cfg = TrainConfig(mech, seed=_seed(args, s), sampling=t.get("sampling", "uniform_without_replacement"),
                      record_every=t.get("record_every", 1))
    trace = train(problem, cfg)
    _emit(args, trace.to_csv())
    if args.figure:
        from .plotting import plot_trace

        _info(args, f"figure written to {plot_trace(trace, args.figure)}")
    return EXIT_OK


def cmd_mia(args: argparse.Namespace) -> int:
    s = _settings(args)
    at = dict(s.get("attack", {}))
    mech_vals = s.get("mechanism", {})
    dim = at.get("dim", mech_vals.get("dim", 50))
    if mech_vals.get("dim", dim) != dim:
        raise ParameterError(f"mechanism dim={mech_vals['dim']} disagrees with attack dim={dim}")
    source = LogisticSource(dim=dim, label_noise=at.get("label_noise", 0.2), lam=at.get("lam", 1e-3),
                            seed=at.get("data_seed", 0))
    # T is set from the epoch count
    mech = _mechanism(s, {"t_iters": 0, "dim": dim})
    seed = _seed(args, s)
    delta = s.get("accountant", {}).get("delta", 1e-5)
    attack = AttackConfig(epochs=at.get("epochs", 20), trials=at.get("trials", 10), shadows=at.get("shadows", 4),
                          delta=delta, shuffle_labels=at.get("shuffle_labels", False), seed=seed)
    train_cfg = TrainConfig(mech, seed=seed, sampling=s.get("train", {}).get("sampling",
                                                                           "uniform_without_replacement"))
    report = run_attack(source, train_cfg, attack)
    _emit(args, report.to_csv())
    eps_dp = theoretical_eps_dp(train_cfg, attack.epochs, delta, _alpha_grid(s))
    _info(args, f"theoretical eps_dp after {attack.epochs} epochs: {fmt(eps_dp)} (delta={fmt(delta)})")
    if args.figure:
        from .plotting import plot_attack

        _info(args, f"figure written to {plot_attack(report, args.figure, eps_dp=eps_dp)}")
    return EXIT_OK


COMMANDS = {
    "bound": cmd_bound,
    "curve": cmd_curve,
    "calibrate": cmd_calibrate,
    "recommend": cmd_recommend,
    "train": cmd_train,
    "mia": cmd_mia,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _seed(args, {})
        with warnings.catch_warnings():
            if getattr(args, "quiet", False):
                warnings.simplefilter("ignore")
            return COMMANDS[args.command](args)
    except ParameterError as exc:
        print(f"dpsgd-dc {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DPSGDError, OSError, ArithmeticError) as exc:
        print(f"dpsgd-dc {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
