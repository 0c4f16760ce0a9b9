"""Command-line front end.

Every command writes one table (CSV or JSON) whose rows carry the seed, and
exits with status 0 exactly when all asserted checks pass. Parameters come
from flags, then an optional JSON config file, then built-in defaults.
"""
import argparse
import csv
import io
import json
import math
import sys
from fractions import Fraction

from . import _accel
from .distance import donsker_rate_experiment, local_time_experiment, rate_fit
from .functionals import by_tag
from .gram import cond_coeffs, cond_variance_exact, gamma_inverse_inf_norm, gamma_matrix
from .ou_stein import lipschitz_modulus_probe, stein_dirichlet_check
from .paths import BasisIndex, GridPath, IncrementLaw, sample_walk
from .rng import SeededStream
from .sobolev import (
    AdmissibilityError,
    QuadratureSpec,
    kernel_integral_check,
    norm_eta_p,
    step_primitive_norm_check,
    validate_index,
)

EXIT_OK, EXIT_CHECK_FAILED, EXIT_BAD_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3

DEFAULTS = {
    "eta": 0.1,
    "p": 20.0,
    "law": "rademacher",
    "reps": 10_000,
    "tau0": 0.05,
    "tau_max": 8.0,
    "seed": 0,
    "format": "csv",
    "out": "-",
    "threads": None,
    # command specific
    "m": None,
    "N": None,
    "ladder": None,
    "functionals": None,
    "eps": [0.1, 0.2, 0.4],
    "tau": [0.1, 0.4, 1.6],
    "pairs": None,
    "suite": "identity",
    "fine_factor": 64,
}

GRIDS = {"gram": ([24], [2]), "stein": ([2], [1, 2])}
LADDERS = {"rate": [64, 512, 4096], "localtime": [16, 64, 256, 1024], "norms": [16, 64, 256]}
FUNCTIONALS = {"stein": ["endpoint", "abs_endpoint", "sup_norm"], "probe": ["softmax"]}

HEADERS = {
    "gram": ["m", "N", "quantity", "i", "j", "value", "bound", "ok", "seed"],
    "norms": ["check", "eta", "p", "arg", "value", "reference", "ok", "seed"],
    "stein": ["suite", "functional", "m", "N", "tau", "eps", "value", "se", "reference", "reference_se", "allowance", "ok", "seed"],
    "rate": ["m", "N", "quantity", "value", "se", "envelope", "ok", "seed"],
    "localtime": ["m", "W1", "se", "envelope", "mean", "mean_se", "ok", "seed"],
}


class ConfigError(ValueError):
    pass


def _ints(text):
    return [int(x) for x in str(text).split(",") if x.strip()]


def _floats(text):
    return [float(x) for x in str(text).split(",") if x.strip()]


def _strs(text):
    return [x.strip() for x in str(text).split(",") if x.strip()]


def _pairs(text):
    out = []
    for item in _strs(text):
        n, m = item.split(":")
        out.append((int(n), int(m)))
    return out


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with parameter values")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output file ('-' for stdout)")
    common.add_argument("--format", choices=["csv", "json"])
    common.add_argument("--threads", type=int, help="worker threads (wall time only)")
    common.add_argument("--eta", type=float)
    common.add_argument("--p", type=float)
    common.add_argument("--law", help="rademacher, gaussian or uniform")
    common.add_argument("--reps", type=int)

    parser = argparse.ArgumentParser(prog="donsker-lab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gram", parents=[common], help="Gram matrices, inverse norms, conditional variances")
    g.add_argument("--m", type=_ints, help="fine grid sizes, comma separated")
    g.add_argument("--N", type=_ints, help="coarse grid sizes, comma separated")

    n = sub.add_parser("norms", parents=[common], help="fractional norm checks")
    n.add_argument("--ladder", type=_ints, help="walk grid sizes for the engine comparison")

    s = sub.add_parser("stein", parents=[common], help="Stein-Dirichlet identity and the Lipschitz-modulus probe")
    s.add_argument("--suite", choices=["identity", "probe", "all"])
    s.add_argument("--m", type=_ints)
    s.add_argument("--N", type=_ints)
    s.add_argument("--functionals", type=_strs)
    s.add_argument("--tau0", type=float)
    s.add_argument("--tau-max", dest="tau_max", type=float)
    s.add_argument("--eps", type=_floats)
    s.add_argument("--tau", type=_floats)
    s.add_argument("--pairs", type=_pairs, help="probe grids as N:m, comma separated")

    r = sub.add_parser("rate", parents=[common], help="walk-to-Brownian distance along an m-ladder")
    r.add_argument("--ladder", type=_ints)
    r.add_argument("--fine-factor", dest="fine_factor", type=int)

    lt = sub.add_parser("localtime", parents=[common], help="local time at 0 against the half-normal law")
    lt.add_argument("--ladder", type=_ints)
    return parser


_LIST_KEYS = {"m": _ints, "N": _ints, "ladder": _ints, "functionals": _strs, "eps": _floats, "tau": _floats}


def resolve_config(args):
    """Merge flags over the JSON config over the defaults."""
    cfg = dict(DEFAULTS)
    if args.config:
        try:
            with open(args.config) as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"config: cannot read {args.config}: {exc}") from None
        if not isinstance(loaded, dict):
            raise ConfigError("config: top level must be an object")
        for key, val in loaded.items():
            key = key.replace("-", "_")
            if key == "command":
                continue
            if key not in cfg:
                raise ConfigError(f"config: unknown field {key!r}")
            if key in _LIST_KEYS and not isinstance(val, list):
                val = _LIST_KEYS[key](val)
            if key == "pairs" and val is not None:
                val = [tuple(x) if not isinstance(x, str) else tuple(int(y) for y in x.split(":")) for x in val]
            cfg[key] = val
    for key, val in vars(args).items():
        if key in ("command", "config") or val is None:
            continue
        cfg[key] = val
    cfg["command"] = args.command
    grids = GRIDS.get(args.command, ([], []))
    if cfg["m"] is None:
        cfg["m"] = grids[0]
    if cfg["N"] is None:
        cfg["N"] = grids[1]
    if cfg["ladder"] is None:
        cfg["ladder"] = LADDERS.get(args.command)
    if cfg["functionals"] is None:
        cfg["functionals"] = FUNCTIONALS["stein"]
    if cfg["pairs"] is None:
        cfg["pairs"] = [(4, 64), (8, 512)]
    validate_config(cfg)
    return cfg


def validate_config(cfg):
    cmd = cfg["command"]
    if cmd in ("norms", "rate", "stein"):
        try:
            validate_index(cfg["eta"], cfg["p"])
        except AdmissibilityError as exc:
            raise ConfigError(f"eta/p: {exc}") from None
    if not isinstance(cfg["reps"], int) or cfg["reps"] < 1:
        raise ConfigError("reps: must be a positive integer")
    if not 0 <= int(cfg["seed"]) < 2 ** 64:
        raise ConfigError("seed: must fit in 64 unsigned bits")
    try:
        law = IncrementLaw(cfg["law"])
    except ValueError as exc:
        raise ConfigError(f"law: {exc}") from None
    cfg["_law"] = law
    if cmd == "gram":
        for m in cfg["m"]:
            for N in cfg["N"]:
                if not 1 <= N < m:
                    raise ConfigError(f"m/N: need 1 <= N < m (got N={N}, m={m})")
    if cmd == "stein":
        if cfg["suite"] in ("identity", "all"):
            if not 0 < cfg["tau0"] < cfg["tau_max"]:
                raise ConfigError("tau0/tau_max: need 0 < tau0 < tau_max")
            for m in cfg["m"]:
                for N in cfg["N"]:
                    if not 1 <= N <= m:
                        raise ConfigError(f"m/N: need 1 <= N <= m (got N={N}, m={m})")
            for tag in cfg["functionals"]:
                try:
                    by_tag(tag)
                except ValueError as exc:
                    raise ConfigError(f"functionals: {exc}") from None
            if cfg["reps"] % 50:
                raise ConfigError("reps: the identity suite needs a multiple of 50 (batch means)")
        if cfg["suite"] in ("probe", "all"):
            for N, m in cfg["pairs"]:
                if not m > 8 * N:
                    raise ConfigError(f"pairs: need m > 8N (got N={N}, m={m})")
            if any(e < 0 for e in cfg["eps"]) or any(t <= 0 for t in cfg["tau"]):
                raise ConfigError("eps/tau: need eps >= 0 and tau > 0")
    if cmd in ("rate", "localtime", "norms"):
        ladder = cfg["ladder"]
        if len(ladder) < (3 if cmd != "norms" else 1) or any(m < 1 for m in ladder):
            raise ConfigError("ladder: need at least 3 positive sizes")
        if len(set(ladder)) != len(ladder):
            raise ConfigError("ladder: sizes must be distinct")
    if cmd == "rate" and cfg["fine_factor"] < 64:
        raise ConfigError("fine_factor: the Brownian stand-in needs at least 64 fine cells per coarse cell")
    if cmd == "localtime" and law.dim != 1:
        raise ConfigError("law: local time needs d = 1")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _flag(ok):
    return "" if ok is None else int(bool(ok))


def run_gram(cfg):
    rows = []
    seed = cfg["seed"]
    for N in cfg["N"]:
        for m in cfg["m"]:
            if N >= m:
                continue
            asserted = m > 8 * N
            G = gamma_matrix(m, N)
            for b in range(N):
                for c in range(N):
                    rows.append([m, N, "gamma", b, c, float(G.full.get((b, c), 0)), "", "", seed])
            rows.append([m, N, "tridiagonal", "", "", int(G.is_tridiagonal()), 1, _flag(G.is_tridiagonal()), seed])
            dmin = min(G.diag)
            rows.append([m, N, "diag_min", "", "", float(dmin), 0.75, _flag(dmin >= Fraction(3, 4) if asserted else None), seed])
            if m % N == 0:
                rows.append([m, N, "identity", "", "", int(G.is_identity()), 1, _flag(G.is_identity()), seed])
            inv = gamma_inverse_inf_norm(G, exact=True)
            rows.append([m, N, "inv_inf_norm", "", "", float(inv), 2, _flag(inv <= 2 if asserted else None), seed])
            for a in BasisIndex.all(m, 1):
                cc = cond_coeffs(m, N, a)
                rows.append([m, N, "cond_coeff_max", a.cell, "", float(max(abs(cc.row))), 4 * math.sqrt(N / m), _flag(cc.within_bound() if asserted else None), seed])
                cv = cond_variance_exact(m, N, a)
                rows.append([m, N, "cond_variance", a.cell, "", float(cv), 8 * N / m, _flag(m * cv <= 8 * N if asserted else None), seed])
    return rows


def run_norms(cfg):
    eta, p, seed = cfg["eta"], cfg["p"], cfg["seed"]
    idx = validate_index(eta, p)
    rows = []
    for N in (1, 4, 16, 64, 256):
        _val, ratio = kernel_integral_check(N, idx)
        rows.append(["kernel_integral_ratio", eta, p, N, ratio, "", _flag(math.isfinite(ratio)), seed])
    for s1, s2 in ((0.0, 1.0), (0.25, 0.5), (0.5, 0.5 + 1 / 64), (0.1, 0.1 + 1 / 1024)):
        _norm, ratio = step_primitive_norm_check(s1, s2, idx)
        rows.append(["step_primitive_ratio", eta, p, f"{s1:.17g}:{s2:.17g}", ratio, "", _flag(math.isfinite(ratio)), seed])
    stream = SeededStream(seed).named("norms")
    for m in cfg["ladder"]:
        path = sample_walk(m, cfg["_law"], stream.child(m))
        exact = norm_eta_p(path, idx, QuadratureSpec(), method="cellpair")
        lag = norm_eta_p(path, idx, method="lag")
        rows.append(["walk_norm_lag_vs_cellpair", eta, p, m, lag, exact, _flag(abs(lag - exact) <= 1e-2 * exact), seed])
    return rows


def run_stein(cfg):
    rows = []
    seed, law = cfg["seed"], cfg["_law"]
    root = SeededStream(seed)
    if cfg["suite"] in ("identity", "all"):
        for tag in cfg["functionals"]:
            F = by_tag(tag)
            for m in cfg["m"]:
                for N in cfg["N"]:
                    if N > m:
                        continue
                    res = stein_dirichlet_check(F, m, N, law, cfg["tau0"], cfg["tau_max"], cfg["reps"], root.named("stein").child(m, N))
                    rows.append(["identity", tag, m, N, cfg["tau0"], "", res.lhs.value, res.lhs.se, res.rhs.value, res.rhs.se, res.tail + res.quad_error, _flag(res.passed), seed])
    if cfg["suite"] in ("probe", "all"):
        F = by_tag(FUNCTIONALS["probe"][0])
        for N, m in cfg["pairs"]:
            a = BasisIndex(1, (3 * m) // 8, m)
            v = GridPath.zeros(m)
            for tau in cfg["tau"]:
                res = [lipschitz_modulus_probe(F, m, N, a, e, tau, v, cfg["reps"], root.named("probe").child(N, m), eta=cfg["eta"]) for e in cfg["eps"]]
                for e, r in zip(cfg["eps"], res):
                    ok = r.delta.value == 0.0 if e == 0 else r.ratio <= 1.0
                    rows.append(["probe", F.tag, m, N, tau, e, r.delta.value, r.delta.se, r.scale, "", "", _flag(ok), seed])
                pos = [(e, abs(r.delta.value)) for e, r in zip(cfg["eps"], res) if e > 0]
                if len(pos) >= 3 and all(y > 0 for _, y in pos):
                    fit = rate_fit(sorted(pos))
                    rows.append(["probe_eps_exponent", F.tag, m, N, tau, "", fit.slope, fit.slope_se, 1.0, "", 0.2, _flag(abs(fit.slope - 1.0) <= 0.2), seed])
    return rows


def run_rate(cfg):
    idx = validate_index(cfg["eta"], cfg["p"])
    rep = donsker_rate_experiment(cfg["ladder"], cfg["_law"], idx, cfg["reps"], SeededStream(cfg["seed"]).named("rate"), fine_factor=cfg["fine_factor"])
    rows = []
    for row in rep.rows:
        m, N = row["m"], row["N"]
        for name, est in row.items():
            if name in ("m", "N"):
                continue
            env = rep.params[f"c_{name}"] * (m ** (-1.0 / 6.0 + idx.eta / 3.0)) * max(math.log(m), 1.0)
            rows.append([m, N, name, est.value, est.se, env, _flag(est.value <= env + 2.0 * est.se), cfg["seed"]])
        shift = rep.params.get(f"A3_doubling_shift_{m}")
        if shift is not None:
            rows.append([m, N, "A3_doubling_shift", shift, "", "", "", cfg["seed"]])
    for name, ok in sorted(rep.checks.items()):
        rows.append(["", "", f"check:{name}", int(ok), "", "", _flag(ok), cfg["seed"]])
    for name, fit in sorted(rep.fits.items()):
        rows.append(["", "", f"slope:{name}", fit.slope, fit.slope_se, "", "", cfg["seed"]])
    return rows


def run_localtime(cfg):
    rep = local_time_experiment(cfg["ladder"], cfg["_law"], cfg["reps"], SeededStream(cfg["seed"]).named("localtime"))
    c = rep.params["c_W1"]
    rows = []
    for row in rep.rows:
        env = c * row["envelope"]
        w = row["W1"]
        rows.append([row["m"], w.value, w.se, env, row["mean"].value, row["mean"].se, _flag(w.value <= env + 2.0 * w.se), cfg["seed"]])
    rows.append(["check:all", int(rep.passed), "", "", "", "", _flag(rep.passed), cfg["seed"]])
    return rows


COMMANDS = {"gram": run_gram, "norms": run_norms, "stein": run_stein, "rate": run_rate, "localtime": run_localtime}


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def _cell(x):
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, float):
        return "%.17g" % x
    return str(x)


def render(cfg, rows):
    header = HEADERS[cfg["command"]]
    if cfg["format"] == "json":
        params = {k: v for k, v in sorted(cfg.items()) if not k.startswith("_") and k not in ("out", "threads", "format")}
        doc = {"command": cfg["command"], "params": params, "header": header, "rows": rows}
        return json.dumps(doc, indent=1, default=str) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(x) for x in row])
    return buf.getvalue()


def all_ok(rows, header):
    k = header.index("ok")
    return all(str(r[k]) != "0" for r in rows)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"donsker-lab: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    _accel.set_threads(cfg["threads"])
    try:
        rows = COMMANDS[cfg["command"]](cfg)
    except (ArithmeticError, FloatingPointError, ValueError) as exc:
        print(f"donsker-lab: numerical failure in {cfg['command']}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    text = render(cfg, rows)
    if cfg["out"] == "-":
        sys.stdout.write(text)
    else:
        with open(cfg["out"], "w", newline="") as fh:
            fh.write(text)
    return EXIT_OK if all_ok(rows, HEADERS[cfg["command"]]) else EXIT_CHECK_FAILED


if __name__ == "__main__":
    sys.exit(main())
