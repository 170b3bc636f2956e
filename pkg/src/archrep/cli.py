"""
Command-line entry point ``archrep``.

Each subcommand reads an optional JSON config (``--config``), lets explicit
flags override it, validates the result and writes ``<out>.csv`` plus a
``<out>.json`` summary embedding the resolved config and a content hash of
the inputs.  Exit status: 0 success, 2 when a checked inequality or
condition fails, 1 on errors.
"""

import argparse
import csv
import hashlib
import io
import json
import sys
from dataclasses import dataclass

import numpy as np

from archrep import __version__
from archrep.exceptions import ArchRepError, ConfigInvalid
from archrep.innovations import KNOWN_LAWS, check_conditions, from_name
from archrep.model import ArchParams, ParamDomain, read_path_csv, simulate_path, write_path_csv

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_FAIL = 2

SUBCOMMANDS = ("simulate", "estimate", "mixing", "maxineq", "robustness", "check")

COMMON_DEFAULTS = {
    "p": None,
    "a": [0.5],
    "beta_a": 1.0,
    "law": "standard-normal",
    "df": None,
    "half_width": None,
    "beta0": 0.5,
    "seed": 0,
    "jobs": 1,
    "out": None,
    "grid_m": 64,
}

DEFAULTS = {
    "simulate": {"n": 1000, "burn_in": None},
    "estimate": {"n": 1000, "burn_in": None, "path": None, "method": "md", "phi": "clipped-e",
                 "clip": 10.0, "kappa": 2.0, "psi": "square", "restarts": 20, "max_evals": 400,
                 "norm_power": 2, "trace": False},
    "mixing": {"ks": list(range(1, 13)), "path_len": 200_000, "reps": 20, "bins": 4, "m": 2},
    "maxineq": {"lemma": "m4", "n": 10, "alpha": 1.5, "reps": 10_000, "exact": None,
                "increments": "rademacher", "scale": 1.0, "f": "constant", "clip": 10.0,
                "x": None, "bins": 8, "d": 1.0, "N": None, "L": None},
    "robustness": {"n": 4000, "reps": 50, "gammas": [0.0, 0.01, 0.02, 0.05],
                   "outliers": [10.0, 100.0, 1000.0], "methods": ["md", "gm"],
                   "phi_bounded": "redescending", "phi_unbounded": "e-ratio", "clip": 10.0,
                   "kappa": 2.0,
                   "psi": "square", "restarts": 20},
    "check": {},
}


# --------------------------------------------------------------------------
# config handling
# --------------------------------------------------------------------------
def _list_of_floats(text):
    return [float(v) for v in str(text).replace(" ", "").split(",") if v]


def _int_list(text):
    out = []
    for part in str(text).replace(" ", "").split(","):
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-")
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


def _bool(text):
    return str(text).strip().lower() in ("1", "true", "yes", "on")


def load_config_file(path):
    """Parse a JSON config; syntax errors become :class:`ConfigInvalid` with a line number."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigInvalid(f"config: cannot read {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"config line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigInvalid("config: top level must be a JSON object")
    return data


def resolve_config(subcommand, file_cfg=None, flags=None):
    """Defaults, then the config file, then explicit flags."""
    cfg = dict(COMMON_DEFAULTS)
    cfg.update(DEFAULTS[subcommand])
    known = set(cfg)
    for source in (file_cfg or {}, flags or {}):
        for key, val in source.items():
            key = key.replace("-", "_")
            if key == "subcommand":
                continue
            if key not in known:
                raise ConfigInvalid(f"field {key!r}: unknown for subcommand {subcommand!r}")
            if val is not None:
                cfg[key] = val
    if isinstance(cfg["a"], (int, float)):
        cfg["a"] = [float(cfg["a"])]
    cfg["a"] = [float(v) for v in cfg["a"]]
    if cfg["p"] is None:
        cfg["p"] = len(cfg["a"])
    if cfg["out"] is None:
        cfg["out"] = f"archrep_{subcommand}"
    cfg["subcommand"] = subcommand
    return cfg


@dataclass(frozen=True)
class Diagnostic:
    field: str
    message: str
    severity: str = "error"

    def __str__(self):
        return f"{self.severity}: {self.field}: {self.message}"


def build_spec(cfg):
    params = {"df": cfg.get("df"), "half_width": cfg.get("half_width")}
    return from_name(cfg["law"], beta0=float(cfg.get("beta0", 0.5)), **params)


def validate(cfg):
    """
    Diagnostics for a resolved config: parameter-set membership, the
    stationarity, density and moment conditions, selectors and grids.
    Errors block a run; warnings are reported only.
    """
    out = []
    a = np.asarray(cfg.get("a", []), dtype=float)
    if a.size == 0:
        out.append(Diagnostic("a", "empty coefficient vector"))
    if int(cfg.get("p") or 0) != a.size:
        out.append(Diagnostic("p", f"p = {cfg.get('p')} but a has {a.size} entries"))
    if not isinstance(cfg.get("seed"), int) or not 0 <= cfg["seed"] < 2**64:
        out.append(Diagnostic("seed", "seed must be an explicit integer in [0, 2^64)"))
    try:
        domain = ParamDomain(beta_a=float(cfg.get("beta_a", 1.0)))
    except ValueError as exc:
        out.append(Diagnostic("beta_a", str(exc)))
        domain = ParamDomain()
    if a.size and (np.any(a < 0) or not np.all(np.isfinite(a))):
        out.append(Diagnostic("a", f"Θ violation: coefficients must be finite and nonnegative, got {a.tolist()}"))
    elif a.size and a.sum() > domain.radius + 1e-12:
        out.append(Diagnostic("a", f"Θ violation: ||a||_1 = {a.sum():g} exceeds 1/beta_a = {domain.radius:g}"))
    spec = None
    if cfg.get("law") not in KNOWN_LAWS or cfg.get("law") == "user-tabulated":
        out.append(Diagnostic("law", f"unknown or unsupported law {cfg.get('law')!r}"))
    else:
        try:
            spec = build_spec(cfg)
        except (ValueError, TypeError) as exc:
            out.append(Diagnostic("law", str(exc)))
    if spec is not None and a.size:
        m2 = spec.moment(2)
        if not m2 * max(a.sum(), 0.0) < 1.0:
            out.append(Diagnostic("a", f"Condition 1 fails: E eps^2 ||a||_1 = {m2 * a.sum():g} >= 1"))
        rep = check_conditions(spec, domain)
        if not rep.condition1:
            out.append(Diagnostic("beta_a", "Condition 1 fails uniformly over the parameter set",
                                  "warning"))
        if not rep.condition3:
            out.append(Diagnostic("law", "Condition 3 (density regularity) fails", "warning"))
        if not rep.condition5:
            out.append(Diagnostic("law", f"Condition 5 fails: E|eps|^{spec.high_order:g} is infinite",
                                  "warning"))
    if "grid_m" in cfg and int(cfg["grid_m"]) < 1:
        out.append(Diagnostic("grid_m", "empty x-grid"))
    sub = cfg.get("subcommand")
    if "kappa" in cfg and not float(cfg["kappa"]) > 0:
        out.append(Diagnostic("kappa", "must be positive"))
    if sub == "estimate":
        if cfg["method"] not in ("md", "gm"):
            out.append(Diagnostic("method", "must be md or gm"))
        if cfg["norm_power"] not in (1, 2):
            out.append(Diagnostic("norm_power", "must be 1 or 2"))
    if sub == "mixing":
        ks = cfg["ks"]
        if not ks or any(b <= c for c, b in zip(ks, ks[1:])) or min(ks) < 1:
            out.append(Diagnostic("ks", "lags must be a nonempty increasing list of positive integers"))
        if int(cfg["bins"]) < 2:
            out.append(Diagnostic("bins", "need at least 2 bins"))
    if sub == "maxineq" and cfg["lemma"] not in ("m4", "s4", "rosenthal", "partition"):
        out.append(Diagnostic("lemma", "must be one of m4, s4, rosenthal, partition"))
    if sub == "robustness":
        if any(not 0.0 <= g < 1.0 for g in cfg["gammas"]):
            out.append(Diagnostic("gammas", "contamination levels must lie in [0, 1)"))
        if not cfg["outliers"]:
            out.append(Diagnostic("outliers", "need at least one outlier scale"))
    return out


def _errors(diags):
    return [d for d in diags if d.severity == "error"]


# --------------------------------------------------------------------------
# output
# --------------------------------------------------------------------------
def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def csv_text(header, rows):
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if np.isnan(v):
            return "nan"
        if np.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return v


def content_hash(cfg, extra=b""):
    """Git-style blob sha1 of the canonical config JSON followed by ``extra`` bytes."""
    body = json.dumps(_jsonable(cfg), sort_keys=True, separators=(",", ":")).encode() + extra
    return hashlib.sha1(b"blob %d\0" % len(body) + body).hexdigest()


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def emit(cfg, csv_body, summary, input_bytes=b""):
    out = cfg["out"]
    doc = {
        "subcommand": cfg["subcommand"],
        "version": __version__,
        "config": cfg,
        "input_hash": content_hash(cfg, input_bytes),
        "csv": f"{out}.csv",
        "result": summary,
    }
    _write(f"{out}.csv", csv_body)
    _write(f"{out}.json", json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------
def _model(cfg):
    return ArchParams(cfg["a"]), build_spec(cfg)


def _weight(name, clip, kappa=2.0, spec=None):
    from archrep.rep import weight_from_name

    return weight_from_name(name, L=float(clip), kappa=float(kappa), spec=spec)


def cmd_simulate(cfg):
    params, spec = _model(cfg)
    path = simulate_path(params, spec, int(cfg["n"]), burn_in=cfg["burn_in"], seed=cfg["seed"])
    text = write_path_csv(path)
    summary = {"n": path.n, "p": path.p, "rows": path.values.size, "burn_in": path.burn_in,
               "mean_square": float(np.mean(path.y**2)) if path.n else 0.0}
    emit(cfg, text, summary)
    return EXIT_OK


def cmd_estimate(cfg):
    from archrep.estimators import estimate_gm, estimate_md
    from archrep.rep import quantile_grid

    params, spec = _model(cfg)
    input_bytes = b""
    if cfg["path"]:
        with open(cfg["path"], "rb") as fh:
            input_bytes = fh.read()
        path = read_path_csv(cfg["path"])
    else:
        path = simulate_path(params, spec, int(cfg["n"]), burn_in=cfg["burn_in"], seed=cfg["seed"])
    phi = _weight(cfg["phi"], cfg["clip"], cfg["kappa"], spec)
    domain = ParamDomain(beta_a=float(cfg["beta_a"]))
    common = dict(domain=domain, restarts=int(cfg["restarts"]), max_evals=int(cfg["max_evals"]),
                  seed=cfg["seed"], trace=bool(cfg["trace"]))
    if cfg["method"] == "md":
        res = estimate_md(path, phi, quantile_grid(spec, int(cfg["grid_m"])),
                          norm_power=int(cfg["norm_power"]), **common)
    else:
        res = estimate_gm(path, phi, psi=cfg["psi"], **common)
    p = res.theta_hat.p
    header = ["method", "status", *[f"theta_{k + 1}" for k in range(p)], "objective",
              "n_evals", "restarts_used", "converged"]
    row = [res.method, res.status, *res.theta_hat.a.tolist(), res.objective_value, res.n_evals,
           res.restarts_used, res.converged]
    summary = dict(zip(header, row))
    if res.trace is not None:
        trace_rows = [[i, *th, v] for i, (th, v) in enumerate(res.trace)]
        _write(f"{cfg['out']}_trace.csv",
               csv_text(["eval", *[f"theta_{k + 1}" for k in range(p)], "objective"], trace_rows))
        summary["trace"] = f"{cfg['out']}_trace.csv"
    emit(cfg, csv_text(header, [row]), summary, input_bytes)
    return EXIT_OK


def cmd_mixing(cfg):
    from archrep.mixing import mixing_decay_report

    params, spec = _model(cfg)
    rep = mixing_decay_report(params, spec, cfg["ks"], path_len=int(cfg["path_len"]),
                              reps=int(cfg["reps"]), bins=int(cfg["bins"]), m=int(cfg["m"]),
                              seed=cfg["seed"], jobs=int(cfg["jobs"]))
    emit(cfg, csv_text(["k", "alpha_hat", "se"], rep.csv_rows()), rep.summary())
    return EXIT_OK


def cmd_maxineq(cfg):
    from archrep import maxineq as mi

    lemma = cfg["lemma"]
    if lemma in ("m4", "s4"):
        law = (mi.rademacher(cfg["scale"]) if cfg["increments"] == "rademacher"
               else mi.gaussian_increments(cfg["scale"]))
        fn = mi.verify_m4_lemma if lemma == "m4" else mi.verify_s4_corollary
        rep = fn(law, n=int(cfg["n"]), alpha=float(cfg["alpha"]), reps=int(cfg["reps"]),
                 seed=cfg["seed"], exact=cfg["exact"])
    else:
        params, spec = _model(cfg)
        f = 1.0 if cfg["f"] == "constant" else _weight(cfg["f"], cfg["clip"])
        if lemma == "rosenthal":
            rep = mi.verify_rosenthal(params, spec, f, x=cfg["x"], n=int(cfg["n"]),
                                      reps=int(cfg["reps"]), seed=cfg["seed"])
        else:
            rep = mi.verify_partition_sup_bound(params, spec, f, n=int(cfg["n"]), d=float(cfg["d"]),
                                                N_ratio=cfg["N"], L=cfg["L"], reps=int(cfg["reps"]),
                                                seed=cfg["seed"], bins=int(cfg["bins"]))
    summary = dict(zip(mi.CSV_HEADER, rep.row()))
    summary["config"] = rep.config
    emit(cfg, csv_text(mi.CSV_HEADER, [rep.row()]), summary)
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_robustness(cfg):
    from archrep.robustness import BiasTable, influence_summary, robustness_experiment, two_point

    params, spec = _model(cfg)
    laws = [two_point(c) for c in cfg["outliers"]]
    table = robustness_experiment(
        params, spec, _weight(cfg["phi_bounded"], cfg["clip"], cfg["kappa"], spec),
        _weight(cfg["phi_unbounded"], cfg["clip"]),
        gammas=cfg["gammas"], outlier_laws=laws, n=int(cfg["n"]), reps=int(cfg["reps"]),
        seed=cfg["seed"], methods=tuple(cfg["methods"]), restarts=int(cfg["restarts"]),
        psi=cfg["psi"], jobs=int(cfg["jobs"]),
    )
    summary = {"cells": [dict(zip(BiasTable.HEADER, r)) for r in table.rows()],
               "failures": {f"{c.gamma}/{c.method}/{c.phi_kind}/{c.law}": c.failures
                            for c in table.cells if c.failures},
               "note": "thresholds for these experiments are pilot-calibrated"}
    influence = {}
    for method in cfg["methods"]:
        for kind in sorted({c.phi_kind for c in table.cells}):
            try:
                s = influence_summary(table, method, kind)
            except ArchRepError:
                continue
            influence[f"{method}/{kind}"] = {"gamma": s["gamma"], "ges": s["ges"], "norm": s["norm"]}
    summary["influence"] = influence
    emit(cfg, csv_text(BiasTable.HEADER, table.rows()), summary)
    return EXIT_OK


def cmd_check(cfg):
    diags = validate(cfg)
    spec = None
    try:
        spec = build_spec(cfg)
    except (ValueError, TypeError):
        pass
    rows = []
    ok = not _errors(diags)
    if spec is not None:
        rep = check_conditions(spec, ParamDomain(beta_a=float(cfg["beta_a"])))
        a = np.asarray(cfg["a"], dtype=float)
        c1_at_a = bool(spec.moment(2) * a.sum() < 1.0)
        rows = [["condition1_at_a", c1_at_a], ["condition1_uniform", rep.condition1],
                ["condition3", rep.condition3], ["condition5", rep.condition5]]
        ok = ok and c1_at_a and rep.condition3 and rep.condition5
    rows += [[f"diagnostic:{d.field}", f"{d.severity}: {d.message}"] for d in diags]
    emit(cfg, csv_text(["check", "value"], rows), {"ok": ok, "diagnostics": [str(d) for d in diags]})
    return EXIT_OK if ok else EXIT_FAIL


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "mixing": cmd_mixing,
    "maxineq": cmd_maxineq,
    "robustness": cmd_robustness,
    "check": cmd_check,
}


def run(cfg):
    """Validate and dispatch a resolved config; returns the exit status."""
    diags = validate(cfg)
    if cfg["subcommand"] != "check" and _errors(diags):
        raise ConfigInvalid([str(d) for d in _errors(diags)])
    return COMMANDS[cfg["subcommand"]](cfg)


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------
def build_parser():
    parser = argparse.ArgumentParser(prog="archrep", description=__doc__.strip().splitlines()[0])
    parser.add_argument("--version", action="version", version=f"archrep {__version__}")
    subs = parser.add_subparsers(dest="subcommand", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON config file; flags override its fields")
        sp.add_argument("--p", type=int)
        sp.add_argument("--a", type=_list_of_floats, help="comma-separated coefficients")
        sp.add_argument("--beta-a", type=float)
        sp.add_argument("--law", choices=KNOWN_LAWS[:3])
        sp.add_argument("--df", type=float)
        sp.add_argument("--half-width", type=float)
        sp.add_argument("--beta0", type=float)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--jobs", type=int)
        sp.add_argument("--grid-m", type=int)
        sp.add_argument("--out", help="output prefix for <out>.csv and <out>.json")

    sp = subs.add_parser("simulate", help="simulate a stationary path")
    common(sp)
    sp.add_argument("--n", type=int)
    sp.add_argument("--burn-in", type=int)

    sp = subs.add_parser("estimate", help="fit the MD or GM estimator")
    common(sp)
    sp.add_argument("--n", type=int)
    sp.add_argument("--burn-in", type=int)
    sp.add_argument("--path", help="CSV written by simulate; simulated from the model if absent")
    sp.add_argument("--method", choices=("md", "gm"))
    sp.add_argument("--phi", choices=("constant", "clipped-e", "e-ratio", "squared-lag", "redescending"))
    sp.add_argument("--clip", type=float)
    sp.add_argument("--kappa", type=float)
    sp.add_argument("--psi")
    sp.add_argument("--restarts", type=int)
    sp.add_argument("--max-evals", type=int)
    sp.add_argument("--norm-power", type=int)
    sp.add_argument("--trace", action="store_const", const=True)

    sp = subs.add_parser("mixing", help="empirical mixing-coefficient decay")
    common(sp)
    sp.add_argument("--ks", type=_int_list, help="lags, e.g. 1-12 or 1,2,5")
    sp.add_argument("--path-len", type=int)
    sp.add_argument("--reps", type=int)
    sp.add_argument("--bins", type=int)
    sp.add_argument("--m", type=int)

    sp = subs.add_parser("maxineq", help="check a maximal or moment inequality")
    common(sp)
    sp.add_argument("--lemma", choices=("m4", "s4", "rosenthal", "partition"))
    sp.add_argument("--n", type=int)
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--reps", type=int)
    sp.add_argument("--exact", action="store_const", const=True)
    sp.add_argument("--mc", dest="exact", action="store_const", const=False)
    sp.add_argument("--increments", choices=("rademacher", "gaussian"))
    sp.add_argument("--scale", type=float)
    sp.add_argument("--f", choices=("constant", "clipped-e", "e-ratio"))
    sp.add_argument("--clip", type=float)
    sp.add_argument("--x", type=float)
    sp.add_argument("--bins", type=int)
    sp.add_argument("--d", type=float)
    sp.add_argument("--N", type=float)
    sp.add_argument("--L", type=float)

    sp = subs.add_parser("robustness", help="outlier contamination experiment")
    common(sp)
    sp.add_argument("--n", type=int)
    sp.add_argument("--reps", type=int)
    sp.add_argument("--gammas", type=_list_of_floats)
    sp.add_argument("--outliers", type=_list_of_floats, help="two-point outlier scales")
    sp.add_argument("--methods", type=lambda s: [m for m in s.split(",") if m])
    sp.add_argument("--phi-bounded", choices=("constant", "clipped-e", "redescending"))
    sp.add_argument("--phi-unbounded", choices=("e-ratio", "squared-lag"))
    sp.add_argument("--clip", type=float)
    sp.add_argument("--kappa", type=float)
    sp.add_argument("--psi")
    sp.add_argument("--restarts", type=int)

    sp = subs.add_parser("check", help="validate a config and report the model conditions")
    common(sp)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    flags = {k: v for k, v in vars(args).items() if k not in ("config", "subcommand") and v is not None}
    try:
        file_cfg = load_config_file(args.config) if args.config else {}
        cfg = resolve_config(args.subcommand, file_cfg, flags)
        return run(cfg)
    except ConfigInvalid as exc:
        for d in exc.diagnostics:
            print(f"archrep: {d}", file=sys.stderr)
        return EXIT_ERROR
    except (ArchRepError, ValueError, OSError) as exc:
        print(f"archrep: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
