"""Command line driver: ``biharmonic-ip <subcommand> --config FILE --out DIR``.

Configs are INI files (``key = value`` under ``[sections]``); every run writes
``manifest.json`` next to its CSV/JSON results.

Exit codes: 0 ok, 1 configuration error, 2 numerical failure, 3 acceptance failure.
"""
from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import logging
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .cgo import (
    DEFAULT_H_LIST,
    CutoffSpec,
    DecayViolationError,
    IllConditionedFitError,
    build_cgo,
    clip_h_list,
    recover_local_coefficients,
    remainder_decay_profile,
)
from .diagnostics import (
    isotropic_invisibility_check,
    null_recovery_check,
    random_symmetric,
    tensor_algebra_check,
)
from .grid import GridDomain, GridError, Segment
from .io import load_model, write_decay_csv, write_json, write_pairs_csv
from .null_recovery import InconsistentOracleError, NullConstraintError
from .pde_solver import MANUFACTURED, SingularSystemError, convergence_study
from .reconstruct import (
    CascadeError,
    CoefficientBasis,
    InvalidTestFunctionError,
    UnderdeterminedError,
    random_test_functions,
    recover_w,
    taylor_cascade,
)
from .semilinear import (
    CoefficientModel,
    DivergenceError,
    dn_oracle,
    field_oracle,
    linearized_solution,
    mixed_difference,
)
from .tensor_core import SymTensor

log = logging.getLogger("biharmonic_ip")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_ACCEPTANCE = 0, 1, 2, 3

NUMERICAL_ERRORS = (
    SingularSystemError, DivergenceError, UnderdeterminedError, CascadeError,
    IllConditionedFitError, DecayViolationError, InconsistentOracleError,
    InvalidTestFunctionError, np.linalg.LinAlgError,
)

DEFAULTS = {
    "grid": {"N": "31", "gamma": "left:0:1", "margin": "0.25"},
    "models": {"true": "", "reference": ""},
    "probe": {"tau": "1, 2", "h_list": "", "x0": "0.9, 0.5", "dimension": "3", "N": "63"},
    "solve": {"N_list": "15, 31, 63", "solutions": "sin2, expsin", "order_min": "1.7",
              "order_max": "2.3"},
    "linearization": {"m": "2", "eps": "0.04, 0.02, 0.01", "symmetric": "false"},
    "recovery": {"m_max": "2", "eps": "1e-3", "ranks": "0", "degree": "0", "lambda": "",
                 "n_tests": "6", "max_freq": "1.0", "tolerance": ""},
    "selftest": {"count": "1000", "pairs": "10000"},
}


class ConfigError(ValueError):
    pass


# -- config helpers --------------------------------------------------------------

def load_config(path):
    cfg = configparser.ConfigParser()
    cfg.read_dict(DEFAULTS)
    if path is not None:
        if not Path(path).is_file():
            raise ConfigError(f"config file {path} does not exist")
        try:
            with open(path) as fh:
                cfg.read_file(fh)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return cfg


def _floats(text):
    try:
        return [float(t) for t in text.replace(";", ",").split(",") if t.strip()]
    except ValueError as exc:
        raise ConfigError(f"expected a list of numbers, got {text!r}") from exc


def _ints(text):
    return [int(round(v)) for v in _floats(text)]


def _get(cfg, section, key, kind=str):
    raw = cfg.get(section, key)
    try:
        if kind is bool:
            return cfg.getboolean(section, key)
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key} = {raw!r} is not a valid {kind.__name__}") from exc


def _gamma(text):
    segs = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        bits = part.split(":")
        try:
            segs.append(Segment(bits[0].strip(), *(float(b) for b in bits[1:])))
        except (GridError, ValueError, TypeError) as exc:
            raise ConfigError(f"bad gamma segment {part!r}: {exc}") from exc
    return segs or None


def make_grid(cfg, N=None):
    N = _get(cfg, "grid", "N", int) if N is None else N
    try:
        return GridDomain(N, _gamma(cfg.get("grid", "gamma")))
    except GridError as exc:
        raise ConfigError(str(exc)) from exc


def _model(cfg, key, default=None):
    path = cfg.get("models", key).strip()
    if not path:
        return default
    if not Path(path).is_file():
        raise ConfigError(f"model file {path} does not exist")
    try:
        return load_model(path)
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read model {path}: {exc}") from exc


def config_hash(cfg):
    text = json.dumps({s: dict(cfg[s]) for s in cfg.sections()}, sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()


# -- subcommands -------------------------------------------------------------------

def cmd_tensor_selftest(cfg, out, rng, workers):
    count = _get(cfg, "selftest", "count", int)
    alg = tensor_algebra_check(rng, count)
    rec = null_recovery_check(rng, count)
    inv = isotropic_invisibility_check(rng, _get(cfg, "selftest", "pairs", int))
    nullity_ok = all(v == (1 if m == 2 else n if m == 3 else 0)
                     for (n, m), v in rec["nullity"].items())
    checks = {
        "decomposition_roundtrip": alg["roundtrip"] < 1e-12,
        "tracefree_trace": alg["trace"] < 1e-12,
        "uniqueness": alg["uniqueness"] < 1e-12,
        "null_recovery": rec["recovery"] < 1e-10,
        "nullity": nullity_ok,
        "isotropic_invisibility": inv < 1e-12,
    }
    result = {
        "errors": {"roundtrip": alg["roundtrip"], "trace": alg["trace"],
                   "uniqueness": alg["uniqueness"], "recovery": rec["recovery"],
                   "isotropic": inv},
        "nullity": {f"n={n},m={m}": v for (n, m), v in rec["nullity"].items()},
        "checks": checks,
    }
    write_json(out / "selftest.json", result)
    return result, all(checks.values())


def cmd_solve(cfg, out, rng, workers):
    N_list = _ints(cfg.get("solve", "N_list"))
    names = [s.strip() for s in cfg.get("solve", "solutions").split(",") if s.strip()]
    lo, hi = _get(cfg, "solve", "order_min", float), _get(cfg, "solve", "order_max", float)
    unknown = [n for n in names if n not in MANUFACTURED]
    if unknown:
        raise ConfigError(f"unknown manufactured solutions {unknown}; choose from {list(MANUFACTURED)}")
    rows, summary, ok = [], {}, True
    for name in names:
        hs, errs, orders = convergence_study(name, N_list)
        for N, h, e in zip(N_list, hs, errs):
            rows.append(f"{name},{N},{h!r},{e!r}")
        slope = float(np.polyfit(np.log(hs), np.log(errs), 1)[0])
        summary[name] = {"errors": errs.tolist(), "orders": orders.tolist(), "slope": slope}
        ok &= bool(np.all((orders >= lo) & (orders <= hi)))
    (out / "convergence.csv").write_text("solution,N,h,max_error\n" + "\n".join(rows) + "\n")
    write_json(out / "convergence.json", summary)
    return summary, ok


def cmd_cgo_decay(cfg, out, rng, workers):
    grid = make_grid(cfg, _get(cfg, "probe", "N", int))
    chi = CutoffSpec(grid, _get(cfg, "grid", "margin", float))
    h_text = cfg.get("probe", "h_list").strip()
    summary, ok = {}, True
    for tau in _floats(cfg.get("probe", "tau")):
        xi = np.array([1j, 1.0]) * tau
        h_list = clip_h_list(grid, xi, _floats(h_text) if h_text else DEFAULT_H_LIST)
        traces = max(max(build_cgo(grid, xi, h, chi=chi).gamma_traces()) for h in h_list)
        prof = remainder_decay_profile(grid, xi, h_list=h_list, chi=chi)
        write_decay_csv(out / f"decay_tau{tau:g}.csv", prof)
        summary[f"tau={tau:g}"] = {"h": prof.h.tolist(), "norm": prof.norm.tolist(),
                                   "slope": prof.slope, "r2": prof.r2,
                                   "strictly_decreasing": prof.strictly_decreasing,
                                   "gamma_trace_max": traces}
        ok &= prof.strictly_decreasing and prof.slope < 0 and prof.r2 > 0.9 and traces < 1e-6
    write_json(out / "cgo_decay.json", summary)
    return summary, ok


def cmd_local_extract(cfg, out, rng, workers):
    n = _get(cfg, "probe", "dimension", int)
    x0 = np.array(_floats(cfg.get("probe", "x0")))
    if len(x0) < n:
        x0 = np.concatenate([x0, np.full(n - len(x0), 0.5)])
    x0 = x0[:n]
    model = _model(cfg, "true")
    if model is not None:
        coeffs = {l: model.get(l, 1) for l in range(4) if model.get(l, 1) is not None}
        n = model.n
    else:
        coeffs = {l: SymTensor(n, l, random_symmetric(rng, 1, n, l)[0]) for l in range(4)}
    h_text = cfg.get("probe", "h_list").strip()
    h_list = _floats(h_text) if h_text else DEFAULT_H_LIST
    rec = recover_local_coefficients(coeffs, x0, n, h_list)
    errors = {}
    for l in range(4):
        given = coeffs.get(l)
        ref = given.full if isinstance(given, SymTensor) else None
        if ref is None and given is not None:
            ref = given.values(np.array(x0[0]), np.array(x0[1]), n)
        if ref is None:
            ref = np.zeros((n,) * l)
        scale = max(float(np.max(np.abs(ref))), 1e-300)
        errors[l] = float(np.max(np.abs(rec.tensors[l].full - ref))) / scale
    result = {"x0": x0.tolist(), "relative_errors": {str(k): v for k, v in errors.items()},
              "recovered": {str(l): T.to_dict() for l, T in rec.tensors.items()}}
    write_json(out / "local_extract.json", result)
    return result, all(e < 1e-2 for e in errors.values())


def cmd_linearize(cfg, out, rng, workers):
    grid = make_grid(cfg)
    model = _model(cfg, "true", CoefficientModel({(0, 1): 1.0, (0, 2): 1.0}))
    m = _get(cfg, "linearization", "m", int)
    eps_list = sorted(_floats(cfg.get("linearization", "eps")), reverse=True)
    sym = _get(cfg, "linearization", "symmetric", bool)
    tests = random_test_functions(grid, m, rng)
    direct = linearized_solution(model, grid, tests.data)
    defects = []
    for eps in eps_list:
        w = mixed_difference(field_oracle(model, grid), tests.data, eps, sym)
        defects.append(float(np.max(np.abs(w.nodes - direct.nodes))))
    ratios = [a / b for a, b in zip(defects[:-1], defects[1:])]
    (out / "linearize.csv").write_text(
        "eps,defect\n" + "".join(f"{e!r},{d!r}\n" for e, d in zip(eps_list, defects)))
    lo, hi = (3.5, 4.5) if sym else (1.7, 2.3)
    result = {"m": m, "symmetric": sym, "eps": eps_list, "defect": defects, "ratios": ratios}
    write_json(out / "linearize.json", result)
    return result, all(lo <= r <= hi for r in ratios)


def cmd_invert(cfg, out, rng, workers):
    grid = make_grid(cfg)
    true = _model(cfg, "true")
    if true is None:
        raise ConfigError("[models] true must name a model file for invert")
    ref = _model(cfg, "reference", CoefficientModel(n=true.n))
    ranks = _ints(cfg.get("recovery", "ranks"))
    degree = _get(cfg, "recovery", "degree", int)
    lam_text = cfg.get("recovery", "lambda").strip()
    lam = float(lam_text) if lam_text else None
    eps = _get(cfg, "recovery", "eps", float)
    m_max = _get(cfg, "recovery", "m_max", int)
    tests = random_test_functions(grid, _get(cfg, "recovery", "n_tests", int), rng,
                                  _get(cfg, "recovery", "max_freq", float)).validate()
    basis = CoefficientBasis.polynomial(tuple(ranks), degree).check_independence(grid)
    if m_max == 2:
        results = [recover_w(dn_oracle(true, grid), dn_oracle(ref, grid), 2, basis, tests, lam,
                             eps, workers=workers)]
    else:
        results, _ = taylor_cascade(dn_oracle(true, grid), ref, grid, m_max, basis, tests, lam,
                                    eps, workers=workers)
    report = {"orders": [r.to_dict() for r in results]}
    for r in results:
        write_pairs_csv(out / f"functional_pairs_order{r.order}.csv", r)
    tol_text = cfg.get("recovery", "tolerance").strip()
    ok = True
    if tol_text:
        # compare with the exact difference of the two models, constant parts only
        tol = float(tol_text)
        for r in results:
            for lab, c, e in zip(r.labels, r.coef, basis.elements):
                exact = _exact_coefficient(true, ref, e, r.order)
                err = abs(c - exact) / max(abs(exact), 1.0)
                ok &= err < tol
    write_json(out / "recovery.json", report)
    return report, ok


def _exact_coefficient(true, ref, element, order):
    (a, b), T = next(iter(element.field.terms.items()))
    idx = tuple(int(i) for i in np.argwhere(T.full != 0)[0]) if T.rank else ()
    val = 0.0
    for model, sign in ((true, 1), (ref, -1)):
        F = model.get(element.rank, order)
        if F is not None and (a, b) in F.terms:
            val += sign * complex(F.terms[(a, b)].full[idx])
    return val


COMMANDS = {
    "tensor-selftest": cmd_tensor_selftest,
    "solve": cmd_solve,
    "cgo-decay": cmd_cgo_decay,
    "local-extract": cmd_local_extract,
    "linearize": cmd_linearize,
    "invert": cmd_invert,
}


def build_parser():
    p = argparse.ArgumentParser(prog="biharmonic-ip", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", type=Path, default=None, help="INI configuration file")
    p.add_argument("--out", type=Path, default=Path("runs"), help="output directory")
    p.add_argument("--seed", type=int, default=0, help="random seed (unsigned 64-bit)")
    p.add_argument("--workers", type=int, default=1, help="worker threads for batched solves")
    p.add_argument("--verbose", "-v", action="count", default=0)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    t0 = time.perf_counter()
    status, error = EXIT_OK, None
    try:
        if not 0 <= args.seed < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {args.seed}")
        if args.workers < 1:
            raise ConfigError(f"workers must be positive, got {args.workers}")
        cfg = load_config(args.config)
        out = args.out
        out.mkdir(parents=True, exist_ok=True)
        rng = np.random.default_rng(args.seed)
        result, ok = COMMANDS[args.command](cfg, out, rng, args.workers)
        if not ok:
            status = EXIT_ACCEPTANCE
            error = {"type": "AcceptanceFailure", "message": "checks outside tolerance"}
    except (ConfigError, NullConstraintError) as exc:
        status, error = EXIT_CONFIG, {"type": type(exc).__name__, "message": str(exc)}
    except NUMERICAL_ERRORS as exc:
        status, error = EXIT_NUMERICAL, {"type": type(exc).__name__, "message": str(exc)}
    elapsed = time.perf_counter() - t0
    try:
        chash = config_hash(load_config(args.config))
    except ConfigError:
        chash = None
    manifest = {
        "command": args.command,
        "argv": list(sys.argv[1:] if argv is None else argv),
        "config_file": str(args.config) if args.config else None,
        "config_hash": chash,
        "seed": args.seed,
        "workers": args.workers,
        "versions": {"biharmonic_ip": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": _scipy_version()},
        "timings": {"total_seconds": elapsed},
        "exit_status": status,
        "error": error,
    }
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        write_json(args.out / "manifest.json", manifest)
    except OSError as exc:
        log.error("cannot write manifest: %s", exc)
    if error is not None:
        print(json.dumps({"status": status, **error}), file=sys.stderr)
    return status


def _scipy_version():
    import scipy

    return scipy.__version__


if __name__ == "__main__":
    sys.exit(main())
