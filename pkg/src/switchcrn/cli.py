"""Command-line entry point: ``switchcrn <subcommand> ...``.

Models come from a file (text grammar or JSON) or from the gallery via
``--gallery ID --param name=value``.  Exit codes: 0 success, 1 usage error,
2 model validation error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from typing import Sequence

import numpy as np

from . import drift, gallery
from .classify import classify, classify_fast, classify_slow, common_unstable_support, perturb_direction
from .metzler import unstable_support_vector
from .mixing import mix
from .model import ModelError, SwitchedModel, load_model, model_to_dict, reaction_changes
from .sim import CSV_HEADER, SimConfig, simulate, sweep_kappa, parse_grid


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# -- helpers -------------------------------------------------------------------


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, default=_json_default) + "\n"


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _gallery_params(pairs: Sequence[str] | None) -> dict:
    out = {}
    for p in pairs or ():
        if "=" not in p:
            raise UsageError(f"--param expects name=value, got {p!r}")
        k, v = p.split("=", 1)
        out[k.strip()] = _parse_value(v.strip())
    return out


def _load(args) -> SwitchedModel:
    if getattr(args, "gallery", None):
        if args.model:
            raise UsageError("give either a model file or --gallery, not both")
        try:
            entry = gallery.get(args.gallery)
        except KeyError as exc:
            raise UsageError(exc.args[0]) from None
        try:
            return entry.build(**_gallery_params(args.param))
        except TypeError as exc:
            raise UsageError(f"bad gallery parameters: {exc}") from None
        except ValueError as exc:
            raise ModelError(str(exc)) from None
    if not args.model:
        raise UsageError("a model file or --gallery ID is required")
    if not os.path.isfile(args.model):
        raise UsageError(f"cannot read model file {args.model!r}")
    return load_model(args.model)


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(a) for a in text.split(","))
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None


def _floats(text: str) -> np.ndarray:
    try:
        return np.array([float(a) for a in text.split(",")])
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _grid(text: str) -> list[float]:
    try:
        return parse_grid(text)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _one_kappa(text: str | None) -> float | None:
    if text is None:
        return None
    grid = _grid(text)
    if len(grid) != 1:
        raise UsageError("this command takes a single --kappa value")
    return grid[0]


def _x0(args, model: SwitchedModel) -> tuple[int, ...]:
    x0 = _ints(args.x0) if args.x0 else (1,) * model.n_species
    if len(x0) != model.n_species:
        raise UsageError(f"--x0 needs {model.n_species} entries")
    return x0


# -- subcommands ---------------------------------------------------------------


def analysis(model: SwitchedModel) -> dict:
    """Model JSON plus linearization data; re-reading it as a model ignores the extra keys."""
    lds, md = mix(model)
    out = model_to_dict(model)
    for env, ld in zip(out["environments"], lds):
        env["matrix"] = ld.matrix.tolist()
        env["inflow"] = ld.inflow.tolist()
        env["is_mass_action"] = ld.is_mass_action
        env["is_at_most_monomolecular"] = ld.is_at_most_monomolecular
        env["is_linear_generator"] = ld.is_linear_generator
    out["w"] = md.w.tolist()
    out["mixed_matrix"] = md.mixed_matrix.tolist()
    return out


def cmd_analyze(args) -> int:
    _emit(_dumps(analysis(_load(args))), args.out)
    return 0


def cmd_classify(args) -> int:
    model = _load(args)
    _emit(_dumps(classify(model).to_dict(model.species)), args.out)
    return 0


def _named_h(model: SwitchedModel, name: str, kappa: float, coeffs: str | None) -> drift.LyapunovFn:
    n, d = model.n_env, model.n_species
    if name in ("linear", "reciprocal"):
        c = _floats(coeffs) if coeffs else np.ones(d)
        if c.size == d:
            c = np.tile(c, (n, 1))
        elif c.size == n * d:
            c = c.reshape(n, d)
        else:
            raise UsageError(f"--coeffs needs {d} or {n * d} numbers")
        return drift.LyapunovFn.linear(c) if name == "linear" else drift.LyapunovFn.reciprocal(c)
    if name == "power":
        if d != 1:
            raise UsageError("the power form needs a one-species model")
        c = _floats(coeffs) if coeffs else np.ones(n)
        if c.size != n:
            raise UsageError(f"--coeffs needs {n} scales for the power form")
        return drift.LyapunovFn.power(c, kappa / 3.0)
    if name == "fast-ergodic":
        return drift.fast_ergodic_function(model, kappa)
    if name == "slow-ergodic":
        return drift.build_slow_ergodic(model)[0]
    raise UsageError(f"unknown function {name!r}")


def cmd_generator(args) -> int:
    model = _load(args)
    kappa = _one_kappa(args.kappa)
    if kappa is None:
        raise UsageError("--kappa is required")
    try:
        h = _named_h(model, args.h, kappa, args.coeffs)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.box is not None:
        xs = drift.box_states(model.n_species, args.box)
        rows = drift.generator_table(model, kappa, h, xs)
        if args.format == "csv":
            head = ",".join([*model.species, "env", "value"])
            lines = [head] + [",".join([*map(str, x), str(i + 1), repr(float(v))]) for x, i, v in rows]
            _emit("\n".join(lines) + "\n", args.out)
        else:
            _emit(_dumps([{"x": list(x), "env": i + 1, "value": v} for x, i, v in rows]), args.out)
        return 0
    if not args.state:
        raise UsageError("--state or --box is required")
    x = _ints(args.state)
    if len(x) != model.n_species:
        raise UsageError(f"--state needs {model.n_species} entries")
    i = args.env - 1
    if not 0 <= i < model.n_env:
        raise UsageError("--env out of range")
    value = drift.generator_apply(model, kappa, h, x, i)
    _emit(_dumps({"kappa": kappa, "h": h.to_dict(), "x": list(x), "env": args.env, "value": value}), args.out)
    return 0


GROUPED_KAPPAS = tuple(2.0 ** k for k in range(0, 21))
GROUPED_EPS = tuple(2.0 ** -k for k in range(0, 21))


def drift_report(model: SwitchedModel, check: str, kappa: float | None = None, box: int = 30) -> dict:
    """Run one drift check; thresholds come from the doubling/halving grid when kappa is omitted."""
    if check == "fast-ergodic":
        try:
            h, k = drift.build_fast_ergodic(model)
        except ValueError as exc:
            return {"check": check, "applicable": False, "reason": str(exc)}
        if h is None:
            return {"check": check, "applicable": True, "threshold": None}
        if kappa is not None:
            h = drift.fast_ergodic_function(model, kappa)
        rep = drift.verify_foster_lyapunov(model, kappa or k, h, box)
        return {"check": check, "applicable": True, "threshold": k, "h": h.to_dict(), "report": rep.to_dict()}
    if check == "slow-ergodic":
        try:
            h, k = drift.build_slow_ergodic(model)
        except ValueError as exc:
            return {"check": check, "applicable": False, "reason": str(exc)}
        if k is None:
            return {"check": check, "applicable": True, "threshold": None}
        rep = drift.verify_foster_lyapunov(model, kappa or k / 2, h, box)
        return {"check": check, "applicable": True, "threshold": k, "h": h.to_dict(), "report": rep.to_dict()}
    if check == "fast-transience":
        verdict = classify_fast(model)
        if verdict.kind.value != "EvanescentEventually":
            return {"check": check, "applicable": False, "reason": f"fast verdict is {verdict.kind.value}"}
        lds, md = mix(model)
        cert = unstable_support_vector(md.mixed_matrix)
        supp = set(cert.support)
        xi = [ch for ch in reaction_changes(model) if any(ch[m] != 0 for m in supp)]
        v = perturb_direction(cert.v, md.mixed_matrix, xi)
        k = drift.fast_transience_threshold(model, v)
        kk = kappa or k
        rep = drift.check_fast_transience(model, kk, v) if kk is not None else None
        return {"check": check, "applicable": True, "v": v, "threshold": k,
                "report": None if rep is None else rep.to_dict()}
    if check == "slow-transience":
        verdict = classify_slow(model)
        if verdict.kind.value != "EvanescentEventually":
            return {"check": check, "applicable": False, "reason": f"slow verdict is {verdict.kind.value}"}
        support, certs = common_unstable_support(model)
        vs = np.array([c.v for c in certs])
        k = drift.slow_transience_threshold(model, support, vs)
        kk = kappa or k
        rep = drift.check_slow_transience(model, kk, support, vs) if kk is not None else None
        return {"check": check, "applicable": True, "support": list(support), "threshold": k,
                "report": None if rep is None else rep.to_dict()}
    if check == "grouped":
        if not drift.is_grouped_rate_matrix(model.q_matrix):
            return {"check": check, "applicable": False, "reason": "rate matrix is not of grouped form"}
        eps = float(model.q_matrix[0, 2])
        v1, v2 = drift.default_group_directions(model)
        kappas = GROUPED_KAPPAS if kappa is None else (kappa,)
        scan = drift.grouped_scan(model, kappas, GROUPED_EPS + (eps,), v1, v2)
        return {"check": check, "applicable": True, "eps": eps, "v1": v1, "v2": v2,
                "passing_kappas_at_eps": [k for k, e, ok in scan if ok and e == eps],
                "passing_region": [[k, e] for k, e, ok in scan if ok and e != eps]}
    raise UsageError(f"unknown drift check {check!r}")


def cmd_drift(args) -> int:
    model = _load(args)
    _emit(_dumps(drift_report(model, args.check, _one_kappa(args.kappa), args.box)), args.out)
    return 0


def _config(args, model: SwitchedModel, kappa: float) -> SimConfig:
    return SimConfig(kappa, _x0(args, model), args.i0 - 1, args.t_max, args.escape_norm, args.max_events, args.seed)


def cmd_simulate(args) -> int:
    model = _load(args)
    kappa = _one_kappa(args.kappa)
    if kappa is None:
        raise UsageError("--kappa is required")
    cfg = _config(args, model, kappa)
    tr = simulate(model, cfg, record=args.format == "csv")
    if args.format == "csv":
        lines = [",".join(["t", *model.species, "env"])]
        lines += [",".join([repr(r[0]), *map(str, r[1:])]) for r in tr.rows()]
        _emit("\n".join(lines) + "\n", args.out)
    else:
        _emit(_dumps({"status": tr.status, "final_time": tr.final_time, "final_state": tr.final_state,
                      "final_env": tr.final_env + 1, "n_events": tr.n_events}), args.out)
    return 0


def cmd_sweep(args) -> int:
    model = _load(args)
    if not args.kappa:
        raise UsageError("--kappa grid is required")
    res = sweep_kappa(model, _grid(args.kappa), _config(args, model, 1.0), args.trials, args.threads)
    if args.format == "json":
        _emit(_dumps([r.__dict__ for r in res.rows]), args.out)
    else:
        _emit(res.to_csv(), args.out)
    return 0


def cmd_reproduce(args) -> int:
    try:
        entry = gallery.get(args.id)
    except KeyError as exc:
        raise UsageError(exc.args[0]) from None
    params = _gallery_params(args.param)
    sd = entry.sim
    model = entry.build(**{**(dict(sd.params) if sd else {}), **params})
    os.makedirs(args.out, exist_ok=True)
    verdict = classify(model)
    out = {"id": entry.id, "verdict": verdict.to_dict(model.species)}
    if entry.expected is not None:
        exp = entry.expected(**params)
        out["expected"] = exp.to_dict()
        out["matches_expected"] = exp.matches(verdict)
    with open(os.path.join(args.out, "verdict.json"), "w", encoding="utf-8") as fh:
        fh.write(_dumps(out))
    reports = {}
    for check in ("fast-ergodic", "slow-ergodic", "fast-transience", "slow-transience", "grouped"):
        try:
            reports[check] = drift_report(model, check, box=args.box)
        except (ValueError, ArithmeticError) as exc:
            reports[check] = {"check": check, "applicable": False, "reason": str(exc)}
    with open(os.path.join(args.out, "drift.json"), "w", encoding="utf-8") as fh:
        fh.write(_dumps(reports))
    if sd is not None:
        grid = _grid(args.kappa) if args.kappa else list(sd.kappas)
        cfg = SimConfig(1.0, sd.x0, sd.i0, sd.t_max, sd.escape_norm, sd.max_events, args.seed)
        res = sweep_kappa(model, grid, cfg, args.trials or sd.n_traj, args.threads)
        csv = res.to_csv()
    else:
        csv = CSV_HEADER + "\n"
    with open(os.path.join(args.out, "sweep.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(csv)
    sys.stdout.write(_dumps(out))
    return 0


def cmd_gallery_list(args) -> int:
    rows = [{"id": e.id, "params": dict(e.params), "summary": e.summary} for e in gallery.entries()]
    if args.format == "json":
        _emit(_dumps(rows), args.out)
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["id", "params", "summary"])
        for r in rows:
            w.writerow([r["id"], "; ".join(f"{k}: {v}" for k, v in r["params"].items()), r["summary"]])
        _emit(buf.getvalue(), args.out)
    return 0


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="switchcrn", description="Stability analysis and simulation of switched reaction networks.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, fn, help_, model=True, fmt=None):
        sp = sub.add_parser(name, help=help_)
        if model:
            sp.add_argument("model", nargs="?", help="model file (text grammar or JSON)")
            sp.add_argument("--gallery", metavar="ID", help="use a built-in example instead of a file")
            sp.add_argument("--param", action="append", metavar="NAME=VALUE", help="gallery builder parameter")
        if fmt:
            sp.add_argument("--format", choices=("json", "csv"), default=fmt)
        sp.add_argument("--out", help="output path (default: stdout)")
        sp.set_defaults(func=fn)
        return sp

    def sim_flags(sp):
        sp.add_argument("--x0", help="initial counts, comma-separated (default all ones)")
        sp.add_argument("--i0", type=int, default=1, help="initial environment, 1-based")
        sp.add_argument("--t-max", type=float, default=1000.0)
        sp.add_argument("--escape-norm", type=int, default=1000)
        sp.add_argument("--max-events", type=int, default=10_000_000)
        sp.add_argument("--seed", type=int, default=0)

    add("analyze", cmd_analyze, "linearization, stationary law and mixed matrix as JSON", fmt="json")
    add("classify", cmd_classify, "fast and slow switching verdicts as JSON", fmt="json")

    sp = add("generator", cmd_generator, "evaluate the generator on a Lyapunov function", fmt="json")
    sp.add_argument("--kappa", help="switching speed")
    sp.add_argument("--h", default="linear",
                    choices=("linear", "reciprocal", "power", "fast-ergodic", "slow-ergodic"))
    sp.add_argument("--coeffs", help="coefficients: d numbers (shared), n*d numbers, or n power scales")
    sp.add_argument("--state", help="state x, comma-separated")
    sp.add_argument("--env", type=int, default=1, help="environment, 1-based")
    sp.add_argument("--box", type=int, help="tabulate all states in the box of this radius instead")

    sp = add("drift", cmd_drift, "run a drift check and report thresholds", fmt="json")
    sp.add_argument("--check", required=True,
                    choices=("fast-ergodic", "slow-ergodic", "fast-transience", "slow-transience", "grouped"))
    sp.add_argument("--kappa", help="evaluate at this kappa instead of the threshold")
    sp.add_argument("--box", type=int, default=30, help="box radius for the Foster-Lyapunov check")

    sp = add("simulate", cmd_simulate, "one trajectory (csv: t,x...,env per event; json: summary)", fmt="csv")
    sp.add_argument("--kappa")
    sim_flags(sp)

    sp = add("sweep", cmd_sweep, "escape fraction over a kappa grid", fmt="csv")
    sp.add_argument("--kappa", help="grid: log:lo:hi:n, lin:lo:hi:n, or a comma-separated list")
    sp.add_argument("--trials", type=int, default=200)
    sp.add_argument("--threads", type=int)
    sim_flags(sp)

    sp = add("reproduce", cmd_reproduce, "verdict, drift report and sweep for a gallery entry", model=False)
    sp.add_argument("id")
    sp.add_argument("--param", action="append", metavar="NAME=VALUE")
    sp.add_argument("--kappa", help="override the entry's kappa grid")
    sp.add_argument("--trials", type=int, help="override the entry's trajectory count")
    sp.add_argument("--threads", type=int)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--box", type=int, default=30)
    sp.set_defaults(out="reproduce-out")

    add("gallery-list", cmd_gallery_list, "list the built-in examples", model=False, fmt="csv")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
        return args.func(args)
    except UsageError as exc:
        print(f"switchcrn: error: {exc}", file=sys.stderr)
        return 1
    except ModelError as exc:
        print(f"switchcrn: invalid model: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"switchcrn: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
