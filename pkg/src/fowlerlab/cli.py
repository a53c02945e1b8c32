"""Command-line entry point.

    fowlerlab exponents     --config run.json
    fowlerlab portrait      --config run.json --out out/ --format both
    fowlerlab manifolds     --config run.json --budget 200
    fowlerlab structure     --config run.json --k-max 2
    fowlerlab scaling-check --config run.json

Exit codes: 0 success, 2 config or domain error, 3 regime error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys

import numpy as np

from . import __version__
from .config import RunConfig, dumps, load
from .errors import DomainError, FowlerError, RegimeError
from .fowler import PiecewiseSystem, Side
from .integrate import EventSpec, backend_name, integrate, tolerances
from .manifolds import branch_csv, branch_exists, energy, equilibria, equilibrium_targets, trace_manifold
from .params import UNBOUNDED, ExponentSet
from .shooting import find_structure, scaling_report, structure_theorem

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_REGIME = 3
EXIT_NUMERIC = 4


def _f(v) -> str:
    return format(float(v), ".17g")


def _num(v):
    """Numbers for JSON; UNBOUNDED becomes the string 'unbounded'."""
    if v is UNBOUNDED:
        return "unbounded"
    return v


# ---------------------------------------------------------------- exponents


def panel(exps: ExponentSet, K: float) -> str:
    """Regime plus the portrait panel it belongs to."""
    reg = str(exps.regime)
    if K > 0:
        if exps.l <= exps.serrin:
            where = "l<=2_*"
        elif exps.l >= exps.I_eta:
            where = "l>=I"
        elif exps.hamiltonian:
            where = "l=2^*"
        else:
            where = "l<2^*" if exps.l < exps.sobolev else "l>2^*"
        return f"{reg}, K>0 panel, {where}"
    if exps.l < exps.serrin:
        return f"{reg}, K<0 panel, l<2_*"
    if exps.l > exps.I_eta:
        return f"{reg}, K<0 panel, l>I"
    return f"{reg}, K<0 panel"


def exponents_table(run: RunConfig) -> dict:
    cfg = run.problem()
    sides = []
    for i, K in ((1, cfg.K1), (2, cfg.K2)):
        e = cfg.side(i)
        close = e.critical_proximity()
        sides.append({
            "side": i,
            "K": K,
            "q": e.q,
            "delta": e.delta,
            "l": e.l,
            "alpha": e.alpha,
            "gamma": e.gamma,
            "kappa": e.kappa,
            "lambda": e.lam,
            "Lambda": e.Lam,
            "trace": e.trace,
            "det": e.det,
            "decay": e.decay,
            "serrin": e.serrin,
            "sobolev": e.sobolev,
            "I_eta": _num(e.I_eta),
            "regime": str(e.regime),
            "panel": panel(e, K),
            "hamiltonian": e.hamiltonian,
            "critically_close": close,
        })
    return {"sides": sides}


def _exponents_text(table: dict) -> str:
    lines = []
    for s in table["sides"]:
        flags = []
        if s["hamiltonian"]:
            flags.append("hamiltonian")
        if s["critically_close"]:
            flags.append("critically close to " + ", ".join(s["critically_close"]))
        extra = f"  [{'; '.join(flags)}]" if flags else ""
        lines.append(
            f"side {s['side']}: l={_f(s['l'])} alpha={_f(s['alpha'])} gamma={_f(s['gamma'])} "
            f"kappa={_f(s['kappa'])} lambda={_f(s['lambda'])} Lambda={_f(s['Lambda'])}  "
            f"{s['panel']}{extra}"
        )
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- manifolds and portrait


def _sides(run: RunConfig) -> list[tuple[int, Side]]:
    sys_ = PiecewiseSystem.from_config(run.problem())
    return [(1, sys_.side1), (2, sys_.side2)]


def _trace_all(run: RunConfig):
    out = []
    for i, side in _sides(run):
        for tag in run.branches:
            exists, _ = branch_exists(side, tag)
            if exists:
                out.append((i, tag, trace_manifold(side, tag, run.budget)))
    return out


def _branch_summary(i: int, br) -> dict:
    return {
        "side": i,
        "tag": br.tag,
        "center": br.center,
        "seed_offset": br.seed_offset,
        "seed": list(br.seed),
        "seed_error": br.seed_error,
        "length": br.length,
        "termination": br.termination,
        "target": br.target,
        "points": len(br.t),
        "crossings": [{"j": c.index, "arclength": c.arclength, "y": c.y} for c in br.crossings],
        "end": [float(br.points[-1, 0]), float(br.points[-1, 1])],
    }


def _equilibria_rows(run: RunConfig) -> list[dict]:
    rows = []
    for i, side in _sides(run):
        for eq in equilibria(side):
            rows.append({
                "side": i, "kind": eq.kind, "x": eq.x, "y": eq.y,
                "stability": eq.stability, "energy": eq.energy,
            })
    return rows


def _generic_starts(run: RunConfig, side: Side) -> np.ndarray:
    eqs = equilibria(side)
    reach = max([2.0] + [1.5 * math.hypot(e.x, e.y) for e in eqs])
    g = np.linspace(-reach, reach, run.portrait_grid + 2)[1:-1]
    X, Y = np.meshgrid(g, g, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    if run.jitter_seed is not None:
        rng = np.random.default_rng(run.jitter_seed)
        step = g[1] - g[0] if len(g) > 1 else reach
        pts = pts + rng.uniform(-0.25 * step, 0.25 * step, pts.shape)
    return pts


def _generic_trajectories(run: RunConfig) -> list[dict]:
    out = []
    for i, side in _sides(run):
        spec = EventSpec(targets=equilibrium_targets(side))
        for k, (x0, y0) in enumerate(_generic_starts(run, side)):
            tr = integrate(side, (float(x0), float(y0), 0.0), 1, run.portrait_horizon, spec)
            out.append({"side": i, "index": k, "start": [float(x0), float(y0)], "trajectory": tr})
    return out


def _traj_rows_csv(gen: list[dict], sides: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["side", "index", "t", "x", "y", "E"])
    for g in gen:
        side = sides[g["side"]]
        tr = g["trajectory"]
        for t, x, y in zip(tr.t, tr.x, tr.y):
            w.writerow([g["side"], g["index"], _f(t), _f(x), _f(y), _f(energy((x, y), side))])
    return buf.getvalue()


def _equilibria_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["side", "kind", "x", "y", "stability", "E"])
    for r in rows:
        w.writerow([r["side"], r["kind"], _f(r["x"]), _f(r["y"]), r["stability"], _f(r["energy"])])
    return buf.getvalue()


# ---------------------------------------------------------------- structure and scaling


def _pick_family(run: RunConfig, sys_: PiecewiseSystem) -> str:
    if run.family != "auto":
        return run.family
    msgs = []
    for fam in ("D", "L"):
        try:
            structure_theorem(sys_, fam)
            return fam
        except RegimeError as exc:
            msgs.append(str(exc))
    raise RegimeError("no structure theorem applies: " + " | ".join(msgs))


def _structure_csv(rep: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "value", "lo", "hi", "rel_tol", "zeros", "class", "verified"])
    for s in rep["seeds"]:
        w.writerow([s["k"], _f(s["value"]), _f(s["bracket"][0]), _f(s["bracket"][1]),
                    _f(s["rel_tol"]), s["zeros"], s["class"], s["verified"]])
    return buf.getvalue()


def _intersections_csv(rep: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["j", "first", "x", "y", "branch", "theta", "in_window", "parity_ok", "transversality", "seed"])
    for q in rep["intersections"]:
        w.writerow([q["j"], q["first"], _f(q["x"]), _f(q["y"]), q["branch"], _f(q["theta"]),
                    q["in_window"], q["parity_ok"], _f(q["transversality"]), _f(q["seed"])])
    return buf.getvalue()


def _structure_text(rep: dict) -> str:
    name = rep["family"]
    lines = [f"{rep['theorem']}: {name}-family, seed bound {_f(rep['seed_bound'])}"]
    for s in rep["seeds"]:
        ok = "verified" if s["verified"] else "NOT verified"
        lines.append(f"  {name}_{s['k']} = {_f(s['value'])}  {s['class']}  ({ok}, rel tol {s['rel_tol']:.1e})")
    for iv in rep["intervals"]:
        lines.append(f"  ({_f(iv['lo'])}, {_f(iv['hi'])}): {', '.join(iv['classes'])}")
    for q in rep["intersections"]:
        if q["first"]:
            lines.append(f"  Q_{q['j']} = ({_f(q['x'])}, {_f(q['y'])}) on {q['branch']}, "
                         f"theta {q['theta']:.6f}, transversality {q['transversality']:.6g}")
    for wmsg in rep["warnings"]:
        lines.append(f"  warning: {wmsg}")
    return "\n".join(lines) + "\n"


def _scaling_csv(rep: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["quantity", "base", "scaled", "expected_ratio", "rel_error"])
    expect = {"R0": rep["rhobar"], "U0": rep["factor"], "D0": rep["factor"]}
    for key in ("R0", "U0", "D0"):
        w.writerow([key, _f(rep["base"][key]), _f(rep["scaled"][key]), _f(expect[key]), _f(rep["errors"][key])])
    return buf.getvalue()


# ---------------------------------------------------------------- dispatch


def _write(out_dir: str, name: str, text: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, name), "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _envelope(command: str, run: RunConfig, body: dict) -> dict:
    tol = {"rtol": run.rtol, "atol": run.atol}
    return {"command": command, "version": __version__, "config": run.to_dict(), "tolerances": tol, **body}


def run_command(command: str, run: RunConfig, out_dir: str) -> str:
    """Execute ``command`` and write its files; returns the human summary."""
    want_json = run.format in ("json", "both")
    want_csv = run.format in ("csv", "both")
    with tolerances(run.rtol, run.atol):
        if command == "exponents":
            table = exponents_table(run)
            if want_json:
                _write(out_dir, "exponents.json", dumps(_envelope(command, run, table)))
            if want_csv:
                buf = io.StringIO()
                w = csv.writer(buf, lineterminator="\n")
                keys = list(table["sides"][0])
                w.writerow(keys)
                for s in table["sides"]:
                    w.writerow([_f(s[k]) if isinstance(s[k], float) else
                                ";".join(s[k]) if isinstance(s[k], list) else s[k] for k in keys])
                _write(out_dir, "exponents.csv", buf.getvalue())
            return _exponents_text(table)

        if command in ("manifolds", "portrait"):
            traced = _trace_all(run)
            body = {"branches": [_branch_summary(i, br) for i, _, br in traced]}
            sides = dict(_sides(run))
            if command == "portrait":
                eqs = _equilibria_rows(run)
                gen = _generic_trajectories(run)
                body = {"equilibria": eqs, **body, "trajectories": [
                    {"side": g["side"], "index": g["index"], "start": g["start"],
                     "termination": g["trajectory"].termination, "target": g["trajectory"].target,
                     "final": [g["trajectory"].x[-1], g["trajectory"].y[-1]]} for g in gen]}
            if want_json:
                _write(out_dir, f"{command}.json", dumps(_envelope(command, run, body)))
            if want_csv:
                for i, tag, br in traced:
                    _write(out_dir, f"branch_side{i}_{tag.replace('+', 'p').replace('-', 'm')}.csv", branch_csv(br))
                if command == "portrait":
                    _write(out_dir, "equilibria.csv", _equilibria_csv(body["equilibria"]))
                    _write(out_dir, "trajectories.csv", _traj_rows_csv(gen, sides))
            lines = [f"side {b['side']} {b['tag']}: {b['termination']}"
                     f"{' -> ' + b['target'] if b['target'] else ''}, length {b['length']:.6g}, "
                     f"{len(b['crossings'])} crossings" for b in body["branches"]]
            return "\n".join(lines) + "\n"

        if command == "structure":
            sys_ = PiecewiseSystem.from_config(run.problem())
            fam = _pick_family(run, sys_)
            rep = find_structure(sys_, run.k_max, fam, horizon=run.horizon, scan_points=run.scan_points,
                                 rtol=run.bisect_rtol, spiral_budget=run.budget).to_dict()
            if want_json:
                _write(out_dir, "structure.json", dumps(_envelope(command, run, {"report": rep})))
            if want_csv:
                _write(out_dir, "seeds.csv", _structure_csv(rep))
                _write(out_dir, "intersections.csv", _intersections_csv(rep))
            return _structure_text(rep)

        if command == "scaling-check":
            rep = scaling_report(run.problem(), run.kbar, run.rhobar).to_dict()
            if want_json:
                _write(out_dir, "scaling.json", dumps(_envelope(command, run, {"report": rep})))
            if want_csv:
                _write(out_dir, "scaling.csv", _scaling_csv(rep))
            e = rep["errors"]
            return (f"factor {_f(rep['factor'])}: rel errors R0 {e['R0']:.2e}, U0 {e['U0']:.2e}, "
                    f"D0 {e['D0']:.2e}; residual {rep['residual']:.2e}\n")
    raise ValueError(f"unknown command {command!r}")


COMMANDS = ("exponents", "portrait", "manifolds", "structure", "scaling-check")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fowlerlab", description="Fowler-variable phase plane and shooting workbench.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="flat JSON run configuration")
    p.add_argument("--out", default=".", help="output directory (default: current)")
    p.add_argument("--k-max", type=int, help="highest zero count to locate")
    p.add_argument("--horizon", type=float, help="far-side integration horizon in t = ln r")
    p.add_argument("--budget", type=float, help="arc-length budget for traced branches")
    p.add_argument("--format", choices=("json", "csv", "both"), help="output files to write")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        run = load(args.config).replace(k_max=args.k_max, horizon=args.horizon, budget=args.budget,
                                        format=args.format)
        summary = run_command(args.command, run, args.out)
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RegimeError as exc:
        print(f"regime error: {exc}", file=sys.stderr)
        return EXIT_REGIME
    except FowlerError as exc:
        print(f"numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    sys.stdout.write(summary)
    sys.stdout.write(f"[backend: {backend_name()}]\n")
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
