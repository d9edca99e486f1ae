"""Command line front end: ``agm <cmd> --scenario file.json``.

Exit codes: 0 when every requested check passes, 1 when one fails, 2 for
usage or scenario errors.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass, field
from numbers import Real
from pathlib import Path

import numpy as np

from . import __version__
from . import invariants as inv
from .agmap import MappingError, MappingInstance, deform, generate_instance, with_theta
from .audit import AuditOptions, READING_FAMILIES, localize_failure, run_audit
from .curvature import CURVATURE_MODES
from .expr import ExprSyntaxError, parse, to_text
from .paths import ChartExitError, ag_defect, integrate_geodesic, samples_to_csv
from .space import ConnectionField
from .tensor import EXACT, TensorField, fd, make_grid

__all__ = ["Scenario", "ScenarioError", "load_scenario", "parse_scenario", "run_command", "main"]

COMMANDS = ("check", "audit", "invariants", "path", "gen")
TOP_KEYS = {"n", "connection", "instance", "generator", "theta", "grid", "fd_step", "tolerances",
            "curvature_mode", "readings", "points", "path"}


class ScenarioError(ValueError):
    def __init__(self, errors: list[str]):
        super().__init__("invalid scenario:\n  " + "\n  ".join(errors))
        self.errors = list(errors)


@dataclass
class PathSpec:
    x0: list
    l0: list
    t_end: float = 1.0
    steps: int = 512
    bounds: list | None = None
    defect_tol: float = 1e-6


@dataclass
class Scenario:
    n: int
    L: ConnectionField
    inst: MappingInstance
    theta: int
    grid: object
    fd_step: float
    tolerances: dict
    curvature_mode: str
    readings: dict
    points: list
    path: PathSpec
    source: str
    digest: str
    raw: dict = field(repr=False)


def _canonical(raw) -> str:
    return json.dumps(raw, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


class _Collector:
    def __init__(self, n):
        self.n = n
        self.errors: list[str] = []

    def fail(self, path, msg):
        self.errors.append(f"{path}: {msg}")

    def expr(self, path, value):
        if isinstance(value, bool) or not isinstance(value, (str, Real)):
            self.fail(path, f"expected an expression string or number, got {type(value).__name__}")
            return None
        if isinstance(value, Real):
            value = repr(float(value))
        try:
            return parse(value, self.n)
        except ExprSyntaxError as exc:
            self.fail(path, str(exc))
            return None

    def expr_list(self, path, value, length):
        if not isinstance(value, list):
            self.fail(path, "expected a list")
            return None
        if len(value) != length:
            self.fail(path, f"expected {length} entries, got {len(value)}")
            return None
        out = [self.expr(f"{path}[{i}]", v) for i, v in enumerate(value)]
        return None if any(o is None for o in out) else out

    def matrix(self, path, value, parse_exprs=True):
        if not isinstance(value, list) or len(value) != self.n:
            self.fail(path, f"expected a {self.n}x{self.n} matrix")
            return None
        rows = []
        for i, row in enumerate(value):
            if parse_exprs:
                r = self.expr_list(f"{path}[{i}]", row, self.n)
            else:
                r = self.numbers(f"{path}[{i}]", row, self.n)
            rows.append(r)
        return None if any(r is None for r in rows) else rows

    def number(self, path, value, *, positive=False, integer=False):
        if isinstance(value, bool) or not isinstance(value, Real):
            self.fail(path, "expected a number")
            return None
        if integer and int(value) != value:
            self.fail(path, "expected an integer")
            return None
        if positive and not value > 0:
            self.fail(path, "must be positive")
            return None
        return int(value) if integer else float(value)

    def numbers(self, path, value, length):
        if not isinstance(value, list) or len(value) != length:
            self.fail(path, f"expected a list of {length} numbers")
            return None
        out = [self.number(f"{path}[{i}]", v) for i, v in enumerate(value)]
        return None if any(o is None for o in out) else out

    def bounds(self, path, value):
        if value is None:
            return None
        if not isinstance(value, list) or len(value) != self.n:
            self.fail(path, f"expected {self.n} [lo, hi] pairs")
            return None
        out = []
        for i, pair in enumerate(value):
            pr = self.numbers(f"{path}[{i}]", pair, 2)
            if pr is not None and not pr[0] < pr[1]:
                self.fail(f"{path}[{i}]", "lower bound must be below upper bound")
                pr = None
            out.append(pr)
        return None if any(o is None for o in out) else out


def _covector(exprs, n):
    return TensorField._wrap(np.array(exprs, dtype=object), n, (0, 1))


def parse_scenario(raw) -> Scenario:
    if not isinstance(raw, dict):
        raise ScenarioError(["$: scenario must be a JSON object"])
    errors = []
    for key in sorted(set(raw) - TOP_KEYS):
        errors.append(f"{key}: unknown field")
    n = raw.get("n")
    if isinstance(n, bool) or not isinstance(n, int) or n < 2:
        raise ScenarioError(errors + ["n: expected an integer dimension >= 2"])
    c = _Collector(n)
    c.errors.extend(errors)

    has_gen = "generator" in raw
    has_explicit = "connection" in raw or "instance" in raw
    if has_gen == has_explicit:
        c.fail("$", "give either 'generator' or both 'connection' and 'instance'")
    elif has_explicit and ("connection" not in raw or "instance" not in raw):
        c.fail("$", "explicit scenarios need both 'connection' and 'instance'")

    theta = raw.get("theta", 1)
    if theta not in (1, 2) or isinstance(theta, bool):
        c.fail("theta", "must be 1 or 2")
        theta = 1

    grid_raw = raw.get("grid", {})
    grid = None
    if not isinstance(grid_raw, dict):
        c.fail("grid", "expected an object")
    else:
        for key in sorted(set(grid_raw) - {"count", "seed", "bounds"}):
            c.fail(f"grid.{key}", "unknown field")
        count = c.number("grid.count", grid_raw.get("count", 50), positive=True, integer=True)
        seed = c.number("grid.seed", grid_raw.get("seed", 0), integer=True)
        bounds = c.bounds("grid.bounds", grid_raw.get("bounds"))
        if count is not None and seed is not None and (bounds is not None or "bounds" not in grid_raw):
            grid = make_grid(n, count, seed, bounds)

    fd_step = c.number("fd_step", raw.get("fd_step", 1e-4), positive=True)

    tolerances = {}
    tol_raw = raw.get("tolerances", {})
    if not isinstance(tol_raw, dict):
        c.fail("tolerances", "expected an object")
    else:
        for key, value in sorted(tol_raw.items()):
            if key not in ("algebraic", "derivative"):
                c.fail(f"tolerances.{key}", "unknown layer")
                continue
            v = c.number(f"tolerances.{key}", value, positive=True)
            if v is not None:
                tolerances[key] = v

    curvature_mode = raw.get("curvature_mode", "paper")
    if curvature_mode not in CURVATURE_MODES:
        c.fail("curvature_mode", f"must be one of {list(CURVATURE_MODES)}")

    readings = raw.get("readings", {})
    if not isinstance(readings, dict):
        c.fail("readings", "expected an object")
        readings = {}
    for fam, value in sorted(readings.items()):
        if fam not in READING_FAMILIES:
            c.fail(f"readings.{fam}", f"unknown reading family; known: {sorted(READING_FAMILIES)}")
        elif value not in READING_FAMILIES[fam]:
            c.fail(f"readings.{fam}", f"must be one of {list(READING_FAMILIES[fam])}")

    points = []
    points_raw = raw.get("points", [])
    if not isinstance(points_raw, list):
        c.fail("points", "expected a list of points")
        points_raw = []
    for i, pt in enumerate(points_raw):
        p = c.numbers(f"points[{i}]", pt, n)
        if p is not None:
            points.append(p)

    path = _parse_path(c, raw.get("path", {}))

    L = inst = None
    source = "generator" if has_gen else "explicit"
    if has_gen and not has_explicit:
        L, inst = _parse_generator(c, raw["generator"], grid)
    elif has_explicit and not has_gen:
        L = _parse_connection(c, raw.get("connection"))
        inst = _parse_instance(c, raw.get("instance"))

    if c.errors:
        raise ScenarioError(c.errors)
    if inst.theta != theta:
        inst = with_theta(inst, theta)
    return Scenario(n=n, L=L, inst=inst, theta=theta, grid=grid, fd_step=fd_step,
                    tolerances=tolerances, curvature_mode=curvature_mode, readings=dict(readings),
                    points=points, path=path, source=source,
                    digest=hashlib.sha256(_canonical(raw).encode()).hexdigest(), raw=raw)


def _parse_path(c, raw):
    n = c.n
    default = PathSpec(x0=[0.0] * n, l0=[0.25] * n)
    if not isinstance(raw, dict):
        c.fail("path", "expected an object")
        return default
    for key in sorted(set(raw) - {"x0", "l0", "t_end", "steps", "bounds", "defect_tol"}):
        c.fail(f"path.{key}", "unknown field")
    x0 = c.numbers("path.x0", raw.get("x0", default.x0), n)
    l0 = c.numbers("path.l0", raw.get("l0", default.l0), n)
    if l0 is not None and not any(l0):
        c.fail("path.l0", "initial tangent must be nonzero")
    t_end = c.number("path.t_end", raw.get("t_end", 1.0), positive=True)
    steps = c.number("path.steps", raw.get("steps", 512), integer=True)
    if steps is not None and steps < 16:
        c.fail("path.steps", "must be at least 16")
    tol = c.number("path.defect_tol", raw.get("defect_tol", 1e-6), positive=True)
    bounds = c.bounds("path.bounds", raw.get("bounds"))
    return PathSpec(x0=x0 or default.x0, l0=l0 or default.l0, t_end=t_end or 1.0,
                    steps=steps or 512, bounds=bounds, defect_tol=tol or 1e-6)


def _parse_connection(c, raw):
    if not isinstance(raw, dict):
        c.fail("connection", "expected an object mapping 'i,j,k' to expressions")
        return None
    comps = np.full((c.n,) * 3, parse("0", c.n), dtype=object)
    ok = True
    for key, value in sorted(raw.items()):
        path = f"connection.{key}"
        try:
            idx = tuple(int(p) for p in key.split(","))
        except ValueError:
            c.fail(path, "key must look like 'i,j,k'")
            ok = False
            continue
        if len(idx) != 3 or not all(1 <= i <= c.n for i in idx):
            c.fail(path, f"indices must be three integers in 1..{c.n}")
            ok = False
            continue
        e = c.expr(path, value)
        if e is None:
            ok = False
            continue
        comps[tuple(i - 1 for i in idx)] = e
    return ConnectionField(comps, c.n) if ok else None


def _parse_instance(c, raw):
    n = c.n
    if not isinstance(raw, dict):
        c.fail("instance", "expected an object")
        return None
    for key in sorted(set(raw) - {"e", "psi", "sigma", "F", "mu", "nu"}):
        c.fail(f"instance.{key}", "unknown field")
    e = raw.get("e", 0)
    if isinstance(e, bool) or e not in (0, 1, -1):
        c.fail("instance.e", "must be 0, 1 or -1")
        return None
    zeros = ["0"] * n
    vecs = {name: c.expr_list(f"instance.{name}", raw.get(name, zeros), n)
            for name in ("psi", "sigma", "mu", "nu")}
    F = c.matrix("instance.F", raw.get("F", [zeros] * n))
    if F is None or any(v is None for v in vecs.values()):
        return None
    return MappingInstance(psi=_covector(vecs["psi"], n), sigma=_covector(vecs["sigma"], n),
                           F=TensorField._wrap(np.array(F, dtype=object), n, (1, 1)),
                           mu=_covector(vecs["mu"], n), nu=_covector(vecs["nu"], n), e=e)


def _parse_generator(c, raw, grid):
    n = c.n
    if not isinstance(raw, dict):
        c.fail("generator", "expected an object")
        return None, None
    for key in sorted(set(raw) - {"e", "F0", "p", "q", "sigma", "psi"}):
        c.fail(f"generator.{key}", "unknown field")
    e = raw.get("e")
    if isinstance(e, bool) or e not in (0, 1, -1):
        c.fail("generator.e", "must be 0, 1 or -1")
        e = None
    F0 = c.matrix("generator.F0", raw.get("F0"), parse_exprs=False)
    vecs = {name: c.expr_list(f"generator.{name}", raw.get(name, ["0"] * n), n)
            for name in ("p", "q", "sigma", "psi")}
    if e is None or F0 is None or any(v is None for v in vecs.values()):
        return None, None
    F0 = np.array(F0)
    if e == -1 and n % 2:
        c.fail("generator.e", "e = -1 needs an even dimension")
    if np.max(np.abs(F0 @ F0 - e * np.eye(n))) > 1e-12:
        c.fail("generator.F0", f"F0 F0 must equal {e} I")
    if c.errors:
        return None, None
    try:
        return generate_instance(n, e, F0, vecs["p"], vecs["q"], vecs["sigma"], vecs["psi"],
                                 grid=grid)
    except MappingError as exc:
        c.fail("generator", str(exc))
        return None, None


def load_scenario(path) -> Scenario:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ScenarioError([f"$: cannot read {path}: {exc.strerror}"]) from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError([f"$: malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"]) from None
    return parse_scenario(raw)


# -- reports ----------------------------------------------------------------

def _num(x) -> str:
    return format(float(x), ".17g")


def _array(a) -> list:
    a = np.asarray(a, dtype=float)
    if a.ndim == 0:
        return _num(a)
    return [_array(v) for v in a]


def _check_json(c) -> dict:
    return {
        "id": c.id,
        "eq_ref": c.eq_ref,
        "layer": c.layer,
        "residual": _num(c.residual),
        "tolerance": _num(c.tolerance),
        "pass": c.passed,
        "inherited": c.inherited,
        "reading": c.reading,
        "readings": {k: _num(v) for k, v in c.readings.items()},
        "argmax_point": None if c.argmax_point is None else [_num(v) for v in c.argmax_point],
        "argmax_index": [i for i in c.argmax_index],
        "details": {k: (_num(v) if isinstance(v, Real) and not isinstance(v, bool) else v)
                    for k, v in c.details.items()},
    }


def _meta(sc: Scenario, cmd: str, mode) -> dict:
    return {
        "tool": "agm",
        "version": __version__,
        "command": cmd,
        "scenario_digest": sc.digest,
        "scenario_source": sc.source,
        "n": sc.n,
        "mode": mode.kind,
        "fd_step": _num(mode.h) if mode.kind == "fd" else None,
        "curvature": sc.curvature_mode,
        "theta": sc.theta,
        "grid": {"count": int(len(sc.grid.points)), "seed": sc.grid.seed,
                 "bounds": [[_num(lo), _num(hi)] for lo, hi in sc.grid.bounds]},
    }


def _audit_report(sc: Scenario, cmd: str, mode, only=None):
    opts = AuditOptions(mode=mode, curvature=sc.curvature_mode, tolerances=sc.tolerances or None,
                        readings=sc.readings, digest=sc.digest, only=only)
    rep = run_audit(sc.L, sc.inst, sc.grid, opts)
    meta = _meta(sc, cmd, mode)
    meta["readings"] = rep.flags["readings"]
    meta["tolerances"] = {k: _num(v) for k, v in sorted(rep.flags["tolerances"].items())}
    first = localize_failure(rep)
    meta["summary"] = "all pass" if first == "all pass" else f"first failure: {first.id}"
    return {"meta": meta, "checks": [_check_json(c) for c in rep.checks]}, rep.passed


def _invariants_report(sc: Scenario, mode, points):
    trace = sc.readings.get("trace", "plain")
    meta = _meta(sc, "invariants", mode)
    meta["readings"] = {"trace": trace, "t2hat": "term"}
    out = []
    for pt in points:
        b = inv.bundle(sc.L, sc.inst, [pt], mode, sc.curvature_mode, trace)
        w = b.omega[0]
        out.append({
            "point": [_num(v) for v in pt],
            "omega": _array(w),
            "omega_symmetry_residual": _num(np.max(np.abs(w - np.swapaxes(w, -1, -2)))),
            "thomas_pi2": _array(b.thomas_pi2[0]),
            "u_sym": _array(b.u_sym[0]),
            "f_script": _array(b.f_script[0]),
            "weyl_pi2": _array(b.weyl[0]),
            "t1": None if b.t1 is None else _array(b.t1[0]),
            "t1_status": "degenerate affinor" if b.t1 is None else "ok",
            "t2hat": _array(b.t2hat[0]),
        })
    return {"meta": meta, "checks": [], "invariants": out}, True


def _path_report(sc: Scenario, mode):
    ps = sc.path
    meta = _meta(sc, "path", mode)
    info = {"x0": [_num(v) for v in ps.x0], "l0": [_num(v) for v in ps.l0], "t_end": _num(ps.t_end),
            "steps": ps.steps, "theta": sc.theta, "defect_tol": _num(ps.defect_tol)}
    try:
        samples = integrate_geodesic(sc.L, ps.x0, ps.l0, ps.t_end, ps.steps, ps.bounds)
    except ChartExitError as exc:
        info.update(status="chart exit", exit_t=_num(exc.t), exit_x=[_num(v) for v in exc.x])
        return {"meta": meta, "checks": [], "paths": [info]}, False, None
    defect = ag_defect(deform(sc.L, sc.inst), samples, sc.theta)
    if defect is None:
        info.update(status="vacuous (N < 3)", defect_max_interior=None)
        ok = True
    else:
        worst = float(np.max(defect[1:-1]))
        ok = worst <= ps.defect_tol
        info.update(status="pass" if ok else "fail", defect_max_interior=_num(worst),
                    endpoint=[_num(v) for v in samples[-1].x])
    csv_text = samples_to_csv(samples, defect)
    return {"meta": meta, "checks": [], "paths": [info]}, ok, csv_text


def _explicit_form(sc: Scenario) -> dict:
    raw = {k: v for k, v in sc.raw.items() if k != "generator"}
    inst = sc.inst

    def texts(fld):
        return [to_text(e) for e in fld.components.flat]

    raw["connection"] = sc.L.to_mapping() if isinstance(sc.L, ConnectionField) \
        else ConnectionField.from_field(sc.L).to_mapping()
    raw["instance"] = {
        "e": inst.e,
        "psi": texts(inst.psi), "sigma": texts(inst.sigma),
        "mu": texts(inst.mu), "nu": texts(inst.nu),
        "F": [[to_text(e) for e in row] for row in inst.F.components],
    }
    return raw


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=True) + "\n"


def run_command(cmd: str, sc: Scenario, mode="exact", points=None):
    """Return (exit code, report text, csv text or None)."""
    mode = EXACT if mode == "exact" else fd(sc.fd_step)
    if cmd == "check":
        rep, ok = _audit_report(sc, cmd, mode, only=("A1", "A2", "A3"))
    elif cmd == "audit":
        rep, ok = _audit_report(sc, cmd, mode)
    elif cmd == "invariants":
        pts = points or sc.points or [list(sc.grid.points[0])]
        rep, ok = _invariants_report(sc, mode, pts)
    elif cmd == "path":
        rep, ok, csv_text = _path_report(sc, mode)
        return (0 if ok else 1), _dump(rep), csv_text
    elif cmd == "gen":
        if sc.source != "generator":
            raise ScenarioError(["generator: 'gen' needs a generator scenario"])
        return 0, _dump(_explicit_form(sc)), None
    else:
        raise ValueError(f"unknown command {cmd!r}")
    return (0 if ok else 1), _dump(rep), None


def _parser():
    p = argparse.ArgumentParser(prog="agm", description="Almost geodesic mapping checks.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--scenario", required=True)
    p.add_argument("--mode", choices=("exact", "fd"), default="exact")
    p.add_argument("--curvature", choices=CURVATURE_MODES)
    p.add_argument("--out")
    p.add_argument("--point", help="comma separated coordinates x1,..,xN")
    p.add_argument("--csv", help="write path samples as CSV (path command)")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        sc = load_scenario(args.scenario)
    except ScenarioError as exc:
        print(f"agm: {exc}", file=sys.stderr)
        return 2
    if args.curvature:
        sc.curvature_mode = args.curvature
    points = None
    if args.point:
        try:
            pt = [float(v) for v in args.point.split(",")]
        except ValueError:
            pt = []
        if len(pt) != sc.n:
            print(f"agm: --point needs {sc.n} comma separated numbers", file=sys.stderr)
            return 2
        points = [pt]
    try:
        code, text, csv_text = run_command(args.command, sc, args.mode, points)
    except ScenarioError as exc:
        print(f"agm: {exc}", file=sys.stderr)
        return 2
    try:
        if args.out:
            Path(args.out).write_text(text)
        else:
            sys.stdout.write(text)
        if args.csv and csv_text is not None:
            Path(args.csv).write_text(csv_text)
    except OSError as exc:
        print(f"agm: cannot write output: {exc.strerror}", file=sys.stderr)
        return 2
    return code


if __name__ == "__main__":
    sys.exit(main())
