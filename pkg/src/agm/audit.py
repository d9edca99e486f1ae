"""Step-by-step numerical audit of the derivation chain for one mapping pair.

Every identity is evaluated as two independently assembled sides on each
grid point; the residual is the largest componentwise gap.  Identities
whose printed form admits several readings are evaluated under each
reading and the reading with the smallest residual is recorded.
"""

from __future__ import annotations

import hashlib
import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import invariants as inv
from .agmap import (MappingInstance, basic_sides, contracted_sides, deform, invert_instance,
                    psi_from_connections)
from .curvature import CURVATURE_MODES, curvature, curvature_paper, curvature_std, quadratic_gap, ricci
from .expr import to_text
from .space import covdiff, formal_contraction_deriv, split
from .tensor import EXACT, Grid, TensorField, as_mode, max_abs_diff

__all__ = [
    "IdentityCheck", "AuditOptions", "AuditReport", "CHAIN", "EQ_REFS",
    "run_audit", "localize_failure", "scenario_digest", "DEFAULT_TOLERANCES",
]

CHAIN = tuple(f"A{i}" for i in range(1, 20))
EXTRA = ("A20", "A21")

EQ_REFS = {
    "A1": "reciprocity F^i_a F^a_j = e d^i_j",
    "A2": "basic equation of the mapping",
    "A3": "contracted basic equation",
    "A4": "psi recovered from contracted deformation",
    "A5": "Thomas-type parameter invariance",
    "A6": "symmetric-part deformation",
    "A7": "U = S - omega",
    "A8": "U-derivative relation",
    "A9": "S-derivative relation",
    "A10": "torsion product S^a_jm T^i_an",
    "A11": "torsion product S^i_ja T^a_mn",
    "A12": "omega-derivative expansion",
    "A13": "Delta-hat decomposition via rho-hat",
    "A14": "S-derivative relation rewritten with nu-hat",
    "A15": "curvature deformation",
    "A16": "Ricci relation",
    "A17": "alternated Ricci relation",
    "A18": "nu-hat from Ricci and F traces",
    "A19": "Weyl-type invariance",
    "A20": "curvature reading difference identity",
    "A21": "Weyl-type invariance under both curvature readings",
}

ALGEBRAIC = {"A1", "A2", "A3", "A4", "A5", "A6", "A7", "A10", "A11"}

DEFAULT_TOLERANCES = {
    "exact": {"algebraic": 1e-10, "derivative": 1e-8},
    "fd": {"algebraic": 1e-6, "derivative": 1e-4},
}

# reading families; an options.readings entry pins one value
READING_FAMILIES = {
    "contraction_kind": ("kind1", "kind2"),
    "nu_hat": inv.NU_HAT_READINGS,
    "trace": inv.TRACE_READINGS,
}


@dataclass
class IdentityCheck:
    id: str
    eq_ref: str
    layer: str
    residual: float
    tolerance: float
    argmax_point: tuple | None = None
    argmax_index: tuple = ()
    passed: bool = True
    reading: str | None = None
    readings: dict = field(default_factory=dict)
    inherited: bool = False
    details: dict = field(default_factory=dict)


@dataclass
class AuditOptions:
    mode: object = EXACT
    curvature: str = "paper"
    tolerances: dict | None = None     # {"algebraic": .., "derivative": ..} for the chosen mode
    readings: dict = field(default_factory=dict)
    digest: str | None = None
    only: tuple | None = None          # restrict to these check ids


@dataclass
class AuditReport:
    digest: str
    flags: dict
    checks: list
    summary: str

    def check(self, cid: str) -> IdentityCheck:
        for c in self.checks:
            if c.id == cid:
                return c
        raise KeyError(cid)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def scenario_digest(L: TensorField, inst: MappingInstance) -> str:
    h = hashlib.sha256()
    for comp in L.components.flat:
        h.update(to_text(comp).encode())
        h.update(b";")
    for name in ("psi", "sigma", "F", "mu", "nu"):
        fld = getattr(inst, name)
        h.update(name.encode())
        if isinstance(fld, TensorField):
            for comp in fld.components.flat:
                h.update(to_text(comp).encode())
                h.update(b";")
        else:
            h.update(repr(fld).encode())
    h.update(f"e={inst.e};theta={inst.theta}".encode())
    return h.hexdigest()


class _Pair:
    """Source and target data evaluated once on the grid."""

    def __init__(self, L, inst, grid, mode):
        self.L = L
        self.inst = inst
        self.pts = np.asarray(grid.points if isinstance(grid, Grid) else grid, dtype=float)
        self.mode = mode
        self.n = L.n
        self.Lb = deform(L, inst)
        # no validation here: a bad inverse shows up as failing checks
        self.ib = invert_instance(L, inst, self.pts, mode, tol=np.inf)
        sp, spb = split(L), split(self.Lb)
        self.Sf, self.Sbf = sp.sym, spb.sym
        self.S = sp.sym.values(self.pts)
        self.T = sp.torsion.values(self.pts)
        self.Sb = spb.sym.values(self.pts)
        self.Tb = spb.torsion.values(self.pts)
        self.w = inv.omega(L, inst, self.pts)
        self.wb = inv.omega(self.Lb, self.ib, self.pts)
        self._cache = {}

    def cached(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]


def _su_terms(S, U):
    """S^i_{an} U^a_{jm} - S^a_{jn} U^i_{am} - S^a_{mn} U^i_{ja}, indexed (i, j, m, n)."""
    return (np.einsum("...ian,...ajm->...ijmn", S, U)
            - np.einsum("...ajn,...iam->...ijmn", S, U)
            - np.einsum("...amn,...ija->...ijmn", S, U))


def _delta_pair(v, n):
    """v_{jn} d^i_m + v_{mn} d^i_j as (i, j, m, n)."""
    eye = np.eye(n)
    return np.einsum("...jn,im->...ijmn", v, eye) + np.einsum("...mn,ij->...ijmn", v, eye)


def _sigma_delta(sig, n):
    eye = np.eye(n)
    return np.einsum("...j,im->...ijm", sig, eye) + np.einsum("...m,ij->...ijm", sig, eye)


def _omega_deriv_rhs(L, inst, pts, mode, kind):
    n = L.n
    blk = inv.sigma_blocks(L, inst, pts, mode)
    dc = formal_contraction_deriv(L, pts, mode, kind=kind)
    mu = inst.mu.values(pts)
    w = inst.nu.values(pts) - inst.e * blk.sigma
    M = mu * blk.trace[..., None] + np.einsum("...a,...an->...n", mu, blk.F) - blk.div
    sd = _sigma_delta(blk.sigma, n)
    return (_delta_pair(dc, n) / (n + 1)
            + 0.5 * np.einsum("...n,...ijm->...ijmn", w, sd)
            - 0.5 * blk.block
            + _delta_pair(blk.G, n) / (2 * (n + 1))
            + np.einsum("...n,...ijm->...ijmn", M, sd) / (2 * (n + 1)))


def _alt(x):
    return x - np.swapaxes(x, -1, -2)


def run_audit(L: TensorField, inst: MappingInstance, grid, options: AuditOptions | None = None) -> AuditReport:
    options = options or AuditOptions()
    mode = as_mode(options.mode)
    if options.curvature not in CURVATURE_MODES:
        raise ValueError(f"unknown curvature mode {options.curvature!r}")
    tol = dict(DEFAULT_TOLERANCES[mode.kind])
    if options.tolerances:
        tol.update(options.tolerances)
    for fam, value in options.readings.items():
        if fam not in READING_FAMILIES or value not in READING_FAMILIES[fam]:
            raise ValueError(f"unknown reading {fam}={value!r}")

    P = _Pair(L, inst, grid, mode)
    n = P.n
    pts = P.pts
    cm = options.curvature

    def choices(fam):
        pinned = options.readings.get(fam)
        return (pinned,) if pinned else READING_FAMILIES[fam]

    def R(space):
        return P.cached(("R", space, cm), lambda: curvature(P.L if space == "src" else P.Lb, pts, mode, cm))

    def Fs(space):
        return P.cached(("F", space), lambda: inv.f_script(P.L, P.inst, pts, mode) if space == "src"
                        else inv.f_script(P.Lb, P.ib, pts, mode))

    def nuhat(reading):
        if reading is None:
            return nu_fit()[0]
        return P.cached(("nuhat", reading), lambda: inv.nu_hat(P.L, P.Lb, P.inst, P.ib, pts, mode, reading))

    def U(space):
        if space == "src":
            return P.cached("U", lambda: inv.u_sym(P.L, P.inst, pts))
        return P.cached("Ub", lambda: inv.u_sym(P.Lb, P.ib, pts))

    def dS(space):
        if space == "src":
            return P.cached("dS", lambda: covdiff(P.L, P.Sf, 1, pts, mode))
        return P.cached("dSb", lambda: covdiff(P.Lb, P.Sbf, 1, pts, mode))

    def dW(space):
        if space == "src":
            return P.cached("dW", lambda: covdiff(P.L, inv.omega_field(P.L, P.inst), 1, pts, mode))
        return P.cached("dWb", lambda: covdiff(P.Lb, inv.omega_field(P.Lb, P.ib), 1, pts, mode))

    def su_diff():
        return _su_terms(P.Sb, U("tgt")) - _su_terms(P.S, U("src"))

    def blocks(space, reading="barred"):
        if space == "src":
            return P.cached(("blk", "src"), lambda: inv.sigma_blocks(P.L, P.inst, pts, mode))
        conn = P.Lb if reading == "barred" else P.L
        return P.cached(("blk", reading), lambda: inv.sigma_blocks(conn, P.ib, pts, mode))

    checks: dict[str, IdentityCheck] = {}

    def record(cid, variants: dict[str | None, Callable], details=None):
        if options.only is not None and cid not in options.only:
            return
        if callable(details):
            details = details()
        layer = "algebraic" if cid in ALGEBRAIC else "derivative"
        t = tol[layer]
        results = {}
        for name, fn in variants.items():
            lhs, rhs = fn()
            res, idx = max_abs_diff(lhs, rhs)
            results[name] = (res, idx)
        best = min(results, key=lambda k: (np.nan_to_num(results[k][0], nan=np.inf), str(k)))
        res, idx = results[best]
        point = (tuple(float(v) for v in pts[(idx[0] - 1) % len(pts)])
                 if idx and pts.ndim == 2 else None)
        checks[cid] = IdentityCheck(
            id=cid, eq_ref=EQ_REFS[cid], layer=layer, residual=float(res), tolerance=t,
            argmax_point=point, argmax_index=tuple(idx[1:]) if idx else (),
            passed=bool(res <= t), reading=best,
            readings={k: float(v[0]) for k, v in results.items()} if len(results) > 1 else {},
            details=details or {},
        )

    F = P.inst.F.values(pts)
    eye = np.eye(n)

    record("A1", {None: lambda: (np.concatenate([np.einsum("...ia,...aj->...ij", F, F),
                                                np.einsum("...ia,...aj->...ij", P.ib.F.values(pts), P.ib.F.values(pts))]),
                                 np.concatenate([P.inst.e * np.broadcast_to(eye, F.shape)] * 2))})
    record("A2", {None: lambda: basic_sides(P.L, P.inst, pts, mode)})
    record("A3", {None: lambda: contracted_sides(P.L, P.inst, pts, mode)})
    record("A4", {None: lambda: (P.inst.psi.values(pts), psi_from_connections(P.L, P.Lb, P.inst, pts))})
    record("A5", {None: lambda: (inv.thomas_pi2(P.Lb, P.ib, pts), inv.thomas_pi2(P.L, P.inst, pts))})
    record("A6", {None: lambda: (P.Sb, P.S + P.wb - P.w)})
    record("A7", {None: lambda: (np.concatenate([U("src"), U("tgt")]),
                                 np.concatenate([P.S - P.w, P.Sb - P.wb]))})

    def a8():
        Ub_deriv = covdiff(P.Lb, inv.u_sym_field(P.Lb, P.ib), 1, pts, mode)
        U_deriv = covdiff(P.L, inv.u_sym_field(P.L, P.inst), 1, pts, mode)
        return Ub_deriv, U_deriv + su_diff()
    record("A8", {None: a8})
    record("A9", {None: lambda: (dS("tgt"), dS("src") + dW("tgt") - dW("src") + su_diff())})
    record("A10", {None: lambda: (np.einsum("...ajm,...ian->...ijmn", P.Sb, P.Tb),
                                  np.einsum("...ajm,...ian->...ijmn", P.S + P.wb - P.w, P.T))})
    record("A11", {None: lambda: (np.einsum("...ija,...amn->...ijmn", P.Sb, P.Tb),
                                  np.einsum("...ija,...amn->...ijmn", P.S + P.wb - P.w, P.T))})

    def a12(kind):
        def fn():
            lhs = np.concatenate([dW("src"), dW("tgt")])
            rhs = np.concatenate([_omega_deriv_rhs(P.L, P.inst, pts, mode, kind),
                                  _omega_deriv_rhs(P.Lb, P.ib, pts, mode, kind)])
            return lhs, rhs
        return fn
    record("A12", {r: a12(int(r[-1])) for r in choices("contraction_kind")})

    def a13():
        dSc = formal_contraction_deriv(P.L, pts, mode, of=P.Sf)
        dSbc = formal_contraction_deriv(P.Lb, pts, mode, of=P.Sbf)
        rhs = (_delta_pair(dSbc - dSc, n) / (n + 1)
               + inv.rho_hat(P.Lb, P.ib, pts, mode) - inv.rho_hat(P.L, P.inst, pts, mode))
        return inv.delta_hat(P.L, P.Lb, P.inst, P.ib, pts, mode), rhs

    def a13_details():
        # same relation with 1/(N+1) on the L^b_{jn} T^a_{ba} terms, for diagnosis only
        def lt(conn, torsion):
            tt = np.einsum("...aba->...b", torsion)
            return _delta_pair(np.einsum("...bjn,...b->...jn", conn.values(pts), tt), n)
        lhs, rhs = a13()
        shift = (1.0 - 1.0 / (n + 1)) * (lt(P.Lb, P.Tb) - lt(P.L, P.T))
        return {"torsion_coefficient_1_over_n_plus_1": max_abs_diff(lhs, rhs + shift)[0]}
    record("A13", {None: a13}, details=a13_details)

    def a14(reading):
        def fn():
            nh = nuhat(reading)
            rhs = (dS("src") - _delta_pair(nh, n)
                   - 0.5 * blocks("tgt", reading).block + 0.5 * blocks("src").block + su_diff())
            return dS("tgt"), rhs
        return fn

    def nu_fit():
        # nu-hat that best closes the S-derivative relation, for diagnosis only
        def build():
            known = (dS("src") - 0.5 * blocks("tgt").block + 0.5 * blocks("src").block + su_diff())
            return _fit_linear(lambda v: -_delta_pair(v, n), dS("tgt") - known, n)
        return P.cached("nu_fit", build)

    record("A14", {r: a14(r) for r in choices("nu_hat")},
           details=lambda: {"fitted_nu_hat_misfit": nu_fit()[1]})

    def proj(nh):
        return (-np.einsum("im,...jn->...ijmn", eye, nh) + np.einsum("in,...jm->...ijmn", eye, nh)
                - np.einsum("ij,...mn->...ijmn", eye, _alt(nh)))

    def a15(reading):
        def fn():
            return R("tgt"), R("src") + proj(nuhat(reading)) + Fs("src") - Fs("tgt")
        return fn
    def fitted(fn):
        lhs, rhs = fn()
        return max_abs_diff(lhs, rhs)[0]

    record("A15", {r: a15(r) for r in choices("nu_hat")},
           details=lambda: {
               "projective_form_misfit": _fit_linear(
                   proj, (R("tgt") + Fs("tgt")) - (R("src") + Fs("src")), n)[1],
               "with_fitted_nu_hat": fitted(a15(None))})

    def a16(reading):
        def fn():
            nh = nuhat(reading)
            rhs = (ricci(R("src")) + (n - 1) * nh + _alt(nh)
                   + inv.f_trace(Fs("src")) - inv.f_trace(Fs("tgt")))
            return ricci(R("tgt")), rhs
        return fn
    record("A16", {r: a16(r) for r in choices("nu_hat")},
           details=lambda: {"with_fitted_nu_hat": fitted(a16(None))})

    def a17(reading):
        def fn():
            rhs = (_alt(ricci(R("tgt"))) - _alt(ricci(R("src")))
                   - _alt(inv.f_trace(Fs("src"))) + _alt(inv.f_trace(Fs("tgt"))))
            return (n + 1) * _alt(nuhat(reading)), rhs
        return fn
    record("A17", {r: a17(r) for r in choices("nu_hat")},
           details=lambda: {"with_fitted_nu_hat": fitted(a17(None))})

    def a18(trace, reading):
        def fn():
            Rb, Rs = ricci(R("tgt")), ricci(R("src"))
            fb, fs = inv.f_trace(Fs("tgt")), inv.f_trace(Fs("src"))
            if trace == "alternated":
                fb, fs = _alt(fb), _alt(fs)
            rhs = ((n * Rb + np.swapaxes(Rb, -1, -2)) - (n * Rs + np.swapaxes(Rs, -1, -2))
                   + (n * fb + np.swapaxes(fb, -1, -2)) - (n * fs + np.swapaxes(fs, -1, -2)))
            return (n * n - 1) * nuhat(reading), rhs
        return fn
    record("A18", {f"trace={t},nu_hat={r}": a18(t, r)
                   for t, r in itertools.product(choices("trace"), choices("nu_hat"))},
           details=lambda: {f"trace={t},with_fitted_nu_hat": fitted(a18(t, None))
                            for t in choices("trace")})

    def weyl(space, trace, curv):
        key = ("W", space, trace, curv)
        conn, data = (P.L, P.inst) if space == "src" else (P.Lb, P.ib)
        return P.cached(key, lambda: inv.weyl_pi2(conn, data, pts, curv, trace, mode))

    record("A19", {t: (lambda t=t: (weyl("tgt", t, cm), weyl("src", t, cm))) for t in choices("trace")})

    def a20():
        lhs = np.concatenate([curvature_paper(P.L, pts, mode) - curvature_std(P.Sf, pts, mode),
                              curvature_paper(P.Lb, pts, mode) - curvature_std(P.Sbf, pts, mode)])
        rhs = np.concatenate([quadratic_gap(P.Sf, pts), quadratic_gap(P.Sbf, pts)])
        return lhs, rhs
    record("A20", {None: a20})

    trace_for_a21 = checks["A19"].reading if "A19" in checks else options.readings.get("trace", "plain")
    record("A21", {c: (lambda c=c: (weyl("tgt", trace_for_a21, c), weyl("src", trace_for_a21, c)))
                   for c in CURVATURE_MODES},
           details=lambda: {"trace": trace_for_a21})

    ordered = [checks[c] for c in CHAIN + EXTRA if c in checks]
    failed_before = False
    for c in ordered:
        if c.id not in CHAIN:
            continue
        if not c.passed and failed_before:
            c.inherited = True
        failed_before = failed_before or not c.passed

    flags = {
        "mode": mode.kind,
        "fd_step": mode.h if mode.kind == "fd" else None,
        "curvature": cm,
        "theta": P.inst.theta,
        "grid_points": int(pts.shape[0]),
        "tolerances": tol,
        "readings": {c.id: c.reading for c in ordered if c.reading is not None},
    }
    report = AuditReport(digest=options.digest or scenario_digest(L, inst), flags=flags,
                         checks=ordered, summary="")
    first = localize_failure(report)
    report.summary = "all pass" if first == "all pass" else f"first failure: {first.id}"
    return report


def _fit_linear(op, target: np.ndarray, n: int):
    """Least-squares v (per point) for op(v) = target; returns (v, worst misfit).

    ``op`` maps an (N, N) array, possibly batched, to the target's trailing shape.
    """
    cols = []
    for a in range(n):
        for b in range(n):
            E = np.zeros((n, n))
            E[a, b] = 1.0
            cols.append(op(E).reshape(-1))
    A = np.stack(cols, axis=1)
    tail = op(np.zeros((n, n))).ndim
    batch = target.shape[:target.ndim - tail]
    flat = target.reshape(batch + (-1,))
    sol = flat @ np.linalg.pinv(A).T
    misfit = float(np.max(np.abs(sol @ A.T - flat), initial=0.0))
    return sol.reshape(batch + (n, n)), misfit


def localize_failure(report: AuditReport):
    """First failing check in dependency order that is not an inherited failure."""
    for c in report.checks:
        if not c.passed and not c.inherited:
            return c
    return "all pass"
