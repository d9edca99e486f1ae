"""Derived objects of a mapping pair: omega, the generalized Thomas parameter,
its symmetric part, the deformation tensor of the curvature and the
Weyl-type invariant.

Objects that are later differentiated (omega, the Thomas parameter and
its symmetric part) are built as expression fields so exact derivatives
flow through.  Everything else is assembled numerically from values.
All covariant derivatives here are of the first kind unless stated.
Brackets alternate without division: X_[mn] = X_mn - X_nm.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .agmap import MappingInstance, trace_field
from .curvature import curvature, ricci
from .expr import ZERO
from .space import contraction_field, covdiff, formal_contraction_deriv, split
from .tensor import TensorField, as_mode, as_points, kronecker

__all__ = [
    "DegenerateAffinorError", "InvariantBundle", "TRACE_READINGS", "T2HAT_READINGS",
    "NU_HAT_READINGS", "omega_field", "omega", "thomas_field", "thomas_pi2", "u_sym_field",
    "u_sym", "t1", "t2hat", "sigma_blocks", "f_script", "f_trace", "nu_hat", "rho_hat",
    "delta_hat", "weyl_pi2", "weyl_combination", "bundle",
]

TRACE_READINGS = ("plain", "alternated")
T2HAT_READINGS = ("term", "group")
NU_HAT_READINGS = ("barred", "unbarred")


class DegenerateAffinorError(ValueError):
    pass


# -- omega and the Thomas-type parameter -------------------------------------

def omega_field(L: TensorField, inst: MappingInstance) -> TensorField:
    n = L.n
    sig = inst.sigma.components
    F = inst.F.components
    delta = kronecker(n).components
    tr = trace_field(inst.F).components[()]
    c = contraction_field(L).components
    g = np.array([sig[j] * tr + sum((sig[a] * F[a, j] for a in range(n)), ZERO)
                  for j in range(n)], dtype=object)
    sfs = np.einsum("j,ik->ijk", sig, F) + np.einsum("k,ij->ijk", sig, F)
    cd = np.einsum("j,ik->ijk", c, delta) + np.einsum("k,ij->ijk", c, delta)
    gd = np.einsum("j,ik->ijk", g, delta) + np.einsum("k,ij->ijk", g, delta)
    comps = sfs * (-0.5) + cd * (1.0 / (n + 1)) + gd * (1.0 / (2 * (n + 1)))
    return TensorField._wrap(comps, n, (1, 2))


def omega(L: TensorField, inst: MappingInstance, x) -> np.ndarray:
    return omega_field(L, inst).values(x)


def thomas_field(L: TensorField, inst: MappingInstance) -> TensorField:
    w = omega_field(L, inst)
    return TensorField._wrap(L.components - w.components, L.n, (1, 2))


def thomas_pi2(L: TensorField, inst: MappingInstance, x) -> np.ndarray:
    """L^i_{jk} - omega^i_{jk}; unchanged by the mapping."""
    return thomas_field(L, inst).values(x)


def u_sym_field(L: TensorField, inst: MappingInstance) -> TensorField:
    t = thomas_field(L, inst).components
    return TensorField._wrap((t + np.swapaxes(t, 1, 2)) * 0.5, L.n, (1, 2))


def u_sym(L: TensorField, inst: MappingInstance, x) -> np.ndarray:
    return u_sym_field(L, inst).values(x)


# -- earlier invariants (compute only) ---------------------------------------

def t1(L: TensorField, inst: MappingInstance, x) -> np.ndarray:
    pts = as_points(x, L.n)
    S = split(L).sym.values(pts)
    F = inst.F.values(pts)
    tr = np.einsum("...aa->...", F)
    denom = inst.e - tr ** 2
    if np.any(np.abs(denom) < 1e-12):
        raise DegenerateAffinorError("e - (F^a_a)^2 vanishes; t1 is undefined")
    s = np.einsum("...aka->...k", S)
    Fs = np.einsum("...ak,...a->...k", F, s)
    v = tr[..., None] * s - Fs                                     # (k)
    corr = np.einsum("...k,...ij->...ijk", v, F) + np.einsum("...j,...ik->...ijk", v, F)
    return S - corr / denom[..., None, None, None]


def t2hat(L: TensorField, inst: MappingInstance, x, reading: str = "term", mode=None) -> np.ndarray:
    """Second earlier invariant; ``reading`` selects the symmetrisation scope.

    ``term`` symmetrises only the torsion-affinor product in the trace
    terms; ``group`` symmetrises the whole difference including F_{b|j}.
    """
    if reading not in T2HAT_READINGS:
        raise ValueError(f"unknown reading {reading!r}")
    pts = as_points(x, L.n)
    n, e = L.n, inst.e
    parts = split(L)
    S = parts.sym.values(pts)
    T = parts.torsion.values(pts)
    F = inst.F.values(pts)
    eye = np.eye(n)
    s = np.einsum("...aja->...j", S)
    thomas = S - (np.einsum("...j,ik->...ijk", s, eye) + np.einsum("...k,ij->...ijk", s, eye)) / (n + 1)
    dF = covdiff(L, inst.F, 1, pts, mode)                          # (a, j, k)
    TF = np.einsum("...abk,...bj->...akj", T, F)                   # T^a_{bk} F^b_j at (a, k, j)
    TF_sym = TF + np.swapaxes(TF, -1, -2)
    first = e * np.einsum("...ia,...ajk->...ijk", F, dF + np.swapaxes(dF, -1, -2) - TF_sym)
    # T^a_{c(b} F^c_{j)} indexed (a, b, j)
    TFb = np.einsum("...acb,...cj->...abj", T, F)
    TFb = TFb + np.swapaxes(TFb, -1, -2)
    if reading == "term":
        B = dF - TFb
    else:
        B = dF + np.swapaxes(dF, -1, -2) - TFb
    b = np.einsum("...ba,...abj->...j", F, B)
    second = -(e / (1 + n)) * (np.einsum("...j,ik->...ijk", b, eye) + np.einsum("...k,ij->...ijk", b, eye))
    return thomas + first + second


# -- sigma/F derivative blocks -----------------------------------------------

@dataclass
class SigmaBlocks:
    sigma: np.ndarray        # (j)
    F: np.ndarray            # (i, j)
    trace: np.ndarray        # ()
    dsigma: np.ndarray       # (j, n) = sigma_{j|n}
    dF: np.ndarray           # (i, m, n) = F^i_{m|n}
    block: np.ndarray        # (i, j, m, n) = s_{j|n}F^i_m + s_{m|n}F^i_j + s_j F^i_{m|n} + s_m F^i_{j|n}
    G: np.ndarray            # (j, n) = s_{j|n}F + s_{a|n}F^a_j + s_a F^a_{j|n}
    div: np.ndarray = field(default=None)  # (n) = F^a_{n|a}


def sigma_blocks(L: TensorField, inst: MappingInstance, x, mode=None) -> SigmaBlocks:
    """Kind-1 derivative blocks of sigma and F with respect to ``L``."""
    pts = as_points(x, L.n)
    sig = inst.sigma.values(pts)
    F = inst.F.values(pts)
    tr = np.einsum("...aa->...", F)
    ds = covdiff(L, inst.sigma, 1, pts, mode)
    dF = covdiff(L, inst.F, 1, pts, mode)
    block = (np.einsum("...jn,...im->...ijmn", ds, F) + np.einsum("...mn,...ij->...ijmn", ds, F)
             + np.einsum("...j,...imn->...ijmn", sig, dF) + np.einsum("...m,...ijn->...ijmn", sig, dF))
    G = (ds * tr[..., None, None] + np.einsum("...an,...aj->...jn", ds, F)
         + np.einsum("...a,...ajn->...jn", sig, dF))
    div = np.einsum("...ana->...n", dF)
    return SigmaBlocks(sig, F, tr, ds, dF, block, G, div)


# -- curvature deformation tensor and Weyl-type invariant --------------------

def f_script(L: TensorField, inst: MappingInstance, x, mode=None) -> np.ndarray:
    pts = as_points(x, L.n)
    parts = split(L)
    S = parts.sym.values(pts)
    T = parts.torsion.values(pts)
    Lv = L.values(pts)
    w = omega(L, inst, pts)
    blk = sigma_blocks(L, inst, pts, mode).block
    out = 0.5 * blk - 0.5 * np.swapaxes(blk, -1, -2)
    out -= 2.0 * np.einsum("...ian,...ajm->...ijmn", S, S)
    out += 2.0 * np.einsum("...ajn,...iam->...ijmn", S, S)
    out += np.einsum("...ajm,...ian->...ijmn", w, Lv)
    out += np.einsum("...ian,...ajm->...ijmn", w, Lv)
    out -= np.einsum("...iam,...ajn->...ijmn", w, Lv)
    out -= np.einsum("...ajn,...iam->...ijmn", w, Lv)
    out -= 2.0 * np.einsum("...ija,...amn->...ijmn", w, T)
    return out


def f_trace(f: np.ndarray) -> np.ndarray:
    """F_{jm} = F^a_{jma}."""
    return np.einsum("...ajma->...jm", f)


def weyl_combination(X: np.ndarray, Xtr: np.ndarray) -> np.ndarray:
    """X + 1/(N+1) d^i_j Xtr_[mn] + N/(N^2-1) d^i_[m Xtr_jn] + 1/(N^2-1) d^i_[m Xtr_n]j."""
    n = X.shape[-1]
    eye = np.eye(n)
    alt = Xtr - np.swapaxes(Xtr, -1, -2)
    out = X + np.einsum("ij,...mn->...ijmn", eye, alt) / (n + 1)
    a = np.einsum("im,...jn->...ijmn", eye, Xtr)
    out += n * (a - np.swapaxes(a, -1, -2)) / (n * n - 1)
    b = np.einsum("im,...nj->...ijmn", eye, Xtr)
    out += (b - np.swapaxes(b, -1, -2)) / (n * n - 1)
    return out


def weyl_pi2(L: TensorField, inst: MappingInstance, x, curvature_mode: str = "paper",
             trace_reading: str = "plain", mode=None) -> np.ndarray:
    """Weyl-type tensor built from the curvature and the deformation tensor F."""
    if L.n < 2:
        raise ValueError("needs N >= 2")
    if trace_reading not in TRACE_READINGS:
        raise ValueError(f"unknown trace reading {trace_reading!r}")
    pts = as_points(x, L.n)
    R = curvature(L, pts, mode, curvature_mode)
    f = f_script(L, inst, pts, mode)
    ftr = f_trace(f)
    if trace_reading == "alternated":
        ftr = ftr - np.swapaxes(ftr, -1, -2)
    return weyl_combination(R, ricci(R)) + weyl_combination(f, ftr)


# -- decomposition objects of the derivative chain ---------------------------

def _mu_nu_terms(inst: MappingInstance, pts, blocks: SigmaBlocks):
    mu = inst.mu.values(pts)
    w = inst.nu.values(pts) - inst.e * blocks.sigma
    M = mu * blocks.trace[..., None] + np.einsum("...a,...an->...n", mu, blocks.F) - blocks.div
    return w, M


def rho_hat(L: TensorField, inst: MappingInstance, x, mode=None) -> np.ndarray:
    """Half of the displayed 2*rho expression, indexed (i, j, m, n)."""
    pts = as_points(x, L.n)
    n = L.n
    eye = np.eye(n)
    Lv = L.values(pts)
    T = split(L).torsion.values(pts)
    blk = sigma_blocks(L, inst, pts, mode)
    w, M = _mu_nu_terms(inst, pts, blk)
    sig = blk.sigma
    tt = np.einsum("...aba->...b", T)                               # T^a_{ba}
    LT = np.einsum("...bjn,...b->...jn", Lv, tt)                   # L^b_{jn} T^a_{ba}
    sd = np.einsum("...j,im->...ijm", sig, eye) + np.einsum("...m,ij->...ijm", sig, eye)
    two = (-2.0 * np.einsum("...jn,im->...ijmn", LT, eye)
           - 2.0 * np.einsum("...mn,ij->...ijmn", LT, eye)
           + np.einsum("...n,...ijm->...ijmn", w, sd)
           - blk.block
           + (np.einsum("...jn,im->...ijmn", blk.G, eye) + np.einsum("...mn,ij->...ijmn", blk.G, eye)) / (n + 1)
           + np.einsum("...n,...ijm->...ijmn", M, sd) / (n + 1))
    return 0.5 * two


def delta_hat(L: TensorField, Lbar: TensorField, inst: MappingInstance,
              inst_bar: MappingInstance, x, mode=None) -> np.ndarray:
    """omega_bar differentiated in the target space minus omega in the source."""
    pts = as_points(x, L.n)
    return (covdiff(Lbar, omega_field(Lbar, inst_bar), 1, pts, mode)
            - covdiff(L, omega_field(L, inst), 1, pts, mode))


def nu_hat(L: TensorField, Lbar: TensorField, inst: MappingInstance, inst_bar: MappingInstance,
           x, mode=None, reading: str = "barred") -> np.ndarray:
    """The (i, j) magnitude collecting the delta-terms of the rewritten derivative relation.

    ``reading='barred'`` differentiates the barred sigma/F blocks in the
    target connection; ``'unbarred'`` uses the source connection for them.
    """
    if reading not in NU_HAT_READINGS:
        raise ValueError(f"unknown reading {reading!r}")
    pts = as_points(x, L.n)
    n = L.n
    c = 1.0 / (n + 1)
    h = 1.0 / (2 * (n + 1))

    S, Sb = split(L).sym, split(Lbar).sym
    dSc = formal_contraction_deriv(L, pts, mode, of=S)
    dSbc = formal_contraction_deriv(Lbar, pts, mode, of=Sb)
    T = split(L).torsion.values(pts)
    Tb = split(Lbar).torsion.values(pts)
    LT = np.einsum("...bij,...b->...ij", L.values(pts), np.einsum("...aba->...b", T))
    LTb = np.einsum("...bij,...b->...ij", Lbar.values(pts), np.einsum("...aba->...b", Tb))

    blk = sigma_blocks(L, inst, pts, mode)
    blk_b = sigma_blocks(Lbar if reading == "barred" else L, inst_bar, pts, mode)
    w, M = _mu_nu_terms(inst, pts, blk)
    wb, Mb = _mu_nu_terms(inst_bar, pts, blk_b)
    sig = blk.sigma
    sig_b = blk_b.sigma

    return (-c * dSbc + LTb - np.einsum("...j,...i->...ij", wb, sig)
            + h * blk_b.G - h * np.einsum("...j,...i->...ij", Mb, sig_b)
            + c * dSc - LT + np.einsum("...j,...i->...ij", w, sig)
            - h * blk.G + h * np.einsum("...j,...i->...ij", M, sig))


# -- bundle -------------------------------------------------------------------

@dataclass
class InvariantBundle:
    omega: np.ndarray
    thomas_pi2: np.ndarray
    u_sym: np.ndarray
    f_script: np.ndarray
    f_trace: np.ndarray
    weyl: np.ndarray
    t1: np.ndarray | None = None
    t2hat: np.ndarray | None = None
    nu_hat: np.ndarray | None = None
    rho_hat: np.ndarray | None = None
    delta_hat: np.ndarray | None = None


def bundle(L: TensorField, inst: MappingInstance, x, mode=None, curvature_mode: str = "paper",
           trace_reading: str = "plain", t2hat_reading: str = "term",
           with_optional: bool = True) -> InvariantBundle:
    pts = as_points(x, L.n)
    mode = as_mode(mode)
    f = f_script(L, inst, pts, mode)
    out = InvariantBundle(
        omega=omega(L, inst, pts),
        thomas_pi2=thomas_pi2(L, inst, pts),
        u_sym=u_sym(L, inst, pts),
        f_script=f,
        f_trace=f_trace(f),
        weyl=weyl_pi2(L, inst, pts, curvature_mode, trace_reading, mode),
    )
    if with_optional:
        try:
            out.t1 = t1(L, inst, pts)
        except DegenerateAffinorError:
            out.t1 = None
        out.t2hat = t2hat(L, inst, pts, t2hat_reading, mode)
        out.rho_hat = rho_hat(L, inst, pts, mode)
    return out
