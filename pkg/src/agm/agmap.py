"""Equitorsion second-type almost geodesic mappings with reciprocity.

A mapping instance carries the deformation data (psi, sigma, F, mu, nu, e,
theta).  The target connection is

    Lbar^i_{jk} = L^i_{jk} + psi_j d^i_k + psi_k d^i_j + sigma_j F^i_k + sigma_k F^i_j

and the affinor must satisfy

    F^i_{j|k} + F^i_{k|j} = mu_j F^i_k + mu_k F^i_j + (nu_j - e sigma_j) d^i_k + (nu_k - e sigma_k) d^i_j
    F^i_a F^a_j = e d^i_j,   e in {0, 1, -1}.

The torsion-deformation tensor is identically zero here; only equitorsion
mappings are modelled.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .expr import ZERO, as_expr
from .space import ConnectionField, contraction_field, covdiff
from .tensor import EXACT, TensorField, as_mode, as_points, kronecker, make_grid, max_abs_diff

__all__ = [
    "MappingInstance", "FitResult", "FittedCovector", "MappingError", "FitError",
    "deform", "deformation_tensor", "reciprocity_residual", "basic_sides", "basic_residual",
    "contracted_sides", "contracted_residual", "psi_from_connections", "recover_psi",
    "fit_mu_nu", "invert_instance", "generate_instance", "trace_field", "zero_instance",
]

ADMISSIBLE_E = (0, 1, -1)


class MappingError(ValueError):
    """Inadmissible mapping data."""


class FitError(MappingError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class MappingInstance:
    psi: TensorField
    sigma: TensorField
    F: TensorField
    mu: object          # TensorField or FittedCovector: values only are needed
    nu: object
    e: int
    theta: int = 1

    def __post_init__(self):
        if self.e not in ADMISSIBLE_E:
            raise MappingError(f"e must be one of {ADMISSIBLE_E}, got {self.e!r}")
        if self.theta not in (1, 2):
            raise MappingError(f"theta must be 1 or 2, got {self.theta!r}")
        n = self.F.n
        for name in ("psi", "sigma"):
            fld = getattr(self, name)
            if fld.valence != (0, 1) or fld.n != n:
                raise MappingError(f"{name} must be a covector field of dimension {n}")
        if self.F.valence != (1, 1):
            raise MappingError("F must be a (1, 1) field")

    @property
    def n(self) -> int:
        return self.F.n


def zero_instance(n: int, e: int = 0, theta: int = 1) -> MappingInstance:
    z = TensorField._wrap(np.full(n, ZERO, dtype=object), n, (0, 1))
    zf = TensorField._wrap(np.full((n, n), ZERO, dtype=object), n, (1, 1))
    return MappingInstance(psi=z, sigma=z, F=zf, mu=z, nu=z, e=e, theta=theta)


def trace_field(F: TensorField) -> TensorField:
    """Scalar field F^a_a."""
    acc = ZERO
    for a in range(F.n):
        acc = acc + F.components[a, a]
    return TensorField._wrap(np.array(acc, dtype=object), F.n, (0, 0))


def deformation_tensor(inst: MappingInstance) -> TensorField:
    n = inst.n
    psi = inst.psi.components
    sig = inst.sigma.components
    F = inst.F.components
    delta = kronecker(n).components
    comps = (np.einsum("j,ik->ijk", psi, delta) + np.einsum("k,ij->ijk", psi, delta)
             + np.einsum("j,ik->ijk", sig, F) + np.einsum("k,ij->ijk", sig, F))
    return TensorField._wrap(comps, n, (1, 2))


def deform(L: TensorField, inst: MappingInstance) -> ConnectionField:
    if L.n != inst.n:
        raise MappingError("connection and mapping dimensions differ")
    D = deformation_tensor(inst)
    return ConnectionField._wrap(L.components + D.components, L.n, (1, 2))


def _values(fld, pts):
    return fld.values(pts)


def reciprocity_residual(inst: MappingInstance, grid) -> float:
    pts = as_points(grid, inst.n)
    F = inst.F.values(pts)
    lhs = np.einsum("...ia,...aj->...ij", F, F)
    rhs = inst.e * np.broadcast_to(np.eye(inst.n), lhs.shape)
    return max_abs_diff(lhs, rhs)[0]


def basic_sides(L: TensorField, inst: MappingInstance, x, mode=None):
    """Both sides of the basic equation, indexed (i, j, k)."""
    pts = as_points(x, inst.n)
    dF = covdiff(L, inst.F, inst.theta, pts, mode)           # (i, j, k) = F^i_{j|k}
    lhs = dF + np.swapaxes(dF, -1, -2)
    F = inst.F.values(pts)
    mu = _values(inst.mu, pts)
    w = _values(inst.nu, pts) - inst.e * inst.sigma.values(pts)
    eye = np.eye(inst.n)
    rhs = (np.einsum("...j,...ik->...ijk", mu, F) + np.einsum("...k,...ij->...ijk", mu, F)
           + np.einsum("...j,ik->...ijk", w, eye) + np.einsum("...k,ij->...ijk", w, eye))
    return lhs, rhs


def basic_residual(L: TensorField, inst: MappingInstance, grid, mode=None) -> float:
    return max_abs_diff(*basic_sides(L, inst, grid, mode))[0]


def contracted_sides(L: TensorField, inst: MappingInstance, x, mode=None):
    """Trace of the basic equation over (i, k), both sides, indexed j.

    The left side is the gradient of the scalar F^a_a; the right side is
    assembled from mu, nu, sigma and the divergence F^a_{j|a}.
    """
    pts = as_points(x, inst.n)
    n = inst.n
    lhs = trace_field(inst.F).gradient(pts, mode)
    F = inst.F.values(pts)
    tr = np.einsum("...aa->...", F)
    mu = _values(inst.mu, pts)
    w = _values(inst.nu, pts) - inst.e * inst.sigma.values(pts)
    div = np.einsum("...aja->...j", covdiff(L, inst.F, inst.theta, pts, mode))
    rhs = mu * tr[..., None] + np.einsum("...a,...aj->...j", mu, F) + (n + 1) * w - div
    return lhs, rhs


def contracted_residual(L: TensorField, inst: MappingInstance, grid, mode=None) -> float:
    return max_abs_diff(*contracted_sides(L, inst, grid, mode))[0]


def psi_from_connections(L: TensorField, Lbar: TensorField, inst: MappingInstance, x) -> np.ndarray:
    """psi_j recovered from the contracted deformation, with sigma_bar = -sigma, F_bar = F."""
    pts = as_points(x, inst.n)
    n = inst.n
    cbar = contraction_field(Lbar).values(pts)
    c = contraction_field(L).values(pts)
    F = inst.F.values(pts)
    tr = np.einsum("...aa->...", F)
    sig = inst.sigma.values(pts)
    sigbar = -sig
    g_bar = sigbar * tr[..., None] + np.einsum("...a,...aj->...j", sigbar, F)
    g = sig * tr[..., None] + np.einsum("...a,...aj->...j", sig, F)
    return (cbar - c) / (n + 1) + (g_bar - g) / (2 * (n + 1))


def recover_psi(L: TensorField, Lbar: TensorField, inst: MappingInstance, grid, mode=None) -> float:
    pts = as_points(grid, inst.n)
    return max_abs_diff(psi_from_connections(L, Lbar, inst, pts), inst.psi.values(pts))[0]


# -- pointwise least squares for (mu, nu) -----------------------------------

@dataclass(frozen=True)
class FitResult:
    mu: np.ndarray
    nu: np.ndarray
    residual: np.ndarray
    rank: np.ndarray

    @property
    def rank_deficient(self) -> bool:
        return bool(np.any(self.rank < 2 * self.mu.shape[-1]))


def _design(F: np.ndarray, n: int) -> np.ndarray:
    """Columns for mu_a and nu_a of the flattened basic equation at one point."""
    eye = np.eye(n)
    A = np.zeros((n, n, n, 2 * n))
    for a in range(n):
        e_a = eye[a]
        A[..., a] = np.einsum("j,ik->ijk", e_a, F) + np.einsum("k,ij->ijk", e_a, F)
        A[..., n + a] = np.einsum("j,ik->ijk", e_a, eye) + np.einsum("k,ij->ijk", e_a, eye)
    return A.reshape(n ** 3, 2 * n)


def fit_mu_nu(L: TensorField, F: TensorField, sigma: TensorField, e: int, theta: int, x,
              mode=None) -> FitResult:
    """Least-squares (mu, nu) solving the basic equation at each point of ``x``.

    Returns min-norm solutions; ``residual`` is the 2-norm of the misfit and
    ``rank`` the numerical rank of the design matrix, point by point.
    """
    pts = as_points(x, F.n)
    single = pts.ndim == 1
    pts2 = np.atleast_2d(pts)
    n = F.n
    dF = covdiff(L, F, theta, pts2, mode)
    target = dF + np.swapaxes(dF, -1, -2)
    sig = sigma.values(pts2)
    eye = np.eye(n)
    target = target + e * (np.einsum("pj,ik->pijk", sig, eye) + np.einsum("pk,ij->pijk", sig, eye))
    Fv = F.values(pts2)
    mu = np.empty((len(pts2), n))
    nu = np.empty((len(pts2), n))
    res = np.empty(len(pts2))
    rank = np.empty(len(pts2), dtype=int)
    for p in range(len(pts2)):
        A = _design(Fv[p], n)
        b = target[p].reshape(-1)
        sol, _, rk, _ = np.linalg.lstsq(A, b, rcond=None)
        mu[p], nu[p] = sol[:n], sol[n:]
        res[p] = np.linalg.norm(A @ sol - b)
        rank[p] = rk
    if single:
        return FitResult(mu[0], nu[0], res[0], rank[0])
    return FitResult(mu, nu, res, rank)


class _FitSource:
    """Solves for (mu, nu) on demand; caches the last point set."""

    def __init__(self, L, F, sigma, e, theta, mode):
        self.args = (L, F, sigma, e, theta)
        self.mode = as_mode(mode)
        self._lock = threading.Lock()
        self._key = None
        self._result = None

    def solve(self, pts) -> FitResult:
        key = (pts.shape, pts.tobytes())
        with self._lock:
            if self._key != key:
                self._result = fit_mu_nu(*self.args, pts, self.mode)
                self._key = key
            return self._result


class FittedCovector:
    """Covector field known only through pointwise least squares (no derivatives)."""

    valence = (0, 1)

    def __init__(self, source: _FitSource, which: str):
        self._source = source
        self._which = which
        self.n = source.args[1].n

    def values(self, x) -> np.ndarray:
        pts = as_points(x, self.n)
        return getattr(self._source.solve(pts), self._which)

    def fit(self, x) -> FitResult:
        return self._source.solve(as_points(x, self.n))

    def __repr__(self):
        return f"FittedCovector({self._which}, n={self.n})"


def invert_instance(L: TensorField, inst: MappingInstance, grid=None, mode=None,
                    tol: float = 1e-8) -> MappingInstance:
    """Instance of the inverse mapping, living on ``deform(L, inst)``.

    psi and sigma change sign, F is kept, and (mu, nu) are re-solved
    pointwise against the target connection.  The result is validated on
    ``grid``; a misfit above ``tol`` raises FitError.
    """
    Lbar = deform(L, inst)
    sigma_bar = -inst.sigma
    source = _FitSource(Lbar, inst.F, sigma_bar, inst.e, inst.theta, mode)
    inv = MappingInstance(psi=-inst.psi, sigma=sigma_bar, F=inst.F,
                          mu=FittedCovector(source, "mu"), nu=FittedCovector(source, "nu"),
                          e=inst.e, theta=inst.theta)
    if grid is None:
        grid = make_grid(inst.n)
    res = basic_residual(Lbar, inv, grid, mode)
    if not res <= tol:
        raise FitError("inverse mapping does not satisfy the basic equation", res)
    return inv


# -- generator --------------------------------------------------------------

def generate_instance(n: int, e: int, F0, p: Sequence, q: Sequence, sigma: Sequence,
                      psi: Sequence, grid=None, tol: float = 1e-10):
    """Connection and mapping that satisfy the basic equation exactly (theta = 1).

    With constant F0 (F0 F0 = e I), L = S + T where
    S^i_{jk} = q_j d^i_k + q_k d^i_j and T^i_{jk} = p_j F0^i_k - p_k F0^i_j;
    then mu_j = p_a F0^a_j - q_j and nu_j = e sigma_j + q_a F0^a_j - e p_j.
    """
    if e not in ADMISSIBLE_E:
        raise MappingError(f"e must be one of {ADMISSIBLE_E}, got {e!r}")
    if n < 2:
        raise MappingError("dimension must be at least 2")
    F0 = np.asarray(F0, dtype=float)
    if F0.shape != (n, n):
        raise MappingError(f"F0 must be {n}x{n}")
    if e == -1 and n % 2:
        raise MappingError("F0 F0 = -I needs an even dimension")
    if np.max(np.abs(F0 @ F0 - e * np.eye(n))) > 1e-12:
        raise MappingError(f"F0 F0 != {e} I")
    vecs = {}
    for name, vals in (("p", p), ("q", q), ("sigma", sigma), ("psi", psi)):
        if len(vals) != n:
            raise MappingError(f"{name} needs {n} components, got {len(vals)}")
        vecs[name] = np.array([as_expr(v, n) for v in vals], dtype=object)
    pv, qv = vecs["p"], vecs["q"]
    Fo = F0.astype(object)
    delta = np.eye(n).astype(object)
    sym = np.einsum("j,ik->ijk", qv, delta) + np.einsum("k,ij->ijk", qv, delta)
    tor = np.einsum("j,ik->ijk", pv, Fo) - np.einsum("k,ij->ijk", pv, Fo)
    L = ConnectionField._wrap(_fold(sym + tor), n, (1, 2))
    pF = np.einsum("a,aj->j", pv, Fo)
    qF = np.einsum("a,aj->j", qv, Fo)
    mu = _fold(pF - qv)
    nu = _fold(e * vecs["sigma"] + qF - e * pv)
    inst = MappingInstance(
        psi=TensorField._wrap(vecs["psi"], n, (0, 1)),
        sigma=TensorField._wrap(vecs["sigma"], n, (0, 1)),
        F=TensorField(F0, n, (1, 1)),
        mu=TensorField._wrap(mu, n, (0, 1)),
        nu=TensorField._wrap(nu, n, (0, 1)),
        e=e, theta=1,
    )
    grid = make_grid(n) if grid is None else grid
    res = basic_residual(L, inst, grid, EXACT)
    if not res <= tol:
        raise MappingError(f"generated instance violates the basic equation (residual {res:.3e})")
    return L, inst


def _fold(arr: np.ndarray) -> np.ndarray:
    # einsum over object arrays may leave plain numbers where every term folded
    out = np.empty(arr.shape, dtype=object)
    for idx in np.ndindex(arr.shape):
        out[idx] = as_expr(arr[idx])
    return out


def with_theta(inst: MappingInstance, theta: int) -> MappingInstance:
    return replace(inst, theta=theta)
