"""Geodesics of the source space and the almost geodesic defect in the target.

A curve is almost geodesic of kind theta when its second covariant tangent
derivative lies in the span of the tangent and the first one.  The defect
returned here is the smallest singular value of the column-normalized
matrix ``[lam | lam1 | lam2]``; it vanishes exactly when that span
condition holds.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .space import split
from .tensor import TensorField

__all__ = ["CurveSample", "ChartExitError", "integrate_geodesic", "ag_defect",
           "curve_derivatives", "samples_to_csv"]


@dataclass(frozen=True)
class CurveSample:
    t: float
    x: tuple
    lam: tuple

    def __post_init__(self):
        if not np.any(np.asarray(self.lam) != 0.0):
            raise ValueError(f"zero tangent at t={self.t}")


class ChartExitError(RuntimeError):
    def __init__(self, t: float, x):
        super().__init__(f"trajectory left the chart at t={t:.6g}")
        self.t = t
        self.x = tuple(float(v) for v in x)


def _spray(S: TensorField, x: np.ndarray, lam: np.ndarray) -> np.ndarray:
    s = S.values(x[None, :])[0]
    return -np.einsum("iab,a,b->i", s, lam, lam)


def _inside(x, bounds) -> bool:
    if not np.all(np.isfinite(x)):
        return False
    if bounds is None:
        return True
    return all(lo <= v <= hi for v, (lo, hi) in zip(x, bounds))


def integrate_geodesic(L: TensorField, x0, l0, t_end: float = 1.0, steps: int = 512,
                       bounds=None) -> list[CurveSample]:
    """Classical RK4 for x' = lam, lam' = -S lam lam with a fixed step.

    Only the symmetric part enters: torsion drops out of ``L lam lam``.
    ``bounds`` is an optional list of (lo, hi) per coordinate.
    """
    if steps < 16:
        raise ValueError("steps must be at least 16")
    n = L.n
    x = np.asarray(x0, dtype=float).reshape(n)
    lam = np.asarray(l0, dtype=float).reshape(n)
    if not np.any(lam):
        raise ValueError("initial tangent must be nonzero")
    if bounds is not None:
        bounds = [tuple(map(float, b)) for b in bounds]
        if len(bounds) != n:
            raise ValueError(f"expected {n} coordinate bounds")
    if not _inside(x, bounds):
        raise ChartExitError(0.0, x)
    S = split(L).sym
    dt = t_end / steps

    def rhs(y):
        return np.concatenate([y[n:], _spray(S, y[:n], y[n:])])

    y = np.concatenate([x, lam])
    out = [CurveSample(0.0, tuple(x), tuple(lam))]
    for k in range(1, steps + 1):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * dt * k1)
        k3 = rhs(y + 0.5 * dt * k2)
        k4 = rhs(y + dt * k3)
        y = y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        t = k * dt
        if not _inside(y[:n], bounds):
            raise ChartExitError(t, y[:n])
        out.append(CurveSample(t, tuple(y[:n]), tuple(y[n:])))
    return out


# five-point stencils, fourth order
_CENTER = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_FORWARD = np.array([
    [-25.0, 48.0, -36.0, 16.0, -3.0],
    [-3.0, -10.0, 18.0, -6.0, 1.0],
]) / 12.0


def _ddt(v: np.ndarray, dt: float) -> np.ndarray:
    """Derivative along a uniformly sampled curve, axis 0."""
    m = v.shape[0]
    if m < 5:
        raise ValueError("need at least 5 samples to differentiate")
    out = np.empty_like(v)
    for i in range(2, m - 2):
        out[i] = np.tensordot(_CENTER, v[i - 2:i + 3], axes=1)
    for i in range(2):
        out[i] = np.tensordot(_FORWARD[i], v[:5], axes=1)
        out[m - 1 - i] = -np.tensordot(_FORWARD[i], v[::-1][:5], axes=1)
    return out / dt


def curve_derivatives(Lbar: TensorField, samples, theta: int = 1):
    """Tangent, first and second kind-theta covariant tangent derivatives."""
    if theta not in (1, 2):
        raise ValueError("theta must be 1 or 2")
    ts = np.array([s.t for s in samples])
    steps = np.diff(ts)
    if len(ts) < 5 or not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
        raise ValueError("samples must be uniformly spaced (at least 5)")
    dt = steps[0]
    xs = np.array([s.x for s in samples], dtype=float)
    lam = np.array([s.lam for s in samples], dtype=float)
    Lv = Lbar.values(xs)
    if theta == 2:
        Lv = np.swapaxes(Lv, -1, -2)
    # the derivative index k pairs with lam^k; the upper slot rule picks the other slot
    lam1 = _ddt(lam, dt) + np.einsum("piak,pa,pk->pi", Lv, lam, lam)
    lam2 = _ddt(lam1, dt) + np.einsum("piak,pa,pk->pi", Lv, lam1, lam)
    return lam, lam1, lam2


def ag_defect(Lbar: TensorField, samples, theta: int = 1, zero_tol: float = 1e-9):
    """Per-sample span defect; ``None`` marks the vacuous case N < 3.

    A column whose norm is below ``zero_tol`` (scaled by the tangent size) is
    treated as zero, which makes the rank condition hold outright.
    """
    if Lbar.n < 3:
        return None
    lam, lam1, lam2 = curve_derivatives(Lbar, samples, theta)
    out = np.empty(len(lam))
    for p in range(len(lam)):
        scale = max(1.0, float(np.linalg.norm(lam[p])))
        cols = []
        for c, power in ((lam[p], 1), (lam1[p], 2), (lam2[p], 3)):
            nrm = np.linalg.norm(c)
            cols.append(c / nrm if nrm > zero_tol * scale ** power else np.zeros_like(c))
        out[p] = np.linalg.svd(np.stack(cols, axis=1), compute_uv=False)[-1]
    return out


def samples_to_csv(samples, defect=None) -> str:
    n = len(samples[0].x)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t"] + [f"x{i}" for i in range(1, n + 1)]
               + [f"lambda{i}" for i in range(1, n + 1)] + ["defect"])
    for k, s in enumerate(samples):
        d = "" if defect is None else format(float(defect[k]), ".17g")
        w.writerow([format(s.t, ".17g")] + [format(v, ".17g") for v in s.x]
                   + [format(v, ".17g") for v in s.lam] + [d])
    return buf.getvalue()
