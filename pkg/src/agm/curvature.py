"""Curvature of the associated (symmetric) space, in two readings.

``standard`` is the usual coordinate curvature of the symmetric part S.
``paper`` evaluates the expansion of the antisymmetrised kind-1 derivative
of S with torsion corrections.  The two differ by the quadratic term
``S^a_{jm} S^i_{an} - S^a_{jn} S^i_{am}``.  Arrays are indexed (i, j, m, n).
"""

from __future__ import annotations

import numpy as np

from .space import covdiff_arrays, split
from .tensor import TensorField, as_mode, as_points

__all__ = ["CURVATURE_MODES", "curvature_std", "curvature_paper", "curvature", "ricci",
           "quadratic_gap"]

CURVATURE_MODES = ("paper", "standard")


def curvature_std(S: TensorField, x, mode=None) -> np.ndarray:
    """R^i_{jmn} = S^i_{jm,n} - S^i_{jn,m} + S^a_{jm} S^i_{an} - S^a_{jn} S^i_{am}."""
    pts = as_points(x, S.n)
    s = S.values(pts)
    ds = S.gradient(pts, as_mode(mode))          # (..., i, j, m, n) = d_n S^i_{jm}
    out = ds - np.swapaxes(ds, -1, -2)
    out += np.einsum("...ajm,...ian->...ijmn", s, s)
    out -= np.einsum("...ajn,...iam->...ijmn", s, s)
    return out


def curvature_paper(L: TensorField, x, mode=None) -> np.ndarray:
    """Literal torsion-corrected expansion built on kind-1 derivatives of S."""
    pts = as_points(x, L.n)
    parts = split(L)
    s = parts.sym.values(pts)
    t = parts.torsion.values(pts)
    ds1 = covdiff_arrays(L.values(pts), s, parts.sym.gradient(pts, as_mode(mode)), (1, 2), 1)
    out = ds1 - np.swapaxes(ds1, -1, -2)
    out -= np.einsum("...ian,...ajm->...ijmn", t, s)
    out -= np.einsum("...ajm,...ian->...ijmn", t, s)
    out += np.einsum("...ajn,...iam->...ijmn", t, s)
    out += np.einsum("...iam,...ajn->...ijmn", t, s)
    out += 2.0 * np.einsum("...amn,...ija->...ijmn", t, s)
    return out


def curvature(L: TensorField, x, mode=None, reading: str = "paper") -> np.ndarray:
    if reading == "paper":
        return curvature_paper(L, x, mode)
    if reading == "standard":
        return curvature_std(split(L).sym, x, mode)
    raise ValueError(f"unknown curvature mode {reading!r}; expected one of {CURVATURE_MODES}")


def quadratic_gap(S: TensorField, x) -> np.ndarray:
    """S^a_{jm} S^i_{an} - S^a_{jn} S^i_{am}, the paper-minus-standard difference."""
    s = S.values(as_points(x, S.n))
    return (np.einsum("...ajm,...ian->...ijmn", s, s)
            - np.einsum("...ajn,...iam->...ijmn", s, s))


def ricci(R: np.ndarray) -> np.ndarray:
    """R_{jm} = R^a_{jma}."""
    return np.einsum("...ajma->...jm", R)
