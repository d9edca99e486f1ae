"""Non-symmetric affine connections and the four kinds of covariant derivative.

A connection is stored as ``L[i, j, k] = L^i_{jk}``.  For kind ``theta`` the
correction attached to an upper index is ``+L^i_{ak}`` (kinds 1, 3) or
``+L^i_{ka}`` (kinds 2, 4); a lower index gets ``-L^a_{jk}`` (kinds 1, 4) or
``-L^a_{kj}`` (kinds 2, 3), where k is the differentiation index.  Tensors
of higher rank receive one correction per index.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .expr import ZERO, as_expr
from .tensor import TensorField, as_mode, as_points

__all__ = [
    "ConnectionField", "ConnectionSplit", "split", "covdiff", "covdiff_arrays",
    "covdiff_assoc", "formal_contraction_deriv", "contraction_field", "KINDS",
]

KINDS = (1, 2, 3, 4)
_LETTERS = "abcd"


class ConnectionField(TensorField):
    """Coefficients ``L^i_{jk}``; no symmetry in (j, k) is assumed."""

    def __init__(self, components, n: int):
        super().__init__(components, n, (1, 2))

    @classmethod
    def from_mapping(cls, n: int, entries: Mapping[str, object]) -> "ConnectionField":
        """Sparse form: keys ``"i,j,k"`` (1-based) map to expressions; absent means 0."""
        comps = np.full((n, n, n), ZERO, dtype=object)
        for key, value in entries.items():
            idx = _parse_key(key, n)
            comps[idx] = as_expr(value, n)
        return cls(comps, n)

    @classmethod
    def from_field(cls, t: TensorField) -> "ConnectionField":
        if t.valence != (1, 2):
            raise ValueError("a connection has valence (1, 2)")
        return cls._wrap(t.components, t.n, (1, 2))

    def to_mapping(self) -> dict[str, str]:
        from .expr import to_text

        out = {}
        for idx in np.ndindex(self.shape):
            comp = self.components[idx]
            if comp is ZERO:
                continue
            out[",".join(str(i + 1) for i in idx)] = to_text(comp)
        return out


def _parse_key(key: str, n: int) -> tuple:
    try:
        parts = tuple(int(p) for p in key.split(","))
    except ValueError:
        raise ValueError(f"bad connection key {key!r}; expected 'i,j,k'") from None
    if len(parts) != 3 or not all(1 <= p <= n for p in parts):
        raise ValueError(f"connection key {key!r} out of range 1..{n}")
    return tuple(p - 1 for p in parts)


@dataclass(frozen=True)
class ConnectionSplit:
    sym: TensorField
    torsion: TensorField


def split(L: TensorField) -> ConnectionSplit:
    """Symmetric part and torsion, as expression fields."""
    c = L.components
    swapped = np.swapaxes(c, 1, 2)
    sym = (c + swapped) * 0.5
    tor = (c - swapped) * 0.5
    return ConnectionSplit(
        sym=ConnectionField._wrap(sym, L.n, (1, 2)),
        torsion=TensorField._wrap(tor, L.n, (1, 2)),
    )


def covdiff_arrays(Lv: np.ndarray, a: np.ndarray, da: np.ndarray,
                   valence: tuple[int, int], kind: int) -> np.ndarray:
    """Kind-``kind`` covariant derivative from values.

    ``Lv`` has shape ``(..., N, N, N)``, ``a`` shape ``(...,) + (N,)*r`` and
    ``da`` the same with a trailing derivative axis.
    """
    if kind not in KINDS:
        raise ValueError(f"derivative kind must be one of {KINDS}")
    p, q = valence
    r = p + q
    if r > 3:
        raise ValueError(f"unsupported valence {valence}")
    slots = _LETTERS[:r]
    out = np.array(da, dtype=float, copy=True)
    up = Lv if kind in (1, 3) else np.swapaxes(Lv, -1, -2)
    down = Lv if kind in (1, 4) else np.swapaxes(Lv, -1, -2)
    for s in range(r):
        letter = slots[s]
        inner = slots.replace(letter, "z")
        if s < p:
            # +Gamma[letter, z, k] a[..z..]
            out += np.einsum(f"...{letter}zk,...{inner}->...{slots}k", up, a)
        else:
            # -Gamma[z, letter, k] a[..z..]
            out -= np.einsum(f"...z{letter}k,...{inner}->...{slots}k", down, a)
    return out


def covdiff(L: TensorField, t: TensorField, kind: int, x, mode=None) -> np.ndarray:
    """Covariant derivative of ``t`` of the given kind; derivative index last."""
    if t.rank > 3:
        raise ValueError(f"unsupported valence {t.valence}")
    if t.n != L.n:
        raise ValueError("connection and tensor dimensions differ")
    pts = as_points(x, L.n)
    return covdiff_arrays(L.values(pts), t.values(pts), t.gradient(pts, as_mode(mode)),
                          t.valence, kind)


def covdiff_assoc(S: TensorField, t: TensorField, x, mode=None, atol: float = 1e-12) -> np.ndarray:
    """Derivative with respect to a symmetric (associated-space) connection."""
    pts = as_points(x, S.n)
    Sv = S.values(pts)
    if np.max(np.abs(Sv - np.swapaxes(Sv, -1, -2)), initial=0.0) > atol:
        raise ValueError("covdiff_assoc needs a symmetric connection")
    a = t.values(pts)
    out = np.array(t.gradient(pts, as_mode(mode)), dtype=float, copy=True)
    p, q = t.valence
    slots = _LETTERS[:p + q]
    for s, letter in enumerate(slots):
        inner = slots.replace(letter, "z")
        if s < p:
            out += np.einsum(f"...{letter}zk,...{inner}->...{slots}k", Sv, a)
        else:
            out -= np.einsum(f"...z{letter}k,...{inner}->...{slots}k", Sv, a)
    return out


def contraction_field(t: TensorField) -> TensorField:
    """Covector ``c_j = t^a_{ja}`` of a (1, 2) field, formally."""
    if t.valence != (1, 2):
        raise ValueError("contraction_field expects a (1, 2) field")
    c = t.components
    comps = np.empty(t.n, dtype=object)
    for j in range(t.n):
        acc = ZERO
        for a in range(t.n):
            acc = acc + c[a, j, a]
        comps[j] = acc
    return TensorField._wrap(comps, t.n, (0, 1))


def formal_contraction_deriv(L: TensorField, x, mode=None, of: TensorField | None = None,
                             kind: int = 1) -> np.ndarray:
    """Derivative ``c_{j|n}`` of the non-tensorial contraction ``c_j = of^a_{ja}``.

    ``of`` defaults to ``L`` itself; the result is indexed ``(j, n)``.  The
    contraction is treated as a covector and differentiated with the lower
    index rule of ``kind`` with respect to ``L``.
    """
    c = contraction_field(L if of is None else of)
    return covdiff(L, c, kind, x, mode)
