"""Points, sample grids and tensor fields with expression components.

Component arrays are stored dense with upper indices first, then lower.
Numerical results carry an optional leading batch axis when evaluated on a
stack of points; partial derivatives append the differentiation index as
the last axis.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .expr import ONE, ZERO, Evaluator, as_expr, diff, max_coordinate

__all__ = [
    "Point", "Grid", "Mode", "EXACT", "fd", "as_mode",
    "TensorField", "make_grid", "kronecker", "zero_field", "scalar_field", "covector",
    "eval_tensor", "partial_tensor", "gradient_tensor", "max_abs_diff",
    "as_points",
]


@dataclass(frozen=True)
class Point:
    coords: tuple

    def __post_init__(self):
        coords = tuple(float(c) for c in self.coords)
        if not all(np.isfinite(coords)):
            raise ValueError("point coordinates must be finite")
        object.__setattr__(self, "coords", coords)

    @property
    def dim(self) -> int:
        return len(self.coords)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.coords, dtype=dtype or float)


@dataclass(frozen=True)
class Mode:
    """How partial derivatives are taken: exact symbolic, or central differences."""

    kind: str = "exact"
    h: float = 1e-4

    def __post_init__(self):
        if self.kind not in ("exact", "fd"):
            raise ValueError(f"unknown derivative mode {self.kind!r}")
        if self.h <= 0:
            raise ValueError("finite-difference step must be positive")

    def __str__(self):
        return "exact" if self.kind == "exact" else f"fd(h={self.h!r})"


EXACT = Mode("exact")


def fd(h: float = 1e-4) -> Mode:
    return Mode("fd", h)


def as_mode(mode) -> Mode:
    if mode is None:
        return EXACT
    if isinstance(mode, Mode):
        return mode
    if mode == "exact":
        return EXACT
    if mode == "fd":
        return fd()
    raise ValueError(f"unknown derivative mode {mode!r}")


@dataclass(frozen=True)
class Grid:
    points: np.ndarray
    seed: int
    bounds: tuple

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return self.points.shape[0]

    def __iter__(self):
        return (Point(tuple(p)) for p in self.points)


def make_grid(n: int, count: int = 50, seed: int = 0, bounds=None) -> Grid:
    """Uniform random sample of ``count`` points in a box, reproducible from ``seed``."""
    if bounds is None:
        bounds = [(-0.9, 0.9)] * n
    bounds = tuple((float(lo), float(hi)) for lo, hi in bounds)
    if len(bounds) != n:
        raise ValueError(f"need {n} coordinate intervals, got {len(bounds)}")
    if any(hi < lo for lo, hi in bounds):
        raise ValueError("grid bounds must satisfy lo <= hi")
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    rng = np.random.default_rng(seed)
    pts = lo + (hi - lo) * rng.random((count, n))
    pts.setflags(write=False)
    return Grid(points=pts, seed=seed, bounds=bounds)


def as_points(x, n: int | None = None) -> np.ndarray:
    if isinstance(x, Grid):
        x = x.points
    arr = np.asarray(x, dtype=float)
    if arr.ndim not in (1, 2):
        raise ValueError("expected a point (N,) or a stack of points (P, N)")
    if n is not None and arr.shape[-1] != n:
        raise ValueError(f"point dimension {arr.shape[-1]} does not match chart dimension {n}")
    return arr


class TensorField:
    """Valence-(p, q) tensor field on an N-dimensional chart.

    ``components`` is anything numpy can turn into an array of shape
    ``(N,) * (p + q)`` whose entries are Expr objects, numbers or
    expression strings.  Fields are immutable; the symbolic gradient is
    built lazily and cached.
    """

    def __init__(self, components, n: int, valence: tuple[int, int]):
        p, q = valence
        if n < 2:
            raise ValueError("chart dimension must be at least 2")
        if p < 0 or q < 0 or p + q > 4:
            raise ValueError(f"unsupported valence {valence}")
        shape = (n,) * (p + q)
        raw = np.empty(shape, dtype=object)
        src = np.array(components, dtype=object)
        if src.shape != shape:
            raise ValueError(f"expected components of shape {shape}, got {src.shape}")
        for idx in np.ndindex(shape):
            raw[idx] = as_expr(src[idx], n)
        raw.flags.writeable = False
        self.n = n
        self.valence = (p, q)
        self.components = raw
        self._grad = None
        self._lock = threading.Lock()

    @classmethod
    def _wrap(cls, raw: np.ndarray, n: int, valence) -> "TensorField":
        # trusted fast path for arrays already holding Expr objects
        obj = cls.__new__(cls)
        raw = np.array(raw, dtype=object)
        raw.flags.writeable = False
        obj.n = n
        obj.valence = tuple(valence)
        obj.components = raw
        obj._grad = None
        obj._lock = threading.Lock()
        return obj

    @property
    def rank(self) -> int:
        return sum(self.valence)

    @property
    def shape(self) -> tuple:
        return self.components.shape

    def __getitem__(self, idx):
        """Component at a 1-based multi-index."""
        if not isinstance(idx, tuple):
            idx = (idx,)
        return self.components[tuple(i - 1 for i in idx)]

    def __repr__(self):
        return f"TensorField(n={self.n}, valence={self.valence})"

    # symbolic algebra (same valence)
    def _combine(self, other, op):
        if isinstance(other, TensorField):
            if other.n != self.n or other.valence != self.valence:
                raise ValueError("fields must share dimension and valence")
            other = other.components
        return TensorField._wrap(op(self.components, other), self.n, self.valence)

    def __add__(self, other):
        return self._combine(other, np.add)

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __neg__(self):
        return TensorField._wrap(-self.components, self.n, self.valence)

    def __mul__(self, scalar):
        if isinstance(scalar, TensorField):
            return NotImplemented
        return self._combine(scalar, np.multiply)

    __rmul__ = __mul__

    def gradient_components(self) -> np.ndarray:
        """Symbolic partials, shape ``self.shape + (N,)``."""
        with self._lock:
            if self._grad is None:
                grad = np.empty(self.shape + (self.n,), dtype=object)
                for idx in np.ndindex(self.shape):
                    comp = self.components[idx]
                    for k in range(self.n):
                        grad[idx + (k,)] = diff(comp, k + 1)
                grad.flags.writeable = False
                self._grad = grad
            return self._grad

    def values(self, x) -> np.ndarray:
        pts = as_points(x, self.n)
        return _evaluate_array(self.components, Evaluator(pts))

    def gradient(self, x, mode=None) -> np.ndarray:
        """All partial derivatives, differentiation index last."""
        mode = as_mode(mode)
        pts = as_points(x, self.n)
        if mode.kind == "exact":
            return _evaluate_array(self.gradient_components(), Evaluator(pts))
        out = np.empty(pts.shape[:-1] + self.shape + (self.n,))
        for k in range(self.n):
            step = np.zeros(self.n)
            step[k] = mode.h
            hi = _evaluate_array(self.components, Evaluator(pts + step))
            lo = _evaluate_array(self.components, Evaluator(pts - step))
            out[..., k] = (hi - lo) / (2.0 * mode.h)
        return out

    def partial(self, k: int, x, mode=None) -> np.ndarray:
        if not 1 <= k <= self.n:
            raise ValueError(f"coordinate index {k} out of range 1..{self.n}")
        mode = as_mode(mode)
        if mode.kind == "exact":
            pts = as_points(x, self.n)
            return _evaluate_array(self.gradient_components()[..., k - 1], Evaluator(pts))
        return self.gradient(x, mode)[..., k - 1]

    def max_coordinate(self) -> int:
        return max((max_coordinate(c) for c in self.components.flat), default=0)


def _evaluate_array(comps: np.ndarray, ev: Evaluator) -> np.ndarray:
    batch = ev.points.shape[:-1]
    out = np.empty(batch + comps.shape)
    for idx in np.ndindex(comps.shape):
        out[(Ellipsis,) + idx] = ev(comps[idx])
    return out


def kronecker(n: int) -> TensorField:
    comps = np.full((n, n), ZERO, dtype=object)
    for i in range(n):
        comps[i, i] = ONE
    return TensorField._wrap(comps, n, (1, 1))


def zero_field(n: int, valence: tuple[int, int]) -> TensorField:
    comps = np.full((n,) * sum(valence), ZERO, dtype=object)
    return TensorField._wrap(comps, n, valence)


def scalar_field(expr, n: int) -> TensorField:
    return TensorField(np.array(as_expr(expr, n), dtype=object), n, (0, 0))


def covector(exprs: Sequence, n: int) -> TensorField:
    return TensorField(list(exprs), n, (0, 1))


def eval_tensor(t: TensorField, x) -> np.ndarray:
    return t.values(x)


def partial_tensor(t: TensorField, k: int, x, mode=None) -> np.ndarray:
    return t.partial(k, x, mode)


def gradient_tensor(t: TensorField, x, mode=None) -> np.ndarray:
    return t.gradient(x, mode)


def max_abs_diff(a, b) -> tuple[float, tuple]:
    """Largest componentwise |a - b| and its 1-based multi-index."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.size == 0:
        return 0.0, ()
    d = np.abs(a - b)
    if np.isnan(d).any():
        flat = int(np.flatnonzero(np.isnan(d))[0])
        return float("nan"), tuple(int(i) + 1 for i in np.unravel_index(flat, d.shape))
    flat = int(np.argmax(d))
    return float(d.flat[flat]), tuple(int(i) + 1 for i in np.unravel_index(flat, d.shape))
