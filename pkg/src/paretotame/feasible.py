"""Closed feasible sets as finite unions of cells, with membership, grids and normal cones."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import dsl
from .minnorm import ConeRep

ACTIVE_TOL = 1e-7


def point_str(x):
    """Compact '(a, b, ...)' rendering of a point for messages."""
    return "(" + ", ".join(f"{float(v):.12g}" for v in np.ravel(x)) + ")"


class FeasibleError(ValueError):
    pass


class DegenerateCornerError(FeasibleError):
    def __init__(self, point, active):
        self.point = np.asarray(point, dtype=float)
        self.active = active
        super().__init__(
            f"degenerate-corner at {point_str(self.point)}: active normals are linearly dependent ({'; '.join(active)})"
        )


@dataclass
class Cell:
    """Box, affine inequalities a.x <= b and smooth inequalities g(x) <= 0.

    ``splits`` hold the branch conditions introduced when a nonsmooth
    inequality is rewritten as a union of smooth cells.  They restrict
    membership but are not boundaries of the union, so they contribute no
    normals.
    """
    lower: np.ndarray
    upper: np.ndarray
    affine: list = field(default_factory=list)
    smooth: list = field(default_factory=list)
    splits: list = field(default_factory=list)

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        self.affine = [(np.asarray(a, dtype=float), float(b)) for a, b in self.affine]
        for g in list(self.smooth) + list(self.splits):
            if not g.is_smooth():
                raise FeasibleError(f"cell constraint {g} must be smooth (no abs/max/min/norm2)")

    @property
    def dim(self):
        return len(self.lower)

    @classmethod
    def free(cls, n):
        return cls(np.full(n, -np.inf), np.full(n, np.inf))

    def merged(self, other):
        return Cell(np.maximum(self.lower, other.lower), np.minimum(self.upper, other.upper),
                    self.affine + other.affine, self.smooth + other.smooth, self.splits + other.splits)

    def shifted(self, coord, delta):
        """The cell translated by ``delta`` along ``coord``."""
        lo, hi = self.lower.copy(), self.upper.copy()
        lo[coord] += delta
        hi[coord] += delta
        aff = [(a, b + delta * a[coord]) for a, b in self.affine]
        sub = {coord: dsl.Sub(dsl.Var(coord), dsl.Const(delta))}
        return Cell(lo, hi, aff, [dsl.substitute(g, sub) for g in self.smooth],
                    [dsl.substitute(g, sub) for g in self.splits])

    def contains_many(self, X, tol):
        """Membership for a batch X of shape (n, m)."""
        ok = np.all((X >= self.lower[:, None] - tol) & (X <= self.upper[:, None] + tol), axis=0)
        for a, b in self.affine:
            ok &= a @ X <= b + tol
        for g in self.smooth + self.splits:
            if not ok.any():
                break
            ok &= dsl.evaluate(g, X) <= tol
        return ok

    def contains(self, x, tol):
        return bool(self.contains_many(np.asarray(x, dtype=float)[:, None], tol)[0])


@dataclass
class Periodic:
    """Translates of ``base_cells`` by k*period along ``coord`` for k in [k_min, k_max]."""
    period: float
    coord: int
    base_cells: list
    k_min: int = 0
    k_max: int = 10**9


@dataclass
class NormalCone:
    """Normal cone pieces at a point: one ConeRep per containing cell."""
    pieces: list
    junction: bool = False
    split_active: bool = False

    @property
    def rays(self):
        return self._single().rays

    @property
    def lineality(self):
        return self._single().lineality

    def _single(self):
        if len(self.pieces) != 1:
            raise FeasibleError("point lies in several cells; use the per-cell pieces")
        return self.pieces[0]


class FeasibleSet:
    """Finite union of cells, optionally periodic, optionally cut by section cells.

    Membership is: some base cell contains x and, when ``sections`` is given,
    some section cell contains x.  Section cells carry constraints in absolute
    coordinates and are not translated by the periodic family.
    """

    def __init__(self, cells=None, periodic=None, sections=None, dim=None):
        self.cells = list(cells or [])
        self.periodic = periodic
        self.sections = list(sections) if sections is not None else None
        if dim is None:
            src = self.cells or (periodic.base_cells if periodic else [])
            if not src:
                raise FeasibleError("feasible set needs at least one cell")
            dim = src[0].dim
        self.dim = dim
        if not self.cells and periodic is None:
            raise FeasibleError("feasible set needs at least one cell")
        if periodic is not None:
            for c in periodic.base_cells:
                if not (math.isfinite(c.lower[periodic.coord]) and math.isfinite(c.upper[periodic.coord])):
                    raise FeasibleError("periodic base cells must be bounded along the periodic coordinate")
        self._shift_cache = {}

    def with_sections(self, section_cells):
        secs = list(section_cells)
        if self.sections is not None:
            secs = [a.merged(b) for a in self.sections for b in secs]
        return FeasibleSet(self.cells, self.periodic, secs, self.dim)

    # -- base cells near a point
    def _shift(self, j, k):
        key = (j, k)
        c = self._shift_cache.get(key)
        if c is None:
            p = self.periodic
            c = p.base_cells[j].shifted(p.coord, k * p.period)
            self._shift_cache[key] = c
        return c

    def _periodic_candidates(self, xc, tol):
        """(base index, k) pairs whose translate may contain coordinate value xc."""
        p = self.periodic
        out = []
        for j, c in enumerate(p.base_cells):
            lo, hi = c.lower[p.coord], c.upper[p.coord]
            k0 = math.ceil((xc - hi - tol) / p.period)
            k1 = math.floor((xc - lo + tol) / p.period)
            for k in range(max(k0, p.k_min), min(k1, p.k_max) + 1):
                out.append((j, k))
        return out

    def base_cells_at(self, x, tol):
        x = np.asarray(x, dtype=float)
        found = [c for c in self.cells if c.contains(x, tol)]
        if self.periodic is not None:
            for j, k in self._periodic_candidates(x[self.periodic.coord], tol):
                c = self._shift(j, k)
                if c.contains(x, tol):
                    found.append(c)
        return found

    def cells_at(self, x, tol=ACTIVE_TOL):
        """Containing cells, each merged with its containing section cell."""
        base = self.base_cells_at(x, tol)
        if self.sections is None:
            return base
        secs = [s for s in self.sections if s.contains(x, tol)]
        return [b.merged(s) for b in base for s in secs]

    def contains_many(self, X, tol=1e-9):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        ok = np.zeros(X.shape[1], dtype=bool)
        for c in self.cells:
            ok |= c.contains_many(X, tol)
        if self.periodic is not None:
            p = self.periodic
            xc = X[p.coord]
            for j, c in enumerate(p.base_cells):
                lo, hi = c.lower[p.coord], c.upper[p.coord]
                kfirst = np.ceil((xc - hi - tol) / p.period)
                klast = np.floor((xc - lo + tol) / p.period)
                span = int(np.max(klast - kfirst, initial=0)) if X.shape[1] else 0
                for off in range(span + 1):
                    k = kfirst + off
                    valid = (k <= klast) & (k >= p.k_min) & (k <= p.k_max) & ~ok
                    if not valid.any():
                        continue
                    Y = X.copy()
                    Y[p.coord] = xc - k * p.period
                    ok |= valid & c.contains_many(Y, tol)
        if self.sections is not None:
            sec = np.zeros(X.shape[1], dtype=bool)
            for s in self.sections:
                sec |= s.contains_many(X, tol)
            ok &= sec
        return ok

    def is_bounded(self):
        """True when every cell has a finite box (a sufficient test only)."""
        def finite(c):
            return bool(np.all(np.isfinite(c.lower)) and np.all(np.isfinite(c.upper)))
        if self.sections is not None and self.sections and all(finite(s) for s in self.sections):
            return True
        if self.periodic is not None:
            p = self.periodic
            if p.k_max - p.k_min > 10**6 or not all(finite(c) for c in p.base_cells):
                return False
        return all(finite(c) for c in self.cells)

    def section_count(self):
        return 1 if self.sections is None else len(self.sections)


def contains(K, x, tol=1e-9):
    if tol < 0:
        raise FeasibleError("tolerance must be nonnegative")
    return bool(K.contains_many(np.asarray(x, dtype=float), tol)[0])


def _active(value, grad_norm, tol):
    """A constraint counts as active when its value is within ``tol`` and the
    first-order distance |value| / |gradient| to its boundary is too."""
    if value == 0:
        return True
    return abs(value) <= tol * min(1.0, grad_norm)


def _cell_cone(cell, x, tol):
    """Normal cone of one cell at x.

    Box faces always contribute their coordinate normals; the qualification
    (linear independence, checked by rank) applies to the active affine
    normals and smooth-constraint gradients.
    """
    n = len(x)
    rays, names, from_box, lin = [], [], [], []
    for i in range(n):
        lo, hi = cell.lower[i], cell.upper[i]
        e = np.zeros(n)
        e[i] = 1.0
        if lo == hi:
            lin.append(e)
            continue
        if np.isfinite(lo) and x[i] - lo <= tol:
            rays.append(-e)
            names.append(f"x{i + 1} >= {lo:g}")
            from_box.append(True)
        if np.isfinite(hi) and hi - x[i] <= tol:
            rays.append(e)
            names.append(f"x{i + 1} <= {hi:g}")
            from_box.append(True)
    for a, b in cell.affine:
        if _active(a @ x - b, np.linalg.norm(a), tol):
            rays.append(a.copy())
            names.append(f"{point_str(a)} . x <= {b:g}")
            from_box.append(False)
    for g in cell.smooth:
        val = dsl.evaluate(g, x)
        grad = dsl.gradient(g, x)
        nrm = np.linalg.norm(grad)
        if _active(val, nrm, tol):
            if nrm == 0:
                raise DegenerateCornerError(x, [f"{g} <= 0 has a vanishing gradient"])
            rays.append(grad)
            names.append(f"{g} <= 0")
            from_box.append(False)
    split_active = any(_active(dsl.evaluate(g, x), np.linalg.norm(dsl.gradient(g, x)), tol) for g in cell.splits)

    # repeated directions collapse; opposite directions become a free line
    units, kept = [], []
    for r, nm, bx in zip(rays, names, from_box):
        u = r / np.linalg.norm(r)
        dup = False
        for j, v in enumerate(units):
            if np.allclose(u, v, atol=1e-12):
                dup = True
            elif np.allclose(u, -v, atol=1e-12):
                lin.append(v.copy())
                kept[j] = None
                dup = True
            if dup:
                break
        if not dup:
            units.append(u)
            kept.append((r, nm, bx))
    final = [k for k in kept if k is not None]
    checked = [k for k in final if not k[2]]
    if checked:
        stack = np.array([r / np.linalg.norm(r) for r, _, _ in checked])
        if np.linalg.matrix_rank(stack, tol=1e-10) < len(checked):
            raise DegenerateCornerError(x, [nm for _, nm, _ in checked])
    return ConeRep.make(n, [r for r, _, _ in final], lin), split_active


def normal_cone(K, x, tol=ACTIVE_TOL):
    """Per-cell normal cones at x; ``junction`` is set when several cells contain x."""
    x = np.asarray(x, dtype=float)
    cells = K.cells_at(x, tol)
    if not cells:
        raise FeasibleError(f"point {point_str(x)} is not in the feasible set")
    pieces = []
    split_active = False
    for c in cells:
        cone, sa = _cell_cone(c, x, tol)
        pieces.append(cone)
        split_active = split_active or sa
    return NormalCone(pieces, len(pieces) > 1, split_active)


def grid_axes(window, resolution):
    window = np.asarray(window, dtype=float).reshape(-1, 2)
    res = list(resolution) if np.ndim(resolution) else [int(resolution)] * len(window)
    if len(res) == 1 and len(window) > 1:
        res = res * len(window)
    if len(res) != len(window):
        raise FeasibleError("resolution needs one count per axis")
    if not np.all(np.isfinite(window)):
        raise FeasibleError("grid window must be finite")
    return [np.linspace(lo, hi, int(r)) if r > 1 else np.array([lo]) for (lo, hi), r in zip(window, res)]


def grid(K, window, resolution, tol=1e-9):
    """Feasible grid nodes of ``window`` in row-major order, shape (m, n)."""
    axes = grid_axes(window, resolution)
    mesh = np.meshgrid(*axes, indexing="ij")
    X = np.stack([m.ravel() for m in mesh])
    keep = K.contains_many(X, tol)
    return X[:, keep].T.copy()
