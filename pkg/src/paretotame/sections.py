"""Sublevel sets, image sections, index sets, the descent chain and grid Pareto fronts."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from . import dsl
from .feasible import Cell, FeasibleSet, grid, point_str

MAX_CELLS = 64
DEFAULT_TOL = 1e-7


class SectionError(ValueError):
    pass


# ---------------------------------------------------------------- sublevel sets

def _smooth_branches(e):
    """Rewrite e as a list of (smooth expression, branch conditions g <= 0)."""
    if e.is_smooth():
        return [(e, [])]
    if isinstance(e, (dsl.Add, dsl.Sub, dsl.Mul)):
        out = []
        for le, lc in _smooth_branches(e.left):
            for re_, rc in _smooth_branches(e.right):
                out.append((type(e)(le, re_), lc + rc))
                if len(out) > MAX_CELLS:
                    raise SectionError(_too_many())
        return out
    if isinstance(e, dsl.Neg):
        return [(dsl.Neg(b), c) for b, c in _smooth_branches(e.arg)]
    if isinstance(e, dsl.Pow):
        return [(dsl.Pow(b, e.exponent), c) for b, c in _smooth_branches(e.base)]
    if isinstance(e, dsl.Call) and e.name != "abs":
        return [(dsl.Call(e.name, b), c) for b, c in _smooth_branches(e.arg)]
    if isinstance(e, dsl.Call):
        out = []
        for b, c in _smooth_branches(e.arg):
            out.append((b, c + [dsl.Neg(b)]))
            out.append((dsl.Neg(b), c + [b]))
        return out
    if isinstance(e, dsl.Extremum):
        arg_branches = [_smooth_branches(a) for a in e.args]
        out = []
        for j, bj in enumerate(arg_branches):
            for ej, cj in bj:
                conds = list(cj)
                for k, a in enumerate(e.args):
                    if k == j:
                        continue
                    if not a.is_smooth():
                        raise SectionError(f"cannot split {e}: nested nonsmooth arguments")
                    conds.append(dsl.Sub(a, ej) if e.name == "max" else dsl.Sub(ej, a))
                out.append((ej, conds))
                if len(out) > MAX_CELLS:
                    raise SectionError(_too_many())
        return out
    raise SectionError(f"cannot split {e} into smooth pieces")


def _too_many():
    return f"branch splitting needs more than {MAX_CELLS} cells; use fewer nonsmooth terms or a smaller problem"


def _product(a, b):
    out = [x.merged(y) for x in a for y in b]
    if len(out) > MAX_CELLS:
        raise SectionError(_too_many())
    return out


def level_cells(e, c, n):
    """Cells (without box limits) whose union is {x : e(x) <= c}."""
    shift = dsl.Const(float(c))
    if e.is_smooth():
        return [Cell(np.full(n, -np.inf), np.full(n, np.inf), smooth=[dsl.Sub(e, shift)])]
    if isinstance(e, dsl.Call) and e.name == "abs" and e.arg.is_smooth():
        u = e.arg
        return [Cell(np.full(n, -np.inf), np.full(n, np.inf),
                     smooth=[dsl.Sub(u, shift), dsl.Sub(dsl.Neg(u), shift)])]
    if isinstance(e, dsl.Extremum) and e.name == "max":
        cells = [Cell.free(n)]
        for a in e.args:
            cells = _product(cells, level_cells(a, c, n))
        return cells
    if isinstance(e, dsl.Extremum) and e.name == "min":
        cells = []
        for a in e.args:
            cells.extend(level_cells(a, c, n))
        if len(cells) > MAX_CELLS:
            raise SectionError(_too_many())
        return cells
    if isinstance(e, dsl.Norm2) and all(a.is_smooth() for a in e.args) and c >= 0:
        sq = e.args[0] * e.args[0]
        for a in e.args[1:]:
            sq = sq + a * a
        return [Cell(np.full(n, -np.inf), np.full(n, np.inf), smooth=[dsl.Sub(sq, dsl.Const(c * c))])]
    cells = []
    for b, conds in _smooth_branches(e):
        cells.append(Cell(np.full(n, -np.inf), np.full(n, np.inf), smooth=[dsl.Sub(b, shift)], splits=conds))
    if len(cells) > MAX_CELLS:
        raise SectionError(_too_many())
    return cells


@dataclass
class SublevelSet:
    base: FeasibleSet
    anchor: np.ndarray
    levels: np.ndarray
    feasible: FeasibleSet

    @property
    def cell_count(self):
        return self.feasible.section_count()


def sublevel(f, K, x0, tol=1e-7):
    """K intersected with {f_i(x) <= f_i(x0) for all i}."""
    x0 = np.asarray(x0, dtype=float)
    if not K.contains_many(x0, tol)[0]:
        raise SectionError(f"anchor {point_str(x0)} is not feasible")
    levels = f.values(x0)
    cells = [Cell.free(f.dim)]
    for e, c in zip(f, levels):
        cells = _product(cells, level_cells(e, c, f.dim))
    return SublevelSet(K, x0, levels, K.with_sections(cells))


def sublevel_points(f, points, images, anchor_values, tol):
    """Mask of sampled points lying in the sublevel set at the anchor values."""
    return np.all(images <= np.asarray(anchor_values)[:, None] + tol, axis=0)


# ---------------------------------------------------------------- section sampling

def default_resolution(n):
    return {1: 401, 2: 81, 3: 21}.get(n, 11)


@dataclass
class SectionSample:
    points: np.ndarray
    images: np.ndarray
    I_projection: np.ndarray
    verdict: str
    witness: list = field(default_factory=list)
    sublevel_bounded: bool = False
    radii: list = field(default_factory=list)
    extents: list = field(default_factory=list)
    spreads: list = field(default_factory=list)


def section_sample(f, K, x0, I, window=None, resolution=None, radius_max=6, tol=DEFAULT_TOL):
    """Grid-sample the sublevel set on boxes of radius 1, 2, 4, ... around x0.

    ``spreads[j]`` is the largest sup-norm deviation of f_I from f_I(x0) seen
    within radius 2^j.  The verdict is 'bounded' when the two outermost shells
    add no growth, 'unbounded-witness' when the spread keeps growing
    geometrically, and 'unknown' otherwise.  ``sublevel_bounded`` records that
    the two outermost shells held no sublevel points at all.
    """
    if not I:
        raise SectionError("index set must be nonempty")
    I = sorted(I)
    x0 = np.asarray(x0, dtype=float)
    n = len(x0)
    res = resolution or default_resolution(n)
    y0 = f.values(x0)
    all_pts, all_img = [x0[None, :]], [y0[None, :]]
    spreads, extents, radii, argmax = [], [], [], []
    spread, far = 0.0, 0.0
    for j in range(radius_max + 1):
        R = 2.0 ** j
        win = [(x0[i] - R, x0[i] + R) for i in range(n)]
        X = grid(K, win, res, tol=1e-9)
        if len(X):
            F = f.values(X.T)
            keep = sublevel_points(f, X, F, y0, tol)
            X, F = X[keep], F[:, keep].T
        else:
            F = np.zeros((0, len(f)))
        if len(X):
            dev = np.max(np.abs(F[:, I] - y0[I]), axis=1)
            k = int(np.argmax(dev))
            if dev[k] > spread:
                spread = float(dev[k])
            argmax.append(X[k])
            far = max(far, float(np.max(np.abs(X - x0))))
            all_pts.append(X)
            all_img.append(F)
        else:
            argmax.append(x0)
        spreads.append(spread)
        extents.append(far)
        radii.append(R)
    if window is not None:
        X = grid(K, window, res, tol=1e-9)
        if len(X):
            F = f.values(X.T)
            keep = sublevel_points(f, X, F, y0, tol)
            all_pts.append(X[keep])
            all_img.append(F[:, keep].T)
    pts = np.vstack(all_pts)
    imgs = np.vstack(all_img)

    verdict, witness = "unknown", []
    if len(spreads) >= 3:
        s0, s1, s2 = spreads[-3:]
        if s2 <= s1 * (1 + 1e-3) + 1e-9 and s1 <= s0 * (1 + 1e-3) + 1e-9:
            verdict = "bounded"
        elif s1 >= 1.5 * s0 > 0 and s2 >= 1.5 * s1:
            verdict = "unbounded-witness"
            witness = [np.asarray(p) for p in argmax[-3:]]
    sub_bounded = len(radii) >= 3 and extents[-1] <= radii[-3]
    return SectionSample(pts, imgs, imgs[:, I], verdict, witness, bool(sub_bounded), radii, extents, spreads)


# ---------------------------------------------------------------- index sets

@dataclass
class IndexSetResult:
    indices: list
    witnesses: dict
    deviations: list
    sample_size: int
    window: list
    resolution: object
    tol: float


def _sampled_sublevel(f, K, x0, window, resolution, tol):
    x0 = np.asarray(x0, dtype=float)
    X = grid(K, window, resolution, tol=1e-9)
    X = np.vstack([x0[None, :], X]) if len(X) else x0[None, :]
    F = f.values(X.T)
    keep = sublevel_points(f, X, F, f.values(x0), tol)
    return X[keep], F[:, keep].T


def index_set(f, K, x0, window, resolution, tol=DEFAULT_TOL):
    """Components that stay within ``tol`` of their anchor value on the sampled sublevel set."""
    x0 = np.asarray(x0, dtype=float)
    if not K.contains_many(x0, 1e-7)[0]:
        raise SectionError(f"anchor {point_str(x0)} is not feasible")
    X, F = _sampled_sublevel(f, K, x0, window, resolution, tol)
    if len(X) == 0:
        raise SectionError("sampled sublevel set is empty")
    y0 = f.values(x0)
    dev = np.abs(F - y0)
    idx, wit, devs = [], {}, []
    for i in range(len(f)):
        k = int(np.argmax(dev[:, i]))
        devs.append(float(dev[k, i]))
        if dev[k, i] <= tol:
            idx.append(i)
        else:
            wit[i] = X[k]
    return IndexSetResult(idx, wit, devs, len(X), [tuple(w) for w in np.reshape(window, (-1, 2))], resolution, tol)


# ---------------------------------------------------------------- descent chain

@dataclass
class ChainResult:
    x0: np.ndarray
    indices: list
    trace: list
    verdict: str


def descent_chain(f, K, x_start, window, resolution, max_steps=20, tol=DEFAULT_TOL):
    """Move to grid witnesses of strict decrease until some component is grid-constant.

    Step j works on component j mod s and jumps to the sampled point of the
    current sublevel set with the smallest value of that component (ties
    broken lexicographically in x).
    """
    x = np.asarray(x_start, dtype=float)
    G = grid(K, window, resolution, tol=1e-9)
    G = np.vstack([x[None, :], G]) if len(G) else x[None, :]
    FG = f.values(G.T).T
    s = len(f)
    trace = []
    for step in range(max_steps + 1):
        fx = f.values(x)
        mask = np.all(FG <= fx + tol, axis=1)
        Xs, Fs = G[mask], FG[mask]
        dev = np.max(np.abs(Fs - fx), axis=0) if len(Xs) else np.zeros(s)
        I = [i for i in range(s) if dev[i] <= tol]
        trace.append({"step": step, "x": x.copy(), "f": fx, "indices": I})
        if I:
            return ChainResult(x, I, trace, "found")
        if step == max_steps:
            break
        j = step % s
        best = np.min(Fs[:, j])
        cand = Xs[Fs[:, j] <= best + tol]
        order = np.lexsort(cand.T[::-1])
        x = cand[order[0]].copy()
    return ChainResult(x, [], trace, "unknown")


# ---------------------------------------------------------------- fronts

@dataclass
class FrontResult:
    points: np.ndarray
    images: np.ndarray
    weak_mask: np.ndarray
    strong_mask: np.ndarray

    @property
    def weak(self):
        return self.points[self.weak_mask]

    @property
    def strong(self):
        return self.points[self.strong_mask]


def dominance_masks(F, tol=0.0, chunk=256):
    """(weak, strong) nondominated masks for the rows of F."""
    F = np.asarray(F, dtype=float)
    if len(F) == 0:
        return np.zeros(0, bool), np.zeros(0, bool)
    U, inv = np.unique(F, axis=0, return_inverse=True)
    inv = np.ravel(inv)
    weak = np.ones(len(U), bool)
    strong = np.ones(len(U), bool)
    for a in range(0, len(U), chunk):
        C = U[a:a + chunk]
        lt = U[None, :, :] < C[:, None, :] - tol
        le = U[None, :, :] <= C[:, None, :] + tol
        weak[a:a + chunk] = ~np.any(np.all(lt, axis=2), axis=1)
        strong[a:a + chunk] = ~np.any(np.all(le, axis=2) & np.any(lt, axis=2), axis=1)
    return weak[inv], strong[inv]


def front_of(X, F, tol=0.0):
    weak, strong = dominance_masks(F, tol)
    return FrontResult(np.asarray(X), np.asarray(F), weak, strong)


def front_oracle(f, K, window, resolution, tol=0.0):
    """Brute-force weak and strong Pareto sets over the feasible grid."""
    X = grid(K, window, resolution)
    F = f.values(X.T).T if len(X) else np.zeros((0, len(f)))
    return front_of(X, F, tol)


def points_csv(X, F, flags=None):
    """RFC-4180 CSV with columns x1..xn, f1..fs, flags."""
    X = np.asarray(X, dtype=float)
    F = np.asarray(F, dtype=float)
    n = X.shape[1] if X.ndim == 2 and X.size else 0
    s = F.shape[1] if F.ndim == 2 and F.size else 0
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow([f"x{i + 1}" for i in range(n)] + [f"f{i + 1}" for i in range(s)] + ["flags"])
    for k in range(len(X)):
        tag = flags[k] if flags is not None else ""
        w.writerow([repr(float(v)) for v in X[k]] + [repr(float(v)) for v in F[k]] + [tag])
    return buf.getvalue()


__all__ = [
    "SectionError", "SublevelSet", "sublevel", "level_cells", "SectionSample",
    "section_sample", "IndexSetResult", "index_set", "ChainResult", "descent_chain", "FrontResult",
    "front_oracle", "front_of", "dominance_masks", "points_csv",
]
