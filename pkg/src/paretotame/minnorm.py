"""Distance from the origin to conv(G) + C for a finite generator list and a cone.

The solver is a fully corrective Frank-Wolfe method.  Each outer step calls the
linear minimisation oracle over the simplex and the (capped) cone slice, adds the
improving atoms, then re-optimises over the active atoms with Wolfe's affine
minimisation and ratio-test drop rule.  The drop rule plays the part of away
steps, and the method terminates finitely on these small problems.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 50_000
CONE_CAP = 1e6


@dataclass(frozen=True)
class ConeRep:
    """Cone {sum l_j r_j + sum m_k d_k : l_j >= 0} with rays r_j and lineality d_k."""
    rays: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    lineality: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))

    @classmethod
    def zero(cls, n):
        return cls(np.zeros((0, n)), np.zeros((0, n)))

    @classmethod
    def make(cls, n, rays=(), lineality=()):
        r = np.asarray(rays, dtype=float).reshape(-1, n)
        l = np.asarray(lineality, dtype=float).reshape(-1, n)
        return cls(r, l)

    def is_zero(self):
        return len(self.rays) == 0 and len(self.lineality) == 0

    def scaled(self, c):
        return ConeRep(self.rays * c, self.lineality * c)


@dataclass
class MinNormResult:
    distance: float
    witness_point: np.ndarray
    weights: np.ndarray
    cone_coeffs: np.ndarray
    lineality_coeffs: np.ndarray
    iterations: int
    converged: bool
    gap: float
    lower_bound: float
    case: int = 0


def _normalised(rows):
    if len(rows) == 0:
        return rows, np.ones(0)
    norms = np.linalg.norm(rows, axis=1)
    keep = norms > 0
    scale = np.where(keep, norms, 1.0)
    return rows / scale[:, None], scale


def _affine_min(G, R, L, gs, rs):
    """Minimise |p| over the affine hull of G[gs] plus span(R[rs]) and span(L).

    Arrays are extended precision; the least-squares solves run in double and
    are refined with extended-precision residuals so the closest point stays
    orthogonal to the active atoms well below double rounding.
    """
    base = G[gs[0]]
    cols = [G[k] - base for k in gs[1:]] + [R[j] for j in rs] + list(L)
    if not cols:
        one = np.ones(1, dtype=np.longdouble)
        return one, np.zeros(len(rs), dtype=np.longdouble), np.zeros(len(L), dtype=np.longdouble)
    Dx = np.array(cols).T
    D = Dx.astype(float)
    y, *_ = np.linalg.lstsq(D, -base.astype(float), rcond=None)
    y = y.astype(np.longdouble)
    gram = D.T @ D
    for _ in range(3):
        r = base + Dx @ y
        # normal-equation correction with the small right side D^T r formed exactly
        rhs = (Dx.T @ r).astype(float)
        dy, *_ = np.linalg.lstsq(gram, -rhs, rcond=None)
        y = y + dy
    ng = len(gs) - 1
    w = np.concatenate([[1 - y[:ng].sum()], y[:ng]])
    lam = y[ng:ng + len(rs)]
    mu = y[ng + len(rs):]
    return w, lam, mu


def _point(Gx, Rx, Lx, gs, rs, w, lam, mu):
    p = Gx[gs].T @ w
    if rs:
        p = p + Rx[rs].T @ lam
    if len(Lx):
        p = p + Lx.T @ mu
    return p


def _certified(dist, gap, tol):
    """Gap within tol and the gap lower bound sqrt(dist^2 - 2 gap) within tol of dist."""
    if gap > tol:
        return False
    return dist <= tol or gap <= tol * dist - 0.5 * tol * tol


def min_norm(G, C=None, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """Closest point of conv(G) + C to the origin.

    Parameters
    ----------
    G : (k, n) array of generators, k >= 1
    C : ConeRep or None for the zero cone
    tol : target Frank-Wolfe duality gap; the distance is also certified to within tol
    max_iter : cap on linear-oracle calls

    Returns
    -------
    MinNormResult with convex weights over G and nonnegative ray coefficients.
    """
    G = np.atleast_2d(np.asarray(G, dtype=float))
    k, n = G.shape
    if k == 0:
        raise ValueError("generator list must be nonempty")
    if C is None:
        C = ConeRep.zero(n)
    R, rscale = _normalised(np.asarray(C.rays, dtype=float).reshape(-1, n))
    L = np.asarray(C.lineality, dtype=float).reshape(-1, n)
    if len(L):
        # orthonormal basis of the lineality space
        u, s, _ = np.linalg.svd(L.T, full_matrices=False)
        L = u[:, s > 1e-12 * max(1.0, s.max())].T
    nr = len(R)

    Gx, Rx, Lx = G.astype(np.longdouble), R.astype(np.longdouble), L.astype(np.longdouble)
    start = int(np.argmin(np.linalg.norm(G, axis=1)))
    gs, rs = [start], []
    w = np.ones(1, dtype=np.longdouble)
    lam = np.zeros(0, dtype=np.longdouble)
    _, _, mu = _affine_min(Gx, Rx, Lx, gs, rs)
    mu = mu if len(L) else np.zeros(0, dtype=np.longdouble)
    cap = CONE_CAP
    it = 0
    gap = np.inf
    prev = np.inf
    stall = 0
    while it < max_iter:
        it += 1
        p = _point(Gx, Rx, Lx, gs, rs, w, lam, mu)
        pg = Gx @ p
        pr = Rx @ p if nr else np.zeros(0)
        pl = Lx @ p if len(L) else np.zeros(0)
        kstar = int(np.argmin(pg))
        cur = p @ p
        slack = (cur - pg[kstar]) - cap * np.minimum(pr, 0.0).sum() + cap * np.abs(pl).sum()
        gap = max(0.0, float(slack))
        if _certified(float(np.sqrt(cur)), gap, tol):
            break
        nn = float(cur)
        if nn >= prev - 1e-300:
            stall += 1
            if stall > 3:
                break
        else:
            stall = 0
        prev = nn
        # one atom per step, as in Wolfe's method
        if kstar not in gs and pg[kstar] < cur - 1e-15:
            gs.append(kstar)
            w = np.append(w, 0.0)
        else:
            cand = [j for j in np.argsort(pr) if pr[j] < 0 and j not in rs]
            if not cand:
                break
            rs.append(int(cand[0]))
            lam = np.append(lam, 0.0)
        # Wolfe inner loop on the active atoms
        for _ in range(len(gs) + len(rs) + 2):
            w_new, lam_new, mu_new = _affine_min(Gx, Rx, Lx, gs, rs)
            if np.all(w_new >= 0) and np.all(lam_new >= 0):
                w, lam, mu = w_new, lam_new, mu_new
                break
            cur_v = np.concatenate([w, lam])
            new_v = np.concatenate([w_new, lam_new])
            neg = new_v < 0
            theta = np.min(cur_v[neg] / (cur_v[neg] - new_v[neg]))
            theta = min(max(theta, 0.0), 1.0)
            v = cur_v + theta * (new_v - cur_v)
            mu = mu + theta * (mu_new - mu) if len(L) else mu
            keep_g = v[:len(gs)] > 1e-14
            keep_r = v[len(gs):] > 1e-14
            if not keep_g.any():
                keep_g[np.argmax(v[:len(gs)])] = True
            gs = [g for g, kf in zip(gs, keep_g) if kf]
            rs = [r for r, kf in zip(rs, keep_r) if kf]
            w = v[:len(keep_g)][keep_g]
            w = w / w.sum()
            lam = v[len(keep_g):][keep_r]
        if rs and lam.max() > cap:
            cap = 10.0 * lam.max()

    p = _point(Gx, Rx, Lx, gs, rs, w, lam, mu).astype(float)
    weights = np.zeros(k)
    weights[gs] = w.astype(float)
    coeffs = np.zeros(nr)
    if rs:
        coeffs[rs] = lam.astype(float)
    coeffs = coeffs / rscale if nr else coeffs
    dist = float(np.linalg.norm(p))
    lb = float(np.sqrt(max(0.0, dist * dist - 2.0 * gap)))
    lin = mu.astype(float) if len(L) else np.zeros(0)
    return MinNormResult(dist, p, weights, coeffs, lin, it, _certified(dist, gap, tol), float(gap), lb)


def min_norm_multi(Gs, Cs, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """Smallest of the paired min_norm problems; ``case`` records which pair won."""
    if len(Gs) != len(Cs) or not Gs:
        raise ValueError("generator and cone lists must be aligned and nonempty")
    best = None
    for i, (G, C) in enumerate(zip(Gs, Cs)):
        res = min_norm(G, C, tol, max_iter)
        res.case = i
        if best is None or res.distance < best.distance:
            best = res
    return best
