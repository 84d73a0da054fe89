"""Limit sets at infinity estimated along probe paths, the four tameness conditions,
and a grid version of Ekeland's variational principle."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from . import dsl
from .feasible import FeasibleError, grid, grid_axes
from .sections import section_sample
from .stationarity import DEFAULT_TOL, nu, tangency_member

KINDS = ("K-tilde", "K", "T")
CONDITIONS = ("proper", "PS", "weakPS", "Mtame")
CONDITION_KIND = {"PS": "K-tilde", "weakPS": "K", "Mtame": "T"}
TREND_WINDOW = 5
CAUCHY_TOL = 1e-4
Y0_TOL = 1e-9


class ProbeError(ValueError):
    pass


@dataclass
class ProbePath:
    """Coordinates x(t) as expressions in the parameter t, sampled on ``schedule``."""
    exprs: list
    schedule: np.ndarray = field(default_factory=lambda: 2.0 ** np.arange(21))
    label: str = "path"

    @classmethod
    def parse(cls, sources, schedule=None, label="path"):
        exprs = [dsl.parse(s, param="t") for s in sources]
        sched = np.asarray(schedule if schedule is not None else 2.0 ** np.arange(21), dtype=float)
        return cls(exprs, sched, label)

    def points(self):
        """Array of shape (n, m) with one column per schedule value."""
        t = np.asarray(self.schedule, dtype=float)[None, :]
        return np.stack([dsl.evaluate(e, t) for e in self.exprs])

    def check(self):
        """Reason string when the path does not run off to infinity, else None."""
        if len(self.schedule) < TREND_WINDOW:
            return f"schedule has fewer than {TREND_WINDOW} points"
        if np.any(np.diff(self.schedule) <= 0):
            return "schedule must be increasing"
        X = self.points()
        if not np.all(np.isfinite(X)):
            return "path leaves the reals on its schedule"
        norms = np.linalg.norm(X, axis=0)
        if np.any(np.diff(norms[1:]) < -1e-12 * norms[1:-1].clip(1.0)):
            return "norm is not nondecreasing along the schedule"
        if norms[-1] < max(10.0, 10.0 * norms[0]):
            return "norm does not grow large by the end of the schedule"
        return None


@dataclass
class PathTrace:
    label: str
    t: np.ndarray
    points: np.ndarray
    values: np.ndarray
    nu: np.ndarray
    norm_nu: np.ndarray
    gamma: np.ndarray
    flagged: np.ndarray
    in_set: np.ndarray
    below: np.ndarray
    rejected: str | None = None

    def quantity(self, kind):
        return {"K-tilde": self.nu, "K": self.norm_nu, "T": self.gamma}[kind]


@dataclass
class LimitWitness:
    limit: np.ndarray
    label: str
    final_quantity: float
    flagged: bool
    point: np.ndarray


@dataclass
class LimitSetEstimate:
    kind: str
    accepted: list
    verdict: str
    traces: list
    notes: dict


def trace_path(f, K, path, y0=None, tol=DEFAULT_TOL):
    """Evaluate f, nu, |x| nu and the tangency residual along a path."""
    reason = path.check()
    X = path.points() if reason is None or "leaves" not in reason else np.zeros((len(path.exprs), 0))
    m = X.shape[1]
    s = len(f)
    if X.shape[0] != f.dim:
        raise ProbeError(f"path {path.label!r} has {X.shape[0]} coordinates, problem has {f.dim}")
    in_set = K.contains_many(X, 1e-7) if m else np.zeros(0, bool)
    vals = np.full((s, m), np.nan)
    nus = np.full(m, np.nan)
    gam = np.full(m, np.nan)
    flagged = np.zeros(m, bool)
    for k in range(m):
        if not in_set[k]:
            continue
        x = X[:, k]
        vals[:, k] = f.values(x)
        try:
            v = nu(f, K, x, tol)
            g = tangency_member(f, K, x, tol)
        except (FeasibleError, dsl.DSLError):
            flagged[k] = True
            continue
        nus[k] = v.value
        gam[k] = g.residual
        flagged[k] = v.is_lower_bound_only or g.is_lower_bound_only
    norms = np.linalg.norm(X, axis=0) if m else np.zeros(0)
    below = np.ones(m, bool)
    if y0 is not None:
        y0 = np.asarray(y0, dtype=float)
        below = np.all(vals <= y0[:, None] + Y0_TOL * (1 + np.abs(y0[:, None])), axis=0)
    if reason is None and m and in_set.sum() * 2 < m:
        reason = "more than half of the schedule lies outside the feasible set"
    return PathTrace(path.label, np.asarray(path.schedule, float), X, vals, nus, norms * nus, gam,
                     flagged, in_set, below, reason)


def _trend_to_zero(q, fI_last, tol):
    if len(q) < TREND_WINDOW or np.any(~np.isfinite(q)):
        return False
    tail = q[-TREND_WINDOW:]
    if np.any(np.diff(tail) > tol):
        return False
    return bool(tail[-1] <= tol * (1.0 + np.linalg.norm(fI_last)))


def _cauchy_limit(vals_I):
    tail = vals_I[:, -TREND_WINDOW:]
    if tail.shape[1] < TREND_WINDOW or np.any(~np.isfinite(tail)):
        return None
    if np.max(np.abs(tail - tail[:, -1:])) <= CAUCHY_TOL:
        return tail[:, -1].copy()
    return None


def _admissible(tr):
    """Retained columns of an admissible trace, or None."""
    if tr.rejected is not None:
        return None
    keep = tr.in_set
    if not np.all(tr.below[keep]):
        return None
    return keep


def estimate_limit_set(kind, f, K, y0, I, paths, tol=DEFAULT_TOL, traces=None):
    """Witnesses of the limit set of the given kind found along the probe paths.

    ``y0`` may be None for no sublevel restriction.  Paths leaving K at more
    than half of their schedule are rejected; if every path is rejected a
    ProbeError is raised.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown limit set kind {kind!r}")
    if not paths:
        raise ProbeError("no probe paths given")
    I = sorted(I)
    if traces is None:
        traces = [trace_path(f, K, p, y0, tol) for p in paths]
    if all(tr.rejected is not None for tr in traces):
        raise ProbeError("no admissible probes: " + "; ".join(f"{t.label}: {t.rejected}" for t in traces))
    accepted, notes = [], {}
    for tr in traces:
        keep = _admissible(tr)
        if keep is None:
            notes[tr.label] = tr.rejected or "leaves the sublevel region"
            continue
        q = tr.quantity(kind)[keep]
        vI = tr.values[I][:, keep]
        limit = _cauchy_limit(vI)
        if limit is None:
            notes[tr.label] = "f_I is not Cauchy over the last schedule points"
            continue
        if not _trend_to_zero(q, limit, tol):
            notes[tr.label] = "defining quantity does not trend to zero"
            continue
        flagged = bool(np.any(tr.flagged[keep][-TREND_WINDOW:]))
        last = np.flatnonzero(keep)[-1]
        accepted.append(LimitWitness(limit, tr.label, float(q[-1]), flagged, tr.points[:, last].copy()))
        notes[tr.label] = "accepted"
    verdict = "nonempty-witness" if accepted else "no-witness-found"
    return LimitSetEstimate(kind, accepted, verdict, traces, notes)


@dataclass
class K0Member:
    value: np.ndarray
    point: np.ndarray
    nu: float


@dataclass
class K0Estimate:
    members: list
    flagged: list
    skipped: int
    sampled: int
    points: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    nus: np.ndarray = field(default_factory=lambda: np.zeros(0))
    spacing: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def matches(self, limit, tol=1e-4):
        return [m for m in self.members if np.max(np.abs(m.value - limit)) <= tol]


def estimate_K0(f, K, y0, I, window, resolution, tol=DEFAULT_TOL):
    """f_I values at sampled critical points (nu <= tol) of K with f <= y0."""
    I = sorted(I)
    X = grid(K, window, resolution)
    axes = grid_axes(window, resolution)
    spacing = np.array([a[1] - a[0] if len(a) > 1 else 0.0 for a in axes])
    if len(X) == 0:
        return K0Estimate([], [], 0, 0, X, np.zeros(0), spacing)
    F = f.values(X.T)
    if y0 is not None:
        keep = _below(F, y0)
        X, F = X[keep], F[:, keep]
    members, flagged, skipped = [], [], 0
    nus = np.full(len(X), np.inf)
    for k in range(len(X)):
        try:
            v = nu(f, K, X[k], tol)
        except (FeasibleError, dsl.DSLError):
            skipped += 1
            continue
        nus[k] = v.value
        if v.value <= tol:
            m = K0Member(F[I, k].copy(), X[k].copy(), v.value)
            (flagged if v.is_lower_bound_only else members).append(m)
    return K0Estimate(members, flagged, skipped, len(X), X, nus, spacing)


def _below(F, y0):
    y0 = np.asarray(y0, dtype=float)
    return np.all(F <= y0[:, None] + Y0_TOL * (1 + np.abs(y0[:, None])), axis=0)


def search_K0(f, K, y0, I, k0, limit, tol=DEFAULT_TOL, match_tol=1e-4, starts=4, levels=30, zoom_res=7):
    """Look for a critical point with f_I within ``match_tol`` of ``limit``.

    Starting from the sampled points with the smallest nu + |f_I - limit|,
    repeatedly re-sample a small grid around the best point, shrinking the
    box threefold each time.  Returns a K0Member or None.
    """
    I = sorted(I)
    limit = np.asarray(limit, dtype=float)
    found = k0.matches(limit, match_tol)
    if found:
        return found[0]
    if len(k0.points) == 0:
        return None
    finite = np.isfinite(k0.nus)
    if not finite.any():
        return None
    idx = np.flatnonzero(finite)
    FI = f.values(k0.points[idx].T)[I]
    score = k0.nus[idx] + np.max(np.abs(FI - limit[:, None]), axis=0)
    order = idx[np.lexsort((np.arange(len(idx)), score))][:starts]
    base = np.where(k0.spacing > 0, k0.spacing, 1.0)
    for k in order:
        x = k0.points[k].copy()
        h = base.copy()
        for _ in range(levels):
            Z = grid(K, [(c - r, c + r) for c, r in zip(x, h)], zoom_res)
            if len(Z) == 0:
                break
            FZ = f.values(Z.T)
            if y0 is not None:
                keep = _below(FZ, y0)
                Z, FZ = Z[keep], FZ[:, keep]
            cand = None
            for j in range(len(Z)):
                try:
                    v = nu(f, K, Z[j], tol)
                except (FeasibleError, dsl.DSLError):
                    continue
                if v.is_lower_bound_only:
                    continue
                gap = float(np.max(np.abs(FZ[I, j] - limit)))
                sc = v.value + gap
                if v.value <= tol and gap <= match_tol:
                    return K0Member(FZ[I, j].copy(), Z[j].copy(), v.value)
                if cand is None or sc < cand[0]:
                    cand = (sc, j)
            if cand is None:
                break
            x = Z[cand[1]].copy()
            h = h / 3.0
            if np.max(h) < 1e-12:
                break
    return None


# ---------------------------------------------------------------- conditions

@dataclass
class ConditionVerdict:
    kind: str
    status: str
    witness: LimitWitness | None = None
    evidence: str = ""


def _proper_witness(traces, I):
    for tr in traces:
        keep = _admissible(tr)
        if keep is None or keep.sum() < TREND_WINDOW:
            continue
        vI = tr.values[I][:, keep]
        if not np.all(np.isfinite(vI)):
            continue
        mags = np.max(np.abs(vI), axis=0)
        half = len(mags) // 2
        limit = _cauchy_limit(vI)
        growing = mags[half:].max() > mags[:half].max() * (1 + 1e-3) + 1e-9
        if limit is not None or not growing:
            last = np.flatnonzero(keep)[-1]
            lim = limit if limit is not None else vI[:, -1].copy()
            return LimitWitness(lim, tr.label, float(mags[-1]), False, tr.points[:, last].copy())
    return None


def unbounded_sublevel_path(traces):
    """Label of an admissible path that stays in the sublevel set, if any."""
    for tr in traces:
        if _admissible(tr) is not None:
            return tr.label
    return None


def check_condition(kind, f, K, x0, I, paths, tol=DEFAULT_TOL, sample=None, traces=None):
    """Three-valued verdict for properness, Palais-Smale, weak Palais-Smale or M-tameness.

    'fails' needs a probe witness; 'holds' needs a sampled certificate that the
    sublevel set is bounded and no admissible probe runs off inside it.
    """
    if kind not in CONDITIONS:
        raise ValueError(f"unknown condition {kind!r}")
    I = sorted(I)
    x0 = np.asarray(x0, dtype=float)
    y0 = f.values(x0)
    if traces is None:
        traces = [trace_path(f, K, p, y0, tol) for p in paths]
    if all(tr.rejected is not None for tr in traces):
        raise ProbeError("no admissible probes: " + "; ".join(f"{t.label}: {t.rejected}" for t in traces))
    if kind == "proper":
        w = _proper_witness(traces, I)
        if w is not None:
            return ConditionVerdict(kind, "fails", w, f"f_I stays bounded along {w.label}")
    else:
        est = estimate_limit_set(CONDITION_KIND[kind], f, K, y0, I, paths, tol, traces)
        if est.accepted:
            w = est.accepted[0]
            if w.flagged:
                return ConditionVerdict(kind, "unknown", w, f"witness along {w.label} rests on inexact hulls")
            return ConditionVerdict(kind, "fails", w, f"{CONDITION_KIND[kind]} witness along {w.label}")
    if sample is None:
        sample = section_sample(f, K, x0, I, tol=tol)
    runaway = unbounded_sublevel_path(traces)
    if sample.sublevel_bounded and runaway is None:
        return ConditionVerdict(kind, "holds", None, "sampled sublevel set is bounded")
    why = f"probe {runaway} stays in the sublevel set" if runaway else "no boundedness certificate"
    return ConditionVerdict(kind, "unknown", None, why)


# ---------------------------------------------------------------- Ekeland step

@dataclass
class EkelandResult:
    y: np.ndarray
    value: float
    verified: bool
    conditions: dict
    iterations: int


def ekeland_refine(phi, S, x_start, epsilon, lam, max_iter=200, resolution=None):
    """Grid point y of S with phi(y) <= phi(x_start), |y - x_start| <= lam and
    phi(y) <= phi(z) + (epsilon/lam)|z - y| for every sampled z near x_start.

    Follows the usual constructive proof: repeatedly jump to the best sampled
    point of the current slope-cone set until that set is empty.
    """
    if epsilon <= 0 or lam <= 0:
        raise ValueError("epsilon and lambda must be positive")
    x0 = np.asarray(x_start, dtype=float)
    n = len(x0)
    res = resolution or {1: 2001, 2: 101, 3: 31}.get(n, 11)
    Z = grid(S, [(c - lam, c + lam) for c in x0], res)
    Z = Z[np.linalg.norm(Z - x0, axis=1) <= lam * (1 + 1e-12)] if len(Z) else Z
    Z = np.vstack([x0[None, :], Z]) if len(Z) else x0[None, :]
    vals = dsl.evaluate(phi, Z.T)
    slope = epsilon / lam
    cur = 0
    it = 0
    verified = False
    while it < max_iter:
        it += 1
        pen = vals + slope * np.linalg.norm(Z - Z[cur], axis=1)
        cand = np.flatnonzero(pen < vals[cur] - 1e-12 * (1 + abs(vals[cur])))
        if len(cand) == 0:
            verified = True
            break
        best = vals[cand].min()
        tied = cand[vals[cand] <= best + 1e-15 * (1 + abs(best))]
        order = np.lexsort(Z[tied].T[::-1])
        cur = int(tied[order[0]])
    y = Z[cur].copy()
    pen = vals + slope * np.linalg.norm(Z - y, axis=1)
    conds = {
        "a": bool(vals[cur] <= vals[0]),
        "b": bool(np.linalg.norm(y - x0) <= lam * (1 + 1e-12)),
        "c": bool(np.all(pen >= vals[cur] - 1e-12 * (1 + abs(vals[cur])))),
    }
    return EkelandResult(y, float(vals[cur]), verified and all(conds.values()), conds, it)


def trace_csv(tr, digits=12):
    """RFC-4180 CSV of a probe trace: t, x, f, nu, |x| nu, tangency residual."""
    n = tr.points.shape[0]
    s = tr.values.shape[0]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["t"] + [f"x{i + 1}" for i in range(n)] + [f"f{i + 1}" for i in range(s)]
               + ["nu", "norm_x_nu", "gamma_residual"])
    fmt = lambda v: "" if not np.isfinite(v) else f"{v:.{digits}g}"
    for k in range(len(tr.t)):
        row = [tr.t[k]] + list(tr.points[:, k]) + list(tr.values[:, k]) + [tr.nu[k], tr.norm_nu[k], tr.gamma[k]]
        w.writerow([fmt(float(v)) for v in row])
    return buf.getvalue()
