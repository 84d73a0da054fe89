"""Stationarity residuals: the extended Rabier function, its restricted form, and
membership in the tangency variety."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dsl
from .feasible import normal_cone
from .minnorm import MinNormResult, min_norm_multi

DEFAULT_TOL = 1e-7


@dataclass
class NuValue:
    value: float
    is_lower_bound_only: bool
    witness: MinNormResult
    exact: bool = True
    junction: bool = False

    def verdict(self, tol=DEFAULT_TOL):
        return classify(self.value, tol)


@dataclass
class TangencyCertificate:
    member: bool
    residual: float
    alpha: np.ndarray
    mu: float
    is_lower_bound_only: bool = False


def classify(value, tol=DEFAULT_TOL):
    """'zero', 'marginal' (within ten tolerances) or 'positive'."""
    if value <= tol:
        return "zero"
    if value <= 10 * tol:
        return "marginal"
    return "positive"


def _hulls(f, x, allow_inexact):
    gens, owner, exact = [], [], True
    for i, e in enumerate(f):
        h = dsl.subdiff(e, x, allow_inexact)
        gens.append(h.generators)
        owner.extend([i] * len(h.generators))
        exact = exact and h.exact
    return np.vstack(gens), np.array(owner), exact


def nu(f, K, x, tol=DEFAULT_TOL, allow_inexact=False):
    """Distance from the origin to conv(union of subgradient hulls) + N(x; K).

    The minimum is taken over the normal cones of all cells containing x;
    the result is flagged as a lower bound when a hull was an inclusion or
    x sits on a cell junction.
    """
    x = np.asarray(x, dtype=float)
    G, _, exact = _hulls(f, x, allow_inexact)
    cone = normal_cone(K, x)
    res = min_norm_multi([G] * len(cone.pieces), cone.pieces)
    flagged = (not exact) or cone.junction or cone.split_active
    return NuValue(res.distance, flagged, res, exact, cone.junction)


def nu_restricted(f, K, x0, I, x, tol=DEFAULT_TOL, allow_inexact=False, sub=None):
    """Rabier value of the components in ``I`` (0-based) on the sublevel set at ``x0``."""
    from .sections import sublevel

    if not I:
        raise ValueError("index set must be nonempty")
    if sub is None:
        sub = sublevel(f, K, x0)
    return nu(f.subset(sorted(I)), sub.feasible, x, tol, allow_inexact)


def tangency_member(f, K, x, tol=DEFAULT_TOL, allow_inexact=False):
    """Smallest |sum a_i v_i + mu x + w| with a >= 0, sum a + |mu| = 1, w normal.

    The sign of ``mu`` is split so that each case is a min-norm problem over
    conv(generators together with +x or -x) plus the normal cone.
    """
    x = np.asarray(x, dtype=float)
    G, owner, exact = _hulls(f, x, allow_inexact)
    cone = normal_cone(K, x)
    best = None
    for sign in (1.0, -1.0):
        Gx = np.vstack([G, sign * x])
        res = min_norm_multi([Gx] * len(cone.pieces), cone.pieces)
        if best is None or res.distance < best[0].distance:
            best = (res, sign)
    res, sign = best
    alpha = np.zeros(len(f))
    np.add.at(alpha, owner, res.weights[:-1])
    mu = sign * float(res.weights[-1])
    flagged = (not exact) or cone.junction or cone.split_active
    return TangencyCertificate(bool(res.distance <= tol), res.distance, alpha, mu, flagged)
