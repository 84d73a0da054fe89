"""Existence checkers for weak Pareto solutions built from section bounds, limit-set
estimates and sampled critical values."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .asymptotics import (CONDITIONS, KINDS, ConditionVerdict, LimitSetEstimate, check_condition, estimate_K0,
                          estimate_limit_set, search_K0, trace_path)
from .feasible import point_str
from .sections import front_oracle, section_sample, sublevel
from .stationarity import DEFAULT_TOL

MATCH_TOL = 1e-4
INCLUSIONS = {"K-tilde": "Ktilde_in_K0", "K": "K_in_K0", "T": "T_in_K0"}


class HypothesisError(ValueError):
    pass


@dataclass
class Clause:
    name: str
    status: str
    evidence: list = field(default_factory=list)
    note: str = ""


@dataclass
class ExistenceReport:
    theorem: str
    indices: list
    x0: np.ndarray
    section_verdict: str
    clauses: list
    conclusion: str
    k0_size: int = 0
    k0_skipped: int = 0
    front: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def clause(self, name):
        for c in self.clauses:
            if c.name == name:
                return c
        raise KeyError(name)


def _front_summary(f, K, window, resolution):
    if window is None:
        return {}
    fr = front_oracle(f, K, window, resolution)
    out = {"grid_points": int(len(fr.points)), "weak": int(fr.weak_mask.sum()), "strong": int(fr.strong_mask.sum())}
    if fr.weak_mask.any():
        out["weak_example"] = fr.weak[0]
    return out


def _inclusion_clauses(est_by_kind, k0, f, K, y0, I, tol):
    clauses = []
    cache = {}
    for kind in KINDS:
        est = est_by_kind[kind]
        evidence, status = [], "holds"
        for w in est.accepted:
            key = tuple(np.round(w.limit, 9))
            if key not in cache:
                cache[key] = search_K0(f, K, y0, I, k0, w.limit, tol, MATCH_TOL)
            match = cache[key]
            evidence.append({
                "limit": w.limit, "path": w.label, "quantity": w.final_quantity, "point": w.point,
                "matched": None if match is None else match.point,
                "matched_value": None if match is None else match.value, "flagged": w.flagged,
            })
            if match is None and not w.flagged:
                status = "fails"
            elif w.flagged and status == "holds":
                status = "unknown"
        note = "no witnesses along the probes" if not est.accepted else ""
        clauses.append(Clause(INCLUSIONS[kind], status, evidence, note))
    return clauses


def _bounded_set_report(theorem, f, K, I, x0, window, resolution, notes):
    clauses = [Clause(INCLUSIONS[k], "holds", [], "feasible set is bounded: limit sets are empty") for k in KINDS]
    return ExistenceReport(theorem, sorted(I), np.asarray(x0, float), "bounded", clauses,
                           "weak-solution-exists", front=_front_summary(f, K, window, resolution),
                           notes=notes + ["feasible set is bounded"])


def _conclude(section_verdict, clauses):
    if section_verdict == "bounded" and any(c.status == "holds" for c in clauses):
        return "weak-solution-exists"
    return "inconclusive"


def check_theorem_5_1(f, K, I, x0, probes, window, resolution=101, tol=DEFAULT_TOL):
    """Section bound plus the inclusions of the three limit sets in the critical values.

    Each accepted limit witness must be matched within 1e-4 by a sampled
    critical value of f_I at a point of K below f(x0).
    """
    I = sorted(I)
    if not I:
        raise HypothesisError("index set must be nonempty")
    x0 = np.asarray(x0, dtype=float)
    if not K.contains_many(x0, 1e-7)[0]:
        raise HypothesisError(f"anchor {point_str(x0)} is not feasible")
    if K.is_bounded():
        return _bounded_set_report("5.1", f, K, I, x0, window, resolution, [])
    sample = section_sample(f, K, x0, I, tol=tol)
    y0 = f.values(x0)
    est, notes = _estimates(f, K, y0, I, probes, tol)
    k0 = estimate_K0(f, K, y0, I, window, resolution, tol)
    clauses = _inclusion_clauses(est, k0, f, K, y0, I, tol)
    report = ExistenceReport("5.1", I, x0, sample.verdict, clauses, _conclude(sample.verdict, clauses),
                             len(k0.members), k0.skipped, _front_summary(f, K, window, resolution), notes)
    if sample.verdict != "bounded":
        report.notes.append("weak section-boundedness is not certified on the sample")
    return report


def check_theorem_5_4(f, K, I, x0, probes, window, resolution=101, tol=DEFAULT_TOL):
    """Same clause structure for f_I on the sublevel set at x0, using the restricted
    Rabier function and tangency variety."""
    I = sorted(I)
    if not I:
        raise HypothesisError("index set must be nonempty")
    x0 = np.asarray(x0, dtype=float)
    if not K.contains_many(x0, 1e-7)[0]:
        raise HypothesisError(f"anchor {point_str(x0)} is not feasible")
    sub = sublevel(f, K, x0)
    fI = f.subset(I)
    if K.is_bounded():
        return _bounded_set_report("5.4", f, K, I, x0, window, resolution, [])
    sample = section_sample(f, K, x0, I, tol=tol)
    all_idx = list(range(len(I)))
    y0 = fI.values(x0)
    S = sub.feasible
    est, notes = _estimates(fI, S, y0, all_idx, probes, tol)
    k0 = estimate_K0(fI, S, y0, all_idx, window, resolution, tol)
    clauses = _inclusion_clauses(est, k0, fI, S, y0, all_idx, tol)
    report = ExistenceReport("5.4", I, x0, sample.verdict, clauses, _conclude(sample.verdict, clauses),
                             len(k0.members), k0.skipped, _front_summary(f, K, window, resolution), notes)
    if sample.verdict != "bounded":
        report.notes.append("weak section-boundedness is not certified on the sample")
    return report


def _estimates(f, K, y0, I, probes, tol):
    """Limit-set estimates of every kind; probes that all leave the set give empty estimates."""
    traces = [trace_path(f, K, p, y0, tol) for p in probes]
    if all(tr.rejected is not None for tr in traces):
        empty = {k: LimitSetEstimate(k, [], "no-witness-found", traces, {}) for k in KINDS}
        return empty, ["no probe stays in the feasible set"]
    return {k: estimate_limit_set(k, f, K, y0, I, probes, tol, traces) for k in KINDS}, []


@dataclass
class EquivalenceReport:
    indices: list
    x0: np.ndarray
    verdicts: dict
    agreement: bool
    compact: bool | None
    witness_paths: list
    section_verdict: str


def equivalence_harness_4_4(f, K, I, x0, probes, tol=DEFAULT_TOL):
    """Run properness, PS, weak PS and M-tameness side by side.

    Refuses unless the sampled image section is bounded (weak
    section-boundedness from below with respect to I and x0).
    """
    I = sorted(I)
    x0 = np.asarray(x0, dtype=float)
    sample = section_sample(f, K, x0, I, tol=tol)
    if sample.verdict != "bounded" and not K.is_bounded():
        raise HypothesisError(
            f"weak section-boundedness from below w.r.t. I={[i + 1 for i in I]} and x0 is not certified "
            f"(sampled verdict: {sample.verdict})")
    verdicts = {}
    if K.is_bounded():
        verdicts = {c: ConditionVerdict(c, "holds", None, "feasible set is bounded") for c in CONDITIONS}
    else:
        traces = [trace_path(f, K, p, f.values(x0), tol) for p in probes]
        for c in CONDITIONS:
            verdicts[c] = check_condition(c, f, K, x0, I, probes, tol, sample, traces)
    statuses = {v.status for v in verdicts.values()}
    agreement = len(statuses) == 1
    compact = None
    if "holds" in statuses:
        compact = bool(sample.sublevel_bounded or K.is_bounded())
    paths = sorted({v.witness.label for v in verdicts.values() if v.witness is not None})
    return EquivalenceReport(I, x0, verdicts, agreement, compact, paths, sample.verdict)


def corollary_5_3_sufficiency(f, K, I, x0, probes, tol=DEFAULT_TOL, window=None, resolution=101):
    """Weak solutions exist when any of the four conditions holds under a section bound."""
    eq = equivalence_harness_4_4(f, K, I, x0, probes, tol)
    clauses = [Clause(c, v.status, [v.witness] if v.witness is not None else [], v.evidence)
               for c, v in eq.verdicts.items()]
    conclusion = "weak-solution-exists" if any(c.status == "holds" for c in clauses) else "inconclusive"
    return ExistenceReport("5.3c", sorted(I), np.asarray(x0, float), eq.section_verdict, clauses, conclusion,
                           front=_front_summary(f, K, window, resolution))
