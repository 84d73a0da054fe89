"""Command-line front end: problem files, command dispatch and report/CSV emission."""
from __future__ import annotations

import argparse
import os
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dsl
from .asymptotics import KINDS, ProbeError, ProbePath, estimate_limit_set, trace_csv, trace_path
from .existence import (HypothesisError, check_theorem_5_1, check_theorem_5_4, corollary_5_3_sufficiency,
                        equivalence_harness_4_4)
from .feasible import Cell, DegenerateCornerError, FeasibleError, FeasibleSet, Periodic, point_str
from .sections import (SectionError, descent_chain, front_oracle, index_set, points_csv, section_sample,
                       sublevel)
from .stationarity import DEFAULT_TOL, nu, tangency_member

FIXTURE_DIR = Path(__file__).resolve().parent / "fixtures"
COMMANDS = ("rabier", "tangency", "sections", "index-set", "descent-chain", "front", "limit-sets", "check",
            "equivalence", "report")
THEOREMS = ("4.4", "5.1", "5.4", "5.3c")
EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3
FRONT_LISTED = 20


class ProblemError(ValueError):
    def __init__(self, message, path=None, line=None):
        where = f"{path}:{line}: " if line is not None else (f"{path}: " if path else "")
        super().__init__(where + message)


# ---------------------------------------------------------------- problem files

@dataclass
class ProblemFile:
    path: str
    name: str
    dim: int
    objectives: list
    f: dsl.VectorObjective
    K: FeasibleSet
    anchor: np.ndarray
    index_set: list | None = None
    probes: list = field(default_factory=list)
    window: list | None = None
    resolution: object = None
    tol: float = DEFAULT_TOL
    at: np.ndarray | None = None
    description: str = ""

    def indices(self):
        return self.index_set if self.index_set is not None else list(range(len(self.f)))


REPEATABLE = {"affine", "smooth"}
SECTION_KEYS = {
    "problem": {"name", "dim", "anchor", "index_set", "window", "resolution", "tol", "at", "description"},
    "objectives": None,
    "cell": {"lower", "upper", "affine", "smooth"},
    "periodic": {"coord", "period", "k_min", "k_max"},
    "probe": None,
}
_HEADER = re.compile(r"^\[\s*([A-Za-z_]+)(?:\s+([A-Za-z0-9_.\-]+))?\s*\]$")


def _scalar(text, where):
    t = text.strip()
    if t.lower() in ("inf", "+inf"):
        return np.inf
    if t.lower() == "-inf":
        return -np.inf
    try:
        e = dsl.parse(t, param="t")
    except dsl.DSLError as exc:
        raise ProblemError(f"bad number {t!r}: {exc}", *where) from None
    if e.max_index() >= 0:
        raise ProblemError(f"bad number {t!r}: constants may not use t", *where)
    v = float(dsl.evaluate(e, np.zeros(1)))
    if v != v:
        raise ProblemError(f"bad number {t!r}: not a real value", *where)
    return v


def _csv(text, where):
    return [_scalar(p, where) for p in text.split(",")]


def _ints(text, where, what):
    out = []
    for p in text.split(","):
        p = p.strip()
        if not re.fullmatch(r"[+-]?\d+", p):
            raise ProblemError(f"{what} expects integers, got {p!r}", *where)
        out.append(int(p))
    return out


def _schedule(text, where):
    t = text.replace(" ", "")
    m = re.fullmatch(r"2\^(-?\d+)\.\.2\^(-?\d+)", t)
    if m:
        a, b = int(m.group(1)), int(m.group(2))
        return 2.0 ** np.arange(a, b + 1)
    m = re.fullmatch(r"(-?\d+)\.\.(-?\d+)", t)
    if m:
        return np.arange(int(m.group(1)), int(m.group(2)) + 1, dtype=float)
    return np.array(_csv(text, where))


def parse_window(text, dim, where=(None, None)):
    vals = _csv(text, where)
    if len(vals) != 2 * dim:
        raise ProblemError(f"window needs {2 * dim} numbers (lo, hi per coordinate), got {len(vals)}", *where)
    pairs = [(vals[2 * i], vals[2 * i + 1]) for i in range(dim)]
    for lo, hi in pairs:
        if not (np.isfinite(lo) and np.isfinite(hi)) or lo > hi:
            raise ProblemError(f"window interval ({lo:g}, {hi:g}) must be finite with lo <= hi", *where)
    return pairs


def parse_resolution(text, dim, where=(None, None)):
    vals = _ints(text, where, "resolution")
    if any(v < 1 for v in vals):
        raise ProblemError("resolution counts must be positive", *where)
    if len(vals) not in (1, dim):
        raise ProblemError(f"resolution needs 1 or {dim} counts", *where)
    return vals[0] if len(vals) == 1 else vals


def _point(text, dim, where, what):
    vals = _csv(text, where)
    if len(vals) != dim:
        raise ProblemError(f"{what} needs {dim} coordinates, got {len(vals)}", *where)
    if not np.all(np.isfinite(vals)):
        raise ProblemError(f"{what} must be finite", *where)
    return np.array(vals)


def _sections(text, path):
    """List of (kind, label, line, {key: [(value, line)]})."""
    out = []
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _HEADER.match(line)
        if m:
            kind = m.group(1).lower()
            if kind not in SECTION_KEYS:
                raise ProblemError(f"unknown section [{kind}]", path, no)
            out.append((kind, m.group(2), no, {}))
            continue
        if "=" not in line:
            raise ProblemError(f"expected 'key = value', got {line!r}", path, no)
        if not out:
            raise ProblemError("entry before the first [section] header", path, no)
        key, value = (s.strip() for s in line.split("=", 1))
        kind, _, _, entries = out[-1]
        allowed = SECTION_KEYS[kind]
        if allowed is not None and key not in allowed:
            raise ProblemError(f"unknown key {key!r} in [{kind}]", path, no)
        if key in entries and key not in REPEATABLE:
            raise ProblemError(f"duplicate key {key!r} in [{kind}]", path, no)
        entries.setdefault(key, []).append((value, no))
    return out


def _one(entries, key, path, header_line, required=True):
    if key not in entries:
        if required:
            raise ProblemError(f"missing required key {key!r}", path, header_line)
        return None, None
    return entries[key][0]


def _cell(entries, dim, path):
    lower, upper = np.full(dim, -np.inf), np.full(dim, np.inf)
    for key, arr in (("lower", lower), ("upper", upper)):
        if key in entries:
            v, no = entries[key][0]
            vals = _csv(v, (path, no))
            if len(vals) != dim:
                raise ProblemError(f"{key} needs {dim} values, got {len(vals)}", path, no)
            arr[:] = vals
    if np.any(lower > upper):
        line = entries.get("lower", entries.get("upper", [(None, None)]))[0][1]
        raise ProblemError("cell has lower > upper", path, line)
    affine, smooth = [], []
    for v, no in entries.get("affine", []):
        if "<=" not in v:
            raise ProblemError("affine entries look like 'a1, a2, ... <= b'", path, no)
        lhs, rhs = v.split("<=", 1)
        a = _csv(lhs, (path, no))
        if len(a) != dim:
            raise ProblemError(f"affine row needs {dim} coefficients, got {len(a)}", path, no)
        affine.append((np.array(a), _scalar(rhs, (path, no))))
    for v, no in entries.get("smooth", []):
        try:
            g = dsl.parse(v, dim=dim)
        except dsl.DSLError as exc:
            raise ProblemError(f"smooth constraint: {exc}", path, no) from None
        if not g.is_smooth():
            raise ProblemError("smooth constraints may not use abs, max, min or norm2", path, no)
        smooth.append(g)
    return Cell(lower, upper, affine, smooth)


def parse_problem(text, path="<problem>"):
    secs = _sections(text, path)
    problems = [s for s in secs if s[0] == "problem"]
    if len(problems) != 1:
        raise ProblemError("exactly one [problem] section is required", path)
    _, _, pline, pe = problems[0]
    dim_text, dim_line = _one(pe, "dim", path, pline)
    dims = _ints(dim_text, (path, dim_line), "dim")
    if len(dims) != 1 or dims[0] < 1:
        raise ProblemError("dim must be a positive integer", path, dim_line)
    dim = dims[0]
    name = pe["name"][0][0] if "name" in pe else Path(path).stem

    objs = [s for s in secs if s[0] == "objectives"]
    if len(objs) != 1:
        raise ProblemError("exactly one [objectives] section is required", path)
    oe = objs[0][3]
    keys = sorted(oe, key=lambda k: int(k[1:]) if re.fullmatch(r"f\d+", k) else -1)
    for k in keys:
        if not re.fullmatch(r"f\d+", k):
            raise ProblemError(f"objective keys are f1, f2, ...; got {k!r}", path, oe[k][0][1])
    if [int(k[1:]) for k in keys] != list(range(1, len(keys) + 1)):
        raise ProblemError("objectives must be numbered f1..fs without gaps", path, objs[0][2])
    sources = [oe[k][0][0] for k in keys]
    exprs = []
    for k, src in zip(keys, sources):
        try:
            exprs.append(dsl.parse(src, dim=dim))
        except dsl.DSLError as exc:
            raise ProblemError(f"objective {k}: {exc}", path, oe[k][0][1]) from None
    f = dsl.VectorObjective(exprs, dim)

    cells = [_cell(e, dim, path) for kind, _, _, e in secs if kind == "cell"]
    periodic_secs = [s for s in secs if s[0] == "periodic"]
    if len(periodic_secs) > 1:
        raise ProblemError("at most one [periodic] section is allowed", path, periodic_secs[1][2])
    try:
        if periodic_secs:
            _, _, line, pe2 = periodic_secs[0]
            if not cells:
                raise ProblemError("[periodic] needs at least one [cell] to repeat", path, line)
            coord_text, cl = _one(pe2, "coord", path, line)
            coord = _ints(coord_text, (path, cl), "coord")[0]
            if not 1 <= coord <= dim:
                raise ProblemError(f"coord must be in 1..{dim}", path, cl)
            ptext, pl = _one(pe2, "period", path, line)
            period = _scalar(ptext, (path, pl))
            if not (np.isfinite(period) and period > 0):
                raise ProblemError("period must be positive and finite", path, pl)
            kmin = _ints(pe2["k_min"][0][0], (path, pe2["k_min"][0][1]), "k_min")[0] if "k_min" in pe2 else 0
            kmax = _ints(pe2["k_max"][0][0], (path, pe2["k_max"][0][1]), "k_max")[0] if "k_max" in pe2 else 10**9
            K = FeasibleSet(periodic=Periodic(period, coord - 1, cells, kmin, kmax), dim=dim)
        else:
            K = FeasibleSet(cells or [Cell.free(dim)], dim=dim)
    except FeasibleError as exc:
        raise ProblemError(str(exc), path) from None

    atext, aline = _one(pe, "anchor", path, pline)
    anchor = _point(atext, dim, (path, aline), "anchor")
    if not K.contains_many(anchor, 1e-7)[0]:
        raise ProblemError(f"anchor {point_str(anchor)} is not in the feasible set", path, aline)
    I = None
    if "index_set" in pe:
        v, no = pe["index_set"][0]
        I = _index_set(v, len(f), (path, no))
    window = res = None
    if "window" in pe:
        v, no = pe["window"][0]
        window = parse_window(v, dim, (path, no))
    if "resolution" in pe:
        v, no = pe["resolution"][0]
        res = parse_resolution(v, dim, (path, no))
    tol = DEFAULT_TOL
    if "tol" in pe:
        v, no = pe["tol"][0]
        tol = _scalar(v, (path, no))
        if not (np.isfinite(tol) and tol > 0):
            raise ProblemError("tol must be positive", path, no)
    at = _point(pe["at"][0][0], dim, (path, pe["at"][0][1]), "at") if "at" in pe else None
    desc = pe["description"][0][0] if "description" in pe else ""

    probes = []
    labels = set()
    for kind, label, line, e in secs:
        if kind != "probe":
            continue
        label = label or f"probe{len(probes) + 1}"
        if label in labels:
            raise ProblemError(f"duplicate probe label {label!r}", path, line)
        labels.add(label)
        coords = []
        for i in range(dim):
            key = f"x{i + 1}"
            if key not in e:
                raise ProblemError(f"probe {label!r} is missing {key}", path, line)
            v, no = e[key][0]
            try:
                coords.append(dsl.parse(v, param="t"))
            except dsl.DSLError as exc:
                raise ProblemError(f"probe {label!r} {key}: {exc}", path, no) from None
        extra = set(e) - {f"x{i + 1}" for i in range(dim)} - {"schedule"}
        if extra:
            k = sorted(extra)[0]
            raise ProblemError(f"unknown key {k!r} in [probe {label}]", path, e[k][0][1])
        sched = 2.0 ** np.arange(21)
        if "schedule" in e:
            v, no = e["schedule"][0]
            sched = _schedule(v, (path, no))
        probes.append(ProbePath(coords, sched, label))
    return ProblemFile(str(path), name, dim, sources, f, K, anchor, I, probes, window, res, tol, at, desc)


def _index_set(text, s, where):
    vals = _ints(text, where, "index set")
    if not vals or any(not 1 <= v <= s for v in vals):
        raise ProblemError(f"index set entries must lie in 1..{s}", *where)
    return sorted(set(v - 1 for v in vals))


def fixtures():
    """Bundled problem files, sorted by name."""
    return sorted(FIXTURE_DIR.glob("*.prob"))


def resolve_path(name):
    """The given path, or the bundled fixture of the same file name."""
    p = Path(name)
    if p.is_file():
        return p
    alt = FIXTURE_DIR / p.name
    if alt.is_file():
        return alt
    alt = FIXTURE_DIR / (p.name + ".prob")
    if alt.is_file():
        return alt
    raise ProblemError(f"problem file not found: {name}")


def load_problem(name):
    p = resolve_path(name)
    return parse_problem(p.read_text(), p.name)


# ---------------------------------------------------------------- formatting

def fmt(v):
    if v is None:
        return "none"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if v != v:
            return "nan"
        if v == 0:
            return "0"
        return f"{v:.12g}"
    if isinstance(v, str):
        return v
    arr = np.asarray(v)
    if arr.ndim == 0:
        return fmt(arr.item())
    return "(" + ", ".join(fmt(x) for x in arr.ravel()) + ")"


def fmt_indices(I):
    return ",".join(str(i + 1) for i in I) if I else "none"


class Out:
    def __init__(self):
        self.lines = []
        self.files = {}

    def head(self, name):
        if self.lines:
            self.lines.append("")
        self.lines.append(f"[{name}]")

    def kv(self, key, value):
        self.lines.append(f"{key} = {fmt(value)}")

    def text(self):
        return "\n".join(self.lines) + "\n"


# ---------------------------------------------------------------- commands

@dataclass
class Settings:
    tol: float
    window: list | None
    resolution: object
    at: np.ndarray | None
    indices: list
    probes: list
    threads: int


def _need_window(st):
    if st.window is None:
        raise ProblemError("this command needs a sampling window (--window or window = ... in [problem])")
    return st.window, st.resolution or 41


def _eval_point(pb, st):
    x = st.at if st.at is not None else (pb.at if pb.at is not None else pb.anchor)
    if not pb.K.contains_many(x, 1e-7)[0]:
        raise ProblemError(f"point {fmt(x)} is not in the feasible set")
    return x


def cmd_rabier(pb, st, out):
    x = _eval_point(pb, st)
    out.head("rabier")
    out.kv("point", x)
    v = nu(pb.f, pb.K, x, st.tol, allow_inexact=True)
    out.kv("nu", v.value)
    out.kv("verdict", v.verdict(st.tol))
    out.kv("exact", v.exact)
    out.kv("lower_bound_only", v.is_lower_bound_only)
    out.kv("junction", v.junction)
    out.kv("duality_gap", v.witness.gap)
    out.kv("converged", v.witness.converged)
    if pb.index_set is not None or st.indices != list(range(len(pb.f))):
        sub = sublevel(pb.f, pb.K, pb.anchor)
        out.kv("index_set", fmt_indices(st.indices))
        if sub.feasible.contains_many(x, 1e-7)[0]:
            r = nu(pb.f.subset(st.indices), sub.feasible, x, st.tol, allow_inexact=True)
            out.kv("nu_restricted", r.value)
            out.kv("nu_restricted_verdict", r.verdict(st.tol))
            out.kv("nu_restricted_lower_bound_only", r.is_lower_bound_only)
        else:
            out.kv("nu_restricted", "point-outside-sublevel-set")


def cmd_tangency(pb, st, out):
    x = _eval_point(pb, st)
    c = tangency_member(pb.f, pb.K, x, st.tol, allow_inexact=True)
    out.head("tangency")
    out.kv("point", x)
    out.kv("member", c.member)
    out.kv("residual", c.residual)
    out.kv("alpha", c.alpha)
    out.kv("mu", c.mu)
    out.kv("lower_bound_only", c.is_lower_bound_only)


def cmd_sections(pb, st, out):
    s = section_sample(pb.f, pb.K, pb.anchor, st.indices, tol=st.tol)
    sub = sublevel(pb.f, pb.K, pb.anchor)
    out.head("sections")
    out.kv("anchor", pb.anchor)
    out.kv("index_set", fmt_indices(st.indices))
    out.kv("anchor_values", pb.f.values(pb.anchor))
    out.kv("sublevel_cells", sub.cell_count)
    out.kv("verdict", s.verdict)
    out.kv("sublevel_bounded", s.sublevel_bounded)
    out.kv("sampled_points", len(s.points))
    for R, sp, ex in zip(s.radii, s.spreads, s.extents):
        out.kv(f"radius.{fmt(R)}", f"spread={fmt(sp)} extent={fmt(ex)}")
    for k, w in enumerate(s.witness):
        out.kv(f"witness.{k + 1}", w)
    lo = s.I_projection.min(axis=0) if len(s.I_projection) else None
    out.kv("section_min", lo)
    out.files["sections.csv"] = points_csv(s.points, s.images)


def cmd_index_set(pb, st, out):
    window, res = _need_window(st)
    r = index_set(pb.f, pb.K, pb.anchor, window, res, st.tol)
    out.head("index-set")
    out.kv("anchor", pb.anchor)
    out.kv("indices", fmt_indices(r.indices))
    out.kv("sample_size", r.sample_size)
    for i, d in enumerate(r.deviations):
        out.kv(f"deviation.f{i + 1}", d)
    for i in sorted(r.witnesses):
        out.kv(f"witness.f{i + 1}", r.witnesses[i])


def cmd_descent_chain(pb, st, out):
    window, res = _need_window(st)
    r = descent_chain(pb.f, pb.K, pb.anchor, window, res, tol=st.tol)
    out.head("descent-chain")
    out.kv("start", pb.anchor)
    for t in r.trace:
        out.kv(f"step.{t['step']}", f"x={fmt(t['x'])} f={fmt(t['f'])} constant={fmt_indices(t['indices'])}")
    out.kv("verdict", r.verdict)
    out.kv("x0", r.x0)
    out.kv("indices", fmt_indices(r.indices))


def cmd_front(pb, st, out):
    window, res = _need_window(st)
    fr = front_oracle(pb.f, pb.K, window, res)
    out.head("front")
    out.kv("grid_points", len(fr.points))
    out.kv("weak_points", int(fr.weak_mask.sum()))
    out.kv("strong_points", int(fr.strong_mask.sum()))
    strong = fr.strong
    for k in range(min(len(strong), FRONT_LISTED)):
        out.kv(f"strong.{k + 1}", strong[k])
    if len(strong) > FRONT_LISTED:
        out.kv("strong.more", len(strong) - FRONT_LISTED)
    keep = fr.weak_mask
    flags = ["strong" if s else "weak" for s in fr.strong_mask[keep]]
    out.files["front.csv"] = points_csv(fr.points[keep], fr.images[keep], flags)


def _traces(pb, st, y0, f=None, K=None):
    f = f or pb.f
    K = K or pb.K
    if st.threads > 1 and len(st.probes) > 1:
        with ThreadPoolExecutor(max_workers=st.threads) as pool:
            return list(pool.map(lambda p: trace_path(f, K, p, y0, st.tol), st.probes))
    return [trace_path(f, K, p, y0, st.tol) for p in st.probes]


def _need_probes(st):
    if not st.probes:
        raise ProbeError("no probe paths: add [probe LABEL] sections to the problem file")


def cmd_limit_sets(pb, st, out):
    if not st.probes and pb.K.is_bounded():
        out.head("limit-sets")
        out.kv("anchor", pb.anchor)
        out.kv("index_set", fmt_indices(st.indices))
        for kind in KINDS:
            out.kv(f"{kind}.verdict", "empty")
        out.kv("note", "feasible set is bounded, so no sequence runs off to infinity")
        return
    _need_probes(st)
    y0 = pb.f.values(pb.anchor)
    traces = _traces(pb, st, y0)
    out.head("limit-sets")
    out.kv("anchor", pb.anchor)
    out.kv("index_set", fmt_indices(st.indices))
    for tr in traces:
        out.kv(f"probe.{tr.label}", tr.rejected or "admissible")
        out.files[f"trace_{tr.label}.csv"] = trace_csv(tr)
    for kind in KINDS:
        est = estimate_limit_set(kind, pb.f, pb.K, y0, st.indices, st.probes, st.tol, traces)
        out.kv(f"{kind}.verdict", est.verdict)
        for w in est.accepted:
            out.kv(f"{kind}.witness.{w.label}",
                   f"limit={fmt(w.limit)} final={fmt(w.final_quantity)} flagged={fmt(w.flagged)}")
        for label in sorted(est.notes):
            if est.notes[label] != "accepted":
                out.kv(f"{kind}.note.{label}", est.notes[label])


def _render_existence(r, out):
    out.kv("theorem", r.theorem)
    out.kv("index_set", fmt_indices(r.indices))
    out.kv("anchor", r.x0)
    out.kv("section", r.section_verdict)
    for c in r.clauses:
        out.kv(f"clause.{c.name}", c.status)
        for k, e in enumerate(c.evidence):
            if isinstance(e, dict):
                out.kv(f"clause.{c.name}.{e['path']}",
                       f"limit={fmt(e['limit'])} matched_at={fmt(e['matched'])} flagged={fmt(e['flagged'])}")
            elif e is not None:
                out.kv(f"clause.{c.name}.{e.label}", f"limit={fmt(e.limit)} point={fmt(e.point)}")
        if c.note:
            out.kv(f"clause.{c.name}.note", c.note)
    if r.theorem in ("5.1", "5.4"):
        out.kv("critical_values_sampled", r.k0_size)
        out.kv("degenerate_points_skipped", r.k0_skipped)
    for key in ("grid_points", "weak", "strong", "weak_example"):
        if key in r.front:
            out.kv(f"front.{key}", r.front[key])
    for k, n in enumerate(r.notes):
        out.kv(f"note.{k + 1}", n)
    out.kv("conclusion", r.conclusion)


def _render_equivalence(eq, out):
    out.kv("index_set", fmt_indices(eq.indices))
    out.kv("anchor", eq.x0)
    out.kv("section", eq.section_verdict)
    for c, v in eq.verdicts.items():
        out.kv(f"condition.{c}", v.status)
        if v.witness is not None:
            out.kv(f"condition.{c}.witness", f"path={v.witness.label} limit={fmt(v.witness.limit)}")
        out.kv(f"condition.{c}.evidence", v.evidence)
    out.kv("agreement", eq.agreement)
    out.kv("sublevel_bounded", eq.compact)
    out.kv("witness_paths", ",".join(eq.witness_paths) if eq.witness_paths else "none")


def cmd_check(pb, st, out, theorem="5.1"):
    out.head(f"check {theorem}")
    if theorem == "4.4":
        if not pb.K.is_bounded():
            _need_probes(st)
        _render_equivalence(equivalence_harness_4_4(pb.f, pb.K, st.indices, pb.anchor, st.probes, st.tol), out)
        return
    window, res = _need_window(st)
    if theorem == "5.3c":
        if not pb.K.is_bounded():
            _need_probes(st)
        r = corollary_5_3_sufficiency(pb.f, pb.K, st.indices, pb.anchor, st.probes, st.tol, window, res)
    else:
        if not pb.K.is_bounded():
            _need_probes(st)
        fn = check_theorem_5_1 if theorem == "5.1" else check_theorem_5_4
        r = fn(pb.f, pb.K, st.indices, pb.anchor, st.probes, window, res, st.tol)
    _render_existence(r, out)


def cmd_equivalence(pb, st, out):
    out.head("equivalence")
    if not pb.K.is_bounded():
        _need_probes(st)
    _render_equivalence(equivalence_harness_4_4(pb.f, pb.K, st.indices, pb.anchor, st.probes, st.tol), out)


def cmd_report(pb, st, out):
    out.head("problem")
    out.kv("name", pb.name)
    if pb.description:
        out.kv("description", pb.description)
    out.kv("dim", pb.dim)
    for i, src in enumerate(pb.objectives):
        out.kv(f"f{i + 1}", dsl.to_source(pb.f[i]))
    out.kv("anchor", pb.anchor)
    out.kv("anchor_values", pb.f.values(pb.anchor))
    out.kv("index_set", fmt_indices(st.indices))
    out.kv("tol", st.tol)
    out.kv("bounded_feasible_set", pb.K.is_bounded())
    steps = [("rabier", cmd_rabier), ("tangency", cmd_tangency), ("sections", cmd_sections)]
    if st.window is not None:
        steps += [("index-set", cmd_index_set), ("descent-chain", cmd_descent_chain), ("front", cmd_front)]
    if st.probes or pb.K.is_bounded():
        steps.append(("limit-sets", cmd_limit_sets))
    if st.window is not None and (st.probes or pb.K.is_bounded()):
        for th in ("5.1", "5.4"):
            steps.append((f"check {th}", lambda p, s, o, th=th: cmd_check(p, s, o, th)))
    if st.probes or pb.K.is_bounded():
        steps.append(("equivalence", cmd_equivalence))
    for name, step in steps:
        mark = len(out.lines)
        try:
            step(pb, st, out)
        except (HypothesisError, ProbeError, SectionError, DegenerateCornerError) as exc:
            if len(out.lines) == mark:
                out.head(name)
            out.kv("refused", str(exc))


DISPATCH = {
    "rabier": cmd_rabier, "tangency": cmd_tangency, "sections": cmd_sections, "index-set": cmd_index_set,
    "descent-chain": cmd_descent_chain, "front": cmd_front, "limit-sets": cmd_limit_sets,
    "equivalence": cmd_equivalence, "report": cmd_report,
}


# ---------------------------------------------------------------- entry point

def build_parser():
    ap = argparse.ArgumentParser(prog="paretotame", description="Existence diagnostics for nonsmooth vector optimization problems.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("problem", help="problem file (bundled fixtures are found by file name)")
    ap.add_argument("--out", metavar="DIR", help="directory for report.txt and CSV artifacts")
    ap.add_argument("--tol", type=float, help="stationarity tolerance")
    ap.add_argument("--window", metavar="CSV", help="lo1,hi1,lo2,hi2,... sampling box")
    ap.add_argument("--res", metavar="INT[,INT...]", help="grid points per axis")
    ap.add_argument("--at", metavar="CSV", help="evaluation point for rabier and tangency")
    ap.add_argument("--theorem", choices=THEOREMS, default="5.1", help="checker used by the check command")
    ap.add_argument("--index-set", metavar="CSV", help="1-based objective indices")
    ap.add_argument("--probe", metavar="LABEL", action="append", help="restrict to the named probe path(s)")
    return ap


VALUE_FLAGS = ("--out", "--tol", "--window", "--res", "--at", "--theorem", "--index-set", "--probe")


def _glue_values(argv):
    """Join value flags with their argument so values such as '-2,2,-2,2' are not read as options."""
    out, k = [], 0
    while k < len(argv):
        a = argv[k]
        if a in VALUE_FLAGS and k + 1 < len(argv):
            out.append(f"{a}={argv[k + 1]}")
            k += 2
        else:
            out.append(a)
            k += 1
    return out


def _threads():
    raw = os.environ.get("PARETO_TAME_THREADS")
    if raw is None or raw.strip() == "":
        return 1
    if not re.fullmatch(r"\s*\d+\s*", raw) or int(raw) < 1:
        raise ProblemError(f"PARETO_TAME_THREADS must be a positive integer, got {raw!r}")
    return int(raw)


def settings(pb, args):
    where = ("command line", None)
    tol = pb.tol
    if args.tol is not None:
        if not (np.isfinite(args.tol) and args.tol > 0):
            raise ProblemError("--tol must be positive")
        tol = args.tol
    window = parse_window(args.window, pb.dim, ("--window", None)) if args.window else pb.window
    res = parse_resolution(args.res, pb.dim, ("--res", None)) if args.res else pb.resolution
    at = _point(args.at, pb.dim, ("--at", None), "--at") if args.at else None
    indices = _index_set(args.index_set, len(pb.f), ("--index-set", None)) if args.index_set else pb.indices()
    probes = pb.probes
    if args.probe:
        known = {p.label for p in pb.probes}
        missing = [lbl for lbl in args.probe if lbl not in known]
        if missing:
            raise ProblemError(f"unknown probe label(s) {', '.join(missing)}; known: {', '.join(sorted(known)) or 'none'}", *where)
        probes = [p for p in pb.probes if p.label in args.probe]
    return Settings(tol, window, res, at, indices, probes, _threads())


def run(argv=None, stdout=None, stderr=None):
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    ap = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = ap.parse_args(_glue_values(argv))
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    out = Out()
    try:
        pb = load_problem(args.problem)
        st = settings(pb, args)
        with np.errstate(all="ignore"):
            if args.command == "check":
                cmd_check(pb, st, out, args.theorem)
            else:
                DISPATCH[args.command](pb, st, out)
    except (ProblemError, dsl.DSLError, SectionError, ProbeError, HypothesisError) as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_INPUT
    except DegenerateCornerError as exc:
        print(f"numerical failure: {exc}", file=stderr)
        return EXIT_NUMERIC
    except FeasibleError as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001 - any other failure is reported as numerical
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=stderr)
        return EXIT_NUMERIC
    text = out.text()
    stdout.write(text)
    if args.out:
        d = Path(args.out)
        try:
            d.mkdir(parents=True, exist_ok=True)
            (d / "report.txt").write_text(text)
            for name in sorted(out.files):
                (d / name).write_text(out.files[name], newline="")
        except OSError as exc:
            print(f"error: cannot write to {d}: {exc}", file=stderr)
            return EXIT_INPUT
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
