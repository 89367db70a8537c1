"""Crossing diagrams and Gauss-code reduction.

A cable configuration projects to a planar diagram whose crossings carry
over/under and orientation sign. Open curves are closed as long knots: the
two ends are joined by an arc lifted above the whole diagram, which adds no
entries to the Gauss code, so the code is simply treated as cyclic.

Reduction applies crossing-removing Reidemeister moves (R1, R2, and the
descending-loop generalization of R1) to a fixed point, then searches
bounded sequences of R3 slides that enable further removals.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .engine import polyline_crossings


class DegenerateProjection(RuntimeError):
    """All perturbation retries still hit a non-generic projection."""


@dataclass
class Crossing:
    cid: int
    over: bool
    sign: int
    s: float

    def token(self) -> str:
        return f"{'O' if self.over else 'U'}{self.cid}{'+' if self.sign >= 0 else '-'}"


@dataclass
class CrossingDiagram:
    crossings: list[Crossing] = field(default_factory=list)
    open_curve: bool = True

    @property
    def crossing_count(self) -> int:
        return len(self.crossings) // 2

    def gauss_code(self) -> str:
        return " ".join(c.token() for c in self.crossings)

    def validate(self) -> None:
        seen: dict[int, list[Crossing]] = {}
        last_s = -math.inf
        for c in self.crossings:
            if c.s < last_s:
                raise ValueError("crossing arclengths must be non-decreasing")
            last_s = c.s
            seen.setdefault(c.cid, []).append(c)
        for cid, pair in seen.items():
            if len(pair) != 2:
                raise ValueError(f"crossing {cid} appears {len(pair)} times, expected 2")
            if pair[0].over == pair[1].over:
                raise ValueError(f"crossing {cid} must appear once over and once under")
            if pair[0].sign != pair[1].sign:
                raise ValueError(f"crossing {cid} has inconsistent signs")

    def parity_ok(self) -> bool:
        """Gauss parity: an even number of entries strictly between the two
        passages of every crossing (holds for every realizable closed code)."""
        index = {}
        for k, c in enumerate(self.crossings):
            if c.cid in index:
                if (k - index[c.cid] - 1) % 2 != 0:
                    return False
            else:
                index[c.cid] = k
        return True


def parse_gauss_code(text: str) -> CrossingDiagram:
    crossings = []
    toks = text.split()
    for k, tok in enumerate(toks):
        over = tok[0] in ("O", "o")
        sign = 1 if tok.endswith("+") else -1
        cid = int(tok[1:-1]) if tok[-1] in "+-" else int(tok[1:])
        crossings.append(Crossing(cid, over, sign, k / max(len(toks), 1)))
    d = CrossingDiagram(crossings)
    d.validate()
    return d


def _projection_basis(direction: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    w = np.asarray(direction, dtype=float)
    w = w / np.linalg.norm(w)
    helper = np.array([1.0, 0.0, 0.0])
    if abs(w @ helper) > 0.9:
        helper = np.array([0.0, 1.0, 0.0])
    u = np.cross(w, helper)
    u /= np.linalg.norm(u)
    v = np.cross(w, u)
    return u, v, w


def _rotate(vec: np.ndarray, axis: np.ndarray, angle: float) -> np.ndarray:
    axis = axis / np.linalg.norm(axis)
    c, s = math.cos(angle), math.sin(angle)
    return vec * c + np.cross(axis, vec) * s + axis * (axis @ vec) * (1 - c)


def extract_diagram(cable, projection_dir=(0.0, 0.0, -1.0), s_offset: float = 0.0,
                    s_scale: float = 1.0, perturb_retries: int = 8) -> CrossingDiagram:
    """Project the cable along projection_dir and report all transverse
    self-crossings with over/under from depth and sign from orientation.

    Near-degenerate projections (parallel segments, endpoint grazes) are
    retried with directions perturbed by up to 0.5 degrees.
    """
    nodes = cable.nodes if hasattr(cable, "nodes") else np.asarray(cable, dtype=float)
    n = nodes.shape[0]
    base = np.asarray(projection_dir, dtype=float)
    base = base / np.linalg.norm(base)
    u0, v0, _ = _projection_basis(base)
    for attempt in range(perturb_retries + 1):
        if attempt == 0:
            d = base
        else:
            step = math.radians(0.0625 * attempt)  # up to 0.5 degrees at attempt 8
            axis = u0 if attempt % 2 == 1 else v0
            d = _rotate(base, axis, step if (attempt // 2) % 2 == 0 else -step)
        u, v, w = _projection_basis(d)
        seg = np.diff(nodes, axis=0)
        seg_norm = np.linalg.norm(seg, axis=1)
        ok = seg_norm > 1e-12
        if np.any(np.abs(seg[ok] @ w) / seg_norm[ok] > 1.0 - 1e-6):
            continue  # a segment is parallel to the projection within tolerance
        xy = np.column_stack([nodes @ u, nodes @ v])
        h = -(nodes @ w)
        count, data, degenerate = polyline_crossings(xy, h)
        if degenerate:
            continue
        # equal-depth passages cannot be ordered: degenerate as well
        if count and np.any(np.abs(data[:count, 4] - data[:count, 5]) < 1e-9):
            continue
        crossings: list[Crossing] = []
        for k in range(count):
            i, j, ti, tj, hi, hj = data[k]
            i, j = int(i), int(j)
            si = s_offset + s_scale * (i + ti) / (n - 1)
            sj = s_offset + s_scale * (j + tj) / (n - 1)
            di = xy[i + 1] - xy[i]
            dj = xy[j + 1] - xy[j]
            if hi > hj:
                d_over, d_under = di, dj
            else:
                d_over, d_under = dj, di
            sign = 1 if (d_over[0] * d_under[1] - d_over[1] * d_under[0]) > 0 else -1
            crossings.append(Crossing(k + 1, hi > hj, sign, si))
            crossings.append(Crossing(k + 1, hj > hi, sign, sj))
        crossings.sort(key=lambda c: c.s)
        # relabel ids in first-passage order for a stable code
        relabel: dict[int, int] = {}
        for c in crossings:
            if c.cid not in relabel:
                relabel[c.cid] = len(relabel) + 1
        for c in crossings:
            c.cid = relabel[c.cid]
        diag = CrossingDiagram(crossings, open_curve=True)
        diag.validate()
        return diag
    raise DegenerateProjection(
        f"no generic projection after {perturb_retries} perturbation retries")


# -- reduction ----------------------------------------------------------------
# Internal form: cyclic list of (cid, over_bool) entries; signs kept per cid.

def _to_code(diagram: CrossingDiagram):
    code = [(c.cid, c.over) for c in diagram.crossings]
    signs = {c.cid: c.sign for c in diagram.crossings}
    return code, signs


def _simplify(code: list) -> list:
    """Apply crossing-removing moves to a fixed point: R1 (adjacent kink),
    R2 (matched bigon adjacency), and descending-loop removal (a loop whose
    span passes entirely over or entirely under everything it meets)."""
    code = list(code)
    changed = True
    while changed and code:
        changed = False
        n = len(code)
        # R1: the two passages of one crossing are cyclically adjacent
        for k in range(n):
            a = code[k]
            b = code[(k + 1) % n]
            if a[0] == b[0]:
                keep = [code[i] for i in range(n) if i != k and i != (k + 1) % n]
                code = keep
                changed = True
                break
        if changed:
            continue
        # R2: a pair of crossings adjacent with uniform polarity at both sites
        sites: dict[frozenset, tuple[int, bool]] = {}
        for k in range(n):
            a = code[k]
            b = code[(k + 1) % n]
            if a[0] != b[0] and a[1] == b[1]:
                key = frozenset((a[0], b[0]))
                if key in sites and sites[key][1] != a[1]:
                    drop = {a[0], b[0]}
                    code = [e for e in code if e[0] not in drop]
                    changed = True
                    break
                sites.setdefault(key, (k, a[1]))
        if changed:
            continue
        # descending loop: between the two passages of c, all entries share
        # one polarity, so the whole loop lifts off along with its crossings
        pos: dict[int, list[int]] = {}
        for k, e in enumerate(code):
            pos.setdefault(e[0], []).append(k)
        for cid, (k1, k2) in pos.items():
            for lo, hi in ((k1, k2), (k2, k1 + n)):
                span = [code[i % n] for i in range(lo + 1, hi)]
                if not span:
                    continue
                if all(e[1] for e in span) or all(not e[1] for e in span):
                    drop = {cid} | {e[0] for e in span}
                    code = [e for e in code if e[0] not in drop]
                    changed = True
                    break
            if changed:
                break
    return code


def _canonical(code: list) -> tuple:
    """Rotation-invariant canonical form with ids relabeled by first passage."""
    n = len(code)
    if n == 0:
        return ()
    best = None
    for shift in range(n):
        relabel: dict[int, int] = {}
        out = []
        for k in range(n):
            cid, over = code[(k + shift) % n]
            if cid not in relabel:
                relabel[cid] = len(relabel) + 1
            out.append((relabel[cid], over))
        t = tuple(out)
        if best is None or t < best:
            best = t
    return best


def _r3_moves(code: list):
    """Triangle slides: three pairwise adjacencies covering three crossings,
    with one all-over side and one all-under side (the transitive pattern)."""
    n = len(code)
    adjacency = []
    for k in range(n):
        a = code[k]
        b = code[(k + 1) % n]
        if a[0] != b[0]:
            adjacency.append((k, (k + 1) % n, a[0], b[0], a[1], b[1]))
    moves = []
    for tri in combinations(adjacency, 3):
        entries = set()
        for k0, k1, *_ in tri:
            entries.add(k0)
            entries.add(k1)
        if len(entries) != 6:
            continue
        cids: dict[int, int] = {}
        pairs = []
        for _, _, ca, cb, _, _ in tri:
            cids[ca] = cids.get(ca, 0) + 1
            cids[cb] = cids.get(cb, 0) + 1
            pairs.append(frozenset((ca, cb)))
        if len(cids) != 3 or any(v != 2 for v in cids.values()):
            continue
        if len(set(pairs)) != 3:
            continue
        over_sides = sum(1 for _, _, _, _, oa, ob in tri if oa and ob)
        under_sides = sum(1 for _, _, _, _, oa, ob in tri if not oa and not ob)
        if over_sides == 1 and under_sides == 1:
            moves.append(tuple((k0, k1) for k0, k1, *_ in tri))
    return moves


def _apply_r3(code: list, move) -> list:
    out = list(code)
    for k0, k1 in move:
        out[k0], out[k1] = out[k1], out[k0]
    return out


def reduce_code(code: list, state_cap: int = 10000) -> list:
    """Minimal code reachable through R1/R2/descending-loop removals plus a
    bounded breadth-first search over R3 slides."""
    start = _simplify(code)
    if not start or len(start) > 24:
        return start
    best = start
    seen = {_canonical(start)}
    queue = [start]
    while queue and len(seen) < state_cap:
        cur = queue.pop(0)
        for move in _r3_moves(cur):
            nxt = _simplify(_apply_r3(cur, move))
            key = _canonical(nxt)
            if key in seen:
                continue
            seen.add(key)
            if len(nxt) < len(best):
                best = nxt
            if not nxt:
                return nxt
            if len(nxt) <= 24:
                queue.append(nxt)
    return best


def reduce_diagram(diagram: CrossingDiagram, state_cap: int = 10000) -> CrossingDiagram:
    """Fixed point of crossing-decreasing Reidemeister simplification with a
    bounded R3 search. The result never has more crossings than the input."""
    code, signs = _to_code(diagram)
    reduced = reduce_code(code, state_cap)
    relabel: dict[int, int] = {}
    out = []
    for k, (cid, over) in enumerate(reduced):
        if cid not in relabel:
            relabel[cid] = len(relabel) + 1
        out.append(Crossing(relabel[cid], over, signs.get(cid, 1),
                            k / max(len(reduced), 1)))
    return CrossingDiagram(out, open_curve=diagram.open_curve)


def reduced_crossing_count(cable_or_nodes, projection_dir=(0.0, 0.0, -1.0),
                           state_cap: int = 10000) -> int:
    """Crossings remaining after reduction of the projected diagram."""
    diag = extract_diagram(cable_or_nodes, projection_dir)
    return reduce_diagram(diag, state_cap).crossing_count


KNOT_CLASS_BY_COUNT = {3: "OVERHAND", 4: "FIGURE_EIGHT"}


def classify_count(count: int) -> str:
    if count == 0:
        return "NONE"
    return KNOT_CLASS_BY_COUNT.get(count, "UNKNOWN")
