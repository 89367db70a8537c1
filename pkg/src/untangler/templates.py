"""Parametric knot templates and cable path construction.

Overhand knots come from the open trefoil curve, figure-eights from the
standard (2 + cos 2t, sin 4t) curve. Templates are cut open at their most
outward point, given straight tails, scaled to a target projected diameter
and spliced into a meandering backbone laid out on the table.
"""
from __future__ import annotations

import math

import numpy as np

OVERHAND = "OVERHAND"
FIGURE_EIGHT = "FIGURE_EIGHT"


def _trefoil(t: np.ndarray) -> np.ndarray:
    return np.column_stack([
        np.sin(t) + 2.0 * np.sin(2.0 * t),
        np.cos(t) - 2.0 * np.cos(2.0 * t),
        -np.sin(3.0 * t),
    ])


def _figure_eight(t: np.ndarray) -> np.ndarray:
    return np.column_stack([
        (2.0 + np.cos(2.0 * t)) * np.cos(3.0 * t),
        (2.0 + np.cos(2.0 * t)) * np.sin(3.0 * t),
        np.sin(4.0 * t),
    ])


def _open_template(curve_fn, diameter: float, tail: float, z_floor: float,
                   samples: int = 720) -> np.ndarray:
    """Open the closed curve at its most radially outward point, extend both
    ends with straight tails, scale so the projected bbox max side equals
    `diameter` and rest the lowest strand on z_floor."""
    t = np.linspace(0.0, 2.0 * math.pi, samples, endpoint=False)
    pts = curve_fn(t)
    cut = int(np.argmax(pts[:, 0] ** 2 + pts[:, 1] ** 2))
    pts = np.roll(pts, -cut - 1, axis=0)  # open gap right after the outer point
    ext = np.ptp(pts[:, :2], axis=0).max()
    scale = diameter / ext
    pts = pts * scale
    # tails exit radially away from the knot so they never cross it or
    # each other; ramp them down to the table
    centroid = pts.mean(axis=0)
    d0 = pts[0] - centroid
    d0[2] = 0.0
    d0 /= np.linalg.norm(d0)
    d1 = pts[-1] - centroid
    d1[2] = 0.0
    d1 /= np.linalg.norm(d1)
    pts[:, 2] += z_floor - pts[:, 2].min()
    steps = 12
    step = tail / steps
    head = []
    foot = []
    for k in range(steps):
        f = (k + 1) / steps
        h = pts[0] + d0 * step * (k + 1)
        h[2] = pts[0][2] * (1 - f) + z_floor * f
        head.append(h)
        g = pts[-1] + d1 * step * (k + 1)
        g[2] = pts[-1][2] * (1 - f) + z_floor * f
        foot.append(g)
    return np.vstack([head[::-1], pts, foot])


def knot_template(kind: str, diameter: float, tail: float = 0.08,
                  z_floor: float = 0.0025) -> np.ndarray:
    if kind == OVERHAND:
        return _open_template(_trefoil, diameter, tail, z_floor)
    if kind == FIGURE_EIGHT:
        return _open_template(_figure_eight, diameter, tail, z_floor)
    raise ValueError(f"unknown knot kind {kind!r}")


def knot_arc_length(kind: str, diameter: float) -> float:
    """Cable arclength a knot template consumes, tails included."""
    t = knot_template(kind, diameter)
    return float(polyline_arclength(t)[-1])


def polyline_arclength(pts: np.ndarray) -> np.ndarray:
    d = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(d)])


def point_on_polyline(pts: np.ndarray, acc: np.ndarray, s: float) -> np.ndarray:
    s = min(max(s, 0.0), acc[-1])
    i = int(np.searchsorted(acc, s, side="right") - 1)
    i = min(i, len(pts) - 2)
    seg = acc[i + 1] - acc[i]
    t = 0.0 if seg < 1e-12 else (s - acc[i]) / seg
    return (1 - t) * pts[i] + t * pts[i + 1]


def resample_polyline(pts: np.ndarray, count: int) -> np.ndarray:
    acc = polyline_arclength(pts)
    targets = np.linspace(0.0, acc[-1], count)
    return np.vstack([point_on_polyline(pts, acc, s) for s in targets])


def trim_polyline(pts: np.ndarray, length: float) -> np.ndarray:
    acc = polyline_arclength(pts)
    if acc[-1] <= length:
        # extend straight along the final direction
        d = pts[-1] - pts[-2]
        d /= max(np.linalg.norm(d), 1e-12)
        extra = length - acc[-1]
        steps = max(int(extra / 0.02) + 1, 1)
        add = [pts[-1] + d * extra * (k + 1) / steps for k in range(steps)]
        return np.vstack([pts, add])
    keep = acc <= length
    out = pts[keep]
    end = point_on_polyline(pts, acc, length)
    return np.vstack([out, end])


def wander_path(length: float, bounds: tuple, rng: np.random.Generator,
                step: float = 0.02, z: float = 0.0025, margin: float = 0.14) -> np.ndarray:
    """Random meander of given arclength inside the workspace rectangle,
    steered back toward the interior near the boundary."""
    xmin, ymin, xmax, ymax = bounds
    xmin += margin
    ymin += margin
    xmax -= margin
    ymax -= margin
    cx, cy = 0.5 * (xmin + xmax), 0.5 * (ymin + ymax)
    x = rng.uniform(xmin, xmin + 0.2)
    y = rng.uniform(ymin + 0.1, ymax - 0.1)
    heading = rng.uniform(-0.4, 0.4)
    pts = [(x, y, z)]
    total = 0.0
    while total < length:
        # steer toward the interior when close to the boundary
        tx = min(x - xmin, xmax - x)
        ty = min(y - ymin, ymax - y)
        prox = min(tx, ty)
        if prox < 0.12:
            desired = math.atan2(cy - y, cx - x)
            diff = (desired - heading + math.pi) % (2 * math.pi) - math.pi
            heading += np.clip(diff, -0.35, 0.35) * (1.0 - prox / 0.12)
        heading += rng.normal(0.0, 0.12)
        x += step * math.cos(heading)
        y += step * math.sin(heading)
        x = min(max(x, xmin - 0.02), xmax + 0.02)
        y = min(max(y, ymin - 0.02), ymax + 0.02)
        pts.append((x, y, z))
        total += step
    return np.asarray(pts)


def splice_template(path: np.ndarray, template: np.ndarray,
                    center_s: float) -> tuple[np.ndarray, float]:
    """Replace a window of the path with the template so that the template's
    arclength midpoint lands at path arclength center_s. The window width is
    solved so the window chord matches the template chord; the template is
    rotated about z to align. Returns (new_path, growth) where growth is the
    arclength added downstream of the splice."""
    acc = polyline_arclength(path)
    chord_vec = template[-1] - template[0]
    chord_len = float(np.linalg.norm(chord_vec[:2]))
    t_len = polyline_arclength(template)[-1]
    window_center = center_s
    w = chord_len
    for _ in range(3):
        lo_w, hi_w = chord_len, chord_len + 0.8
        for _ in range(40):
            w = 0.5 * (lo_w + hi_w)
            p1 = point_on_polyline(path, acc, window_center - w / 2)
            p2 = point_on_polyline(path, acc, window_center + w / 2)
            c = float(np.linalg.norm((p2 - p1)[:2]))
            if c < chord_len:
                lo_w = w
            else:
                hi_w = w
        # template arc-midpoint sits at window_start + t_len/2; steer it to center_s
        window_center += center_s - (window_center - w / 2 + t_len / 2)
    s1, s2 = window_center - w / 2, window_center + w / 2
    p1 = point_on_polyline(path, acc, s1)
    p2 = point_on_polyline(path, acc, s2)
    target = p2 - p1
    ang = math.atan2(target[1], target[0]) - math.atan2(chord_vec[1], chord_vec[0])
    ca, sa = math.cos(ang), math.sin(ang)
    rot = np.array([[ca, -sa, 0.0], [sa, ca, 0.0], [0.0, 0.0, 1.0]])
    placed = (template - template[0]) @ rot.T
    placed[:, 0] += p1[0]
    placed[:, 1] += p1[1]
    placed[:, 2] = template[:, 2]  # templates already rest on the table
    head = path[acc < s1]
    foot = path[acc > s2]
    return np.vstack([head, placed, foot]), t_len - w


def layer_plane_crossings(path: np.ndarray, radius: float) -> np.ndarray:
    """Lift the later strand over the earlier one wherever the path crosses
    itself at (nearly) equal height, so the layout is physically stacked."""
    from .engine import polyline_crossings

    out = path.copy()
    acc = polyline_arclength(out)
    count, data, _ = polyline_crossings(np.ascontiguousarray(out[:, :2]), out[:, 2])
    half_width = 0.04
    lift = np.zeros(len(out))
    for k in range(count):
        i, j, ti, tj, hi, hj = data[k]
        if abs(hi - hj) > 2.5 * radius:
            continue  # already stacked (template interior)
        i, j = int(i), int(j)
        s_late = acc[j] + tj * (acc[j + 1] - acc[j])
        need = (hi - hj) + 2.0 * radius + 0.001
        sel = np.abs(acc - s_late) < half_width
        bump = need * 0.5 * (1.0 + np.cos(np.pi * (acc[sel] - s_late) / half_width))
        lift[sel] = np.maximum(lift[sel], bump)
    out[:, 2] += lift
    return out


def build_cable_path(length: float, node_count: int, bounds: tuple,
                     rng: np.random.Generator,
                     knots: list | None = None, z: float = 0.0025,
                     radius: float = 0.0025) -> np.ndarray:
    """Cable node layout on the table: a meander with optional knot templates
    spliced at given arclength centers. Plane self-crossings of the meander
    are stacked vertically so the initial state is collision-free.

    knots: list of (kind, center_arclength_m, diameter_m).
    """
    ordered = sorted(knots or [], key=lambda k: k[1])
    templates = [knot_template(kind, dia, z_floor=z) for kind, _, dia in ordered]
    # arclength on the spliced path is physical cable arclength, so centers
    # are placed directly and the surplus past `length` is trimmed away
    path = wander_path(length + 0.3, bounds, rng, z=z)
    for (kind, center_s, dia), template in zip(ordered, templates):
        end = center_s + polyline_arclength(template)[-1] / 2.0
        if end > length - 0.05:
            raise ValueError(
                f"knot at {center_s:.2f} m needs cable up to {end:.2f} m; "
                f"only {length:.2f} m available")
        path, _ = splice_template(path, template, center_s)
    path = trim_polyline(path, length)
    path = layer_plane_crossings(path, radius)
    return resample_polyline(path, node_count)
