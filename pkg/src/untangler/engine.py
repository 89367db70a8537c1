"""Numerical kernels: the position-based cable solver, the orthographic
capsule rasterizer, polyline crossing extraction, and the mask BFS used by
visual tracing.

Everything here is numba-compiled, allocation-light and strictly sequential,
which keeps stepping deterministic (bit-identical reruns for identical
inputs on the same machine).
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

# gripper modes (shared with sim.py)
MODE_OPEN = 0
MODE_PINCH = 1
MODE_CAGE = 2

_MAX_PAIRS = 8192


@njit(cache=True, inline="always")
def _seg_point_dist2(px, py, pz, ax, ay, az, bx, by, bz):
    """Squared distance from point p to segment ab, plus the segment parameter."""
    abx, aby, abz = bx - ax, by - ay, bz - az
    apx, apy, apz = px - ax, py - ay, pz - az
    denom = abx * abx + aby * aby + abz * abz
    if denom < 1e-18:
        t = 0.0
    else:
        t = (apx * abx + apy * aby + apz * abz) / denom
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
    dx = ax + t * abx - px
    dy = ay + t * aby - py
    dz = az + t * abz - pz
    return dx * dx + dy * dy + dz * dz, t


@njit(cache=True, inline="always")
def _seg_seg_closest(p1x, p1y, p1z, q1x, q1y, q1z, p2x, p2y, p2z, q2x, q2y, q2z):
    """Closest-point parameters (s, t) and squared distance between two segments."""
    d1x, d1y, d1z = q1x - p1x, q1y - p1y, q1z - p1z
    d2x, d2y, d2z = q2x - p2x, q2y - p2y, q2z - p2z
    rx, ry, rz = p1x - p2x, p1y - p2y, p1z - p2z
    a = d1x * d1x + d1y * d1y + d1z * d1z
    e = d2x * d2x + d2y * d2y + d2z * d2z
    f = d2x * rx + d2y * ry + d2z * rz
    EPS = 1e-18
    if a <= EPS and e <= EPS:
        s = 0.0
        t = 0.0
    elif a <= EPS:
        s = 0.0
        t = min(max(f / e, 0.0), 1.0)
    else:
        c = d1x * rx + d1y * ry + d1z * rz
        if e <= EPS:
            t = 0.0
            s = min(max(-c / a, 0.0), 1.0)
        else:
            b = d1x * d2x + d1y * d2y + d1z * d2z
            denom = a * e - b * b
            if denom > EPS:
                s = min(max((b * f - c * e) / denom, 0.0), 1.0)
            else:
                s = 0.0
            t = (b * s + f) / e
            if t < 0.0:
                t = 0.0
                s = min(max(-c / a, 0.0), 1.0)
            elif t > 1.0:
                t = 1.0
                s = min(max((b - c) / a, 0.0), 1.0)
    cx = p1x + s * d1x - p2x - t * d2x
    cy = p1y + s * d1y - p2y - t * d2y
    cz = p1z + s * d1z - p2z - t * d2z
    return s, t, cx * cx + cy * cy + cz * cz


@njit(cache=True)
def step_kernel(
    pos,
    vel,
    rest_len,
    radius,
    dt,
    n_iter,
    gravity,
    damping,
    table_z,
    mu_table,
    mu_cable,
    bend_k,
    g_mode,
    g_pos,
    g_attach,
    cage_radius,
    body_radius,
    g_resid,
):
    """One position-based dynamics step. Mutates pos/vel/g_attach, fills
    g_resid with per-arm constraint residuals (meters), returns max node
    displacement over the step."""
    n = pos.shape[0]
    nseg = n - 1
    prev = np.empty((n, 3))
    pen0 = np.empty(n)
    ftl_corr = np.zeros((n, 3))

    # predict
    for i in range(n):
        prev[i, 0] = pos[i, 0]
        prev[i, 1] = pos[i, 1]
        prev[i, 2] = pos[i, 2]
        vel[i, 2] -= gravity * dt
        vel[i, 0] *= damping
        vel[i, 1] *= damping
        vel[i, 2] *= damping
        pos[i, 0] += vel[i, 0] * dt
        pos[i, 1] += vel[i, 1] * dt
        pos[i, 2] += vel[i, 2] * dt
        p = table_z + radius - pos[i, 2]
        pen0[i] = p if p > 0.0 else 0.0

    # broad phase: candidate self-collision segment pairs on predicted positions
    pair_i = np.empty(_MAX_PAIRS, np.int32)
    pair_j = np.empty(_MAX_PAIRS, np.int32)
    cutoff = 2.0 * radius + rest_len + 0.004
    cutoff2 = cutoff * cutoff
    npairs = 0
    for i in range(nseg):
        mix = 0.5 * (pos[i, 0] + pos[i + 1, 0])
        miy = 0.5 * (pos[i, 1] + pos[i + 1, 1])
        miz = 0.5 * (pos[i, 2] + pos[i + 1, 2])
        for j in range(i + 2, nseg):
            dx = mix - 0.5 * (pos[j, 0] + pos[j + 1, 0])
            dy = miy - 0.5 * (pos[j, 1] + pos[j + 1, 1])
            dz = miz - 0.5 * (pos[j, 2] + pos[j + 1, 2])
            if dx * dx + dy * dy + dz * dz < cutoff2 and npairs < _MAX_PAIRS:
                pair_i[npairs] = i
                pair_j[npairs] = j
                npairs += 1

    two_r = 2.0 * radius
    bend_rest = 2.0 * rest_len
    contact_floor = table_z + radius

    for it in range(n_iter):
        # gripper constraints first: the gap left after the cable constraints
        # re-pull the attachment is the measured resistance
        for a in range(2):
            mode = g_mode[a]
            if mode == MODE_OPEN:
                continue
            gx, gy, gz = g_pos[a, 0], g_pos[a, 1], g_pos[a, 2]
            if mode == MODE_CAGE:
                # slide the attachment to the local distance minimum
                k = int(g_attach[a])
                if k < 0:
                    k = 0
                if k > nseg - 1:
                    k = nseg - 1
                dcur, _ = _seg_point_dist2(
                    gx, gy, gz,
                    pos[k, 0], pos[k, 1], pos[k, 2],
                    pos[k + 1, 0], pos[k + 1, 1], pos[k + 1, 2],
                )
                for _walk in range(nseg):
                    moved = False
                    if k > 0:
                        dprev, _ = _seg_point_dist2(
                            gx, gy, gz,
                            pos[k - 1, 0], pos[k - 1, 1], pos[k - 1, 2],
                            pos[k, 0], pos[k, 1], pos[k, 2],
                        )
                        if dprev < dcur:
                            k -= 1
                            dcur = dprev
                            moved = True
                    if not moved and k < nseg - 1:
                        dnext, _ = _seg_point_dist2(
                            gx, gy, gz,
                            pos[k + 1, 0], pos[k + 1, 1], pos[k + 1, 2],
                            pos[k + 2, 0], pos[k + 2, 1], pos[k + 2, 2],
                        )
                        if dnext < dcur:
                            k += 1
                            dcur = dnext
                            moved = True
                    if not moved:
                        break
                _, tpar = _seg_point_dist2(
                    gx, gy, gz,
                    pos[k, 0], pos[k, 1], pos[k, 2],
                    pos[k + 1, 0], pos[k + 1, 1], pos[k + 1, 2],
                )
                g_attach[a] = k + tpar
                i0 = k
                tfrac = tpar
            else:
                att = g_attach[a]
                i0 = int(att)
                if i0 > nseg - 1:
                    i0 = nseg - 1
                tfrac = att - i0

            w0 = 1.0 - tfrac
            w1 = tfrac
            cx = pos[i0, 0] * w0 + pos[i0 + 1, 0] * w1
            cy = pos[i0, 1] * w0 + pos[i0 + 1, 1] * w1
            cz = pos[i0, 2] * w0 + pos[i0 + 1, 2] * w1
            dx = cx - gx
            dy = cy - gy
            dz = cz - gz
            d = math.sqrt(dx * dx + dy * dy + dz * dz)
            if mode == MODE_PINCH:
                excess = d
            else:
                excess = d - cage_radius
            if excess > 0.0 and d > 1e-12:
                denom = w0 * w0 + w1 * w1
                lam = excess / (d * denom)
                pos[i0, 0] -= dx * lam * w0
                pos[i0, 1] -= dy * lam * w0
                pos[i0, 2] -= dz * lam * w0
                pos[i0 + 1, 0] -= dx * lam * w1
                pos[i0 + 1, 1] -= dy * lam * w1
                pos[i0 + 1, 2] -= dz * lam * w1

            # gripper body blocks strands other than the captured one
            att = g_attach[a]
            for i in range(n):
                sep = att - i
                if -4.0 < sep < 4.0:
                    continue
                dx = pos[i, 0] - gx
                dy = pos[i, 1] - gy
                dz = pos[i, 2] - gz
                d2b = dx * dx + dy * dy + dz * dz
                if d2b < body_radius * body_radius and d2b > 1e-18:
                    db = math.sqrt(d2b)
                    push = (body_radius - db) / db
                    pos[i, 0] += dx * push
                    pos[i, 1] += dy * push
                    pos[i, 2] += dz * push

        # follow-the-leader from pinch anchors on the last iteration only: a
        # single exactness snap outward from rigidly held material points
        # (running it every iteration amplifies direction noise down the chain)
        for a in range(2):
            if g_mode[a] != MODE_PINCH or it != n_iter - 1:
                continue
            att = g_attach[a]
            i0 = int(att)
            if i0 > nseg - 1:
                i0 = nseg - 1
            tfrac = att - i0
            gx, gy, gz = g_pos[a, 0], g_pos[a, 1], g_pos[a, 2]
            dx = pos[i0 + 1, 0] - pos[i0, 0]
            dy = pos[i0 + 1, 1] - pos[i0, 1]
            dz = pos[i0 + 1, 2] - pos[i0, 2]
            d = math.sqrt(dx * dx + dy * dy + dz * dz)
            if d < 1e-12:
                dx, dy, dz, d = 1.0, 0.0, 0.0, 1.0
            ux, uy, uz = dx / d, dy / d, dz / d
            nx0 = gx - tfrac * rest_len * ux
            ny0 = gy - tfrac * rest_len * uy
            nz0 = gz - tfrac * rest_len * uz
            ftl_corr[i0, 0] += nx0 - pos[i0, 0]
            ftl_corr[i0, 1] += ny0 - pos[i0, 1]
            ftl_corr[i0, 2] += nz0 - pos[i0, 2]
            pos[i0, 0] = nx0
            pos[i0, 1] = ny0
            pos[i0, 2] = nz0
            nx1 = gx + (1.0 - tfrac) * rest_len * ux
            ny1 = gy + (1.0 - tfrac) * rest_len * uy
            nz1 = gz + (1.0 - tfrac) * rest_len * uz
            ftl_corr[i0 + 1, 0] += nx1 - pos[i0 + 1, 0]
            ftl_corr[i0 + 1, 1] += ny1 - pos[i0 + 1, 1]
            ftl_corr[i0 + 1, 2] += nz1 - pos[i0 + 1, 2]
            pos[i0 + 1, 0] = nx1
            pos[i0 + 1, 1] = ny1
            pos[i0 + 1, 2] = nz1
            for i in range(i0 - 1, -1, -1):
                dx = pos[i, 0] - pos[i + 1, 0]
                dy = pos[i, 1] - pos[i + 1, 1]
                dz = pos[i, 2] - pos[i + 1, 2]
                d = math.sqrt(dx * dx + dy * dy + dz * dz)
                if d < 1e-12:
                    dx, dy, dz, d = 1.0, 0.0, 0.0, 1.0
                nx0 = pos[i + 1, 0] + dx / d * rest_len
                ny0 = pos[i + 1, 1] + dy / d * rest_len
                nz0 = pos[i + 1, 2] + dz / d * rest_len
                ftl_corr[i, 0] += nx0 - pos[i, 0]
                ftl_corr[i, 1] += ny0 - pos[i, 1]
                ftl_corr[i, 2] += nz0 - pos[i, 2]
                pos[i, 0] = nx0
                pos[i, 1] = ny0
                pos[i, 2] = nz0
            for i in range(i0 + 2, n):
                dx = pos[i, 0] - pos[i - 1, 0]
                dy = pos[i, 1] - pos[i - 1, 1]
                dz = pos[i, 2] - pos[i - 1, 2]
                d = math.sqrt(dx * dx + dy * dy + dz * dz)
                if d < 1e-12:
                    dx, dy, dz, d = 1.0, 0.0, 0.0, 1.0
                nx0 = pos[i - 1, 0] + dx / d * rest_len
                ny0 = pos[i - 1, 1] + dy / d * rest_len
                nz0 = pos[i - 1, 2] + dz / d * rest_len
                ftl_corr[i, 0] += nx0 - pos[i, 0]
                ftl_corr[i, 1] += ny0 - pos[i, 1]
                ftl_corr[i, 2] += nz0 - pos[i, 2]
                pos[i, 0] = nx0
                pos[i, 1] = ny0
                pos[i, 2] = nz0

        # inextensibility: bidirectional Gauss-Seidel sweep (converges fast
        # on anchored chains)
        for i in range(nseg):
            dx = pos[i + 1, 0] - pos[i, 0]
            dy = pos[i + 1, 1] - pos[i, 1]
            dz = pos[i + 1, 2] - pos[i, 2]
            d = math.sqrt(dx * dx + dy * dy + dz * dz)
            if d < 1e-12:
                continue
            c = 0.5 * (d - rest_len) / d
            pos[i, 0] += c * dx
            pos[i, 1] += c * dy
            pos[i, 2] += c * dz
            pos[i + 1, 0] -= c * dx
            pos[i + 1, 1] -= c * dy
            pos[i + 1, 2] -= c * dz
        for i in range(nseg - 1, -1, -1):
            dx = pos[i + 1, 0] - pos[i, 0]
            dy = pos[i + 1, 1] - pos[i, 1]
            dz = pos[i + 1, 2] - pos[i, 2]
            d = math.sqrt(dx * dx + dy * dy + dz * dz)
            if d < 1e-12:
                continue
            c = 0.5 * (d - rest_len) / d
            pos[i, 0] += c * dx
            pos[i, 1] += c * dy
            pos[i, 2] += c * dz
            pos[i + 1, 0] -= c * dx
            pos[i + 1, 1] -= c * dy
            pos[i + 1, 2] -= c * dz

        # bending resistance: soft push-apart of second neighbours
        if bend_k > 0.0:
            for i in range(n - 2):
                dx = pos[i + 2, 0] - pos[i, 0]
                dy = pos[i + 2, 1] - pos[i, 1]
                dz = pos[i + 2, 2] - pos[i, 2]
                d = math.sqrt(dx * dx + dy * dy + dz * dz)
                if d < 1e-12 or d >= bend_rest:
                    continue
                c = 0.5 * bend_k * (bend_rest - d) / d
                pos[i, 0] -= c * dx
                pos[i, 1] -= c * dy
                pos[i, 2] -= c * dz
                pos[i + 2, 0] += c * dx
                pos[i + 2, 1] += c * dy
                pos[i + 2, 2] += c * dz

        # self-collision capsule contacts with positional friction
        for k in range(npairs):
            i = pair_i[k]
            j = pair_j[k]
            s, t, d2 = _seg_seg_closest(
                pos[i, 0], pos[i, 1], pos[i, 2],
                pos[i + 1, 0], pos[i + 1, 1], pos[i + 1, 2],
                pos[j, 0], pos[j, 1], pos[j, 2],
                pos[j + 1, 0], pos[j + 1, 1], pos[j + 1, 2],
            )
            if d2 >= two_r * two_r or d2 < 1e-18:
                continue
            d = math.sqrt(d2)
            ax = pos[i, 0] + s * (pos[i + 1, 0] - pos[i, 0])
            ay = pos[i, 1] + s * (pos[i + 1, 1] - pos[i, 1])
            az = pos[i, 2] + s * (pos[i + 1, 2] - pos[i, 2])
            bx = pos[j, 0] + t * (pos[j + 1, 0] - pos[j, 0])
            by = pos[j, 1] + t * (pos[j + 1, 1] - pos[j, 1])
            bz = pos[j, 2] + t * (pos[j + 1, 2] - pos[j, 2])
            nx = (ax - bx) / d
            ny = (ay - by) / d
            nz = (az - bz) / d
            pen = two_r - d
            wa0 = 1.0 - s
            wa1 = s
            wb0 = 1.0 - t
            wb1 = t
            denom = wa0 * wa0 + wa1 * wa1 + wb0 * wb0 + wb1 * wb1
            lam = pen / denom
            pos[i, 0] += nx * lam * wa0
            pos[i, 1] += ny * lam * wa0
            pos[i, 2] += nz * lam * wa0
            pos[i + 1, 0] += nx * lam * wa1
            pos[i + 1, 1] += ny * lam * wa1
            pos[i + 1, 2] += nz * lam * wa1
            pos[j, 0] -= nx * lam * wb0
            pos[j, 1] -= ny * lam * wb0
            pos[j, 2] -= nz * lam * wb0
            pos[j + 1, 0] -= nx * lam * wb1
            pos[j + 1, 1] -= ny * lam * wb1
            pos[j + 1, 2] -= nz * lam * wb1
            # friction: limit relative tangential slide at the contact
            rax = (pos[i, 0] - prev[i, 0]) * wa0 + (pos[i + 1, 0] - prev[i + 1, 0]) * wa1
            ray = (pos[i, 1] - prev[i, 1]) * wa0 + (pos[i + 1, 1] - prev[i + 1, 1]) * wa1
            raz = (pos[i, 2] - prev[i, 2]) * wa0 + (pos[i + 1, 2] - prev[i + 1, 2]) * wa1
            rbx = (pos[j, 0] - prev[j, 0]) * wb0 + (pos[j + 1, 0] - prev[j + 1, 0]) * wb1
            rby = (pos[j, 1] - prev[j, 1]) * wb0 + (pos[j + 1, 1] - prev[j + 1, 1]) * wb1
            rbz = (pos[j, 2] - prev[j, 2]) * wb0 + (pos[j + 1, 2] - prev[j + 1, 2]) * wb1
            relx = rax - rbx
            rely = ray - rby
            relz = raz - rbz
            rn = relx * nx + rely * ny + relz * nz
            tx = relx - rn * nx
            ty = rely - rn * ny
            tz = relz - rn * nz
            mt = math.sqrt(tx * tx + ty * ty + tz * tz)
            if mt > 1e-12:
                fcap = mu_cable * pen
                scale = 1.0 if mt <= fcap else fcap / mt
                hx = 0.5 * scale * tx
                hy = 0.5 * scale * ty
                hz = 0.5 * scale * tz
                da = wa0 * wa0 + wa1 * wa1
                db = wb0 * wb0 + wb1 * wb1
                pos[i, 0] -= hx * wa0 / da
                pos[i, 1] -= hy * wa0 / da
                pos[i, 2] -= hz * wa0 / da
                pos[i + 1, 0] -= hx * wa1 / da
                pos[i + 1, 1] -= hy * wa1 / da
                pos[i + 1, 2] -= hz * wa1 / da
                pos[j, 0] += hx * wb0 / db
                pos[j, 1] += hy * wb0 / db
                pos[j, 2] += hz * wb0 / db
                pos[j + 1, 0] += hx * wb1 / db
                pos[j + 1, 1] += hy * wb1 / db
                pos[j + 1, 2] += hz * wb1 / db

        # table contact
        for i in range(n):
            if pos[i, 2] < contact_floor:
                pos[i, 2] = contact_floor

    # residuals of the primary gripper constraints after the solve
    for a in range(2):
        g_resid[a] = 0.0
        if g_mode[a] == MODE_OPEN:
            continue
        att = g_attach[a]
        i0 = int(att)
        if i0 > nseg - 1:
            i0 = nseg - 1
        tfrac = att - i0
        cx = pos[i0, 0] * (1.0 - tfrac) + pos[i0 + 1, 0] * tfrac
        cy = pos[i0, 1] * (1.0 - tfrac) + pos[i0 + 1, 1] * tfrac
        cz = pos[i0, 2] * (1.0 - tfrac) + pos[i0 + 1, 2] * tfrac
        dx = cx - g_pos[a, 0]
        dy = cy - g_pos[a, 1]
        dz = cz - g_pos[a, 2]
        d = math.sqrt(dx * dx + dy * dy + dz * dz)
        if g_mode[a] == MODE_CAGE:
            d -= cage_radius
        if d > 0.0:
            g_resid[a] = d

    # table friction against the step displacement, then velocity update
    max_disp2 = 0.0
    for i in range(n):
        if pos[i, 2] <= contact_floor + 1e-9 and pen0[i] >= 0.0:
            budget = mu_table * (pen0[i] + gravity * dt * dt)
            dx = pos[i, 0] - prev[i, 0]
            dy = pos[i, 1] - prev[i, 1]
            m = math.sqrt(dx * dx + dy * dy)
            if m > 1e-15:
                if m <= budget:
                    pos[i, 0] = prev[i, 0]
                    pos[i, 1] = prev[i, 1]
                else:
                    sc = budget / m
                    pos[i, 0] -= dx * sc
                    pos[i, 1] -= dy * sc
        dx = pos[i, 0] - prev[i, 0]
        dy = pos[i, 1] - prev[i, 1]
        dz = pos[i, 2] - prev[i, 2]
        # the follow-the-leader snap must not inject velocity (whip feedback)
        vel[i, 0] = (dx - ftl_corr[i, 0]) / dt
        vel[i, 1] = (dy - ftl_corr[i, 1]) / dt
        vel[i, 2] = (dz - ftl_corr[i, 2]) / dt
        d2 = dx * dx + dy * dy + dz * dz
        if d2 > max_disp2:
            max_disp2 = d2
    return math.sqrt(max_disp2)


@njit(cache=True)
def raster_capsules(nodes, radius, discs, width, height, xmin, ymin, sx, sy):
    """Orthographic top-down height buffer of the cable (capsules per segment)
    plus flat occluder discs (x, y, z, r rows). Returns (top_z, winner) where
    winner is the segment index, 10000+k for disc k, or -1 for background."""
    top = np.full((height, width), -1e9)
    winner = np.full((height, width), -1, np.int32)
    nseg = nodes.shape[0] - 1
    r2 = radius * radius
    for i in range(nseg):
        ax, ay, az = nodes[i, 0], nodes[i, 1], nodes[i, 2]
        bx, by, bz = nodes[i + 1, 0], nodes[i + 1, 1], nodes[i + 1, 2]
        lox = min(ax, bx) - radius
        hix = max(ax, bx) + radius
        loy = min(ay, by) - radius
        hiy = max(ay, by) + radius
        c0 = int((lox - xmin) / sx)
        c1 = int((hix - xmin) / sx) + 1
        r0 = int((loy - ymin) / sy)
        r1 = int((hiy - ymin) / sy) + 1
        if c1 < 0 or r1 < 0 or c0 >= width or r0 >= height:
            continue
        if c0 < 0:
            c0 = 0
        if r0 < 0:
            r0 = 0
        if c1 > width:
            c1 = width
        if r1 > height:
            r1 = height
        dxs = bx - ax
        dys = by - ay
        dzs = bz - az
        den = dxs * dxs + dys * dys
        for rr in range(r0, r1):
            py = ymin + (rr + 0.5) * sy
            for cc in range(c0, c1):
                px = xmin + (cc + 0.5) * sx
                if den < 1e-18:
                    t = 0.0
                else:
                    t = ((px - ax) * dxs + (py - ay) * dys) / den
                    if t < 0.0:
                        t = 0.0
                    elif t > 1.0:
                        t = 1.0
                ddx = ax + t * dxs - px
                ddy = ay + t * dys - py
                d2 = ddx * ddx + ddy * ddy
                if d2 <= r2:
                    zs = az + t * dzs + math.sqrt(r2 - d2)
                    if zs > top[rr, cc]:
                        top[rr, cc] = zs
                        winner[rr, cc] = i
    for k in range(discs.shape[0]):
        gx, gy, gz, gr = discs[k, 0], discs[k, 1], discs[k, 2], discs[k, 3]
        c0 = int((gx - gr - xmin) / sx)
        c1 = int((gx + gr - xmin) / sx) + 1
        r0 = int((gy - gr - ymin) / sy)
        r1 = int((gy + gr - ymin) / sy) + 1
        if c1 < 0 or r1 < 0 or c0 >= width or r0 >= height:
            continue
        if c0 < 0:
            c0 = 0
        if r0 < 0:
            r0 = 0
        if c1 > width:
            c1 = width
        if r1 > height:
            r1 = height
        gr2 = gr * gr
        for rr in range(r0, r1):
            py = ymin + (rr + 0.5) * sy
            for cc in range(c0, c1):
                px = xmin + (cc + 0.5) * sx
                ddx = px - gx
                ddy = py - gy
                if ddx * ddx + ddy * ddy <= gr2 and gz > top[rr, cc]:
                    top[rr, cc] = gz
                    winner[rr, cc] = 10000 + k
    return top, winner


@njit(cache=True)
def polyline_crossings(xy, h):
    """Transverse self-intersections of an open polyline in the plane.

    xy: (n, 2) projected vertices, h: (n,) heights toward the viewer.
    Returns (count, data, degenerate) where data rows are
    (i, j, ti, tj, hi, hj) for segment indices i < j and local parameters,
    and degenerate flags a near-parallel or near-endpoint intersection.
    """
    n = xy.shape[0]
    nseg = n - 1
    max_c = 4096
    data = np.empty((max_c, 6))
    count = 0
    degenerate = False
    eps_par = 1e-12
    eps_end = 1e-7
    for i in range(nseg):
        ax, ay = xy[i, 0], xy[i, 1]
        bx, by = xy[i + 1, 0], xy[i + 1, 1]
        dax = bx - ax
        day = by - ay
        for j in range(i + 2, nseg):
            cx, cy = xy[j, 0], xy[j, 1]
            ex, ey = xy[j + 1, 0], xy[j + 1, 1]
            dcx = ex - cx
            dcy = ey - cy
            denom = dax * dcy - day * dcx
            rx = cx - ax
            ry = cy - ay
            if abs(denom) < eps_par:
                # parallel; collinear segments are degenerate only if their
                # 1D extents on the shared line actually overlap
                cross_r = rx * day - ry * dax
                la = math.sqrt(dax * dax + day * day)
                if la > 1e-15 and abs(cross_r) / la < 1e-9:
                    ta0 = ax * dax + ay * day
                    ta1 = bx * dax + by * day
                    tc0 = cx * dax + cy * day
                    tc1 = ex * dax + ey * day
                    lo_a, hi_a = min(ta0, ta1), max(ta0, ta1)
                    lo_c, hi_c = min(tc0, tc1), max(tc0, tc1)
                    if hi_a > lo_c + 1e-15 and hi_c > lo_a + 1e-15:
                        degenerate = True
                continue
            ti = (rx * dcy - ry * dcx) / denom
            tj = (rx * day - ry * dax) / denom
            if ti < -eps_end or ti > 1.0 + eps_end or tj < -eps_end or tj > 1.0 + eps_end:
                continue
            if (
                ti < eps_end
                or ti > 1.0 - eps_end
                or tj < eps_end
                or tj > 1.0 - eps_end
            ):
                degenerate = True
                continue
            if count < max_c:
                hi = h[i] + ti * (h[i + 1] - h[i])
                hj = h[j] + tj * (h[j + 1] - h[j])
                data[count, 0] = i
                data[count, 1] = j
                data[count, 2] = ti
                data[count, 3] = tj
                data[count, 4] = hi
                data[count, 5] = hj
                count += 1
    return count, data, degenerate


@njit(cache=True)
def mask_bfs(mask, start_r, start_c, frontier_limit):
    """Breadth-first wave over mask pixels (8-connected) from a start pixel.

    Stops when a level's tight bounding box has a side exceeding
    frontier_limit (a crossing merges strands) or when the frontier empties.
    Returns (reached_crossing, trigger_r, trigger_c, parent) where parent is
    a (H, W) int32 array of linear parent indices (-1 root, -2 unvisited).
    The trigger pixel is the frontier pixel nearest the offending level's
    bbox centre (queue order breaks ties).
    """
    h, w = mask.shape
    parent = np.full((h, w), -2, np.int32)
    queue = np.empty(h * w, np.int64)
    head = 0
    tail = 0
    queue[tail] = start_r * w + start_c
    tail += 1
    parent[start_r, start_c] = -1
    reached = False
    trig_r = start_r
    trig_c = start_c
    while head < tail:
        level_end = tail
        lo_r, hi_r = h, -1
        lo_c, hi_c = w, -1
        for qi in range(head, level_end):
            idx = queue[qi]
            rr = idx // w
            cc = idx % w
            if rr < lo_r:
                lo_r = rr
            if rr > hi_r:
                hi_r = rr
            if cc < lo_c:
                lo_c = cc
            if cc > hi_c:
                hi_c = cc
        if hi_r - lo_r + 1 > frontier_limit or hi_c - lo_c + 1 > frontier_limit:
            reached = True
            cen_r = 0.5 * (lo_r + hi_r)
            cen_c = 0.5 * (lo_c + hi_c)
            best = 1e18
            for qi in range(head, level_end):
                idx = queue[qi]
                rr = idx // w
                cc = idx % w
                d = (rr - cen_r) ** 2 + (cc - cen_c) ** 2
                if d < best:
                    best = d
                    trig_r = rr
                    trig_c = cc
            break
        for qi in range(head, level_end):
            idx = queue[qi]
            rr = idx // w
            cc = idx % w
            for dr in range(-1, 2):
                for dc in range(-1, 2):
                    if dr == 0 and dc == 0:
                        continue
                    nr = rr + dr
                    nc = cc + dc
                    if nr < 0 or nr >= h or nc < 0 or nc >= w:
                        continue
                    if mask[nr, nc] and parent[nr, nc] == -2:
                        parent[nr, nc] = idx
                        queue[tail] = nr * w + nc
                        tail += 1
        head = level_end
        if head == tail:
            # frontier emptied: deepest pixel is the last one queued
            idx = queue[tail - 1]
            trig_r = idx // w
            trig_c = idx % w
    return reached, trig_r, trig_c, parent
