"""Pure-Python folded-path tracer; reference for the compiled ``_kernels``.

A path is a sequence of 16-float surface rows::

    [kind, px, py, pz, nx, ny, nz, e1x, e1y, e1z, e2x, e2y, e2z, power, radius, 0]

``kind`` is LENS (thin lens, ``n`` = optical axis), MIRROR (``n`` = unit
normal) or PLANE (pass-through detector plane, last row only).  Lenses act
in slope space relative to their own axis, which makes them exact
first-order deflectors in 3D: ``tan' = tan - P * offset`` per transverse
direction.  Both implementations must keep the same operation order so
results agree to the last bit where the C math library does.
"""

import math

LENS = 0
MIRROR = 1
PLANE = 2

VIGNETTED = 1
EXTENT_MISS = 2
NOT_REACHED = 4
NOT_CONVERGED = 8

_FD_STEP = 1e-7
_SOLVE_TOL = 1e-15
_ACCEPT_TOL = 1e-9


def trace_path(surfaces, origin, direction):
    """Trace one ray; return ``(point, direction, lengths, flags, u, v)``.

    ``u, v`` are the coordinates of the final hit relative to the last
    surface point along its ``e1, e2`` axes.
    """
    if len(surfaces) > 64:
        raise ValueError("path too long")
    ox, oy, oz = origin
    dx, dy, dz = direction
    lengths = []
    flags = 0
    u = v = 0.0
    for row in surfaces:
        kind = row[0]
        px = row[1]; py = row[2]; pz = row[3]
        nx = row[4]; ny = row[5]; nz = row[6]
        denom = dx * nx + dy * ny + dz * nz
        if denom == 0.0:
            flags |= NOT_REACHED
            break
        t = ((px - ox) * nx + (py - oy) * ny + (pz - oz) * nz) / denom
        if t <= 0.0:
            flags |= NOT_REACHED
            break
        ox = ox + t * dx
        oy = oy + t * dy
        oz = oz + t * dz
        lengths.append(t)
        rx = ox - px
        ry = oy - py
        rz = oz - pz
        u = rx * row[7] + ry * row[8] + rz * row[9]
        v = rx * row[10] + ry * row[11] + rz * row[12]
        if kind == LENS:
            if u * u + v * v > row[14] * row[14]:
                flags |= VIGNETTED
            ax = nx; ay = ny; az = nz
            if denom < 0.0:
                ax = -ax; ay = -ay; az = -az
                denom = -denom
            tx = (dx * row[7] + dy * row[8] + dz * row[9]) / denom - row[13] * u
            ty = (dx * row[10] + dy * row[11] + dz * row[12]) / denom - row[13] * v
            dx = ax + tx * row[7] + ty * row[10]
            dy = ay + tx * row[8] + ty * row[11]
            dz = az + tx * row[9] + ty * row[12]
            norm = math.sqrt(dx * dx + dy * dy + dz * dz)
            dx = dx / norm
            dy = dy / norm
            dz = dz / norm
        elif kind == MIRROR:
            if rx * rx + ry * ry + rz * rz > row[14] * row[14]:
                flags |= EXTENT_MISS
            k = 2.0 * denom
            dx = dx - k * nx
            dy = dy - k * ny
            dz = dz - k * nz
            norm = math.sqrt(dx * dx + dy * dy + dz * dz)
            dx = dx / norm
            dy = dy / norm
            dz = dz / norm
    return (ox, oy, oz), (dx, dy, dz), lengths, flags, u, v


def _launch(base, f1, f2, s1, s2):
    dx = base[0] + s1 * f1[0] + s2 * f2[0]
    dy = base[1] + s1 * f1[1] + s2 * f2[1]
    dz = base[2] + s1 * f1[2] + s2 * f2[2]
    norm = math.sqrt(dx * dx + dy * dy + dz * dz)
    return (dx / norm, dy / norm, dz / norm)


def solve_chief(surfaces, origin, base, f1, f2, max_iter=30):
    """Find the ray from ``origin`` that hits the last surface's point.

    The launch direction is ``base + s1*f1 + s2*f2`` (normalised).  Solved
    by a chord-Newton iteration with a forward-difference Jacobian; the map
    is affine up to fold obliquity so two or three steps suffice.

    Returns ``(flags, s1, s2, direction, lengths, iterations)`` where
    ``direction`` is the final propagation direction at the target.
    """
    s1 = 0.0
    s2 = 0.0
    point, d_end, lengths, flags, u, v = trace_path(surfaces, origin, _launch(base, f1, f2, s1, s2))
    if flags & NOT_REACHED:
        return flags, s1, s2, d_end, lengths, 0
    j11 = j12 = j21 = j22 = 0.0
    it = 0
    while it < max_iter:
        if abs(u) <= _SOLVE_TOL and abs(v) <= _SOLVE_TOL:
            break
        if it % 5 == 0:
            _, _, _, fa, ua, va = trace_path(surfaces, origin, _launch(base, f1, f2, s1 + _FD_STEP, s2))
            _, _, _, fb, ub, vb = trace_path(surfaces, origin, _launch(base, f1, f2, s1, s2 + _FD_STEP))
            if (fa | fb) & NOT_REACHED:
                return flags | NOT_REACHED, s1, s2, d_end, lengths, it
            j11 = (ua - u) / _FD_STEP
            j21 = (va - v) / _FD_STEP
            j12 = (ub - u) / _FD_STEP
            j22 = (vb - v) / _FD_STEP
        det = j11 * j22 - j12 * j21
        if det == 0.0:
            return flags | NOT_CONVERGED, s1, s2, d_end, lengths, it
        s1 = s1 - (j22 * u - j12 * v) / det
        s2 = s2 - (-j21 * u + j11 * v) / det
        point, d_end, lengths, flags, u, v = trace_path(surfaces, origin, _launch(base, f1, f2, s1, s2))
        it += 1
        if flags & NOT_REACHED:
            return flags, s1, s2, d_end, lengths, it
    if not (abs(u) <= _ACCEPT_TOL and abs(v) <= _ACCEPT_TOL):
        flags |= NOT_CONVERGED
    return flags, s1, s2, d_end, lengths, it
