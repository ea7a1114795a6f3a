# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled folded-path tracer.  Same contract and operation order as
``_kernels_py``; see that module for the surface row layout."""

from libc.math cimport sqrt, fabs

cdef int LENS = 0
cdef int MIRROR = 1

cdef int VIGNETTED = 1
cdef int EXTENT_MISS = 2
cdef int NOT_REACHED = 4
cdef int NOT_CONVERGED = 8

cdef double _FD_STEP = 1e-7
cdef double _SOLVE_TOL = 1e-15
cdef double _ACCEPT_TOL = 1e-9


cdef int _trace(const double* s, Py_ssize_t n, double* o, double* d, double* lengths,
                int* n_len, double* uv) noexcept nogil:
    cdef Py_ssize_t i, r
    cdef int flags = 0, kind
    cdef double ox = o[0], oy = o[1], oz = o[2]
    cdef double dx = d[0], dy = d[1], dz = d[2]
    cdef double px, py, pz, nx, ny, nz, denom, t, rx, ry, rz, u = 0.0, v = 0.0
    cdef double ax, ay, az, tx, ty, norm, k
    n_len[0] = 0
    for i in range(n):
        r = 16 * i
        kind = <int>s[r + 0]
        px = s[r + 1]; py = s[r + 2]; pz = s[r + 3]
        nx = s[r + 4]; ny = s[r + 5]; nz = s[r + 6]
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
        lengths[n_len[0]] = t
        n_len[0] += 1
        rx = ox - px
        ry = oy - py
        rz = oz - pz
        u = rx * s[r + 7] + ry * s[r + 8] + rz * s[r + 9]
        v = rx * s[r + 10] + ry * s[r + 11] + rz * s[r + 12]
        if kind == LENS:
            if u * u + v * v > s[r + 14] * s[r + 14]:
                flags |= VIGNETTED
            ax = nx; ay = ny; az = nz
            if denom < 0.0:
                ax = -ax; ay = -ay; az = -az
                denom = -denom
            tx = (dx * s[r + 7] + dy * s[r + 8] + dz * s[r + 9]) / denom - s[r + 13] * u
            ty = (dx * s[r + 10] + dy * s[r + 11] + dz * s[r + 12]) / denom - s[r + 13] * v
            dx = ax + tx * s[r + 7] + ty * s[r + 10]
            dy = ay + tx * s[r + 8] + ty * s[r + 11]
            dz = az + tx * s[r + 9] + ty * s[r + 12]
            norm = sqrt(dx * dx + dy * dy + dz * dz)
            dx = dx / norm
            dy = dy / norm
            dz = dz / norm
        elif kind == MIRROR:
            if rx * rx + ry * ry + rz * rz > s[r + 14] * s[r + 14]:
                flags |= EXTENT_MISS
            k = 2.0 * denom
            dx = dx - k * nx
            dy = dy - k * ny
            dz = dz - k * nz
            norm = sqrt(dx * dx + dy * dy + dz * dz)
            dx = dx / norm
            dy = dy / norm
            dz = dz / norm
    o[0] = ox; o[1] = oy; o[2] = oz
    d[0] = dx; d[1] = dy; d[2] = dz
    uv[0] = u; uv[1] = v
    return flags


cdef inline void _launch(double* b, double* f1, double* f2, double s1, double s2,
                         double* out) noexcept nogil:
    cdef double dx = b[0] + s1 * f1[0] + s2 * f2[0]
    cdef double dy = b[1] + s1 * f1[1] + s2 * f2[1]
    cdef double dz = b[2] + s1 * f1[2] + s2 * f2[2]
    cdef double norm = sqrt(dx * dx + dy * dy + dz * dz)
    out[0] = dx / norm; out[1] = dy / norm; out[2] = dz / norm


cdef enum:
    MAX_ROWS = 64


cdef Py_ssize_t _load_rows(surfaces, double* buf) except -1:
    """Copy up to MAX_ROWS 16-float rows into ``buf``; returns the row count."""
    cdef Py_ssize_t n = len(surfaces), i, j
    if n > MAX_ROWS:
        raise ValueError("path too long")
    for i in range(n):
        row = surfaces[i]
        if len(row) != 16:
            raise ValueError("surface rows must have 16 entries")
        for j in range(16):
            buf[16 * i + j] = row[j]
    return n


def trace_path(surfaces, origin, direction):
    cdef double s[MAX_ROWS * 16]
    cdef Py_ssize_t n = _load_rows(surfaces, s)
    cdef double o[3]
    cdef double d[3]
    cdef double uv[2]
    cdef double lengths[MAX_ROWS]
    cdef int n_len = 0, flags, i
    o[0] = origin[0]; o[1] = origin[1]; o[2] = origin[2]
    d[0] = direction[0]; d[1] = direction[1]; d[2] = direction[2]
    with nogil:
        flags = _trace(s, n, o, d, lengths, &n_len, uv)
    return ((o[0], o[1], o[2]), (d[0], d[1], d[2]),
            [lengths[i] for i in range(n_len)], flags, uv[0], uv[1])


def solve_chief(surfaces, origin, base, f1, f2, int max_iter=30):
    cdef double s[MAX_ROWS * 16]
    cdef Py_ssize_t n = _load_rows(surfaces, s)
    cdef double o0[3]
    cdef double b[3]
    cdef double e1[3]
    cdef double e2[3]
    cdef double o[3]
    cdef double d[3]
    cdef double uv[2]
    cdef double lengths[MAX_ROWS]
    cdef double scratch[MAX_ROWS]
    cdef int n_len = 0, n_scratch = 0, flags, fa, fb, it = 0, i
    cdef double s1 = 0.0, s2 = 0.0, u, v, ua, va, ub, vb
    cdef double j11 = 0.0, j12 = 0.0, j21 = 0.0, j22 = 0.0, det
    cdef double d_end[3]
    for i in range(3):
        o0[i] = origin[i]; b[i] = base[i]; e1[i] = f1[i]; e2[i] = f2[i]
    with nogil:
        o[0] = o0[0]; o[1] = o0[1]; o[2] = o0[2]
        _launch(b, e1, e2, s1, s2, d)
        flags = _trace(s, n, o, d, lengths, &n_len, uv)
        u = uv[0]; v = uv[1]
        d_end[0] = d[0]; d_end[1] = d[1]; d_end[2] = d[2]
        if not (flags & NOT_REACHED):
            while it < max_iter:
                if fabs(u) <= _SOLVE_TOL and fabs(v) <= _SOLVE_TOL:
                    break
                if it % 5 == 0:
                    o[0] = o0[0]; o[1] = o0[1]; o[2] = o0[2]
                    _launch(b, e1, e2, s1 + _FD_STEP, s2, d)
                    fa = _trace(s, n, o, d, scratch, &n_scratch, uv)
                    ua = uv[0]; va = uv[1]
                    o[0] = o0[0]; o[1] = o0[1]; o[2] = o0[2]
                    _launch(b, e1, e2, s1, s2 + _FD_STEP, d)
                    fb = _trace(s, n, o, d, scratch, &n_scratch, uv)
                    ub = uv[0]; vb = uv[1]
                    if (fa | fb) & NOT_REACHED:
                        flags = flags | NOT_REACHED
                        break
                    j11 = (ua - u) / _FD_STEP
                    j21 = (va - v) / _FD_STEP
                    j12 = (ub - u) / _FD_STEP
                    j22 = (vb - v) / _FD_STEP
                det = j11 * j22 - j12 * j21
                if det == 0.0:
                    flags = flags | NOT_CONVERGED
                    break
                s1 = s1 - (j22 * u - j12 * v) / det
                s2 = s2 - (-j21 * u + j11 * v) / det
                o[0] = o0[0]; o[1] = o0[1]; o[2] = o0[2]
                _launch(b, e1, e2, s1, s2, d)
                flags = _trace(s, n, o, d, lengths, &n_len, uv)
                u = uv[0]; v = uv[1]
                d_end[0] = d[0]; d_end[1] = d[1]; d_end[2] = d[2]
                it += 1
                if flags & NOT_REACHED:
                    break
            if not (flags & (NOT_REACHED | NOT_CONVERGED)):
                if not (fabs(u) <= _ACCEPT_TOL and fabs(v) <= _ACCEPT_TOL):
                    flags = flags | NOT_CONVERGED
    return (flags, s1, s2, (d_end[0], d_end[1], d_end[2]),
            [lengths[i] for i in range(n_len)], it)
