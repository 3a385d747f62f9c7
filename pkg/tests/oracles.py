"""Independent reference implementations used as test oracles.

Nothing here imports the package's kernels.  The scalar mover uses division
for the cell lookup, the explicit eight-weight sum for interpolation and
``math.fmod`` for wrapping, so agreement with the compiled kernel is a real
check rather than a replay of the same arithmetic.
"""
from __future__ import annotations

import math


def wrap(p: float, length: float) -> float:
    r = math.fmod(p, length)
    if r < 0:
        r += length
    if r >= length:
        r -= length
    return r


def cell(p: float, h: float, n: int):
    i = min(int(math.floor(p / h)), n - 1)
    return i, p / h - i


def interp(nodes, dims, lengths, pos):
    """Field at ``pos`` from ``nodes[(i, j, k)] -> 6-tuple`` (E then B)."""
    (nx, ny, nz), (lx, ly, lz) = dims, lengths
    i, fx = cell(pos[0], lx / nx, nx)
    j, fy = cell(pos[1], ly / ny, ny)
    k, fz = cell(pos[2], lz / nz, nz)
    out = [0.0] * 6
    for cx in (0, 1):
        for cy in (0, 1):
            for cz in (0, 1):
                w = (fx if cx else 1 - fx) * (fy if cy else 1 - fy) * (fz if cz else 1 - fz)
                v = nodes[((i + cx) % nx, (j + cy) % ny, (k + cz) % nz)]
                for a in range(6):
                    out[a] += w * v[a]
    return out


def cross(a, b):
    return (a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0])


def vbar(v, E, B, beta):
    t = [v[a] + beta * E[a] for a in range(3)]
    c = cross(t, B)
    tb = sum(t[a] * B[a] for a in range(3))
    d = 1 + beta * beta * sum(b * b for b in B)
    return [(t[a] + beta * c[a] + beta * beta * tb * B[a]) / d for a in range(3)]


def move_particle(p, nodes, dims, lengths, qom, dt, iters):
    """One step of the predictor-corrector mover for a single particle."""
    x, v = list(p[:3]), list(p[3:])
    beta = qom * dt / 2
    xt, vb = x[:], v[:]
    for _ in range(iters):
        f = interp(nodes, dims, lengths, xt)
        vb = vbar(v, f[:3], f[3:], beta)
        xt = [wrap(x[a] + vb[a] * dt / 2, lengths[a]) for a in range(3)]
    return ([wrap(x[a] + vb[a] * dt, lengths[a]) for a in range(3)]
            + [2 * vb[a] - v[a] for a in range(3)])


def logical_nodes(EB, dims):
    """``(i, j, k) -> 6-tuple`` from an interleaved (nnodes, 6) array with images."""
    nx, ny, nz = dims
    out = {}
    for k in range(nz):
        for j in range(ny):
            for i in range(nx):
                out[(i, j, k)] = tuple(EB[i + j * (nx + 1) + k * (nx + 1) * (ny + 1)])
    return out


# -- timing of the offload pipelines


def pipeline_time(kind: str, fields: float, h2d, kernel, d2h, field_phase: float = 0.0) -> float:
    """Host wall time of one mover phase under a one-queue, one-copy-engine model.

    ``h2d``, ``kernel``, ``d2h`` are per-species durations; ``fields`` is the
    field upload.  For ``prefetch`` the first species upload is issued at the
    start of a field phase of length ``field_phase`` that precedes the mover
    phase; the returned time counts from the end of the field phase.
    """
    n = len(h2d)
    if kind in ("naive", "pinned"):
        return fields + sum(h2d[s] + kernel[s] + d2h[s] for s in range(n))
    if kind != "prefetch":
        raise ValueError(kind)
    if n == 0:
        return 0.0
    copy_free = h2d[0]              # species 0 goes up during the field phase
    stream = copy_free
    host = field_phase
    start = max(stream, copy_free, host)
    copy_free = stream = start + fields
    stream += kernel[0]
    for s in range(n):
        host = max(host, stream)                     # synchronize
        if s + 1 < n:
            up = max(stream, copy_free, host) + h2d[s + 1]
            copy_free = up
            stream = up + kernel[s + 1]
            host = max(host, up)                     # wait for the upload
        start = max(host, copy_free)
        copy_free = host = start + d2h[s]            # blocking copy-back
    return host - field_phase
