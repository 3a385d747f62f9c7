"""Numerical core: trilinear interpolation, the implicit predictor-corrector
mover, moment deposition and the field-phase stand-in.

The hot loops are numba-compiled with ``nogil=True`` so worker threads and the
device-queue executor can run them concurrently.  Interpolation is written as
nested linear interpolation, which is algebraically the sum of the eight
corner weights times node values but returns a uniform field exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .core import DomainError, FieldMesh, Grid, NumericalFault, ParticleBatch, Vec3, grid_cell_of

jit = numba.njit(cache=True, nogil=True)


@dataclass(frozen=True)
class NodeWeights:
    """Corner nodes and weights of the cell enclosing a point.

    Corner ``c`` has offsets (c & 1, (c >> 1) & 1, (c >> 2) & 1).  ``frac``
    keeps the fractional offsets used to build the weights.
    """

    idx: tuple
    w: tuple
    frac: tuple


@dataclass(frozen=True)
class MoverParams:
    dt: float
    qom: float
    pc_iterations: int = 3

    def __post_init__(self):
        if self.pc_iterations < 1:
            raise ValueError("pc_iterations must be >= 1")
        if not math.isfinite(self.beta):
            raise ValueError("beta = qom*dt/2 must be finite")

    @property
    def beta(self) -> float:
        return self.qom * self.dt / 2


def trilinear_weights(pos, grid: Grid) -> NodeWeights:
    i, j, k, fx, fy, fz = grid_cell_of(pos, grid)
    idx, w = [], []
    for c in range(8):
        cx, cy, cz = c & 1, (c >> 1) & 1, (c >> 2) & 1
        idx.append(grid.node_index(i + cx, j + cy, k + cz))
        w.append((fx if cx else 1 - fx) * (fy if cy else 1 - fy) * (fz if cz else 1 - fz))
    return NodeWeights(tuple(idx), tuple(w), (fx, fy, fz))


def _lerp_corners(vals, fx, fy, fz):
    c00 = vals[0] + fx * (vals[1] - vals[0])
    c10 = vals[2] + fx * (vals[3] - vals[2])
    c01 = vals[4] + fx * (vals[5] - vals[4])
    c11 = vals[6] + fx * (vals[7] - vals[6])
    c0 = c00 + fy * (c10 - c00)
    c1 = c01 + fy * (c11 - c01)
    return c0 + fz * (c1 - c0)


def gather_field(mesh: FieldMesh, wts: NodeWeights) -> tuple[Vec3, Vec3]:
    fx, fy, fz = wts.frac
    idx = list(wts.idx)
    out = []
    for F in (mesh.E, mesh.B):
        corners = F[idx]
        out.append(Vec3(*(float(_lerp_corners(corners[:, a], fx, fy, fz)) for a in range(3))))
    return out[0], out[1]


def implicit_velocity(vn, Ep, Bp, mp: MoverParams) -> Vec3:
    return Vec3(*_implicit_velocity(*vn, *Ep, *Bp, mp.beta))


# ---------------------------------------------------------------- compiled


@jit
def _wrap(p, length):
    if p >= 0.0 and p < length:
        return p
    r = p - length * math.floor(p / length)
    if r < 0.0:
        r += length
    # p a hair below 0 can round up to exactly length
    if r >= length:
        r -= length
    return r


@jit
def _cell(p, inv_h, n):
    s = p * inv_h
    i = int(s)
    if i >= n:
        i = n - 1
    return i, s - i


@jit
def _implicit_velocity(vx, vy, vz, ex, ey, ez, bx, by, bz, beta):
    tx = vx + beta * ex
    ty = vy + beta * ey
    tz = vz + beta * ez
    b2 = beta * beta
    denom = 1.0 + b2 * (bx * bx + by * by + bz * bz)
    tdotb = tx * bx + ty * by + tz * bz
    ox = (tx + beta * (ty * bz - tz * by) + b2 * tdotb * bx) / denom
    oy = (ty + beta * (tz * bx - tx * bz) + b2 * tdotb * by) / denom
    oz = (tz + beta * (tx * by - ty * bx) + b2 * tdotb * bz) / denom
    return ox, oy, oz


@jit
def _gather(EB, n000, sx, sxy, fx, fy, fz, out):
    for a in range(6):
        v0 = EB[n000, a]
        v1 = EB[n000 + 1, a]
        v2 = EB[n000 + sx, a]
        v3 = EB[n000 + sx + 1, a]
        v4 = EB[n000 + sxy, a]
        v5 = EB[n000 + sxy + 1, a]
        v6 = EB[n000 + sxy + sx, a]
        v7 = EB[n000 + sxy + sx + 1, a]
        c00 = v0 + fx * (v1 - v0)
        c10 = v2 + fx * (v3 - v2)
        c01 = v4 + fx * (v5 - v4)
        c11 = v6 + fx * (v7 - v6)
        c0 = c00 + fy * (c10 - c00)
        c1 = c01 + fy * (c11 - c01)
        out[a] = c0 + fz * (c1 - c0)


@jit
def move_arrays(data, count, EB, g, qom, dt, pc_iterations):
    """Advance ``data[:, :count]`` in place.

    ``EB`` is the interleaved (nnodes, 6) field block, ``g`` the packed grid
    constants.  Returns -1, or the index of the first particle whose update
    is non-finite (that particle is left untouched).
    """
    nx, ny, nz = int(g[0]), int(g[1]), int(g[2])
    lx, ly, lz = g[3], g[4], g[5]
    ihx, ihy, ihz = 1.0 / g[6], 1.0 / g[7], 1.0 / g[8]
    sx = nx + 1
    sxy = sx * (ny + 1)
    beta = qom * dt / 2.0
    half = dt / 2.0
    f = np.empty(6)
    bad = -1
    for p in range(count):
        x0 = data[0, p]
        y0 = data[1, p]
        z0 = data[2, p]
        u0 = data[3, p]
        v0 = data[4, p]
        w0 = data[5, p]
        xt = x0
        yt = y0
        zt = z0
        ub = u0
        vb = v0
        wb = w0
        for _ in range(pc_iterations):
            i, fx = _cell(xt, ihx, nx)
            j, fy = _cell(yt, ihy, ny)
            k, fz = _cell(zt, ihz, nz)
            _gather(EB, i + j * sx + k * sxy, sx, sxy, fx, fy, fz, f)
            ub, vb, wb = _implicit_velocity(u0, v0, w0, f[0], f[1], f[2], f[3], f[4], f[5], beta)
            xt = _wrap(x0 + ub * half, lx)
            yt = _wrap(y0 + vb * half, ly)
            zt = _wrap(z0 + wb * half, lz)
        un = 2.0 * ub - u0
        vn = 2.0 * vb - v0
        wn = 2.0 * wb - w0
        xn = x0 + ub * dt
        yn = y0 + vb * dt
        zn = z0 + wb * dt
        if not (math.isfinite(un) and math.isfinite(vn) and math.isfinite(wn)
                and math.isfinite(xn) and math.isfinite(yn) and math.isfinite(zn)):
            if bad < 0:
                bad = p
            continue
        data[0, p] = _wrap(xn, lx)
        data[1, p] = _wrap(yn, ly)
        data[2, p] = _wrap(zn, lz)
        data[3, p] = un
        data[4, p] = vn
        data[5, p] = wn
    return bad


def move_batch(batch: ParticleBatch, mesh: FieldMesh, grid: Grid, mp: MoverParams) -> ParticleBatch:
    """Advance every particle of ``batch`` one step in place."""
    bad = move_arrays(batch.data, batch.count, mesh.EB, grid.params(),
                      mp.qom, mp.dt, mp.pc_iterations)
    if bad >= 0:
        raise NumericalFault(int(bad))
    return batch


# ---------------------------------------------------------------- moments

MOMENT_NAMES = ("rho", "Jx", "Jy", "Jz", "Pxx", "Pxy", "Pxz", "Pyy", "Pyz", "Pzz")


@dataclass
class MomentMesh:
    """Charge density, current and (optionally) pressure on the grid.

    Deposits accumulate into ``acc`` of shape (nx*ny*nz, ncomp) over the
    logical nodes; the node-layout views fill in the periodic images.
    """

    grid: Grid
    pressure: bool = False
    acc: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.acc is None:
            self.acc = np.zeros((self.grid.ncells, 10 if self.pressure else 4))

    @property
    def ncomp(self) -> int:
        return self.acc.shape[1]

    def zero(self) -> None:
        self.acc[:] = 0.0

    def add(self, other: "MomentMesh") -> None:
        self.acc += other.acc

    def _nodes(self, rows) -> np.ndarray:
        g = self.grid
        a = self.acc[:, rows].T.reshape(-1, g.nz, g.ny, g.nx)
        a = np.concatenate([a, a[:, :, :, :1]], axis=3)
        a = np.concatenate([a, a[:, :, :1, :]], axis=2)
        a = np.concatenate([a, a[:, :1, :, :]], axis=1)
        return a.reshape(a.shape[0], -1)

    @property
    def rho(self) -> np.ndarray:
        return self._nodes(slice(0, 1))[0]

    @property
    def J(self) -> np.ndarray:
        return self._nodes(slice(1, 4)).T.copy()

    @property
    def P(self) -> np.ndarray | None:
        return self._nodes(slice(4, 10)).T.copy() if self.pressure else None

    @property
    def logical_rho(self) -> np.ndarray:
        return self.acc[:, 0]


def node_volumes(grid: Grid) -> np.ndarray:
    """Control volume of every node, halved per direction on periodic images."""
    def axis(n):
        v = np.ones(n + 1)
        v[0] = v[-1] = 0.5
        return v

    vz, vy, vx = axis(grid.nz), axis(grid.ny), axis(grid.nx)
    return (vz[:, None, None] * vy[None, :, None] * vx[None, None, :]).ravel() * grid.cell_volume


@jit
def _deposit(acc, data, count, g, q, pressure):
    nx, ny, nz = int(g[0]), int(g[1]), int(g[2])
    ihx, ihy, ihz = 1.0 / g[6], 1.0 / g[7], 1.0 / g[8]
    qv = q / (g[6] * g[7] * g[8])
    nxy = nx * ny
    for p in range(count):
        i, fx = _cell(data[0, p], ihx, nx)
        j, fy = _cell(data[1, p], ihy, ny)
        k, fz = _cell(data[2, p], ihz, nz)
        u = data[3, p]
        v = data[4, p]
        w = data[5, p]
        i1 = i + 1 if i + 1 < nx else 0
        j0 = j * nx
        j1 = (j + 1 if j + 1 < ny else 0) * nx
        k0 = k * nxy
        k1 = (k + 1 if k + 1 < nz else 0) * nxy
        gx, gy, gz = 1.0 - fx, 1.0 - fy, 1.0 - fz
        for c in range(8):
            n = (i1 if c & 1 else i) + (j1 if c & 2 else j0) + (k1 if c & 4 else k0)
            s = qv * (fx if c & 1 else gx) * (fy if c & 2 else gy) * (fz if c & 4 else gz)
            acc[n, 0] += s
            acc[n, 1] += s * u
            acc[n, 2] += s * v
            acc[n, 3] += s * w
            if pressure:
                acc[n, 4] += s * u * u
                acc[n, 5] += s * u * v
                acc[n, 6] += s * u * w
                acc[n, 7] += s * v * v
                acc[n, 8] += s * v * w
                acc[n, 9] += s * w * w


def deposit_moments(batch: ParticleBatch, grid: Grid, out: MomentMesh) -> MomentMesh:
    """Scatter the batch's charge, current (and pressure) onto ``out``."""
    _deposit(out.acc, batch.data, batch.count, grid.params(), batch.q_per_particle,
             out.pressure)
    return out


# ---------------------------------------------------------------- field phase


@jit
def _smooth_slab(src, dst, j_lo, j_hi):
    nz, ny, nx = src.shape[0], src.shape[1], src.shape[2]
    for k in range(nz):
        km = k - 1 if k > 0 else nz - 1
        kp = k + 1 if k < nz - 1 else 0
        for j in range(j_lo, j_hi):
            jm = j - 1 if j > 0 else ny - 1
            jp = j + 1 if j < ny - 1 else 0
            for i in range(nx):
                im = i - 1 if i > 0 else nx - 1
                ip = i + 1 if i < nx - 1 else 0
                for a in range(3):
                    nb = (src[k, j, im, a] + src[k, j, ip, a] + src[k, jm, i, a]
                          + src[k, jp, i, a] + src[km, j, i, a] + src[kp, j, i, a])
                    dst[k, j, i, a] = 0.5 * src[k, j, i, a] + nb / 12.0


def logical_field(F: np.ndarray, grid: Grid) -> np.ndarray:
    """Copy of a node field without its periodic images, shape (nz, ny, nx, 3)."""
    return np.ascontiguousarray(F.reshape(*grid.node_shape, 3)[:-1, :-1, :-1])


def store_logical(F: np.ndarray, logical: np.ndarray, grid: Grid) -> None:
    full = F.reshape(*grid.node_shape, 3)
    full[:-1, :-1, :-1] = logical
    full[:-1, :-1, -1] = full[:-1, :-1, 0]
    full[:-1, -1, :] = full[:-1, 0, :]
    full[-1] = full[0]


def field_phase_stub(mesh: FieldMesh, grid: Grid, passes: int) -> FieldMesh:
    """Stand-in for the field solve: ``passes`` rounds of periodic 7-point
    averaging of E.  Not physics; it only gives the phase a particle-count
    independent cost.  Updates ``mesh`` in place."""
    if passes < 0:
        raise ValueError("passes must be >= 0")
    if passes == 0:
        return mesh
    src = logical_field(mesh.E, grid)
    dst = np.empty_like(src)
    for _ in range(passes):
        _smooth_slab(src, dst, 0, grid.ny)
        src, dst = dst, src
    store_logical(mesh.E, src, grid)
    return mesh


def check_domain(batch: ParticleBatch, grid: Grid) -> None:
    a = batch.active
    for row, length, name in ((0, grid.lx, "x"), (1, grid.ly, "y"), (2, grid.lz, "z")):
        bad = np.flatnonzero(~((a[row] >= 0) & (a[row] < length)))
        if bad.size:
            raise DomainError(f"particle {bad[0]}: {name}={a[row, bad[0]]!r} outside [0, {length})")
