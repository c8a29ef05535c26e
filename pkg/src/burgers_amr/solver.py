"""WENO5 + HLL finite-volume kernels for vector Burgers with passive scalars.

Velocity components occupy the first ``dim`` variables; the remaining
variables are scalars advected by the velocity.  Fluxes along direction n:

    F(u_m) = 0.5 * u_n * u_m        F(q) = q * u_n
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

WENO_EPS = 1e-6
VEL_EPS = 1e-12
TAG_FLOOR = 1e-10


class ShapeMismatch(ValueError):
    pass


@numba.njit(cache=True, nogil=True)
def weno5_face(a, b, c, d, e):
    """Value at the right face of cell c from the stencil (a, b, c, d, e).

    Nonlinear weights gamma_k / (eps + beta_k)^2 are scaled by the product of
    all three denominators so only one division is needed.
    """
    b0 = 13.0 / 12.0 * (a - 2.0 * b + c) ** 2 + 0.25 * (a - 4.0 * b + 3.0 * c) ** 2
    b1 = 13.0 / 12.0 * (b - 2.0 * c + d) ** 2 + 0.25 * (b - d) ** 2
    b2 = 13.0 / 12.0 * (c - 2.0 * d + e) ** 2 + 0.25 * (3.0 * c - 4.0 * d + e) ** 2
    t0 = (WENO_EPS + b0) ** 2
    t1 = (WENO_EPS + b1) ** 2
    t2 = (WENO_EPS + b2) ** 2
    w0 = 0.1 * t1 * t2
    w1 = 0.6 * t0 * t2
    w2 = 0.3 * t0 * t1
    # candidates written as c + differences so constants come back exactly
    q0 = 2.0 * (a - b) - 5.0 * (b - c)
    q1 = 2.0 * (d - c) - (b - c)
    q2 = 5.0 * (d - c) - (e - c)
    return c + (w0 * q0 + w1 * q1 + w2 * q2) / (6.0 * (w0 + w1 + w2))


@numba.njit(cache=True, nogil=True)
def _weno5_rows(s, out):
    for i in range(s.shape[0]):
        out[i] = weno5_face(s[i, 0], s[i, 1], s[i, 2], s[i, 3], s[i, 4])


def weno5_reconstruct(stencil) -> np.ndarray | float:
    """Reconstruct the right-face value from 5 consecutive cell averages.

    ``stencil`` has a trailing axis of length 5.  For the left-face value of
    the middle cell pass the stencil reversed.
    """
    s = np.asarray(stencil, dtype=float)
    if s.shape[-1] != 5:
        raise ShapeMismatch("WENO5 needs a trailing axis of length 5")
    flat = np.ascontiguousarray(s.reshape(-1, 5))
    out = np.empty(flat.shape[0])
    _weno5_rows(flat, out)
    if s.ndim == 1:
        return float(out[0])
    return out.reshape(s.shape[:-1])


@numba.njit(cache=True, nogil=True)
def _hll(wl, wr, fl, fr, sl, sr):
    if sl >= 0.0:
        return fl
    if sr <= 0.0:
        return fr
    return (sr * fl - sl * fr + sl * sr * (wr - wl)) / (sr - sl)


@numba.njit(cache=True, nogil=True)
def _face_flux(wl, wr, out, vel, nvel):
    ul = wl[vel]
    ur = wr[vel]
    sl = min(ul, ur)
    sr = max(ul, ur)
    for v in range(wl.shape[0]):
        if v < nvel:
            fl = 0.5 * ul * wl[v]
            fr = 0.5 * ur * wr[v]
        else:
            fl = ul * wl[v]
            fr = ur * wr[v]
        out[v] = _hll(wl[v], wr[v], fl, fr, sl, sr)


def physical_flux(w, normal_dim: int, dim: int) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    un = w[normal_dim]
    f = un * w
    f[:dim] *= 0.5
    return f


def hll_flux(left, right, normal_dim: int, dim: int | None = None) -> np.ndarray:
    """HLL flux between two states (``dim`` velocity components first)."""
    wl = np.ascontiguousarray(left, dtype=float)
    wr = np.ascontiguousarray(right, dtype=float)
    if wl.shape != wr.shape or wl.ndim != 1:
        raise ShapeMismatch("left/right states must be equal-length vectors")
    dim = wl.shape[0] if dim is None else dim
    if not 0 <= normal_dim < dim:
        raise ValueError("normal_dim must index a velocity component")
    out = np.empty_like(wl)
    _face_flux(wl, wr, out, normal_dim, dim)
    return out


@numba.njit(cache=True, nogil=True)
def _sweep(U, F, gz, gy, gx, dk, dj, di, vel, nvel):
    """Face fluxes along the direction (dk, dj, di) for stacked blocks.

    F[b, :, kk, jj, ii] is the face whose upper cell is U[b, :, kk+gz, jj+gy, ii+gx];
    the x index runs innermost for every direction.
    """
    nb, nv = F.shape[0], F.shape[1]
    nk, nj, ni = F.shape[2], F.shape[3], F.shape[4]
    wl = np.empty((nv, ni))
    wr = np.empty((nv, ni))
    sl = np.empty(nv)
    sr = np.empty(nv)
    fo = np.empty(nv)
    for b in range(nb):
        for kk in range(nk):
            k = kk + gz
            for jj in range(nj):
                j = jj + gy
                for v in range(nv):
                    for ii in range(ni):
                        i = ii + gx
                        m3 = U[b, v, k - 3 * dk, j - 3 * dj, i - 3 * di]
                        m2 = U[b, v, k - 2 * dk, j - 2 * dj, i - 2 * di]
                        m1 = U[b, v, k - dk, j - dj, i - di]
                        p0 = U[b, v, k, j, i]
                        p1 = U[b, v, k + dk, j + dj, i + di]
                        p2 = U[b, v, k + 2 * dk, j + 2 * dj, i + 2 * di]
                        wl[v, ii] = weno5_face(m3, m2, m1, p0, p1)
                        wr[v, ii] = weno5_face(p2, p1, p0, m1, m2)
                for ii in range(ni):
                    for v in range(nv):
                        sl[v] = wl[v, ii]
                        sr[v] = wr[v, ii]
                    _face_flux(sl, sr, fo, vel, nvel)
                    for v in range(nv):
                        F[b, v, kk, jj, ii] = fo[v]


def compute_fluxes(U: np.ndarray, fluxes, config) -> None:
    """Fill ``fluxes[d]`` for every block of the stacked state ``U``."""
    gz, gy, gx = (config.ghosts(e) for e in (2, 1, 0))
    for d in range(config.dim):
        step = [0, 0, 0]
        step[d] = 1
        _sweep(U, fluxes[d], gz, gy, gx, step[2], step[1], step[0], d, config.dim)


def _axis(d: int) -> int:
    """Array axis of spatial dimension d in a stacked (nb, nvar, z, y, x) array."""
    return 4 - d


def calculate_fluxes(block, config):
    """Per-block face fluxes; ghosts must be current."""
    compute_fluxes(block.U[None], [f[None] for f in block.face_flux], config)
    return block.face_flux


def divergence(fluxes, dx: np.ndarray, config, out: np.ndarray | None = None) -> np.ndarray:
    """-(sum_d dF_d/dx_d) for stacked flux arrays; dx has shape (nb, 3)."""
    nb = fluxes[0].shape[0]
    shape = (nb, config.nvar) + config.interior_shape
    L = np.zeros(shape) if out is None else out
    if out is not None:
        L[...] = 0.0
    for d in range(config.dim):
        F = fluxes[d]
        ax = _axis(d)
        hi = [slice(None)] * 5
        lo = [slice(None)] * 5
        hi[ax] = slice(1, None)
        lo[ax] = slice(0, -1)
        L -= (F[tuple(hi)] - F[tuple(lo)]) / dx[:, d].reshape(nb, 1, 1, 1, 1)
    return L


def flux_divergence(block, config) -> np.ndarray:
    dx = np.asarray(block.dx, dtype=float).reshape(1, 3)
    return divergence([f[None] for f in block.face_flux], dx, config)[0]


def weighted_sum_data(X, Y, a: float, b: float, out=None):
    X = np.asarray(X)
    Y = np.asarray(Y)
    if X.shape != Y.shape:
        raise ShapeMismatch(f"{X.shape} vs {Y.shape}")
    if out is None:
        return a * X + b * Y
    tmp = b * Y
    np.multiply(X, a, out=out)
    out += tmp
    return out


@dataclass(frozen=True)
class StageCoefficients:
    a: float
    b: float


def rk2_stages(dt: float):
    """(combine U^0 with U^1, ...) coefficients for the Heun form.

    Stage 1: U1 = 1*U0 + dt*L(U0).  Stage 2: U = 0.5*U0 + 0.5*(U1 + dt*L(U1)).
    """
    return StageCoefficients(1.0, dt), StageCoefficients(0.5, 0.5)


def rk2_advance(U0, dt: float, eval_L):
    """Two-stage Heun update of a plain array given a residual callback."""
    first, second = rk2_stages(dt)
    U1 = weighted_sum_data(U0, eval_L(U0), first.a, first.b)
    U2 = weighted_sum_data(U1, eval_L(U1), 1.0, dt)
    return weighted_sum_data(U0, U2, second.a, second.b)


def block_timesteps(U: np.ndarray, dx: np.ndarray, config) -> np.ndarray:
    """Per-block min over cells and dims of dx_d / (|u_d| + eps)."""
    nb = U.shape[0]
    inner = U[(slice(None), slice(None)) + config.interior]
    dts = np.full(nb, np.inf)
    for d in range(config.dim):
        umax = np.abs(inner[:, d]).reshape(nb, -1).max(axis=1)
        dts = np.minimum(dts, dx[:, d] / (umax + VEL_EPS))
    return dts


def estimate_timestep(U: np.ndarray, dx: np.ndarray, config, dt_max: float | None = None) -> float:
    dt_max = config.dt_max if dt_max is None else dt_max
    if U.shape[0] == 0:
        return dt_max
    dt = config.cfl * float(np.min(block_timesteps(U, dx, config)))
    return min(dt, dt_max)


@numba.njit(cache=True, nogil=True)
def _indicator(U, tvars, gz, gy, gx, nz, ny, nx, dim):
    nb = U.shape[0]
    s = np.zeros(nb)
    for b in range(nb):
        best = 0.0
        for v in tvars:
            for k in range(gz, gz + nz):
                for j in range(gy, gy + ny):
                    for i in range(gx, gx + nx):
                        den = 2.0 * max(abs(U[b, v, k, j, i]), TAG_FLOOR)
                        r = abs(U[b, v, k, j, i + 1] - U[b, v, k, j, i - 1]) / den
                        if r > best:
                            best = r
                        r = abs(U[b, v, k, j + 1, i] - U[b, v, k, j - 1, i]) / den
                        if r > best:
                            best = r
                        if dim == 3:
                            r = abs(U[b, v, k + 1, j, i] - U[b, v, k - 1, j, i]) / den
                            if r > best:
                                best = r
        s[b] = best
    return s


def refinement_indicator(U: np.ndarray, config, tag_vars=None) -> np.ndarray:
    """max |w_{i+1} - w_{i-1}| / (2 max(|w_i|, floor)) per block of a stack."""
    if tag_vars is None:
        tag_vars = config.tag_vars
    if tag_vars is None:
        tag_vars = tuple(range(min(config.dim + 1, config.nvar)))
    tvars = np.asarray(tag_vars, dtype=np.int64)
    if tvars.size and (tvars.min() < 0 or tvars.max() >= U.shape[1]):
        raise IndexError(f"tag variable out of range: {tag_vars}")
    g = [config.ghosts(d) for d in range(3)]
    n = [config.cells(d) for d in range(3)]
    return _indicator(U, tvars, g[2], g[1], g[0], n[2], n[1], n[0], config.dim)


def tag_from_indicator(s: float, refine_tol: float, derefine_tol: float):
    from .tree import Tag

    if s > refine_tol:
        return Tag.REFINE
    if s < derefine_tol:
        return Tag.DEREFINE
    return Tag.NONE


def tag_refinement(block, config, refine_tol=None, derefine_tol=None):
    refine_tol = config.refine_tol if refine_tol is None else refine_tol
    derefine_tol = config.derefine_tol if derefine_tol is None else derefine_tol
    s = refinement_indicator(block.U[None], config)[0]
    return tag_from_indicator(s, refine_tol, derefine_tol)
