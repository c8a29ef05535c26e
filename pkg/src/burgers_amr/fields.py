"""Per-block cell data, inter-level transfer operators and initial conditions.

Block arrays are stored as ``(nvar, nz, ny, nx)`` with x fastest.  Two
dimensional problems keep a singleton z axis without ghosts so every kernel
can treat blocks as 3D.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numba
import numpy as np

from .tree import LogicalLocation, build_base_tree


class UnknownProfile(ValueError):
    pass


@dataclass
class InitProfile:
    name: str = "gaussian"
    amplitude: float = 1.0
    scalar_amplitude: Optional[float] = None  # defaults to ``amplitude``
    width: float = 0.1
    center: Optional[Tuple[float, ...]] = None  # defaults to the domain centre
    velocity_offset: Tuple[float, ...] | float = 0.0
    scalar_offset: float = 0.0


@dataclass
class ProblemConfig:
    dim: int = 3
    mesh_cells: Tuple[int, ...] = (64, 64, 64)
    nx1: int = 16
    ng: int = 4
    num_scalar: int = 8
    max_levels: int = 3
    bytes_per_value: int = 8
    cfl: float = 0.4
    dt_max: float = 1.0
    refine_tol: float = 0.05
    derefine_tol: float = 0.01
    derefine_gap: int = 10
    extent: Tuple[float, ...] = (1.0, 1.0, 1.0)
    lower: Tuple[float, ...] = (0.0, 0.0, 0.0)
    periodic: Tuple[bool, ...] = (True, True, True)
    flux_correction: bool = True
    tag_vars: Optional[Tuple[int, ...]] = None
    profile: InitProfile = field(default_factory=InitProfile)

    def __post_init__(self):
        self.mesh_cells = _expand(self.mesh_cells, self.dim, int)
        self.extent = _expand(self.extent, self.dim, float)
        self.lower = _expand(self.lower, self.dim, float)
        self.periodic = _expand(self.periodic, self.dim, bool)
        self.validate()

    def validate(self):
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim}")
        if self.ng < 3:
            raise ValueError(f"ng={self.ng}: WENO5 needs at least 3 ghost cells")
        if self.nx1 < 2 * self.ng or self.nx1 % 2:
            raise ValueError(f"nx1={self.nx1} must be even and >= 2*ng={2 * self.ng}")
        for m in self.mesh_cells:
            if m <= 0 or m % self.nx1:
                raise ValueError(f"mesh size {m} is not a positive multiple of block size {self.nx1}")
        if not 0 < self.derefine_tol < self.refine_tol:
            raise ValueError("need 0 < derefine_tol < refine_tol")
        if self.num_scalar < 0:
            raise ValueError("num_scalar must be >= 0")
        if self.max_levels < 1:
            raise ValueError("max_levels must be >= 1")
        if self.cfl <= 0 or self.dt_max <= 0:
            raise ValueError("cfl and dt_max must be positive")

    @property
    def nvar(self) -> int:
        return self.dim + self.num_scalar

    @property
    def base_layout(self) -> Tuple[int, ...]:
        return tuple(m // self.nx1 for m in self.mesh_cells)

    @property
    def base_level(self) -> int:
        return max(0, math.ceil(math.log2(max(self.base_layout))))

    def cells(self, d: int) -> int:
        """Interior cells along spatial dimension d (x=0)."""
        return self.nx1 if d < self.dim else 1

    def ghosts(self, d: int) -> int:
        return self.ng if d < self.dim else 0

    @property
    def block_shape(self) -> Tuple[int, int, int]:
        """(nz, ny, nx) including ghosts."""
        return tuple(self.cells(d) + 2 * self.ghosts(d) for d in (2, 1, 0))

    @property
    def interior_shape(self) -> Tuple[int, int, int]:
        return tuple(self.cells(d) for d in (2, 1, 0))

    @property
    def interior(self) -> Tuple[slice, slice, slice]:
        return tuple(slice(self.ghosts(d), self.ghosts(d) + self.cells(d)) for d in (2, 1, 0))

    def face_shape(self, d: int) -> Tuple[int, int, int]:
        return tuple(self.cells(e) + (1 if e == d else 0) for e in (2, 1, 0))

    def make_tree(self):
        return build_base_tree(self.mesh_cells, self.nx1, self.dim, self.max_levels, self.periodic)


def _expand(value, dim, kind):
    if isinstance(value, (int, float, bool, np.integer, np.floating)):
        return (kind(value),) * dim
    value = tuple(kind(v) for v in value)
    if len(value) == 1:
        return value * dim
    if len(value) < dim:
        raise ValueError(f"need {dim} values, got {len(value)}")
    return value[:dim]


@dataclass
class MeshBlock:
    loc: LogicalLocation
    U: np.ndarray
    d: np.ndarray
    face_flux: List[np.ndarray]
    dx: Tuple[float, float, float]
    origin: Tuple[float, float, float]
    owner: int = 0
    cost: float = 1.0

    def cell_centers(self, config: ProblemConfig, d: int, with_ghosts: bool = False) -> np.ndarray:
        n, g = config.cells(d), config.ghosts(d)
        idx = np.arange(-g, n + g) if with_ghosts else np.arange(n)
        return self.origin[d] + (idx + 0.5) * self.dx[d]


def block_geometry(config: ProblemConfig, loc: LogicalLocation):
    """Cell widths and lower corner of a block, both padded to three entries."""
    plevel = loc.level - config.base_level
    if plevel < 0:
        raise ValueError(f"{loc} is above the base level {config.base_level}")
    dx, origin = [1.0, 1.0, 1.0], [0.0, 0.0, 0.0]
    for d in range(config.dim):
        base_dx = config.extent[d] / config.mesh_cells[d]
        dx[d] = base_dx / (1 << plevel)
        origin[d] = config.lower[d] + loc.coords[d] * config.nx1 * dx[d]
    return tuple(dx), tuple(origin)


def allocate_block(config: ProblemConfig, loc: LogicalLocation) -> MeshBlock:
    dx, origin = block_geometry(config, loc)
    U = np.zeros((config.nvar,) + config.block_shape)
    d = np.zeros(config.interior_shape)
    flux = [np.zeros((config.nvar,) + config.face_shape(k)) for k in range(config.dim)]
    return MeshBlock(loc, U, d, flux, dx, origin)


def restrict_box(fine: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    """Average 2-cell groups along each axis in ``axes``.

    Pairs are averaged one axis at a time, which keeps constants exact.
    """
    out = fine
    for ax in axes:
        ax = ax % fine.ndim
        lo = [slice(None)] * fine.ndim
        hi = [slice(None)] * fine.ndim
        lo[ax] = slice(0, None, 2)
        hi[ax] = slice(1, None, 2)
        out = (out[tuple(lo)] + out[tuple(hi)]) * 0.5
    return out if out is not fine else fine.copy()


def restrict_cells(fine_values) -> float:
    fine = np.asarray(fine_values, dtype=float).ravel()
    dim = int(round(math.log2(fine.size)))
    if fine.size != 1 << dim or dim < 1:
        raise ValueError("restriction needs 2^dim fine values")
    return float(restrict_box(fine.reshape((2,) * dim), range(dim)).ravel()[0])


def _minmod(a, b):
    return np.where(a * b > 0.0, np.sign(a) * np.minimum(np.abs(a), np.abs(b)), 0.0)


@numba.njit(cache=True, nogil=True)
def _mm(a, b):
    if a * b <= 0.0:
        return 0.0
    if a > 0.0:
        return min(a, b)
    return max(a, b)


@numba.njit(cache=True, nogil=True)
def _prolong4(c, sz, sy, sx):
    # c is (nvar, z, y, x); s* is 1 where that axis is refined
    nv = c.shape[0]
    mz, my, mx = c.shape[1] - 2 * sz, c.shape[2] - 2 * sy, c.shape[3] - 2 * sx
    out = np.empty((nv, mz * (1 + sz), my * (1 + sy), mx * (1 + sx)))
    for v in range(nv):
        for k in range(mz):
            K = k + sz
            for j in range(my):
                J = j + sy
                for i in range(mx):
                    I = i + sx
                    m = c[v, K, J, I]
                    gx = _mm(m - c[v, K, J, I - 1], c[v, K, J, I + 1] - m) if sx else 0.0
                    gy = _mm(m - c[v, K, J - 1, I], c[v, K, J + 1, I] - m) if sy else 0.0
                    gz = _mm(m - c[v, K - 1, J, I], c[v, K + 1, J, I] - m) if sz else 0.0
                    for a in range(1 + sz):
                        for b in range(1 + sy):
                            for e in range(1 + sx):
                                val = m
                                if sx:
                                    val = val + gx * (0.25 if e else -0.25)
                                if sy:
                                    val = val + gy * (0.25 if b else -0.25)
                                if sz:
                                    val = val + gz * (0.25 if a else -0.25)
                                out[v, k * (1 + sz) + a, j * (1 + sy) + b, i * (1 + sx) + e] = val
    return out


def prolong_box(coarse: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    """Minmod-limited linear prolongation of a coarse box with one slop cell per side.

    Along every axis in ``axes`` the input carries one extra coarse cell on
    each side used only for slopes; the output has two fine cells per interior
    coarse cell.  Other axes are passed through unchanged.
    """
    axes = [a % coarse.ndim for a in axes]
    if coarse.ndim == 4 and 0 not in axes:
        return _prolong4(np.ascontiguousarray(coarse, dtype=float),
                         int(1 in axes), int(2 in axes), int(3 in axes))
    return _prolong_numpy(coarse, axes)


def _prolong_numpy(coarse: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    center = [slice(None)] * coarse.ndim
    for ax in axes:
        center[ax] = slice(1, -1)
    c = coarse[tuple(center)]
    fine = c
    for ax in axes:
        fine = np.repeat(fine, 2, axis=ax)
    for ax in axes:
        left = list(center)
        right = list(center)
        left[ax] = slice(0, -2)
        right[ax] = slice(2, None)
        slope = _minmod(c - coarse[tuple(left)], coarse[tuple(right)] - c)
        for a2 in axes:
            slope = np.repeat(slope, 2, axis=a2)
        sign_shape = [1] * coarse.ndim
        sign_shape[ax] = fine.shape[ax]
        signs = np.tile([-0.25, 0.25], fine.shape[ax] // 2).reshape(sign_shape)
        fine = fine + slope * signs
    return fine


def prolong_cells(center: float, left: Sequence[float], right: Sequence[float]) -> np.ndarray:
    """Children of one coarse cell; ``out[i, j(, k)]`` has x bit i, y bit j."""
    dim = len(left)
    if len(right) != dim:
        raise ValueError("left and right neighbours must have one entry per dimension")
    box = np.full((3,) * dim, float(center))
    for d in range(dim):
        idx = [1] * dim
        idx[d] = 0
        box[tuple(idx)] = left[d]
        idx[d] = 2
        box[tuple(idx)] = right[d]
    return prolong_box(box, range(dim))


def calculate_derived(U: np.ndarray, dim: int, interior=None) -> np.ndarray:
    """d = 0.5 * q0 * |u|^2 on interior cells (q0 taken as 1 without scalars).

    ``U`` may be one block ``(nvar, z, y, x)`` or a stack with a leading block axis.
    """
    lead = U.ndim - 4
    sl = (slice(None),) * lead
    if interior is not None:
        U = U[sl + (slice(None),) + tuple(interior)]
    usq = U[sl + (0,)] * U[sl + (0,)]
    for k in range(1, dim):
        usq = usq + U[sl + (k,)] * U[sl + (k,)]
    q0 = U[sl + (dim,)] if U.shape[lead] > dim else 1.0
    return 0.5 * q0 * usq


def profile_values(profile: InitProfile, config: ProblemConfig,
                   coords: Sequence[np.ndarray]) -> np.ndarray:
    """Evaluate a named profile at cell centres.

    ``coords`` are broadcastable x, y(, z) coordinate arrays; returns an array
    with a leading variable axis.
    """
    dim = config.dim
    shape = np.broadcast_shapes(*[np.shape(c) for c in coords])
    out = np.empty((config.nvar,) + shape)
    voff = _expand(profile.velocity_offset, dim, float)
    samp = profile.amplitude if profile.scalar_amplitude is None else profile.scalar_amplitude
    if profile.name == "constant":
        for k in range(dim):
            out[k] = voff[k] + profile.amplitude
        out[dim:] = profile.scalar_offset + samp
    elif profile.name == "sine":
        waves = [np.sin(2.0 * np.pi * (coords[k] - config.lower[k]) / config.extent[k])
                 for k in range(dim)]
        for k in range(dim):
            out[k] = voff[k] + profile.amplitude * waves[k]
        out[dim:] = profile.scalar_offset + samp * sum(waves) / dim
    elif profile.name == "gaussian":
        center = profile.center
        if center is None:
            center = tuple(config.lower[k] + 0.5 * config.extent[k] for k in range(dim))
        r2 = 0.0
        for k in range(dim):
            dist = coords[k] - center[k]
            if config.periodic[k]:
                L = config.extent[k]
                dist = dist - L * np.round(dist / L)
            r2 = r2 + dist * dist
        bump = np.exp(-0.5 * r2 / profile.width ** 2)
        for k in range(dim):
            out[k] = voff[k] + profile.amplitude * bump
        out[dim:] = profile.scalar_offset + samp * bump
    else:
        raise UnknownProfile(profile.name)
    return out


def init_conditions(block: MeshBlock, config: ProblemConfig,
                    profile: Optional[InitProfile] = None) -> np.ndarray:
    """Fill the block interior from a named profile (point values at centres)."""
    profile = config.profile if profile is None else profile
    xs = [block.cell_centers(config, d) for d in range(config.dim)]
    if config.dim == 2:
        coords = (xs[0][None, None, :], xs[1][None, :, None])
    else:
        coords = (xs[0][None, None, :], xs[1][None, :, None], xs[2][:, None, None])
    vals = profile_values(profile, config, coords)
    block.U[(slice(None),) + config.interior] = vals
    block.d[...] = calculate_derived(block.U, config.dim, config.interior)
    return block.U
