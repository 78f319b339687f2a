"""Candidate measurement construction for Cartesian k-space sampling design.

The design machinery works on a finite candidate set of measurement rows.
Each row is a Fourier-encoding vector evaluated on the image voxel grid,
optionally weighted by a receiver-coil sensitivity profile.  Rows that can
only be acquired together (one readout line, or one k-space location seen
simultaneously by every coil) are collected into groups; groups are the
atomic unit that the design algorithms keep or delete.

Conventions fixed here and used package-wide:

* voxels are row-major, voxel ``n = n1 * N2 + n2`` sits at
  ``r_n = (n1 * fov1 / N1, n2 * fov2 / N2)`` millimetres;
* k-space coordinates are in cycles/mm on a centred Cartesian grid with
  spacing ``1 / (oversampling * fov)`` per axis;
* candidate rows are indexed location-major, coil-minor:
  ``p = location_index * n_coils + coil_index``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import OedipusError

__all__ = [
    "ImageGrid",
    "VoxelBasis",
    "CandidateSet",
    "EncodingModel",
    "EncodingOperator",
    "build_cartesian_candidates",
    "candidate_row",
    "group_rows",
    "synthesize_coil_maps",
    "normalized_coords",
]


@dataclass(frozen=True)
class ImageGrid:
    """Rectilinear voxel grid.

    Parameters
    ----------
    dims : (int, int)
        Voxel counts ``(N1, N2)`` along the two image axes.
    fov : (float, float)
        Field of view in millimetres along the two axes.
    """

    dims: tuple[int, int]
    fov: tuple[float, float] = (200.0, 200.0)

    def __post_init__(self):
        n1, n2 = self.dims
        if n1 <= 0 or n2 <= 0:
            raise ValueError(f"zero-sized grid: dims={self.dims}")
        if self.fov[0] <= 0 or self.fov[1] <= 0:
            raise ValueError(f"field of view must be positive: fov={self.fov}")

    @property
    def n_voxels(self) -> int:
        return self.dims[0] * self.dims[1]

    def voxel_coords(self) -> np.ndarray:
        """Voxel centre positions, shape (N, 2), millimetres, row-major."""
        n1, n2 = self.dims
        i1, i2 = np.meshgrid(np.arange(n1), np.arange(n2), indexing="ij")
        r1 = i1.ravel() * (self.fov[0] / n1)
        r2 = i2.ravel() * (self.fov[1] / n2)
        return np.stack([r1, r2], axis=1)

    def voxel_index_coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Integer voxel indices (n1, n2) of the row-major flattening."""
        i1, i2 = np.meshgrid(
            np.arange(self.dims[0]), np.arange(self.dims[1]), indexing="ij"
        )
        return i1.ravel(), i2.ravel()


@dataclass(frozen=True)
class VoxelBasis:
    """Voxel basis function selector.

    ``dirac`` gives unit weights; ``rect`` weights each candidate row by the
    separable sinc of ``k * voxel_size`` along both axes (the k-space
    footprint of a rectangular voxel).
    """

    kind: str = "dirac"

    def __post_init__(self):
        if self.kind not in ("dirac", "rect"):
            raise ValueError(f"unknown voxel basis {self.kind!r}")

    def weights(self, klocs: np.ndarray, grid: ImageGrid) -> np.ndarray:
        """Per-location weights b_p, shape (n_locations,)."""
        if self.kind == "dirac":
            return np.ones(klocs.shape[0])
        vox1 = grid.fov[0] / grid.dims[0]
        vox2 = grid.fov[1] / grid.dims[1]
        return np.sinc(klocs[:, 0] * vox1) * np.sinc(klocs[:, 1] * vox2)


@dataclass(frozen=True, eq=False)
class CandidateSet:
    """All candidate k-space measurements plus their acquisition grouping.

    ``klocs[j]`` is the j-th location in cycles/mm and ``kidx[j]`` its signed
    integer offset from the k-space centre.  Row ``p`` corresponds to
    location ``p // n_coils`` seen by coil ``p % n_coils``.  ``groups[l]``
    lists the rows of group ``l`` (ascending), ``group_locs[l]`` the
    location indices it covers.
    """

    klocs: np.ndarray
    kidx: np.ndarray
    grid_dims: tuple[int, int]
    oversampling: float
    n_coils: int
    undersample_axes: tuple[int, ...]
    groups: tuple[np.ndarray, ...]
    group_locs: tuple[np.ndarray, ...]

    @property
    def n_locations(self) -> int:
        return self.klocs.shape[0]

    @property
    def P(self) -> int:
        return self.n_locations * self.n_coils

    @property
    def L(self) -> int:
        return len(self.groups)

    @property
    def C(self) -> int:
        return len(self.groups[0])


def build_cartesian_candidates(
    grid: ImageGrid,
    oversampling: float = 1.0,
    undersample_axes: tuple[int, ...] = (0, 1),
    n_coils: int = 1,
) -> CandidateSet:
    """Enumerate a centred Cartesian candidate grid and group its rows.

    The candidate grid has ``ceil(oversampling * N)`` locations per axis at
    spacing ``1 / (oversampling * fov)``; a singleton axis stays singleton
    (its voxel coordinate is zero, so extra offsets would duplicate rows
    exactly).  With 2D undersampling every location forms its own group
    (times coils, ``C = n_coils``); with 1D undersampling along one axis
    each group is a full readout line along the other axis
    (``C = n_readout * n_coils``).
    """
    axes = tuple(sorted(set(undersample_axes)))
    if not axes:
        raise ValueError("undersample_axes must be nonempty")
    if any(a not in (0, 1) for a in axes):
        raise ValueError(f"undersample_axes must be within (0, 1), got {axes}")
    if oversampling < 1.0:
        raise ValueError(f"oversampling must be >= 1, got {oversampling}")
    if n_coils < 1:
        raise ValueError(f"n_coils must be >= 1, got {n_coils}")

    g1 = math.ceil(oversampling * grid.dims[0]) if grid.dims[0] > 1 else 1
    g2 = math.ceil(oversampling * grid.dims[1]) if grid.dims[1] > 1 else 1
    m1 = np.arange(g1) - g1 // 2
    m2 = np.arange(g2) - g2 // 2
    mm1, mm2 = np.meshgrid(m1, m2, indexing="ij")
    kidx = np.stack([mm1.ravel(), mm2.ravel()], axis=1)
    dk1 = 1.0 / (oversampling * grid.fov[0])
    dk2 = 1.0 / (oversampling * grid.fov[1])
    klocs = kidx * np.array([dk1, dk2])

    n_locs = g1 * g2
    loc_ids = np.arange(n_locs).reshape(g1, g2)
    if axes == (0, 1):
        group_locs = [np.array([j]) for j in range(n_locs)]
    elif axes == (0,):
        group_locs = [loc_ids[i, :].copy() for i in range(g1)]
    else:  # axes == (1,)
        group_locs = [loc_ids[:, j].copy() for j in range(g2)]

    groups = []
    for locs in group_locs:
        rows = (locs[:, None] * n_coils + np.arange(n_coils)[None, :]).ravel()
        groups.append(np.sort(rows))

    return CandidateSet(
        klocs=klocs,
        kidx=kidx,
        grid_dims=(g1, g2),
        oversampling=float(oversampling),
        n_coils=n_coils,
        undersample_axes=axes,
        groups=tuple(groups),
        group_locs=tuple(np.sort(l) for l in group_locs),
    )


@dataclass(frozen=True, eq=False)
class EncodingModel:
    """Voxel grid, voxel basis, coil maps and candidate set in one bundle.

    ``coil_maps`` holds one map set per representative acquisition model
    (length T); each entry is an (n_coils, N) complex array of sensitivity
    values at the voxel centres.  Single-channel imaging uses one all-ones
    map.  Noise is assumed white with unit variance (pre-whitened data).
    """

    grid: ImageGrid
    candidates: CandidateSet
    coil_maps: tuple[np.ndarray, ...]
    basis: VoxelBasis = field(default_factory=VoxelBasis)
    noise_sigma: float = 1.0

    def __post_init__(self):
        if len(self.coil_maps) < 1:
            raise ValueError("at least one coil map set is required")
        n = self.grid.n_voxels
        for maps in self.coil_maps:
            if maps.shape != (self.candidates.n_coils, n):
                raise ValueError(
                    f"coil map shape {maps.shape} does not match "
                    f"({self.candidates.n_coils}, {n})"
                )

    @property
    def T(self) -> int:
        return len(self.coil_maps)

    @property
    def n_coils(self) -> int:
        return self.candidates.n_coils

    @property
    def N(self) -> int:
        return self.grid.n_voxels


def single_channel_model(
    grid: ImageGrid, candidates: CandidateSet, basis: VoxelBasis | None = None
) -> EncodingModel:
    """Model with one all-ones sensitivity map (plain Fourier encoding)."""
    if candidates.n_coils != 1:
        raise ValueError("single-channel model requires n_coils == 1 candidates")
    maps = (np.ones((1, grid.n_voxels), dtype=complex),)
    return EncodingModel(
        grid=grid,
        candidates=candidates,
        coil_maps=maps,
        basis=basis or VoxelBasis(),
    )


def normalized_coords(dims: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    """Per-axis coordinates centred on the grid, in units of the FOV.

    ``u = (index - (N - 1) / 2) / N`` spans roughly [-0.5, 0.5] and is
    symmetric under 180-degree rotation of the grid.
    """
    n1, n2 = dims
    u1 = (np.arange(n1) - (n1 - 1) / 2.0) / n1
    u2 = (np.arange(n2) - (n2 - 1) / 2.0) / n2
    return u1, u2


def synthesize_coil_maps(
    grid: ImageGrid, n_coils: int, decay: float = 5.0, seed: int = 0
) -> np.ndarray:
    """Smooth synthetic receiver sensitivities, shape (n_coils, N).

    Gaussian magnitude lobes sit at equispaced angles on a ring near the
    FOV boundary (ring orientation, phase ramps and offsets drawn from
    ``seed``), so different seeds emulate subject-to-subject variation.
    ``n_coils == 1`` returns the all-ones map used for single-channel
    imaging.  The sum-of-squares magnitude stays bounded away from zero
    over the grid for moderate ``decay``.
    """
    if n_coils < 1:
        raise ValueError(f"n_coils must be >= 1, got {n_coils}")
    if decay <= 0:
        raise ValueError(f"decay must be positive, got {decay}")
    n = grid.n_voxels
    if n_coils == 1:
        return np.ones((1, n), dtype=complex)

    rng = np.random.default_rng(seed)
    u1, u2 = normalized_coords(grid.dims)
    uu1, uu2 = np.meshgrid(u1, u2, indexing="ij")
    uu1 = uu1.ravel()
    uu2 = uu2.ravel()

    theta0 = rng.uniform(0.0, 2.0 * np.pi)
    radius = 0.55
    maps = np.empty((n_coils, n), dtype=complex)
    for c in range(n_coils):
        theta = theta0 + 2.0 * np.pi * c / n_coils
        c1 = radius * np.cos(theta)
        c2 = radius * np.sin(theta)
        d2 = (uu1 - c1) ** 2 + (uu2 - c2) ** 2
        mag = np.exp(-decay * d2)
        a1, a2 = rng.uniform(-np.pi, np.pi, size=2)
        phi0 = rng.uniform(0.0, 2.0 * np.pi)
        phase = a1 * uu1 + a2 * uu2 + phi0
        maps[c] = mag * np.exp(1j * phase)
    return maps


def _row_phases(model: EncodingModel, loc_indices: np.ndarray) -> np.ndarray:
    """exp(-i 2 pi k_p . r_n) for the given locations, shape (n_loc, N)."""
    cand = model.candidates
    n1, n2 = model.grid.dims
    ov = cand.oversampling
    i1, i2 = model.grid.voxel_index_coords()
    m = cand.kidx[loc_indices]
    # k . r reduces to m1*n1/(ov*N1) + m2*n2/(ov*N2); fov cancels exactly.
    phase = (
        m[:, 0:1] * (i1[None, :] / (ov * n1))
        + m[:, 1:2] * (i2[None, :] / (ov * n2))
    )
    return np.exp(-2j * np.pi * phase)


def candidate_row(model: EncodingModel, p: int, t: int) -> np.ndarray:
    """Single candidate measurement row, shape (N,).

    Entry n is ``c_p(r_n) * b_p * exp(-i 2 pi k_p . r_n)`` where the coil
    profile is taken from map set ``t`` for coil ``p % n_coils``.  With a
    unit coil map and dirac basis this is a pure DFT row.
    """
    cand = model.candidates
    if not 0 <= p < cand.P:
        raise ValueError(f"row index {p} out of range [0, {cand.P})")
    if not 0 <= t < model.T:
        raise ValueError(f"map-set index {t} out of range [0, {model.T})")
    loc = p // cand.n_coils
    coil = p % cand.n_coils
    b = model.basis.weights(cand.klocs[loc : loc + 1], model.grid)[0]
    phases = _row_phases(model, np.array([loc]))[0]
    return model.coil_maps[t][coil] * b * phases


def group_rows(model: EncodingModel, group_index: int, t: int) -> np.ndarray:
    """All rows of one group stacked in ascending row order, shape (C, N)."""
    cand = model.candidates
    if not 0 <= group_index < cand.L:
        raise ValueError(f"group index {group_index} out of range [0, {cand.L})")
    if not 0 <= t < model.T:
        raise ValueError(f"map-set index {t} out of range [0, {model.T})")
    locs = cand.group_locs[group_index]
    b = model.basis.weights(cand.klocs[locs], model.grid)
    phases = _row_phases(model, locs)  # (n_loc, N)
    maps = model.coil_maps[t]  # (n_coils, N)
    # rows ordered location-major, coil-minor to match row index p ordering
    block = (b[:, None, None] * phases[:, None, :]) * maps[None, :, :]
    return block.reshape(-1, model.N)


class EncodingOperator:
    """Applies the measurement matrix of the retained groups and its adjoint.

    Rows are ordered by ascending kept group, within a group by ascending
    row index.  An FFT fast path is used when the candidate grid coincides
    with the voxel grid (oversampling 1); otherwise rows are materialized
    densely.
    """

    def __init__(self, model: EncodingModel, kept_groups, t: int = 0):
        cand = model.candidates
        kept = sorted(int(g) for g in kept_groups)
        if not kept:
            raise ValueError("kept_groups must be nonempty")
        if kept[0] < 0 or kept[-1] >= cand.L:
            raise ValueError("kept_groups outside candidate group range")
        if not 0 <= t < model.T:
            raise ValueError(f"map-set index {t} out of range [0, {model.T})")
        self.model = model
        self.t = t
        self.kept_groups = tuple(kept)
        self._locs = np.concatenate([cand.group_locs[g] for g in kept])
        self._b = model.basis.weights(cand.klocs[self._locs], model.grid)
        self.n_rows = self._locs.size * cand.n_coils
        g1, g2 = model.grid.dims
        self._fft_ok = cand.grid_dims == (g1, g2) and cand.oversampling == 1.0
        if self._fft_ok:
            m = cand.kidx[self._locs]
            self._f1 = np.mod(m[:, 0], g1)
            self._f2 = np.mod(m[:, 1], g2)
        else:
            if self._locs.size * model.N > 5_000_000:
                raise OedipusError(
                    "dense fallback too large; use a Nyquist candidate grid"
                )
            self._dense = np.concatenate(
                [group_rows(model, g, t) for g in kept], axis=0
            )

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.model.N)

    def forward(self, x: np.ndarray) -> np.ndarray:
        """A @ x for a flat image vector x, returns the (M,) data vector."""
        model = self.model
        if not self._fft_ok:
            return self._dense @ x
        img = np.asarray(x).reshape(model.grid.dims)
        maps = model.coil_maps[self.t]
        out = np.empty((self._locs.size, model.n_coils), dtype=complex)
        for c in range(model.n_coils):
            spec = np.fft.fft2(maps[c].reshape(model.grid.dims) * img)
            out[:, c] = spec[self._f1, self._f2]
        out *= self._b[:, None]
        return out.ravel()

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        """A^H @ y, returns a flat (N,) image vector."""
        model = self.model
        if not self._fft_ok:
            return self._dense.conj().T @ y
        n1, n2 = model.grid.dims
        vals = np.asarray(y).reshape(self._locs.size, model.n_coils)
        vals = vals * self._b[:, None]
        maps = model.coil_maps[self.t]
        out = np.zeros(model.N, dtype=complex)
        for c in range(model.n_coils):
            grid_data = np.zeros((n1, n2), dtype=complex)
            grid_data[self._f1, self._f2] = vals[:, c]
            img = np.fft.ifft2(grid_data) * (n1 * n2)
            out += maps[c].conj() * img.ravel()
        return out
