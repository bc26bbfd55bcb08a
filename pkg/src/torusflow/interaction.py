"""Drift functionals built from periodic convolution kernels.

A model couples l species through an l x l matrix of kernels sampled on the
lattice offsets k*dx of the working grid:

* potential mode: scalar kernels W_ij and U_i[rho] = sum_j W_ij * rho_j plus
  a nonnegativity shift.  The induced advection velocity is -grad U_i (mass
  slides down the potential), so the minimizing-movement route and the
  finite-volume route integrate the same dynamics.
* velocity mode: vector kernels B_ij and V_i[rho] = sum_j B_ij * rho_j, not
  necessarily a gradient.

``estimate_constants`` produces numeric stand-ins for the regularity
constants of the drift: a sup bound on the kernel gradients (lip_x), a
sampled Wasserstein-Lipschitz ratio for rho -> V[rho] (lip_w2) and a bound on
the positive part of the kernel Laplacian/divergence (lap_plus).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import (
    Density,
    Grid,
    ScalarField,
    VectorField,
    centered_grad_values,
    laplacian_values,
    minimal_image,
    normalize,
)

__all__ = [
    "DriftModel",
    "DriftConstants",
    "potential_from_kernel",
    "velocity_field",
    "estimate_constants",
    "stability_constant",
    "as_velocity_model",
    "circular_convolve",
    "circular_convolve_direct",
    "cosine_kernel",
    "gaussian_bump_kernel",
    "zero_kernel",
]


def circular_convolve(grid: Grid, kernel: np.ndarray, values: np.ndarray) -> np.ndarray:
    """(kernel * values)(x_i) = sum_j kernel[(i-j) mod n] values[j] dx^d."""
    out = np.fft.ifftn(np.fft.fftn(kernel) * np.fft.fftn(values))
    return np.real(out) * grid.cell_volume


def circular_convolve_direct(grid: Grid, kernel: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Summation reference for the transform path; O(cells^2), tests only."""
    n = grid.n
    out = np.zeros(grid.shape)
    for idx in np.ndindex(grid.shape):
        shifted = kernel
        for axis, i in enumerate(idx):
            take = (i - np.arange(n)) % n
            shifted = np.take(shifted, take, axis=axis)
        out[idx] = np.sum(shifted * values)
    return out * grid.cell_volume


def cosine_kernel(grid: Grid, amplitude: float = 1.0, frequency: int = 1) -> np.ndarray:
    offs = grid.offset_grids()
    out = np.full(grid.shape, amplitude)
    for z in offs:
        out = out * np.cos(2.0 * np.pi * frequency * z)
    return out


def gaussian_bump_kernel(grid: Grid, sigma: float, amplitude: float = 1.0) -> np.ndarray:
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    offs = grid.offset_grids()
    r2 = np.zeros(grid.shape)
    for z in offs:
        r2 += minimal_image(z) ** 2
    return amplitude * np.exp(-r2 / (2.0 * sigma**2))


def zero_kernel(grid: Grid) -> np.ndarray:
    return np.zeros(grid.shape)


@dataclass(frozen=True)
class DriftModel:
    """Convolution-backed drift for l interacting species."""

    grid: Grid
    mode: str  # "potential" or "velocity"
    kernels: np.ndarray  # potential: (l, l, *shape); velocity: (l, l, dim, *shape)
    nonneg_shift: float = 0.0

    def __post_init__(self) -> None:
        if self.mode not in ("potential", "velocity"):
            raise ValueError(f"unknown drift mode {self.mode!r}")
        arr = np.asarray(self.kernels, dtype=float)
        if self.mode == "potential":
            want_tail = self.grid.shape
        else:
            want_tail = (self.grid.dim,) + self.grid.shape
        if arr.ndim != 2 + len(want_tail) or arr.shape[0] != arr.shape[1]:
            raise ValueError("kernels must form a square species matrix")
        if arr.shape[2:] != want_tail:
            raise ValueError(
                f"kernel entries have shape {arr.shape[2:]}, expected {want_tail}"
            )
        if not np.all(np.isfinite(arr)):
            raise ValueError("kernels contain non-finite entries")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "kernels", arr)

    @property
    def species_count(self) -> int:
        return self.kernels.shape[0]

    @classmethod
    def potential(cls, grid: Grid, kernels, nonneg_shift: float | None = None) -> "DriftModel":
        arr = np.asarray(kernels, dtype=float)
        if nonneg_shift is None:
            # sum_j max|W_ij| bounds |U_i| from below after shifting.
            per_species = np.max(np.abs(arr), axis=tuple(range(2, arr.ndim))).sum(axis=1)
            nonneg_shift = float(np.max(per_species)) if per_species.size else 0.0
        return cls(grid=grid, mode="potential", kernels=arr, nonneg_shift=nonneg_shift)

    @classmethod
    def velocity(cls, grid: Grid, kernels) -> "DriftModel":
        return cls(grid=grid, mode="velocity", kernels=np.asarray(kernels, dtype=float))

    @classmethod
    def none(cls, grid: Grid, species: int = 1, mode: str = "potential") -> "DriftModel":
        if mode == "potential":
            kernels = np.zeros((species, species) + grid.shape)
        else:
            kernels = np.zeros((species, species, grid.dim) + grid.shape)
        return cls(grid=grid, mode=mode, kernels=kernels, nonneg_shift=0.0)


def _check_tuple(model: DriftModel, rho: tuple[Density, ...]) -> tuple[Density, ...]:
    rho = tuple(rho)
    if len(rho) != model.species_count:
        raise ValueError(
            f"model couples {model.species_count} species, got {len(rho)} densities"
        )
    for r in rho:
        if r.grid != model.grid:
            raise ValueError("density grid does not match the drift model grid")
    return rho


def potential_from_kernel(model: DriftModel, rho: tuple[Density, ...]) -> tuple[ScalarField, ...]:
    """U_i = sum_j W_ij * rho_j + nonneg_shift (potential mode only)."""
    if model.mode != "potential":
        raise ValueError("mode mismatch: potential_from_kernel needs a potential model")
    rho = _check_tuple(model, rho)
    fields = []
    for i in range(model.species_count):
        acc = np.full(model.grid.shape, model.nonneg_shift)
        for j, rj in enumerate(rho):
            if np.any(model.kernels[i, j]):
                acc = acc + circular_convolve(model.grid, model.kernels[i, j], rj.values)
        fields.append(ScalarField(model.grid, acc))
    return tuple(fields)


def velocity_field(model: DriftModel, rho: tuple[Density, ...]) -> tuple[VectorField, ...]:
    """Advection velocity per species, cell-collocated.

    Potential mode returns -grad U_i so that both solver routes advance
    d_t rho_i = Lap F_i'(rho_i) - div(rho_i V_i[rho]) with the same V.
    """
    rho = _check_tuple(model, rho)
    grid = model.grid
    out = []
    if model.mode == "potential":
        for field in potential_from_kernel(model, rho):
            out.append(VectorField(grid, -centered_grad_values(grid, field.values)))
    else:
        for i in range(model.species_count):
            acc = np.zeros((grid.dim,) + grid.shape)
            for j, rj in enumerate(rho):
                for a in range(grid.dim):
                    if np.any(model.kernels[i, j, a]):
                        acc[a] += circular_convolve(grid, model.kernels[i, j, a], rj.values)
            out.append(VectorField(grid, acc))
    return tuple(out)


@dataclass(frozen=True)
class DriftConstants:
    lip_x: float
    lip_w2: float
    lap_plus: float


def _kernel_gradient_bound(model: DriftModel) -> float:
    """max over species and cells of sum_j |grad K_ij| for the stored kernels."""
    grid = model.grid
    worst = 0.0
    for i in range(model.species_count):
        acc = np.zeros(grid.shape)
        for j in range(model.species_count):
            if model.mode == "potential":
                g = centered_grad_values(grid, model.kernels[i, j])
                acc += np.sqrt(np.sum(g**2, axis=0))
            else:
                comps = [
                    centered_grad_values(grid, model.kernels[i, j, a])
                    for a in range(grid.dim)
                ]
                acc += np.sqrt(sum(np.sum(g**2, axis=0) for g in comps))
        worst = max(worst, float(np.max(acc)))
    return worst


def _kernel_lap_plus_bound(model: DriftModel) -> float:
    grid = model.grid
    worst = 0.0
    for i in range(model.species_count):
        acc = np.zeros(grid.shape)
        for j in range(model.species_count):
            if model.mode == "potential":
                lap = laplacian_values(grid, model.kernels[i, j])
            else:
                lap = np.zeros(grid.shape)
                for a in range(grid.dim):
                    lap += centered_grad_values(grid, model.kernels[i, j, a])[a]
            acc += np.maximum(lap, 0.0)
        worst = max(worst, float(np.max(acc)))
    return worst


def _random_smooth_density(grid: Grid, rng: np.random.Generator) -> Density:
    coords = grid.coordinate_grids()
    vals = np.ones(grid.shape)
    for k in (1, 2, 3):
        for c in coords:
            a, b = rng.uniform(-0.4 / k, 0.4 / k, size=2)
            vals = vals + a * np.cos(2 * np.pi * k * c) + b * np.sin(2 * np.pi * k * c)
    vals = np.maximum(vals, 1e-3)
    return normalize(Density(grid, vals))


def estimate_constants(
    model: DriftModel,
    pairs: int = 8,
    w2_eps: float = 1e-4,
    w2_tol: float = 1e-9,
    seed: int = 12345,
) -> DriftConstants:
    """Numeric estimates of the drift regularity constants.

    lip_w2 samples random smooth density pairs with a fixed seed, so repeated
    calls are deterministic.
    """
    from .transport import cost_matrix, sinkhorn_w2

    lip_x = _kernel_gradient_bound(model)
    lap_plus = _kernel_lap_plus_bound(model)

    lip_w2 = 0.0
    if np.any(model.kernels != 0.0) and pairs > 0:
        rng = np.random.default_rng(seed)
        grid = model.grid
        cost = cost_matrix(grid)
        l = model.species_count
        for _ in range(pairs):
            rho = tuple(_random_smooth_density(grid, rng) for _ in range(l))
            nu = tuple(_random_smooth_density(grid, rng) for _ in range(l))
            v_rho = velocity_field(model, rho)
            v_nu = velocity_field(model, nu)
            diff = max(
                float(np.max(np.abs(v_rho[i].values - v_nu[i].values))) for i in range(l)
            )
            w2_sum = 0.0
            for i in range(l):
                res = sinkhorn_w2(rho[i], nu[i], eps=w2_eps, tol=w2_tol, cost=cost)
                w2_sum += np.sqrt(max(res.w2_sq, 0.0))
            if w2_sum > 1e-12:
                lip_w2 = max(lip_w2, diff / w2_sum)
    return DriftConstants(lip_x=lip_x, lip_w2=lip_w2, lap_plus=lap_plus)


def as_velocity_model(model: DriftModel) -> DriftModel:
    """Rewrite a potential model as the equivalent velocity-kernel model."""
    if model.mode == "velocity":
        return model
    grid = model.grid
    l = model.species_count
    kernels = np.zeros((l, l, grid.dim) + grid.shape)
    for i in range(l):
        for j in range(l):
            kernels[i, j] = -centered_grad_values(grid, model.kernels[i, j])
    return DriftModel.velocity(grid, kernels)


def stability_constant(model: DriftModel, **kwargs) -> float:
    """Growth constant for the trajectory-stability bound.

    Uses the velocity-kernel form so lip_x bounds the spatial Lipschitz
    constant of the velocity itself.
    """
    consts = estimate_constants(as_velocity_model(model), **kwargs)
    return max(consts.lip_x, consts.lip_w2)
