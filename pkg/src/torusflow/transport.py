"""Periodic quadratic-cost optimal transport and the entropic JKO step.

``sinkhorn_w2`` estimates the squared 2-Wasserstein distance between grid
densities by alternating marginal scalings on the Gibbs kernel exp(-c/eps),
with potential absorption for numerical stability and a deterministic
eps-scaling warm start when the kernel would underflow.  The reported value
is the primal transport cost <c, plan> of the computed plan, without the
entropic term.

``jko_step`` solves one semi-implicit minimizing-movement step

    min_rho  W2^2(rho, rho_prev)/(2h) + int E(rho) + int U rho

through its entropic relaxation: the first marginal is matched exactly by
scaling, the second through the per-cell KL proximal of the energy with
tau = 2h.  By default the step is debiased with the symmetric self-transport
scaling d (d * (K d) = second marginal at convergence), which cancels the
O(eps) blur of the plain entropic scheme; ``debias=False`` gives the plain
alternation.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .energy import InternalEnergy, kl_prox
from .grid import Density, Grid, ScalarField, minimal_image, normalize

__all__ = [
    "CostMatrix",
    "TransportResult",
    "cost_matrix",
    "sinkhorn_w2",
    "exact_w2_permutation",
    "jko_step",
]

_MAX_COST_CELLS = 16384
_SCALING_BOUND = 1e290
_MASS_FLOOR = 1e-300


@dataclass(frozen=True)
class CostMatrix:
    """Pairwise squared torus distances between cell centers."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)


@dataclass(frozen=True)
class TransportResult:
    w2_sq: float
    plan_marginal_err: float
    iterations: int
    eps: float
    converged: bool = True
    plan: np.ndarray | None = None


def cost_matrix(grid: Grid) -> CostMatrix:
    if grid.cells > _MAX_COST_CELLS:
        raise ValueError(
            f"grid has {grid.cells} cells; dense cost matrices are limited to "
            f"{_MAX_COST_CELLS}"
        )
    centers = grid.cell_centers()
    c = np.zeros((grid.cells, grid.cells))
    for a in range(grid.dim):
        diff = minimal_image(centers[:, a][:, None] - centers[:, a][None, :])
        c += diff**2
    return CostMatrix(grid=grid, values=c)


def exact_w2_permutation(xs, ys) -> float:
    """Exact squared W2 between uniform atomic measures by enumeration.

    Valid because an optimal plan between two uniform N-point measures is
    induced by a permutation.
    """
    xa = np.asarray(xs, dtype=float)
    ya = np.asarray(ys, dtype=float)
    if xa.ndim == 1:
        xa = xa[:, None]
    if ya.ndim == 1:
        ya = ya[:, None]
    if xa.shape != ya.shape:
        raise ValueError("atom lists must have equal shapes")
    n = xa.shape[0]
    if n > 8:
        raise ValueError("permutation oracle limited to 8 atoms")
    d2 = np.zeros((n, n))
    for a in range(xa.shape[1]):
        d2 += minimal_image(xa[:, a][:, None] - ya[:, a][None, :]) ** 2
    best = np.inf
    for perm in itertools.permutations(range(n)):
        best = min(best, float(d2[np.arange(n), perm].sum()))
    return best / n


def _check_normalized(rho: Density, name: str) -> None:
    if abs(rho.mass() - 1.0) > 1e-8:
        raise ValueError(f"{name} must be normalized to unit mass")


def _cost_for(grid: Grid, cost: CostMatrix | None) -> np.ndarray:
    if cost is None:
        return cost_matrix(grid).values
    if cost.grid != grid:
        raise ValueError("cost matrix grid does not match the densities")
    return cost.values


def _eps_schedule(eps: float, c_max: float) -> list[float]:
    """Warm-start ladder; a single level when the kernel is representable."""
    if c_max / eps <= 200.0 or c_max == 0.0:
        return [eps]
    levels = [c_max / 10.0]
    while levels[-1] > 5.0 * eps:
        levels.append(levels[-1] / 5.0)
    levels.append(eps)
    return levels


def sinkhorn_w2(
    mu: Density,
    nu: Density,
    eps: float,
    tol: float = 1e-9,
    max_iter: int = 200000,
    return_plan: bool = False,
    cost: CostMatrix | None = None,
) -> TransportResult:
    """Entropic estimate of W2^2 on the torus, deterministic given inputs."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    if mu.grid != nu.grid:
        raise ValueError("densities live on different grids")
    _check_normalized(mu, "mu")
    _check_normalized(nu, "nu")
    grid = mu.grid
    c = _cost_for(grid, cost)
    vol = grid.cell_volume
    a = mu.values.ravel() * vol
    b = nu.values.ravel() * vol
    a_pos = a > 0
    b_pos = b > 0

    f = np.zeros_like(a)
    g = np.zeros_like(b)
    # Dead cells keep their plan rows/columns at zero through -inf potentials.
    f[~a_pos] = -np.inf
    g[~b_pos] = -np.inf

    total_iter = 0
    err = np.inf
    for level in _eps_schedule(eps, float(np.max(c))):
        level_tol = tol if level == eps else max(tol, 1e-7)
        level_budget = max_iter - total_iter if level == eps else min(5000, max_iter)
        with np.errstate(over="ignore", invalid="ignore"):
            kernel = np.exp((f[:, None] + g[None, :] - c) / level)
        u = np.ones_like(a)
        v = np.ones_like(b)
        for _ in range(max(level_budget, 1)):
            kv = kernel @ v
            if np.any((kv <= 0) & a_pos):
                # Row underflow despite absorbed potentials: tighten the ladder.
                raise RuntimeError(
                    "sinkhorn kernel underflow; eps is too small for this cost"
                )
            err = float(np.max(np.abs(u * kv - a)))
            total_iter += 1
            if err <= level_tol and total_iter > 1:
                break
            u = np.where(a_pos, a / np.where(kv > 0, kv, 1.0), 0.0)
            ktu = kernel.T @ u
            v = np.where(b_pos, b / np.where(ktu > 0, ktu, 1.0), 0.0)
            big = max(float(np.max(u)), float(np.max(v)))
            small = min(
                float(np.min(u[a_pos])) if a_pos.any() else 1.0,
                float(np.min(v[b_pos])) if b_pos.any() else 1.0,
            )
            if big > _SCALING_BOUND or (small < 1.0 / _SCALING_BOUND and small > 0):
                with np.errstate(divide="ignore"):
                    f = f + level * np.log(np.where(u > 0, u, 1.0))
                    g = g + level * np.log(np.where(v > 0, v, 1.0))
                f[~a_pos] = -np.inf
                g[~b_pos] = -np.inf
                with np.errstate(over="ignore", invalid="ignore"):
                    kernel = np.exp((f[:, None] + g[None, :] - c) / level)
                u = np.ones_like(a)
                v = np.ones_like(b)
        # Absorb before moving to the next (smaller) level.
        with np.errstate(divide="ignore"):
            f = f + level * np.log(np.where(u > 0, u, 1.0))
            g = g + level * np.log(np.where(v > 0, v, 1.0))
        f[~a_pos] = -np.inf
        g[~b_pos] = -np.inf

    with np.errstate(over="ignore", invalid="ignore"):
        plan = np.exp((f[:, None] + g[None, :] - c) / eps)
    row_err = float(np.max(np.abs(plan.sum(axis=1) - a)))
    col_err = float(np.max(np.abs(plan.sum(axis=0) - b)))
    err = max(row_err, col_err)
    w2_sq = float(np.sum(plan * c))
    return TransportResult(
        w2_sq=w2_sq,
        plan_marginal_err=err,
        iterations=total_iter,
        eps=eps,
        converged=err <= tol,
        plan=plan if return_plan else None,
    )


def jko_step(
    rho_prev: Density,
    h: float,
    energy: InternalEnergy,
    potential: ScalarField | np.ndarray | None,
    eps: float,
    tol: float = 1e-9,
    max_iter: int = 20000,
    debias: bool = True,
    return_plan: bool = False,
    cost: CostMatrix | None = None,
) -> tuple[Density, TransportResult]:
    """One semi-implicit minimizing-movement step via entropic scaling.

    The potential is the frozen field evaluated at the previous iterate; the
    returned density is the plan's second marginal renormalized to unit mass,
    and the result carries the plan's primal cost as the step's W2^2.
    """
    if h <= 0:
        raise ValueError("step size h must be positive")
    if eps <= 0:
        raise ValueError("eps must be positive")
    _check_normalized(rho_prev, "rho_prev")
    grid = rho_prev.grid
    c = _cost_for(grid, cost)
    if float(np.max(c)) / eps > 600.0:
        raise ValueError(
            "eps is too small for a dense Gibbs kernel on this grid; increase eps"
        )
    tau = 2.0 * h
    if tau / eps > 600.0:
        raise ValueError("h/eps is too large for stable scalings; increase eps")

    vol = grid.cell_volume
    a = np.maximum(rho_prev.values.ravel(), _MASS_FLOOR) * vol
    if potential is None:
        u_pot = np.zeros_like(a)
    elif isinstance(potential, ScalarField):
        if potential.grid != grid:
            raise ValueError("potential grid does not match the density")
        u_pot = potential.values.ravel()
    else:
        u_pot = np.asarray(potential, dtype=float).ravel()
        if u_pot.shape != a.shape:
            raise ValueError("potential has the wrong number of cells")

    kernel = np.exp(-c / eps)
    v = np.ones_like(a)
    d = np.ones_like(a)
    rho_curr = a / vol
    u = np.ones_like(a)
    iterations = 0
    converged = False
    for _ in range(max_iter):
        kv = kernel @ v
        u = a / kv
        s = kernel.T @ u  # second-marginal proposal in mass units
        sigma = s * d / vol
        rho_new = kl_prox(energy, sigma, eps, tau, u_pot)
        v = rho_new * vol / s
        if debias:
            d = np.sqrt(d * (rho_new * vol) / (kernel @ d))
        iterations += 1
        delta = float(np.max(np.abs(rho_new - rho_curr)))
        rho_curr = rho_new
        big = max(float(np.max(u)), float(np.max(v)), float(np.max(d)))
        if not np.isfinite(big) or big > _SCALING_BOUND:
            raise RuntimeError("jko_step scalings left the stable range")
        if delta <= tol and iterations > 1:
            converged = True
            break
    if not converged:
        raise RuntimeError(
            f"jko_step did not converge within {max_iter} iterations "
            f"(last density change {delta:.3e}, tol {tol:.3e})"
        )

    plan = u[:, None] * kernel * v[None, :]
    row_err = float(np.max(np.abs(plan.sum(axis=1) - a)))
    col_err = float(np.max(np.abs(plan.sum(axis=0) - rho_curr * vol)))
    w2_sq = float(np.sum(plan * c))
    rho_out = normalize(Density(grid, rho_curr.reshape(grid.shape)))
    result = TransportResult(
        w2_sq=w2_sq,
        plan_marginal_err=max(row_err, col_err),
        iterations=iterations,
        eps=eps,
        converged=True,
        plan=plan if return_plan else None,
    )
    return rho_out, result
