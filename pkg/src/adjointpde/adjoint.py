"""Backward adjoint solve and the analytic cost gradient."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import CoefficientVector, Field, Grid, Hyperparameters, TermLibrary
from .fdkernel import apply_derivative, monomial_field
from .forward import SolveTrace, TermGroups


@dataclass
class AdjointTrace:
    """Multipliers aligned with the forward substeps: ``lambdas[k]`` pairs with ``states[k]``."""

    grid: Grid
    lambdas: np.ndarray
    blown_up: bool = False

    @property
    def fields(self) -> list[Field]:
        return [Field(self.grid, lam) for lam in self.lambdas]


def final_condition(f_end, fstar_end):
    """``lambda(t_{j+1}) = 2 (f* - f)`` nodewise."""
    if isinstance(f_end, Field):
        if f_end.grid != fstar_end.grid or f_end.data.shape != fstar_end.data.shape:
            raise ValueError("final condition needs fields on the same grid")
        return Field(f_end.grid, 2.0 * (fstar_end.data - f_end.data))
    return 2.0 * (np.asarray(fstar_end) - np.asarray(f_end))


def adjoint_rhs(lam: Field, f: Field, library: TermLibrary, alpha) -> Field:
    alpha = np.asarray(getattr(alpha, "values", alpha), dtype=float)
    return Field(f.grid, TermGroups(library).adjoint_rhs(lam.data, f.data, alpha, f.grid))


def integrate_adjoint(
    states: np.ndarray,
    lam_final: np.ndarray,
    dt,
    groups: TermGroups,
    alpha: np.ndarray,
    grid: Grid,
    blowup_factor: float = 1e6,
) -> tuple[np.ndarray, np.ndarray]:
    """Backward Euler-in-reverse sweep for a batch.

    ``states`` is ``[S+1, B, N, *dims]``; step k -> k-1 freezes ``f`` at
    ``states[k-1]``. On zero-padded grids the multiplier vanishes on the ghost
    layer outside the domain, which is where compact support is imposed.
    """
    S = states.shape[0] - 1
    B = states.shape[1]
    dt = np.broadcast_to(np.asarray(dt, dtype=float), (B,)).reshape((B,) + (1,) * (states.ndim - 2))
    lambdas = np.empty_like(states)
    lambdas[S] = lam_final
    limit = blowup_factor * (1.0 + np.abs(lam_final).reshape(B, -1).max(axis=1))
    blown = np.zeros(B, dtype=bool)
    lam = lambdas[S]
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(S, 0, -1):
            new = lam - dt * groups.adjoint_rhs(lam, states[k - 1], alpha, grid)
            peak = np.abs(new).reshape(B, -1).max(axis=1)
            bad = ~(peak <= limit)
            if np.any(bad):
                blown |= bad
                new[bad] = 0.0
            lambdas[k - 1] = new
            lam = new
    return lambdas, blown


def integrate_gradient(
    states: np.ndarray,
    lambdas: np.ndarray,
    dt,
    groups: TermGroups,
    grid: Grid,
) -> np.ndarray:
    """Data part of the gradient for each batch member, shape ``[B, K]``.

    Right-endpoint rectangle rule in time (substeps 1..S, ``f`` and ``lambda``
    taken at the same substep) and the cell-volume rule in space.
    """
    S = states.shape[0] - 1
    B = states.shape[1]
    dt = np.broadcast_to(np.asarray(dt, dtype=float), (B,))
    grad = np.zeros((B, len(groups.library)))
    if S == 0:
        return grad
    f_comps = groups.components(states[1:])
    lam_comps = groups.components(lambdas[1:])
    mono = {p: monomial_field(f_comps, p) for p in groups.powers}
    sum_axes = (0,) + tuple(range(2, 2 + grid.n))
    scale = dt * grid.cell_volume
    for (i, d), members in groups.groups.items():
        d_lam = apply_derivative(lam_comps[i], d, grid.spacing, grid.boundary)
        sign = -1.0 if sum(d) % 2 else 1.0
        for k, p in members:
            grad[:, k] = sign * scale * np.sum(mono[p] * d_lam, axis=sum_axes)
    return grad


def solve_adjoint_interval(
    forward: SolveTrace,
    fstar_end: Field,
    library: TermLibrary,
    alpha,
    hp: Hyperparameters,
    groups: TermGroups | None = None,
) -> AdjointTrace:
    if forward.blown_up:
        raise ValueError("cannot solve the adjoint of a blown-up forward trace")
    alpha = np.asarray(getattr(alpha, "values", alpha), dtype=float)
    groups = groups or TermGroups(library)
    lam_final = final_condition(forward.final, fstar_end.data)
    lambdas, blown = integrate_adjoint(
        forward.states[:, None], lam_final[None], forward.dt_internal, groups, alpha, forward.grid, hp.blowup_factor
    )
    return AdjointTrace(forward.grid, lambdas[:, 0], bool(blown[0]))


def gradient_interval(
    forward: SolveTrace,
    adj: AdjointTrace,
    library: TermLibrary,
    alpha,
    eps0: float,
    groups: TermGroups | None = None,
) -> CoefficientVector:
    """Adjoint gradient of one interval's cost plus the ridge term ``2 eps0 alpha``."""
    if forward.states.shape != adj.lambdas.shape:
        raise ValueError(
            f"forward trace {forward.states.shape} and adjoint trace {adj.lambdas.shape} are misaligned"
        )
    alpha = np.asarray(getattr(alpha, "values", alpha), dtype=float)
    groups = groups or TermGroups(library)
    g = integrate_gradient(forward.states[:, None], adj.lambdas[:, None], forward.dt_internal, groups, forward.grid)[0]
    return CoefficientVector(library, g + 2.0 * eps0 * alpha)


def interval_cost(f_end: np.ndarray, fstar_end: np.ndarray, grid: Grid) -> float:
    """Cell-volume weighted squared misfit at the interval end (the quantity the gradient differentiates)."""
    return float(grid.cell_volume * np.sum((np.asarray(fstar_end) - np.asarray(f_end)) ** 2))
