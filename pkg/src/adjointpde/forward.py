"""Explicit Euler solution of the guessed forward model over one data interval."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import Boundary, Field, Grid, Hyperparameters, TermLibrary
from .fdkernel import apply_derivative, monomial_field, power_derivative

_EPS = np.finfo(float).eps
# dt within this relative margin of the stability bound is not capped
_CAP_SLACK = 1e-9


class TermGroups:
    """Library terms grouped by (equation, derivative) for evaluation.

    Because differentiation is linear, each (i, d) group needs a single
    derivative of the coefficient-weighted sum of its monomials.
    """

    def __init__(self, library: TermLibrary):
        self.library = library
        self.n = library.n
        self.N = library.N
        self.powers = sorted({t.power for t in library})
        self.derivs = sorted({t.deriv for t in library})
        groups: dict[tuple[int, tuple[int, ...]], list[tuple[int, tuple[int, ...]]]] = {}
        for k, t in enumerate(library):
            groups.setdefault((t.eq_index, t.deriv), []).append((k, t.power))
        self.groups = groups
        self.orders = library.orders()

    def components(self, f: np.ndarray) -> np.ndarray:
        # view with the component axis first: [N, *batch, *dims]
        return np.moveaxis(f, f.ndim - self.n - 1, 0)

    def monomials(self, f: np.ndarray) -> dict:
        comps = self.components(f)
        return {p: monomial_field(comps, p) for p in self.powers}

    def rhs(self, f: np.ndarray, alpha: np.ndarray, grid: Grid) -> np.ndarray:
        """Time derivative ``-sum alpha D^d[f^p]`` for ``f`` shaped ``[..., N, *dims]``."""
        mono = self.monomials(f)
        out = np.zeros_like(f)
        out_c = self.components(out)
        for (i, d), members in self.groups.items():
            acc = None
            for k, p in members:
                a = alpha[k]
                if a == 0.0:
                    continue
                term = a * mono[p]
                acc = term if acc is None else acc + term
            if acc is None:
                continue
            out_c[i] -= apply_derivative(acc, d, grid.spacing, grid.boundary)
        return out

    def adjoint_rhs(self, lam: np.ndarray, f: np.ndarray, alpha: np.ndarray, grid: Grid) -> np.ndarray:
        """``d lambda_i/dt = sum (-1)^|d| alpha d(f^p)/df_i D^d[lambda_i]`` (diagonal coupling)."""
        comps = self.components(f)
        lam_c = self.components(lam)
        out = np.zeros_like(lam)
        out_c = self.components(out)
        cache: dict = {}
        for (i, d), members in self.groups.items():
            acc = None
            for k, p in members:
                a = alpha[k]
                if a == 0.0 or p[i] == 0:
                    continue
                key = (p, i)
                if key not in cache:
                    cache[key] = power_derivative(comps, p, i)
                term = a * cache[key]
                acc = term if acc is None else acc + term
            if acc is None:
                continue
            sign = -1.0 if sum(d) % 2 else 1.0
            out_c[i] += sign * acc * apply_derivative(lam_c[i], d, grid.spacing, grid.boundary)
        return out


@dataclass
class SolveTrace:
    """Forward trajectory over one interval; ``states[k]`` is the field after k substeps."""

    grid: Grid
    states: np.ndarray
    dt_internal: float
    blown_up: bool = False
    blowup_step: Optional[int] = None

    @property
    def substeps(self) -> int:
        return len(self.states) - 1

    @property
    def fields(self) -> list[Field]:
        return [Field(self.grid, s) for s in self.states]

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def stable_dt(library: TermLibrary, alpha: np.ndarray, grid: Grid, cfl_safety: float) -> float:
    """Engineering bound ``cfl * min dx^|d| / |alpha|`` over the active terms."""
    alpha = np.asarray(alpha, dtype=float)
    active = alpha != 0.0
    if not np.any(active) or cfl_safety <= 0:
        return math.inf
    h = grid.min_spacing
    orders = library.orders()[active]
    return float(cfl_safety * np.min(h ** orders / np.maximum(np.abs(alpha[active]), _EPS)))


def plan_steps(t0: float, t1: float, library, alpha, grid: Grid, hp: Hyperparameters) -> tuple[int, float]:
    """Number of substeps and internal dt covering ``(t0, t1]`` exactly."""
    if not t1 > t0:
        raise ValueError(f"interval end {t1} must exceed start {t0}")
    span = t1 - t0
    steps = hp.substeps
    dt = span / steps
    cap = stable_dt(library, alpha, grid, hp.cfl_safety)
    if dt > cap * (1.0 + _CAP_SLACK):
        steps = max(steps, math.ceil(span / cap * (1.0 - _CAP_SLACK)))
        dt = span / steps
    return steps, dt


def integrate(
    f0: np.ndarray,
    dt: np.ndarray | float,
    steps: int,
    groups: TermGroups,
    alpha: np.ndarray,
    grid: Grid,
    blowup_factor: float = 1e6,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Forward Euler on a batch ``f0`` of shape ``[B, N, *dims]``.

    Returns ``(states [steps+1, B, N, *dims], blown [B], blowup_step [B])``.
    Blown-up members are frozen at their last finite state.
    """
    f0 = np.asarray(f0, dtype=float)
    B = f0.shape[0]
    dt = np.broadcast_to(np.asarray(dt, dtype=float), (B,)).reshape((B,) + (1,) * (f0.ndim - 1))
    limit = blowup_factor * (1.0 + np.abs(f0).reshape(B, -1).max(axis=1))
    states = np.empty((steps + 1,) + f0.shape)
    states[0] = f0
    blown = np.zeros(B, dtype=bool)
    blowup_step = np.full(B, -1)
    f = f0
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(steps):
            new = f + dt * groups.rhs(f, alpha, grid)
            peak = np.abs(new).reshape(B, -1).max(axis=1)
            bad = ~(peak <= limit) & ~blown
            if np.any(bad):
                blowup_step[bad] = k + 1
                blown |= bad
            if np.any(blown):
                new[blown] = f[blown]
            states[k + 1] = new
            f = new
    return states, blown, blowup_step


def rhs(field: Field, library: TermLibrary, alpha) -> Field:
    """``d f_i/dt`` implied by the forward model at ``field``."""
    alpha = np.asarray(getattr(alpha, "values", alpha), dtype=float)
    return Field(field.grid, TermGroups(library).rhs(field.data, alpha, field.grid))


def solve_interval(
    f0: Field,
    t0: float,
    t1: float,
    library: TermLibrary,
    alpha,
    hp: Hyperparameters,
    groups: TermGroups | None = None,
) -> SolveTrace:
    alpha = np.asarray(getattr(alpha, "values", alpha), dtype=float)
    groups = groups or TermGroups(library)
    steps, dt = plan_steps(t0, t1, library, alpha, f0.grid, hp)
    states, blown, step = integrate(f0.data[None], dt, steps, groups, alpha, f0.grid, hp.blowup_factor)
    if blown[0]:
        k = int(step[0])
        return SolveTrace(f0.grid, states[:k, 0], dt, True, k)
    return SolveTrace(f0.grid, states[:, 0], dt)


def boundary_mask(grid: Grid) -> Optional[np.ndarray]:
    """Boolean mask of first/last nodes along every axis, or None for periodic grids."""
    if grid.boundary == Boundary.PERIODIC:
        return None
    mask = np.zeros(grid.dims, dtype=bool)
    for k in range(grid.n):
        sl = [slice(None)] * grid.n
        sl[k] = 0
        mask[tuple(sl)] = True
        sl[k] = -1
        mask[tuple(sl)] = True
    return mask
