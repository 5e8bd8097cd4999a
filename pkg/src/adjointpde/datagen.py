"""Benchmark datasets: heat, Burgers, Kuramoto-Sivashinsky, random walk, reaction-diffusion, wave."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .core import Boundary, CoefficientVector, Dataset, Grid, Hyperparameters, TermKey, TermLibrary, build_library, ranged_library
from .forward import TermGroups, integrate


class Problem(str, enum.Enum):
    HEAT1D = "heat1d"
    HEAT2D = "heat2d"
    BURGERS1D = "burgers1d"
    BURGERS2D = "burgers2d"
    KS1D = "ks"
    RANDOMWALK1D = "randomwalk"
    REACTIONDIFFUSION2D = "rd2d"
    WAVE1D = "wave"


@dataclass(frozen=True)
class ProblemSpec:
    name: Problem
    overrides: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "name", Problem(self.name))

    def get(self, key: str, default):
        return self.overrides.get(key, default)


class GenerationError(RuntimeError):
    pass


# Problem defaults. Coefficients are the physical constants of each benchmark.
DEFAULTS: dict[Problem, dict[str, Any]] = {
    Problem.HEAT1D: dict(nx=100, nt=100, L=1.0, D=-1.0, dt_factor=0.05, steps_per_snapshot=1),
    Problem.HEAT2D: dict(nx=50, nt=20, L=1.0, D=-1.0, dt_factor=0.05, b=20.0, c=20.0, steps_per_snapshot=1),
    Problem.BURGERS1D: dict(nx=100, nt=100, L=1.0, A=-1.0, dt_factor=0.05, steps_per_snapshot=1),
    Problem.BURGERS2D: dict(nx=50, nt=20, L=1.0, A=-1.0, dt_factor=0.05, b=30.0, steps_per_snapshot=1),
    Problem.KS1D: dict(
        nx=256, nt=64, L=32 * math.pi, A=-1.0, B=0.5, C=-0.5, dt_factor=0.01, modes=32, seed=0, steps_per_snapshot=1
    ),
    Problem.RANDOMWALK1D: dict(
        nx=100, nt=50, dt=0.01, A=1.0, D=0.5, samples=1000, lo=-2.0, hi=4.0, seed=0, drop_initial=True
    ),
    Problem.REACTIONDIFFUSION2D: dict(nx=50, nt=25, L=1.0, dt=1e-6, a=100.0, steps_per_snapshot=1),
    Problem.WAVE1D: dict(nx=100, nt=10, T=1.0),
}

# Coefficients of the two-species system, [c0..c6] for u and v.
RD_CU = (-0.1, -0.2, -0.3, -0.4, 0.1, 0.2, 0.3)
RD_CV = (-0.4, -0.3, -0.2, -0.1, 0.3, 0.2, 0.1)

# Settings that converge on the default grids. beta values come from the
# largest stable step (about 2 / largest eigenvalue of the scaled Hessian)
# with a safety margin.
RECOMMENDED: dict[Problem, dict[str, Any]] = {
    # the data curvature along the small columns is ~1e-9, so even a 1e-12 ridge
    # shifts the converged minor coefficients to ~1e-6
    Problem.HEAT1D: dict(beta=1e4, eps0=0.0),
    Problem.HEAT2D: dict(beta=1e4),
    Problem.BURGERS1D: dict(beta=0.03),
    Problem.BURGERS2D: dict(beta=400.0),
    Problem.KS1D: dict(beta=1e3),
    Problem.RANDOMWALK1D: dict(beta=0.3, lr_scaling="diagonal", averaging=True, max_epochs=2000),
    # dt = 1e-6 makes the data curvature tiny, so any ridge biases the answer
    Problem.REACTIONDIFFUSION2D: dict(beta=0.2, lr_scaling="diagonal", eps0=0.0),
    Problem.WAVE1D: dict(
        beta=1e-5, averaging=True, substeps=100, threshold_mode="final-only", sigma_thr=1e-2
    ),
}


def library_hint(problem: Problem | str) -> TermLibrary:
    """The candidate library each benchmark study uses, without generating data."""
    kind = Problem(problem)
    if kind in (Problem.HEAT1D, Problem.BURGERS1D):
        return ranged_library(1, 1, [1, 2, 3], [1, 2, 3])
    if kind in (Problem.HEAT2D, Problem.BURGERS2D):
        return build_library(2, 1, [(1, 0), (0, 1), (2, 0), (0, 2)], [(1,), (2,), (3,)])
    if kind == Problem.KS1D:
        return ranged_library(1, 1, [1, 2, 3, 4], [1, 2])
    if kind == Problem.RANDOMWALK1D:
        return ranged_library(1, 1, [1, 2, 3], [1])
    if kind == Problem.REACTIONDIFFUSION2D:
        return reaction_diffusion_library()
    return ranged_library(1, 1, range(1, 7), [1])


def recommended_hyperparameters(problem: Problem | str, **changes) -> Hyperparameters:
    values = dict(RECOMMENDED[Problem(problem)])
    values.update(changes)
    return Hyperparameters(**values)


def _params(spec: ProblemSpec) -> dict[str, Any]:
    params = dict(DEFAULTS[spec.name])
    unknown = set(spec.overrides) - set(params)
    if unknown:
        raise ValueError(f"unknown overrides for {spec.name.value}: {sorted(unknown)}")
    params.update(spec.overrides)
    return params


BLOWUP_FACTOR = 1e6


def _simulate(f0, grid, library, truth, dt, nt, steps_per_snapshot=1):
    """Euler solution sampled every ``dt``; each snapshot interval takes ``steps_per_snapshot`` steps."""
    if int(steps_per_snapshot) != steps_per_snapshot or steps_per_snapshot < 1:
        raise ValueError("steps_per_snapshot must be a positive integer")
    groups = TermGroups(library)
    values = np.empty((nt + 1,) + f0.shape)
    values[0] = f0
    f = f0
    # measure growth against the initial field, not the start of each short interval
    limit = BLOWUP_FACTOR * (1.0 + float(np.max(np.abs(f0))))
    for j in range(nt):
        states, blown, _ = integrate(f[None], dt / steps_per_snapshot, steps_per_snapshot, groups, truth, grid)
        with np.errstate(invalid="ignore"):
            runaway = not float(np.max(np.abs(states[-1]))) <= limit
        if blown[0] or runaway:
            raise GenerationError(f"generation blew up at snapshot {j + 1} with dt={dt!r}")
        f = states[-1, 0]
        values[j + 1] = f
    times = np.arange(nt + 1) * dt
    return times, values


def _one_d_grid(nx, L, boundary):
    return Grid((nx,), (L / nx,), (0.0,), boundary)


def _heat_like_ic(x, L):
    return 5.0 * np.sin(2 * np.pi * x) * x * (x - L)


def _finish(spec, params, grid, times, values, library, truth_map, **meta):
    truth = CoefficientVector.from_terms(library, truth_map)
    metadata = {"problem": spec.name.value, **{k: v for k, v in params.items()}, **meta}
    return Dataset(grid, times, values, metadata), truth, library


def generate(spec: ProblemSpec | str) -> tuple[Dataset, CoefficientVector, TermLibrary]:
    """Dataset, true coefficients (forward-model sign convention) and the study's library."""
    if not isinstance(spec, ProblemSpec):
        spec = ProblemSpec(spec)
    params = _params(spec)
    kind = spec.name
    if kind in (Problem.HEAT1D, Problem.BURGERS1D):
        nx, nt, L = params["nx"], params["nt"], params["L"]
        grid = _one_d_grid(nx, L, Boundary.ZERO_PAD)
        library = ranged_library(1, 1, [1, 2, 3], [1, 2, 3])
        if kind == Problem.HEAT1D:
            coef = params["D"]
            key = TermKey(0, (2,), (1,))
            dt = params["dt_factor"] * grid.spacing[0] ** 2 / abs(coef)
            rule = "dt = dt_factor * dx^2 / |D|"
        else:
            coef = params["A"]
            key = TermKey(0, (1,), (2,))
            dt = params["dt_factor"] * grid.spacing[0] / abs(coef)
            rule = "dt = dt_factor * dx / |A|"
        truth = CoefficientVector.from_terms(library, {key: coef}).values
        f0 = _heat_like_ic(grid.axis(0), L)[None]
        times, values = _simulate(f0, grid, library, truth, dt, nt, params["steps_per_snapshot"])
        return _finish(spec, params, grid, times, values, library, {key: coef}, dt=dt, dt_rule=rule)

    if kind in (Problem.HEAT2D, Problem.BURGERS2D):
        nx, nt, L = params["nx"], params["nt"], params["L"]
        grid = Grid((nx, nx), (L / nx, L / nx), (0.0, 0.0), Boundary.ZERO_PAD)
        library = build_library(2, 1, [(1, 0), (0, 1), (2, 0), (0, 2)], [(1,), (2,), (3,)])
        x1, x2 = grid.mesh()
        r2 = (x1 - 0.5 * L) ** 2 + (x2 - 0.5 * L) ** 2
        if kind == Problem.HEAT2D:
            coef = params["D"]
            keys = [TermKey(0, (2, 0), (1,)), TermKey(0, (0, 2), (1,))]
            dt = params["dt_factor"] * grid.min_spacing**2 / abs(coef)
            f0 = np.exp(-params["b"] * r2) * np.cos(2 * params["c"] * np.pi * r2)
            rule = "dt = dt_factor * dx^2 / |D|"
        else:
            coef = params["A"]
            keys = [TermKey(0, (1, 0), (2,)), TermKey(0, (0, 1), (2,))]
            dt = params["dt_factor"] * grid.min_spacing / abs(coef)
            f0 = np.exp(-params["b"] * r2)
            rule = "dt = dt_factor * dx / |A|"
        truth_map = {k: coef for k in keys}
        truth = CoefficientVector.from_terms(library, truth_map).values
        times, values = _simulate(f0[None], grid, library, truth, dt, nt, params["steps_per_snapshot"])
        return _finish(spec, params, grid, times, values, library, truth_map, dt=dt, dt_rule=rule)

    if kind == Problem.KS1D:
        nx, nt, L = params["nx"], params["nt"], params["L"]
        grid = _one_d_grid(nx, L, Boundary.PERIODIC)
        library = ranged_library(1, 1, [1, 2, 3, 4], [1, 2])
        truth_map = {
            TermKey(0, (1,), (2,)): params["A"],
            TermKey(0, (2,), (1,)): params["B"],
            TermKey(0, (4,), (1,)): params["C"],
        }
        truth = CoefficientVector.from_terms(library, truth_map).values
        dt = params["dt_factor"] * grid.spacing[0] ** 4 / abs(params["C"])
        x = grid.axis(0)
        f0 = ks_initial_condition(x, L, params["modes"], params["seed"])
        times, values = _simulate(f0[None], grid, library, truth, dt, nt, params["steps_per_snapshot"])
        return _finish(spec, params, grid, times, values, library, truth_map, dt=dt, dt_rule="dt = dt_factor * dx^4 / |C|")

    if kind == Problem.RANDOMWALK1D:
        data = euler_maruyama_histogram(
            params["A"], params["D"], params["nt"], params["dt"], params["samples"],
            params["nx"], (params["lo"], params["hi"]), params["seed"],
        )
        library = ranged_library(1, 1, [1, 2, 3], [1])
        truth_map = {TermKey(0, (1,), (1,)): params["A"], TermKey(0, (2,), (1,)): -params["D"]}
        # the t=0 histogram is a one-bin spike no grid model can follow
        start = 1 if params["drop_initial"] else 0
        return _finish(
            spec, params, data.grid, data.times[start:], data.values[start:], library, truth_map, **data.metadata
        )

    if kind == Problem.REACTIONDIFFUSION2D:
        nx, nt, L = params["nx"], params["nt"], params["L"]
        grid = Grid((nx, nx), (L / nx, L / nx), (0.0, 0.0), Boundary.ZERO_PAD)
        library = reaction_diffusion_library()
        truth_map = reaction_diffusion_truth()
        truth = CoefficientVector.from_terms(library, truth_map).values
        x1, x2 = grid.mesh()
        envelope = params["a"] * (L * x1 - x1**2) * (L * x2 - x2**2)
        u0 = envelope * np.sin(4 * np.pi * x1 / L) * np.cos(3 * np.pi * x2 / L)
        v0 = envelope * np.cos(4 * np.pi * x1 / L) * np.sin(3 * np.pi * x2 / L)
        dt = params["dt"]
        times, values = _simulate(np.stack([u0, v0]), grid, library, truth, dt, nt, params["steps_per_snapshot"])
        return _finish(spec, params, grid, times, values, library, truth_map, dt_rule="fixed dt")

    if kind == Problem.WAVE1D:
        nx, nt, T = params["nx"], params["nt"], params["T"]
        grid = _one_d_grid(nx, 2 * math.pi, Boundary.PERIODIC)
        library = ranged_library(1, 1, range(1, 7), [1])
        x = grid.axis(0)
        times = np.linspace(0.0, T, nt + 1)
        values = np.sin(x[None, None, :] - times[:, None, None])
        return _finish(spec, params, grid, times, values, library, {TermKey(0, (1,), (1,)): 1.0}, dt_rule="exact")

    raise ValueError(f"unknown problem {spec.name}")


def ks_initial_condition(x: np.ndarray, L: float, modes: int, seed: int) -> np.ndarray:
    """``sum_m cos(2 pi m x / L + phi_m) / m`` for m = 1..modes with seeded phases.

    A single long wave leaves the high-order columns of the library nearly
    invisible in the data; spreading energy over many modes keeps every
    derivative order identifiable.
    """
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    phases = rng.uniform(0.0, 2 * np.pi, modes)
    m = np.arange(1, modes + 1)
    return np.sum(np.cos(2 * np.pi * np.outer(x, m) / L + phases) / m, axis=1)


def reaction_diffusion_library() -> TermLibrary:
    derivs = [(0, 0), (1, 0), (0, 1), (2, 0), (0, 2)]
    powers = [(1, 0), (0, 1), (1, 1), (2, 0), (0, 2), (2, 1), (1, 2), (3, 0), (0, 3)]
    return build_library(2, 2, derivs, powers)


def reaction_diffusion_truth(cu=RD_CU, cv=RD_CV) -> dict[TermKey, float]:
    u_terms = [((2, 0), (1, 0)), ((0, 2), (1, 0)), ((0, 0), (1, 0)), ((0, 0), (3, 0)),
               ((0, 0), (1, 2)), ((0, 0), (2, 1)), ((0, 0), (0, 3))]
    v_terms = [((2, 0), (0, 1)), ((0, 2), (0, 1)), ((0, 0), (0, 1)), ((0, 0), (0, 3)),
               ((0, 0), (2, 1)), ((0, 0), (1, 2)), ((0, 0), (3, 0))]
    truth = {TermKey(0, d, p): c for (d, p), c in zip(u_terms, cu)}
    truth.update({TermKey(1, d, p): c for (d, p), c in zip(v_terms, cv)})
    return truth


def euler_maruyama_histogram(
    A: float,
    D: float,
    n_steps: int,
    dt: float,
    n_samples: int,
    bins: int,
    domain: tuple[float, float],
    seed: int,
    return_samples: bool = False,
):
    """Histogram densities of ``dX = A dt + sqrt(2D) dW`` started at X=0.

    Samples outside ``domain`` are counted into the edge bins; the number of
    such clipped sample-times is stored in the metadata.
    """
    if D < 0:
        raise ValueError("diffusion coefficient must be non-negative")
    lo, hi = float(domain[0]), float(domain[1])
    if not hi > lo:
        raise ValueError(f"empty histogram domain {domain}")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    dx = (hi - lo) / bins
    grid = Grid((bins,), (dx,), (lo + 0.5 * dx,), Boundary.ZERO_PAD)
    edges = lo + dx * np.arange(bins + 1)
    X = np.zeros(n_samples)
    values = np.empty((n_steps + 1, 1, bins))
    samples = [X.copy()] if return_samples else None
    clipped = 0
    noise_scale = math.sqrt(2.0 * D * dt)

    def density(X):
        nonlocal clipped
        outside = (X < lo) | (X >= hi)
        clipped += int(outside.sum())
        idx = np.clip(np.floor((X - lo) / dx).astype(np.int64), 0, bins - 1)
        counts = np.bincount(idx, minlength=bins)
        return counts / (n_samples * dx)

    values[0, 0] = density(X)
    for k in range(n_steps):
        X = X + A * dt + noise_scale * rng.standard_normal(n_samples)
        values[k + 1, 0] = density(X)
        if return_samples:
            samples.append(X.copy())
    times = np.arange(n_steps + 1) * dt
    data = Dataset(grid, times, values, {"seed": seed, "clipped": clipped, "edges": [lo, hi], "samples": n_samples})
    if return_samples:
        return data, np.array(samples)
    return data
