"""Dictionary regression with sequentially thresholded ridge (STRidge) as a comparison method."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Boundary, CoefficientVector, Dataset, TermKey, TermLibrary
from .fdkernel import apply_derivative, monomial_field, stencil_width


@dataclass
class RegressionProblem:
    """``target ~ theta @ alpha`` for one equation; ``target`` is ``-df_i/dt``."""

    theta: np.ndarray
    target: np.ndarray
    term_keys: list[TermKey]
    dropped_rows: int = 0


@dataclass
class StridgeResult:
    coefficients: np.ndarray
    iterations: int
    dropped_columns: list[int] = field(default_factory=list)

    @property
    def singular(self) -> bool:
        return bool(self.dropped_columns)


def _time_derivative(values: np.ndarray, times: np.ndarray) -> np.ndarray:
    # central in the interior, second-order one-sided at both ends
    return np.gradient(values, times, axis=0, edge_order=2)


def _margin_mask(data: Dataset, library: TermLibrary) -> np.ndarray:
    """True at nodes whose stencils never reach the padded ghost layer."""
    mask = np.ones(data.grid.dims, dtype=bool)
    if data.grid.boundary == Boundary.PERIODIC:
        return mask
    for axis in range(data.grid.n):
        order = max(t.deriv[axis] for t in library)
        r = stencil_width(order) // 2
        if r == 0:
            continue
        sl = [slice(None)] * data.grid.n
        sl[axis] = slice(0, r)
        mask[tuple(sl)] = False
        sl[axis] = slice(data.grid.dims[axis] - r, None)
        mask[tuple(sl)] = False
    return mask


def build_dictionary(data: Dataset, library: TermLibrary) -> list[RegressionProblem]:
    """One regression problem per equation of the library."""
    T = data.values.shape[0]
    if T < 3:
        raise ValueError("the dictionary needs at least three snapshots for time differences")
    if library.n != data.grid.n or library.N != data.values.shape[1]:
        raise ValueError("library does not match the dataset dimensions")
    vals = data.values
    comps = np.moveaxis(vals, 1, 0)  # [N, T, *dims]
    ft = _time_derivative(vals, data.times)
    mask = np.broadcast_to(_margin_mask(data, library), vals.shape[:1] + data.grid.dims)
    mono = {t.power: monomial_field(comps, t.power) for t in library}
    problems = []
    for i in range(library.N):
        keys = [t for t in library if t.eq_index == i]
        cols = []
        for t in keys:
            col = apply_derivative(mono[t.power], t.deriv, data.grid.spacing, data.grid.boundary)
            cols.append(np.where(mask, col, np.nan).ravel())
        theta = np.stack(cols, axis=1) if cols else np.empty((mask.size, 0))
        target = -np.where(mask, ft[:, i], np.nan).ravel()
        good = np.isfinite(target) & np.all(np.isfinite(theta), axis=1)
        problems.append(RegressionProblem(theta[good], target[good], keys, int(np.sum(~good))))
    return problems


def _independent_columns(X: np.ndarray) -> list[int]:
    keep: list[int] = []
    for k in range(X.shape[1]):
        trial = keep + [k]
        if np.linalg.matrix_rank(X[:, trial]) == len(trial):
            keep = trial
    return keep


def stridge(
    problem: RegressionProblem,
    ridge_lambda: float = 1e-5,
    tol: float = 1e-3,
    max_iters: int = 10,
    normalize: bool = True,
    refit: bool = True,
) -> StridgeResult:
    """Sequential thresholded ridge regression on one equation."""
    if tol < 0:
        raise ValueError("tol must be non-negative")
    X, y = problem.theta, problem.target
    K = X.shape[1]
    coef = np.zeros(K)
    if K == 0 or not np.any(y):
        return StridgeResult(coef, 0)
    scale = np.max(np.abs(X), axis=0) if normalize else np.ones(K)
    dropped = [k for k in range(K) if scale[k] == 0]
    scale[scale == 0] = 1.0
    Xn = X / scale
    active = np.array([k not in dropped for k in range(K)])

    def ridge_solve(cols):
        A = Xn[:, cols]
        lhs = A.T @ A + ridge_lambda * np.eye(len(cols))
        try:
            return np.linalg.solve(lhs, A.T @ y)
        except np.linalg.LinAlgError:
            return np.linalg.lstsq(A, y, rcond=None)[0]

    iters = 0
    w = np.zeros(K)
    for iters in range(1, max_iters + 1):
        cols = np.flatnonzero(active)
        w = np.zeros(K)
        if cols.size:
            w[cols] = ridge_solve(cols)
        small = active & (np.abs(w / scale) < tol)
        if not np.any(small):
            break
        active &= ~small
        w[small] = 0.0
    cols = np.flatnonzero(active)
    if refit and cols.size:
        keep = [cols[k] for k in _independent_columns(Xn[:, cols])]
        dropped += [int(c) for c in cols if c not in keep]
        w = np.zeros(K)
        if keep:
            w[keep] = np.linalg.lstsq(Xn[:, keep], y, rcond=None)[0]
    coef = w / scale
    coef[~active] = 0.0
    return StridgeResult(coef, iters, sorted(dropped))


def stridge_discover(data: Dataset, library: TermLibrary, **kwargs) -> tuple[CoefficientVector, list[StridgeResult]]:
    """Baseline estimate for every equation, assembled on ``library``."""
    values = np.zeros(len(library))
    results = []
    for problem in build_dictionary(data, library):
        res = stridge(problem, **kwargs)
        results.append(res)
        for key, c in zip(problem.term_keys, res.coefficients):
            values[library.index(key)] = c
    return CoefficientVector(library, values), results
