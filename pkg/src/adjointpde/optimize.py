"""Gradient-descent discovery loop: per-interval or averaged updates, hard thresholding, freezing."""

from __future__ import annotations

import csv
import enum
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .adjoint import final_condition, integrate_adjoint, integrate_gradient
from .core import CoefficientVector, Dataset, Grid, Hyperparameters, TermKey, TermLibrary
from .fdkernel import apply_derivative, monomial_field
from .forward import TermGroups, integrate, plan_steps

# an interval needing more than this many times the requested substeps
# (after stability capping) is treated as a blow-up
MAX_STEP_GROWTH = 1024


class Flag(str, enum.Enum):
    CONVERGED = "Converged"
    HIT_MAX_EPOCHS = "HitMaxEpochs"
    INTERVAL_BLOWUPS = "IntervalBlowups"
    RESIDUAL_STAGNATION = "ResidualStagnation"
    ABORTED = "Aborted"


class DivergenceError(RuntimeError):
    """Raised when an update cannot be applied because the numbers stopped being finite."""


@dataclass
class DiscoveryReport:
    final_alpha: CoefficientVector
    active_terms: list[TermKey]
    epochs_run: int
    per_epoch_alpha: np.ndarray
    per_epoch_l2_residual: np.ndarray
    flags: set = field(default_factory=set)
    blowups: int = 0
    frozen: np.ndarray | None = None
    pre_threshold_alpha: np.ndarray | None = None
    hyperparameters: dict = field(default_factory=dict)

    def __post_init__(self):
        nz = self.final_alpha.nonzero_terms()
        if list(self.active_terms) != nz:
            raise ValueError("active_terms must be exactly the nonzero slots of final_alpha")
        if len(self.per_epoch_alpha) != self.epochs_run or len(self.per_epoch_l2_residual) != self.epochs_run:
            raise ValueError("per-epoch arrays must have one row per epoch")

    @property
    def library(self) -> TermLibrary:
        return self.final_alpha.library

    @property
    def converged(self) -> bool:
        return Flag.CONVERGED in self.flags

    def flag_names(self) -> list[str]:
        names = []
        for f in sorted(self.flags, key=lambda f: f.value):
            names.append(f"{f.value}({self.blowups})" if f == Flag.INTERVAL_BLOWUPS else f.value)
        return names

    def trajectory_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        K = len(self.library)
        writer.writerow(["epoch"] + [f"term_{k}" for k in range(K)] + ["l2_residual"])
        for e in range(self.epochs_run):
            row = [e + 1] + [repr(float(v)) for v in self.per_epoch_alpha[e]]
            writer.writerow(row + [repr(float(self.per_epoch_l2_residual[e]))])
        return buf.getvalue()


def learning_rate(term: TermKey, hp: Hyperparameters, grid: Grid, d_max: int) -> float:
    """``beta * min(dx)^(|d| - d_max)``: lower-order terms get larger steps."""
    return hp.beta * grid.min_spacing ** (term.order - d_max)


def learning_rates(library: TermLibrary, hp: Hyperparameters, grid: Grid) -> np.ndarray:
    return hp.beta * grid.min_spacing ** (library.orders() - library.d_max).astype(float)


def diagonal_rates(data: Dataset, library: TermLibrary, beta: float) -> np.ndarray:
    """``beta / H_kk`` with ``H_kk`` the mean one-step curvature of the cost along term k.

    ``H_kk = 2 dV dt_j^2 ||D^d[f^p](f*_j)||^2`` averaged over the intervals;
    this equalizes terms whose columns differ in amplitude (high powers of
    large fields) as well as in derivative order.
    """
    grid = data.grid
    vals = np.asarray(data.values, dtype=float)
    dts = np.diff(np.asarray(data.times, dtype=float))
    curv = np.zeros(len(library))
    for j, dt in enumerate(dts):
        for k, t in enumerate(library):
            col = apply_derivative(monomial_field(vals[j], t.power), t.deriv, grid.spacing, grid.boundary)
            curv[k] += 2.0 * grid.cell_volume * dt**2 * float(np.sum(col**2))
    curv /= max(len(dts), 1)
    rates = np.zeros(len(library))
    positive = curv > 0
    rates[positive] = beta / curv[positive]
    return rates


def suggest_beta(data: Dataset, library: TermLibrary, hp: Hyperparameters | None = None, safety: float = 0.25) -> float:
    """A learning-rate scale from the curvature of the cost.

    Over one interval the cost is close to quadratic, with Hessian
    ``H_j = 2 dV A_j^T A_j`` where ``A_j = dt_j D^d[f^p](f*_j)`` holds the
    library columns. Gradient descent with per-term rates ``beta * s_k`` is
    stable while ``beta < 2 / lambda_max(S^1/2 H S^1/2)``; per-interval updates
    need that for every interval, averaged updates for the mean Hessian.
    ``safety`` times that bound is returned.
    """
    hp = hp or Hyperparameters()
    grid = data.grid
    vals = np.asarray(data.values, dtype=float)
    dts = np.diff(np.asarray(data.times, dtype=float))
    if hp.lr_scaling == "diagonal":
        scale = diagonal_rates(data, library, 1.0)
    else:
        scale = learning_rates(library, replace(hp, beta=1.0), grid)
    root = np.sqrt(scale)
    worst = 0.0
    total = np.zeros((len(library), len(library)))
    for j, dt in enumerate(dts):
        cols = np.stack(
            [apply_derivative(monomial_field(vals[j], t.power), t.deriv, grid.spacing, grid.boundary).ravel() for t in library],
            axis=1,
        ) * dt
        # a term only enters its own equation's misfit, so H is block diagonal
        eq = np.array([t.eq_index for t in library])
        H = np.zeros_like(total)
        for i in range(library.N):
            sel = eq == i
            block = cols[:, sel]
            H[np.ix_(sel, sel)] = 2.0 * grid.cell_volume * block.T @ block
        scaled = root[:, None] * H * root[None, :]
        total += scaled
        worst = max(worst, float(np.linalg.eigvalsh(scaled)[-1]))
    if hp.averaging:
        worst = float(np.linalg.eigvalsh(total / max(len(dts), 1))[-1])
    if worst <= 0:
        raise ValueError("the data carry no curvature for this library; beta cannot be estimated")
    return safety * 2.0 / worst


def update_step(alpha, grad, hp: Hyperparameters, grid: Grid, library: TermLibrary, frozen=None) -> CoefficientVector:
    a = np.asarray(getattr(alpha, "values", alpha), dtype=float)
    g = np.asarray(getattr(grad, "values", grad), dtype=float)
    if a.shape != g.shape or a.shape != (len(library),):
        raise ValueError(f"alpha {a.shape} and gradient {g.shape} do not match a {len(library)}-term library")
    if not np.all(np.isfinite(g)):
        raise DivergenceError("non-finite gradient; update skipped")
    new = a - learning_rates(library, hp, grid) * g
    if frozen is not None:
        new[np.asarray(frozen, dtype=bool)] = 0.0
    if not np.all(np.isfinite(new)):
        raise DivergenceError("update produced non-finite coefficients")
    return CoefficientVector(library, new)


def apply_threshold(alpha, sigma_thr: float, frozen=None) -> tuple[CoefficientVector, np.ndarray]:
    """Zero every slot with ``|alpha| < sigma_thr`` and add it to the frozen set."""
    values = np.array(alpha.values, dtype=float)
    mask = np.abs(values) < sigma_thr
    if frozen is not None:
        mask |= np.asarray(frozen, dtype=bool)
    values[mask] = 0.0
    return CoefficientVector(alpha.library, values), mask


class _Problem:
    """Per-dataset state shared across epochs: snapshots, groups, and the solve/gradient kernel."""

    def __init__(self, data: Dataset, library: TermLibrary, hp: Hyperparameters, threads: int = 1):
        if data.values.shape[0] < 2:
            raise ValueError("discovery needs at least two snapshots")
        if library.n != data.grid.n or library.N != data.values.shape[1]:
            raise ValueError(
                f"library is for n={library.n}, N={library.N} but data has n={data.grid.n}, N={data.values.shape[1]}"
            )
        self.data = data
        self.library = library
        self.hp = hp
        self.grid = data.grid
        self.groups = TermGroups(library)
        self.times = np.asarray(data.times, dtype=float)
        self.values = np.asarray(data.values, dtype=float)
        self.J = len(self.times) - 1
        self.norm_sq = float(np.sum(self.values[1:] ** 2))
        self.threads = max(1, int(threads))
        self._pool = ThreadPoolExecutor(self.threads) if self.threads > 1 else None

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()

    def _run(self, idx: list[int], alpha: np.ndarray, steps: int, dts: np.ndarray):
        # Intervals are independent, so a batch splits cleanly across worker threads;
        # numpy releases the GIL inside the stencil and reduction kernels.
        if self._pool is None or len(idx) < 2:
            return self.batch(idx, alpha, steps, dts)
        chunks = [c for c in np.array_split(np.arange(len(idx)), min(self.threads, len(idx))) if c.size]
        futures = [self._pool.submit(self.batch, [idx[i] for i in c], alpha, steps, dts[c]) for c in chunks]
        parts = [f.result() for f in futures]
        return tuple(np.concatenate([p[k] for p in parts]) for k in range(3))

    def plan(self, j: int, alpha: np.ndarray, refine: int = 0) -> tuple[int, float]:
        steps, _ = plan_steps(self.times[j], self.times[j + 1], self.library, alpha, self.grid, self.hp)
        steps <<= refine
        return steps, (self.times[j + 1] - self.times[j]) / steps

    def batch(self, idx: list[int], alpha: np.ndarray, steps: int, dts: np.ndarray):
        """Forward, adjoint and gradient for intervals ``idx`` sharing a substep count.

        Returns ``(grad [B, K], misfit_sq [B], blown [B])``.
        """
        f0 = self.values[idx]
        fstar = self.values[[j + 1 for j in idx]]
        states, blown, _ = integrate(f0, dts, steps, self.groups, alpha, self.grid, self.hp.blowup_factor)
        misfit = np.sum((fstar - states[-1]) ** 2, axis=tuple(range(1, fstar.ndim)))
        lam_final = final_condition(states[-1], fstar)
        lam_final[blown] = 0.0
        lambdas, lam_blown = integrate_adjoint(
            states, lam_final, dts, self.groups, alpha, self.grid, self.hp.blowup_factor
        )
        blown = blown | lam_blown
        grad = integrate_gradient(states, lambdas, dts, self.groups, self.grid)
        with np.errstate(invalid="ignore"):
            blown |= ~np.all(np.isfinite(grad), axis=1) | ~np.isfinite(misfit)
        grad[blown] = 0.0
        return grad, misfit, blown

    def intervals(self, idx: list[int], alpha: np.ndarray):
        """Gradients for the given intervals with halved-dt retries on blow-up."""
        B = len(idx)
        grad = np.zeros((B, len(self.library)))
        misfit = np.zeros(B)
        failed = np.ones(B, dtype=bool)
        pending = list(range(B))
        for refine in range(self.hp.max_retries + 1):
            if not pending:
                break
            plans: dict[int, list[int]] = {}
            dts = {}
            for b in pending:
                steps, dt = self.plan(idx[b], alpha, refine)
                if steps > MAX_STEP_GROWTH * self.hp.substeps << refine:
                    continue
                plans.setdefault(steps, []).append(b)
                dts[b] = dt
            still = []
            for steps, members in plans.items():
                g, m, bad = self._run([idx[b] for b in members], alpha, steps, np.array([dts[b] for b in members]))
                for r, b in enumerate(members):
                    if bad[r]:
                        still.append(b)
                    else:
                        grad[b], misfit[b], failed[b] = g[r], m[r], False
            pending = still
        return grad, misfit, failed


def discover(
    data: Dataset,
    library: TermLibrary,
    hp: Hyperparameters | None = None,
    initial_alpha=None,
    callback: Optional[Callable[[int, np.ndarray, float], None]] = None,
    threads: int = 1,
) -> DiscoveryReport:
    """Identify the coefficients of ``library`` that reproduce ``data``.

    Each epoch sweeps every data interval: solve the forward model from the
    observed snapshot, solve the adjoint backwards from the end-of-interval
    misfit, and integrate the gradient. Without averaging the coefficients are
    updated after every interval; with averaging once per epoch from the mean
    gradient. Small coefficients are thresholded and frozen at zero.

    ``threads`` splits the batched interval solves of the averaging variant
    across worker threads; it has no effect on the result.
    """
    hp = hp or Hyperparameters()
    prob = _Problem(data, library, hp, threads)
    try:
        return _discover(prob, data, library, hp, initial_alpha, callback)
    finally:
        prob.close()


def _discover(prob, data, library, hp, initial_alpha, callback) -> DiscoveryReport:
    K = len(library)
    if initial_alpha is None:
        alpha = np.zeros(K)
    else:
        alpha = np.array(getattr(initial_alpha, "values", initial_alpha), dtype=float)
        if alpha.shape != (K,):
            raise ValueError(f"initial alpha has {alpha.size} entries, library has {K}")
    frozen = np.zeros(K, dtype=bool)
    if hp.lr_scaling == "diagonal":
        rates = diagonal_rates(data, library, hp.beta)
    else:
        rates = learning_rates(library, hp, prob.grid)
    during = hp.threshold_mode == "during"

    history: list[np.ndarray] = []
    residuals: list[float] = []
    flags: set = set()
    blowups = 0
    thresholded = False
    pre_threshold = None
    J = prob.J

    # eps0 weighs ||alpha||^2 against the plain nodal misfit sum, while the data
    # gradient carries the cell volume; scale the ridge to the same units.
    ridge_weight = 2.0 * hp.eps0 * prob.grid.cell_volume

    def ridge(a):
        return ridge_weight * a

    for epoch in range(1, hp.max_epochs + 1):
        start = alpha.copy()
        misfit_total = 0.0
        epoch_failed = 0
        if hp.averaging:
            grads, misfit, failed = prob.intervals(list(range(J)), alpha)
            epoch_failed = int(failed.sum())
            misfit_total = float(misfit[~failed].sum())
            if epoch_failed < J:
                ok = ~failed
                if hp.ridge_once:
                    g = grads[ok].mean(axis=0) + ridge(alpha)
                else:
                    g = (grads[ok] + ridge(alpha)).mean(axis=0)
                alpha = _step(alpha, g, rates, frozen)
        else:
            for j in range(J):
                g, m, failed = prob.intervals([j], alpha)
                if failed[0]:
                    epoch_failed += 1
                    continue
                misfit_total += float(m[0])
                alpha = _step(alpha, g[0] + ridge(alpha), rates, frozen)
        blowups += epoch_failed
        if epoch_failed == J:
            flags |= {Flag.INTERVAL_BLOWUPS, Flag.ABORTED}
            alpha = start
            break
        if not np.all(np.isfinite(alpha)):
            flags.add(Flag.ABORTED)
            alpha = start
            break

        change = float(np.max(np.abs(alpha - start))) if K else 0.0
        frozen_before = frozen.copy()
        if during and (epoch > hp.n_thr or change < hp.gamma_thr):
            if not thresholded:
                pre_threshold = alpha.copy()
            thresholded = True
            cv, frozen = apply_threshold(CoefficientVector(library, alpha), hp.sigma_thr, frozen)
            alpha = np.array(cv.values)
        residual = math.sqrt(misfit_total / prob.norm_sq) if prob.norm_sq > 0 else math.sqrt(misfit_total)
        history.append(alpha.copy())
        residuals.append(residual)
        if callback is not None:
            callback(epoch, alpha.copy(), residual)

        unchanged = bool(np.array_equal(frozen, frozen_before))
        if change < hp.gamma and unchanged and (thresholded or not during):
            flags.add(Flag.CONVERGED)
            break
    else:
        flags.add(Flag.HIT_MAX_EPOCHS)

    if not during and hp.threshold_mode == "final-only":
        pre_threshold = alpha.copy()
        cv, frozen = apply_threshold(CoefficientVector(library, alpha), hp.sigma_thr, frozen)
        alpha = np.array(cv.values)
        if history:
            history[-1] = alpha.copy()
    if blowups:
        flags.add(Flag.INTERVAL_BLOWUPS)

    from .metrics import stagnation_flag

    if len(residuals) >= 50 and stagnation_flag(residuals):
        flags.add(Flag.RESIDUAL_STAGNATION)

    final = CoefficientVector(library, alpha)
    return DiscoveryReport(
        final_alpha=final,
        active_terms=final.nonzero_terms(),
        epochs_run=len(history),
        per_epoch_alpha=np.array(history).reshape(len(history), K),
        per_epoch_l2_residual=np.array(residuals),
        flags=flags,
        blowups=blowups,
        frozen=frozen,
        pre_threshold_alpha=pre_threshold,
        hyperparameters=hp.as_dict(),
    )


def _step(alpha: np.ndarray, g: np.ndarray, rates: np.ndarray, frozen: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(g)):
        raise DivergenceError("non-finite gradient; update skipped")
    new = alpha - rates * g
    new[frozen] = 0.0
    return new


@dataclass
class ConvergenceSummary:
    l1_error: np.ndarray | None
    l2_residual: np.ndarray
    l1_monotone: bool | None
    residual_monotone: bool


def _non_increasing(x: np.ndarray) -> bool:
    return bool(np.all(np.diff(x) <= 0)) if len(x) > 1 else True


def convergence_metrics(report: DiscoveryReport, truth=None) -> ConvergenceSummary:
    """Per-epoch L1 coefficient error against ``truth`` (if given) and the residual trajectory."""
    l1 = None
    if truth is not None:
        t = np.asarray(getattr(truth, "values", truth), dtype=float)
        l1 = np.sum(np.abs(report.per_epoch_alpha - t[None, :]), axis=1)
    res = np.asarray(report.per_epoch_l2_residual)
    return ConvergenceSummary(l1, res, None if l1 is None else _non_increasing(l1), _non_increasing(res))
