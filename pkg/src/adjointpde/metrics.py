"""Recovery metrics: true positivity ratio, data residual, stagnation test."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .core import CoefficientVector, Dataset, Hyperparameters, TermLibrary, coefficient_l1_error
from .forward import TermGroups, integrate, plan_steps

METRICS_HEADER = ("problem", "method", "tpr", "l1_coeff_err", "l2_residual", "epochs", "flags")


def _values(v) -> np.ndarray:
    return np.asarray(getattr(v, "values", v), dtype=float)


def align(est: CoefficientVector, truth: CoefficientVector) -> tuple[np.ndarray, np.ndarray]:
    """Both vectors laid out over the union of their terms; a missing term reads as zero.

    Lets an estimate on one library be scored against a truth stored on another,
    so a true term absent from the candidate set counts as a false negative.
    """
    keys = list(est.library) + [t for t in truth.library if t not in set(est.library)]
    slot = {t: k for k, t in enumerate(keys)}
    e, t = np.zeros(len(keys)), np.zeros(len(keys))
    for key, v in zip(est.library, est.values):
        e[slot[key]] = v
    for key, v in zip(truth.library, truth.values):
        t[slot[key]] = v
    return e, t


def support_counts(est, truth, zero_tol: float = 1e-3) -> tuple[int, int, int]:
    e, t = _values(est), _values(truth)
    if e.shape != t.shape:
        raise ValueError(f"estimate has {e.size} slots, truth has {t.size}")
    est_on = np.abs(e) > zero_tol
    true_on = t != 0.0
    tp = int(np.sum(est_on & true_on))
    fn = int(np.sum(~est_on & true_on))
    fp = int(np.sum(est_on & ~true_on))
    return tp, fn, fp


def tpr(est, truth, zero_tol: float = 1e-3) -> float:
    """``TP / (TP + FN + FP)``; an empty estimate of an empty truth scores 1."""
    if zero_tol < 0:
        raise ValueError("zero_tol must be non-negative")
    tp, fn, fp = support_counts(est, truth, zero_tol)
    total = tp + fn + fp
    return 1.0 if total == 0 else tp / total


def l2_residual(data: Dataset, library: TermLibrary, alpha, hp: Hyperparameters | None = None) -> float:
    """Relative L2 misfit of one-interval forward solves started from each data snapshot.

    Returns ``inf`` if any interval blows up.
    """
    hp = hp or Hyperparameters()
    a = _values(alpha)
    groups = TermGroups(library)
    times = np.asarray(data.times, dtype=float)
    vals = np.asarray(data.values, dtype=float)
    num = 0.0
    for j in range(len(times) - 1):
        steps, dt = plan_steps(times[j], times[j + 1], library, a, data.grid, hp)
        states, blown, _ = integrate(vals[j][None], dt, steps, groups, a, data.grid, hp.blowup_factor)
        if blown[0]:
            return math.inf
        num += float(np.sum((states[-1, 0] - vals[j + 1]) ** 2))
    den = float(np.sum(vals[1:] ** 2))
    return math.sqrt(num / den) if den > 0 else math.sqrt(num)


def stagnation_flag(residuals: Sequence[float], window: int = 50, factor: float = 0.99, floor: float = 1e-8) -> bool:
    """True when the residual fell by less than ``factor`` over the last ``window`` epochs and is above ``floor``."""
    r = np.asarray(residuals, dtype=float)
    if len(r) < window + 1:
        if len(r) < 2:
            return False
        window = len(r) - 1
    last, before = r[-1], r[-1 - window]
    if not last > floor:
        return False
    return bool(last > factor * before)


def metrics_row(problem: str, method: str, est, truth, residual: float, epochs: int, flags: Sequence[str] = (),
                zero_tol: float = 1e-3) -> dict:
    return {
        "problem": problem,
        "method": method,
        "tpr": tpr(est, truth, zero_tol),
        "l1_coeff_err": coefficient_l1_error(est, truth),
        "l2_residual": residual,
        "epochs": epochs,
        "flags": ";".join(flags),
    }
