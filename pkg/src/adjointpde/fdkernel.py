"""Second-order central finite differences for the library building blocks."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .core import Boundary

# Unscaled second-order central stencils, offsets -r..r. Divide by dx**d.
STENCILS: dict[int, np.ndarray] = {
    0: np.array([1.0]),
    1: np.array([-0.5, 0.0, 0.5]),
    2: np.array([1.0, -2.0, 1.0]),
    3: np.array([-0.5, 1.0, 0.0, -1.0, 0.5]),
    4: np.array([1.0, -4.0, 6.0, -4.0, 1.0]),
    5: np.array([-0.5, 2.0, -2.5, 0.0, 2.5, -2.0, 0.5]),
    6: np.array([1.0, -6.0, 15.0, -20.0, 15.0, -6.0, 1.0]),
}
MAX_ORDER = max(STENCILS)


def stencil(order: int, dx: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Offsets and weights of the central stencil for ``order``, scaled by ``dx``."""
    if order not in STENCILS:
        raise ValueError(f"unsupported derivative order {order} (max {MAX_ORDER})")
    w = STENCILS[order]
    r = len(w) // 2
    return np.arange(-r, r + 1), w / dx**order


def stencil_width(order: int) -> int:
    if order not in STENCILS:
        raise ValueError(f"unsupported derivative order {order} (max {MAX_ORDER})")
    return len(STENCILS[order])


def int_power(u: np.ndarray, k: int) -> np.ndarray:
    # repeated multiplication keeps results identical across call sites
    if k == 0:
        return np.ones_like(u)
    out = u
    for _ in range(k - 1):
        out = out * u
    return out


def monomial_field(f: np.ndarray, power: Sequence[int]) -> np.ndarray:
    """Pointwise ``f_1^{p_1} ... f_N^{p_N}``; components run along the first axis of ``f``."""
    f = np.asarray(f, dtype=float)
    if len(power) != f.shape[0]:
        raise ValueError(f"power {tuple(power)} does not match {f.shape[0]} components")
    out = None
    for comp, p in zip(f, power):
        if p == 0:
            continue
        factor = int_power(comp, p)
        out = factor if out is None else out * factor
    if out is None:
        return np.ones(f.shape[1:])
    return out.copy() if np.shares_memory(out, f) else out


def power_derivative(f: np.ndarray, power: Sequence[int], i: int) -> np.ndarray:
    """Partial derivative of ``f^p`` with respect to component ``i``, in product form."""
    f = np.asarray(f, dtype=float)
    if len(power) != f.shape[0]:
        raise ValueError(f"power {tuple(power)} does not match {f.shape[0]} components")
    p_i = power[i]
    if p_i == 0:
        return np.zeros(f.shape[1:])
    reduced = list(power)
    reduced[i] = p_i - 1
    return p_i * monomial_field(f, reduced)


def _derivative_axis(u: np.ndarray, order: int, dx: float, axis: int, boundary: Boundary) -> np.ndarray:
    offsets, weights = stencil(order, dx)
    r = len(offsets) // 2
    n = u.shape[axis]
    if n < len(offsets):
        raise ValueError(f"axis of length {n} is too short for a width-{len(offsets)} stencil")
    pad = [(0, 0)] * u.ndim
    pad[axis] = (r, r)
    padded = np.pad(u, pad, mode="wrap" if boundary == Boundary.PERIODIC else "constant")
    out = None
    for o, w in zip(offsets, weights):
        if w == 0.0:
            continue
        sl = [slice(None)] * u.ndim
        sl[axis] = slice(r + o, r + o + n)
        term = w * padded[tuple(sl)]
        out = term if out is None else out + term
    return out


def apply_derivative(
    u: np.ndarray,
    deriv: Sequence[int],
    spacing: Sequence[float],
    boundary: Boundary | str = Boundary.ZERO_PAD,
) -> np.ndarray:
    """Iterated central difference ``D^{d_1}_{x_1} ... D^{d_n}_{x_n} u``.

    The last ``len(deriv)`` axes of ``u`` are the spatial axes; leading axes are
    treated as a batch. Axes are differentiated in ascending order.
    """
    boundary = Boundary(boundary)
    u = np.asarray(u, dtype=float)
    n = len(deriv)
    if len(spacing) != n:
        raise ValueError("spacing and derivative multi-index lengths differ")
    if u.ndim < n:
        raise ValueError(f"array of rank {u.ndim} cannot take a {n}-dimensional derivative")
    out = u
    for k, (order, dx) in enumerate(zip(deriv, spacing)):
        if order == 0:
            continue
        if order > MAX_ORDER:
            raise ValueError(f"unsupported derivative order {order} (max {MAX_ORDER})")
        out = _derivative_axis(out, order, dx, u.ndim - n + k, boundary)
    return out
