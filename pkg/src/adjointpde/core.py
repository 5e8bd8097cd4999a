"""Domain types shared across the package and the candidate term library."""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field, fields, replace
from typing import Iterable, Sequence

import numpy as np


class Boundary(str, enum.Enum):
    ZERO_PAD = "zeropad"
    PERIODIC = "periodic"


@dataclass(frozen=True, order=True)
class TermKey:
    """One candidate term ``alpha_{i,d,p} * D^d[f^p]`` of equation ``eq_index``."""

    eq_index: int
    deriv: tuple[int, ...]
    power: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "deriv", tuple(int(v) for v in self.deriv))
        object.__setattr__(self, "power", tuple(int(v) for v in self.power))
        if self.eq_index < 0:
            raise ValueError(f"negative equation index {self.eq_index}")
        if any(v < 0 for v in self.deriv) or any(v < 0 for v in self.power):
            raise ValueError(f"negative multi-index in {self}")
        if sum(self.power) < 1:
            raise ValueError("the all-zero power vector is not a valid term")

    @property
    def order(self) -> int:
        """|d|, the total derivative order."""
        return sum(self.deriv)

    @property
    def degree(self) -> int:
        return sum(self.power)

    def label(self, names: Sequence[str] | None = None, axes: Sequence[str] | None = None) -> str:
        """Human readable form such as ``(f^2)_x`` or ``f1*f2^2``."""
        N = len(self.power)
        n = len(self.deriv)
        if names is None:
            names = ["f"] if N == 1 else [f"f{k + 1}" for k in range(N)]
        if axes is None:
            axes = ["x"] if n == 1 else [f"x{k + 1}" for k in range(n)]
        factors = []
        for name, p in zip(names, self.power):
            if p == 1:
                factors.append(name)
            elif p > 1:
                factors.append(f"{name}^{p}")
        mono = "*".join(factors)
        if self.order == 0:
            return mono
        sub = "".join(ax * d for ax, d in zip(axes, self.deriv))
        if len(factors) == 1 and "^" not in mono:
            return f"{mono}_{sub}"
        return f"({mono})_{sub}"


@dataclass(frozen=True)
class TermLibrary:
    terms: tuple[TermKey, ...]
    n: int
    N: int

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if len(set(self.terms)) != len(self.terms):
            raise ValueError("duplicate TermKey in library")
        for t in self.terms:
            if len(t.deriv) != self.n or len(t.power) != self.N:
                raise ValueError(f"term {t} does not match n={self.n}, N={self.N}")
            if t.eq_index >= self.N:
                raise ValueError(f"term {t} has eq_index >= N={self.N}")

    def __len__(self) -> int:
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)

    def __getitem__(self, k):
        return self.terms[k]

    @property
    def d_max(self) -> int:
        return max((t.order for t in self.terms), default=0)

    @property
    def p_max(self) -> int:
        return max((t.degree for t in self.terms), default=0)

    def index(self, key: TermKey) -> int:
        return self.terms.index(key)

    def slot(self, eq_index: int, deriv: Iterable[int], power: Iterable[int]) -> int:
        return self.index(TermKey(eq_index, tuple(deriv), tuple(power)))

    def orders(self) -> np.ndarray:
        return np.array([t.order for t in self.terms], dtype=int)


def build_library(
    n: int,
    N: int,
    deriv_set: Iterable[Sequence[int]],
    power_set: Iterable[Sequence[int]],
) -> TermLibrary:
    """Cross product of derivative and power multi-indices, one copy per equation.

    Terms are ordered lexicographically by (eq_index, deriv, power).
    """
    derivs = sorted({tuple(int(v) for v in d) for d in deriv_set})
    powers = sorted({tuple(int(v) for v in p) for p in power_set})
    for d in derivs:
        if len(d) != n:
            raise ValueError(f"derivative multi-index {d} has length {len(d)}, expected n={n}")
    for p in powers:
        if len(p) != N:
            raise ValueError(f"power multi-index {p} has length {len(p)}, expected N={N}")
        if sum(p) == 0:
            raise ValueError("power set must not contain the all-zero vector")
    terms = [TermKey(i, d, p) for i, d, p in itertools.product(range(N), derivs, powers)]
    return TermLibrary(tuple(terms), n, N)


def ranged_library(n: int, N: int, d_orders: Iterable[int], p_degrees: Iterable[int]) -> TermLibrary:
    """Library from derivative orders and power degrees (all multi-indices with those sums)."""
    d_orders = set(d_orders)
    p_degrees = set(p_degrees)
    derivs = [d for d in itertools.product(range(max(d_orders) + 1), repeat=n) if sum(d) in d_orders]
    powers = [p for p in itertools.product(range(max(p_degrees) + 1), repeat=N) if sum(p) in p_degrees]
    return build_library(n, N, derivs, powers)


@dataclass(frozen=True)
class CoefficientVector:
    library: TermLibrary
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if values.shape != (len(self.library),):
            raise ValueError(f"expected {len(self.library)} coefficients, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise FloatingPointError("coefficient vector contains NaN or Inf")

    @classmethod
    def zeros(cls, library: TermLibrary) -> "CoefficientVector":
        return cls(library, np.zeros(len(library)))

    @classmethod
    def from_terms(cls, library: TermLibrary, mapping: dict[TermKey, float]) -> "CoefficientVector":
        values = np.zeros(len(library))
        for key, value in mapping.items():
            values[library.index(key)] = value
        return cls(library, values)

    def __len__(self) -> int:
        return len(self.values)

    def nonzero_terms(self, tol: float = 0.0) -> list[TermKey]:
        return [t for t, v in zip(self.library, self.values) if abs(v) > tol]

    def to_text(self) -> str:
        return library_to_text(self.library, self.values)

    @classmethod
    def from_text(cls, text: str) -> "CoefficientVector":
        library, values = library_from_text(text)
        return cls(library, values)


def coefficient_l1_error(est, truth) -> float:
    """Sum of absolute coefficient differences."""
    a = np.asarray(getattr(est, "values", est), dtype=float)
    b = np.asarray(getattr(truth, "values", truth), dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return float(np.sum(np.abs(a - b)))


def library_to_text(library: TermLibrary, values: Sequence[float]) -> str:
    lines = []
    for t, v in zip(library, values):
        d = ",".join(str(x) for x in t.deriv)
        p = ",".join(str(x) for x in t.power)
        lines.append(f"{t.eq_index} {d} {p} {float(v)!r}")
    return "\n".join(lines) + "\n"


def library_from_text(text: str) -> tuple[TermLibrary, np.ndarray]:
    terms, values = [], []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        i, d, p, v = line.split()
        terms.append(TermKey(int(i), tuple(int(x) for x in d.split(",")), tuple(int(x) for x in p.split(","))))
        values.append(float(v))
    if not terms:
        raise ValueError("no terms found")
    return TermLibrary(tuple(terms), len(terms[0].deriv), len(terms[0].power)), np.array(values)


@dataclass(frozen=True)
class Grid:
    dims: tuple[int, ...]
    spacing: tuple[float, ...]
    origin: tuple[float, ...] | None = None
    boundary: Boundary = Boundary.ZERO_PAD

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(v) for v in self.dims))
        object.__setattr__(self, "spacing", tuple(float(v) for v in self.spacing))
        origin = (0.0,) * len(self.dims) if self.origin is None else tuple(float(v) for v in self.origin)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "boundary", Boundary(self.boundary))
        if not (len(self.dims) == len(self.spacing) == len(self.origin)):
            raise ValueError("dims, spacing and origin must have the same length")
        if any(v <= 0 for v in self.dims):
            raise ValueError(f"grid dims must be positive: {self.dims}")
        if any(not (h > 0 and np.isfinite(h)) for h in self.spacing):
            raise ValueError(f"grid spacing must be positive: {self.spacing}")

    @property
    def n(self) -> int:
        return len(self.dims)

    @property
    def min_spacing(self) -> float:
        return min(self.spacing)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axis(self, k: int) -> np.ndarray:
        return self.origin[k] + self.spacing[k] * np.arange(self.dims[k])

    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*[self.axis(k) for k in range(self.n)], indexing="ij")


@dataclass(frozen=True)
class Field:
    grid: Grid
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim != self.grid.n + 1 or data.shape[1:] != self.grid.dims:
            raise ValueError(f"field shape {data.shape} does not match grid dims {self.grid.dims}")
        if not np.all(np.isfinite(data)):
            raise FloatingPointError("field contains NaN or Inf")
        object.__setattr__(self, "data", data)

    @property
    def n_components(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class Dataset:
    """Snapshots ``values[j]`` (shape ``[N, *dims]``) at ``times[j]``."""

    grid: Grid
    times: np.ndarray
    values: np.ndarray
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        if times.ndim != 1 or len(times) < 1:
            raise ValueError("times must be a non-empty vector")
        if np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing")
        if values.ndim != self.grid.n + 2 or values.shape[0] != len(times) or values.shape[2:] != self.grid.dims:
            raise ValueError(
                f"values shape {values.shape} inconsistent with {len(times)} times and grid {self.grid.dims}"
            )
        if not np.all(np.isfinite(values)):
            raise FloatingPointError("dataset contains NaN or Inf")

    @property
    def n_components(self) -> int:
        return self.values.shape[1]

    @property
    def n_intervals(self) -> int:
        return len(self.times) - 1

    @property
    def snapshots(self) -> list[Field]:
        return [Field(self.grid, v) for v in self.values]

    def snapshot(self, j: int) -> Field:
        return Field(self.grid, self.values[j])

    def with_values(self, values: np.ndarray, **metadata) -> "Dataset":
        return Dataset(self.grid, self.times, values, {**self.metadata, **metadata})


@dataclass(frozen=True)
class Hyperparameters:
    beta: float = 1.0
    eps0: float = 1e-12
    sigma_thr: float = 1e-3
    n_thr: int = 100
    gamma: float = 1e-9
    gamma_thr: float = 1e-6
    max_epochs: int = 1000
    substeps: int = 1
    cfl_safety: float = 0.05
    averaging: bool = False
    threshold_mode: str = "during"
    ridge_once: bool = True
    max_retries: int = 3
    blowup_factor: float = 1e6
    lr_scaling: str = "grid"

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        for name in ("eps0", "sigma_thr", "gamma", "gamma_thr", "cfl_safety"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("n_thr", "max_epochs", "substeps"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.threshold_mode not in ("during", "final-only"):
            raise ValueError(f"unknown threshold mode {self.threshold_mode!r}")
        if self.lr_scaling not in ("grid", "diagonal"):
            raise ValueError(f"unknown learning-rate scaling {self.lr_scaling!r}")

    def replace(self, **changes) -> "Hyperparameters":
        return replace(self, **changes)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def format_pde(alpha: CoefficientVector, digits: int = 6, names: Sequence[str] | None = None) -> list[str]:
    """One line per equation with terms moved to the right-hand side, e.g. ``f_t = 1.000000 f_xx``."""
    lib = alpha.library
    if names is None:
        names = ["f"] if lib.N == 1 else [f"f{k + 1}" for k in range(lib.N)]
    lines = []
    for i in range(lib.N):
        parts = []
        for t, a in zip(lib, alpha.values):
            if t.eq_index != i or a == 0.0:
                continue
            c = -float(a)
            sign = "-" if c < 0 else "+"
            parts.append((sign, f"{abs(c):.{digits}f} {t.label(names)}"))
        if not parts:
            rhs = "0"
        else:
            first_sign, first = parts[0]
            rhs = ("-" if first_sign == "-" else "") + first
            rhs += "".join(f" {s} {body}" for s, body in parts[1:])
        lines.append(f"{names[i]}_t = {rhs}")
    return lines
