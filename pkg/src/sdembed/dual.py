"""Truncated coefficient dynamics of the backward equation.

Expanding the backward-equation solution in monomials, phi(x, t) =
sum_n P(n, t) x^n, and matching coefficients of the generator image turns
the PDE into linear ODEs dP/dt = A P.  Truncating to the max-degree index
set {n : max_i n_i <= N} (sources outside the set read as zero, targets
outside the set dropped) gives a finite system whose solution evaluates
the moment E[x_i^m] at horizon t for any start point x0 as
sum_n P(n, t) x0^n — no sampling involved.

The delta initial condition P(n, 0) = 1 at n = m e_i selects which moment
is propagated.  For systems that do not close under truncation the
boundary mass sum |P(n, t)| over indices touching the cutoff
(`spill_mass`) flags horizons where the truncation is unreliable.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.integrate import solve_ivp

from .polynomial import MultiIndex, multi_index_set
from .sde import SdeModel, adjoint_apply, diffusion_product

__all__ = [
    "IntegratorConfig",
    "SolverError",
    "GeneratorMatrix",
    "DualCoefficients",
    "build_generator",
    "initial_coefficients",
    "solve_dual",
    "solve_moment",
    "eval_moment",
    "coefficients_csv_text",
    "write_coefficients_csv",
    "read_coefficients_csv",
]


@dataclass(frozen=True)
class IntegratorConfig:
    """Adaptive IVP settings; defaults make truncation the dominant error."""

    rtol: float = 1e-10
    atol: float = 1e-12
    method: str = "RK45"
    max_step: float = math.inf


class SolverError(RuntimeError):
    """ODE integration failure, carrying the integrator diagnostics."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class GeneratorMatrix:
    """Sparse truncated generator A with A[k, n] = coeff of x^k in L x^n."""

    index_set: tuple[MultiIndex, ...]
    matrix: sparse.csr_array
    dim: int
    max_degree: int
    model_fingerprint: str = ""

    @cached_property
    def positions(self) -> dict[MultiIndex, int]:
        return {n: i for i, n in enumerate(self.index_set)}


@dataclass(frozen=True)
class DualCoefficients:
    """Solved coefficient vector P(n, t) over a max-degree index set."""

    index_set: tuple[MultiIndex, ...]
    values: np.ndarray
    t: float
    observable: tuple[int, int] | None = None  # (axis, power), axis 1-based
    model_fingerprint: str = ""

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (len(self.index_set),):
            raise ValueError(f"values shape {values.shape} != index count {len(self.index_set)}")
        values = values.copy()
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "index_set", tuple(tuple(n) for n in self.index_set))

    @cached_property
    def positions(self) -> dict[MultiIndex, int]:
        return {n: i for i, n in enumerate(self.index_set)}

    @property
    def dim(self) -> int:
        return len(self.index_set[0])

    @property
    def max_degree(self) -> int:
        return max(max(n) for n in self.index_set)

    def value_at(self, index: MultiIndex) -> float:
        return float(self.values[self.positions[tuple(index)]])

    def spill_mass(self) -> float:
        """Sum of |P(n, t)| over indices with any exponent >= max_degree - 1.

        A non-negligible value means coefficient mass reached the cutoff
        boundary and the truncated solution should not be trusted.
        """
        cut = self.max_degree - 1
        mask = np.array([max(n) >= cut for n in self.index_set])
        return float(np.sum(np.abs(self.values[mask])))

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(repr(self.index_set).encode())
        h.update(self.values.tobytes())
        h.update(repr((self.t, self.observable, self.model_fingerprint)).encode())
        return h.hexdigest()[:16]


def build_generator(model: SdeModel, max_degree: int) -> GeneratorMatrix:
    """Assemble the truncated generator over the max-degree index set.

    Column n holds the polynomial L x^n restricted to in-set target
    indices; entries are exact (integer combinations of the model
    coefficients).
    """
    if max_degree < 0:
        raise ValueError(f"max_degree must be >= 0, got {max_degree}")
    basis = multi_index_set(model.dim, max_degree, "max-degree")
    pos = {n: i for i, n in enumerate(basis)}
    product = diffusion_product(model)
    rows, cols, vals = [], [], []
    for col, source in enumerate(basis):
        image = adjoint_apply(model, source, product=product)
        for target, coef in image.terms.items():
            row = pos.get(target)
            if row is not None:
                rows.append(row)
                cols.append(col)
                vals.append(coef)
    size = len(basis)
    matrix = sparse.csr_array(
        sparse.coo_array((vals, (rows, cols)), shape=(size, size), dtype=float)
    )
    return GeneratorMatrix(tuple(basis), matrix, model.dim, max_degree, model.fingerprint)


def initial_coefficients(index_set, axis: int, power: int) -> np.ndarray:
    """Delta start vector: 1 at the index power * e_axis, 0 elsewhere.

    axis is 1-based; the target index must lie inside the set.
    """
    index_set = tuple(tuple(n) for n in index_set)
    dim = len(index_set[0])
    if not 1 <= axis <= dim:
        raise ValueError(f"axis {axis} out of range for dimension {dim}")
    if power < 0:
        raise ValueError(f"power must be >= 0, got {power}")
    target = tuple(power if d == axis - 1 else 0 for d in range(dim))
    try:
        where = index_set.index(target)
    except ValueError:
        raise ValueError(
            f"moment power {power} exceeds the truncation (index {target} not in set)"
        ) from None
    out = np.zeros(len(index_set))
    out[where] = 1.0
    return out


def solve_dual(
    generator: GeneratorMatrix,
    start: np.ndarray,
    t: float,
    config: IntegratorConfig | None = None,
    observable: tuple[int, int] | None = None,
) -> DualCoefficients:
    """Integrate dP/dt = A P from the start vector to time t."""
    config = config or IntegratorConfig()
    start = np.asarray(start, dtype=float)
    if start.shape != (len(generator.index_set),):
        raise ValueError(f"start shape {start.shape} does not match the index set")
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    if not np.all(np.isfinite(generator.matrix.data)):
        raise SolverError("generator matrix contains non-finite entries", {"t": t})
    if t == 0.0:
        values = start.copy()
    else:
        matrix = generator.matrix

        def rhs(_t, y):
            return matrix @ y

        sol = solve_ivp(
            rhs,
            (0.0, t),
            start,
            method=config.method,
            rtol=config.rtol,
            atol=config.atol,
            max_step=config.max_step,
            t_eval=[t],
        )
        if not sol.success:
            raise SolverError(
                f"coefficient integration failed: {sol.message}",
                {"status": sol.status, "nfev": sol.nfev, "t": t},
            )
        values = sol.y[:, -1]
    if not np.all(np.isfinite(values)):
        raise SolverError("coefficient integration produced non-finite values", {"t": t})
    return DualCoefficients(
        generator.index_set, values, float(t), observable, generator.model_fingerprint
    )


def solve_moment(
    model: SdeModel,
    *,
    axis: int,
    power: int,
    t: float,
    max_degree: int,
    config: IntegratorConfig | None = None,
) -> DualCoefficients:
    """Build the generator, apply the delta start for E[x_axis^power], solve to t."""
    generator = build_generator(model, max_degree)
    start = initial_coefficients(generator.index_set, axis, power)
    return solve_dual(generator, start, t, config, observable=(axis, power))


def eval_moment(coeffs: DualCoefficients, x) -> float | np.ndarray:
    """Moment estimate sum_n P(n, t) x^n at one point (dim,) or a batch (..., dim)."""
    x = np.asarray(x, dtype=float)
    dim = coeffs.dim
    if x.shape[-1] != dim:
        raise ValueError(f"point dimension {x.shape[-1]} != coefficient dimension {dim}")
    exps = np.asarray(coeffs.index_set, dtype=np.int64)  # (K, dim)
    # per-axis power tables keep the cost at one multiply per (index, point)
    flat = x.reshape(-1, dim)
    tables = []
    for d in range(dim):
        top = int(exps[:, d].max())
        tab = np.empty((flat.shape[0], top + 1))
        tab[:, 0] = 1.0
        for p in range(1, top + 1):
            tab[:, p] = tab[:, p - 1] * flat[:, d]
        tables.append(tab)
    monomials = tables[0][:, exps[:, 0]]
    for d in range(1, dim):
        monomials = monomials * tables[d][:, exps[:, d]]
    out = (monomials @ coeffs.values).reshape(x.shape[:-1])
    return float(out) if out.ndim == 0 else out


# -- CSV interchange ---------------------------------------------------------


def coefficients_csv_text(coeffs: DualCoefficients) -> str:
    dim = coeffs.dim
    lines = [",".join([f"n_{d + 1}" for d in range(dim)] + ["value"])]
    for index, value in zip(coeffs.index_set, coeffs.values):
        lines.append(",".join([str(e) for e in index] + [repr(float(value))]))
    return "\n".join(lines) + "\n"


def write_coefficients_csv(coeffs: DualCoefficients, path) -> None:
    Path(path).write_text(coefficients_csv_text(coeffs))


def read_coefficients_csv(path) -> DualCoefficients:
    """Load a coefficient CSV; time and observable metadata are not stored there."""
    path = Path(path)
    lines = path.read_text().strip().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty coefficient file")
    header = lines[0].split(",")
    if header[-1] != "value" or any(not h.startswith("n_") for h in header[:-1]):
        raise ValueError(f"{path}: expected header n_1,...,n_D,value")
    dim = len(header) - 1
    indices, values = [], []
    for ln, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != dim + 1:
            raise ValueError(f"{path}:{ln}: expected {dim + 1} fields")
        indices.append(tuple(int(p) for p in parts[:-1]))
        values.append(float(parts[-1]))
    return DualCoefficients(tuple(indices), np.array(values), t=math.nan, observable=None)
