"""Evaluation oracles and error geometry.

Holds the closed-form Ornstein-Uhlenbeck moments (the only analytic
reference among the builtin systems), rectangular grid tabulation for
heatmap data, and the radial error profile: mean squared difference of two
predictors over a polar mesh, aggregated by distance from the origin.
Predictors are vectorized callables mapping an (M, dim) array of points to
an (M,) array of values; rendering of the emitted CSV tables is left to
external tooling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "RadialErrorProfile",
    "analytic_ou_moment",
    "grid_eval",
    "line_eval",
    "radial_error_profile",
    "grid_csv_text",
    "write_grid_csv",
    "line_csv_text",
    "write_line_csv",
    "profile_csv_text",
    "write_profile_csv",
]


def analytic_ou_moment(gamma: float, sigma: float, x0, t: float, power: int):
    """Closed-form first or second moment of the Ornstein-Uhlenbeck process.

    E[x(t)]   = x0 exp(-gamma t)
    E[x(t)^2] = (x0 exp(-gamma t))^2 + sigma^2 / (2 gamma) (1 - exp(-2 gamma t))

    x0 may be a scalar or an array; the result matches its shape.
    """
    if gamma <= 0:
        raise ValueError(f"gamma must be > 0, got {gamma}")
    x0 = np.asarray(x0, dtype=float)
    decayed = x0 * math.exp(-gamma * t)
    if power == 1:
        out = decayed
    elif power == 2:
        out = decayed**2 + sigma**2 / (2.0 * gamma) * (1.0 - math.exp(-2.0 * gamma * t))
    else:
        raise ValueError(f"analytic moments available for powers 1 and 2, got {power}")
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class RadialErrorProfile:
    """Per-band mean squared difference of two predictors on a polar mesh."""

    band_edges: np.ndarray  # (bands + 1,)
    mse: np.ndarray  # (bands,)
    mesh: tuple[int, int]  # (radial, angular) point counts
    predictor_label: str = ""
    reference_label: str = ""

    def __post_init__(self):
        edges = np.asarray(self.band_edges, dtype=float).copy()
        mse = np.asarray(self.mse, dtype=float).copy()
        if edges.shape != (mse.shape[0] + 1,):
            raise ValueError("band_edges must have one more entry than mse")
        if np.any(np.diff(edges) <= 0):
            raise ValueError("band_edges must be strictly increasing")
        if np.any(mse < 0):
            raise ValueError("band MSE must be non-negative")
        edges.flags.writeable = False
        mse.flags.writeable = False
        object.__setattr__(self, "band_edges", edges)
        object.__setattr__(self, "mse", mse)

    def band_mean(self, r_lo: float, r_hi: float) -> float:
        """Average MSE over the bands whose centers fall in [r_lo, r_hi]."""
        centers = 0.5 * (self.band_edges[:-1] + self.band_edges[1:])
        mask = (centers >= r_lo) & (centers <= r_hi)
        if not mask.any():
            raise ValueError(f"no bands with centers in [{r_lo}, {r_hi}]")
        return float(self.mse[mask].mean())


def grid_eval(predictor, box, resolution) -> np.ndarray:
    """Tabulate a 2-D predictor on a rectangular grid including the corners.

    Returns rows (x1, x2, value) in row-major order (x1 outer, x2 inner).
    """
    (x1_lo, x1_hi), (x2_lo, x2_hi) = box
    n1, n2 = resolution
    if n1 < 2 or n2 < 2:
        raise ValueError("resolution must be at least 2 per axis")
    x1 = np.linspace(x1_lo, x1_hi, n1)
    x2 = np.linspace(x2_lo, x2_hi, n2)
    g1, g2 = np.meshgrid(x1, x2, indexing="ij")
    points = np.column_stack([g1.ravel(), g2.ravel()])
    values = np.asarray(predictor(points), dtype=float).reshape(points.shape[0])
    return np.column_stack([points, values])


def line_eval(predictor, lo: float, hi: float, count: int) -> np.ndarray:
    """Tabulate a 1-D predictor on [lo, hi]; rows are (x, value)."""
    if count < 2:
        raise ValueError("count must be at least 2")
    x = np.linspace(lo, hi, count)
    values = np.asarray(predictor(x[:, None]), dtype=float).reshape(count)
    return np.column_stack([x, values])


def radial_error_profile(
    predictor,
    reference,
    r_max: float,
    mesh: tuple[int, int] = (100, 100),
    bands: int | None = None,
    labels: tuple[str, str] = ("", ""),
) -> RadialErrorProfile:
    """Squared predictor-reference differences averaged by distance band.

    The mesh places radii at ring centers (uniform spacing r_max / n_r,
    first ring at half a spacing) and angles uniformly on [0, 2pi); every
    mesh point weighs equally within a band.  By default each ring is its
    own band; passing a smaller `bands` groups rings into equal-width
    radial bands.
    """
    n_r, n_theta = mesh
    if n_r < 2 or n_theta < 2:
        raise ValueError("mesh must have at least 2 points per coordinate")
    if r_max <= 0:
        raise ValueError(f"r_max must be > 0, got {r_max}")
    if bands is None:
        bands = n_r
    if not 1 <= bands <= n_r:
        raise ValueError(f"bands must be in 1..{n_r}, got {bands}")
    spacing = r_max / n_r
    radii = (np.arange(n_r) + 0.5) * spacing
    angles = np.arange(n_theta) * (2.0 * math.pi / n_theta)
    rr, tt = np.meshgrid(radii, angles, indexing="ij")
    points = np.column_stack([(rr * np.cos(tt)).ravel(), (rr * np.sin(tt)).ravel()])
    diff = np.asarray(predictor(points), dtype=float) - np.asarray(reference(points), dtype=float)
    ring_mse = (diff.reshape(n_r, n_theta) ** 2).mean(axis=1)
    edges = np.linspace(0.0, r_max, bands + 1)
    band_of_ring = np.minimum((radii / (r_max / bands)).astype(int), bands - 1)
    mse = np.array([ring_mse[band_of_ring == b].mean() for b in range(bands)])
    return RadialErrorProfile(edges, mse, (n_r, n_theta), labels[0], labels[1])


# -- CSV interchange ---------------------------------------------------------


def grid_csv_text(table: np.ndarray) -> str:
    lines = ["x1,x2,value"]
    for x1, x2, value in table:
        lines.append(f"{float(x1)!r},{float(x2)!r},{float(value)!r}")
    return "\n".join(lines) + "\n"


def write_grid_csv(table: np.ndarray, path) -> None:
    Path(path).write_text(grid_csv_text(table))


def line_csv_text(table: np.ndarray) -> str:
    lines = ["x,value"]
    for x, value in table:
        lines.append(f"{float(x)!r},{float(value)!r}")
    return "\n".join(lines) + "\n"


def write_line_csv(table: np.ndarray, path) -> None:
    Path(path).write_text(line_csv_text(table))


def profile_csv_text(profile: RadialErrorProfile) -> str:
    lines = ["r_lo,r_hi,mse"]
    for lo, hi, mse in zip(profile.band_edges[:-1], profile.band_edges[1:], profile.mse):
        lines.append(f"{float(lo)!r},{float(hi)!r},{float(mse)!r}")
    return "\n".join(lines) + "\n"


def write_profile_csv(profile: RadialErrorProfile, path) -> None:
    Path(path).write_text(profile_csv_text(profile))
