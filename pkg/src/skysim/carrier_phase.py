"""Carrier-phase positioning with bounded integer-ambiguity search.

Each station observes the fractional carrier phase of the target's range in
wavelengths; the integer cycle count is unknown. The solver minimizes

    sum_i (observed_phase_i + n_i - |p - s_i| / lambda)^2

jointly over integer vectors n and the continuous position p. Integer
candidates are enumerated by sweeping the search box on a quarter-wavelength
grid and rounding each grid point's station ranges (every integer vector
realizable inside the box appears); each unique vector is then refined by
Gauss-Newton and the global minimizer returned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from . import _kernels
from .geometry import Vec3

AMBIGUITY_TIE_TOL = 1e-6


class AmbiguousSolution(ValueError):
    """Two integer candidates fit equally well; both reported."""

    def __init__(self, candidates):
        self.candidates = candidates
        msgs = ", ".join(f"pos={c[0]} residual={c[1]:.3e}" for c in candidates)
        super().__init__(f"ambiguous carrier-phase solution: {msgs}")


@dataclass(frozen=True)
class PhaseMeasurement:
    station_id: str
    carrier_phase: float   # fractional cycles in [0, 1)
    wavelength: float      # m
    noise_std: float       # cycles

    def __post_init__(self):
        if self.wavelength <= 0:
            raise ValueError("wavelength must be > 0")
        if not (0.0 <= self.carrier_phase < 1.0):
            raise ValueError("carrier_phase must be the fractional part, in [0, 1)")


def measure_phase(station: Vec3, target: Vec3, wavelength: float,
                  rng=None, noise_std: float = 0.0, station_id: str = "") -> PhaseMeasurement:
    """Forward model: fractional part of range/wavelength plus optional noise."""
    cycles = station.dist(target) / wavelength
    if noise_std > 0 and rng is not None:
        cycles += rng.normal(0.0, noise_std)
    return PhaseMeasurement(station_id=station_id, carrier_phase=cycles % 1.0,
                            wavelength=wavelength, noise_std=noise_std)


def _check_geometry(stations: np.ndarray) -> None:
    if stations.shape[0] < 4:
        raise ValueError("need at least 4 stations")
    centered = stations - stations.mean(axis=0)
    if np.linalg.matrix_rank(centered, tol=1e-6) < 3:
        raise ValueError("stations must be non-coplanar")


def carrier_phase_solve(measurements: Sequence[PhaseMeasurement],
                        geometry: Sequence[Vec3],
                        search_box: Tuple[Vec3, Vec3],
                        ambiguity_span: int) -> Tuple[Vec3, float]:
    """Global minimizer of the phase residual inside the search box.

    geometry holds the station positions in measurement order; search_box is
    (low corner, high corner); ambiguity_span bounds each |n_i - n_i(center)|.
    Returns (position, residual sum of squares in cycles^2). Raises
    AmbiguousSolution when two distinct integer vectors tie within 1e-6.
    """
    if len(measurements) != len(geometry):
        raise ValueError("one measurement per station required")
    stations = np.array([g.as_array() for g in geometry])
    _check_geometry(stations)
    lam = measurements[0].wavelength
    if any(abs(m.wavelength - lam) > 1e-12 for m in measurements):
        raise ValueError("mixed wavelengths are not supported")
    lo, hi = search_box
    lo_a, hi_a = lo.as_array(), hi.as_array()
    if np.any(hi_a <= lo_a):
        raise ValueError("search box must have positive extent")
    diameter = float(np.linalg.norm(hi_a - lo_a))
    if ambiguity_span * lam < diameter / 2.0:
        raise ValueError(
            f"ambiguity_span {ambiguity_span} ({ambiguity_span * lam:.2f} m) cannot cover "
            f"the search box (diameter {diameter:.2f} m)")
    phases = np.array([m.carrier_phase for m in measurements])

    # Quarter-wavelength sweep; every realizable integer vector in the box
    # shows up at some grid point.
    step = lam / 4.0
    axes = [np.arange(lo_a[d], hi_a[d] + step, step) for d in range(3)]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    points = np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])
    dists = np.linalg.norm(points[:, None, :] - stations[None, :, :], axis=2)
    n_float = dists / lam - phases[None, :]
    n_grid = np.round(n_float).astype(np.int64)

    center = 0.5 * (lo_a + hi_a)
    n_center = np.round(np.linalg.norm(center - stations, axis=1) / lam - phases).astype(np.int64)
    in_span = np.all(np.abs(n_grid - n_center[None, :]) <= ambiguity_span, axis=1)
    n_grid = n_grid[in_span]
    points = points[in_span]
    if len(n_grid) == 0:
        raise ValueError("no integer candidates inside the ambiguity span")

    n_unique, first_idx = np.unique(n_grid, axis=0, return_index=True)
    p0 = points[first_idx].astype(float)
    refined, objectives = _kernels.phase_gauss_newton(
        stations.astype(float), phases.astype(float), n_unique.astype(float),
        float(lam), p0)

    # Keep only solutions that stayed inside (a slightly padded) box.
    pad = lam
    inside = np.all((refined >= lo_a - pad) & (refined <= hi_a + pad), axis=1)
    if not np.any(inside):
        raise ValueError("no candidate converged inside the search box")
    refined = refined[inside]
    objectives = objectives[inside]
    n_kept = n_unique[inside]

    order = np.lexsort((np.arange(len(objectives)), objectives))
    best = order[0]
    best_obj = float(objectives[best])
    best_pos = Vec3(*refined[best])
    # Ambiguity check: a different integer vector, materially elsewhere,
    # fitting within the tie tolerance.
    for idx in order[1:]:
        if float(objectives[idx]) > best_obj + AMBIGUITY_TIE_TOL:
            break
        if not np.array_equal(n_kept[idx], n_kept[best]) and \
                np.linalg.norm(refined[idx] - refined[best]) > lam / 2.0:
            raise AmbiguousSolution([
                (best_pos, best_obj),
                (Vec3(*refined[idx]), float(objectives[idx])),
            ])
    return best_pos, best_obj


def phase_objective(p: Vec3, measurements: Sequence[PhaseMeasurement],
                    geometry: Sequence[Vec3]) -> float:
    """Residual at p with the per-station optimal (rounded) integers."""
    total = 0.0
    for m, s in zip(measurements, geometry):
        cycles = p.dist(s) / m.wavelength
        frac = cycles - m.carrier_phase
        r = frac - round(frac)
        total += r * r
    return total
