"""Density-metric analysis over polarization sweeps.

D compares total site densities of two equal-N systems; D(P) is measured
against the central reference P = 0.5; the asymmetry diagnostic pairs
polarizations equidistant from the reference.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass

import numpy as np

from .model import DensityProfile

P_C_MAX = 1.0 / 3.0
DEFAULT_REFERENCE_P = 0.5
DEFAULT_ELEVATION_FACTOR = 3.0
_PARTICLE_TOL = 1e-8


class ProfileMismatchError(Exception):
    """The two profiles are not comparable (length or particle number)."""


class UnpairableGridError(Exception):
    """A polarization grid point lacks its mirror partner 1 - P."""


@dataclass(frozen=True)
class SeriesContext:
    L: int
    U: float
    n: float
    reference_P: float = DEFAULT_REFERENCE_P


@dataclass(frozen=True)
class SeriesPoint:
    P: float
    value: float
    flags: tuple[str, ...] = ()


@dataclass(frozen=True)
class DistanceSeries:
    context: SeriesContext
    points: tuple[SeriesPoint, ...]

    def value_at(self, P: float) -> float:
        for pt in self.points:
            if math.isclose(pt.P, P, abs_tol=1e-12):
                return pt.value
        raise KeyError(f"no point at P={P}")


@dataclass(frozen=True)
class AsymmetrySeries:
    context: SeriesContext
    points: tuple[SeriesPoint, ...]  # P <= 0.5, value = |D(1-P) - D(P)|


@dataclass(frozen=True)
class AsymmetryReport:
    context: SeriesContext
    baseline: float            # median asymmetry over the normal-phase window
    edge_value: float          # asymmetry at the smallest nonzero P
    edge_P: float
    elevated: tuple[float, ...]  # P in (0, P_C_MAX] with value > k * baseline
    k: float
    p_c_max: float = P_C_MAX

    def to_json(self) -> str:
        return json.dumps(
            {
                "context": {
                    "L": self.context.L,
                    "U": self.context.U,
                    "n": self.context.n,
                    "reference_P": self.context.reference_P,
                },
                "baseline": self.baseline,
                "edge_P": self.edge_P,
                "edge_value": self.edge_value,
                "elevated": list(self.elevated),
                "k": self.k,
                "p_c_max": self.p_c_max,
            },
            indent=2,
            sort_keys=True,
        )


def density_distance(
    rho1: DensityProfile, rho2: DensityProfile, spin_resolved: bool = False
) -> float:
    """Normalized L1 distance between two equal-N density profiles, in [0, 1].

    The lattice sum with unit spacing replaces the continuum integral; the
    1/(2N) normalization then bounds the distance by 1 exactly.
    """
    if rho1.L != rho2.L:
        raise ProfileMismatchError(f"profile lengths differ: {rho1.L} vs {rho2.L}")
    n1, n2 = rho1.N, rho2.N
    if abs(n1 - n2) > _PARTICLE_TOL:
        raise ProfileMismatchError(f"particle numbers differ: {n1} vs {n2}")
    if n1 <= 0:
        raise ProfileMismatchError("distance undefined for N = 0")
    if spin_resolved:
        diff = np.abs(rho1.up - rho2.up).sum() + np.abs(rho1.down - rho2.down).sum()
    else:
        diff = np.abs(rho1.total - rho2.total).sum()
    # Normalize by the mean particle number so the distance is exactly
    # symmetric even when the two N agree only to rounding.
    return float(diff / (n1 + n2))


def distance_series(
    profiles: dict[float, DensityProfile],
    context: SeriesContext,
    flags: dict[float, tuple[str, ...]] | None = None,
    spin_resolved: bool = False,
) -> DistanceSeries:
    """D(P) against the reference profile for every P in the map."""
    flags = flags or {}
    ref_P = context.reference_P
    ref = None
    for P, prof in profiles.items():
        if math.isclose(P, ref_P, abs_tol=1e-12):
            ref = prof
            ref_key = P
    if ref is None:
        raise KeyError(f"reference profile at P={ref_P} missing from sweep")
    ref_flags = tuple(flags.get(ref_key, ()))
    points = []
    for P in sorted(profiles):
        if math.isclose(P, ref_P, abs_tol=1e-12):
            d = 0.0
        else:
            d = density_distance(profiles[P], ref, spin_resolved=spin_resolved)
        merged = tuple(dict.fromkeys(tuple(flags.get(P, ())) + ref_flags))
        points.append(SeriesPoint(P=P, value=d, flags=merged))
    return DistanceSeries(context=context, points=tuple(points))


def asymmetry_series(series: DistanceSeries) -> AsymmetrySeries:
    """|D(1-P) - D(P)| for every pairable P <= 0.5.

    Flagged points are excluded together with their mirrors; a grid point
    whose mirror is absent altogether signals a misconfigured sweep.
    """
    by_P = {pt.P: pt for pt in series.points}
    points = []
    for pt in series.points:
        if pt.P > 0.5 + 1e-12:
            continue
        mirror = None
        for q, cand in by_P.items():
            if math.isclose(q, 1.0 - pt.P, abs_tol=1e-9):
                mirror = cand
        if mirror is None:
            raise UnpairableGridError(
                f"P={pt.P} has no mirror point at {1.0 - pt.P} in the grid"
            )
        if pt.flags or mirror.flags:
            continue
        points.append(SeriesPoint(P=pt.P, value=abs(mirror.value - pt.value)))
    return AsymmetrySeries(context=series.context, points=tuple(points))


def asymmetry_report(
    series: AsymmetrySeries, k: float = DEFAULT_ELEVATION_FACTOR
) -> AsymmetryReport:
    """Descriptive summary: fluctuation baseline, edge value, elevated region.

    The baseline is the median asymmetry over P in (P_C_MAX, 0.5): there
    both members of each mirror pair sit in the normal phase, so any
    asymmetry is pure finite-size fluctuation. A window reaching below
    P_C_MAX would absorb genuine pairing-phase asymmetry into the baseline
    and mask the elevated region it is meant to expose.
    """
    interior = [pt for pt in series.points if 0.0 < pt.P < 0.5]
    if len(interior) < 5:
        raise ValueError(
            f"need at least 5 interior points for a meaningful report, "
            f"got {len(interior)}"
        )
    window = [
        pt.value for pt in series.points if P_C_MAX + 1e-12 < pt.P < 0.5 - 1e-12
    ]
    baseline = float(np.median(window)) if window else 0.0
    edge = min(interior, key=lambda pt: pt.P)
    elevated = tuple(
        pt.P
        for pt in series.points
        if 0.0 < pt.P <= P_C_MAX + 1e-12 and pt.value > k * baseline
    )
    return AsymmetryReport(
        context=series.context,
        baseline=baseline,
        edge_value=edge.value,
        edge_P=edge.P,
        elevated=elevated,
        k=k,
    )


# --- series CSV (P,D,flags / P,dD,flags) ---

def _series_to_csv(points, value_name: str) -> str:
    buf = io.StringIO()
    buf.write(f"P,{value_name},flags\n")
    for pt in points:
        buf.write(f"{pt.P:.17g},{pt.value:.17g},{';'.join(pt.flags)}\n")
    return buf.getvalue()


def distance_series_to_csv(series: DistanceSeries) -> str:
    return _series_to_csv(series.points, "D")


def asymmetry_series_to_csv(series: AsymmetrySeries) -> str:
    return _series_to_csv(series.points, "dD")


def series_points_from_csv(text: str) -> tuple[SeriesPoint, ...]:
    lines = text.strip().splitlines()
    points = []
    for ln in lines[1:]:
        p, v, fl = ln.split(",")
        flags = tuple(f for f in fl.split(";") if f)
        points.append(SeriesPoint(P=float(p), value=float(v), flags=flags))
    return tuple(points)
