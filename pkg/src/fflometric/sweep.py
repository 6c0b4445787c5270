"""Polarization sweeps: grids, solver dispatch, caching, persisted series."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import ed
from .dmrg import DMRGConfig, dmrg_ground_state, dmrg_measure_density
from .metric import (
    AsymmetrySeries,
    DistanceSeries,
    SeriesContext,
    asymmetry_report,
    asymmetry_series,
    asymmetry_series_to_csv,
    distance_series,
    distance_series_to_csv,
)
from .model import (
    DEFAULT_DIMENSION_CAP,
    DensityProfile,
    ModelSpec,
    density_to_csv,
    load_density,
)

DMRG_DEGENERACY_DENSITY_TOL = 1e-4
_SECONDARY_SEED_OFFSET = 1000


class GridParityError(Exception):
    """N does not admit the P = 0.5 reference point."""


class StoreError(Exception):
    pass


@dataclass(frozen=True)
class GridPoint:
    N_up: int
    N_down: int

    @property
    def P(self) -> float:
        return (self.N_up - self.N_down) / (self.N_up + self.N_down)


@dataclass(frozen=True)
class PolarizationGrid:
    N: int
    points: tuple[GridPoint, ...]  # ascending P, N_up >= N_down


def polarization_grid(N: int, step: int = 2) -> PolarizationGrid:
    """Every achievable imbalance (default step 2), closed under P <-> 1-P.

    N must be divisible by 4 so the P = 0.5 reference sector exists.
    """
    if N < 2 or N % 2 != 0:
        raise GridParityError(f"N={N} must be even and >= 2")
    if N % 4 != 0:
        raise GridParityError(
            f"N={N} is not divisible by 4: the P=0.5 reference sector "
            f"(imbalance N/2) does not exist"
        )
    if step < 2 or step % 2 != 0:
        raise GridParityError(f"grid step must be a positive even integer, got {step}")
    imbalances = set(range(0, N + 1, step))
    imbalances |= {N - d for d in imbalances}  # close under P <-> 1-P
    imbalances.add(N // 2)  # the reference is always present
    points = tuple(
        GridPoint(N_up=(N + d) // 2, N_down=(N - d) // 2) for d in sorted(imbalances)
    )
    return PolarizationGrid(N=N, points=points)


@dataclass
class SweepConfig:
    L: int
    U_list: list[float]
    n_list: list[float]
    output_dir: str
    solver: str = "auto"  # auto | ed | dmrg
    dmrg: DMRGConfig = field(default_factory=DMRGConfig)
    ed_dimension_cap: int = DEFAULT_DIMENSION_CAP
    grid_step: int = 2
    workers: int = 1
    seed: int = 42
    degeneracy_check: bool = True
    reference_P: float = 0.5

    def __post_init__(self):
        if self.L < 4:
            raise ValueError("L must be >= 4")
        if self.solver not in ("auto", "ed", "dmrg"):
            raise ValueError(f"unknown solver {self.solver!r}")
        for n in self.n_list:
            N = n * self.L
            if abs(N - round(N)) > 1e-9:
                raise ValueError(f"n={n} gives non-integer particle number n*L={N}")
            if round(N) % 4 != 0:
                raise ValueError(
                    f"n={n} gives N={round(N)}, not divisible by 4 "
                    f"(P=0.5 reference unreachable)"
                )

    @classmethod
    def from_json(cls, path) -> "SweepConfig":
        with open(path) as fh:
            raw = json.load(fh)
        version = raw.pop("version", 1)
        if version != 1:
            raise ValueError(f"unsupported config version {version}")
        dmrg_raw = raw.pop("dmrg", {})
        return cls(dmrg=DMRGConfig(**dmrg_raw), **raw)

    def to_json(self) -> str:
        return json.dumps(
            {
                "version": 1,
                "L": self.L,
                "U_list": self.U_list,
                "n_list": self.n_list,
                "output_dir": self.output_dir,
                "solver": self.solver,
                "dmrg": {
                    "m_max": self.dmrg.m_max,
                    "cutoff": self.dmrg.cutoff,
                    "max_sweeps": self.dmrg.max_sweeps,
                    "energy_tol": self.dmrg.energy_tol,
                    "eig_tol": self.dmrg.eig_tol,
                },
                "ed_dimension_cap": self.ed_dimension_cap,
                "grid_step": self.grid_step,
                "workers": self.workers,
                "seed": self.seed,
                "degeneracy_check": self.degeneracy_check,
                "reference_P": self.reference_P,
            },
            indent=2,
            sort_keys=True,
        )


def _fmt_num(x: float) -> str:
    return f"{x:g}"


def panel_dirname(L: int, U: float, n: float) -> str:
    return f"L{L}_U{_fmt_num(U)}_n{_fmt_num(n)}"


def point_filename(N_up: int, N_down: int) -> str:
    return f"Nup{N_up}_Ndn{N_down}.csv"


class ResultsStore:
    """Checksummed on-disk cache of solved density profiles.

    Layout: <root>/L{L}_U{U}_n{n}/Nup{a}_Ndn{b}.csv plus a single
    index.json; all writes go through atomic renames.
    """

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._index_path = self.root / "index.json"
        if self._index_path.exists():
            with open(self._index_path) as fh:
                self._index = json.load(fh)
        else:
            self._index = {}

    @staticmethod
    def key(L: int, U: float, N_up: int, N_down: int, n: float) -> str:
        return f"{panel_dirname(L, U, n)}/{point_filename(N_up, N_down)}"

    def __contains__(self, key: str) -> bool:
        return key in self._index

    def report_for(self, key: str) -> dict:
        return self._index[key]["report"]

    def _atomic_write(self, path: Path, text: str) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="ascii", newline="\n") as fh:
                fh.write(text)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    def _write_index(self) -> None:
        self._atomic_write(
            self._index_path, json.dumps(self._index, indent=2, sort_keys=True)
        )

    def put(self, key: str, profile: DensityProfile, report: dict) -> None:
        text = density_to_csv(profile)
        path = self.root / key
        self._atomic_write(path, text)
        self._index[key] = {
            "file": key,
            "sha256": hashlib.sha256(text.encode("ascii")).hexdigest(),
            "report": report,
        }
        self._write_index()

    def load_profile(self, key: str) -> DensityProfile:
        if key not in self._index:
            raise StoreError(f"key {key!r} not in store index")
        path = self.root / key
        if not path.exists():
            raise StoreError(f"indexed file missing: {path}")
        with open(path, encoding="ascii") as fh:
            text = fh.read()
        digest = hashlib.sha256(text.encode("ascii")).hexdigest()
        if digest != self._index[key]["sha256"]:
            raise StoreError(f"checksum mismatch for {key!r}")
        return load_density(path)


def load_profile(store: ResultsStore, key: str) -> DensityProfile:
    return store.load_profile(key)


def _choose_solver(spec: ModelSpec, config: SweepConfig) -> str:
    if config.solver != "auto":
        return config.solver
    if spec.sector_dimension() <= config.ed_dimension_cap:
        return "ed"
    return "dmrg"


def solve_point(
    spec: ModelSpec,
    solver: str,
    dmrg_config: DMRGConfig,
    seed: int,
    degeneracy_check: bool = True,
    ed_cap: Optional[int] = None,
) -> tuple[DensityProfile, dict]:
    """Solve one (U, N_up, N_down) point; returns profile + report dict.

    Report flags: 'degenerate' (density not basis-independent, excluded
    from metric series) and 'unconverged'.
    """
    flags: list[str] = []
    if solver == "ed":
        state, basis = ed.solve_sector(spec, seed=seed, cap=ed_cap)
        profile = ed.measure_density(state, basis)
        if state.degenerate_flag:
            flags.append("degenerate")
        report = {
            "solver": "ed",
            "energy": state.energy,
            "gap": state.gap if np.isfinite(state.gap) else None,
            "converged": True,
        }
    elif solver == "dmrg":
        state, rep = dmrg_ground_state(spec, dmrg_config, seed=seed)
        profile = dmrg_measure_density(state)
        if not rep.converged:
            flags.append("unconverged")
        if degeneracy_check:
            state2, rep2 = dmrg_ground_state(
                spec, dmrg_config, seed=seed + _SECONDARY_SEED_OFFSET
            )
            profile2 = dmrg_measure_density(state2)
            dens_dev = float(np.abs(profile.total - profile2.total).max())
            if dens_dev > DMRG_DEGENERACY_DENSITY_TOL:
                flags.append("degenerate")
            if not rep2.converged and "unconverged" not in flags:
                flags.append("unconverged")
        report = {
            "solver": "dmrg",
            "energy": rep.energy,
            "sweeps": rep.sweeps_used,
            "max_discarded_weight": rep.max_discarded_weight,
            "converged": rep.converged,
        }
    else:
        raise ValueError(f"unknown solver {solver!r}")
    report["flags"] = flags
    return profile, report


def _solve_task(args):
    key, spec, solver, dmrg_config, seed, degeneracy_check, ed_cap = args
    try:
        profile, report = solve_point(
            spec, solver, dmrg_config, seed, degeneracy_check, ed_cap
        )
        return key, profile, report, None
    except Exception as exc:  # failure policy: record, keep sweeping
        return key, None, None, f"{type(exc).__name__}: {exc}"


def run_sweep(
    config: SweepConfig,
    store: ResultsStore,
    progress=None,
) -> dict[tuple[float, float], tuple[DistanceSeries, AsymmetrySeries]]:
    """Solve every grid point of every (U, n) panel, then build the series.

    Cached points are skipped; failures are recorded per point and the
    sweep continues. Returns {(U, n): (D series, asymmetry series)} and
    persists D_series.csv, dD_series.csv and report.json per panel.
    """
    results = {}
    for U in config.U_list:
        for n in config.n_list:
            N = round(n * config.L)
            grid = polarization_grid(N, step=config.grid_step)
            tasks = []
            for pt in grid.points:
                key = ResultsStore.key(config.L, U, pt.N_up, pt.N_down, n)
                if key in store:
                    continue
                spec = ModelSpec(
                    L=config.L, N_up=pt.N_up, N_down=pt.N_down, U=U
                )
                solver = _choose_solver(spec, config)
                tasks.append(
                    (
                        key,
                        spec,
                        solver,
                        config.dmrg,
                        config.seed,
                        config.degeneracy_check,
                        config.ed_dimension_cap,
                    )
                )
            failures: dict[str, str] = {}
            if tasks:
                # Stream outcomes so each point is persisted (and reported)
                # as soon as it finishes; an interrupted sweep resumes from
                # the cache instead of redoing the whole panel.
                if config.workers > 1:
                    pool = ProcessPoolExecutor(max_workers=config.workers)
                    outcomes = pool.map(_solve_task, tasks)
                else:
                    pool = None
                    outcomes = map(_solve_task, tasks)
                try:
                    for key, profile, report, error in outcomes:
                        if error is not None:
                            failures[key] = error
                        else:
                            store.put(key, profile, report)
                        if progress is not None:
                            progress(key, error)
                finally:
                    if pool is not None:
                        pool.shutdown()

            profiles: dict[float, DensityProfile] = {}
            flags: dict[float, tuple[str, ...]] = {}
            panel_failures = {}
            for pt in grid.points:
                key = ResultsStore.key(config.L, U, pt.N_up, pt.N_down, n)
                if key in failures:
                    panel_failures[key] = failures[key]
                    continue
                if key not in store:
                    continue
                profiles[pt.P] = store.load_profile(key)
                flags[pt.P] = tuple(store.report_for(key).get("flags", ()))

            context = SeriesContext(
                L=config.L, U=U, n=n, reference_P=config.reference_P
            )
            d_series = distance_series(profiles, context, flags=flags)
            a_series = asymmetry_series(d_series)
            results[(U, n)] = (d_series, a_series)

            panel_dir = store.root / panel_dirname(config.L, U, n)
            store._atomic_write(
                panel_dir / "D_series.csv", distance_series_to_csv(d_series)
            )
            store._atomic_write(
                panel_dir / "dD_series.csv", asymmetry_series_to_csv(a_series)
            )
            try:
                report = asymmetry_report(a_series)
                report_json = report.to_json()
            except ValueError as exc:
                report_json = json.dumps({"error": str(exc)}, indent=2)
            if panel_failures:
                blob = json.loads(report_json)
                blob["failures"] = panel_failures
                report_json = json.dumps(blob, indent=2, sort_keys=True)
            store._atomic_write(panel_dir / "report.json", report_json)
    return results
