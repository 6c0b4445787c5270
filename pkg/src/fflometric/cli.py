"""Command-line front end: solve, sweep, analyze, plot, oracle.

Exit codes: 0 success, 2 usage/validation, 3 solver failure, 4 I/O.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import ed
from .dmrg import DMRGConfig, dmrg_ground_state, dmrg_measure_density
from .metric import (
    SeriesContext,
    asymmetry_report,
    asymmetry_series,
    asymmetry_series_to_csv,
    distance_series,
    distance_series_to_csv,
    series_points_from_csv,
)
from .model import (
    DimensionOverflowError,
    ModelSpec,
    build_hamiltonian,
    enumerate_basis,
    free_fermion_density,
    load_density,
    save_density,
    single_particle_energies,
)
from .plotting import plot_script, svg_chart
from .sweep import ResultsStore, SweepConfig, polarization_grid, run_sweep

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_SOLVER = 3
EXIT_IO = 4

STORE_ENV_VAR = "FFLOMETRIC_STORE"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _build_parser() -> _Parser:
    p = _Parser(
        prog="fflometric",
        description=(
            "Ground-state density profiles of the 1D attractive Hubbard "
            "chain and metric-space analysis over polarization sweeps."
        ),
    )
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("solve", help="solve a single (L, N_up, N_down, U) point")
    sp.add_argument("-L", type=int, required=True, help="chain length")
    sp.add_argument("--nup", type=int, required=True, help="spin-up particle count")
    sp.add_argument("--ndn", type=int, required=True, help="spin-down particle count")
    sp.add_argument("-U", type=float, required=True, help="on-site interaction")
    sp.add_argument("-t", type=float, default=1.0, help="hopping amplitude")
    sp.add_argument(
        "--solver",
        choices=("auto", "ed", "dense", "dmrg"),
        default="auto",
        help="auto picks ED below the dimension cap, DMRG above",
    )
    sp.add_argument("--m-max", type=int, default=256, help="DMRG kept states")
    sp.add_argument("--seed", type=int, default=42)
    sp.add_argument("--out", type=Path, help="density profile CSV path")
    sp.add_argument("--report", type=Path, help="solver report JSON path")

    sw = sub.add_parser("sweep", help="run a polarization sweep from a JSON config")
    sw.add_argument("config", type=Path, help="sweep config JSON")

    an = sub.add_parser("analyze", help="series + report from stored profiles")
    an.add_argument("--store", type=Path, default=None,
                    help=f"results store root (default ${STORE_ENV_VAR})")
    an.add_argument("-L", type=int, required=True)
    an.add_argument("-U", type=float, required=True)
    an.add_argument("-n", type=float, required=True)
    an.add_argument("--ref", type=float, default=0.5, help="reference polarization")
    an.add_argument("--k", type=float, default=3.0, help="elevation factor")
    an.add_argument("--out-dir", type=Path, help="write series files here")

    pl = sub.add_parser("plot", help="emit an SVG (or script+data) figure")
    pl.add_argument(
        "--kind",
        choices=("D_vs_P", "dD_vs_P", "D_vs_n", "density_profile"),
        required=True,
    )
    pl.add_argument("--input", type=Path, nargs="+", required=True,
                    help="series/profile CSV file(s)")
    pl.add_argument("--labels", nargs="*", help="one label per input")
    pl.add_argument("--out", type=Path, required=True)
    pl.add_argument("--pc", type=float, default=None,
                    help="user-supplied critical polarization marker")
    pl.add_argument("--at-P", type=float, default=0.0,
                    help="for D_vs_n: polarization at which D is sampled")
    pl.add_argument("--format", choices=("svg", "script"), default="svg")

    orc = sub.add_parser("oracle", help="run the analytic/ED cross-check table")
    orc.add_argument("--with-dmrg", action="store_true",
                     help="include the slower DMRG equivalence checks")
    return p


def _cmd_solve(args) -> int:
    try:
        spec = ModelSpec(L=args.L, N_up=args.nup, N_down=args.ndn, U=args.U, t=args.t)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    solver = args.solver
    if solver == "auto":
        solver = "ed" if spec.sector_dimension() <= 200_000 else "dmrg"
    try:
        if solver in ("ed", "dense"):
            basis = enumerate_basis(spec)
            H = build_hamiltonian(spec, basis)
            if solver == "dense":
                state = ed.dense_ground_state(H, spec=spec)
            else:
                state = ed.lanczos_ground_state(H, seed=args.seed, spec=spec)
            profile = ed.measure_density(state, basis)
            report = {
                "solver": solver,
                "energy": state.energy,
                "gap": state.gap if math.isfinite(state.gap) else None,
                "degenerate": state.degenerate_flag,
            }
        else:
            mps, rep = dmrg_ground_state(
                spec, DMRGConfig(m_max=args.m_max), seed=args.seed
            )
            profile = dmrg_measure_density(mps)
            report = {
                "solver": "dmrg",
                "energy": rep.energy,
                "sweeps": rep.sweeps_used,
                "max_discarded_weight": rep.max_discarded_weight,
                "converged": rep.converged,
            }
    except (DimensionOverflowError, ed.LanczosConvergenceError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    print(f"energy: {report['energy']:.10f}")
    for k, v in report.items():
        if k != "energy":
            print(f"{k}: {v}")
    try:
        if args.out:
            save_density(args.out, profile)
            print(f"profile written to {args.out}")
        if args.report:
            args.report.write_text(json.dumps(report, indent=2, sort_keys=True))
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def _cmd_sweep(args) -> int:
    try:
        config = SweepConfig.from_json(args.config)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, TypeError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    store = ResultsStore(config.output_dir)

    def progress(key, error):
        if error is None:
            print(f"done {key}")
        else:
            print(f"FAILED {key}: {error}")
        sys.stdout.flush()

    results = run_sweep(config, store, progress=progress)
    for (U, n), (d_series, a_series) in sorted(results.items()):
        print(
            f"panel U={U:g} n={n:g}: {len(d_series.points)} distance points, "
            f"{len(a_series.points)} asymmetry points"
        )
    return EXIT_OK


def _resolve_store(args) -> Path | None:
    if args.store is not None:
        return args.store
    env = os.environ.get(STORE_ENV_VAR)
    return Path(env) if env else None


def _cmd_analyze(args) -> int:
    root = _resolve_store(args)
    if root is None:
        print(
            f"error: no store given (use --store or ${STORE_ENV_VAR})",
            file=sys.stderr,
        )
        return EXIT_USAGE
    try:
        store = ResultsStore(root)
    except OSError as exc:
        print(f"cannot open store: {exc}", file=sys.stderr)
        return EXIT_IO
    N = round(args.n * args.L)
    try:
        grid = polarization_grid(N)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    profiles, flags = {}, {}
    for pt in grid.points:
        key = ResultsStore.key(args.L, args.U, pt.N_up, pt.N_down, args.n)
        if key in store:
            profiles[pt.P] = store.load_profile(key)
            flags[pt.P] = tuple(store.report_for(key).get("flags", ()))
    if not profiles:
        print("error: no stored profiles for this panel", file=sys.stderr)
        return EXIT_USAGE
    context = SeriesContext(L=args.L, U=args.U, n=args.n, reference_P=args.ref)
    try:
        d_series = distance_series(profiles, context, flags=flags)
        a_series = asymmetry_series(d_series)
        report = asymmetry_report(a_series, k=args.k)
    except (KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(report.to_json())
    if args.out_dir:
        args.out_dir.mkdir(parents=True, exist_ok=True)
        (args.out_dir / "D_series.csv").write_text(distance_series_to_csv(d_series))
        (args.out_dir / "dD_series.csv").write_text(asymmetry_series_to_csv(a_series))
        (args.out_dir / "report.json").write_text(report.to_json())
    return EXIT_OK


def _read_series_points(path: Path):
    return series_points_from_csv(path.read_text())


def _cmd_plot(args) -> int:
    for path in args.input:
        if not path.exists():
            print(f"error: missing input {path}", file=sys.stderr)
            return EXIT_USAGE
    labels = args.labels or [p.stem for p in args.input]
    if len(labels) != len(args.input):
        print("error: need one label per input", file=sys.stderr)
        return EXIT_USAGE
    try:
        if args.kind in ("D_vs_P", "dD_vs_P"):
            ylabel = "D" if args.kind == "D_vs_P" else "ΔD"
            series = []
            for label, path in zip(labels, args.input):
                pts = _read_series_points(path)
                series.append((label, [(pt.P, pt.value) for pt in pts]))
            svg = svg_chart(series, f"{ylabel}(P)", "P", ylabel, pc_marker=args.pc)
            data_rows = ["P,value"] + [
                f"{x:.17g},{y:.17g}" for _, pts in series for x, y in pts
            ]
        elif args.kind == "D_vs_n":
            pts = []
            for path in args.input:
                series_pts = _read_series_points(path)
                blob = json.loads((path.parent / "report.json").read_text())
                n = blob["context"]["n"]
                for pt in series_pts:
                    if math.isclose(pt.P, args.at_P, abs_tol=1e-9):
                        pts.append((n, pt.value))
            if not pts:
                print("error: no points at the requested P", file=sys.stderr)
                return EXIT_USAGE
            svg = svg_chart(
                [(f"P={args.at_P:g}", pts)], "D(n)", "n", "D", pc_marker=None
            )
            data_rows = ["n,D"] + [f"{x:.17g},{y:.17g}" for x, y in pts]
        else:  # density_profile
            series = []
            for label, path in zip(labels, args.input):
                prof = load_density(path)
                series.append(
                    (label, [(i + 1, v) for i, v in enumerate(prof.total)])
                )
            svg = svg_chart(series, "density profile", "site", "n(site)")
            data_rows = ["site,n_total"] + [
                f"{x:g},{y:.17g}" for _, pts in series for x, y in pts
            ]
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        if args.format == "svg":
            args.out.write_text(svg)
        else:
            data_path = args.out.with_suffix(".csv")
            data_path.write_text("\n".join(data_rows) + "\n")
            args.out.write_text(
                plot_script(data_path.name, args.kind, "x", "y")
            )
        print(f"wrote {args.out}")
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def _cmd_oracle(args) -> int:
    """Analytic and cross-solver checks, printed as one pass/fail line each."""
    checks: list[tuple[str, bool, str]] = []

    def record(name, ok, detail):
        checks.append((name, ok, detail))

    for U, expect in ((-4.0, (-4 - math.sqrt(32)) / 2), (-8.0, (-8 - math.sqrt(80)) / 2)):
        spec = ModelSpec(L=2, N_up=1, N_down=1, U=U)
        state, _ = ed.solve_sector(spec)
        record(
            f"dimer energy U={U:g}",
            abs(state.energy - expect) <= 1e-10,
            f"{state.energy:.10f} vs {expect:.10f}",
        )

    spec = ModelSpec(L=6, N_up=2, N_down=3, U=0.0)
    state, _ = ed.solve_sector(spec)
    eps = single_particle_energies(6)
    expect = eps[:2].sum() + eps[:3].sum()
    record("U=0 free-fermion energy (ED)", abs(state.energy - expect) <= 1e-10,
           f"{state.energy:.10f} vs {expect:.10f}")

    spec = ModelSpec(L=6, N_up=3, N_down=0, U=-8.0)
    state, basis = ed.solve_sector(spec)
    dens = ed.measure_density(state, basis)
    dev = float(np.abs(dens.total - free_fermion_density(6, 3).total).max())
    record("P=1 density is free-fermion (ED)", dev <= 1e-8, f"max dev {dev:.2e}")

    for spec in (
        ModelSpec(L=4, N_up=2, N_down=1, U=-4.0),
        ModelSpec(L=4, N_up=1, N_down=1, U=-1.0),
    ):
        basis = enumerate_basis(spec)
        H = build_hamiltonian(spec, basis)
        lancz = ed.lanczos_ground_state(H)
        dense = ed.dense_ground_state(H)
        record(
            f"Lanczos vs dense L=4 {spec.N_up}+{spec.N_down} U={spec.U:g}",
            abs(lancz.energy - dense.energy) <= 1e-10,
            f"dE={abs(lancz.energy - dense.energy):.2e}",
        )

    if args.with_dmrg:
        for spec in (
            ModelSpec(L=8, N_up=2, N_down=2, U=-4.0),
            ModelSpec(L=8, N_up=3, N_down=1, U=-1.0),
        ):
            state, basis = ed.solve_sector(spec)
            mps, rep = dmrg_ground_state(spec)
            dens_dev = float(
                np.abs(
                    dmrg_measure_density(mps).total
                    - ed.measure_density(state, basis).total
                ).max()
            )
            record(
                f"DMRG vs ED L=8 {spec.N_up}+{spec.N_down} U={spec.U:g}",
                abs(rep.energy - state.energy) <= 1e-8 and dens_dev <= 1e-6,
                f"dE={abs(rep.energy - state.energy):.2e} ddens={dens_dev:.2e}",
            )

    width = max(len(name) for name, _, _ in checks)
    all_ok = True
    for name, ok, detail in checks:
        status = "PASS" if ok else "FAIL"
        all_ok &= ok
        print(f"{name:<{width}}  {status}  {detail}")
    print(f"{'overall':<{width}}  {'PASS' if all_ok else 'FAIL'}")
    return EXIT_OK if all_ok else EXIT_SOLVER


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "solve": _cmd_solve,
        "sweep": _cmd_sweep,
        "analyze": _cmd_analyze,
        "plot": _cmd_plot,
        "oracle": _cmd_oracle,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
