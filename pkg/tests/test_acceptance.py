"""Acceptance suite: one test per gating criterion, one PASS line each.

Criterion 5 reruns the full L=40, n=0.6 polarization sweep with DMRG at
m_max=256 unless FFLOMETRIC_ACCEPTANCE_STORE points at an existing results
store, in which case cached profiles are reused (the store is produced by
the same solver path, so the check is identical either way).
"""

import math
import os
import time

import numpy as np
import pytest

from fflometric.dmrg import DMRGConfig, dmrg_ground_state, dmrg_measure_density
from fflometric.ed import dense_ground_state, lanczos_ground_state, measure_density, solve_sector
from fflometric.metric import asymmetry_report, density_distance
from fflometric.model import (
    DensityProfile,
    ModelSpec,
    build_hamiltonian,
    enumerate_basis,
    free_fermion_density,
    single_particle_energies,
)
from fflometric.sweep import ResultsStore, SweepConfig, run_sweep

ACCEPTANCE_DMRG = DMRGConfig(m_max=256, cutoff=1e-12, energy_tol=1e-11, eig_tol=1e-12)


def _report(criterion, ok, detail=""):
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}"
    if detail:
        line += f"  ({detail})"
    print(line)
    assert ok, line


def _random_profile(rng, L, N):
    up = rng.random(L) + 0.05
    down = rng.random(L) + 0.05
    scale = N / (up.sum() + down.sum())
    return DensityProfile(up=up * scale, down=down * scale)


def test_criterion_1_metric_axioms():
    rng = np.random.default_rng(17)
    t0 = time.perf_counter()
    ok = True
    for _ in range(1000):
        L = int(rng.integers(2, 24))
        N = float(rng.uniform(0.5, 2 * L - 0.5))
        a = _random_profile(rng, L, N)
        b = _random_profile(rng, L, N)
        c = _random_profile(rng, L, N)
        dab = density_distance(a, b)
        ok &= dab >= 0.0
        ok &= dab <= 1.0 + 1e-15
        ok &= density_distance(b, a) == dab
        ok &= density_distance(a, a) == 0.0
        ok &= density_distance(a, c) <= dab + density_distance(b, c) + 1e-12
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 1.0
    _report(1, ok, f"1000 pairs in {elapsed:.2f}s")


def test_criterion_2_analytic_oracles():
    t0 = time.perf_counter()
    ok = True
    details = []

    # Dimer closed form (ED; the tensor-train solver needs L >= 4, so its
    # pairing oracle is the U=0 chain below).
    for U, target in ((-4.0, -4.828427), (-8.0, -8.472136)):
        expect = (U - math.sqrt(U * U + 16.0)) / 2
        assert abs(expect - target) < 1e-6
        state, _ = solve_sector(ModelSpec(L=2, N_up=1, N_down=1, U=U))
        ok &= abs(state.energy - expect) <= 1e-8

    # U=0 free-fermion energies and densities: ED.
    eps = single_particle_energies(8)
    spec = ModelSpec(L=8, N_up=3, N_down=2, U=0.0)
    state, basis = solve_sector(spec)
    expect = eps[:3].sum() + eps[:2].sum()
    ok &= abs(state.energy - expect) <= 1e-8
    prof = measure_density(state, basis)
    ok &= np.max(np.abs(prof.up - free_fermion_density(8, 3).total)) <= 1e-6
    ok &= np.max(np.abs(prof.down - free_fermion_density(8, 2).total)) <= 1e-6

    # Same oracle for DMRG.
    mps, rep = dmrg_ground_state(spec, ACCEPTANCE_DMRG)
    ok &= abs(rep.energy - expect) <= 1e-8
    dprof = dmrg_measure_density(mps)
    ok &= np.max(np.abs(dprof.up - free_fermion_density(8, 3).total)) <= 1e-6
    ok &= np.max(np.abs(dprof.down - free_fermion_density(8, 2).total)) <= 1e-6

    # P=1 sector is exactly free fermions for any U: ED and DMRG.
    spec = ModelSpec(L=8, N_up=4, N_down=0, U=-4.0)
    state, basis = solve_sector(spec)
    ok &= abs(state.energy - eps[:4].sum()) <= 1e-8
    prof = measure_density(state, basis)
    ok &= np.max(np.abs(prof.up - free_fermion_density(8, 4).total)) <= 1e-6
    mps, rep = dmrg_ground_state(spec, ACCEPTANCE_DMRG)
    ok &= abs(rep.energy - eps[:4].sum()) <= 1e-8
    dprof = dmrg_measure_density(mps)
    ok &= np.max(np.abs(dprof.up - free_fermion_density(8, 4).total)) <= 1e-6

    elapsed = time.perf_counter() - t0
    ok &= elapsed < 30.0
    _report(2, ok, f"dimer/U=0/P=1 oracles in {elapsed:.1f}s")


def _l8_sectors():
    return [(4, 0), (3, 1), (2, 2), (1, 3), (0, 4)]


def test_criterion_3_cross_solver_equivalence():
    t0 = time.perf_counter()
    ok = True
    worst_dE_lanczos = worst_dE_dmrg = worst_dens = 0.0
    for U in (-1.0, -4.0, -8.0):
        for nup, ndn in _l8_sectors():
            spec = ModelSpec(L=8, N_up=nup, N_down=ndn, U=U)
            basis = enumerate_basis(spec)
            H = build_hamiltonian(spec, basis)
            lancz = lanczos_ground_state(H, spec=spec)
            dense = dense_ground_state(H, spec=spec)
            dE = abs(lancz.energy - dense.energy)
            worst_dE_lanczos = max(worst_dE_lanczos, dE)
            ok &= dE <= 1e-10

            mps, rep = dmrg_ground_state(spec, ACCEPTANCE_DMRG)
            dE = abs(rep.energy - lancz.energy)
            worst_dE_dmrg = max(worst_dE_dmrg, dE)
            ok &= dE <= 1e-8
            if not lancz.degenerate_flag:
                dens = np.max(
                    np.abs(
                        dmrg_measure_density(mps).total
                        - measure_density(lancz, basis).total
                    )
                )
                worst_dens = max(worst_dens, float(dens))
                ok &= dens <= 1e-6
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 300.0
    _report(
        3,
        ok,
        f"15 sectors x 3 U in {elapsed:.0f}s; worst |dE| lanczos-dense "
        f"{worst_dE_lanczos:.1e}, dmrg-ed {worst_dE_dmrg:.1e}, "
        f"density {worst_dens:.1e}",
    )


def test_criterion_4_symmetry_invariants():
    ok = True
    worst_refl = 0.0
    worst_exch = 0.0
    for U in (-1.0, -4.0, -8.0):
        for nup, ndn in _l8_sectors():
            spec = ModelSpec(L=8, N_up=nup, N_down=ndn, U=U)
            state, basis = solve_sector(spec)
            if state.degenerate_flag:
                continue
            prof = measure_density(state, basis)
            refl = float(np.max(np.abs(prof.total - prof.total[::-1])))
            worst_refl = max(worst_refl, refl)
            ok &= refl <= 1e-6

            mps, rep = dmrg_ground_state(spec, ACCEPTANCE_DMRG)
            if rep.converged:
                dprof = dmrg_measure_density(mps)
                drefl = float(np.max(np.abs(dprof.total - dprof.total[::-1])))
                worst_refl = max(worst_refl, drefl)
                ok &= drefl <= 1e-6

            # Spin exchange: (nup, ndn) and (ndn, nup) share the total density.
            if nup != ndn and spec.N > 0:
                flipped = ModelSpec(L=8, N_up=ndn, N_down=nup, U=U)
                fstate, fbasis = solve_sector(flipped)
                fprof = measure_density(fstate, fbasis)
                d = density_distance(prof, fprof)
                worst_exch = max(worst_exch, d)
                ok &= d <= 1e-10
    _report(
        4,
        ok,
        f"worst reflection dev {worst_refl:.1e}, "
        f"worst spin-exchange D {worst_exch:.1e}",
    )


@pytest.fixture(scope="module")
def l40_sweep(tmp_path_factory):
    env = os.environ.get("FFLOMETRIC_ACCEPTANCE_STORE")
    root = env if env else str(tmp_path_factory.mktemp("l40"))
    cfg = SweepConfig(
        L=40,
        U_list=[-1.0, -4.0],
        n_list=[0.6],
        output_dir=root,
        solver="dmrg",
        dmrg=DMRGConfig(m_max=256),
        grid_step=2,
        degeneracy_check=True,
    )
    store = ResultsStore(root)
    return run_sweep(cfg, store)


def test_criterion_5_reduced_scale_phase_signatures(l40_sweep):
    ok = True
    details = []

    d_m1, a_m1 = l40_sweep[(-1.0, 0.6)]
    d_m4, a_m4 = l40_sweep[(-4.0, 0.6)]

    # (a) U=-1: the interior is essentially symmetric, with the asymmetry
    # concentrated at the BCS end of the sweep (the P=0 / P=1 pair).
    interior = [pt.value for pt in a_m1.points if 0.125 <= pt.P <= 0.375]
    edge = min(a_m1.points, key=lambda pt: pt.P)
    a_ok = bool(interior) and max(interior) < edge.value
    details.append(
        f"(a) max interior dD {max(interior):.2e} < BCS-edge dD({edge.P:.4g}) "
        f"{edge.value:.2e}: {a_ok}"
    )
    ok &= a_ok

    # (b) U=-4: elevated asymmetry region inside (0, 1/3].
    report = asymmetry_report(a_m4, k=3.0)
    b_ok = len(report.elevated) > 0 and all(
        0 < p <= 1 / 3 + 1e-12 for p in report.elevated
    )
    details.append(f"(b) elevated P values {tuple(round(p, 4) for p in report.elevated)}: {b_ok}")
    ok &= b_ok

    # (c) the reference point has exactly zero distance.
    c_ok = d_m1.value_at(0.5) == 0.0 and d_m4.value_at(0.5) == 0.0
    details.append(f"(c) D(0.5) == 0: {c_ok}")
    ok &= c_ok

    # (d) U=-1: the unpolarized side lies farther from the reference than
    # the almost-fully-polarized side.
    top = max((pt for pt in d_m1.points if pt.P < 1.0 - 1e-12), key=lambda pt: pt.P)
    d_ok = d_m1.value_at(0.0) > top.value
    details.append(
        f"(d) D(0) {d_m1.value_at(0.0):.4f} > D({top.P:.4g}) {top.value:.4f}: {d_ok}"
    )
    ok &= d_ok

    _report(5, ok, "; ".join(details))


def test_criterion_6_determinism_and_persistence(tmp_path):
    t0 = time.perf_counter()
    from fflometric.model import density_to_csv
    from fflometric.dmrg import load_state, save_state

    ok = True

    # Same seed, same bytes.
    spec = ModelSpec(L=8, N_up=3, N_down=1, U=-4.0)
    cfg = DMRGConfig(m_max=32)
    s1, r1 = dmrg_ground_state(spec, cfg, seed=42)
    s2, r2 = dmrg_ground_state(spec, cfg, seed=42)
    ok &= density_to_csv(dmrg_measure_density(s1)) == density_to_csv(
        dmrg_measure_density(s2)
    )
    ok &= r1.energy == r2.energy

    # Checkpoint round-trip is exact.
    path = tmp_path / "ckpt.npz"
    save_state(path, s1)
    back = load_state(path)
    ok &= density_to_csv(dmrg_measure_density(back)) == density_to_csv(
        dmrg_measure_density(s1)
    )

    # Interrupted sweeps resume from the cache without re-solving.
    root = tmp_path / "store"
    cfg = SweepConfig(
        L=8, U_list=[-4.0], n_list=[0.5], output_dir=str(root), solver="ed"
    )
    store = ResultsStore(root)
    run_sweep(cfg, store)
    first = (root / "L8_U-4_n0.5" / "D_series.csv").read_bytes()
    resolved = []
    run_sweep(cfg, ResultsStore(root), progress=lambda k, e: resolved.append(k))
    ok &= resolved == []
    second = (root / "L8_U-4_n0.5" / "D_series.csv").read_bytes()
    ok &= first == second

    elapsed = time.perf_counter() - t0
    ok &= elapsed < 60.0
    _report(6, ok, f"determinism + cache resume in {elapsed:.1f}s")
