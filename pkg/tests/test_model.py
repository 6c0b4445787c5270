import math

import numpy as np
import pytest

from fflometric.model import (
    DensityProfile,
    DimensionOverflowError,
    ModelSpec,
    build_hamiltonian,
    density_from_csv,
    density_to_csv,
    enumerate_basis,
    free_fermion_density,
    single_particle_energies,
)


def test_spec_invariants():
    spec = ModelSpec(L=8, N_up=3, N_down=2, U=-4.0)
    assert spec.N == 5
    assert spec.P == pytest.approx(0.2)
    assert spec.n == pytest.approx(5 / 8)
    with pytest.raises(ValueError):
        ModelSpec(L=1, N_up=0, N_down=0, U=0.0)
    with pytest.raises(ValueError):
        ModelSpec(L=4, N_up=5, N_down=0, U=0.0)


@pytest.mark.parametrize(
    "L,nup,ndn,dim",
    [(2, 1, 1, 4), (4, 2, 1, 24), (8, 3, 2, 1568)],
)
def test_basis_dimensions(L, nup, ndn, dim):
    basis = enumerate_basis(ModelSpec(L=L, N_up=nup, N_down=ndn, U=0.0))
    assert basis.dimension == dim
    # exhaustive enumeration cross-check
    count = sum(
        1
        for u in range(1 << L)
        for d_ in [0]
        if bin(u).count("1") == nup
    ) * sum(1 for d in range(1 << L) if bin(d).count("1") == ndn)
    assert basis.dimension == count


def test_basis_ordering_and_bijection():
    basis = enumerate_basis(ModelSpec(L=8, N_up=3, N_down=2, U=0.0))
    assert all(np.diff(basis.up_configs) > 0)
    assert all(np.diff(basis.down_configs) > 0)
    for idx in range(basis.dimension):
        up, down = basis.config_at(idx)
        assert bin(up).count("1") == 3
        assert bin(down).count("1") == 2
        assert basis.index_of(up, down) == idx


def test_dimension_cap():
    spec = ModelSpec(L=8, N_up=4, N_down=4, U=0.0)
    with pytest.raises(DimensionOverflowError):
        enumerate_basis(spec, cap=100)


def test_dimer_ground_energy():
    spec = ModelSpec(L=2, N_up=1, N_down=1, U=-4.0)
    H = build_hamiltonian(spec, enumerate_basis(spec))
    evals = np.linalg.eigvalsh(H.toarray())
    expect = (spec.U - math.sqrt(spec.U**2 + 16 * spec.t**2)) / 2
    assert evals[0] == pytest.approx(expect, abs=1e-12)
    assert evals[0] == pytest.approx(-4.828427, abs=1e-6)


def test_hermiticity_exact():
    spec = ModelSpec(L=6, N_up=2, N_down=3, U=-4.0)
    H = build_hamiltonian(spec, enumerate_basis(spec))
    assert (H.matrix != H.matrix.T).nnz == 0


@pytest.mark.parametrize("L,nup", [(4, 2), (6, 3)])
def test_u0_polarized_equals_free_fermions(L, nup):
    spec = ModelSpec(L=L, N_up=nup, N_down=0, U=0.0)
    H = build_hamiltonian(spec, enumerate_basis(spec))
    evals = np.linalg.eigvalsh(H.toarray())
    expect = single_particle_energies(L)[:nup].sum()
    assert evals[0] == pytest.approx(expect, abs=1e-10)


def _reversal_permutation(basis):
    L = basis.spec.L

    def rev(cfg):
        return sum(((cfg >> i) & 1) << (L - 1 - i) for i in range(L))

    perm = np.empty(basis.dimension, dtype=int)
    for idx in range(basis.dimension):
        up, down = basis.config_at(idx)
        perm[idx] = basis.index_of(rev(up), rev(down))
    return perm


@pytest.mark.parametrize("L,nup,ndn,U", [(4, 2, 1, -4.0), (6, 2, 2, -1.0)])
def test_reflection_symmetry(L, nup, ndn, U):
    spec = ModelSpec(L=L, N_up=nup, N_down=ndn, U=U)
    basis = enumerate_basis(spec)
    H = build_hamiltonian(spec, basis).toarray()
    perm = _reversal_permutation(basis)
    assert np.array_equal(H, H[np.ix_(perm, perm)])


@pytest.mark.parametrize("L,nup,ndn,U", [(4, 2, 1, -4.0), (6, 3, 1, -8.0)])
def test_spin_exchange_spectrum(L, nup, ndn, U):
    Ha = build_hamiltonian(
        ModelSpec(L=L, N_up=nup, N_down=ndn, U=U),
        enumerate_basis(ModelSpec(L=L, N_up=nup, N_down=ndn, U=U)),
    ).toarray()
    Hb = build_hamiltonian(
        ModelSpec(L=L, N_up=ndn, N_down=nup, U=U),
        enumerate_basis(ModelSpec(L=L, N_up=ndn, N_down=nup, U=U)),
    ).toarray()
    ea, eb = np.linalg.eigvalsh(Ha)[:3], np.linalg.eigvalsh(Hb)[:3]
    assert np.allclose(ea, eb, atol=1e-10)


def test_single_particle_energies():
    assert single_particle_energies(2) == pytest.approx([-1.0, 1.0])
    assert single_particle_energies(4)[0] == pytest.approx(-1.618034, abs=1e-6)
    assert single_particle_energies(16)[:4].sum() == pytest.approx(
        -7.009343, abs=1e-6
    )


def test_free_fermion_density():
    prof = free_fermion_density(4, 1)
    assert prof.total == pytest.approx(
        [0.138197, 0.361803, 0.361803, 0.138197], abs=1e-6
    )
    assert free_fermion_density(7, 7).total == pytest.approx(np.ones(7), abs=1e-12)
    for L, N in [(5, 2), (12, 7), (40, 24)]:
        assert free_fermion_density(L, N).total.sum() == pytest.approx(N, abs=1e-10)


def test_density_profile_invariants():
    prof = free_fermion_density(6, 3)
    assert np.allclose(prof.total, prof.up + prof.down, atol=1e-12)
    assert prof.up.sum() == pytest.approx(3, abs=1e-10)
    assert prof.down.sum() == pytest.approx(0, abs=1e-10)


def test_density_csv_roundtrip():
    rng = np.random.default_rng(7)
    prof = DensityProfile(up=rng.random(9), down=rng.random(9))
    text = density_to_csv(prof)
    back = density_from_csv(text)
    assert np.array_equal(prof.up, back.up)
    assert np.array_equal(prof.down, back.down)
    assert density_to_csv(back) == text
