"""Exact ground states of small sectors: Lanczos and dense oracles."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .model import (
    DensityProfile,
    ModelSpec,
    SectorBasis,
    SparseOperator,
    build_hamiltonian,
    enumerate_basis,
)

DEGENERACY_GAP = 1e-10
DENSE_DIMENSION_CAP = 4096


class LanczosConvergenceError(Exception):
    def __init__(self, residual: float, iterations: int):
        self.residual = residual
        self.iterations = iterations
        super().__init__(
            f"Lanczos did not converge after {iterations} iterations "
            f"(best residual {residual:.3e})"
        )


@dataclass(frozen=True)
class GroundState:
    energy: float
    amplitudes: np.ndarray
    gap: float
    degenerate_flag: bool
    spec: Optional[ModelSpec] = None


def _lanczos_extremal(
    H: SparseOperator,
    v0: np.ndarray,
    tol: float,
    max_iter: int,
    deflate: Optional[np.ndarray] = None,
) -> tuple[float, np.ndarray, float]:
    """Lowest eigenpair by Lanczos with full reorthogonalization.

    Optionally deflates one known eigenvector (used to extract the gap even
    for degenerate ground levels). Returns (eigenvalue, vector, residual).
    """
    dim = H.dimension
    v = v0.astype(float).copy()
    if deflate is not None:
        v -= (deflate @ v) * deflate
    nrm = np.linalg.norm(v)
    if nrm == 0.0:
        raise ValueError("start vector vanishes after deflation")
    v /= nrm

    V = [v]
    alphas: list[float] = []
    betas: list[float] = []
    theta = None
    for it in range(1, max_iter + 1):
        w = H.matvec(V[-1])
        alphas.append(float(V[-1] @ w))
        w -= alphas[-1] * V[-1]
        if len(V) > 1:
            w -= betas[-1] * V[-2]
        # full reorthogonalization, twice for numerical safety
        basis = np.array(V)
        for _ in range(2):
            w -= basis.T @ (basis @ w)
            if deflate is not None:
                w -= (deflate @ w) * deflate
        beta = float(np.linalg.norm(w))

        evals, evecs = scipy.linalg.eigh_tridiagonal(alphas, betas)
        theta = float(evals[0])
        y = evecs[:, 0]
        resid_bound = beta * abs(y[-1])
        # Krylov space exhausted: the projected problem is exact
        exhausted = beta < 1e-13 * max(1.0, abs(theta)) or len(V) == dim
        if resid_bound <= tol or exhausted:
            vec = np.array(V).T @ y
            vec /= np.linalg.norm(vec)
            resid = float(np.linalg.norm(H.matvec(vec) - theta * vec))
            if resid <= tol or exhausted:
                return theta, vec, resid
        if exhausted:
            break
        betas.append(beta)
        V.append(w / beta)

    vec = np.array(V).T @ y
    vec /= np.linalg.norm(vec)
    resid = float(np.linalg.norm(H.matvec(vec) - theta * vec))
    if resid <= tol:
        return theta, vec, resid
    raise LanczosConvergenceError(resid, max_iter)


def lanczos_ground_state(
    H: SparseOperator,
    tol: float = 1e-12,
    max_iter: int = 2000,
    seed: int = 42,
    spec: Optional[ModelSpec] = None,
) -> GroundState:
    """Lowest eigenpair of a Hermitian sector Hamiltonian.

    Deterministic for a fixed seed. The spectral gap is obtained from a
    second, deflated Lanczos pass so degenerate ground levels are detected.
    """
    dim = H.dimension
    if dim < 1:
        raise ValueError("empty operator")
    if dim == 1:
        e = float(H.matrix[0, 0])
        return GroundState(
            energy=e,
            amplitudes=np.ones(1),
            gap=np.inf,
            degenerate_flag=False,
            spec=spec,
        )
    rng = np.random.default_rng(seed)
    e0, vec, _ = _lanczos_extremal(H, rng.standard_normal(dim), tol, max_iter)
    # gap tolerance only needs ~1e-11; the deflated pass is a diagnostic
    e1, _, _ = _lanczos_extremal(
        H, rng.standard_normal(dim), max(tol, 1e-12), max_iter, deflate=vec
    )
    gap = e1 - e0
    return GroundState(
        energy=e0,
        amplitudes=vec,
        gap=gap,
        degenerate_flag=gap < DEGENERACY_GAP,
        spec=spec,
    )


def dense_ground_state(H: SparseOperator, spec: Optional[ModelSpec] = None) -> GroundState:
    """Brute-force oracle: full symmetric eigendecomposition."""
    if H.dimension > DENSE_DIMENSION_CAP:
        raise ValueError(
            f"dense oracle capped at dimension {DENSE_DIMENSION_CAP}, "
            f"got {H.dimension}"
        )
    evals, evecs = np.linalg.eigh(H.toarray())
    gap = float(evals[1] - evals[0]) if H.dimension > 1 else np.inf
    return GroundState(
        energy=float(evals[0]),
        amplitudes=evecs[:, 0],
        gap=gap,
        degenerate_flag=gap < DEGENERACY_GAP,
        spec=spec,
    )


def measure_density(state: GroundState, basis: SectorBasis) -> DensityProfile:
    """Per-site occupation expectations <n_up,i>, <n_down,i>."""
    L = basis.spec.L
    n_dn = len(basis.down_configs)
    weights = (state.amplitudes ** 2).reshape(len(basis.up_configs), n_dn)
    w_up = weights.sum(axis=1)
    w_dn = weights.sum(axis=0)
    up = np.empty(L)
    down = np.empty(L)
    for i in range(L):
        up[i] = w_up[((basis.up_configs >> i) & 1) == 1].sum()
        down[i] = w_dn[((basis.down_configs >> i) & 1) == 1].sum()
    return DensityProfile(up=up, down=down)


def solve_sector(
    spec: ModelSpec,
    tol: float = 1e-12,
    max_iter: int = 2000,
    seed: int = 42,
    cap: Optional[int] = None,
) -> tuple[GroundState, SectorBasis]:
    """Convenience wrapper: basis + Hamiltonian + Lanczos for one sector."""
    kwargs = {} if cap is None else {"cap": cap}
    basis = enumerate_basis(spec, **kwargs)
    H = build_hamiltonian(spec, basis)
    state = lanczos_ground_state(H, tol=tol, max_iter=max_iter, seed=seed, spec=spec)
    return state, basis
