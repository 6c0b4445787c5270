"""Attractive Hubbard chain: model definition, Fock basis, sparse Hamiltonian.

Conventions (fixed for reproducibility of matrix entries):
  * open boundaries, sites labelled 1..L externally, 0..L-1 internally
  * spin-up fermion modes ordered before spin-down; within a species,
    site-ascending ordering
  * basis configurations are L-bit integers (bit i = site i occupied),
    listed in ascending numeric order
  * composite index = up_index * len(down_configs) + down_index
"""

from __future__ import annotations

import io
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

DEFAULT_DIMENSION_CAP = 20_000_000


class DimensionOverflowError(Exception):
    """Sector dimension exceeds the exact-diagonalization cap; use DMRG."""

    def __init__(self, dimension: int, cap: int):
        self.dimension = dimension
        self.cap = cap
        super().__init__(
            f"sector dimension {dimension} exceeds cap {cap}; "
            "this sector needs the DMRG solver"
        )


@dataclass(frozen=True)
class ModelSpec:
    """One point of the homogeneous 1D Hubbard chain with fixed particle numbers."""

    L: int
    N_up: int
    N_down: int
    U: float
    t: float = 1.0

    def __post_init__(self):
        if self.L < 2:
            raise ValueError(f"L must be >= 2, got {self.L}")
        for name, N in (("N_up", self.N_up), ("N_down", self.N_down)):
            if not 0 <= N <= self.L:
                raise ValueError(f"{name}={N} outside [0, L={self.L}]")

    @property
    def N(self) -> int:
        return self.N_up + self.N_down

    @property
    def P(self) -> float:
        if self.N == 0:
            raise ValueError("polarization undefined for N = 0")
        return (self.N_up - self.N_down) / self.N

    @property
    def n(self) -> float:
        return self.N / self.L

    def sector_dimension(self) -> int:
        return math.comb(self.L, self.N_up) * math.comb(self.L, self.N_down)


@dataclass(frozen=True)
class SectorBasis:
    """Ordered occupation-number basis of the fixed-(N_up, N_down) sector."""

    spec: ModelSpec
    up_configs: np.ndarray  # int64 bit patterns, ascending
    down_configs: np.ndarray

    @property
    def dimension(self) -> int:
        return len(self.up_configs) * len(self.down_configs)

    def config_at(self, index: int) -> tuple[int, int]:
        """Composite index -> (up bit pattern, down bit pattern)."""
        n_dn = len(self.down_configs)
        return int(self.up_configs[index // n_dn]), int(self.down_configs[index % n_dn])

    def index_of(self, up: int, down: int) -> int:
        u = int(np.searchsorted(self.up_configs, up))
        d = int(np.searchsorted(self.down_configs, down))
        if u >= len(self.up_configs) or self.up_configs[u] != up:
            raise KeyError(f"up pattern {up:b} not in basis")
        if d >= len(self.down_configs) or self.down_configs[d] != down:
            raise KeyError(f"down pattern {down:b} not in basis")
        return u * len(self.down_configs) + d


@dataclass(frozen=True)
class SparseOperator:
    """Hermitian sector Hamiltonian in compressed sparse rows (real entries)."""

    dimension: int
    matrix: sp.csr_matrix = field(repr=False)

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def matvec(self, v: np.ndarray) -> np.ndarray:
        return self.matrix @ v


@dataclass(frozen=True)
class DensityProfile:
    """Per-site spin-resolved and total occupation expectation values."""

    up: np.ndarray
    down: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "up", np.asarray(self.up, dtype=float))
        object.__setattr__(self, "down", np.asarray(self.down, dtype=float))
        if self.up.shape != self.down.shape or self.up.ndim != 1:
            raise ValueError("up/down must be equal-length 1D sequences")

    @property
    def L(self) -> int:
        return len(self.up)

    @property
    def total(self) -> np.ndarray:
        return self.up + self.down

    @property
    def N(self) -> float:
        return float(self.up.sum() + self.down.sum())


def _configs_with_popcount(L: int, N: int) -> np.ndarray:
    """All L-bit patterns with N set bits, ascending numeric order."""
    if N == 0:
        return np.zeros(1, dtype=np.int64)
    vals = np.fromiter(
        (sum(1 << p for p in combo) for combo in itertools.combinations(range(L), N)),
        dtype=np.int64,
        count=math.comb(L, N),
    )
    vals.sort()
    return vals


def enumerate_basis(spec: ModelSpec, cap: int = DEFAULT_DIMENSION_CAP) -> SectorBasis:
    dim = spec.sector_dimension()
    if dim > cap:
        raise DimensionOverflowError(dim, cap)
    up = _configs_with_popcount(spec.L, spec.N_up)
    down = _configs_with_popcount(spec.L, spec.N_down)
    up.flags.writeable = False
    down.flags.writeable = False
    return SectorBasis(spec=spec, up_configs=up, down_configs=down)


def _species_hopping(configs: np.ndarray, L: int, t: float) -> sp.csr_matrix:
    """-t sum_i (c+_i c_{i+1} + h.c.) restricted to one spin species.

    Nearest-neighbour hops leave no occupied modes between the two sites,
    so the Jordan-Wigner parity is identically +1 here; the parity mask is
    kept explicit to honour the stated sign convention site-nonlocally.
    """
    n = len(configs)
    rows, cols, vals = [], [], []
    for i in range(L - 1):
        occ_i = (configs >> i) & 1
        occ_j = (configs >> (i + 1)) & 1
        movable = occ_i != occ_j
        src = np.nonzero(movable)[0]
        if len(src) == 0:
            continue
        partner = configs[src] ^ (3 << i)
        dst = np.searchsorted(configs, partner)
        # parity of occupied modes strictly between sites i and i+1
        between_mask = (((1 << (i + 1)) - 1) >> (i + 1)) << (i + 1)
        between = configs[src] & between_mask
        sign = 1.0 - 2.0 * (np.bitwise_count(between.astype(np.uint64)) % 2)
        rows.append(src)
        cols.append(dst)
        vals.append(-t * sign)
    if not rows:
        return sp.csr_matrix((n, n))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    m = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    m.sum_duplicates()
    return m


def _double_occupancy(up_configs: np.ndarray, down_configs: np.ndarray) -> np.ndarray:
    """Count of doubly occupied sites for every (up, down) configuration pair."""
    both = np.bitwise_and(
        up_configs[:, None].astype(np.uint64), down_configs[None, :].astype(np.uint64)
    )
    return np.bitwise_count(both).astype(np.float64)


def build_hamiltonian(spec: ModelSpec, basis: SectorBasis) -> SparseOperator:
    if basis.spec != spec:
        raise ValueError("basis was enumerated for a different ModelSpec")
    L, t, U = spec.L, spec.t, spec.U
    h_up = _species_hopping(basis.up_configs, L, t)
    h_dn = _species_hopping(basis.down_configs, L, t)
    n_up, n_dn = len(basis.up_configs), len(basis.down_configs)
    H = sp.kron(h_up, sp.identity(n_dn, format="csr"), format="csr")
    H = H + sp.kron(sp.identity(n_up, format="csr"), h_dn, format="csr")
    if U != 0.0:
        docc = _double_occupancy(basis.up_configs, basis.down_configs).ravel()
        H = H + sp.diags(U * docc, format="csr")
    H = H.tocsr()
    H.eliminate_zeros()
    H.sort_indices()
    return SparseOperator(dimension=basis.dimension, matrix=H)


def single_particle_energies(L: int, t: float = 1.0) -> np.ndarray:
    """Open-chain single-particle spectrum, ascending."""
    if L < 1:
        raise ValueError("L must be >= 1")
    k = np.arange(1, L + 1)
    eps = -2.0 * t * np.cos(k * np.pi / (L + 1))
    return np.sort(eps)


def free_fermion_density(L: int, N: int) -> DensityProfile:
    """Density of N spinless free fermions on the open chain (all spin-up).

    This is the exact ground state at full polarization, where the on-site
    interaction is inert.
    """
    if not 0 <= N <= L:
        raise ValueError(f"N={N} outside [0, L={L}]")
    sites = np.arange(1, L + 1)
    up = np.zeros(L)
    for k in range(1, N + 1):
        up += (2.0 / (L + 1)) * np.sin(k * sites * np.pi / (L + 1)) ** 2
    return DensityProfile(up=up, down=np.zeros(L))


# --- density profile CSV (17 significant digits, round-trip exact) ---

_CSV_HEADER = "site,n_up,n_down,n_total"


def density_to_csv(profile: DensityProfile) -> str:
    buf = io.StringIO()
    buf.write(_CSV_HEADER + "\n")
    total = profile.total
    for i in range(profile.L):
        buf.write(
            f"{i + 1},{profile.up[i]:.17g},{profile.down[i]:.17g},{total[i]:.17g}\n"
        )
    return buf.getvalue()


def density_from_csv(text: str) -> DensityProfile:
    lines = text.strip().splitlines()
    if not lines or lines[0].strip() != _CSV_HEADER:
        raise ValueError(f"bad density CSV header: {lines[:1]}")
    up, down = [], []
    for ln in lines[1:]:
        site, u, d, _tot = ln.split(",")
        up.append(float(u))
        down.append(float(d))
    return DensityProfile(up=np.array(up), down=np.array(down))


def save_density(path, profile: DensityProfile) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(density_to_csv(profile))


def load_density(path) -> DensityProfile:
    with open(path, "r", encoding="ascii") as fh:
        return density_from_csv(fh.read())
