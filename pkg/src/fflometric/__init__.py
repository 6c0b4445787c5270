"""Ground-state density profiles of the 1D attractive Hubbard chain and
metric-space distance analysis over polarization sweeps."""

from .model import (
    DensityProfile,
    DimensionOverflowError,
    ModelSpec,
    SectorBasis,
    SparseOperator,
    build_hamiltonian,
    enumerate_basis,
    free_fermion_density,
    load_density,
    save_density,
    single_particle_energies,
)
from .ed import (
    GroundState,
    LanczosConvergenceError,
    dense_ground_state,
    lanczos_ground_state,
    measure_density,
    solve_sector,
)
from .dmrg import (
    DMRGConfig,
    DMRGReport,
    TensorTrainState,
    dmrg_ground_state,
    dmrg_measure_density,
    load_state,
    save_state,
)
from .metric import (
    AsymmetryReport,
    AsymmetrySeries,
    DistanceSeries,
    SeriesContext,
    asymmetry_report,
    asymmetry_series,
    density_distance,
    distance_series,
)
from .sweep import (
    PolarizationGrid,
    ResultsStore,
    SweepConfig,
    load_profile,
    polarization_grid,
    run_sweep,
    solve_point,
)

__version__ = "0.1.0"
