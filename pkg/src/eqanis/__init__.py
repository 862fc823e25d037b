"""Anisotropic equilibrium magnetization (EQANIS) for magnetic particle imaging.

Fast series evaluation of the Boltzmann mean moment with uniaxial anisotropy,
a quadrature oracle, a Neel Fokker-Planck reference solver, system-matrix
assembly (full and reduced), Kaczmarz reconstruction and error metrics.
"""
__version__ = "0.1.0"

from .physics import (  # noqa: E402
    MU0,
    KB,
    AlignedAnisotropy,
    FieldSequence,
    FluidB3Anisotropy,
    ParticleParams,
    ScanGrid,
    anisotropy_at,
    applied_field,
    tesla_to_field,
)
from .series import eval_series, langevin, mean_moment, reduced_moment  # noqa: E402
from .oracle import oracle_Zz, oracle_sphere_moment  # noqa: E402
from .fokker_planck import fp_solve  # noqa: E402
from .system import (  # noqa: E402
    SystemMatrix,
    TransferFunction,
    assemble_system_matrix,
    fit_transfer_function,
    read_sm,
    write_sm,
)
from .reduced import lambda_star, reduced_sm_rows  # noqa: E402
from .recon import KaczmarzReconstructor, kaczmarz, lambda_abs  # noqa: E402
from .metrics import err_sm, err_td, error_map, truncation_map  # noqa: E402
