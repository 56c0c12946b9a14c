"""Unknown-input observers with Lyapunov-certified state resets.

Modules:

* :mod:`.matrix_core` - small dense linear-algebra kernels
* :mod:`.uio_design` - decoupling gain and observer matrices
* :mod:`.lmi_cert` - reset certificate synthesis and validation
* :mod:`.hybrid_sim` - hybrid plant/observer simulation and metrics
* :mod:`.experiments` and :mod:`.cli` - grid, Monte-Carlo and comparison drivers
"""
from .errors import (
    ConfigInvalid,
    DimensionMismatch,
    Infeasible,
    NoConvergence,
    NonFinite,
    NotStabilizing,
    RankCondition,
    RankDeficient,
    ResetUIOError,
    SingularMatrix,
)
from .hybrid_sim import (
    HybridTrajectory,
    JumpRecord,
    Metrics,
    SimConfig,
    apply_jump,
    compute_metrics,
    reset_law_fires,
    run_simulation,
    sector_value,
)
from .lmi_cert import (
    LmiReport,
    ResetCertificate,
    derive_reset_maps,
    synthesize_certificate,
    validate_certificate,
)
from .matrix_core import hurwitz_check, lyapunov_solve, mat_exp, solve_linear, sym_eig
from .uio_design import CuioParams, PlantModel, assemble_cuio, compute_decoupling_gain

__version__ = "0.1.0"
