"""Mirror-descent successive approximations for finite-horizon optimal
control, with reference oracles, inequality certification suites, and an
experiment CLI."""

from .problems import (
    BatchCallbacks,
    Box,
    ControlSet,
    ConvexOracle,
    ProblemSpec,
    SmoothnessData,
    Unconstrained,
    grad_u_hamiltonian_tau,
    grad_x_hamiltonian0,
    hamiltonian0,
    make_highdim,
    make_lq,
    make_quartic,
    standard_normals,
)
from .trajectories import (
    BlowupError,
    TimeGrid,
    Trajectory,
    bound_check,
    constant_control,
    control_from_function,
    evaluate_cost,
    inner_product,
    integrate_adjoint,
    integrate_state,
    interpolate,
    l2_norm,
    read_trajectory_csv,
    write_trajectory_csv,
)
from .mirror import (
    MirrorMap,
    ProxFailureError,
    bregman_integrated,
    bregman_pointwise,
    custom_map,
    mirror_step_pointwise,
    quadratic_map,
    quartic_augmented_map,
    three_point_check,
)
from .solver import (
    IterateRecord,
    SolveReport,
    SolverConfig,
    Termination,
    admissibility_modulus_check,
    check_dissipation,
    fit_geometric_factor,
    fit_loglog_slope,
    read_report_csv,
    run,
    semilog_fit,
    stationarity_residual,
    write_report_csv,
)
from .reference import (
    ConstantsLedger,
    LQReference,
    RiccatiSolution,
    adjoint_gradient,
    constants_ledger,
    fd_gradient,
    fd_gradient_sweep,
    ledger_for_problem,
    lq_reference,
    make_riccati,
    pair_gradient,
    quartic_recursion,
    riccati_p,
    sensitivity_gradient,
)

__version__ = "0.1.0"
