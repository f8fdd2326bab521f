"""Rigid-body alignment: particles on SO(3), von Mises laws and their steady states."""

from .errors import ConvergenceError, DomainError, EnvelopeError, InvalidInputError, RbaError
from .so3 import (
    AxisAngle,
    Ssvd,
    axis_angle,
    exp_so3,
    half_trace_inner,
    hat,
    log_so3,
    nearest_rotation,
    norm,
    rodrigues,
    ssvd,
    tangent_project,
    vee,
)
from .quaternion import iso_phi, iso_phi_inv, phi_map, quaternion_of
from .von_mises import (
    VonMises,
    cross_moment,
    empirical_flux,
    kl_von_mises,
    log_partition,
    mean_flux,
    moment_report,
    sample,
    second_moment,
)
from .equilibria import (
    BranchTables,
    EquilibriumClass,
    Family,
    SignatureReport,
    c1,
    c2,
    classify_all,
    find_thresholds,
    free_energy_w,
    gradient_v,
    hessian_vbar,
    potential_v,
    rho1,
    rho2,
    signature_report,
    solve_branch,
)
from .particles import Ensemble, SimConfig, TimeSeries, init_ensemble, naive_step, run, step
from .bgk import BgkTrajectory, bgk_rhs, classify_limit, decay_rate_fit, integrate

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
