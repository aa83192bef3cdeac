"""Staircase-laminate convex-integration engine.

Builds, certifies and simulates a staircase-laminate hierarchy producing
W^{1,p}-but-not-W^{1,2} gradient distributions for a scalar Euler-Lagrange
differential inclusion, together with calculators for the associated
regularity thresholds.
"""

from .profile import ProfileConfig, SymMatrix2, phi_dd, phi_d, phi_d_inv, kf_point, kf_residual
from .staircase import (
    ParamPoint,
    StairConfig,
    a_seq,
    family_matrix,
    split_coeffs,
    interp_map,
    interp_coeffs,
    invert_family,
    p_critical,
    NotInImageError,
)
from .certify import (
    select_r_I0,
    select_T0_I1,
    select_I_T0prime,
    envelope_check,
    derive_constants,
    CertificationBudgetError,
)
from .schedule import (
    ScheduleConstants,
    TDeficit,
    compute_Crp,
    delta_seq,
    compute_Ctilde,
    t_seq,
    choose_N,
    verify_schedule,
)
from .laminate import Atom, Laminate, SplitStep, barycenter, elementary_split, build_mu_i, build_mu_interp, build_corr, validate
from .scheme import CellClass, CellEnsemble, init, step, run, diagnostics
from .realizer import OscParams, AffineCell, PAMap, simple_lamination, realize_laminate, realize_scheme, export_mesh, import_mesh
from .regularity import BootstrapInput, PinchInput, bootstrap_exponents, pinching_beta, discrete_lemma41

__version__ = "0.1.0"
