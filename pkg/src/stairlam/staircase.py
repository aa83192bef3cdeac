"""Parametrized matrix families of the staircase hierarchy.

A parameter point P = (a0p, a0m, b) lives in the open box
(1,2) x (1,2) x (-1,1).  For an index i >= 1 the hierarchy uses

    a_i_plus  = a0p + r^i
    a_i_minus = a0m + sqrt(lam/(r*Lam)) * r^i

and five matrix families A, B, C, D, E built from the profile derivative,
two interpolation families Phi1, Phi2 between them, and the splitting
coefficients that decompose A_i into (B_i, D_i, A_{i+1}).

All maps keep the off-diagonal entry equal to b(P); shared entries of convex
combinations are passed through exactly so that b-preservation is bitwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .profile import ProfileConfig, SymMatrix2, combine, phi_d, phi_d_inv

BOX_A0 = (1.0, 2.0)
BOX_B = (-1.0, 1.0)

FamilyKind = str  # one of "A", "B", "C", "D", "E"


class NotInImageError(ValueError):
    """Raised when a matrix cannot be inverted back into the parameter box."""


@dataclass(frozen=True)
class ParamPoint:
    """Point of the open parameter box (1,2) x (1,2) x (-1,1)."""

    a0p: float
    a0m: float
    b: float

    def __post_init__(self) -> None:
        if not (BOX_A0[0] < self.a0p < BOX_A0[1] and BOX_A0[0] < self.a0m < BOX_A0[1]):
            raise ValueError(f"(a0p, a0m) = ({self.a0p}, {self.a0m}) outside (1,2)^2")
        if not (BOX_B[0] < self.b < BOX_B[1]):
            raise ValueError(f"b = {self.b} outside (-1,1)")


@dataclass(frozen=True)
class StairConfig:
    """Profile plus the staircase ratio r, integrability exponent p and slack delta.

    The bound delta < (p_crit - p)/2 is the existence condition for a ratio r
    with log_r L(r) > p + 2*delta; r itself must be certified by
    ``certify.select_r_I0``.
    """

    profile: ProfileConfig
    r: float
    p: float
    delta: float

    def __post_init__(self) -> None:
        if not (1.0 < self.r < 2.0):
            raise ValueError(f"r = {self.r} outside (1,2)")
        pc = p_critical(self.profile.lam, self.profile.Lam)
        if not (1.0 < self.p < pc):
            raise ValueError(f"p = {self.p} outside (1, p_crit = {pc})")
        if not (0.0 < self.delta < 0.5 * (pc - self.p)):
            raise ValueError(f"delta = {self.delta} outside (0, (p_crit - p)/2)")

    @property
    def s_minus(self) -> float:
        """Coefficient sqrt(lam/(r*Lam)) of the minus-sequence."""
        return math.sqrt(self.profile.lam / (self.r * self.profile.Lam))


@dataclass(frozen=True)
class LabeledMatrix:
    """Matrix tagged with the family map and arguments that produced it."""

    kind: str  # A,B,C,D,E,W1,W2,V,U1,U2
    index: int
    t: float | None
    X: SymMatrix2
    P: ParamPoint


def p_critical(lam: float, Lam: float) -> float:
    """Critical exponent 2*sqrt(Lambda) / (sqrt(lambda) + sqrt(Lambda))."""
    if not (0.0 < lam < Lam):
        raise ValueError("need 0 < lambda < Lambda")
    sl, sL = math.sqrt(lam), math.sqrt(Lam)
    return 2.0 * sL / (sl + sL)


def a_seq(cfg: StairConfig, sign: str, k: int, P: ParamPoint) -> float:
    """Sequence member a_k^+ or a_k^- for k >= 1."""
    if k < 1:
        raise ValueError(f"sequences are defined for k >= 1, got k={k}")
    if sign == "+":
        return P.a0p + cfg.r ** k
    if sign == "-":
        return P.a0m + cfg.s_minus * cfg.r ** k
    raise ValueError(f"sign must be '+' or '-', got {sign!r}")


def family_matrix(cfg: StairConfig, kind: FamilyKind, i: int, P: ParamPoint) -> SymMatrix2:
    """One of the five base families at index i >= 1.

    E_i(P) equals A_{i+1}(P) entrywise by construction.
    """
    if i < 1:
        raise ValueError(f"family index must be >= 1, got {i}")
    prof = cfg.profile
    ap_i = a_seq(cfg, "+", i, P)
    if kind == "A":
        return SymMatrix2(ap_i, P.b, -phi_d(prof, -a_seq(cfg, "-", i, P)))
    if kind == "B":
        return SymMatrix2(ap_i, P.b, -phi_d(prof, ap_i))
    if kind == "C":
        return SymMatrix2(ap_i, P.b, -phi_d(prof, -a_seq(cfg, "-", i + 1, P)))
    if kind == "D":
        return SymMatrix2(-a_seq(cfg, "-", i + 1, P), P.b, -phi_d(prof, -a_seq(cfg, "-", i + 1, P)))
    if kind == "E":
        return family_matrix(cfg, "A", i + 1, P)
    raise ValueError(f"unknown family kind {kind!r}")


def split_coeffs(cfg: StairConfig, i: int, P: ParamPoint) -> tuple[float, float, float]:
    """Splitting coefficients (l1, l2, l3) with A_i = l1*B_i + l2*D_i + l3*A_{i+1}."""
    if i < 1:
        raise ValueError(f"index must be >= 1, got {i}")
    prof = cfg.profile
    ap_i = a_seq(cfg, "+", i, P)
    ap_i1 = a_seq(cfg, "+", i + 1, P)
    am_i = a_seq(cfg, "-", i, P)
    am_i1 = a_seq(cfg, "-", i + 1, P)
    f_plus = phi_d(prof, ap_i)
    f_mi = phi_d(prof, -am_i)
    f_mi1 = phi_d(prof, -am_i1)
    den = f_plus - f_mi1
    l1 = (f_mi - f_mi1) / den
    front = (f_plus - f_mi) / den
    l2 = front * (ap_i1 - ap_i) / (am_i1 + ap_i1)
    l3 = front * (am_i1 + ap_i) / (am_i1 + ap_i1)
    return (l1, l2, l3)


def lambda3_limit(cfg: StairConfig) -> float:
    """Large-index limit of the third splitting coefficient.

    Equals ((lam*sqrt(r) + sqrt(Lam*lam)) / (lam*sqrt(r) + sqrt(Lam*lam)*r))^2,
    the reciprocal of the ratio whose log_r the ratio-selection targets.
    """
    lam, Lam, r = cfg.profile.lam, cfg.profile.Lam, cfg.r
    c = math.sqrt(Lam * lam)
    q = (lam * math.sqrt(r) + c) / (lam * math.sqrt(r) + c * r)
    return q * q


def interp_map(cfg: StairConfig, which: int, i: int, t: float, P: ParamPoint) -> SymMatrix2:
    """Interpolation map Phi1 = t*B_i + (1-t)*A_i or Phi2 = t*D_i + (1-t)*A_{i+1}.

    Phi1 differs from A_i only in the a22 entry and Phi2 from A_{i+1} only in
    the a11 entry (exactly, by entry passthrough).
    """
    if i < 1:
        raise ValueError(f"index must be >= 1, got {i}")
    if not (0.0 <= t <= 1.0):
        raise ValueError(f"t = {t} outside [0,1]")
    if which == 1:
        return combine(t, family_matrix(cfg, "B", i, P), family_matrix(cfg, "A", i, P))
    if which == 2:
        return combine(t, family_matrix(cfg, "D", i, P), family_matrix(cfg, "A", i + 1, P))
    raise ValueError(f"which must be 1 or 2, got {which}")


def interp_coeffs(cfg: StairConfig, i: int, t: float, P: ParamPoint) -> tuple[float, float, float]:
    """Coefficients of the one-step interpolation splitting of A_i.

    (l1t, l2t, l3t) always sum to one; l3t can be negative for small t, which
    is why a threshold T0 on t exists.
    """
    if not (0.0 < t <= 1.0):
        raise ValueError(f"t = {t} outside (0,1]")
    l1, l2, l3 = split_coeffs(cfg, i, P)
    den = t + (1.0 - t) * l1
    return (l1 / den, l2 / den, (t * l3 - (1.0 - t) * l2) / den)


def _check_box(a0p: float, a0m: float, b: float) -> ParamPoint:
    try:
        return ParamPoint(a0p, a0m, b)
    except ValueError as exc:
        raise NotInImageError(str(exc)) from None


def invert_family(
    cfg: StairConfig, kind: str, i: int, X: SymMatrix2, t: float | None = None
) -> ParamPoint:
    """Recover P from X = map(P) for the A, W1 (Phi1) or W2 (Phi2) family.

    Raises NotInImageError when the recovered point leaves the open box.  The
    W-branches divide by (1 - t); they are well conditioned only while 1 - t
    is comfortably above machine epsilon times the matrix scale.
    """
    if i < 1:
        raise ValueError(f"index must be >= 1, got {i}")
    prof = cfg.profile
    b = X.a12
    if kind == "A":
        a0p = X.a11 - cfg.r ** i
        a0m = _neg_recover(cfg, X, i)
        return _check_box(a0p, a0m, b)
    if kind in ("W1", "W2"):
        if t is None or not (0.0 < t < 1.0):
            raise ValueError("W-family inversion needs t in (0,1)")
        if kind == "W1":
            a0p = X.a11 - cfg.r ** i
            f_plus = phi_d(prof, X.a11)
            f_mi = (-X.a22 - t * f_plus) / (1.0 - t)
            a0m = -phi_d_inv(prof, f_mi) - cfg.s_minus * cfg.r ** i
            return _check_box(a0p, a0m, b)
        a0m = -phi_d_inv(prof, -X.a22) - cfg.s_minus * cfg.r ** (i + 1)
        am_i1 = a0m + cfg.s_minus * cfg.r ** (i + 1)
        ap_i1 = (X.a11 + t * am_i1) / (1.0 - t)
        a0p = ap_i1 - cfg.r ** (i + 1)
        return _check_box(a0p, a0m, b)
    raise ValueError(f"invertible kinds are A, W1, W2; got {kind!r}")


def _neg_recover(cfg: StairConfig, X: SymMatrix2, i: int) -> float:
    """a0m of an A-family matrix: a22 = -phi'(-(a0m + s*r^(i+1)))."""
    y = phi_d_inv(cfg.profile, -X.a22)
    return -y - cfg.s_minus * cfg.r ** (i + 1)
