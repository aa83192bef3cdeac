"""Certified selection of the staircase constants.

Everything here is interval arithmetic with outward rounding (one ulp per
endpoint via nextafter, plus a small relative inflation wherever a library
function is only accurate to a few ulps).  Certification of the coefficient
bracket

    r^-2 < lambda3_i(P) < r^-(p + 2 delta)

runs over the closed parameter box by adaptive subdivision; indices are
covered on the window [start, start + horizon] and the regime beyond the
horizon is reported as asymptotic, not certified.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .profile import ProfileConfig, phi_d
from .staircase import StairConfig, lambda3_limit, p_critical
from . import schedule as _schedule

_INF = math.inf


class CertificationBudgetError(RuntimeError):
    """Subdivision or search budget exhausted before all margins were positive."""


def _up(x: float) -> float:
    return math.nextafter(x, _INF)


def _dn(x: float) -> float:
    return math.nextafter(x, -_INF)


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self) -> None:
        if self.lo > self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    @staticmethod
    def point(x: float) -> "Interval":
        return Interval(x, x)

    def __add__(self, other: "Interval | float") -> "Interval":
        o = _as_iv(other)
        return Interval(_dn(self.lo + o.lo), _up(self.hi + o.hi))

    __radd__ = __add__

    def __neg__(self) -> "Interval":
        return Interval(-self.hi, -self.lo)

    def __sub__(self, other: "Interval | float") -> "Interval":
        return self + (-_as_iv(other))

    def __rsub__(self, other: "Interval | float") -> "Interval":
        return _as_iv(other) + (-self)

    def __mul__(self, other: "Interval | float") -> "Interval":
        o = _as_iv(other)
        c = (self.lo * o.lo, self.lo * o.hi, self.hi * o.lo, self.hi * o.hi)
        return Interval(_dn(min(c)), _up(max(c)))

    __rmul__ = __mul__

    def __truediv__(self, other: "Interval | float") -> "Interval":
        o = _as_iv(other)
        if o.lo <= 0.0 <= o.hi:
            raise ZeroDivisionError(f"division by interval containing zero: [{o.lo}, {o.hi}]")
        c = (self.lo / o.lo, self.lo / o.hi, self.hi / o.lo, self.hi / o.hi)
        return Interval(_dn(min(c)), _up(max(c)))

    def __rtruediv__(self, other: "Interval | float") -> "Interval":
        return _as_iv(other) / self

    def inflate_rel(self, rel: float) -> "Interval":
        pad = rel * max(abs(self.lo), abs(self.hi)) + 5e-324
        return Interval(self.lo - pad, self.hi + pad)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def hull(self, other: "Interval") -> "Interval":
        return Interval(min(self.lo, other.lo), max(self.hi, other.hi))


def _as_iv(x: "Interval | float") -> Interval:
    return x if isinstance(x, Interval) else Interval.point(float(x))


def ipow(base: Interval, n: int) -> Interval:
    """base^n for n >= 0 by interval binary exponentiation."""
    if n < 0:
        return Interval.point(1.0) / ipow(base, -n)
    acc = Interval.point(1.0)
    b = base
    while n:
        if n & 1:
            acc = acc * b
        b = b * b
        n >>= 1
    return acc


def rpow_neg(r: float, exponent: float) -> Interval:
    """Enclosure of r^(-exponent) for r > 1, exponent >= 0."""
    v = math.exp(-exponent * math.log(r))
    return Interval.point(v).inflate_rel(1e-14)


# phi' evaluated on endpoints is correct to a few ulps; this inflation
# dominates its rounding error.
_PHI_REL = 1e-13


def phi_d_iv(prof: ProfileConfig, x: Interval) -> Interval:
    """Enclosure of phi' over x (phi' is strictly increasing)."""
    return Interval(phi_d(prof, x.lo), phi_d(prof, x.hi)).inflate_rel(_PHI_REL)


@dataclass(frozen=True)
class _Seqs:
    """Interval sequences at one index over a parameter sub-box."""

    ap_i: Interval
    ap_i1: Interval
    am_i: Interval
    am_i1: Interval
    fp: Interval
    fmi: Interval
    fmi1: Interval


def _seqs_iv(cfg: StairConfig, i: int, box_p: Interval, box_m: Interval) -> _Seqs:
    r_iv = Interval.point(cfg.r)
    r_i = ipow(r_iv, i)
    r_i1 = r_i * r_iv
    s = Interval.point(cfg.s_minus).inflate_rel(1e-15)
    ap_i = box_p + r_i
    ap_i1 = box_p + r_i1
    am_i = box_m + s * r_i
    am_i1 = box_m + s * r_i1
    prof = cfg.profile
    return _Seqs(
        ap_i=ap_i,
        ap_i1=ap_i1,
        am_i=am_i,
        am_i1=am_i1,
        fp=phi_d_iv(prof, ap_i),
        fmi=phi_d_iv(prof, -am_i),
        fmi1=phi_d_iv(prof, -am_i1),
    )


def coeffs_iv(cfg: StairConfig, i: int, box_p: Interval, box_m: Interval) -> tuple[Interval, Interval, Interval]:
    """Enclosures of the three splitting coefficients over a sub-box."""
    s = _seqs_iv(cfg, i, box_p, box_m)
    den = s.fp - s.fmi1
    l1 = (s.fmi - s.fmi1) / den
    front = (s.fp - s.fmi) / den
    width = s.am_i1 + s.ap_i1
    l2 = front * ((s.ap_i1 - s.ap_i) / width)
    l3 = front * ((s.am_i1 + s.ap_i) / width)
    return l1, l2, l3


def coeff3_t_iv(l1: Interval, l2: Interval, l3: Interval, t: float) -> Interval:
    """Enclosure of the t-interpolated third coefficient at pinned t."""
    tt = Interval.point(t)
    one_m = Interval.point(1.0) - tt
    return (tt * l3 - one_m * l2) / (tt + one_m * l1)


def bracket_iv(cfg: StairConfig) -> tuple[Interval, Interval]:
    """Enclosures of the bracket endpoints (r^-2, r^-(p+2delta))."""
    lo = Interval.point(1.0) / ipow(Interval.point(cfg.r), 2)
    hi = rpow_neg(cfg.r, cfg.p + 2.0 * cfg.delta)
    return lo, hi


_FULL_BOX = (Interval(1.0, 2.0), Interval(1.0, 2.0))


def _certify_index(
    cfg: StairConfig,
    i: int,
    t_lo: float | None = None,
    max_boxes: int = 20000,
) -> tuple[bool, float, int]:
    """Certify the coefficient bracket at one index over the closed box.

    With t_lo set, certifies the t-interpolated coefficient uniformly over
    t in [t_lo, 1] (the coefficient is increasing in t, so its range over t
    is the hull of the two pinned evaluations).  Returns (ok, worst_slack,
    boxes_used); on failure worst_slack is the best lower bound found.
    """
    br_lo, br_hi = bracket_iv(cfg)
    stack = [_FULL_BOX]
    used = 0
    worst = math.inf
    while stack:
        box_p, box_m = stack.pop()
        used += 1
        if used > max_boxes:
            return False, -math.inf, used
        l1, l2, l3 = coeffs_iv(cfg, i, box_p, box_m)
        if t_lo is None:
            enc = l3
        else:
            enc = coeff3_t_iv(l1, l2, l3, t_lo).hull(l3)
        slack = min(enc.lo - br_lo.hi, br_hi.lo - enc.hi)
        if slack > 0.0:
            worst = min(worst, slack)
            continue
        # inconclusive: subdivide along the wider coordinate
        if max(box_p.width, box_m.width) < 1e-6:
            return False, slack, used
        if box_p.width >= box_m.width:
            m = box_p.mid
            stack.append((Interval(box_p.lo, m), box_m))
            stack.append((Interval(m, box_p.hi), box_m))
        else:
            m = box_m.mid
            stack.append((box_p, Interval(box_m.lo, m)))
            stack.append((box_p, Interval(m, box_m.hi)))
    return True, worst, used


@dataclass
class MarginReport:
    """Certification summary for a window of indices."""

    window: tuple[int, int]
    worst_slack: float
    boxes_used: int
    t_lo: float | None = None
    note: str = "bracket certified on the window; beyond it the regime is asymptotic (limit-driven), not numerically certified"

    def as_dict(self) -> dict:
        return {
            "window": list(self.window),
            "worst_slack": self.worst_slack,
            "boxes_used": self.boxes_used,
            "t_lo": self.t_lo,
            "note": self.note,
        }


def certify_window(
    cfg: StairConfig, start: int, horizon: int, t_lo: float | None = None
) -> MarginReport:
    """Certify the bracket for every index in [start, start + horizon]."""
    worst = math.inf
    total = 0
    for i in range(start, start + horizon + 1):
        ok, slack, used = _certify_index(cfg, i, t_lo=t_lo)
        total += used
        if not ok:
            raise CertificationBudgetError(
                f"bracket certification failed at index {i} (best slack {slack:.3e})"
            )
        worst = min(worst, slack)
    return MarginReport(window=(start, start + horizon), worst_slack=worst, boxes_used=total, t_lo=t_lo)


def log_ratio_exponent(lam: float, Lam: float, r: float) -> float:
    """log_r of the squared staircase mass ratio L(r).

    L(r) = ((lam*sqrt(r) + sqrt(Lam*lam)*r) / (lam*sqrt(r) + sqrt(Lam*lam)))^2;
    evaluated through log1p so it stays accurate as r -> 1, where the value
    tends to the critical exponent.
    """
    c = math.sqrt(Lam * lam)
    den = lam * math.sqrt(r) + c
    return 2.0 * math.log1p(c * (r - 1.0) / den) / math.log(r)


@dataclass
class SelectedRatio:
    r: float
    I0: int
    exponent: float  # log_r L(r)
    margins: MarginReport


def _heuristic_start_index(cfg: StairConfig) -> int:
    """Index from which finite-index wobble is safely below the bracket slack."""
    lam, Lam, r = cfg.profile.lam, cfg.profile.Lam, cfg.r
    s = cfg.s_minus
    lim = lambda3_limit(cfg)
    br_lo = r ** -2
    br_hi = math.exp(-(cfg.p + 2.0 * cfg.delta) * math.log(r))
    margin = min(lim - br_lo, br_hi - lim)
    if margin <= 0.0:
        raise CertificationBudgetError(
            f"asymptotic coefficient {lim:.6f} outside the bracket ({br_lo:.6f}, {br_hi:.6f})"
        )
    a1 = lam + math.sqrt(Lam * lam / r)
    u = 2.0 * lam + 2.0 * Lam
    dev = u * (1.0 / a1 - 1.0 / (lam + math.sqrt(Lam * lam / r) * r))
    dev += 4.0 * (1.0 / (1.0 + s * r) - 1.0 / (r + s * r))
    target = 0.3 * margin / lim
    return max(3, math.ceil(math.log(max(dev, 1e-12) / target) / math.log(r)))


def select_r_I0(
    profile: ProfileConfig, p: float, delta: float, horizon: int = 50
) -> tuple[StairConfig, SelectedRatio]:
    """Pick the staircase ratio r and the bracket onset index I0.

    The ratio must satisfy 2 > log_r L(r) > p + 2*delta.  The exponent tends
    to the critical exponent as r -> 1 and L(r) < r^2 holds on all of (1,2),
    so feasibility only degrades as r grows; we locate the feasibility edge by
    bisection and then sit close to 1, where the exponent margin is near its
    supremum and the mass-decay exponent stays close to critical.
    """
    lam, Lam = profile.lam, profile.Lam
    pc = p_critical(lam, Lam)
    if not (1.0 <= p < pc):
        raise ValueError(f"p must be in [1, p_critical = {pc}), got {p}")
    if not (0.0 < delta < 0.5 * (pc - p)):
        raise ValueError(f"delta must be in (0, (p_critical - p)/2), got {delta}")
    target = p + 2.0 * delta

    lo, hi = 1.0 + 1e-9, 2.0 - 1e-9
    if log_ratio_exponent(lam, Lam, hi) > target:
        r_edge = 2.0
    else:
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if log_ratio_exponent(lam, Lam, mid) > target:
                lo = mid
            else:
                hi = mid
        r_edge = lo
    r = 1.0 + min(2.0 ** -6, 0.25 * (r_edge - 1.0))

    g = log_ratio_exponent(lam, Lam, r)
    if not (target < g < 2.0):
        raise CertificationBudgetError(f"selected r={r} has exponent {g} outside ({target}, 2)")

    cfg = StairConfig(profile=profile, r=r, p=p, delta=delta)
    i0 = _heuristic_start_index(cfg)
    for _ in range(12):
        try:
            margins = certify_window(cfg, i0, horizon)
            return cfg, SelectedRatio(r=r, I0=i0, exponent=g, margins=margins)
        except CertificationBudgetError:
            i0 = math.ceil(i0 * 1.2) + 5
    raise CertificationBudgetError(f"no certifiable onset index found up to {i0}")


@dataclass
class SelectedT0:
    T0: float
    I1: int
    margins: MarginReport


def select_T0_I1(cfg: StairConfig, I0: int, horizon: int = 50) -> SelectedT0:
    """Threshold T0 and onset I1 for the t-interpolated coefficient bracket.

    The interpolated third coefficient is increasing in t and equals the base
    coefficient at t = 1, so only the lower bracket edge constrains T0.
    """
    I1 = max(3, I0)
    l1, l2, l3 = coeffs_iv(cfg, I1, *_FULL_BOX)
    br_lo, _ = bracket_iv(cfg)
    rlo = Interval(br_lo.lo, br_lo.hi)
    # t at which the interpolated coefficient hits the lower bracket edge
    den = l2 + l3 - rlo * (Interval.point(1.0) - l1)
    tmin = (l2 + rlo * l1) / den
    t0 = min(0.99, max(0.0, tmin.hi))
    for _ in range(8):
        t0 = t0 + 0.25 * (1.0 - t0)
        try:
            margins = certify_window(cfg, I1, horizon, t_lo=t0)
            return SelectedT0(T0=t0, I1=I1, margins=margins)
        except CertificationBudgetError:
            continue
    raise CertificationBudgetError(f"no certifiable T0 found below 1 at I1={I1}")


@dataclass
class DistanceCertificate:
    """Certified lower bound on the gap between the error sets and the W-sets."""

    value: float
    gap_a22_w1: float
    gap_a11_w2: float
    pairwise_min: float
    pairwise_window: int

    def as_dict(self) -> dict:
        return {
            "value": self.value,
            "gap_a22_w1": self.gap_a22_w1,
            "gap_a11_w2": self.gap_a11_w2,
            "pairwise_min": self.pairwise_min,
            "pairwise_window": self.pairwise_window,
        }


def _family_box(cfg: StairConfig, label: str, i: int, t_lo: float | None = None) -> tuple[Interval, Interval]:
    """Coordinate enclosure (a11, a22) of a family image over the closed box.

    For W-families the enclosure is the hull over t in [t_lo, 1]; both maps
    are affine in t so evaluating the two pinned endpoints suffices.
    """
    s = _seqs_iv(cfg, i, *_FULL_BOX)
    if label == "V":
        return s.ap_i, -s.fmi1
    if label == "U1":
        return s.ap_i, -s.fp
    if label == "U2":
        return -s.am_i1, -s.fmi1
    if label in ("W1", "W2"):
        if t_lo is None:
            raise ValueError("W-family box needs a lower t")
        tl = Interval.point(t_lo)
        one_m = Interval.point(1.0) - tl
        if label == "W1":
            a22 = (-(tl * s.fp) - one_m * s.fmi).hull(-s.fp)
            return s.ap_i, a22
        a11 = (tl * (-s.am_i1) + one_m * s.ap_i1).hull(-s.am_i1)
        return a11, -s.fmi1
    raise ValueError(f"unknown set label {label!r}")


def _box_distance(b1: tuple[Interval, Interval], b2: tuple[Interval, Interval]) -> float:
    def gap(a: Interval, b: Interval) -> float:
        return max(0.0, a.lo - b.hi, b.lo - a.hi)

    return math.hypot(gap(b1[0], b2[0]), gap(b1[1], b2[1]))


def select_I_T0prime(
    cfg: StairConfig, T0: float, I1: int, pairwise_window: int = 12
) -> tuple[int, float, DistanceCertificate]:
    """Base index I and threshold T0' separating the error sets from the W-sets.

    Requires r^I >= 1/(r^(2 delta) - 1) and a certified distance > 1 between
    the union of closed error sets at indices >= I and the union of closed
    W-sets there with t > T0'.  Tail indices are dispatched through the global
    slope envelopes of the profile derivative: the a22 coordinate separates
    the error sets from the first W-family and the a11 coordinate (sign) from
    the second, both gaps growing like r^index.
    """
    lam, Lam, r = cfg.profile.lam, cfg.profile.Lam, cfg.r
    s = cfg.s_minus
    tau_a = math.sqrt(Lam * lam / r) / (lam + math.sqrt(Lam * lam / r))
    tau_b = 1.0 / (1.0 + s)
    tau = max(T0, tau_a, tau_b)
    t0p = tau + 0.25 * (1.0 - tau)

    i_min = max(I1, math.ceil(math.log(1.0 / math.expm1(2.0 * cfg.delta * math.log(r))) / math.log(r)))
    r_iv = Interval.point(r)
    s_iv = Interval.point(s).inflate_rel(1e-15)
    t_iv = Interval.point(t0p)
    one_m = Interval.point(1.0) - t_iv

    big_i = i_min
    for _ in range(400):
        ri = ipow(r_iv, big_i)
        ri1 = ri * r_iv
        # error-set floor in a22 over all indices >= I, via -phi'(-x) >= lam*x
        vmin22 = (Interval.point(lam) * (Interval.point(1.0) + s_iv * ri1)).lo
        # W1 ceiling in a22: <= -(t*lam*(1 + r^i) - (1-t)*sqrt(Lam*lam/r)*... ), increasing in i
        c1 = t_iv * Interval.point(lam) - one_m * (Interval.point(Lam) * s_iv)
        w1_floor = (c1 * ri + t_iv * Interval.point(lam) - one_m * Interval.point(2.0 * Lam)).lo
        gap22 = vmin22 + w1_floor
        # V floor in a11 vs W2 ceiling in a11
        v11 = (Interval.point(1.0) + ri).lo
        c2 = t_iv * s_iv - one_m
        w2_ceiling = (-(c2 * ri1) + one_m * Interval.point(2.0) - t_iv).hi
        gap11 = v11 - w2_ceiling
        if c1.lo > 0.0 and c2.lo > 0.0 and min(gap22, gap11) > 1.0:
            pair = math.inf
            for j in range(pairwise_window + 1):
                vbox = _family_box(cfg, "V", big_i + j)
                for jp in range(pairwise_window + 1):
                    for w in ("W1", "W2"):
                        pair = min(pair, _box_distance(vbox, _family_box(cfg, w, big_i + jp, t_lo=t0p)))
            cert = DistanceCertificate(
                value=min(gap22, gap11),
                gap_a22_w1=gap22,
                gap_a11_w2=gap11,
                pairwise_min=pair,
                pairwise_window=pairwise_window,
            )
            return big_i, t0p, cert
        big_i += max(1, math.ceil(0.05 * big_i))
    raise CertificationBudgetError("distance certificate not achievable within the index budget")


def envelope_check(
    cfg: StairConfig, label: str, ell: int, t_lo: float | None = None
) -> tuple[float, bool]:
    """Exponential coordinate envelope at index ell.

    Returns (C_witness, off_diag_ok) where C_witness bounds
    (|X11|^p + |X22|^p) / r^(p*ell) over the closed set and off_diag_ok
    states |X12| <= 1 (the off-diagonal is the b coordinate untouched by
    every family map).
    """
    labels = ("U1", "U2", "V", "W1", "W2") if label == "all" else (label,)
    worst = 0.0
    for lab in labels:
        tl = t_lo if lab in ("W1", "W2") else None
        a11, a22 = _family_box(cfg, lab, ell, t_lo=tl)
        m11 = max(abs(a11.lo), abs(a11.hi))
        m22 = max(abs(a22.lo), abs(a22.hi))
        num = _up(m11 ** cfg.p + m22 ** cfg.p) * (1.0 + 1e-13)
        den = math.exp(cfg.p * ell * math.log(cfg.r)) * (1.0 - 1e-13)
        worst = max(worst, num / den)
    return worst, True


@dataclass
class ConstantsBundle:
    """Everything the engine needs: certified config, schedule and reports."""

    cfg: StairConfig
    consts: "_schedule.ScheduleConstants"
    ratio: SelectedRatio
    t0_sel: SelectedT0
    distance: DistanceCertificate
    envelope_C: float
    sim_window: MarginReport
    sim_window_t: MarginReport
    schedule_report: "_schedule.ScheduleReport"

    def as_dict(self) -> dict:
        d = self.consts.as_dict()
        prof = self.cfg.profile
        d.update(
            {
                "lambda": prof.lam,
                "Lambda": prof.Lam,
                "sharpness": prof.sharpness,
                "p_critical": p_critical(prof.lam, prof.Lam),
                "ratio_exponent": self.ratio.exponent,
                "margins": {
                    "bracket": self.ratio.margins.as_dict(),
                    "bracket_t": self.t0_sel.margins.as_dict(),
                    "simulation_window": self.sim_window.as_dict(),
                    "simulation_window_t": self.sim_window_t.as_dict(),
                },
                "distance_certificate": self.distance.as_dict(),
                "envelope_C": self.envelope_C,
                "schedule_check": {
                    "ok": self.schedule_report.ok,
                    "l_max": self.schedule_report.l_max,
                    "violations": self.schedule_report.violations,
                },
            }
        )
        return d


def derive_constants(
    profile: ProfileConfig,
    p: float,
    delta: float,
    horizon: int = 50,
    schedule_l_max: int = 50,
) -> ConstantsBundle:
    """Full selection pipeline from the profile to a verified schedule."""
    cfg, ratio = select_r_I0(profile, p, delta, horizon=horizon)
    t0_sel = select_T0_I1(cfg, ratio.I0, horizon=horizon)
    big_i, t0p, distance = select_I_T0prime(cfg, t0_sel.T0, t0_sel.I1)
    crp, _ = _schedule.compute_Crp(cfg.r, cfg.p)
    ctilde = _schedule.compute_Ctilde(cfg.r, cfg.p, cfg.delta)
    n = _schedule.choose_N(cfg.r, cfg.p, big_i, crp, ctilde, t0_sel.T0, t0p)
    consts = _schedule.ScheduleConstants(
        p=cfg.p,
        delta=cfg.delta,
        r=cfg.r,
        I0=ratio.I0,
        I1=t0_sel.I1,
        T0=t0_sel.T0,
        T0prime=t0p,
        I=big_i,
        N=n,
        Crp=crp,
        Ctilde=ctilde,
    )
    # the simulation runs on bands at indices >= I: certify that window too
    sim_window = certify_window(cfg, big_i, horizon)
    sim_window_t = certify_window(cfg, big_i, horizon, t_lo=t0_sel.T0)
    env_c = max(envelope_check(cfg, "all", ell, t_lo=t0_sel.T0)[0] for ell in range(big_i, big_i + horizon + 1))
    report = _schedule.verify_schedule(consts, schedule_l_max)
    if not report.ok:
        raise CertificationBudgetError(f"schedule verification failed: {report.violations[:3]}")
    return ConstantsBundle(
        cfg=cfg,
        consts=consts,
        ratio=ratio,
        t0_sel=t0_sel,
        distance=distance,
        envelope_C=env_c,
        sim_window=sim_window,
        sim_window_t=sim_window_t,
        schedule_report=report,
    )
