"""Stage schedule: slack sequence, t-sequence and their certified inequalities.

The t-sequence approaches 1 so fast that 1 - t_l underflows double precision
around l = 12, so deficits are carried as natural logs

    ld_l = log(1 - t_l) = -(N + I + 2 p (l+1)^3) log r - log(l+1)

and every schedule inequality is checked in log space through expm1/log1p
identities with a small outward slack.  An extended-precision (mpmath) mirror
of the t-ratio computation backs the double path as a reference oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import mpmath as mp

_OUT = 1e-13  # outward slack per compared quantity


@dataclass(frozen=True)
class ScheduleConstants:
    """Certified constants governing the iteration."""

    p: float
    delta: float
    r: float
    I0: int
    I1: int
    T0: float
    T0prime: float
    I: int
    N: int
    Crp: float
    Ctilde: float

    def __post_init__(self) -> None:
        logr = math.log(self.r)
        if self.N * logr < math.log(2.0 * self.Ctilde * self.Crp) - 1e-9:
            raise ValueError("N below log_r(2 * Ctilde * Crp)")
        if self.I * logr < -math.log(math.expm1(2.0 * self.delta * logr)) - 1e-9:
            raise ValueError("r^I below 1/(r^(2 delta) - 1)")

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class TDeficit:
    """t_l carried as log(1 - t_l)."""

    log_deficit: float
    ell: int

    @property
    def t(self) -> float:
        """Collapsed double value of t_l (1.0 once the deficit underflows)."""
        return -math.expm1(self.log_deficit)

    @property
    def log_t(self) -> float:
        return math.log1p(-math.exp(self.log_deficit))


def compute_Crp(r: float, p: float) -> tuple[float, int]:
    """sup over j >= 1 of j * r^(-p(j-1)), with its maximizer.

    The maximizer sits near 1/(p log r); the term ratio
    (1 + 1/j) * r^-p is decreasing in j, so once it drops below 1 the tail
    is certified decreasing and the scanned maximum is the sup.
    """
    if not (r > 1.0 and p >= 1.0):
        raise ValueError("need r > 1 and p >= 1")
    logr = math.log(r)
    jhat = max(1, round(1.0 / (p * logr)))
    best, best_j = 0.0, 1
    j = 1
    while True:
        v = j * math.exp(-p * (j - 1) * logr)
        if v > best:
            best, best_j = v, j
        ratio = (1.0 + 1.0 / j) * math.exp(-p * logr)
        if j > jhat and ratio < 1.0 and v < best:
            break
        j += 1
        if j > 10_000_000:  # pragma: no cover
            raise ArithmeticError("Crp scan did not terminate")
    for nb in (best_j - 1, best_j + 1):
        if nb >= 1:
            assert nb * math.exp(-p * (nb - 1) * logr) <= best * (1.0 + 1e-12)
    return best, best_j


def delta_seq(delta: float, ell: int) -> float:
    """delta_l = (1 + 1/l^2) * delta; decreasing from 2*delta toward delta."""
    if ell < 1:
        raise ValueError("ell must be >= 1")
    return (1.0 + 1.0 / ell ** 2) * delta


def compute_Ctilde(r: float, p: float, delta: float) -> float:
    """sup over l >= 1 of (l+1)^2 * max(r^-(p+d_{l+1}), r^-(p+d_l))^(l+1).

    The max picks the smaller exponent, d_{l+1}.  Terms are dominated by
    T(l) = (l+1)^2 r^(-p(l+1)), which decreases once l+1 > 2/(p log r), so
    scanning past that point certifies the sup; a relative outward pad covers
    rounding.
    """
    logr = math.log(r)
    lhat = max(1, math.ceil(2.0 / (p * logr)))
    best = 1.0
    for ell in range(1, 3 * lhat + 10):
        d_next = delta_seq(delta, ell + 1)
        term = (ell + 1) ** 2 * math.exp(-(p + d_next) * (ell + 1) * logr)
        best = max(best, term)
    return best * (1.0 + 1e-12)


def t_seq(consts: ScheduleConstants, ell: int) -> TDeficit:
    """Deficit of t_l = 1 - r^-(N + I + 2p(l+1)^3) / (l+1), in log space."""
    if ell < 1:
        raise ValueError("ell must be >= 1")
    logr = math.log(consts.r)
    exponent = consts.N + consts.I + 2.0 * consts.p * (ell + 1) ** 3
    return TDeficit(log_deficit=-exponent * logr - math.log(ell + 1.0), ell=ell)


def t_log_deficit_mp(consts: ScheduleConstants, ell: int, dps: int = 50) -> mp.mpf:
    """Extended-precision mirror of t_seq's log deficit."""
    with mp.workdps(dps):
        logr = mp.log(mp.mpf(consts.r))
        exponent = consts.N + consts.I + 2 * mp.mpf(consts.p) * (ell + 1) ** 3
        return -exponent * logr - mp.log(ell + 1)


def t_ratio(consts: ScheduleConstants, j: int, ell: int) -> float:
    """t_j / t_ell computed through log-space deficits."""
    lt_j = t_seq(consts, j).log_t
    lt_l = t_seq(consts, ell).log_t
    return math.exp(lt_j - lt_l)


def t_ratio_mp(consts: ScheduleConstants, j: int, ell: int, dps: int = 50) -> mp.mpf:
    """Extended-precision t_j / t_ell, for cross-checking the double path."""
    with mp.workdps(dps):
        ldj = t_log_deficit_mp(consts, j, dps=dps)
        ldl = t_log_deficit_mp(consts, ell, dps=dps)
        return mp.exp(mp.log1p(-mp.exp(ldj)) - mp.log1p(-mp.exp(ldl)))


def choose_N(
    r: float, p: float, big_i: int, crp: float, ctilde: float, t0: float, t0prime: float
) -> int:
    """Smallest integer N with r^N >= 2*Ctilde*Crp and t_1 >= max(9/10, T0, T0')."""
    logr = math.log(r)
    n_log = math.log(2.0 * ctilde * crp) / logr
    tau = max(0.9, t0, t0prime)
    # t_1 >= tau  <=>  r^-(N + I + 16 p) / 2 <= 1 - tau
    n_t1 = (-math.log(2.0 * (1.0 - tau))) / logr - big_i - 16.0 * p
    return max(0, math.ceil(n_log - 1e-12), math.ceil(n_t1 - 1e-12))


@dataclass
class ScheduleReport:
    ok: bool
    l_max: int
    min_margin: float
    violations: list

    def first_violation(self):
        return self.violations[0] if self.violations else None


def _log_diff_of_exps(la: float, lb: float) -> float:
    """log(e^la - e^lb) for la > lb."""
    return la + math.log(-math.expm1(lb - la))


def verify_schedule(consts: ScheduleConstants, l_max: int, mode: str = "double") -> ScheduleReport:
    """Check the three schedule inequalities for every stage up to l_max.

    The difficult inequality 2*Crp*(t_{l+1} - t_l) <= r^-(p+d_{l+1})j -
    r^-(p+d_l)j is compared entirely in log space for every j = 1..l+1.
    """
    if mode == "extended":
        return _verify_schedule_mp(consts, l_max)
    logr = math.log(consts.r)
    violations: list = []
    min_margin = math.inf

    def note(kind: str, ell: int, j: int | None, margin: float) -> None:
        nonlocal min_margin
        min_margin = min(min_margin, margin)
        if margin <= 0.0:
            violations.append({"kind": kind, "ell": ell, "j": j, "margin": margin})

    tau = max(0.9, consts.T0, consts.T0prime)
    log_easy = math.log(1.0 - tau)
    for ell in range(1, l_max + 1):
        ld = t_seq(consts, ell).log_deficit
        # lower bound: 1 - r^-(I + 2 ell) <= t_ell
        margin = -(consts.I + 2.0 * ell) * logr - ld
        note("seq_lower_bound", ell, None, margin - _OUT * (1.0 + abs(ld)))
        if ell == 1:
            note("easy", ell, None, log_easy - ld - _OUT * (1.0 + abs(ld)))
        ld_next = t_seq(consts, ell + 1).log_deficit
        log_lhs = math.log(2.0 * consts.Crp) + _log_diff_of_exps(ld, ld_next)
        d_l = delta_seq(consts.delta, ell)
        d_l1 = delta_seq(consts.delta, ell + 1)
        for j in range(1, ell + 2):
            log_rhs = _log_diff_of_exps(-(consts.p + d_l1) * j * logr, -(consts.p + d_l) * j * logr)
            m = log_rhs - log_lhs - _OUT * (1.0 + abs(log_rhs) + abs(log_lhs))
            note("difficult", ell, j, m)
    return ScheduleReport(ok=not violations, l_max=l_max, min_margin=min_margin, violations=violations)


def _verify_schedule_mp(consts: ScheduleConstants, l_max: int, dps: int = 50) -> ScheduleReport:
    """mpmath mirror of verify_schedule; same checks, no outward slack needed."""
    violations: list = []
    min_margin = math.inf
    with mp.workdps(dps):
        logr = mp.log(mp.mpf(consts.r))
        tau = max(0.9, consts.T0, consts.T0prime)
        log_easy = mp.log(1 - mp.mpf(tau))

        def ld_mp(ell: int) -> mp.mpf:
            expo = consts.N + consts.I + 2 * mp.mpf(consts.p) * (ell + 1) ** 3
            return -expo * logr - mp.log(ell + 1)

        def log_diff(la: mp.mpf, lb: mp.mpf) -> mp.mpf:
            return la + mp.log(-mp.expm1(lb - la))

        for ell in range(1, l_max + 1):
            ld = ld_mp(ell)
            margin = float(-(consts.I + 2 * ell) * logr - ld)
            min_margin = min(min_margin, margin)
            if margin <= 0:
                violations.append({"kind": "seq_lower_bound", "ell": ell, "j": None, "margin": margin})
            if ell == 1:
                m = float(log_easy - ld)
                min_margin = min(min_margin, m)
                if m <= 0:
                    violations.append({"kind": "easy", "ell": ell, "j": None, "margin": m})
            log_lhs = mp.log(2 * mp.mpf(consts.Crp)) + log_diff(ld, ld_mp(ell + 1))
            d_l = (1 + mp.mpf(1) / ell ** 2) * consts.delta
            d_l1 = (1 + mp.mpf(1) / (ell + 1) ** 2) * consts.delta
            for j in range(1, ell + 2):
                log_rhs = log_diff(-(consts.p + d_l1) * j * logr, -(consts.p + d_l) * j * logr)
                m = float(log_rhs - log_lhs)
                min_margin = min(min_margin, m)
                if m <= 0:
                    violations.append({"kind": "difficult", "ell": ell, "j": j, "margin": m})
    return ScheduleReport(ok=not violations, l_max=l_max, min_margin=min_margin, violations=violations)
