"""Convex 1D profile with a prescribed curvature band and its target set.

The scalar functional is f(a, b) = phi(a) + b^2/2 where phi has curvature
pinned strictly inside (lambda, Lambda) and slope asymptotics
phi'(a)/a -> lambda (a -> +inf) and -> Lambda (a -> -inf).  Only phi' and
phi'' are ever needed: the gradient target set is

    K = { ((a, b), (b, -phi'(a))) : a, b real }.

The curvature crossover is a logistic ramp of rate ``sharpness``; phi' is
normalized so phi'(0) = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class ProfileConfig:
    """Curvature band (lambda, Lambda) and crossover rate of the profile."""

    lam: float
    Lam: float
    sharpness: float = 1.0

    def __post_init__(self) -> None:
        if not (0.0 < self.lam < 1.0 < self.Lam):
            raise ValueError(f"need 0 < lambda < 1 < Lambda, got ({self.lam}, {self.Lam})")
        if not self.sharpness > 0.0:
            raise ValueError("sharpness must be positive")


@dataclass(frozen=True)
class SymMatrix2:
    """Symmetric 2x2 matrix ((a11, a12), (a12, a22))."""

    a11: float
    a12: float
    a22: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.a11) and math.isfinite(self.a12) and math.isfinite(self.a22)):
            raise ValueError("matrix entries must be finite")

    def sub(self, other: "SymMatrix2") -> "SymMatrix2":
        return SymMatrix2(self.a11 - other.a11, self.a12 - other.a12, self.a22 - other.a22)

    def frobenius(self) -> float:
        return math.sqrt(self.a11 ** 2 + 2.0 * self.a12 ** 2 + self.a22 ** 2)

    def entrywise_dist(self, other: "SymMatrix2") -> float:
        return max(abs(self.a11 - other.a11), abs(self.a12 - other.a12), abs(self.a22 - other.a22))

    def as_rows(self) -> tuple[tuple[float, float], tuple[float, float]]:
        return ((self.a11, self.a12), (self.a12, self.a22))


def combine(t: float, first: SymMatrix2, second: SymMatrix2) -> SymMatrix2:
    """t*first + (1-t)*second, with entries shared by both passed through exactly."""
    def mix(x: float, y: float) -> float:
        if x == y:
            return x
        return t * x + (1.0 - t) * y

    return SymMatrix2(mix(first.a11, second.a11), mix(first.a12, second.a12), mix(first.a22, second.a22))


def _lncosh(x: float) -> float:
    """log(cosh(x)), stable for all magnitudes."""
    ax = abs(x)
    if ax > 20.0:
        # cosh overflows near 710; beyond 20 the correction term is exact in doubles
        return ax - math.log(2.0) + math.log1p(math.exp(-2.0 * ax))
    if ax < 0.1:
        s = math.sinh(0.5 * ax)
        return math.log1p(2.0 * s * s)
    return math.log(math.cosh(ax))


def phi_dd(cfg: ProfileConfig, a: float) -> float:
    """Second derivative: lambda + (Lambda - lambda) * (1 - tanh(k a)) / 2.

    Evaluated as a logistic so the band bound stays strict until exp(2ka)
    saturates in floating point (|k a| beyond ~350).
    """
    x = 2.0 * cfg.sharpness * a
    if x > 700.0:
        sigma = 0.0
    elif x < -700.0:
        sigma = 1.0
    else:
        sigma = 1.0 / (1.0 + math.exp(x))
    return cfg.lam + (cfg.Lam - cfg.lam) * sigma


def phi_d(cfg: ProfileConfig, a: float) -> float:
    """First derivative, normalized so phi'(0) = 0.

    phi'(a) = lambda*a + (Lambda - lambda)/2 * (a - lncosh(k a)/k).
    Strictly increasing; lambda*a <= phi'(a) <= Lambda*a for a >= 0 and the
    mirrored bound for a <= 0.
    """
    k = cfg.sharpness
    return cfg.lam * a + 0.5 * (cfg.Lam - cfg.lam) * (a - _lncosh(k * a) / k)


def phi_d_inv(cfg: ProfileConfig, y: float) -> float:
    """Inverse of phi_d to |phi_d(a) - y| <= 1e-12 * max(1, |y|).

    Bracketed between y/Lambda and y/lambda, refined by Newton steps that are
    clamped to the bracket with bisection fallback.
    """
    if y == 0.0:
        return 0.0
    lo, hi = sorted((y / cfg.Lam, y / cfg.lam))
    tol = 1e-12 * max(1.0, abs(y))
    x = 0.5 * (lo + hi)
    for _ in range(200):
        f = phi_d(cfg, x) - y
        if abs(f) <= tol:
            return x
        if f > 0.0:
            hi = x
        else:
            lo = x
        nxt = x - f / phi_dd(cfg, x)
        if not (lo < nxt < hi):
            nxt = 0.5 * (lo + hi)
        x = nxt
    raise ArithmeticError(f"phi_d_inv failed to converge for y={y!r}")  # pragma: no cover


def kf_point(cfg: ProfileConfig, a: float, b: float) -> SymMatrix2:
    """Point of the gradient target set: ((a, b), (b, -phi'(a)))."""
    return SymMatrix2(a, b, -phi_d(cfg, a))


def kf_residual(cfg: ProfileConfig, X: SymMatrix2) -> float:
    """|X.a22 + phi'(X.a11)|; zero exactly on the target set."""
    return abs(X.a22 + phi_d(cfg, X.a11))
