"""Analytic layer for mixed p-spin mixtures.

A mixture is the polynomial nu(x) = sum_p gamma_p^2 x^p (p >= 2) that fixes
the covariance of the random landscape. Everything here is closed-form or
deterministic quadrature: mixture derivatives, the full-RSB concavity test,
the ground-state energy curve E_H(q) = int_0^q sqrt(nu''(t)) dt, the Parisi
endpoint q_P and its density, the replica-symmetric condition, the TAP and
Crisanti-Sommers free-energy expressions, and semicircle edge statistics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, optimize

from .errors import InconsistencyError, SingularityError

__all__ = [
    "Mixture",
    "RsbClassification",
    "ParisiData",
    "RsCondition",
    "classify_full_rsb",
    "energy_benchmark",
    "e_infinity",
    "q_parisi",
    "parisi_density",
    "shifted_mixture",
    "rs_condition",
    "crisanti_sommers_at_xp",
    "tap_rhs",
    "semicircle_cdf",
    "ldp_rate",
]

# log(1-q) terms blow up as q_P -> 1; beyond this the requested beta is out
# of the intended range.
_QP_CAP = 1.0 - 1e-9

_MAX_ORDER = 4


@dataclass(frozen=True)
class Mixture:
    """Interaction mixture: map p -> gamma_p with p >= 2, gamma_p >= 0.

    Zero coefficients are dropped at construction; at least one positive
    coefficient is required and the degree (largest active p) is finite by
    construction.
    """

    coeffs: dict[int, float]

    def __post_init__(self):
        cleaned: dict[int, float] = {}
        for p, g in self.coeffs.items():
            if not isinstance(p, (int, np.integer)) or isinstance(p, bool):
                raise ValueError(f"degree must be an integer, got {p!r}")
            g = float(g)
            if not math.isfinite(g):
                raise ValueError(f"gamma_{p} must be finite, got {g!r}")
            if g < 0:
                raise ValueError(f"gamma_{p} must be >= 0, got {g}")
            if int(p) < 2:
                raise ValueError(f"p must be >= 2, got {p}")
            if g > 0:
                cleaned[int(p)] = g
        if not cleaned:
            raise ValueError("mixture needs at least one positive gamma_p")
        object.__setattr__(self, "coeffs", dict(sorted(cleaned.items())))

    @property
    def degree(self) -> int:
        return max(self.coeffs)

    @property
    def degrees(self) -> tuple[int, ...]:
        return tuple(self.coeffs)

    @property
    def is_pure(self) -> bool:
        return len(self.coeffs) == 1

    def gamma(self, p: int) -> float:
        return self.coeffs.get(p, 0.0)

    def nu(self, q: float, order: int = 0) -> float:
        """Evaluate d^order/dq^order of sum_p gamma_p^2 q^p, exactly.

        q must lie in [0, 1] and order in 0..4.
        """
        if not 0.0 <= q <= 1.0:
            raise ValueError(f"q must be in [0, 1], got {q}")
        if order not in range(_MAX_ORDER + 1):
            raise ValueError(f"order must be in 0..{_MAX_ORDER}, got {order}")
        total = 0.0
        for p, g in self.coeffs.items():
            if p < order:
                continue
            c = g * g * math.perm(p, order)
            e = p - order
            total += c * (q**e if e else 1.0)
        return total

    @classmethod
    def parse(cls, text: str) -> "Mixture":
        """Parse the `p:gamma_p` comma list, e.g. ``2:1.0,4:0.25``."""
        coeffs: dict[int, float] = {}
        for item in text.strip().split(","):
            item = item.strip()
            if not item:
                raise ValueError(f"empty entry in mixture string {text!r}")
            head, sep, tail = item.partition(":")
            if not sep:
                raise ValueError(f"expected p:gamma in {item!r}")
            try:
                p = int(head)
            except ValueError:
                raise ValueError(f"p must be an integer in {item!r}") from None
            try:
                g = float(tail)
            except ValueError:
                raise ValueError(f"gamma must be a number in {item!r}") from None
            if p < 2:
                raise ValueError(f"p must be >= 2 in {item!r}")
            if not math.isfinite(g):
                raise ValueError(f"gamma must be finite in {item!r}")
            if p in coeffs:
                raise ValueError(f"duplicate degree p={p} in {text!r}")
            coeffs[p] = g
        return cls(coeffs)

    def text(self) -> str:
        """Canonical string form, inverse of :meth:`parse`."""
        return ",".join(f"{p}:{g!r}" for p, g in self.coeffs.items())

    def __str__(self) -> str:
        return self.text()


@dataclass(frozen=True)
class RsbClassification:
    """Outcome of the concavity test for nu''(q)^(-1/2) on (0, 1]."""

    is_full_rsb: bool
    margin: float  # min over the grid of -f'' where f = nu''^(-1/2)
    grid_size: int


@dataclass(frozen=True)
class ParisiData:
    """Endpoint q_P and overlap density for a full-RSB mixture at beta."""

    beta: float
    q_p: float
    density_at: Callable[[float], float] = field(repr=False)


@dataclass(frozen=True)
class RsCondition:
    """Grid maximum of g(s) = beta^2 nu_qP(s) + log(1-s) + s over (0, 1)."""

    holds: bool
    worst: float
    argmax_s: float


def classify_full_rsb(
    mixture: Mixture, grid_size: int = 10_000, tol: float = 1e-12
) -> RsbClassification:
    """Decide whether nu''(q)^(-1/2) is concave on (0, 1].

    Uses the closed-form second derivative
    f''(q) = (1/2) nu''^(-5/2) [ (3/2) nu'''^2 - nu'' nu'''' ],
    so the test reduces to the sign of (3/2) nu'''^2 - nu'' nu'''' on a grid.
    """
    if grid_size < 100:
        raise ValueError(f"grid_size must be >= 100, got {grid_size}")
    qs = np.arange(1, grid_size + 1, dtype=np.float64) / grid_size
    margin = math.inf
    for q in qs:
        d2 = mixture.nu(q, 2)
        if d2 == 0.0:
            raise SingularityError(f"nu''({q}) = 0; concavity test undefined there")
        d3 = mixture.nu(q, 3)
        d4 = mixture.nu(q, 4)
        f2 = 0.5 * d2**-2.5 * (1.5 * d3 * d3 - d2 * d4)
        margin = min(margin, -f2)
    return RsbClassification(is_full_rsb=margin >= -tol, margin=margin, grid_size=grid_size)


def energy_benchmark(mixture: Mixture, q: float) -> float:
    """Ground-state energy curve E_H(q) = int_0^q sqrt(nu''(t)) dt."""
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must be in [0, 1], got {q}")
    if q == 0.0:
        return 0.0
    val, _ = integrate.quad(
        lambda t: math.sqrt(mixture.nu(t, 2)), 0.0, q, epsabs=1e-10, limit=200
    )
    return val


def e_infinity(p: int) -> float:
    """Threshold energy 2 sqrt((p-1)/p) of the pure p-spin model."""
    if not isinstance(p, (int, np.integer)) or isinstance(p, bool) or p < 2:
        raise ValueError(f"p must be an integer >= 2, got {p!r}")
    return 2.0 * math.sqrt((p - 1) / p)


def _rs_threshold(mixture: Mixture) -> float:
    """Largest beta with q_P = 0, i.e. nu''(0)^(-1/2) (inf when nu''(0)=0)."""
    d2_0 = mixture.nu(0.0, 2)
    return math.inf if d2_0 == 0.0 else d2_0**-0.5


def q_parisi(mixture: Mixture, beta: float) -> ParisiData:
    """Endpoint of the overlap support: root of nu''(q)^(-1/2) = beta (1-q).

    Below the threshold beta <= nu''(0)^(-1/2) the endpoint is 0. Above it
    the root is bracketed on (0, 1) and bisected to 1e-12.
    """
    if beta <= 0:
        raise ValueError(f"beta must be > 0, got {beta}")
    if beta <= _rs_threshold(mixture):
        qp = 0.0
    else:

        def resid(q: float) -> float:
            return mixture.nu(q, 2) ** -0.5 - beta * (1.0 - q)

        lo, hi = 0.0, 1.0 - 1e-14
        if not resid(lo) < 0.0 < resid(hi):
            raise InconsistencyError(
                f"no sign change for the q_P equation on (0,1) at beta={beta}"
            )
        qp = optimize.bisect(resid, lo, hi, xtol=1e-12)
        if qp > _QP_CAP:
            raise ValueError(
                f"q_P = {qp} too close to 1 (beta={beta} out of intended range)"
            )

    def density_at(q: float) -> float:
        return parisi_density(mixture, beta, q)

    return ParisiData(beta=beta, q_p=qp, density_at=density_at)


def parisi_density(mixture: Mixture, beta: float, q: float) -> float:
    """Overlap density x_P(q) = nu'''(q) / (2 beta nu''(q)^(3/2)) on [0, q_P)."""
    qp = q_parisi(mixture, beta).q_p
    if not 0.0 <= q < qp:
        raise ValueError(f"q={q} outside the density domain [0, {qp})")
    return mixture.nu(q, 3) / (2.0 * beta * mixture.nu(q, 2) ** 1.5)


def shifted_mixture(mixture: Mixture, q: float) -> Callable[[float, int], float]:
    """Recentred mixture nu_q(s) = nu(q+(1-q)s) - nu(q) - (1-q) nu'(q) s.

    Returns a callable ``(s, order=0)`` giving nu_q and its first two
    s-derivatives. By construction nu_q(0) = 0 and nu_q'(0) = 0 exactly.
    """
    if not 0.0 <= q < 1.0:
        raise ValueError(f"q must be in [0, 1), got {q}")
    r = 1.0 - q
    nu_at_q = mixture.nu(q, 0)
    d1_at_q = mixture.nu(q, 1)

    def nu_q(s: float, order: int = 0) -> float:
        u = q + r * s
        if order == 0:
            return mixture.nu(u, 0) - nu_at_q - r * d1_at_q * s
        if order == 1:
            return r * (mixture.nu(u, 1) - d1_at_q)
        if order == 2:
            return r * r * mixture.nu(u, 2)
        raise ValueError(f"order must be in 0..2, got {order}")

    return nu_q


def rs_condition(mixture: Mixture, beta: float, grid_size: int = 2000) -> RsCondition:
    """Check g(s) = beta^2 nu_qP(s) + log(1-s) + s < 0 on a grid of (0, 1).

    g(0) = 0 at the excluded endpoint and g -> -inf as s -> 1, so the grid
    covers s = 1/grid_size .. 1 - 1/grid_size.
    """
    if grid_size < 1000:
        raise ValueError(f"grid_size must be >= 1000, got {grid_size}")
    qp = q_parisi(mixture, beta).q_p
    nu_q = shifted_mixture(mixture, qp)
    b2 = beta * beta
    worst = -math.inf
    argmax = 0.0
    for i in range(1, grid_size):
        s = i / grid_size
        g = b2 * nu_q(s) + math.log1p(-s) + s
        if g > worst:
            worst, argmax = g, s
    return RsCondition(holds=worst < 0.0, worst=worst, argmax_s=argmax)


def crisanti_sommers_at_xp(mixture: Mixture, beta: float) -> float:
    """Free-energy functional evaluated at the explicit overlap distribution.

    P = (1/2) [ beta int_0^qP eta(q) nu'(q) dq + beta^2 (nu(1) - nu(qP))
                + beta int_0^qP sqrt(nu''(q)) dq + log(1 - qP) ],
    with eta(q) = nu'''(q) / (2 nu''(q)^(3/2)). When q_P = 0 this reduces to
    the replica-symmetric value beta^2 nu(1) / 2.
    """
    if beta <= 0:
        raise ValueError(f"beta must be > 0, got {beta}")
    qp = q_parisi(mixture, beta).q_p
    if qp == 0.0:
        return 0.5 * beta * beta * mixture.nu(1.0)

    def eta_nu1(q: float) -> float:
        return mixture.nu(q, 3) / (2.0 * mixture.nu(q, 2) ** 1.5) * mixture.nu(q, 1)

    term1, _ = integrate.quad(eta_nu1, 0.0, qp, epsabs=1e-10, limit=200)
    term2 = beta * beta * (mixture.nu(1.0) - mixture.nu(qp))
    term3 = beta * energy_benchmark(mixture, qp)
    term4 = math.log1p(-qp)
    return 0.5 * (beta * term1 + term2 + term3 + term4)


def tap_rhs(mixture: Mixture, beta: float) -> float:
    """Free-energy lower bound: ground-state term + entropy + recentred RS part.

    beta int_0^qP sqrt(nu'') + (1/2) log(1-qP) + (1/2) beta^2 nu_qP(1).
    """
    if beta <= 0:
        raise ValueError(f"beta must be > 0, got {beta}")
    qp = q_parisi(mixture, beta).q_p
    nu_q = shifted_mixture(mixture, qp)
    return (
        beta * energy_benchmark(mixture, qp)
        + 0.5 * math.log1p(-qp)
        + 0.5 * beta * beta * nu_q(1.0)
    )


def semicircle_cdf(t):
    """CDF of the semicircle law on [-2, 2]; accepts scalars or arrays."""
    t = np.asarray(t, dtype=np.float64)
    x = np.clip(t, -2.0, 2.0)
    val = 0.5 + x * np.sqrt(4.0 - x * x) / (4.0 * np.pi) + np.arcsin(x / 2.0) / np.pi
    val = np.clip(val, 0.0, 1.0)
    return float(val) if val.ndim == 0 else val


def ldp_rate(t: float) -> float:
    """Large-deviation rate for the smallest eigenvalue leaving the bulk.

    J(t) = int_t^{-2} sqrt(s^2/4 - 1) ds for t <= -2 (closed form below) and
    +inf for t > -2.
    """
    if t > -2.0:
        return math.inf
    if t == -2.0:
        return 0.0
    a = -t
    root = math.sqrt(t * t - 4.0)
    return a * root / 4.0 - math.log((a + root) / 2.0)
