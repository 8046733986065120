"""Tail calculus for the marginal law of the potential.

For a tail ``Fbar(h) = P(xi > h)`` we work with ``phi = -log Fbar`` and its
first two derivatives, the cumulant generating function
``H(t) = log <exp(t xi)>`` and the Legendre point ``h_t`` maximising
``t h - phi(h)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from pamlab.errors import DomainError, InfiniteCumulantError, InvalidArgument, NoStationaryPointError

_SQRT2PI = math.sqrt(2.0 * math.pi)

# half-width of the Laplace window in units of 1/sqrt(phi''(h_t)); exp(-40**2/2) underflows
_LAPLACE_WIDTH = 40.0


class TailModel:
    """Common interface of the three tail families.

    Subclasses provide ``phi``, ``phi1``, ``phi2``, inverse survival and
    inverse CDF maps.  ``support_min`` is the essential infimum.
    """

    support_min = 0.0
    finite_cumulant = True
    phi_convex = True

    def _check(self, h):
        h = np.asarray(h, dtype=float)
        if np.any(~(h >= self.support_min)):
            raise DomainError(f"{self!r}: h={h} outside support [{self.support_min}, inf)")
        return h

    def fbar(self, h):
        return np.exp(-self.phi(h))

    def cdf(self, h):
        return -np.expm1(-self.phi(h))

    def remainder3(self, h, h0):
        """``phi(h)`` minus its second-order Taylor polynomial at ``h0``."""
        dh = h - h0
        return self.phi(h) - self.phi(h0) - self.phi1(h0) * dh - 0.5 * self.phi2(h0) * dh * dh

    def to_dict(self):
        raise NotImplementedError


@dataclass(frozen=True)
class Weibull(TailModel):
    """``Fbar(h) = exp(-h**gamma)`` on ``[0, inf)``."""

    gamma: float

    def __post_init__(self):
        if not self.gamma > 1:
            raise InvalidArgument(f"Weibull shape must exceed 1, got {self.gamma!r}")

    def phi(self, h):
        return self._check(h) ** self.gamma

    def phi1(self, h):
        g = self.gamma
        return g * self._check(h) ** (g - 1)

    def phi2(self, h):
        g = self.gamma
        with np.errstate(divide="ignore"):
            return g * (g - 1) * self._check(h) ** (g - 2)

    def isf(self, u):
        return (-np.log(u)) ** (1.0 / self.gamma)

    def ppf(self, p):
        return (-np.log1p(-np.asarray(p, dtype=float))) ** (1.0 / self.gamma)

    def remainder3(self, h, h0):
        # h0**g * [(1+x)**g - 1 - g x - g(g-1)/2 x**2]; binomial series near x = 0
        g = self.gamma
        x = (float(h) - h0) / h0
        # the series terminates for integer gamma, so it is exact for any x there
        if abs(x) < 0.5 or (float(g).is_integer() and x > -1):
            total, coef, k = 0.0, g * (g - 1) / 2.0, 2
            xk = x * x
            while True:
                coef *= (g - k) / (k + 1)
                k += 1
                xk *= x
                term = coef * xk
                total += term
                if coef == 0.0 or abs(term) <= 1e-17 * abs(total) or k > 400:
                    break
            return h0**g * total
        return h0**g * ((1 + x) ** g - 1 - g * x - 0.5 * g * (g - 1) * x * x)

    def to_dict(self):
        return {"family": "weibull", "gamma": self.gamma}


@dataclass(frozen=True)
class DoubleExponential(TailModel):
    """``Fbar(h) = exp(-exp(h / rho))`` for ``h >= 0``.

    The remaining mass ``1 - exp(-1)`` sits at 0 so that the law is
    nonnegative with essential infimum 0.
    """

    rho: float

    def __post_init__(self):
        if not self.rho > 0:
            raise InvalidArgument(f"rho must be positive, got {self.rho!r}")

    def phi(self, h):
        with np.errstate(over="ignore"):
            return np.exp(self._check(h) / self.rho)

    def phi1(self, h):
        return self.phi(h) / self.rho

    def phi2(self, h):
        return self.phi(h) / self.rho**2

    def isf(self, u):
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self.rho * np.log(-np.log(u))
        return np.where(np.asarray(u) > math.exp(-1.0), 0.0, out)

    def ppf(self, p):
        p = np.asarray(p, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self.rho * np.log(-np.log1p(-p))
        return np.where(p < -math.expm1(-1.0), 0.0, out)

    def to_dict(self):
        return {"family": "double_exponential", "rho": self.rho}


@dataclass(frozen=True)
class Pareto(TailModel):
    """``Fbar(h) = h**-beta`` on ``[1, inf)``; every exponential moment is infinite."""

    beta: float
    support_min = 1.0
    finite_cumulant = False
    phi_convex = False

    def __post_init__(self):
        if not self.beta > 0:
            raise InvalidArgument(f"beta must be positive, got {self.beta!r}")

    def phi(self, h):
        return self.beta * np.log(self._check(h))

    def phi1(self, h):
        return self.beta / self._check(h)

    def phi2(self, h):
        return -self.beta / self._check(h) ** 2

    def isf(self, u):
        return np.asarray(u, dtype=float) ** (-1.0 / self.beta)

    def ppf(self, p):
        return np.exp(-np.log1p(-np.asarray(p, dtype=float)) / self.beta)

    def to_dict(self):
        return {"family": "pareto", "beta": self.beta}


def model_from_dict(spec):
    family = spec["family"]
    if family == "weibull":
        return Weibull(spec["gamma"])
    if family == "double_exponential":
        return DoubleExponential(spec["rho"])
    if family == "pareto":
        return Pareto(spec["beta"])
    raise InvalidArgument(f"unknown tail family {family!r}")


_WHICH = {"fbar": "fbar", "phi": "phi", "phi1": "phi1", "phi2": "phi2"}


def tail_value(model: TailModel, h, which="fbar"):
    """Closed-form ``Fbar``, ``phi``, ``phi'`` or ``phi''`` at ``h``."""
    try:
        fn = getattr(model, _WHICH[which])
    except KeyError:
        raise InvalidArgument(f"which must be one of {sorted(_WHICH)}, got {which!r}") from None
    out = fn(h)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class LegendrePoint:
    t: float
    h_t: float
    psi: float
    phi2: float


def legendre_point(model: TailModel, t) -> LegendrePoint:
    """Maximiser ``h_t`` of ``t h - phi(h)`` via safeguarded Newton on ``phi'(h) = t``."""
    t = float(t)
    if not model.phi_convex:
        raise NoStationaryPointError(f"{model!r}: phi is not convex, no unique Legendre point")
    lo = float(model.support_min)
    if not t > model.phi1(lo):
        raise NoStationaryPointError(f"{model!r}: t={t} gives no interior stationary point")
    hi = max(1.0, 2.0 * lo)
    while model.phi1(hi) <= t:
        lo, hi = hi, 2.0 * hi
        if hi > 1e300:
            raise NoStationaryPointError(f"{model!r}: no root of phi'(h) = {t}")
    h = 0.5 * (lo + hi)
    for _ in range(500):
        f = float(model.phi1(h)) - t
        if f > 0:
            hi = h
        elif f < 0:
            lo = h
        else:
            break
        step = f / float(model.phi2(h))
        nxt = h - step
        if not lo < nxt < hi:
            nxt = 0.5 * (lo + hi)
        if abs(nxt - h) <= 2e-16 * abs(h) or hi - lo <= 4e-16 * hi:
            h = nxt
            break
        h = nxt
    phi1 = float(model.phi1(h))
    if abs(phi1 - t) > 1e-12 * t:
        raise NoStationaryPointError(f"{model!r}: Legendre solve failed at t={t} (phi'={phi1})")
    phi2 = float(model.phi2(h))
    if not phi2 > 0:
        raise NoStationaryPointError(f"{model!r}: phi'' <= 0 at h_t={h}")
    return LegendrePoint(t=t, h_t=h, psi=t * h - float(model.phi(h)), phi2=phi2)


def _laplace_delta(model: TailModel, lp: LegendrePoint) -> float:
    """``Delta`` with ``<exp(t xi)> = t exp(psi) sqrt(2 pi / phi'') (1 + Delta)``.

    The integral ``J = int exp(t h - phi(h) - psi) dh`` is split as its
    Gaussian approximation ``J_g`` plus a difference integral whose integrand
    is formed from the third-order Taylor remainder, so ``Delta`` keeps full
    relative precision even when it is far below machine epsilon.
    """
    t, h0, curv = lp.t, lp.h_t, lp.phi2
    sigma = 1.0 / math.sqrt(curv)
    jg = _SQRT2PI * sigma
    lo = float(model.support_min) if model.support_min > 0 else 0.0
    a = max(lo, h0 - _LAPLACE_WIDTH * sigma)
    b = h0 + _LAPLACE_WIDTH * sigma

    def integrand(h):
        q = -0.5 * curv * (h - h0) ** 2
        r = float(model.remainder3(h, h0))
        if abs(r) < 1.0:
            return math.exp(q) * math.expm1(-r)
        return math.exp(q - r) - math.exp(q)

    with warnings.catch_warnings():
        # the requested tolerance sits at roundoff level by design
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        diff, _ = integrate.quad(integrand, a, b, points=[h0], epsabs=1e-17 * jg, epsrel=1e-13, limit=500)

    def g(h):
        return t * h - float(model.phi(h)) - lp.psi

    # concavity of g: int_b^inf e^g <= e^{g(b)}/|g'(b)|, same on the left of a
    outside = math.exp(g(b)) / (float(model.phi1(b)) - t)
    if a > lo:
        outside += math.exp(g(a)) / (t - float(model.phi1(a)))
    gauss_out = 0.5 * jg * (special.erfc((h0 - a) / (sigma * math.sqrt(2))) + special.erfc((b - h0) / (sigma * math.sqrt(2))))
    atom = math.exp(-lp.psi) / (t * jg)
    return (diff + outside - gauss_out) / jg + atom


def laplace_correction(model: TailModel, t) -> float:
    """``H(t) - [psi(t) + log t + 0.5 log(2 pi / phi''(h_t))]`` without cancellation."""
    if not model.finite_cumulant:
        raise InfiniteCumulantError(f"{model!r} has infinite exponential moments")
    lp = legendre_point(model, t)
    return math.log1p(_laplace_delta(model, lp))


def cumulant_H(model: TailModel, t) -> float:
    """``H(t) = log <exp(t xi)>`` by quadrature of ``1 + t int_0^inf e^{th} Fbar(h) dh``."""
    if not model.finite_cumulant:
        raise InfiniteCumulantError(f"{model!r} has infinite exponential moments")
    t = float(t)
    if t < 0:
        raise DomainError("cumulant_H is only provided for t >= 0")
    if t == 0:
        return 0.0
    try:
        lp = legendre_point(model, t)
    except NoStationaryPointError:
        return _cumulant_direct(model, t)
    delta = _laplace_delta(model, lp)
    return lp.psi + math.log(t) + math.log(_SQRT2PI / math.sqrt(lp.phi2)) + math.log1p(delta)


def _cumulant_direct(model, t):
    val, _ = integrate.quad(lambda h: math.exp(t * h - float(model.phi(h))), 0.0, np.inf, epsabs=0, epsrel=1e-13, limit=500)
    return math.log1p(t * val)


@dataclass
class DiagnosticReport:
    name: str
    passed: bool
    grid: list
    values: list
    detail: dict = field(default_factory=dict)

    def to_dict(self):
        return {"name": self.name, "passed": bool(self.passed), "grid": list(map(float, self.grid)),
                "values": list(map(float, self.values)), "detail": self.detail}


def _tail_decreasing(values, frac=0.25):
    tail = np.asarray(values)[-max(2, int(len(values) * frac)):]
    return bool(np.all(np.diff(tail) < 0))


def check_assumption_fstar(model: TailModel, alpha, d, kappa, h_grid, level=-30.0) -> DiagnosticReport:
    """Finite-grid check of ``Fbar(h) Fbar(h^alpha) = o(Fbar(h + 2 d kappa))``.

    Passes when the log-ratio is strictly decreasing over the last quarter of
    the grid and has dropped below ``level`` at its end.
    """
    if not 0 < alpha < 1:
        raise InvalidArgument("alpha must lie in (0, 1)")
    h = np.asarray(h_grid, dtype=float)
    if np.any(np.diff(h) <= 0) or h[0] < 1:
        raise InvalidArgument("h_grid must be increasing and >= 1")
    c = 2 * d * kappa
    with np.errstate(over="ignore", invalid="ignore"):
        log_ratio = -model.phi(h) - model.phi(h**alpha) + model.phi(h + c)
    finite = bool(np.all(np.isfinite(log_ratio)))
    passed = finite and _tail_decreasing(log_ratio) and log_ratio[-1] < level
    return DiagnosticReport("assumption_fstar", passed, h.tolist(), log_ratio.tolist(),
                            {"alpha": alpha, "shift": c, "level": level, "finite": finite})


def check_condition_b(model: TailModel, t_grid, a, ratio_tol=1e-3, small=1e-2) -> DiagnosticReport:
    """Self-neglecting check for ``f(t) = 1 / sqrt(phi''(h_t))``.

    Passes when ``f(t + a f(t)) / f(t)`` is within ``ratio_tol`` of 1 at the
    end of the grid and ``f(t)/t`` decreases to below ``small``.
    """
    t = np.asarray(t_grid, dtype=float)
    if np.any(np.diff(t) <= 0):
        raise InvalidArgument("t_grid must be increasing")

    def f(s):
        return 1.0 / math.sqrt(legendre_point(model, s).phi2)

    ft = np.array([f(s) for s in t])
    ratios = np.array([f(s + a * fs) / fs for s, fs in zip(t, ft)])
    f_over_t = ft / t
    passed = abs(ratios[-1] - 1) <= ratio_tol and f_over_t[-1] < small and _tail_decreasing(f_over_t)
    return DiagnosticReport("condition_b", bool(passed), t.tolist(), ratios.tolist(),
                            {"a": a, "f_over_t": f_over_t.tolist(), "ratio_tol": ratio_tol})
