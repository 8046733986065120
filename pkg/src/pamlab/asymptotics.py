"""Closed-form large-time predictions.

Log-moment expansions, Laplace/Tauberian approximations of the cumulant,
the intermittency window and its Bernoulli intensity, the Gaussian mass
fraction, and the ageing predictors built on ``H''``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import integrate, special

from pamlab.errors import InvalidArgument
from pamlab.tails import TailModel, Weibull, cumulant_H, laplace_correction, legendre_point


@dataclass(frozen=True)
class MomentPrediction:
    t: float
    p: float
    log_moment: float
    terms: dict
    band: float = 0.0

    def to_dict(self):
        return asdict(self)


def _check_gamma(gamma):
    if not gamma > 1:
        raise InvalidArgument(f"gamma must exceed 1, got {gamma!r}")


def exweib_log_moment(gamma, p, t, d, kappa) -> MomentPrediction:
    """Expansion of ``log <u(t,0)^p>`` for Weibull tails.

    ``band`` is the size ``(pt)^((gamma-3)/(gamma-1))`` of the first omitted order.
    """
    _check_gamma(gamma)
    if not (p > 0 and t > 0):
        raise InvalidArgument("p and t must be positive")
    g = float(gamma)
    pt = p * t
    x = pt / g
    terms = {
        "leading": (g - 1) * x ** (g / (g - 1)),
        "drift": -2 * d * kappa * pt,
        "lattice": 2 * d * kappa**2 * g * x ** ((g - 2) / (g - 1)),
        "log_pt": math.log(pt),
        "gaussian": 0.5 * math.log(2 * math.pi / (g * (g - 1)) * x ** (-(g - 2) / (g - 1))),
    }
    total = math.fsum(terms.values())
    return MomentPrediction(float(t), float(p), total, terms, pt ** ((g - 3) / (g - 1)))


def tauberian_log_mgf(model: TailModel, t, include_t_factor=True) -> float:
    """``psi(t) + 0.5 log(2 pi / phi''(h_t))``, plus ``log t`` when asked."""
    lp = legendre_point(model, t)
    out = lp.psi + 0.5 * math.log(2 * math.pi / lp.phi2)
    return out + math.log(t) if include_t_factor else out


def tauberian_gap(model: TailModel, t) -> float:
    """``H(t)`` minus the with-factor approximation, free of cancellation."""
    return laplace_correction(model, t)


@dataclass(frozen=True)
class WindowSpec:
    center: float
    half_width: float

    @property
    def lo(self):
        return self.center - self.half_width

    @property
    def hi(self):
        return self.center + self.half_width

    def to_dict(self):
        return {"center": self.center, "half_width": self.half_width, "lo": self.lo, "hi": self.hi}


def window_upsilon(model: TailModel, t, a) -> WindowSpec:
    """``[h_t - a / sqrt(phi''(h_t)), h_t + a / sqrt(phi''(h_t))]``."""
    if a < 0:
        raise InvalidArgument("window parameter a must be nonnegative")
    lp = legendre_point(model, t)
    return WindowSpec(lp.h_t, a / math.sqrt(lp.phi2))


def bernoulli_intensity(model: TailModel, t, a) -> float:
    """``exp(-phi(h_t + a / sqrt(phi''(h_t))))``; ``a`` may be negative."""
    lp = legendre_point(model, t)
    h = lp.h_t + a / math.sqrt(lp.phi2)
    if h <= model.support_min:
        return float(model.fbar(model.support_min))
    return float(model.fbar(h))


def window_probability(model: TailModel, t, a) -> float:
    """``P(xi in window) = i^(-a) - i^(a)``, computed from the CDF side when that is more accurate."""
    w = window_upsilon(model, t, abs(a))
    lo = max(w.lo, model.support_min)
    fl, fh = float(model.fbar(lo)), float(model.fbar(w.hi))
    if fl < 0.5:
        return fl - fh
    return float(model.cdf(w.hi)) - float(model.cdf(lo))


def log_window_probability(model: TailModel, t, a) -> float:
    """``log P(xi in window)``, usable far into the tail where the probability underflows."""
    w = window_upsilon(model, t, abs(a))
    lo = max(w.lo, model.support_min)
    phi_lo, phi_hi = float(model.phi(lo)), float(model.phi(w.hi))
    if phi_lo > math.log(2.0):
        return -phi_lo + math.log(-math.expm1(phi_lo - phi_hi))
    return math.log(window_probability(model, t, a))


def weibull_log_intensity_expansion(gamma, t, a) -> float:
    """Three-term expansion of ``log i_t^a`` for Weibull tails (exact when ``gamma = 2``)."""
    _check_gamma(gamma)
    g = float(gamma)
    return (-(t / g) ** (g / (g - 1))
            - a * t ** (g / (2 * (g - 1))) / (g ** (1 / (2 * (g - 1))) * math.sqrt(g - 1))
            - 0.5 * a * a)


def mass_fraction_prediction(a) -> float:
    """``Phi(a) - Phi(-a) = erf(a / sqrt 2)``."""
    if a < 0:
        raise InvalidArgument("a must be nonnegative")
    return float(special.erf(a / math.sqrt(2.0)))


def a_epsilon(eps) -> float:
    """The ``a`` with ``Phi(a) - Phi(-a) = 1 - eps``."""
    if not 0 < eps < 1:
        raise InvalidArgument("eps must lie in (0, 1)")
    return float(math.sqrt(2.0) * special.erfcinv(eps))


def window_mass_fraction(model: TailModel, t, a) -> float:
    """Share of ``int e^{th - phi(h)} dh`` carried by the window, by quadrature."""
    lp = legendre_point(model, t)
    w = window_upsilon(model, t, a)
    sigma = 1.0 / math.sqrt(lp.phi2)

    def f(h):
        return math.exp(t * h - float(model.phi(h)) - lp.psi)

    lo = float(model.support_min)
    pts = [max(lo, lp.h_t - 60 * sigma), max(lo, w.lo), lp.h_t, w.hi, lp.h_t + 60 * sigma]
    pieces = []
    for x0, x1 in zip(pts[:-1], pts[1:]):
        pieces.append(integrate.quad(f, x0, x1, epsabs=0, epsrel=1e-12, limit=200)[0] if x1 > x0 else 0.0)
    left = integrate.quad(f, lo, pts[0], epsabs=0, epsrel=1e-10, limit=200)[0] if pts[0] > lo else 0.0
    right = integrate.quad(f, pts[-1], np.inf, epsabs=0, epsrel=1e-10, limit=200)[0]
    inside = pieces[1] + pieces[2]
    return inside / math.fsum(pieces + [left, right])


@dataclass(frozen=True)
class Prediction:
    value: float
    band: float


def weibg_log_conditional_tail(gamma, h, d, kappa) -> Prediction:
    """``-(h + 2d kappa)^gamma + 2 d kappa^2 gamma (h + 2d kappa)^(gamma - 2)``, band ``(h + 2d kappa)^(gamma - 3)``."""
    _check_gamma(gamma)
    x = h + 2 * d * kappa
    if not x > 0:
        raise InvalidArgument("need h + 2 d kappa > 0")
    return Prediction(-x**gamma + 2 * d * kappa**2 * gamma * x ** (gamma - 2), x ** (gamma - 3))


@dataclass
class AgeingReport:
    ages: bool
    t_grid: list
    h2: list
    scale: list
    slope: float
    detail: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def second_derivative_H(model: TailModel, t, rel_step=0.01) -> float:
    """Central second difference of ``H`` with step ``rel_step * t``."""
    dt = rel_step * t
    return (cumulant_H(model, t + dt) - 2 * cumulant_H(model, t) + cumulant_H(model, t - dt)) / dt**2


def ageing_predictor(model: TailModel, t_grid=None, rel_step=0.01, slope_tol=0.1) -> AgeingReport:
    """Trend of ``H''`` on the grid; the model ages when ``H''`` decays.

    The verdict uses the least-squares slope of ``log H''`` against ``log t``
    on the upper half of the grid: below ``-slope_tol`` counts as decay.
    """
    t = np.geomspace(10.0, 1e4, 16) if t_grid is None else np.asarray(t_grid, dtype=float)
    h2 = np.array([second_derivative_H(model, s, rel_step) for s in t])
    half = t.size // 2
    slope = float(np.polyfit(np.log(t[half:]), np.log(h2[half:]), 1)[0])
    return AgeingReport(bool(slope < -slope_tol), t.tolist(), h2.tolist(), (1 / np.sqrt(h2)).tolist(), slope,
                        {"rel_step": rel_step, "slope_tol": slope_tol})


def correlation_prediction(model: TailModel, t, s, p=1.0, d=None, kappa=None) -> float:
    """``A = exp(L(2t+s) - (L(2t) + L(2t+2s)) / 2)`` from predicted log-moments.

    ``L(T)`` is the Weibull moment expansion at ``(p, T)`` when ``d`` and
    ``kappa`` are given and the model is Weibull, otherwise the Tauberian
    approximation of ``H(pT)``.  Terms linear in ``T`` cancel.
    """
    if not p > 0:
        raise InvalidArgument("p must be positive")
    if s < 0:
        raise InvalidArgument("s must be nonnegative")
    if d is not None and kappa is not None and isinstance(model, Weibull):
        def lam(T):
            return exweib_log_moment(model.gamma, p, T, d, kappa).log_moment
    else:
        def lam(T):
            return tauberian_log_mgf(model, p * T)
    return float(math.exp(lam(2 * t + s) - 0.5 * (lam(2 * t) + lam(2 * t + 2 * s))))
