"""Deterministic PAM solutions on a box.

``u(t) = exp(t H) u0`` is computed either by adaptive Runge-Kutta (DOP853)
or by the spectral expansion over a full eigenbasis.  Solutions are stored
as ``values * exp(log_scale)`` so that long times do not overflow.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from pamlab.errors import ConvergenceError, InvalidArgument, PamOverflowError
from pamlab.lattice import BoundaryCondition, BoxSpec, HamiltonianMatrix, hamiltonian_stack

log = logging.getLogger(__name__)

_LOG_MAX = math.log(np.finfo(float).max) - 1.0


@dataclass(frozen=True, eq=False)
class SolutionField:
    t: float
    values: np.ndarray
    bc: BoundaryCondition
    solver: str
    log_scale: float = 0.0

    @property
    def u(self) -> np.ndarray:
        if self.log_scale + math.log(max(float(self.values.max()), 1e-300)) > _LOG_MAX:
            raise PamOverflowError("u exceeds the floating range; use log_values")
        return self.values * math.exp(self.log_scale)

    @property
    def log_values(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.values) + self.log_scale

    def to_csv(self, path, box: BoxSpec | None = None):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["site", "value", "log_value"])
            lv = self.log_values
            for i, v in enumerate(self.values):
                site = i if box is None else " ".join(map(str, box.site_of(i)))
                val = v * math.exp(self.log_scale) if lv[i] < _LOG_MAX else float("inf")
                w.writerow([site, repr(float(val)), repr(float(lv[i]))])


def _finish(t, w, log_scale, bc, solver, log_domain):
    top = float(np.max(w))
    if top > 0:
        floor = -1e-12 * top
        if np.any(w < floor):
            raise ConvergenceError(f"solution lost positivity (min {float(w.min()):.3e})")
        if np.any(w < 0):
            log.warning("clamping %d slightly negative entries at t=%g", int(np.sum(w < 0)), t)
            w = np.maximum(w, 0.0)
        log_scale += math.log(top)
        w = w / top
    if not log_domain:
        if log_scale > _LOG_MAX:
            raise PamOverflowError(
                f"u(t={t}) reaches exp({log_scale:.1f}), beyond the floating range; pass log_domain=True")
        w = w * math.exp(log_scale)
        log_scale = 0.0
    return SolutionField(float(t), w, bc, solver, float(log_scale))


def _check_times(t_list):
    t_arr = np.atleast_1d(np.asarray(t_list, dtype=float))
    if t_arr.size == 0 or t_arr[0] < 0 or np.any(np.diff(t_arr) < 0):
        raise InvalidArgument("times must be nonnegative and nondecreasing")
    return t_arr


def solve_ode(H: HamiltonianMatrix, u0, t_list, log_domain=False, rtol=1e-11, atol=1e-14) -> list:
    """Integrate ``du/dt = H u`` and return the solution at every requested time.

    The integrated variable is ``w = exp(-s t) u`` with ``s = max xi``, an
    upper bound for the top eigenvalue, and ``w`` is renormalised to unit
    maximum at every checkpoint with the factor kept in ``log_scale``.
    """
    u0 = np.asarray(u0, dtype=float)
    if u0.shape != (H.n,) or np.any(u0 < 0):
        raise InvalidArgument("u0 must be a nonnegative vector on the box")
    times = _check_times(t_list)
    s = float(np.max(H.potential))
    A = H.sparse
    c = 2 * H.box.d * H.kappa
    # w decays at most like exp(-2 d kappa t); renormalise before it sinks towards atol
    max_leg = 2.0 / c

    def rhs(_, w):
        return A @ w - s * w

    out = []
    top = float(u0.max())
    if top <= 0:
        return [SolutionField(float(t), np.zeros(H.n), H.bc, "ode") for t in times]
    w = u0 / top
    log_scale = math.log(top)
    t_now = 0.0
    for t in times:
        while t_now < t:
            leg = min(t - t_now, max_leg)
            sol = solve_ivp(rhs, (0.0, leg), w, method="DOP853", rtol=rtol, atol=atol)
            if not sol.success:
                raise ConvergenceError(f"ODE integration failed: {sol.message}")
            w = sol.y[:, -1]
            log_scale += s * leg
            m = float(np.max(np.abs(w)))
            w = w / m
            log_scale += math.log(m)
            t_now += leg
        out.append(_finish(t, w.copy(), log_scale, H.bc, "ode", log_domain))
    return out


def solve_spectral(eig, u0, t, log_domain=False) -> SolutionField:
    """``u(t) = sum_k exp(lambda_k t) (e_k, u0) e_k`` over a complete eigenbasis."""
    if eig.eigenvectors is None or eig.eigenvalues is None:
        raise InvalidArgument("solve_spectral needs EigenData computed with want_full=True")
    t = float(t)
    if t < 0:
        raise InvalidArgument("t must be nonnegative")
    V, lam = eig.eigenvectors, eig.eigenvalues
    u0 = np.asarray(u0, dtype=float)
    coef = V.T @ u0
    lam1 = float(lam[-1])
    w = V @ (np.exp((lam - lam1) * t) * coef)
    return _finish(t, w, lam1 * t, eig.bc, "spectral", log_domain)


def log_u_origin_batch(box: BoxSpec, bc, kappa, xi_stack, times) -> np.ndarray:
    """``log u(t, 0)`` with ``u0 = 1`` for a stack of potentials.

    Uses stacked symmetric eigendecompositions; output shape is
    ``(len(xi_stack), len(times))``.
    """
    Hs = hamiltonian_stack(box, bc, kappa, xi_stack)
    lam, V = np.linalg.eigh(Hs)
    o = box.origin_index
    weight = V.sum(axis=1) * V[:, o, :]  # (e_k, 1) e_k(0)
    times = np.atleast_1d(np.asarray(times, dtype=float))
    lam1 = lam[:, -1:]
    out = np.empty((lam.shape[0], times.size))
    for j, t in enumerate(times):
        s = np.sum(np.exp((lam - lam1) * t) * weight, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            out[:, j] = lam1[:, 0] * t + np.log(s)
    return out
