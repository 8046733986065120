"""Continuous-time random walks and Feynman-Kac Monte Carlo for the PAM."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from pamlab import mc, rng
from pamlab.errors import InfeasibleError, InvalidArgument
from pamlab.evolve import log_u_origin_batch
from pamlab.lattice import BoundaryCondition, BoxSpec
from pamlab.mc import MCEstimate
from pamlab.potential import sample_values
from pamlab.tails import cumulant_H

__all__ = ["WalkPath", "MCEstimate", "sample_walk", "fk_estimate", "annealed_moment_mc",
           "default_radius", "annealed_log_origin", "truncation_check"]

# walks are simulated in fixed blocks; block b uses stream (seed, WALK, b)
WALK_BLOCK = 4096


@dataclass(frozen=True, eq=False)
class WalkPath:
    """Jump times and visited sites of one walk up to ``horizon``.

    ``positions[0]`` is the start, ``positions[k]`` the site after the
    ``k``-th jump.  A killed walk stops at ``killed_at``.
    """

    jump_times: np.ndarray
    positions: np.ndarray
    horizon: float
    killed: bool = False
    killed_at: float | None = None

    @property
    def n_jumps(self) -> int:
        return len(self.jump_times)


def sample_walk(d, kappa, t, bc="free", box: BoxSpec | None = None, seed=0, index=0, start=None) -> WalkPath:
    """Exact path of the walk with generator ``kappa * Laplacian``.

    Without a box the walk lives on the whole lattice.  In a box, a ``free``
    walk stays put when the proposed neighbor is outside and a ``zero`` walk
    is killed there.
    """
    if t < 0:
        raise InvalidArgument("t must be nonnegative")
    if not kappa > 0:
        raise InvalidArgument("kappa must be positive")
    bc = BoundaryCondition.parse(bc)
    g = rng.stream(seed, rng.WALK, index)
    x = np.zeros(d, dtype=np.int64) if start is None else np.array(start, dtype=np.int64)
    r = None if box is None else box.radius
    times, sites = [], [x.copy()]
    clock = 0.0
    rate = 2 * d * kappa
    while True:
        clock += g.exponential(1.0 / rate)
        if clock >= t:
            break
        k = int(g.integers(2 * d))
        step = np.zeros(d, dtype=np.int64)
        step[k // 2] = 1 if k % 2 == 0 else -1
        y = x + step
        if r is not None and np.any(np.abs(y) > r):
            if bc is BoundaryCondition.ZERO:
                return WalkPath(np.array(times), np.array(sites), float(t), True, clock)
            y = x
        times.append(clock)
        sites.append(y.copy())
        x = y
    return WalkPath(np.array(times), np.array(sites).reshape(-1, d), float(t))


def _fk_block(values, table, rate, t, start, n, killing, g):
    """Weights ``exp(int_0^t xi(X_s) ds)`` for ``n`` walks, simulated in lockstep.

    The integral is accumulated as ``xi(x_0) t + sum_jumps (xi(new) - xi(old)) (t - T)``,
    which is exact for piecewise constant paths and exactly ``c t`` when
    ``xi`` is constant.
    """
    pos = np.full(n, start, dtype=np.int64)
    clock = np.zeros(n)
    integral = np.full(n, values[start] * t)
    alive = np.ones(n, dtype=bool)
    active = np.ones(n, dtype=bool)
    nn = table.shape[1]
    while active.any():
        clock += g.exponential(1.0 / rate, size=n)
        dirs = g.integers(nn, size=n)
        active &= clock < t
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        nb = table[pos[idx], dirs[idx]]
        out = nb < 0
        if killing:
            dead = idx[out]
            alive[dead] = False
            active[dead] = False
            idx, nb = idx[~out], nb[~out]
        else:
            nb = np.where(out, pos[idx], nb)
        integral[idx] += (values[nb] - values[pos[idx]]) * (t - clock[idx])
        pos[idx] = nb
    return np.where(alive, np.exp(integral), 0.0)


def fk_estimate(field, t, x=None, n_walks=10_000, bc="free", seed=0, kappa=1.0, threads=None) -> MCEstimate:
    """Monte Carlo ``u(t, x)`` for ``u0 = 1`` from the Feynman-Kac formula."""
    bc = BoundaryCondition.parse(bc)
    box = field.box
    t = float(t)
    if t < 0:
        raise InvalidArgument("t must be nonnegative")
    start = box.origin_index if x is None else box.index_of(x)
    if not kappa > 0:
        raise InvalidArgument("kappa must be positive")
    rate = 2 * box.d * float(kappa)
    table = box.neighbor_table
    values = field.values

    def work(a, b):
        block = a // WALK_BLOCK
        g = rng.stream(seed, rng.WALK, block)
        return _fk_block(values, table, rate, t, start, b - a, bc is BoundaryCondition.ZERO, g)

    if t == 0:
        return MCEstimate(1.0, 0.0, int(n_walks), int(seed))
    w = mc.chunked_map(work, int(n_walks), threads, chunk=WALK_BLOCK)
    mean, se = mc.mean_stderr(w)
    return MCEstimate(mean, se, int(n_walks), int(seed))


def default_radius(kappa, t) -> int:
    """Box radius covering the walk range: ``max(3, ceil(2 kappa t + 4 sqrt(kappa t)))``."""
    return max(3, int(math.ceil(2 * kappa * t + 4 * math.sqrt(kappa * t))))


def annealed_log_origin(model, box: BoxSpec, bc, kappa, times, n_fields, seed, threads=None, sample_box=None):
    """``log u(t, 0)`` for ``n_fields`` independent potentials, shape ``(n_fields, len(times))``.

    With ``sample_box`` the potentials are drawn on that larger box and then
    restricted, so the two boxes share realizations.
    """
    src = box if sample_box is None else sample_box
    mask = None
    if sample_box is not None:
        mask = np.all(np.abs(sample_box.coords) <= box.radius, axis=1)
    times = np.atleast_1d(np.asarray(times, dtype=float))

    def work(a, b):
        xs = np.stack([sample_values(src, model, seed, i) for i in range(a, b)])
        if mask is not None:
            xs = xs[:, mask]
        return log_u_origin_batch(box, bc, kappa, xs, times)

    chunk = max(64, min(mc.CHUNK, int(2**22 // box.n_sites**2)))
    out = mc.chunked_map(work, int(n_fields), threads, chunk=chunk)
    return out.reshape(int(n_fields), times.size)


def predicted_log_stderr(model, d, kappa, t, p, n):
    """Upper bound on the delta-method stderr from the moment sandwich."""
    log_relvar = cumulant_H(model, 2 * p * t) - 2 * cumulant_H(model, p * t) + 4 * d * kappa * p * t
    return math.exp(0.5 * (log_relvar - math.log(n)))


def annealed_moment_mc(model, box: BoxSpec | None, bc, kappa, t, p, n_fields, seed, d=None, threads=None,
                       guard=True) -> MCEstimate:
    """``log <u(t, 0)^p>`` from exact per-field solutions.

    Every potential is solved exactly, so the only randomness is that of the
    potential.  ``box=None`` selects ``default_radius`` in dimension ``d``.
    Raises ``InfeasibleError`` when the predicted log-stderr exceeds 1.
    """
    if not p > 0:
        raise InvalidArgument("p must be positive")
    t = float(t)
    if box is None:
        if d is None:
            raise InvalidArgument("give a box or a dimension")
        box = BoxSpec(int(d), default_radius(kappa, t))
    if t == 0:
        return MCEstimate(0.0, 0.0, int(n_fields), int(seed), log_domain=True)
    if guard:
        pred = predicted_log_stderr(model, box.d, kappa, t, p, n_fields)
        if pred > 1:
            raise InfeasibleError(
                f"predicted log-stderr {pred:.3g} > 1 at t={t}, p={p} with {n_fields} fields; "
                "the moment is dominated by potential values too rare to sample")
    lu = annealed_log_origin(model, box, bc, kappa, [t], n_fields, seed, threads)[:, 0]
    if np.all(lu == -np.inf):
        warnings.warn("every sampled u(t,0) vanished; the estimate is degenerate", RuntimeWarning)
    mean, se = mc.log_mean_stderr(p * lu)
    return MCEstimate(mean, se, int(n_fields), int(seed), log_domain=True)


@dataclass(frozen=True)
class TruncationCheck:
    small: MCEstimate
    large: MCEstimate
    adequate: bool


def truncation_check(model, d, bc, kappa, t, p, n_fields, seed, R=None, threads=None) -> TruncationCheck:
    """Compare the moment on radius ``R`` with radius ``2R`` using shared realizations."""
    R = default_radius(kappa, t) if R is None else int(R)
    small, large = BoxSpec(d, R), BoxSpec(d, 2 * R)
    lu_s = annealed_log_origin(model, small, bc, kappa, [t], n_fields, seed, threads, sample_box=large)[:, 0]
    lu_l = annealed_log_origin(model, large, bc, kappa, [t], n_fields, seed, threads)[:, 0]
    es = MCEstimate(*mc.log_mean_stderr(p * lu_s), int(n_fields), int(seed), True)
    el = MCEstimate(*mc.log_mean_stderr(p * lu_l), int(n_fields), int(seed), True)
    return TruncationCheck(es, el, abs(es.mean - el.mean) < max(es.stderr, el.stderr))
