"""Sampling i.i.d. potentials on boxes, order statistics and window membership."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from pamlab import rng
from pamlab.errors import DegenerateTruncationError, InvalidArgument
from pamlab.lattice import BoxSpec
from pamlab.tails import TailModel


@dataclass(frozen=True, eq=False)
class PotentialField:
    box: BoxSpec
    values: np.ndarray
    model: TailModel
    seed: int
    realization: int = 0
    conditioning: dict = field(default_factory=dict)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.box.n_sites,):
            raise InvalidArgument(f"field has {vals.shape} values for {self.box.n_sites} sites")
        if not np.all(np.isfinite(vals)) or np.any(vals < 0):
            raise InvalidArgument("potential values must be finite and nonnegative")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def origin_value(self) -> float:
        return float(self.values[self.box.origin_index])

    def restrict(self, box: BoxSpec) -> "PotentialField":
        """The same realization seen on a smaller concentric box."""
        if box.d != self.box.d or box.radius > self.box.radius:
            raise InvalidArgument("restriction box must be a concentric sub-box")
        mask = np.all(np.abs(self.box.coords) <= box.radius, axis=1)
        return PotentialField(box, self.values[mask], self.model, self.seed, self.realization, dict(self.conditioning))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{k + 1}" for k in range(self.box.d)] + ["value"])
            for site, v in zip(self.box.coords, self.values):
                w.writerow([*map(int, site), repr(float(v))])


def sample_values(box: BoxSpec, model: TailModel, seed, realization=0) -> np.ndarray:
    """Raw site values of one realization; site ``i`` uses counter position ``i``."""
    u = rng.uniforms(seed, rng.FIELD, realization, box.n_sites)
    return np.asarray(model.isf(u), dtype=float)


def sample_field(box: BoxSpec, model: TailModel, seed, realization=0) -> PotentialField:
    """I.i.d. field by inverse survival transform of counter-based uniforms."""
    return PotentialField(box, sample_values(box, model, seed, realization), model, int(seed), int(realization))


def _truncated_values(box, model, bound, pin_origin, seed, realization):
    u = rng.uniforms(seed, rng.FIELD, realization, box.n_sites)
    mass = float(model.cdf(bound))
    vals = np.minimum(np.asarray(model.ppf(u * mass), dtype=float), bound)
    o = box.origin_index
    vals[o] = float(model.isf(u[o:o + 1])[0]) if pin_origin is None else float(pin_origin)
    return vals


def sample_field_conditioned(box: BoxSpec, model: TailModel, bound, pin_origin=None, seed=0, realization=0) -> PotentialField:
    """Field with every off-origin site drawn from the law of ``xi`` given ``xi <= bound``.

    The truncated law is sampled exactly by inverse CDF on ``[0, F(bound)]``.
    The origin is pinned to ``pin_origin`` when given, otherwise unconditioned.
    """
    bound = float(bound)
    if not bound > model.support_min:
        raise DegenerateTruncationError(f"bound {bound} does not exceed the essential infimum {model.support_min}")
    if float(model.cdf(bound)) <= 0.0:
        raise DegenerateTruncationError(f"bound {bound} carries no probability mass")
    if pin_origin is not None and not (np.isfinite(pin_origin) and pin_origin >= 0):
        raise InvalidArgument("pin_origin must be finite and nonnegative")
    vals = _truncated_values(box, model, bound, pin_origin, seed, realization)
    cond = {"bound": bound, "pin_origin": None if pin_origin is None else float(pin_origin)}
    return PotentialField(box, vals, model, int(seed), int(realization), cond)


@dataclass(frozen=True)
class OrderStats:
    xi1: float
    xi2: float
    xi_hat: float
    argmax_site: int


def order_statistics(field: PotentialField) -> OrderStats:
    """Top two values and the maximum away from the origin.

    ``argmax_site`` is the first maximiser in enumeration order.
    """
    v = field.values
    if v.size < 2:
        raise InvalidArgument("order statistics need at least two sites")
    top2 = np.partition(v, -2)[-2:]
    o = field.box.origin_index
    xi_hat = max(v[:o].max(initial=-np.inf), v[o + 1:].max(initial=-np.inf))
    return OrderStats(float(top2[1]), float(top2[0]), float(xi_hat), int(np.argmax(v)))


def window_membership(field: PotentialField, window, closed="both") -> np.ndarray:
    """Indices of sites whose value lies in ``window``.

    ``window`` is a ``(lo, hi)`` pair or an object with ``lo`` and ``hi``;
    ``closed`` is one of ``both``, ``left``, ``right``, ``neither``.
    """
    lo, hi = (window.lo, window.hi) if hasattr(window, "lo") else window
    v = field.values
    left = v >= lo if closed in ("both", "left") else v > lo
    right = v <= hi if closed in ("both", "right") else v < hi
    if closed not in ("both", "left", "right", "neither"):
        raise InvalidArgument(f"bad closed={closed!r}")
    return np.flatnonzero(left & right)
