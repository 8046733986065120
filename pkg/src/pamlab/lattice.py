"""Lattice boxes and the Anderson Hamiltonian ``kappa * Laplacian + xi`` on them.

Sites of the box ``[-r, r]^d`` (``r = ceil(R)``) are enumerated in
lexicographic order, first coordinate slowest.  With this order the origin
sits exactly in the middle of the enumeration.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from pamlab.errors import InvalidArgument


class BoundaryCondition(enum.Enum):
    """Free: jumps leaving the box are suppressed.  Zero: the walk is killed outside."""

    FREE = "free"
    ZERO = "zero"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise InvalidArgument(f"unknown boundary condition {value!r}") from None


@dataclass(frozen=True)
class BoxSpec:
    d: int
    R: float

    def __post_init__(self):
        if not isinstance(self.d, (int, np.integer)) or self.d < 1:
            raise InvalidArgument(f"dimension must be a positive integer, got {self.d!r}")
        if not self.R >= 1:
            raise InvalidArgument(f"radius must be >= 1, got {self.R!r}")

    @property
    def radius(self) -> int:
        return int(math.ceil(self.R))

    @property
    def side(self) -> int:
        return 2 * self.radius + 1

    @property
    def n_sites(self) -> int:
        return self.side**self.d

    @property
    def origin_index(self) -> int:
        return (self.n_sites - 1) // 2

    @property
    def strides(self) -> tuple:
        return tuple(self.side ** (self.d - 1 - k) for k in range(self.d))

    @cached_property
    def coords(self) -> np.ndarray:
        """``(n_sites, d)`` integer coordinates in enumeration order."""
        r = self.radius
        if self.d <= 3 or self.n_sites <= 10**6:
            grids = np.meshgrid(*([np.arange(-r, r + 1)] * self.d), indexing="ij")
            out = np.stack([g.ravel() for g in grids], axis=1)
        else:
            out = np.array(list(itertools.product(range(-r, r + 1), repeat=self.d)))
        out.setflags(write=False)
        return out

    def index_of(self, site) -> int:
        site = tuple(int(c) for c in np.atleast_1d(site))
        if len(site) != self.d:
            raise InvalidArgument(f"site {site} has wrong dimension for a {self.d}-dimensional box")
        r = self.radius
        if any(abs(c) > r for c in site):
            raise InvalidArgument(f"site {site} lies outside the box of radius {r}")
        return sum((c + r) * s for c, s in zip(site, self.strides))

    def site_of(self, index: int) -> tuple:
        return tuple(int(c) for c in self.coords[index])

    def l1_norm(self) -> np.ndarray:
        return np.abs(self.coords).sum(axis=1)

    @cached_property
    def neighbor_table(self) -> np.ndarray:
        """``(n_sites, 2d)`` neighbor indices, ``-1`` where the neighbor is outside.

        Column ``2k`` is the step ``+e_k``, column ``2k+1`` the step ``-e_k``.
        """
        n, r = self.n_sites, self.radius
        coords = self.coords
        idx = np.arange(n)
        table = np.full((n, 2 * self.d), -1, dtype=np.int64)
        for k, stride in enumerate(self.strides):
            up = coords[:, k] < r
            down = coords[:, k] > -r
            table[up, 2 * k] = idx[up] + stride
            table[down, 2 * k + 1] = idx[down] - stride
        table.setflags(write=False)
        return table

    @cached_property
    def degree(self) -> np.ndarray:
        """Number of in-box nearest neighbors per site."""
        deg = (self.neighbor_table >= 0).sum(axis=1)
        deg.setflags(write=False)
        return deg

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        table = self.neighbor_table
        rows = np.repeat(np.arange(self.n_sites), 2 * self.d)
        cols = table.ravel()
        keep = cols >= 0
        data = np.ones(int(keep.sum()))
        return sp.csr_matrix((data, (rows[keep], cols[keep])), shape=(self.n_sites, self.n_sites))

    def origin_neighbors(self) -> np.ndarray:
        return self.neighbor_table[self.origin_index].copy()


def build_box(d, R) -> BoxSpec:
    return BoxSpec(d, R)


@dataclass(frozen=True, eq=False)
class HamiltonianMatrix:
    """Symmetric operator ``kappa * Delta_R^bc + xi`` on ``l^2(Q_R)``.

    ``diagonal`` holds ``xi(x) - kappa * deg_bc(x)`` where ``deg_bc`` is ``2d``
    for zero boundary conditions and the in-box degree for free ones; every
    nearest-neighbor coupling equals ``kappa``.
    """

    box: BoxSpec
    bc: BoundaryCondition
    kappa: float
    diagonal: np.ndarray

    @property
    def offdiagonal(self) -> float:
        return self.kappa

    @property
    def n(self) -> int:
        return self.box.n_sites

    @cached_property
    def sparse(self) -> sp.csr_matrix:
        return (self.kappa * self.box.adjacency + sp.diags(self.diagonal)).tocsr()

    def toarray(self) -> np.ndarray:
        return self.sparse.toarray()

    def matvec(self, v):
        return self.sparse @ v

    def __matmul__(self, v):
        return self.matvec(v)

    @property
    def potential(self) -> np.ndarray:
        return self.diagonal + self.kappa * _laplacian_degree(self.box, self.bc)

    def norm_bound(self) -> float:
        """Cheap upper bound on the spectral norm (Gershgorin)."""
        return float(np.max(np.abs(self.diagonal)) + 2 * self.box.d * self.kappa)


def _laplacian_degree(box: BoxSpec, bc: BoundaryCondition) -> np.ndarray:
    if bc is BoundaryCondition.ZERO:
        return np.full(box.n_sites, 2 * box.d, dtype=float)
    return box.degree.astype(float)


def hamiltonian(box: BoxSpec, bc, kappa, xi) -> HamiltonianMatrix:
    """Anderson Hamiltonian for potential ``xi`` (a field or a plain array)."""
    bc = BoundaryCondition.parse(bc)
    if not kappa > 0:
        raise InvalidArgument(f"kappa must be positive, got {kappa!r}")
    values = np.asarray(getattr(xi, "values", xi), dtype=float)
    if values.shape != (box.n_sites,):
        raise InvalidArgument(f"potential has shape {values.shape}, box has {box.n_sites} sites")
    diagonal = values - kappa * _laplacian_degree(box, bc)
    diagonal.setflags(write=False)
    return HamiltonianMatrix(box, bc, float(kappa), diagonal)


def hamiltonian_stack(box: BoxSpec, bc, kappa, xi_stack) -> np.ndarray:
    """Dense ``(m, n, n)`` Hamiltonians for ``m`` potentials on the same box."""
    bc = BoundaryCondition.parse(bc)
    xi_stack = np.asarray(xi_stack, dtype=float)
    base = kappa * box.adjacency.toarray()
    base[np.diag_indices(box.n_sites)] = -kappa * _laplacian_degree(box, bc)
    out = np.broadcast_to(base, (xi_stack.shape[0],) + base.shape).copy()
    idx = np.arange(box.n_sites)
    out[:, idx, idx] += xi_stack
    return out
