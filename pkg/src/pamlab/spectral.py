"""Principal eigenpairs, the exit functional and its series bounds.

The exit functional at spectral parameter ``h`` is

    E(h) = kappa * sum_{y ~ 0} E_y exp(int_0^{tau_0} (xi(X_s) - h) ds),

where ``tau_0`` is the hitting time of the origin.  Instead of simulating
walks it is obtained from the boundary problem
``kappa Delta v + (xi - h) v = 0`` off the origin with ``v(0) = 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import stats
from scipy.special import gammaln

from pamlab import mc
from pamlab.errors import ConvergenceError, DomainError, InvalidArgument, PreconditionError
from pamlab.lattice import BoundaryCondition, BoxSpec, HamiltonianMatrix, _laplacian_degree
from pamlab.potential import order_statistics, sample_field_conditioned, _truncated_values

DENSE_LIMIT = 4096


@dataclass(frozen=True, eq=False)
class EigenData:
    lambda1: float
    e1: np.ndarray
    gap: float
    bc: BoundaryCondition
    eigenvalues: np.ndarray | None = None
    eigenvectors: np.ndarray | None = None
    residual: float = 0.0
    method: str = "dense"

    @property
    def has_full_spectrum(self) -> bool:
        return self.eigenvectors is not None


def _perron(v):
    v = v if v.sum() >= 0 else -v
    v = np.abs(v)
    return v / np.linalg.norm(v)


def principal_eigenpair(H: HamiltonianMatrix, want_full=False, method="auto", max_iter=200_000) -> EigenData:
    """Largest eigenvalue of ``H`` with its positive unit eigenvector.

    ``method``: ``auto`` uses a dense symmetric solve up to ``DENSE_LIMIT``
    sites and Lanczos beyond; ``power`` runs shifted power iteration.
    """
    n = H.n
    norm = H.norm_bound()
    if want_full:
        if n > DENSE_LIMIT:
            raise InvalidArgument(f"full spectrum limited to {DENSE_LIMIT} sites, box has {n}")
        w, V = np.linalg.eigh(H.toarray())
        e1 = _perron(V[:, -1])
        gap = float(w[-1] - w[-2]) if n > 1 else float("nan")
        V = V.copy()
        V[:, -1] = e1
        return EigenData(float(w[-1]), e1, gap, H.bc, w, V, _residual(H, w[-1], e1), "dense")
    if method == "power":
        return _power_iteration(H, norm, max_iter)
    if method not in ("auto", "dense", "lanczos"):
        raise InvalidArgument(f"unknown method {method!r}")
    if method == "dense" or (method == "auto" and n <= DENSE_LIMIT):
        w, V = sla.eigh(H.toarray(), subset_by_index=[max(n - 2, 0), n - 1])
        e1 = _perron(V[:, -1])
        gap = float(w[-1] - w[-2]) if n > 1 else float("nan")
        return EigenData(float(w[-1]), e1, gap, H.bc, residual=_residual(H, w[-1], e1), method="dense")
    w, V = spla.eigsh(H.sparse, k=2, which="LA", tol=1e-14, v0=np.ones(n))
    order = np.argsort(w)
    w, V = w[order], V[:, order]
    e1 = _perron(V[:, -1])
    lam = float(e1 @ H.matvec(e1))
    res = _residual(H, lam, e1)
    if res > 1e-10 * norm:
        raise ConvergenceError(f"Lanczos residual {res:.3e} above tolerance", residual=res)
    return EigenData(lam, e1, float(w[-1] - w[-2]), H.bc, residual=res, method="lanczos")


def _residual(H, lam, v):
    return float(np.linalg.norm(H.matvec(v) - lam * v))


def _power_iteration(H, norm, max_iter):
    shift = float(np.max(np.abs(H.diagonal)) + 2 * H.box.d * H.kappa)
    A = H.sparse + shift * sp.identity(H.n, format="csr")
    v = np.full(H.n, 1.0 / math.sqrt(H.n))
    mu_prev = -np.inf
    res = np.inf
    for it in range(1, max_iter + 1):
        w = A @ v
        mu = float(v @ w)
        v = w / np.linalg.norm(w)
        if abs(mu - mu_prev) < 1e-13:
            res = _residual(H, mu - shift, v)
            if res <= 1e-10 * norm:
                lam = float(v @ H.matvec(v))
                return EigenData(lam, _perron(v), float("nan"), H.bc, residual=res, method="power")
        mu_prev = mu
    raise ConvergenceError(f"power iteration did not converge in {max_iter} steps (residual {res:.3e})",
                           residual=res, iterations=max_iter)


class ExitSystem:
    """Linear system ``M(h) v = b`` on the box minus the origin.

    ``M(h) = diag(h - xi + kappa deg) - kappa A`` restricted to the interior
    sites and ``b = kappa * 1[x ~ 0]``.  ``M(h)`` is positive definite
    exactly when ``h`` exceeds the top eigenvalue of the Hamiltonian with the
    origin removed.
    """

    def __init__(self, box: BoxSpec, bc, kappa, xi):
        self.box = box
        self.bc = BoundaryCondition.parse(bc)
        self.kappa = float(kappa)
        xi = np.asarray(getattr(xi, "values", xi), dtype=float)
        o = box.origin_index
        self.keep = np.r_[0:o, o + 1:box.n_sites]
        self.base_diag = (-xi + self.kappa * _laplacian_degree(box, self.bc))[self.keep]
        A = box.adjacency
        self.A_int = A[self.keep][:, self.keep].tocsr()
        self.b = self.kappa * np.asarray(A[self.keep, o].todense()).ravel()
        nbr = box.origin_neighbors()
        nbr = nbr[nbr >= 0]
        # positions of origin neighbors inside the interior enumeration
        self.nbr_pos = np.where(nbr > o, nbr - 1, nbr)
        self.dense = box.n_sites - 1 <= DENSE_LIMIT
        if self.dense:
            self.A_dense = self.A_int.toarray()

    def _factor(self, h):
        if self.dense:
            M = -self.kappa * self.A_dense
            M[np.diag_indices_from(M)] += h + self.base_diag
            try:
                cf = sla.cho_factor(M, lower=True, check_finite=False)
            except np.linalg.LinAlgError:
                raise DomainError(f"h={h} too small: the exit problem is not positive definite") from None
            return lambda rhs: sla.cho_solve(cf, rhs, check_finite=False)
        M = (sp.diags(h + self.base_diag) - self.kappa * self.A_int).tocsc()
        lu = spla.splu(M)
        return lu.solve

    def solve(self, h, n_derivs=0):
        """Vectors ``n! M^{-(n+1)} b`` for ``n = 0..n_derivs``, i.e. ``(-1)^n d^n v / dh^n``."""
        solve = self._factor(float(h))
        w = solve(self.b)
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise DomainError(f"h={h} too small: exit problem has a non-positive solution")
        out = [w]
        for k in range(1, n_derivs + 1):
            w = solve(w)
            out.append(math.factorial(k) * w)
        return out

    def value(self, h, n_derivs=0):
        """``(-1)^n E^{(n)}(h)`` for ``n = 0..n_derivs``."""
        vs = self.solve(h, n_derivs)
        return np.array([self.kappa * v[self.nbr_pos].sum() for v in vs])

    def at(self, index, h, n_derivs=0):
        """Per-site entries ``(-1)^n d^n v(x) / dh^n`` at box index ``index``."""
        o = self.box.origin_index
        if index == o:
            raise InvalidArgument("v is pinned to 1 at the origin")
        pos = index - 1 if index > o else index
        return np.array([w[pos] for w in self.solve(h, n_derivs)])

    def profile(self, h):
        v = np.ones(self.box.n_sites)
        v[self.keep] = self.solve(h)[0]
        return v


@dataclass(frozen=True)
class ExitFunctional:
    h: float
    value: float
    bc: BoundaryCondition


def exit_functional(field, bc, kappa, h) -> ExitFunctional:
    """``E(h)`` by a direct linear solve; ``DomainError`` when ``h`` is below the integrability threshold."""
    bc = BoundaryCondition.parse(bc)
    return ExitFunctional(float(h), float(ExitSystem(field.box, bc, kappa, field.values).value(h)[0]), bc)


def exit_functional_derivatives(field, bc, kappa, h, n_max=2) -> np.ndarray:
    """``(-1)^n d^n E / dh^n`` for ``n = 0..n_max``."""
    return ExitSystem(field.box, bc, kappa, field.values).value(h, n_max)


def _gap_check(field, kappa):
    d = field.box.d
    stats_ = order_statistics(field)
    xi0 = field.origin_value
    if not xi0 - stats_.xi_hat > 2 * d * kappa:
        raise PreconditionError(
            f"gap condition violated: xi(0) - max off-origin = {xi0 - stats_.xi_hat:.6g} <= 2d kappa = {2 * d * kappa:.6g}")
    return xi0, stats_


def lambda_via_root(field, bc, kappa, tol=1e-12, max_iter=200) -> float:
    """Principal eigenvalue as the root of ``xi(0) = h + 2d kappa - E(h)``."""
    xi0, _ = _gap_check(field, kappa)
    sys_ = ExitSystem(field.box, bc, kappa, field.values)
    c = 2 * field.box.d * float(kappa)
    lo, hi = xi0 - c, xi0

    def f_and_df(h):
        e, de = sys_.value(h, 1)
        return h + c - e - xi0, 1.0 + de

    h = 0.5 * (lo + hi)
    # a few bisection steps shrink the bracket, Newton then converges quadratically
    for _ in range(8):
        f, _ = f_and_df(h)
        if f > 0:
            hi = h
        else:
            lo = h
        h = 0.5 * (lo + hi)
    for _ in range(max_iter):
        f, df = f_and_df(h)
        if abs(f) <= tol:
            return h
        if f > 0:
            hi = h
        else:
            lo = h
        nxt = h - f / df
        if not lo <= nxt <= hi:
            nxt = 0.5 * (lo + hi)
        if nxt == h:
            break
        h = nxt
    f, _ = f_and_df(h)
    if abs(f) > tol:
        raise ConvergenceError(f"root solve stalled with |f| = {abs(f):.3e}", residual=abs(f))
    return h


@dataclass(frozen=True, eq=False)
class EigenProfile:
    values: np.ndarray
    normalizer: float

    @property
    def normalized(self):
        return self.values * self.normalizer


def eigenfunction_profile(field, lambda1, bc, kappa) -> EigenProfile:
    """Eigenfunction scaled to ``v(0) = 1`` from the boundary problem at ``h = lambda1``.

    Needs the top value at the origin and a gap above ``2 d kappa`` to the runner-up.
    """
    st = order_statistics(field)
    if st.argmax_site != field.box.origin_index or not st.xi1 - st.xi2 > 2 * field.box.d * kappa:
        raise PreconditionError("profile needs the maximum at the origin and xi1 - xi2 > 2 d kappa")
    v = ExitSystem(field.box, bc, kappa, field.values).profile(lambda1)
    return EigenProfile(v, 1.0 / float(np.linalg.norm(v)))


def decay_bound(box: BoxSpec, kappa, c) -> np.ndarray:
    """Per-site bound ``K exp(-|x|_1 log(c / 2d kappa))`` with ``K = 1 / (1 - 2d kappa / c)``."""
    r = 2 * box.d * kappa / c
    if not 0 < r < 1:
        raise PreconditionError("decay bound needs c > 2 d kappa")
    return np.exp(-box.l1_norm() * math.log(1 / r)) / (1 - r)


def _transition(box: BoxSpec, bc):
    """Embedded-chain transition matrix; with ``Zero`` the missing mass is killing."""
    bc = BoundaryCondition.parse(bc)
    n, nn = box.n_sites, 2 * box.d
    P = box.adjacency / nn
    if bc is BoundaryCondition.FREE:
        P = P + sp.diags((nn - box.degree) / nn)
    return P.tocsr()


@dataclass(frozen=True, eq=False)
class HittingSteps:
    probs: np.ndarray
    alive: float

    @property
    def total(self):
        return float(self.probs.sum())


def hitting_step_distribution(box: BoxSpec, bc, y, k_max) -> HittingSteps:
    """``probs[m] = P_y(first visit to the origin after exactly m embedded steps)``.

    ``alive`` is the mass neither absorbed at the origin nor killed after
    ``k_max`` steps.
    """
    if int(k_max) < 1:
        raise InvalidArgument("k_max must be at least 1")
    yi = box.index_of(y)
    o = box.origin_index
    if yi == o:
        raise InvalidArgument("starting site must differ from the origin")
    PT = _transition(box, bc).T.tocsr()
    p = np.zeros(box.n_sites)
    p[yi] = 1.0
    probs = np.zeros(int(k_max) + 1)
    for m in range(1, int(k_max) + 1):
        p = PT @ p
        probs[m] = p[o]
        p[o] = 0.0
    return HittingSteps(probs, float(p.sum()))


@dataclass(frozen=True)
class ErlangBounds:
    lower: float
    upper: float
    n: int
    h: float


def _nb_tail(n, q, k):
    """``sum_{m > k} C(n+m-1, n) q^m`` via the negative binomial survival function."""
    if k < 1:
        return q / (1 - q) ** (n + 1)
    return q / (1 - q) ** (n + 1) * float(stats.nbinom.sf(k - 1, n + 1, 1 - q))


def erlang_series_bounds(box: BoxSpec, bc, kappa, h, xi_hat_bound, n=0, k_max=200, y=None,
                         lower_steps=None) -> ErlangBounds:
    """Series bounds on ``(-1)^n d^n/dh^n`` of the per-neighbor exit value at ``y``.

    Given ``N = m`` embedded steps the hitting time is Gamma(m, 2d kappa).
    Bounding ``xi`` below by 0 and above by ``xi_hat_bound`` on the way gives

        sum_m n! C(n+m-1, n) P(N=m) (2d kappa)^m / (h + 2d kappa - z)^(n+m)

    with ``z = 0`` (lower; truncated after ``2 ceil(R) + 1`` steps unless
    ``lower_steps`` is given) and ``z = xi_hat_bound`` (upper; summed to
    ``k_max`` plus a tail bound using the surviving mass).
    """
    n = int(n)
    if n < 0:
        raise InvalidArgument("derivative order must be nonnegative")
    c = 2 * box.d * float(kappa)
    h = float(h)
    if not h + c > 0:
        raise DomainError("need h > -2 d kappa")
    if y is None:
        y = box.site_of(box.origin_neighbors()[0])
    steps = hitting_step_distribution(box, bc, y, k_max)
    m = np.arange(1, int(k_max) + 1)
    pm = steps.probs[1:]
    coef = np.exp(_logbinom(n + m - 1, n))

    lower_cut = 2 * box.radius + 1 if lower_steps is None else int(lower_steps)
    ql = c / (h + c)
    sel = m <= lower_cut
    lower = math.factorial(n) / (h + c) ** n * float(np.sum(coef[sel] * pm[sel] * ql ** m[sel]))

    denom = h + c - float(xi_hat_bound)
    if not denom > 0:
        raise DomainError("upper Erlang series diverges: h + 2d kappa <= xi_hat_bound")
    qu = c / denom
    tail = 0.0
    if steps.alive > 0:
        if qu >= 1:
            raise DomainError(f"upper Erlang series diverges (ratio {qu:.4g} >= 1)")
        tail = steps.alive * _nb_tail(n, qu, int(k_max))
    upper = math.factorial(n) / denom**n * (float(np.sum(coef * pm * qu**m)) + tail)
    return ErlangBounds(lower, upper, n, h)


def _logbinom(a, b):
    a = np.asarray(a, dtype=float)
    return gammaln(a + 1) - gammaln(b + 1) - gammaln(a - b + 1)


def exit_values_batch(box: BoxSpec, bc, kappa, h, xi_stack) -> np.ndarray:
    """``E(h)`` for a stack of potentials by batched Cholesky solves."""
    bc = BoundaryCondition.parse(bc)
    xi_stack = np.atleast_2d(np.asarray(xi_stack, dtype=float))
    sys0 = ExitSystem(box, bc, kappa, np.zeros(box.n_sites))
    k = sys0.keep.size
    M = np.broadcast_to(-sys0.kappa * sys0.A_int.toarray(), (xi_stack.shape[0], k, k)).copy()
    idx = np.arange(k)
    M[:, idx, idx] += h + sys0.base_diag - xi_stack[:, sys0.keep]
    try:
        np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        raise DomainError(f"h={h} too small for at least one potential in the batch") from None
    rhs = np.broadcast_to(sys0.b, (xi_stack.shape[0], k))[..., None]
    v = np.linalg.solve(M, rhs)[..., 0]
    return sys0.kappa * v[:, sys0.nbr_pos].sum(axis=1)


def conditional_tail_mc(model, box: BoxSpec, bc, kappa, h, c, n_samples, seed, threads=None) -> mc.MCEstimate:
    """Log of ``< Fbar(h + 2d kappa - E(h)) | max off-origin xi <= h - c >`` over conditioned fields.

    Each sample evaluates the tail at a deterministic point, so this is a
    plain average over potentials, not rare-event sampling.  The returned
    estimate is in the log domain.
    """
    cc = 2 * box.d * float(kappa)
    if not c > cc:
        raise PreconditionError(f"need c > 2 d kappa = {cc}")
    if not h >= c:
        raise PreconditionError("need h >= c")
    bound = h - c
    # validates the truncation once
    sample_field_conditioned(box, model, bound, pin_origin=0.0, seed=seed, realization=0)

    def work(a, b):
        xs = np.stack([_truncated_values(box, model, bound, 0.0, seed, i) for i in range(a, b)])
        E = exit_values_batch(box, bc, kappa, h, xs)
        return -np.asarray(model.phi(h + cc - E), dtype=float)

    logs = mc.chunked_map(work, int(n_samples), threads)
    mean, se = mc.log_mean_stderr(logs)
    return mc.MCEstimate(mean, se, int(n_samples), int(seed), log_domain=True)
