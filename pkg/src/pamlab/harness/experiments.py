"""Registered experiments.

Each experiment maps a parameter set to an :class:`ExperimentReport` with
estimates, predictions and pass/fail checks.  All randomness flows from the
ExperimentSpec seed through counter-based streams, so a report is a pure
function of its ExperimentSpec, whatever the number of worker threads.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from pamlab import rng
from pamlab.asymptotics import (
    ageing_predictor, correlation_prediction, exweib_log_moment, log_window_probability,
    mass_fraction_prediction,
    second_derivative_H, tauberian_log_mgf, weibg_log_conditional_tail, window_mass_fraction,
    window_probability, window_upsilon,
)
from pamlab.errors import UsageError
from pamlab.evolve import solve_ode, solve_spectral
from pamlab.feynman_kac import annealed_log_origin, annealed_moment_mc, fk_estimate, truncation_check
from pamlab.harness.report import ExperimentReport, SuiteReport, check_close, check_le
from pamlab.lattice import BoundaryCondition, BoxSpec, hamiltonian
from pamlab.mc import log_mean_stderr
from pamlab.potential import PotentialField, order_statistics, sample_field, sample_values, window_membership
from pamlab.spectral import (
    ExitSystem, conditional_tail_mc, decay_bound, eigenfunction_profile, erlang_series_bounds,
    lambda_via_root, principal_eigenpair,
)
from pamlab.tails import Weibull, cumulant_H, laplace_correction

SURROGATE = "surrogate: annealed"


@dataclass
class ExperimentSpec:
    name: str
    params: dict = field(default_factory=dict)

    def resolved(self) -> dict:
        if self.name not in EXPERIMENTS:
            raise UsageError(f"unknown experiment {self.name!r}; known: {', '.join(sorted(EXPERIMENTS))}")
        exp = EXPERIMENTS[self.name]
        unknown = set(self.params) - exp.keys
        if unknown:
            raise UsageError(f"experiment {self.name!r} does not accept {sorted(unknown)}")
        out = dict(exp.defaults)
        out.update({k: v for k, v in self.params.items() if v is not None})
        if out.get("tol_scale", 1.0) < 0:
            raise UsageError("tolerance scale must be nonnegative")
        if "bc" in out and out["bc"] is not None:
            out["bc"] = BoundaryCondition.parse(out["bc"]).value
        return out


@dataclass(frozen=True)
class _Experiment:
    fn: object
    defaults: dict

    @property
    def keys(self):
        """Parameters the experiment accepts: exactly those it has defaults for."""
        return frozenset(self.defaults)


EXPERIMENTS: dict = {}


def _register(name, defaults):
    def deco(fn):
        EXPERIMENTS[name] = _Experiment(fn, {"seed": 20240601, "tol_scale": 1.0, **defaults})
        return fn
    return deco


def _bcs(bc):
    return ["free", "zero"] if bc in (None, "both") else [bc]


def run_experiment(spec: ExperimentSpec, threads=None) -> ExperimentReport:
    params = spec.resolved()
    seed = int(params["seed"])
    report = ExperimentReport(spec.name, dict(sorted(params.items())), seed)
    start = time.perf_counter()
    EXPERIMENTS[spec.name].fn(report, params, rng.derive_seed(seed, spec.name), threads)
    report.runtime_ms = round(1000 * (time.perf_counter() - start), 3)
    return report


# --------------------------------------------------------------------------- spectra

@_register("sandwich", {"gamma": 2.0, "d": 2, "R": 3, "kappa": 1.0, "samples": 1000, "bc": None})
def _sandwich(rep, P, seed, threads):
    box = BoxSpec(int(P["d"]), P["R"])
    model = Weibull(P["gamma"])
    kappa, tol = P["kappa"], 1e-10 * P["tol_scale"]
    c = 2 * box.d * kappa
    upper_gap, lower_gap, order_gap = -np.inf, -np.inf, -np.inf
    bcs = _bcs(P["bc"])
    for i in range(int(P["samples"])):
        f = sample_field(box, model, seed, i)
        xi1 = order_statistics(f).xi1
        lam = {bc: principal_eigenpair(hamiltonian(box, bc, kappa, f)).lambda1 for bc in bcs}
        for l1 in lam.values():
            upper_gap = max(upper_gap, l1 - xi1)
            lower_gap = max(lower_gap, xi1 - l1 - c)
        if len(bcs) == 2:
            order_gap = max(order_gap, lam["zero"] - lam["free"])
    rep.estimate("max(lambda1 - xi1)", upper_gap)
    rep.estimate("max(xi1 - lambda1 - 2d kappa)", lower_gap)
    rep.add(check_le("lambda1 <= xi1", upper_gap, 0.0, tol))
    rep.add(check_le("xi1 <= lambda1 + 2d kappa", lower_gap, 0.0, tol))
    if len(bcs) == 2:
        rep.add(check_le("lambda1(zero) <= lambda1(free)", order_gap, 0.0, 1e-12 * P["tol_scale"]))


@_register("solver-crosscheck", {"gamma": 2.0, "d": 2, "R": 3, "kappa": 0.5, "t": 5.0, "samples": 100,
                                 "bc": "free", "fk_fields": 20, "walks": 100_000, "fk_t": 1.0})
def _solver_crosscheck(rep, P, seed, threads):
    box = BoxSpec(int(P["d"]), P["R"])
    model = Weibull(P["gamma"])
    kappa, bc = P["kappa"], P["bc"]
    times = [P["t"] * s for s in (0.1, 0.25, 0.5, 1.0)]
    ones = np.ones(box.n_sites)
    worst = 0.0
    for i in range(int(P["samples"])):
        H = hamiltonian(box, bc, kappa, sample_field(box, model, seed, i))
        eig = principal_eigenpair(H, want_full=True)
        for sol in solve_ode(H, ones, times, log_domain=True):
            spec = solve_spectral(eig, ones, sol.t, log_domain=True)
            a = sol.values * math.exp(sol.log_scale - spec.log_scale)
            worst = max(worst, float(np.max(np.abs(a - spec.values)) / np.max(spec.values)))
    rep.estimate("max relative ode/spectral discrepancy", worst)
    rep.add(check_le("spectral == ode (max-norm relative)", worst, 1e-8 * P["tol_scale"]))

    zmax, misses = 0.0, 0
    for i in range(int(P["fk_fields"])):
        f = sample_field(box, model, seed, 10_000 + i)
        H = hamiltonian(box, bc, kappa, f)
        exact = float(solve_ode(H, ones, [P["fk_t"]])[0].values[box.origin_index])
        est = fk_estimate(f, P["fk_t"], None, int(P["walks"]), bc, rng.derive_seed(seed, "walks", i), kappa, threads)
        z = abs(est.mean - exact) / est.stderr
        zmax = max(zmax, z)
        misses += int(z > 3 * P["tol_scale"])
    rep.estimate("max |fk - ode| / stderr", zmax)
    rep.add(check_le("fields with |fk - ode| > 3 stderr", misses, 0))


@_register("eigen-identities", {"gamma": 2.0, "d": 2, "R": 3, "kappa": 0.5, "samples": 1000, "bc": None,
                                "profile_fields": 200})
def _eigen_identities(rep, P, seed, threads):
    box = BoxSpec(int(P["d"]), P["R"])
    model = Weibull(P["gamma"])
    kappa, ts = P["kappa"], P["tol_scale"]
    c2 = 2 * box.d * kappa
    root_err, prof_err, decay_excess = 0.0, 0.0, -np.inf
    o = box.origin_index
    for bc in _bcs(P["bc"]):
        for i in range(int(P["samples"])):
            vals = sample_values(box, model, seed, i)
            xi_hat = max(np.delete(vals, o))
            vals[o] = xi_hat + c2 + 1.0
            f = PotentialField(box, vals, model, seed, i)
            eig = principal_eigenpair(hamiltonian(box, bc, kappa, f))
            root = lambda_via_root(f, bc, kappa)
            root_err = max(root_err, abs(root - eig.lambda1))
            if i < int(P["profile_fields"]):
                prof = eigenfunction_profile(f, eig.lambda1, bc, kappa).values
                prof_err = max(prof_err, float(np.max(np.abs(prof - eig.e1 / eig.e1[o]))))
                bound = decay_bound(box, kappa, (vals[o] - xi_hat) * (1 - 1e-12))
                decay_excess = max(decay_excess, float(np.max(prof - bound)))
    rep.estimate("max |root - lambda1|", root_err)
    rep.estimate("max |profile - e1/e1(0)|", prof_err)
    rep.estimate("max(profile - decay bound)", decay_excess)
    rep.add(check_le("exit-functional root == lambda1", root_err, 1e-10 * ts))
    rep.add(check_le("linear-solve profile == eigenvector ratio", prof_err, 1e-8 * ts))
    rep.add(check_le("profile <= K exp(-|x| log(c / 2d kappa))", decay_excess, 0.0))

    spike = PotentialField(BoxSpec(1, 1), np.array([0.0, 5.0, 0.0]), model, 0)
    rep.add(check_close("spike root == (1 + sqrt 33) / 2", lambda_via_root(spike, "zero", 1.0),
                        (1 + math.sqrt(33)) / 2, 1e-12 * ts))
    _erlang_checks(rep, model, seed, ts)


def _erlang_checks(rep, model, seed, ts):
    zero_box = BoxSpec(1, 1)
    b = erlang_series_bounds(zero_box, "zero", 1.0, 2.0, 0.0, 0, 50)
    rep.add(check_close("erlang lower (xi=0, h=2) == 1/4", b.lower, 0.25, 1e-12 * ts))
    rep.add(check_close("erlang upper (xi=0, h=2) == 1/4", b.upper, 0.25, 1e-12 * ts))
    worst = -np.inf
    for R in (1, 2, 3):
        box = BoxSpec(1, R)
        y = box.origin_neighbors()[0]
        for bc in ("free", "zero"):
            for j in range(3):
                vals = sample_values(box, model, rng.derive_seed(seed, "erlang", R, bc), j)
                xi_hat = float(np.max(np.delete(vals, box.origin_index)))
                sys_ = ExitSystem(box, bc, 1.0, vals)
                for dh in (0.25, 0.5, 1.0, 2.0, 5.0, 10.0):
                    h = xi_hat + dh
                    exact = sys_.at(y, h, 2)
                    for n in (0, 1, 2):
                        eb = erlang_series_bounds(box, bc, 1.0, h, xi_hat, n, k_max=400)
                        scale = max(abs(exact[n]), 1e-300)
                        worst = max(worst, (eb.lower - exact[n]) / scale, (exact[n] - eb.upper) / scale)
    rep.estimate("max relative Erlang violation", worst)
    rep.add(check_le("erlang lower <= exact <= upper (n = 0, 1, 2)", worst, 1e-12 * ts))


# --------------------------------------------------------------------------- tails

@_register("conditional-tail", {"gamma": 2.0, "d": 1, "R": 2, "kappa": 1.0, "c": 3.0, "samples": 10_000,
                                "bc": "free", "h": [6.0, 10.0, 20.0]})
def _conditional_tail(rep, P, seed, threads):
    box = BoxSpec(int(P["d"]), P["R"])
    model = Weibull(P["gamma"])
    hs = P["h"] if isinstance(P["h"], (list, tuple)) else [P["h"]]
    prev = None
    for h in hs:
        est = conditional_tail_mc(model, box, P["bc"], P["kappa"], h, P["c"], int(P["samples"]), seed, threads)
        pred = weibg_log_conditional_tail(P["gamma"], h, box.d, P["kappa"])
        rep.estimate(f"log conditional tail h={h:g}", est.mean, est.stderr)
        rep.predict(f"two-term expansion h={h:g}", pred.value, pred.band)
        rep.add(check_close(f"log MC vs expansion h={h:g}", est.mean, pred.value,
                            max(0.5, 10.0 / h) * P["tol_scale"]))
        if prev is not None and h > prev[0]:
            rep.add(check_le(f"decreasing in h ({prev[0]:g} -> {h:g})", est.mean, prev[1]))
        prev = (h, est.mean)


@_register("moments", {"gamma": 2.0, "d": 1, "R": 3, "kappa": 0.5, "t": 1.0, "p": [1.0, 2.0],
                       "samples": 100_000, "bc": "free"})
def _moments(rep, P, seed, threads):
    box = BoxSpec(int(P["d"]), P["R"])
    model = Weibull(P["gamma"])
    t, kappa = P["t"], P["kappa"]
    ps = P["p"] if isinstance(P["p"], (list, tuple)) else [P["p"]]
    ts = P["tol_scale"]
    est = {}
    for p in ps:
        e = annealed_moment_mc(model, box, P["bc"], kappa, t, p, int(P["samples"]), seed, threads=threads)
        est[p] = e
        hi = cumulant_H(model, p * t)
        lo = hi - 2 * box.d * kappa * p * t
        rep.estimate(f"log <u^{p:g}>", e.mean, e.stderr)
        rep.predict(f"moment expansion p={p:g}", exweib_log_moment(P["gamma"], p, t, box.d, kappa).log_moment)
        rep.add(check_le(f"p={p:g}: H(pt) - 2d kappa pt <= estimate", lo, e.mean, 3 * e.stderr * ts))
        rep.add(check_le(f"p={p:g}: estimate <= H(pt)", e.mean, hi, 3 * e.stderr * ts))
    if 1.0 in est and 2.0 in est:
        pooled = math.hypot(est[2.0].stderr, 2 * est[1.0].stderr)
        rep.add(check_le("log <u^2> >= 2 log <u>", 2 * est[1.0].mean, est[2.0].mean, 3 * pooled * ts))
    tc = truncation_check(model, box.d, P["bc"], kappa, t, ps[0], int(P["samples"]), seed, R=box.radius,
                          threads=threads)
    rep.estimate(f"log <u^{ps[0]:g}> on doubled box", tc.large.mean, tc.large.stderr)
    rep.add(check_close("radius doubling moves the estimate < 1 stderr", tc.small.mean, tc.large.mean,
                        max(tc.small.stderr, tc.large.stderr) * ts))


@_register("tauberian", {"gamma": 2.0, "t": [4.0, 8.0, 16.0, 32.0]})
def _tauberian(rep, P, seed, threads):
    model = Weibull(P["gamma"])
    ts = P["t"] if isinstance(P["t"], (list, tuple)) else [P["t"]]
    gaps = []
    for t in ts:
        H = cumulant_H(model, t)
        pred = tauberian_log_mgf(model, t, True)
        gap = abs(laplace_correction(model, t))
        gaps.append(gap)
        rep.estimate(f"H({t:g})", H)
        rep.predict(f"tauberian({t:g}) with log t", pred)
        rep.predict(f"tauberian({t:g}) without log t", tauberian_log_mgf(model, t, False))
        rep.estimate(f"|H - prediction| at t={t:g}", gap)
    rep.add(check_close(f"H({ts[0]:g}) vs prediction", cumulant_H(model, ts[0]),
                        tauberian_log_mgf(model, ts[0], True), 0.01 * P["tol_scale"]))
    for (t0, g0), (t1, g1) in zip(zip(ts, gaps), zip(ts[1:], gaps[1:])):
        rep.add(check_le(f"gap decreases {t0:g} -> {t1:g}", g1, g0))


# --------------------------------------------------------------------------- intermittency

@_register("intermittency-mass", {"gamma": 2.0, "t": 100.0, "a": [0.5, 1.0, 2.0]})
def _intermittency_mass(rep, P, seed, threads):
    model = Weibull(P["gamma"])
    tol = (0.02 if P["gamma"] == 2 else 0.05) * P["tol_scale"]
    for a in (P["a"] if isinstance(P["a"], (list, tuple)) else [P["a"]]):
        frac = window_mass_fraction(model, P["t"], a)
        pred = mass_fraction_prediction(a)
        rep.estimate(f"window mass fraction a={a:g}", frac)
        rep.predict(f"Phi(a) - Phi(-a), a={a:g}", pred)
        rep.add(check_close(f"mass fraction a={a:g}", frac, pred, tol, tags=[SURROGATE]))


def geometric_ks(spacings, p) -> float:
    """Kolmogorov distance between the empirical law of ``spacings`` and Geometric(p) on {1, 2, ...}."""
    s = np.sort(np.asarray(spacings, dtype=np.int64))
    if s.size == 0:
        return 1.0
    k = np.arange(1, int(s[-1]) + 1)
    emp = np.searchsorted(s, k, side="right") / s.size
    geo = -np.expm1(k * math.log1p(-p))
    # both are step functions with jumps at integers only
    return float(np.max(np.abs(emp - geo)))


def census_time(model, a, prob):
    """Time ``t`` at which the window of half-width ``a`` has probability ``prob``."""
    def f(log_t):
        return log_window_probability(model, math.exp(log_t), a) - math.log(prob)
    lo, hi = math.log(1e-3), math.log(1e6)
    return math.exp(optimize.brentq(f, lo, hi, xtol=1e-14))


@_register("peak-census", {"gamma": 2.0, "a": 1.0, "samples": 1_000_000, "p": 0.05, "t": None})
def _peak_census(rep, P, seed, threads):
    model = Weibull(P["gamma"])
    a = P["a"]
    t = P["t"] if P.get("t") is not None else census_time(model, a, P["p"])
    prob = window_probability(model, t, a)
    # a line of sites enumerated left to right; spacings are index gaps
    box = BoxSpec(1, max(1, int(P["samples"]) // 2))
    n = box.n_sites
    hits = window_membership(sample_field(box, model, seed), window_upsilon(model, t, a))
    count = hits.size
    rep.predict("window probability", prob)
    rep.predict("expected peak count", n * prob)
    rep.estimate("peak count", count)
    sd = math.sqrt(n * prob * (1 - prob))
    rep.add(check_close("peak count vs binomial mean", count, n * prob, 3 * sd * P["tol_scale"], tags=[SURROGATE]))
    ks = geometric_ks(np.diff(hits), prob)
    rep.estimate("spacing KS distance", ks)
    rep.add(check_le("spacing KS vs Geometric(p)", ks, 0.01 * P["tol_scale"], tags=[SURROGATE]))


@_register("correlation-identity", {"gamma": 2.0, "d": 1, "R": 6, "kappa": 0.5, "t": 0.5, "s": 0.5,
                                    "samples": 100_000, "bc": "free"})
def _correlation_identity(rep, P, seed, threads):
    box = BoxSpec(int(P["d"]), P["R"])
    model = Weibull(P["gamma"])
    t, s = P["t"], P["s"]
    lu = annealed_log_origin(model, box, P["bc"], P["kappa"], [t, s, t + s], int(P["samples"]), seed, threads)
    mixed, se_m = log_mean_stderr(lu[:, 0] + lu[:, 1])
    single, se_s = log_mean_stderr(lu[:, 2])
    pooled = math.hypot(se_m, se_s)
    rep.estimate("log <u(t,0) u(s,0)>", mixed, se_m)
    rep.estimate("log <u(t+s,0)>", single, se_s)
    rep.add(check_close("<u(t)u(s)> == <u(t+s)>", mixed, single, 3 * pooled * P["tol_scale"], tags=[SURROGATE]))


@_register("ageing-scan", {"gamma": [1.5, 2.0, 2.5, 3.0], "t": 1e6, "p": 1.0})
def _ageing_scan(rep, P, seed, threads):
    gammas = P["gamma"] if isinstance(P["gamma"], (list, tuple)) else [P["gamma"]]
    T, ts = P["t"], P["tol_scale"]
    for g in gammas:
        model = Weibull(g)
        r = ageing_predictor(model)
        rep.estimate(f"log-log slope of H'' (gamma={g:g})", r.slope)
        rep.add(check_close(f"ages iff gamma > 2 (gamma={g:g})", float(r.ages), float(g > 2), 0.0, tags=[SURROGATE]))
        h2 = second_derivative_H(model, 2 * T)
        for theta in (0.5, 1.0, 2.0):
            rep.predict(f"A(t, {theta:g}/sqrt H''), gamma={g:g}",
                        correlation_prediction(model, T, theta / math.sqrt(h2), P["p"]))
        if g > 2:
            slow = correlation_prediction(model, T, T ** 0.125, P["p"])
            fast = correlation_prediction(model, T, T ** 0.5, P["p"])
            rep.add(check_close(f"A(t, t^(1/8)) -> 1 (gamma={g:g})", slow, 1.0, 0.05 * ts, tags=[SURROGATE]))
            rep.add(check_le(f"A(t, t^(1/2)) -> 0 (gamma={g:g})", fast, 0.05 * ts, tags=[SURROGATE]))


DEFAULT_SUITE = ["sandwich", "solver-crosscheck", "eigen-identities", "conditional-tail", "moments", "tauberian",
                 "intermittency-mass", "peak-census", "correlation-identity", "ageing-scan"]


def verify_all(seed=20240601, threads=None, tol_scale=1.0, names=None) -> SuiteReport:
    """Run the default-parameter suite; every experiment is seeded from ``seed``."""
    if tol_scale < 0:
        raise UsageError("tolerance scale must be nonnegative")
    reports = [run_experiment(ExperimentSpec(n, {"seed": seed, "tol_scale": tol_scale}), threads)
               for n in (names or DEFAULT_SUITE)]
    return SuiteReport(int(seed), reports)
