"""Offloading-decision solvers.

Once the IRS phases (hence the inverse gains ``b``) and the local CPU
frequencies are fixed, the only decision left is the time split ``tau``:
``tau_n == 0`` means device ``n`` computes locally.  Three solvers pick it:

* :func:`greedy_solve` grows the offloading set one device at a time,
  re-solving the convex time allocation for every candidate.
* :func:`penalty_solve` splits the problem with per-device copies ``a_n`` of
  ``tau_n`` tied by a quadratic penalty, and alternates exact block updates.
* :func:`enumerate_solve` tries every offloading set (reference optimum).

The convex time allocation for a fixed offloading set is solved by an outer
bisection on the dual price ``nu`` of the frame-length constraint, with an
inner bisection inverting each device's marginal energy ``psi_n``.  Both
searches are vectorised over devices and over batches of candidate sets.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .channel import DEGENERATE_GAIN
from .errors import BudgetError, ConvergenceError, DegenerateChannelError, DomainError
from .model import (
    _SERIES_CUTOFF,
    LN2,
    DeviceArrays,
    OffloadSolution,
    SystemParams,
    as_device_list,
    excess,
    solution_energy,
    spectral_load,
)

MAX_BISECTION = 200
_MAX_EXPANSION = 1100
NU_LO = 1e-20
NU_HI = 1.0
SUM_TOL = 1e-9
ENUMERATION_MAX_N = 20
DEFAULT_RHO = 300.0


@dataclass
class AllocationProblem:
    """Time allocation for a fixed offloading set.

    ``b`` and ``S_bits`` are per device (length N); only the entries listed in
    ``offload_set`` are used.
    """

    offload_set: Sequence[int]
    b: np.ndarray
    S_bits: np.ndarray | float
    B: float
    T: float
    degenerate: np.ndarray | None = None

    def __post_init__(self):
        self.offload_set = tuple(int(n) for n in self.offload_set)
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        self.S_bits = np.broadcast_to(np.asarray(self.S_bits, dtype=float), self.b.shape)


@dataclass
class PenaltyState:
    a: np.ndarray
    tau: np.ndarray
    rho: float
    iteration: int = 0


@dataclass
class SolverReport:
    solution: OffloadSolution
    objective: float
    iterations: int
    inner_bisection_calls: int
    wall_time: float
    history: list = field(default_factory=list)
    nu: float | None = None

    @property
    def offload_set(self) -> list[int]:
        return self.solution.offload_set


def _exc(u):
    # excess() without the errstate guard; callers hold np.errstate
    closed = np.expm1(u) * (u - 1.0) + u
    if u.size and np.min(u) < _SERIES_CUTOFF:
        series = u * u * (0.5 + u * (1.0 / 3.0 + u * (0.125 + u / 30.0)))
        return np.where(u < _SERIES_CUTOFF, series, closed)
    return closed


def _out(x):
    x = np.asarray(x)
    return float(x) if x.ndim == 0 else x


# ---------------------------------------------------------------------------
# marginal energy and its inverse


def psi(S, B, b, tau):
    """Derivative of ``b tau (2^{S/(tau B)} - 1)`` with respect to ``tau``.

    Negative and increasing on ``tau > 0``, tending to ``0-`` as ``tau -> inf``.
    """
    t = np.asarray(tau, dtype=float)
    if np.any(~(t > 0)):
        raise DomainError("tau must be > 0")
    return _out(-np.asarray(b, dtype=float) * excess(spectral_load(S, B, t)))


def _solve_load(v, lo=None, hi=None):
    """Elementwise root ``u > 0`` of ``excess(u) = v`` by bisection.

    Without a bracket one is found by geometric expansion from ``u = 1``.
    Iterates until every interval has collapsed to adjacent doubles.
    """
    v = np.asarray(v, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        return _solve_load_inner(v, lo, hi)


def _solve_load_inner(v, lo, hi):
    if lo is None:
        lo = np.ones_like(v)
        hi = np.ones_like(v)
        moved_hi = np.zeros(v.shape, dtype=bool)
        for _ in range(_MAX_EXPANSION):
            need = _exc(hi) < v
            if not need.any():
                break
            hi = np.where(need, hi * 2.0, hi)
            moved_hi |= need
        moved_lo = np.zeros(v.shape, dtype=bool)
        for _ in range(_MAX_EXPANSION):
            need = _exc(lo) > v
            if not need.any():
                break
            lo = np.where(need, lo * 0.5, lo)
            moved_lo |= need
        lo = np.where(moved_hi, hi * 0.5, lo)
        hi = np.where(moved_lo, lo * 2.0, hi)
    else:
        lo = np.array(lo, dtype=float)
        hi = np.array(hi, dtype=float)
    for _ in range(MAX_BISECTION):
        mid = 0.5 * (lo + hi)
        open_ = (mid > lo) & (mid < hi)
        if not open_.any():
            break
        up = _exc(mid) < v
        lo = np.where(open_ & up, mid, lo)
        hi = np.where(open_ & ~up, mid, hi)
    else:
        raise ConvergenceError("psi inversion did not converge within the iteration cap")
    pick_lo = np.abs(_exc(lo) - v) <= np.abs(_exc(hi) - v)
    return np.where(pick_lo, lo, hi)


def psi_inverse(S, B, b, nu):
    """The ``tau > 0`` with ``psi(tau) = -nu`` (vectorised over any argument)."""
    nu = np.asarray(nu, dtype=float)
    if np.any(~(nu > 0)):
        raise DomainError("nu must be > 0: psi only takes negative values")
    b = np.asarray(b, dtype=float)
    if np.any(~(b > 0)) or not np.all(np.isfinite(b)):
        raise DomainError("b must be finite and > 0")
    u = _solve_load(nu / b)
    tau = np.asarray(S, dtype=float) * LN2 / (B * u)
    resid = np.abs(np.asarray(psi(S, B, b, tau)) + nu)
    if np.any(resid > 1e-10 * np.maximum(b, nu)):
        raise ConvergenceError(f"psi inversion residual {float(np.max(resid)):.3g} above tolerance")
    return _out(tau)


# ---------------------------------------------------------------------------
# time allocation for fixed offloading sets


def _allocate(mask: np.ndarray, b: np.ndarray, S: np.ndarray, B: float, T: float):
    """Batched KKT solve.  ``mask`` is ``(K, N)``; returns ``tau (K, N)`` and ``nu (K,)``.

    Every row must be non-empty.  Rows are independent: the result for a row
    does not depend on which other rows share the batch.

    The outer search bisects ``log nu``.  At each trial price the per-device
    inverses are only refined until interval bounds on ``sum(tau)`` fall on
    one side of ``T``; the final price gets a full-precision inversion.
    """
    mask = np.asarray(mask, dtype=bool)
    K, N = mask.shape
    rows, cols = np.nonzero(mask)
    if np.any(np.bincount(rows, minlength=K) == 0):
        raise DomainError("every offloading set must be non-empty")
    b_e = np.asarray(b, dtype=float)[cols]
    scale = np.asarray(S, dtype=float)[cols] * LN2 / B  # tau = scale / u

    def rowsum(x):
        return np.bincount(rows, weights=x, minlength=K)

    # bracket: total time decreases in nu
    nu_hi = np.full(K, NU_HI)
    for _ in range(_MAX_EXPANSION):
        u_hi = _solve_load(nu_hi[rows] / b_e)
        need = rowsum(scale / u_hi) >= T
        if not need.any():
            break
        nu_hi = np.where(need, nu_hi * 2.0, nu_hi)
    else:
        raise ConvergenceError("could not bracket the dual price from above")
    nu_lo = np.full(K, NU_LO)
    for _ in range(_MAX_EXPANSION):
        u_lo = _solve_load(nu_lo[rows] / b_e)
        need = rowsum(scale / u_lo) <= T
        if not need.any():
            break
        nu_lo = np.where(need, nu_lo * 0.5, nu_lo)
    else:
        raise ConvergenceError("could not bracket the dual price from below")

    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(MAX_BISECTION):
            # u_lo / u_hi bound u(nu) for every nu in [nu_lo, nu_hi]
            spread = rowsum(scale / u_lo) - rowsum(scale / u_hi)
            active = (spread > 1e-13 * T) & (nu_hi > nu_lo * (1.0 + 4e-16))
            if not active.any():
                break
            nu_mid = np.sqrt(nu_lo * nu_hi)
            v = nu_mid[rows] / b_e
            lo = u_lo.copy()
            hi = u_hi.copy()
            undecided = active.copy()
            s_max = rowsum(scale / lo)
            s_min = rowsum(scale / hi)
            for _ in range(MAX_BISECTION):
                mid = 0.5 * (lo + hi)
                open_ = undecided[rows] & (mid > lo) & (mid < hi)
                if not open_.any():
                    break
                up = _exc(mid) < v
                lo = np.where(open_ & up, mid, lo)
                hi = np.where(open_ & ~up, mid, hi)
                s_max = rowsum(scale / lo)
                s_min = rowsum(scale / hi)
                undecided &= ~((s_min > T) | (s_max < T))
            big = active & (s_min > T)
            small = active & (s_max < T)
            stuck = active & ~big & ~small
            nu_lo = np.where(big | stuck, nu_mid, nu_lo)
            nu_hi = np.where(small | stuck, nu_mid, nu_hi)
            u_lo = np.where((big | stuck)[rows], lo, u_lo)
            u_hi = np.where((small | stuck)[rows], hi, u_hi)
        else:
            raise ConvergenceError("dual bisection hit the iteration cap")

    nu = np.sqrt(nu_lo * nu_hi)
    u = _solve_load(nu[rows] / b_e, u_lo, u_hi)
    gap = np.abs(rowsum(scale / u) - T)
    if np.any(gap > SUM_TOL * T):
        raise ConvergenceError(f"time allocation misses the frame length by {float(np.max(gap)):.3g} s")
    tau = np.zeros((K, N))
    tau[rows, cols] = scale / u
    return tau, nu


def degenerate_mask(b, sigma2: float) -> np.ndarray:
    """Devices whose composite gain ``sigma2 / b`` is below the dead-link threshold."""
    b = np.asarray(b, dtype=float)
    return ~np.isfinite(b) | ~(b > 0) | (b * DEGENERATE_GAIN > sigma2)


def solve_time_allocation(p: AllocationProblem, return_dual: bool = False):
    """Optimal ``tau`` for the devices in ``p.offload_set`` (zero elsewhere).

    The frame constraint is active at the optimum; the common dual price
    ``nu`` equalises ``psi_n(tau_n) = -nu`` over the offloading devices.
    """
    if not p.offload_set:
        raise DomainError("offload_set must be non-empty")
    idx = np.array(p.offload_set)
    if p.degenerate is not None and np.any(np.asarray(p.degenerate)[idx]):
        raise DegenerateChannelError("a degenerate device cannot be placed in the offloading set")
    if np.any(~np.isfinite(p.b[idx])) or np.any(~(p.b[idx] > 0)):
        raise DomainError("b must be finite and > 0 on the offloading set")
    mask = np.zeros((1, p.b.size), dtype=bool)
    mask[0, idx] = True
    tau, nu = _allocate(mask, p.b, p.S_bits, p.B, p.T)
    if return_dual:
        return tau[0], float(nu[0])
    return tau[0]


def kkt_certificate(S, B, b, tau, T: float, nu: float) -> dict:
    """Stationarity residuals ``|psi_n(tau_n) + nu| / b_n`` and the frame-length gap."""
    tau = np.asarray(tau, dtype=float)
    on = tau > 0
    if not on.any():
        return {"nu": None, "max_stationarity": 0.0, "stationarity": [], "sum_gap": 0.0}
    S = np.broadcast_to(np.asarray(S, dtype=float), tau.shape)
    b = np.asarray(b, dtype=float)
    res = np.abs(np.asarray(psi(S[on], B, b[on], tau[on])) + nu) / b[on]
    return {
        "nu": float(nu),
        "max_stationarity": float(np.max(res)),
        "stationarity": [float(x) for x in res],
        "sum_gap": float(abs(np.sum(tau) - T) / T),
    }


# ---------------------------------------------------------------------------
# helpers shared by the solvers


def _offload_energy(b, S, B, tau):
    """``b tau (2^{S/(tau B)} - 1)`` with zero where ``tau == 0`` and +inf on overflow."""
    tau = np.asarray(tau, dtype=float)
    safe = np.where(tau > 0, tau, 1.0)
    with np.errstate(over="ignore", invalid="ignore"):
        val = b * safe * np.expm1(spectral_load(S, B, safe))
    return np.where(tau > 0, val, 0.0)


def build_solution(devs, sys: SystemParams, b, tau, theta=None) -> OffloadSolution:
    """Turn a time split into a full assignment (powers, frequencies, modes)."""
    arr = DeviceArrays(devs)
    tau = np.asarray(tau, dtype=float)
    on = tau > 0
    beta = on.astype(int)
    safe = np.where(on, tau, 1.0)
    b = np.asarray(b, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        P = np.where(on, np.where(on, b, 0.0) * np.expm1(spectral_load(arr.S, sys.B, safe)), 0.0)
    f = np.where(on, 0.0, arr.S * arr.C / sys.T)
    if theta is None:
        theta = np.zeros((len(arr), sys.M))
    sol = OffloadSolution(beta=beta, tau=np.where(on, tau, 0.0), f=f, P=P, theta=np.asarray(theta, dtype=float), total_energy=0.0)
    sol.total_energy = solution_energy(arr.devs, sol)
    return sol


def _report(devs, sys, b, tau, theta, t0, iterations, calls, history=None, nu=None) -> SolverReport:
    sol = build_solution(devs, sys, b, tau, theta)
    return SolverReport(
        solution=sol,
        objective=sol.total_energy,
        iterations=iterations,
        inner_bisection_calls=calls,
        wall_time=time.perf_counter() - t0,
        history=history if history is not None else [],
        nu=nu,
    )


def _setup(devs, sys, b):
    devs = as_device_list(devs, sys.N)
    arr = DeviceArrays(devs)
    b = np.asarray(b, dtype=float).reshape(-1)
    if b.size != sys.N:
        raise DomainError(f"expected {sys.N} inverse gains, got {b.size}")
    return devs, arr, b, ~degenerate_mask(b, sys.sigma2)


# ---------------------------------------------------------------------------
# solvers


def all_local_solve(devs, sys: SystemParams, b, theta=None) -> SolverReport:
    t0 = time.perf_counter()
    devs, arr, b, usable = _setup(devs, sys, b)
    return _report(devs, sys, b, np.zeros(sys.N), theta, t0, 0, 0)


def all_offload_solve(devs, sys: SystemParams, b, theta=None) -> SolverReport:
    """Every usable device offloads; the time split is the KKT optimum."""
    t0 = time.perf_counter()
    devs, arr, b, usable = _setup(devs, sys, b)
    if not usable.any():
        return _report(devs, sys, b, np.zeros(sys.N), theta, t0, 0, 0)
    tau, nu = _allocate(usable[None, :], b, arr.S, sys.B, sys.T)
    return _report(devs, sys, b, tau[0], theta, t0, 1, 1, nu=float(nu[0]))


def greedy_solve(devs, sys: SystemParams, b, theta=None) -> SolverReport:
    """Greedy offloading-set growth.

    Starts with every device local.  Each round tries adding each remaining
    device, re-solving the time allocation for the enlarged set, and keeps
    the one with the largest energy decrease (lowest index on ties).  Stops
    when no candidate decreases the energy.  ``history`` holds the energy
    after every accepted round, starting from the all-local value.
    """
    t0 = time.perf_counter()
    devs, arr, b, usable = _setup(devs, sys, b)
    local = arr.local_constant(sys.T)
    offload = np.zeros(sys.N, dtype=bool)
    energy = float(np.sum(local))
    history = [energy]
    tau = np.zeros(sys.N)
    nu = None
    rounds = calls = 0
    while True:
        cand = np.flatnonzero(usable & ~offload)
        if cand.size == 0:
            break
        rounds += 1
        masks = np.repeat(offload[None, :], cand.size, axis=0)
        masks[np.arange(cand.size), cand] = True
        taus, nus = _allocate(masks, b, arr.S, sys.B, sys.T)
        calls += cand.size
        e_off = np.sum(_offload_energy(b, arr.S, sys.B, taus), axis=1)
        e_loc = np.sum(np.where(masks, 0.0, local), axis=1)
        decrease = energy - (e_off + e_loc)
        k = int(np.argmax(decrease))
        if not decrease[k] > 0:
            break
        offload = masks[k]
        energy = float(e_off[k] + e_loc[k])
        tau = taus[k]
        nu = float(nus[k])
        history.append(energy)
    return _report(devs, sys, b, tau, theta, t0, rounds, calls, history, nu)


def _subset_masks(cands: np.ndarray, N: int):
    """All subsets of ``cands`` ordered by size, then lexicographically."""
    for size in range(len(cands) + 1):
        for combo in itertools.combinations(cands, size):
            m = np.zeros(N, dtype=bool)
            m[list(combo)] = True
            yield m


def enumerate_solve(devs, sys: SystemParams, b, theta=None, chunk: int = 4096) -> SolverReport:
    """Exact optimum over all offloading sets; ties go to the earliest set in size-then-lexicographic order."""
    t0 = time.perf_counter()
    devs, arr, b, usable = _setup(devs, sys, b)
    if sys.N > ENUMERATION_MAX_N:
        raise BudgetError(f"enumeration limited to N <= {ENUMERATION_MAX_N}, got {sys.N}")
    local = arr.local_constant(sys.T)
    best_e = float(np.sum(local))
    best_tau = np.zeros(sys.N)
    best_nu = None
    calls = 0
    gen = _subset_masks(np.flatnonzero(usable), sys.N)
    next(gen)  # empty set: all local
    while True:
        batch = list(itertools.islice(gen, chunk))
        if not batch:
            break
        masks = np.array(batch)
        taus, nus = _allocate(masks, b, arr.S, sys.B, sys.T)
        calls += len(batch)
        e = np.sum(_offload_energy(b, arr.S, sys.B, taus), axis=1) + np.sum(np.where(masks, 0.0, local), axis=1)
        k = int(np.argmin(e))
        if e[k] < best_e:
            best_e = float(e[k])
            best_tau = taus[k]
            best_nu = float(nus[k])
    n_sets = 2 ** int(np.sum(usable))
    return _report(devs, sys, b, best_tau, theta, t0, n_sets, calls, nu=best_nu)


# ---------------------------------------------------------------------------
# penalty method


def _a_step(S, B, b, local, tau, rho, usable, a_prev=None):
    """Vectorised exact minimisation of the per-device penalised subproblem.

    The smooth branch is convex in ``a > 0``.  Its stationary point is
    bracketed by geometric growth around the previous iterate (or ``tau``)
    and then located by Newton steps that fall back to bisection whenever
    they would leave the bracket.
    """
    tau = np.asarray(tau, dtype=float)
    scale = np.asarray(S, dtype=float) * LN2 / B
    x0 = np.where(tau > 0, tau, S / B)
    if a_prev is not None:
        x0 = np.where(a_prev > 0, a_prev, x0)

    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):

        def slope(a):
            return 2.0 * rho * (a - tau) - b * _exc(scale / a)

        def curvature(a):
            u = scale / a
            return 2.0 * rho + b * u**3 * np.exp(u) / scale

        # initial growth factor from the Newton distance at x0
        s0 = slope(x0)
        delta = np.abs(s0 / curvature(x0)) / x0
        delta = np.where(np.isfinite(delta), np.clip(2.0 * delta, 1e-12, 1.0), 1.0)
        lo = x0.copy()
        hi = x0.copy()
        grow = 1.0 + delta
        for _ in range(_MAX_EXPANSION):
            need = slope(hi) < 0
            if not need.any():
                break
            hi = np.where(need, hi * grow, hi)
            grow = np.where(need, grow * grow, grow)
        grow = 1.0 + delta
        for _ in range(_MAX_EXPANSION):
            need = slope(lo) > 0
            if not need.any():
                break
            lo = np.where(need, lo / grow, lo)
            grow = np.where(need, grow * grow, grow)
        # safeguarded Newton: the slope is increasing, its derivative is
        # 2 rho + b u^3 e^u / c, and any step leaving the bracket bisects
        x = np.where((x0 > lo) & (x0 < hi), x0, 0.5 * (lo + hi))
        done = lo >= hi
        for _ in range(MAX_BISECTION):
            s_x = slope(x)
            lo = np.where(s_x < 0, x, lo)
            hi = np.where(s_x > 0, x, hi)
            done = done | (s_x == 0) | (hi - lo <= 1e-13 * hi)
            if done.all():
                break
            step = s_x / curvature(x)
            newton = x - step
            ok = np.isfinite(newton) & (newton > lo) & (newton < hi)
            done = done | (np.abs(step) <= 1e-14 * x)
            x = np.where(done, x, np.where(ok, newton, 0.5 * (lo + hi)))
        else:
            raise ConvergenceError("a-step root search did not converge")
        a_pos = np.where(lo >= hi, lo, x)
        off = _offload_energy(b, S, B, a_pos) + rho * (tau - a_pos) ** 2
    loc = local + rho * tau**2
    take = usable & (off < loc)
    return np.where(take, a_pos, 0.0)


def penalty_a_step(dev, B: float, b: float, tau: float, rho: float, T: float) -> float:
    """Best artificial time ``a >= 0`` for one device given its current ``tau``.

    Compares the local branch ``a = 0`` with the stationary point of the
    smooth offload branch, the root of its (increasing) derivative.
    """
    if tau < 0 or not rho > 0:
        raise DomainError("need tau >= 0 and rho > 0")
    a = _a_step(
        np.array([dev.S_bits]),
        B,
        np.array([float(b)]),
        np.array([dev.local_constant(T)]),
        np.array([float(tau)]),
        rho,
        np.array([True]),
    )
    return float(a[0])


def penalized_objective(S, B, b, local, a, tau, rho) -> float:
    """Penalised energy with the artificial times ``a`` and the real split ``tau``."""
    a = np.asarray(a, dtype=float)
    energy = np.where(a > 0, _offload_energy(b, S, B, a), local)
    return float(np.sum(energy) + rho * np.sum((np.asarray(tau) - a) ** 2))


def project_simplex(t, T: float) -> np.ndarray:
    """Euclidean projection onto ``{tau >= 0, sum(tau) <= T}``."""
    if not T > 0:
        raise DomainError("T must be > 0")
    t = np.asarray(t, dtype=float)
    clipped = np.maximum(t, 0.0)
    if np.sum(clipped) <= T:
        return clipped
    lo, hi = 0.0, float(np.max(t))
    for _ in range(MAX_BISECTION):
        mu = 0.5 * (lo + hi)
        if not lo < mu < hi:
            break
        if not np.any((t > lo) & (t < hi)):
            break  # active set fixed; threshold computed exactly below
        if np.sum(np.maximum(t - mu, 0.0)) > T:
            lo = mu
        else:
            hi = mu
    mu = 0.5 * (lo + hi)
    # exact threshold from the active set found by the bisection
    on = t > mu
    if on.any():
        exact = (np.sum(t[on]) - T) / np.count_nonzero(on)
        if np.all(t[on] > exact) and np.all(t[~on] <= exact):
            mu = exact
    return np.maximum(t - mu, 0.0)


def pgd_tau_step(a, tau_init, T: float, step: float = 0.5, max_iter: int = 100) -> np.ndarray:
    """Projected gradient descent on ``sum(tau^2 - 2 a tau)`` over the simplex.

    With the default step of 1/2 the first projected step lands on the exact
    minimiser; the loop then stops on the next, unchanged, iterate.
    """
    a = np.asarray(a, dtype=float)
    tau = np.asarray(tau_init, dtype=float).copy()
    for _ in range(max_iter):
        t = tau - step * (2.0 * tau - 2.0 * a)
        if np.all(t >= 0) and np.sum(t) <= T:
            new = t
        else:
            new = project_simplex(t, T)
        done = np.max(np.abs(new - tau), initial=0.0) <= 1e-15 * T
        tau = new
        if done:
            break
    return tau


def penalty_solve(
    devs,
    sys: SystemParams,
    b,
    rho: float = DEFAULT_RHO,
    theta=None,
    max_iter: int = 500,
    tol: float = 1e-8,
    round_tol: float = 1e-6,
) -> SolverReport:
    """Penalty method with block coordinate descent on ``(a, tau)``.

    Starts from the equal split ``tau = T / N``.  Each iteration minimises
    every ``a_n`` exactly (independently per device), then ``tau`` by
    projected gradient descent.  Stops when the penalised objective changes
    by less than ``tol`` (relative) or after ``max_iter`` iterations.  Devices
    with ``tau_n < round_tol * T`` compute locally; the time split of the rest
    is re-solved exactly, and the result falls back to all-local computing if
    that is cheaper.  ``history`` lists the penalised objective after every
    half-step.
    """
    if not rho > 0:
        raise DomainError("rho must be > 0")
    t0 = time.perf_counter()
    devs, arr, b, usable = _setup(devs, sys, b)
    local = arr.local_constant(sys.T)
    b_safe = np.where(usable, b, 1.0)
    state = PenaltyState(a=np.zeros(sys.N), tau=np.full(sys.N, sys.T / sys.N), rho=rho)
    history: list[float] = []
    prev = math.inf
    for it in range(1, max_iter + 1):
        state.iteration = it
        state.a = _a_step(arr.S, sys.B, b_safe, local, state.tau, rho, usable, state.a)
        history.append(penalized_objective(arr.S, sys.B, b_safe, local, state.a, state.tau, rho))
        state.tau = pgd_tau_step(state.a, state.tau, sys.T)
        cur = penalized_objective(arr.S, sys.B, b_safe, local, state.a, state.tau, rho)
        history.append(cur)
        if abs(prev - cur) <= tol * abs(cur):
            break
        prev = cur

    offload = usable & (state.tau >= round_tol * sys.T)
    calls = 0
    nu = None
    tau = np.zeros(sys.N)
    if offload.any():
        cand, nus = _allocate(offload[None, :], b, arr.S, sys.B, sys.T)
        calls = 1
        # keep the repaired split only if it beats computing everything locally
        if np.sum(_offload_energy(b[offload], arr.S[offload], sys.B, cand[0][offload])) < np.sum(local[offload]):
            tau, nu = cand[0], float(nus[0])
    return _report(devs, sys, b, tau, theta, t0, state.iteration, calls, history, nu)
