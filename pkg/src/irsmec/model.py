"""Energy, rate and power models for IRS-aided binary offloading.

A device either computes its task locally at the slowest CPU frequency that
still meets the frame deadline, or uploads the whole task to the edge server
inside an exclusive time slot.  Everything here is a closed-form expression;
the optimisation lives in :mod:`irsmec.solvers`.

Units are SI throughout (J, s, Hz, W, bits) and nothing is converted
implicitly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DegenerateChannelError, DomainError, InfeasibleError

#: Decimal megabyte in bits.  Task sizes quoted in MB use this factor.
MEGABYTE_BITS = 8e6

LN2 = math.log(2.0)
TWO_PI = 2.0 * math.pi

# below this the closed form for _excess cancels badly; use the series
_SERIES_CUTOFF = 1e-4


@dataclass(frozen=True)
class DeviceParams:
    """Per-device task and CPU constants.

    Attributes
    ----------
    epsilon : float
        Effective switched capacitance of the chip (J / (cycle Hz^2)).
    S_bits : float
        Task size in bits.
    C : float
        CPU cycles needed per bit.
    f_max : float
        Maximum CPU frequency in Hz.
    """

    epsilon: float = 1e-28
    S_bits: float = MEGABYTE_BITS
    C: float = 100.0
    f_max: float = 1e9

    def __post_init__(self):
        for name in ("epsilon", "S_bits", "C", "f_max"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise DomainError(f"DeviceParams.{name} must be finite and > 0, got {value!r}")

    @property
    def cycles(self) -> float:
        return self.S_bits * self.C

    def check_deadline(self, T: float) -> None:
        """Raise :class:`InfeasibleError` if the task cannot finish within ``T`` at ``f_max``."""
        if T * self.f_max < self.cycles * (1.0 - 1e-12):
            raise InfeasibleError(
                f"device needs {self.cycles:.6g} cycles but T*f_max = {T * self.f_max:.6g}"
            )

    def local_constant(self, T: float) -> float:
        """Local energy at the deadline-tight frequency, epsilon S^3 C^3 / T^2."""
        return self.epsilon * self.cycles**3 / T**2


@dataclass(frozen=True)
class SystemParams:
    """Network-wide constants.  ``M == 0`` means there is no IRS; ``L is None`` means continuous phases."""

    N: int = 8
    M: int = 100
    B: float = 1e7
    sigma2: float = 1e-10
    T: float = 1.0
    L: int | None = None

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise DomainError(f"N must be an integer >= 1, got {self.N!r}")
        if int(self.M) != self.M or self.M < 0:
            raise DomainError(f"M must be an integer >= 0, got {self.M!r}")
        for name in ("B", "sigma2", "T"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise DomainError(f"SystemParams.{name} must be finite and > 0, got {value!r}")
        if self.L is not None and (int(self.L) != self.L or self.L < 1):
            raise DomainError(f"L must be an integer >= 1 when given, got {self.L!r}")


@dataclass
class OffloadSolution:
    """A complete assignment of the decision variables of the energy problem.

    ``beta[n] == 1`` offloads device ``n`` during ``tau[n]`` seconds at power
    ``P[n]``; ``beta[n] == 0`` computes locally at frequency ``f[n]``.
    ``theta`` has shape ``(N, M)``.
    """

    beta: np.ndarray
    tau: np.ndarray
    f: np.ndarray
    P: np.ndarray
    theta: np.ndarray
    total_energy: float

    @property
    def offload_set(self) -> list[int]:
        return [int(n) for n in np.flatnonzero(self.beta == 1)]

    def to_dict(self) -> dict:
        return {
            "beta": [int(x) for x in self.beta],
            "tau": [float(x) for x in self.tau],
            "f": [float(x) for x in self.f],
            "P": [float(x) for x in self.P],
            "theta": [[float(x) for x in row] for row in np.asarray(self.theta)],
            "total_energy": float(self.total_energy),
        }


@dataclass(frozen=True)
class Violation:
    constraint: str
    device: int | None
    slack: float


@dataclass
class FeasibilityReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return not self.violations

    def constraints(self) -> set[str]:
        return {v.constraint for v in self.violations}


@dataclass
class Evaluation:
    total_energy: float
    report: FeasibilityReport


class DeviceArrays:
    """Column view of a device list, used by the vectorised solvers."""

    def __init__(self, devs: Sequence[DeviceParams]):
        if isinstance(devs, DeviceParams):
            devs = [devs]
        self.devs = tuple(devs)
        self.epsilon = np.array([d.epsilon for d in self.devs], dtype=float)
        self.S = np.array([d.S_bits for d in self.devs], dtype=float)
        self.C = np.array([d.C for d in self.devs], dtype=float)
        self.f_max = np.array([d.f_max for d in self.devs], dtype=float)

    def __len__(self):
        return len(self.devs)

    def local_constant(self, T: float) -> np.ndarray:
        return self.epsilon * (self.S * self.C) ** 3 / T**2


def as_device_list(devs, N: int | None = None) -> list[DeviceParams]:
    """Accept a single :class:`DeviceParams` (replicated ``N`` times) or a sequence."""
    if isinstance(devs, DeviceParams):
        if N is None:
            return [devs]
        return [devs] * N
    devs = list(devs)
    if N is not None and len(devs) != N:
        raise DomainError(f"expected {N} devices, got {len(devs)}")
    return devs


def _scalar_or_array(x):
    x = np.asarray(x)
    return float(x) if x.ndim == 0 else x


def excess(u):
    """``1 + e^u (u - 1)``, accurate for small ``u`` and +inf on overflow.

    This is the (negated, normalised) derivative of the offload energy as a
    function of the spectral load ``u = S ln2 / (tau B)``.
    """
    u = np.asarray(u, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        closed = np.expm1(u) * (u - 1.0) + u
    series = u * u * (0.5 + u * (1.0 / 3.0 + u * (0.125 + u / 30.0)))
    return np.where(u < _SERIES_CUTOFF, series, closed)


def spectral_load(S, B, tau):
    """``u = S ln2 / (tau B)``, i.e. the exponent of 2^{S/(tau B)} in natural-log units."""
    return np.asarray(S, dtype=float) * LN2 / (np.asarray(tau, dtype=float) * B)


def local_energy(dev: DeviceParams, f: float) -> float:
    """Energy of computing the whole task locally at frequency ``f``."""
    if not (0.0 <= f <= dev.f_max):
        raise DomainError(f"frequency {f!r} outside [0, {dev.f_max}]")
    return dev.epsilon * dev.S_bits * dev.C * f * f


def optimal_local_frequency(dev: DeviceParams, T: float) -> float:
    """Slowest frequency meeting the deadline ``T``; it minimises local energy."""
    if not T > 0:
        raise DomainError(f"T must be > 0, got {T!r}")
    f = dev.cycles / T
    if f > dev.f_max * (1.0 + 1e-12):
        raise InfeasibleError(f"required frequency {f:.6g} Hz exceeds f_max {dev.f_max:.6g} Hz")
    return min(f, dev.f_max)


def phi(dev: DeviceParams, B: float, tau):
    """Normalised offload energy ``tau (2^{S/(tau B)} - 1)``, zero at ``tau == 0``.

    Multiplying by ``b = sigma2 / gain2`` gives joules.  Vectorised over ``tau``.
    """
    t = np.asarray(tau, dtype=float)
    if np.any(t < 0) or np.any(np.isnan(t)):
        raise DomainError("tau must be >= 0")
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        val = t * np.expm1(spectral_load(dev.S_bits, B, t))
    return _scalar_or_array(np.where(t > 0, val, 0.0))


def offload_power(dev: DeviceParams, B: float, sigma2: float, gain2: float, tau):
    """Transmit power that uploads ``S`` bits in exactly ``tau`` seconds."""
    if not gain2 > 0:
        raise DegenerateChannelError(f"channel power gain must be > 0, got {gain2!r}")
    t = np.asarray(tau, dtype=float)
    if np.any(~(t > 0)):
        raise DomainError("tau must be > 0 for an offloading device")
    with np.errstate(over="ignore"):
        p = np.expm1(spectral_load(dev.S_bits, B, t)) * sigma2 / gain2
    return _scalar_or_array(p)


def achievable_rate(P, gain2, B: float, sigma2: float):
    """Shannon rate ``B log2(1 + gain2 P / sigma2)`` in bit/s."""
    P = np.asarray(P, dtype=float)
    gain2 = np.asarray(gain2, dtype=float)
    if np.any(P < 0) or np.any(gain2 < 0):
        raise DomainError("power and gain must be >= 0")
    return _scalar_or_array(B * np.log1p(gain2 * P / sigma2) / LN2)


def solution_energy(devs, sol: OffloadSolution) -> float:
    """Objective value sum_n beta P tau + (1 - beta) eps S C f^2 of the stored variables."""
    arr = DeviceArrays(devs)
    beta = np.asarray(sol.beta, dtype=float)
    terms = beta * sol.P * sol.tau + (1.0 - beta) * arr.epsilon * arr.S * arr.C * sol.f**2
    return float(np.sum(terms))


def evaluate_solution(devs, sys: SystemParams, sol: OffloadSolution, gain2=None) -> Evaluation:
    """Total energy of ``sol`` plus a list of every violated constraint and its slack.

    Infeasibility is reported, never raised.  When the composite channel gains
    are supplied the rate constraint tau = S / R is checked as well.  A local
    device with ``f == 0`` has simply not processed its task and is not
    flagged by the deadline check.
    """
    devs = as_device_list(devs, sys.N)
    arr = DeviceArrays(devs)
    beta = np.asarray(sol.beta)
    tau = np.asarray(sol.tau, dtype=float)
    f = np.asarray(sol.f, dtype=float)
    P = np.asarray(sol.P, dtype=float)
    theta = np.asarray(sol.theta, dtype=float)
    total = solution_energy(devs, sol)
    out: list[Violation] = []

    for n in range(sys.N):
        if beta[n] not in (0, 1):
            out.append(Violation("3b", n, -abs(float(beta[n]))))
        if tau[n] < 0 or (beta[n] == 1) != (tau[n] > 0):
            out.append(Violation("mode", n, float(min(tau[n], 0.0)) if tau[n] < 0 else -float(abs(tau[n]))))

    slack = sys.T - float(np.sum(tau))
    if slack < -1e-9 * sys.T:
        out.append(Violation("3c", None, slack))

    for n in range(sys.N):
        if beta[n] == 0 and f[n] > 0:
            s = sys.T - arr.S[n] * arr.C[n] / f[n]
            if s < -1e-12 * sys.T:
                out.append(Violation("3d", n, float(s)))
        if gain2 is not None and beta[n] == 1 and tau[n] > 0:
            g2 = float(np.asarray(gain2)[n])
            rate = achievable_rate(P[n], g2, sys.B, sys.sigma2) if g2 > 0 else 0.0
            needed = arr.S[n] / rate if rate > 0 else math.inf
            if not abs(needed - tau[n]) <= 1e-9 * tau[n]:
                out.append(Violation("3e", n, -abs(needed - tau[n])))
        if theta.size:
            row = theta[n]
            bad = (row < 0) | (row >= TWO_PI) | ~np.isfinite(row)
            if np.any(bad):
                worst = float(np.min(np.minimum(row[bad], TWO_PI - row[bad])))
                out.append(Violation("3f", n, worst if math.isfinite(worst) else -math.inf))
        if f[n] < 0 or f[n] > arr.f_max[n] * (1.0 + 1e-12):
            out.append(Violation("3g", n, float(min(f[n], arr.f_max[n] - f[n]))))
        if P[n] < 0 or not math.isfinite(P[n]):
            out.append(Violation("3h", n, float(P[n]) if math.isfinite(P[n]) else -math.inf))

    stored = float(sol.total_energy)
    if not abs(stored - total) <= 1e-12 * max(abs(total), 1e-300):
        out.append(Violation("objective", None, -abs(stored - total)))
    return Evaluation(total, FeasibilityReport(out))
