"""Fading channels and IRS phase design.

Random draws always go through an explicit :class:`numpy.random.Generator`.
A circularly-symmetric complex Gaussian entry is built from two independent
real normals of variance 1/2 each, the real parts drawn first as one block
and the imaginary parts second.  With PCG64 this gives bit-identical
channels for a given seed on every platform.

Phase vectors are per device: the IRS is reconfigured for each device's
transmission slot, so every device gets its own co-phasing pattern.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import BudgetError, DomainError
from .model import TWO_PI

#: composite power gains below this are treated as a dead link
DEGENERATE_GAIN = 1e-30
BRUTE_FORCE_BUDGET = 10**6


@dataclass(frozen=True)
class PathLossParams:
    """Distance-based path loss ``lambda (d / D0)^-alpha``."""

    lam: float = 1e-3
    D0: float = 1.0
    alpha: float = 3.0

    def __post_init__(self):
        for name in ("lam", "D0", "alpha"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise DomainError(f"PathLossParams.{name} must be finite and > 0, got {value!r}")


@dataclass
class ChannelSet:
    """One realisation of all links.

    ``g`` has shape ``(N,)`` (device to server), ``h`` shape ``(N, M)`` (device
    to IRS) and ``r`` shape ``(M,)`` (IRS to server).
    """

    g: np.ndarray
    h: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        self.g = np.asarray(self.g, dtype=complex).reshape(-1)
        self.r = np.asarray(self.r, dtype=complex).reshape(-1)
        self.h = np.asarray(self.h, dtype=complex).reshape(self.g.size, self.r.size)
        for name in ("g", "h", "r"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise DomainError(f"channel {name} has non-finite entries")

    @property
    def N(self) -> int:
        return self.g.size

    @property
    def M(self) -> int:
        return self.r.size

    def without_irs(self) -> "ChannelSet":
        return ChannelSet(self.g, np.zeros((self.N, 0), dtype=complex), np.zeros(0, dtype=complex))


@dataclass
class EffectiveLink:
    """Phase vector of one device with the resulting power gain and ``b = sigma2 / gain2``."""

    theta: np.ndarray
    gain2: float
    b: float
    degenerate: bool


def path_loss(d, p: PathLossParams = PathLossParams()):
    d = np.asarray(d, dtype=float)
    if np.any(~(d > 0)):
        raise DomainError("distance must be > 0")
    out = p.lam * (d / p.D0) ** (-p.alpha)
    return float(out) if out.ndim == 0 else out


def _cn01(shape, rng: np.random.Generator) -> np.ndarray:
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return math.sqrt(0.5) * (re + 1j * im)


def sample_rayleigh(count, scale, rng: np.random.Generator) -> np.ndarray:
    """i.i.d. CN(0, scale) entries.  ``scale`` may be an array broadcastable to ``count``."""
    scale = np.asarray(scale, dtype=float)
    if np.any(scale < 0):
        raise DomainError("scale must be >= 0")
    return np.sqrt(scale) * _cn01(count, rng)


def sample_rician(count, scale, K: float, rng: np.random.Generator) -> np.ndarray:
    """Rician entries with linear factor ``K`` and an all-ones line-of-sight component.

    Consumes exactly the same random numbers as :func:`sample_rayleigh`, so
    ``K = 0`` reproduces it draw for draw.
    """
    scale = np.asarray(scale, dtype=float)
    if np.any(scale < 0) or K < 0:
        raise DomainError("scale and K must be >= 0")
    scatter = _cn01(count, rng)
    los = math.sqrt(K / (K + 1.0))
    nlos = math.sqrt(1.0 / (K + 1.0))
    return np.sqrt(scale) * (los + nlos * scatter)


def _wrap(theta: np.ndarray) -> np.ndarray:
    theta = np.mod(theta, TWO_PI)
    # np.mod can round a tiny negative up to exactly 2*pi
    return np.where(theta >= TWO_PI, 0.0, theta)


def optimal_phases_continuous(g, h, r) -> np.ndarray:
    """Co-phase every reflected path with the direct path.

    Works for one device (``g`` scalar, ``h`` of shape ``(M,)``) or for all
    devices at once (``g`` of shape ``(N,)``, ``h`` of shape ``(N, M)``).
    With ``g == 0`` the direct phase is taken as 0.
    """
    g = np.asarray(g, dtype=complex)
    h = np.asarray(h, dtype=complex)
    r = np.asarray(r, dtype=complex)
    cascade = r * h
    return _wrap(np.angle(g)[..., None] - np.angle(cascade))


def composite_amplitude(g, h, r, theta) -> np.ndarray:
    """``|sum_m r_m e^{j theta_m} h_m + g|``, vectorised over leading axes."""
    g = np.asarray(g, dtype=complex)
    cascade = np.asarray(r, dtype=complex) * np.asarray(h, dtype=complex)
    return np.abs(np.sum(cascade * np.exp(1j * np.asarray(theta, dtype=float)), axis=-1) + g)


def effective_gain(g, h, r, theta, sigma2: float) -> EffectiveLink:
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < 0) or np.any(theta >= TWO_PI):
        raise DomainError("phases must lie in [0, 2*pi)")
    gain2 = float(composite_amplitude(g, h, r, theta)) ** 2
    degenerate = gain2 < DEGENERATE_GAIN
    b = sigma2 / gain2 if gain2 > 0 else math.inf
    return EffectiveLink(theta=theta, gain2=gain2, b=b, degenerate=degenerate)


def inverse_gain(gain2, sigma2: float) -> np.ndarray:
    """Vector form of ``b = sigma2 / gain2`` (``inf`` for an exactly-zero gain)."""
    gain2 = np.asarray(gain2, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(gain2 > 0, sigma2 / np.where(gain2 > 0, gain2, 1.0), np.inf)


def quantize_phases(theta_cont, L: int) -> np.ndarray:
    """Round each phase to the nearest of ``{0, 2pi/L, ..., (L-1)2pi/L}`` on the circle."""
    if L < 1:
        raise DomainError("L must be >= 1")
    theta_cont = np.asarray(theta_cont, dtype=float)
    step = TWO_PI / L
    k = np.mod(np.rint(theta_cont / step), L)
    return k * step


def am_discrete_phases(g, h, r, L: int, theta_init, history: list | None = None) -> np.ndarray:
    """Alternating maximisation of the composite amplitude over discrete phases.

    Sweeps ``k = 0 .. M-1``, setting ``theta_k`` to its best level with the
    other phases held, and repeats until a whole sweep changes nothing.  A
    coordinate only moves on strict improvement.  ``g``/``h`` may carry a
    leading device axis; devices are updated independently.  If ``history``
    is a list, the amplitude(s) after every coordinate update are appended.
    """
    if L < 1:
        raise DomainError("L must be >= 1")
    g = np.asarray(g, dtype=complex)
    cascade = np.asarray(r, dtype=complex) * np.asarray(h, dtype=complex)
    step = TWO_PI / L
    levels = np.arange(L) * step
    rot = np.exp(1j * levels)
    k_idx = np.mod(np.rint(np.asarray(theta_init, dtype=float) / step), L).astype(int)
    k_idx = np.broadcast_to(k_idx, cascade.shape).copy()
    M = cascade.shape[-1]
    if M == 0:
        return k_idx * step

    for _ in range(10_000):
        total = np.asarray(np.sum(cascade * rot[k_idx], axis=-1) + g)
        changed = False
        for m in range(M):
            c = cascade[..., m]
            rest = total - c * rot[k_idx[..., m]]
            cand = np.abs(rest[..., None] + c[..., None] * rot)
            best = np.argmax(cand, axis=-1)
            cur_amp = np.take_along_axis(cand, k_idx[..., m][..., None], axis=-1)[..., 0]
            best_amp = np.take_along_axis(cand, best[..., None], axis=-1)[..., 0]
            move = best_amp > cur_amp
            if np.any(move):
                changed = True
                k_idx[..., m] = np.where(move, best, k_idx[..., m])
                total = rest + c * rot[k_idx[..., m]]
            if history is not None:
                history.append(np.abs(total).copy() if np.ndim(total) else float(np.abs(total)))
        if not changed:
            break
    return k_idx * step


def brute_force_discrete_phases(g, h, r, L: int) -> np.ndarray:
    """Exhaustive search over all ``L**M`` discrete phase vectors (test oracle, one device)."""
    h = np.asarray(h, dtype=complex).reshape(-1)
    M = h.size
    if L**M > BRUTE_FORCE_BUDGET:
        raise BudgetError(f"L^M = {L}^{M} exceeds the brute-force budget of {BRUTE_FORCE_BUDGET}")
    if M == 0:
        return np.zeros(0)
    cascade = np.asarray(r, dtype=complex).reshape(-1) * h
    rot = np.exp(1j * np.arange(L) * TWO_PI / L)
    best_amp = -1.0
    best = np.zeros(M, dtype=int)
    grid = itertools.product(range(L), repeat=M)
    while True:
        chunk = np.array(list(itertools.islice(grid, 65536)), dtype=int).reshape(-1, M)
        if chunk.shape[0] == 0:
            break
        amp = np.abs(np.sum(cascade * rot[chunk], axis=-1) + g)
        i = int(np.argmax(amp))
        if amp[i] > best_amp:
            best_amp = float(amp[i])
            best = chunk[i]
    return best * (TWO_PI / L)
