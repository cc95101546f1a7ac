"""Problem instances: geometry, device placement and channel draws.

The access point (edge server) stands at the origin.  The IRS sits on the
x axis at ``ap_irs_horizontal`` metres.  Devices are split into a far group,
spread on a circle of radius ``d1`` around the server's ground projection,
and a near-IRS group on a half circle of radius ``d2`` around the IRS's
ground projection, on the side facing the server.  Far devices take the
first ``n_far`` indices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelSet, PathLossParams, path_loss, sample_rayleigh, sample_rician
from .errors import DomainError
from .model import DeviceParams, SystemParams, as_device_list


@dataclass(frozen=True)
class Geometry:
    """Heights and radii in metres."""

    server_height: float = 10.0
    irs_height: float = 5.0
    device_height: float = 0.0
    d1: float = 20.0
    d2: float = 3.0
    ap_irs_horizontal: float = 50.0
    #: angular span (radians) of the near-IRS arc, centred on the server direction
    near_arc: float = math.pi

    def __post_init__(self):
        for name in ("d1", "d2", "ap_irs_horizontal"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise DomainError(f"Geometry.{name} must be finite and > 0, got {value!r}")
        for name in ("server_height", "irs_height", "device_height"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"Geometry.{name} must be finite")
        if not 0 < self.near_arc <= 2 * math.pi:
            raise DomainError("Geometry.near_arc must lie in (0, 2*pi]")

    @property
    def server_pos(self) -> np.ndarray:
        return np.array([0.0, 0.0, self.server_height])

    @property
    def irs_pos(self) -> np.ndarray:
        return np.array([self.ap_irs_horizontal, 0.0, self.irs_height])


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to draw one random instance."""

    sys: SystemParams = field(default_factory=SystemParams)
    devs: DeviceParams | tuple = field(default_factory=DeviceParams)
    geometry: Geometry = field(default_factory=Geometry)
    path_loss: PathLossParams = field(default_factory=PathLossParams)
    rician_K: float = 100.0
    n_far: int | None = None
    n_near: int | None = None

    def __post_init__(self):
        N = self.sys.N
        n_far, n_near = self.n_far, self.n_near
        if n_far is None and n_near is None:
            n_far = N // 2
        if n_far is None:
            n_far = N - n_near
        if n_near is None:
            n_near = N - n_far
        if n_far < 0 or n_near < 0 or n_far + n_near != N:
            raise DomainError(f"n_far + n_near must equal N={N}, got {n_far} + {n_near}")
        if not (math.isfinite(self.rician_K) and self.rician_K >= 0):
            raise DomainError("rician_K must be finite and >= 0")
        object.__setattr__(self, "n_far", int(n_far))
        object.__setattr__(self, "n_near", int(n_near))
        devs = tuple(as_device_list(self.devs, N))
        for d in devs:
            d.check_deadline(self.sys.T)
        object.__setattr__(self, "devs", devs)

    @property
    def near_irs(self) -> np.ndarray:
        """Boolean mask of the near-IRS group."""
        mask = np.zeros(self.sys.N, dtype=bool)
        mask[self.n_far:] = True
        return mask

    def with_sys(self, **changes) -> "ScenarioConfig":
        """Copy with some ``SystemParams`` fields replaced.

        Changing ``N`` keeps the far/near split at ``N // 2`` far devices and
        reuses the first device's constants for every device.
        """
        from dataclasses import replace

        sys = replace(self.sys, **changes)
        if sys.N == self.sys.N:
            return replace(self, sys=sys)
        return replace(self, sys=sys, devs=self.devs[0], n_far=sys.N // 2, n_near=None)


def place_devices(cfg: ScenarioConfig, rng: np.random.Generator) -> np.ndarray:
    """Random device positions, shape ``(N, 3)``.

    Far angles are drawn first (one block), then near angles.
    """
    geo = cfg.geometry
    far = rng.uniform(0.0, 2 * math.pi, cfg.n_far)
    near = rng.uniform(-0.5 * geo.near_arc, 0.5 * geo.near_arc, cfg.n_near) + math.pi
    pos = np.empty((cfg.sys.N, 3))
    pos[: cfg.n_far, 0] = geo.d1 * np.cos(far)
    pos[: cfg.n_far, 1] = geo.d1 * np.sin(far)
    pos[cfg.n_far:, 0] = geo.ap_irs_horizontal + geo.d2 * np.cos(near)
    pos[cfg.n_far:, 1] = geo.d2 * np.sin(near)
    pos[:, 2] = geo.device_height
    return pos


def link_distances(cfg: ScenarioConfig, positions: np.ndarray):
    """3-D distances ``(device-server, device-IRS, IRS-server)``."""
    geo = cfg.geometry
    positions = np.asarray(positions, dtype=float).reshape(-1, 3)
    d_g = np.linalg.norm(positions - geo.server_pos, axis=1)
    d_h = np.linalg.norm(positions - geo.irs_pos, axis=1)
    d_r = float(np.linalg.norm(geo.irs_pos - geo.server_pos))
    return d_g, d_h, d_r


def build_channels(cfg: ScenarioConfig, positions: np.ndarray, rng: np.random.Generator) -> ChannelSet:
    """Draw ``g`` (Rayleigh), then ``h`` (Rayleigh), then ``r`` (Rician)."""
    N, M = cfg.sys.N, cfg.sys.M
    d_g, d_h, d_r = link_distances(cfg, positions)
    g = sample_rayleigh(N, path_loss(d_g, cfg.path_loss), rng)
    h = sample_rayleigh((N, M), path_loss(d_h, cfg.path_loss)[:, None], rng)
    r = sample_rician(M, path_loss(d_r, cfg.path_loss), cfg.rician_K, rng)
    return ChannelSet(g, h, r)
