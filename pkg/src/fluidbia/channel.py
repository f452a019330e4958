"""Field-response channel model for a fluid-antenna receiver.

A user's channel at receive position ``u`` is the 1x2 row vector

    h(u) = f(u)^H  Sigma  G

with ``f`` the receive field-response vector (one unit-modulus phase per
receive path), ``Sigma`` the path-response matrix and ``G`` the transmit
field-response matrix evaluated at the two fixed base-station antennas.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .numerics import hermitian_sqrt, standard_complex_normal

__all__ = [
    "SPEED_OF_LIGHT",
    "CARRIER_FREQ",
    "wavelength_for",
    "PathAngles",
    "ScatteringGeometry",
    "CsiErrorModel",
    "DEFAULT_ERROR_COV",
    "direction_cosines",
    "frv",
    "frm",
    "channel_at",
    "channel_many",
    "sample_geometry",
    "apply_csi_error",
    "draw_csi_errors",
]

SPEED_OF_LIGHT = 299_792_458.0
CARRIER_FREQ = 60e9

# Spatially correlated estimation-error covariance, scaled by eta.
DEFAULT_ERROR_COV = np.array([[0.02, 0.01], [0.01, 0.02]], dtype=np.complex128)


def wavelength_for(freq_hz):
    return SPEED_OF_LIGHT / freq_hz


@dataclass(frozen=True)
class PathAngles:
    """Pitch ``theta`` and azimuth ``phi`` of one path, both in [-pi/2, pi/2]."""

    theta: float
    phi: float

    def __post_init__(self):
        half = math.pi / 2
        for name in ("theta", "phi"):
            v = getattr(self, name)
            if not (-half - 1e-15 <= v <= half + 1e-15):
                raise ValueError(f"{name}={v} outside [-pi/2, pi/2]")


def direction_cosines(a):
    """Return ``(cos t cos p, cos t sin p, sin t)`` for a :class:`PathAngles`."""
    ct = math.cos(a.theta)
    return ct * math.cos(a.phi), ct * math.sin(a.phi), math.sin(a.theta)


def _dirs(angles):
    # angles: (L, 2) -> (L, 3) direction cosines
    th, ph = angles[:, 0], angles[:, 1]
    return np.stack([np.cos(th) * np.cos(ph), np.cos(th) * np.sin(ph), np.sin(th)], axis=-1)


@dataclass(frozen=True, eq=False)
class ScatteringGeometry:
    """Per-user propagation geometry.

    Attributes
    ----------
    rx_angles, tx_angles : ndarray, shape (L, 2)
        ``(theta, phi)`` per receive / transmit path.
    prm : ndarray, shape (L_r, L_t), complex
        Path-response matrix.
    tx_positions : ndarray, shape (2, 3)
        Fixed base-station antenna positions in meters.
    wavelength : float
        Carrier wavelength in meters.
    """

    rx_angles: np.ndarray
    tx_angles: np.ndarray
    prm: np.ndarray
    tx_positions: np.ndarray
    wavelength: float
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        rx = np.asarray(self.rx_angles, dtype=float).reshape(-1, 2)
        tx = np.asarray(self.tx_angles, dtype=float).reshape(-1, 2)
        prm = np.asarray(self.prm, dtype=np.complex128)
        txp = np.asarray(self.tx_positions, dtype=float).reshape(2, 3)
        if len(rx) < 1 or len(tx) < 1:
            raise ValueError("need at least one receive and one transmit path")
        if prm.shape != (len(rx), len(tx)):
            raise ValueError(f"prm shape {prm.shape} != ({len(rx)}, {len(tx)})")
        if not self.wavelength > 0:
            raise ValueError("wavelength must be positive")
        half = math.pi / 2 + 1e-15
        if np.any(np.abs(rx) > half) or np.any(np.abs(tx) > half):
            raise ValueError("path angles must lie in [-pi/2, pi/2]")
        for name, v in (("rx_angles", rx), ("tx_angles", tx), ("prm", prm), ("tx_positions", txp)):
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @property
    def num_rx_paths(self):
        return self.rx_angles.shape[0]

    @property
    def num_tx_paths(self):
        return self.tx_angles.shape[0]

    @property
    def wavenumber(self):
        return 2.0 * math.pi / self.wavelength

    @property
    def rx_dirs(self):
        if "rx_dirs" not in self._cache:
            self._cache["rx_dirs"] = _dirs(self.rx_angles)
        return self._cache["rx_dirs"]

    @property
    def tx_dirs(self):
        if "tx_dirs" not in self._cache:
            self._cache["tx_dirs"] = _dirs(self.tx_angles)
        return self._cache["tx_dirs"]

    @property
    def prm_frm(self):
        """``Sigma @ G``, shape (L_r, 2); position independent."""
        if "sg" not in self._cache:
            self._cache["sg"] = np.ascontiguousarray(self.prm @ frm(self))
        return self._cache["sg"]

    def scaled(self, c):
        """Same geometry with the path-response matrix multiplied by ``c``."""
        return ScatteringGeometry(self.rx_angles, self.tx_angles, self.prm * c,
                                  self.tx_positions, self.wavelength)

    def to_dict(self):
        return {
            "rx_angles": self.rx_angles.tolist(),
            "tx_angles": self.tx_angles.tolist(),
            "prm_re": self.prm.real.tolist(),
            "prm_im": self.prm.imag.tolist(),
            "tx_positions": self.tx_positions.tolist(),
            "wavelength": self.wavelength,
        }

    @classmethod
    def from_dict(cls, d):
        prm = np.asarray(d["prm_re"], dtype=float) + 1j * np.asarray(d["prm_im"], dtype=float)
        return cls(np.asarray(d["rx_angles"]), np.asarray(d["tx_angles"]), prm,
                   np.asarray(d["tx_positions"]), float(d["wavelength"]))

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s):
        return cls.from_dict(json.loads(s))


def frv(geom, u):
    """Receive field-response vector at position ``u``; unit-modulus entries."""
    u = np.asarray(u, dtype=float)
    return np.exp(1j * geom.wavenumber * (geom.rx_dirs @ u))


def frm(geom):
    """Transmit field-response matrix, shape (L_t, 2)."""
    phases = geom.tx_dirs @ geom.tx_positions.T
    return np.exp(1j * geom.wavenumber * phases)


def channel_at(geom, u):
    """Channel row vector, length 2, at receive position ``u``."""
    return frv(geom, u).conj() @ geom.prm @ frm(geom)


def channel_many(geom, positions):
    """Channels at many positions; ``positions`` (..., 3) -> (..., 2)."""
    pos = np.asarray(positions, dtype=float)
    flat = np.ascontiguousarray(pos.reshape(-1, 3))
    h = kernels.channel_gains(geom.rx_dirs, geom.prm_frm, flat, geom.wavenumber)
    return h.reshape(pos.shape[:-1] + (2,))


def sample_geometry(num_rx_paths, num_tx_paths, wavelength, rng, tx_positions=None,
                    prm_variance=None, path_loss_distance=None):
    """Random geometry: uniform angles, i.i.d. CN(0, 1/L_t) path responses.

    ``path_loss_distance`` (meters), when given, scales the path responses by
    the free-space amplitude factor ``wavelength / (4 pi d)``.
    """
    if num_rx_paths < 1 or num_tx_paths < 1:
        raise ValueError("path counts must be >= 1")
    half = math.pi / 2
    rx = rng.uniform(-half, half, size=(num_rx_paths, 2))
    tx = rng.uniform(-half, half, size=(num_tx_paths, 2))
    var = 1.0 / num_tx_paths if prm_variance is None else prm_variance
    prm = standard_complex_normal(rng, (num_rx_paths, num_tx_paths)) * math.sqrt(var)
    if path_loss_distance is not None:
        prm = prm * (wavelength / (4.0 * math.pi * path_loss_distance))
    if tx_positions is None:
        tx_positions = np.array([[0.0, 0.0, 0.0], [wavelength / 2, 0.0, 0.0]])
    return ScatteringGeometry(rx, tx, prm, tx_positions, wavelength)


@dataclass(frozen=True, eq=False)
class CsiErrorModel:
    """Estimation error ``Delta ~ CN(0, scale * cov)`` per antenna pattern."""

    cov: np.ndarray = field(default_factory=lambda: DEFAULT_ERROR_COV.copy())
    scale: float = 1.0

    def __post_init__(self):
        cov = np.asarray(self.cov, dtype=np.complex128)
        if cov.shape != (2, 2):
            raise ValueError("error covariance must be 2x2")
        if self.scale < 0:
            raise ValueError("error scale must be >= 0")
        cov.setflags(write=False)
        object.__setattr__(self, "cov", cov)
        # raises if not Hermitian PSD
        object.__setattr__(self, "_root", hermitian_sqrt(cov * self.scale))

    @property
    def root(self):
        """Hermitian square root of ``scale * cov``."""
        return self._root


def draw_csi_errors(model, rng, size):
    """Error rows of shape ``size + (2,)`` distributed CN(0, scale*cov)."""
    lead = size if isinstance(size, tuple) else (size,)
    z = standard_complex_normal(rng, lead + (2,))
    return z @ model.root.conj().T


def apply_csi_error(true_h, model, rng):
    """Split a true channel into ``(estimate, error)`` with ``est + err == true``."""
    true_h = np.asarray(true_h, dtype=np.complex128)
    delta = draw_csi_errors(model, rng, ())
    return true_h - delta, delta
