"""Kronecker-correlated Rayleigh channels.

Correlation matrices come either from a clustered angular model (one
scatterer cluster with Gaussian angular spread seen from a uniform linear
array with half-wavelength spacing) or from explicit user matrices, and are
normalized to unit normalized trace.
"""

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConstraintError, DimensionError, DomainError
from .matcore import as_cmatrix, herm_eig, hermitian_sqrt, rng_stream, sample_circular_gaussian

__all__ = [
    "ClusterSpec",
    "ChannelModel",
    "clustered_correlation",
    "normalize_trace",
    "sample_channel",
    "sample_channels",
    "effective_transmit_correlation",
    "power",
    "matrix_to_json",
    "matrix_from_json",
]

PSD_TOL = 1e-12
POWER_TOL = 1e-12


@dataclass(frozen=True)
class ClusterSpec:
    """One scatterer cluster: mean angle, angular spread (radians), array size."""

    mean_angle: float
    angle_std: float
    size: int

    def __post_init__(self):
        if self.angle_std < 0:
            raise DomainError("angle_std must be nonnegative")
        if int(self.size) != self.size or self.size < 1:
            raise DomainError("size must be a positive integer")


def normalize_trace(c):
    """Scale ``c`` so that ``Tr(c)/n = 1``."""
    c = as_cmatrix(c, square=True)
    c = 0.5 * (c + c.conj().T)
    tr = np.trace(c).real / c.shape[0]
    if tr <= 0:
        raise DomainError("correlation matrix must have positive trace")
    return c / tr


def clustered_correlation(spec):
    """Correlation matrix of the clustered angular model.

    Entry ``(k, l)`` is ``exp(-i pi (k-l) cos(phi)) * exp(-(pi (k-l) sin(phi) s)^2 / 2)``
    with ``phi`` the mean angle and ``s`` the angular spread, rescaled to unit
    normalized trace.
    """
    n = int(spec.size)
    lag = np.subtract.outer(np.arange(n), np.arange(n)).astype(float)
    phase = np.exp(-1j * math.pi * lag * math.cos(spec.mean_angle))
    spread = np.exp(-0.5 * (math.pi * lag * math.sin(spec.mean_angle) * spec.angle_std) ** 2)
    return normalize_trace(phase * spread)


@dataclass(frozen=True, eq=False)
class ChannelModel:
    """Flat-fading channel ``H = C_R^{1/2} X C_T^{1/2} / sqrt(t)`` with noise ``sigma2``."""

    c_t: np.ndarray
    c_r: np.ndarray
    sigma2: float

    def __post_init__(self):
        c_t = as_cmatrix(self.c_t, square=True)
        c_r = as_cmatrix(self.c_r, square=True)
        for name, c in (("C_T", c_t), ("C_R", c_r)):
            c = 0.5 * (c + c.conj().T)
            n = c.shape[0]
            if abs(np.trace(c).real / n - 1.0) > 1e-12:
                raise DomainError(f"{name} must have unit normalized trace")
            if herm_eig(c).eigvals[-1] < -PSD_TOL * max(1.0, n):
                raise DomainError(f"{name} must be positive semidefinite")
        if not self.sigma2 > 0:
            raise DomainError("sigma2 must be positive")
        object.__setattr__(self, "c_t", 0.5 * (c_t + c_t.conj().T))
        object.__setattr__(self, "c_r", 0.5 * (c_r + c_r.conj().T))
        object.__setattr__(self, "sigma2", float(self.sigma2))

    @property
    def t(self):
        return self.c_t.shape[0]

    @property
    def r(self):
        return self.c_r.shape[0]

    @classmethod
    def iid(cls, t, r, sigma2):
        return cls(np.eye(t), np.eye(r), sigma2)

    @classmethod
    def clustered(cls, transmit, receive, sigma2):
        return cls(clustered_correlation(transmit), clustered_correlation(receive), sigma2)

    @classmethod
    def from_matrices(cls, c_t, c_r, sigma2):
        """Build a model from arbitrary PSD matrices, normalizing their traces."""
        return cls(normalize_trace(c_t), normalize_trace(c_r), sigma2)

    def with_sigma2(self, sigma2):
        return ChannelModel(self.c_t, self.c_r, sigma2)

    def sqrt_factors(self):
        return hermitian_sqrt(self.c_t), hermitian_sqrt(self.c_r)


def sample_channel(model, rng):
    """Draw one ``r x t`` channel matrix from ``rng``."""
    root_t, root_r = model.sqrt_factors()
    x = sample_circular_gaussian(model.r, model.t, rng)
    return root_r @ x @ root_t / math.sqrt(model.t)


def sample_channels(model, n, seed, start=0):
    """Stack of ``n`` channels; realization ``i`` uses stream ``start + i``."""
    root_t, root_r = model.sqrt_factors()
    x = np.empty((n, model.r, model.t), dtype=np.complex128)
    for i in range(n):
        x[i] = sample_circular_gaussian(model.r, model.t, rng_stream(seed, start + i))
    return root_r @ x @ root_t / math.sqrt(model.t)


def power(k):
    """Normalized transmit power ``Tr(K K^H)/t``."""
    k = np.asarray(k)
    return float(np.sum(np.abs(k) ** 2).real / k.shape[0])


def effective_transmit_correlation(model, k):
    """Transmit correlation ``K^H C_T K`` seen through precoder ``K``."""
    k = as_cmatrix(k, square=True)
    if k.shape[0] != model.t:
        raise DimensionError(f"precoder must be {model.t}x{model.t}, got {k.shape}")
    if power(k) > 1.0 + POWER_TOL:
        raise ConstraintError(f"precoder power {power(k):.6g} exceeds 1")
    c = k.conj().T @ model.c_t @ k
    return 0.5 * (c + c.conj().T)


def matrix_to_json(m):
    m = as_cmatrix(m)
    return json.dumps(
        {
            "rows": m.shape[0],
            "cols": m.shape[1],
            "re": m.real.ravel().tolist(),
            "im": m.imag.ravel().tolist(),
        }
    )


def matrix_from_json(text):
    obj = json.loads(text) if isinstance(text, str) else text
    rows, cols = int(obj["rows"]), int(obj["cols"])
    re = np.asarray(obj["re"], dtype=float)
    im = np.asarray(obj.get("im", np.zeros(rows * cols)), dtype=float)
    if re.size != rows * cols or im.size != rows * cols:
        raise DimensionError("entry count does not match rows*cols")
    return as_cmatrix((re + 1j * im).reshape(rows, cols))
