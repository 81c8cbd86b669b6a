"""Photon-counting statistics of a decaying two-level atom with feedback.

Each detected photon triggers a pulse that prepares
``cos(phi)|0> - i sin(phi)|1>``; the atom also starts in that state.  The
probability of exactly ``n`` photons in ``(0, T)`` is evaluated as

    p_n = sin(phi)^(2n) * [t_n + cos(phi)^2 * (1 - sum_{m<=n} t_m)]

with Poisson weights ``t_m = exp(-x) x^m / m!`` and ``x = Gamma*T``.  The
weights follow ``t_{m+1} = t_m * x / (m + 1)`` carried in log space, and the
bracketed tail is the regularized lower incomplete gamma ``P(n+1, x)``, so no
factorial or power is ever formed and nothing under- or overflows.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import gammainc

from ._io import write_csv, write_json
from .errors import TruncationError, TruncationWarning, UnidentifiableError, ValidationError

DEFAULT_N_MAX = 2000
TRUNCATION_WARN = 1e-6
TRUNCATION_FAIL = 1e-3
STATIONARY_GT = 1e6


@dataclass(frozen=True)
class AtomParams:
    gamma: float
    phi: float
    t_obs: float
    n_max: int = DEFAULT_N_MAX

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValidationError(f"gamma: must be positive, got {self.gamma!r}")
        if not self.t_obs >= 0:
            raise ValidationError(f"t_obs: must be non-negative, got {self.t_obs!r}")
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise ValidationError(f"n_max: must be a positive integer, got {self.n_max!r}")
        if not 0.0 <= self.phi <= math.pi:
            raise ValidationError(f"phi: must lie in [0, pi], got {self.phi!r}")
        object.__setattr__(self, "n_max", int(self.n_max))

    @property
    def gamma_t(self) -> float:
        return self.gamma * self.t_obs

    def replace(self, **kw) -> "AtomParams":
        d = dict(gamma=self.gamma, phi=self.phi, t_obs=self.t_obs, n_max=self.n_max)
        d.update(kw)
        return AtomParams(**d)


def no_emission_probability(params: AtomParams) -> float:
    s2 = math.sin(params.phi) ** 2
    return math.cos(params.phi) ** 2 + math.exp(-params.gamma_t) * s2


def first_emission_density(t: float, params: AtomParams) -> float:
    """Density of the first photon at time ``t`` after a reset."""
    if t < 0:
        raise ValidationError(f"t: must be non-negative, got {t!r}")
    return params.gamma * math.sin(params.phi) ** 2 * math.exp(-params.gamma * t)


def poisson_weights(x: float, n_max: int) -> np.ndarray:
    """``exp(-x) x^m / m!`` for ``m = 0..n_max``."""
    m = np.arange(n_max + 1)
    if x == 0:
        return (m == 0).astype(float)
    steps = math.log(x) - np.log(np.arange(1, n_max + 1))
    return np.exp(-x + np.concatenate(([0.0], np.cumsum(steps))))


def _photon_probabilities(phi: float, x: float, n_max: int) -> np.ndarray:
    # phi is not range-checked here: finite differences step past 0 and pi
    n = np.arange(n_max + 1)
    s2, c2 = math.sin(phi) ** 2, math.cos(phi) ** 2
    lower_tail = gammainc(n + 1, x)  # 1 - sum_{m<=n} t_m, without cancellation
    with np.errstate(under="ignore"):
        geometric = np.power(s2, n) if s2 > 0 else (n == 0).astype(float)
        return geometric * (poisson_weights(x, n_max) + c2 * lower_tail)


def photon_probabilities(params: AtomParams) -> np.ndarray:
    """``p_0 .. p_{n_max}`` for photons emitted in ``(0, t_obs)``."""
    return _photon_probabilities(params.phi, params.gamma_t, params.n_max)


def photon_number_probability(n: int, params: AtomParams) -> float:
    if int(n) != n or n < 0:
        raise ValidationError(f"n: must be a non-negative integer, got {n!r}")
    return float(_photon_probabilities(params.phi, params.gamma_t, int(n))[-1])


@dataclass(frozen=True)
class PhotonStatistics:
    p: np.ndarray
    nbar: float
    variance: float
    truncation_mass: float


def _moments(p: np.ndarray) -> tuple[float, float]:
    n = np.arange(len(p), dtype=float)
    nbar = float(np.dot(n, p))
    return nbar, max(0.0, float(np.dot(n * n, p)) - nbar * nbar)


def _truncation_check(mass: float, params: AtomParams) -> None:
    if mass > TRUNCATION_FAIL:
        raise TruncationError(
            f"truncation mass {mass:.3g} at n_max={params.n_max} exceeds {TRUNCATION_FAIL}; increase n_max"
        )
    if mass > TRUNCATION_WARN:
        warnings.warn(
            f"truncation mass {mass:.3g} at n_max={params.n_max} (phi={params.phi}, Gamma*T={params.gamma_t})",
            TruncationWarning,
            stacklevel=3,
        )


def photon_statistics(params: AtomParams) -> PhotonStatistics:
    p = photon_probabilities(params)
    mass = max(0.0, 1.0 - float(np.sum(p)))
    _truncation_check(mass, params)
    nbar, var = _moments(p)
    p.setflags(write=False)
    return PhotonStatistics(p, nbar, var, mass)


def mean_photon_number(phi: float, params: AtomParams) -> float:
    """``Nbar`` at angle ``phi`` with the other parameters taken from ``params``."""
    return _moments(_photon_probabilities(phi, params.gamma_t, params.n_max))[0]


def phase_uncertainty(params: AtomParams, dphi: float = 1e-5) -> float:
    """Error-propagated ``(Delta phi)^2 = Var(N) / (dNbar/dphi)^2``."""
    stats = photon_statistics(params)
    slope = (mean_photon_number(params.phi + dphi, params) - mean_photon_number(params.phi - dphi, params)) / (
        2 * dphi
    )
    if not abs(slope) > 1e-12:
        raise UnidentifiableError(
            f"dNbar/dphi = {slope!r} vanishes at phi={params.phi!r}, Gamma*T={params.gamma_t!r}"
        )
    return stats.variance / slope**2


def write_statistics(stats: PhotonStatistics, csv_path=None, json_path=None, delta_phi_sq: float | None = None):
    if csv_path is not None:
        write_csv(csv_path, ["n", "p_n"], ((n, float(q)) for n, q in enumerate(stats.p)))
    if json_path is not None:
        write_json(json_path, summary(stats, delta_phi_sq))


def summary(stats: PhotonStatistics, delta_phi_sq: float | None = None) -> dict:
    return {
        "nbar": stats.nbar,
        "variance": stats.variance,
        "delta_phi_sq": delta_phi_sq,
        "truncation_mass": stats.truncation_mass,
    }
