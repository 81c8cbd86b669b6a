"""Classical Fisher information of measurement records and scaling fits."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from ._io import write_csv, write_json
from .errors import DomainError, ValidationError
from .qops import ModelSpec, build_model
from .seqmeas import enumerate_distribution

DEFAULT_DPHI = 1e-5
# Probabilities are relative-accurate down to underflow, so only exact zeros
# take the small-probability path by default.
PROB_FLOOR = 0.0
DERIV_FLOOR = 1e-9


def _probs(spec: ModelSpec, rho0, n: int, phi: float) -> np.ndarray:
    return enumerate_distribution(build_model(spec.with_phi(phi)), rho0, n).probs


def _check_phi(phi: float, dphi: float) -> None:
    if not dphi > 0:
        raise DomainError(f"dphi: must be positive, got {dphi!r}")
    if not (0.0 < phi - dphi and phi + dphi < math.pi):
        raise DomainError(f"phi: {phi!r} +/- {dphi!r} leaves the open interval (0, pi)")


def fisher_information(
    spec: ModelSpec,
    rho0,
    n: int,
    dphi: float = DEFAULT_DPHI,
    *,
    prob_floor: float = PROB_FLOOR,
    deriv_floor: float = DERIV_FLOOR,
) -> float:
    """Fisher information of the distribution of length-``n`` outcome strings.

    ``dP/dphi`` is a central difference over two full enumerations.  Strings
    with ``P <= prob_floor`` contribute nothing when ``|dP/dphi|`` is below
    ``deriv_floor``; otherwise their derivative gets one Richardson
    refinement from a second pair of enumerations at ``dphi / 2``.
    """
    phi = spec.phi
    _check_phi(phi, dphi)
    p = _probs(spec, rho0, n, phi)
    deriv = (_probs(spec, rho0, n, phi + dphi) - _probs(spec, rho0, n, phi - dphi)) / (2 * dphi)

    regular = p > prob_floor
    terms = np.zeros_like(p)
    terms[regular] = deriv[regular] ** 2 / p[regular]

    refine = ~regular & (np.abs(deriv) >= deriv_floor) & (p > 0)
    if refine.any():
        h = dphi / 2
        half = (_probs(spec, rho0, n, phi + h) - _probs(spec, rho0, n, phi - h)) / (2 * h)
        rich = (4 * half - deriv) / 3
        terms[refine] = rich[refine] ** 2 / p[refine]
    return max(0.0, float(np.sum(terms)))


def single_shot_fisher(spec: ModelSpec, rho0, dphi: float = DEFAULT_DPHI) -> float:
    return fisher_information(spec, rho0, 1, dphi)


def cramer_rao_bound(f: float) -> float:
    """Lower bound ``1/F`` on the variance of any unbiased estimator."""
    if not f > 0:
        raise DomainError(f"Fisher information {f!r} is not positive; the parameter is unidentifiable")
    return 1.0 / f


@dataclass(frozen=True)
class FisherScan:
    axis: str  # "phi" or "n_steps"
    points: tuple[tuple[float, float], ...]
    model: ModelSpec | None = None
    derivative_step: float = DEFAULT_DPHI

    def __post_init__(self):
        if self.axis not in ("phi", "n_steps"):
            raise ValidationError(f"axis: expected 'phi' or 'n_steps', got {self.axis!r}")
        pts = tuple((float(x), float(f)) for x, f in self.points)
        xs = [x for x, _ in pts]
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ValidationError("scan axis values must be strictly increasing")
        if any(not f >= 0 for _, f in pts):
            raise ValidationError("Fisher information values must be non-negative")
        object.__setattr__(self, "points", pts)

    @property
    def values(self) -> np.ndarray:
        return np.array([x for x, _ in self.points])

    @property
    def fisher(self) -> np.ndarray:
        return np.array([f for _, f in self.points])


def scan_phi(spec: ModelSpec, rho0, n: int, phis: Iterable[float], dphi: float = DEFAULT_DPHI) -> FisherScan:
    pts = [(phi, fisher_information(spec.with_phi(phi), rho0, n, dphi)) for phi in phis]
    return FisherScan("phi", tuple(pts), spec, dphi)


def scan_steps(spec: ModelSpec, rho0, ns: Iterable[int], dphi: float = DEFAULT_DPHI) -> FisherScan:
    pts = [(n, fisher_information(spec, rho0, int(n), dphi)) for n in ns]
    return FisherScan("n_steps", tuple(pts), spec, dphi)


@dataclass(frozen=True)
class ScalingFit:
    """``F(N) ~ a N^2 + b N + c`` over ``n_range``."""

    a: float
    b: float
    c: float
    r_squared: float
    n_range: tuple[float, float]

    def __call__(self, n):
        n = np.asarray(n, dtype=float)
        return self.a * n**2 + self.b * n + self.c

    def to_dict(self) -> dict:
        return {
            "a": self.a,
            "b": self.b,
            "c": self.c,
            "r_squared": self.r_squared,
            "n_min": self.n_range[0],
            "n_max": self.n_range[1],
        }


def fit_quadratic_scaling(scan: FisherScan) -> ScalingFit:
    if scan.axis != "n_steps":
        raise ValidationError("quadratic scaling fits need a scan over n_steps")
    n, f = scan.values, scan.fisher
    if len(n) < 4:
        raise ValidationError(f"need at least 4 scan points, got {len(n)}")
    if len(np.unique(n)) < 3:
        raise ValidationError("rank-deficient design: fewer than 3 distinct N")
    ss_tot = float(np.sum((f - f.mean()) ** 2))
    if not ss_tot > 0:
        raise ValidationError("r_squared undefined: Fisher information is constant over the range")
    # scale by the data so the tiny magnitudes of near-complete models stay well conditioned
    scale = float(np.max(np.abs(f)))
    design = np.vander(n, 3)
    coef, *_ = np.linalg.lstsq(design, f / scale, rcond=None)
    coef = coef * scale
    resid = f - design @ coef
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot
    return ScalingFit(float(coef[0]), float(coef[1]), float(coef[2]), min(1.0, max(0.0, r2)), (float(n.min()), float(n.max())))


def write_scan_csv(scan: FisherScan, path) -> None:
    write_csv(path, ["axis_value", "fisher"], scan.points)


def write_fit_json(fit: ScalingFit, path) -> None:
    write_json(path, fit.to_dict())

