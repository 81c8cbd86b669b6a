"""Small dense complex matrices, density matrices and Kraus instruments.

All builtin models act on a qubit, so matrices are plain ``numpy`` arrays of
shape ``(dim, dim)``; nothing here is sparse or batched.  Every container is
frozen and its arrays are marked read-only after construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping, Sequence

import numpy as np

from .errors import CompletenessError, ValidationError

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
PSD_TOL = -1e-10
EXACT_COMPLETENESS_TOL = 1e-12
MAX_ATOM_STEP = 0.1

KINDS = ("commuting-flip", "reset", "atom-feedback", "custom")

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
IDENTITY2 = np.eye(2, dtype=complex)


def as_matrix(a, dim: int | None = None) -> np.ndarray:
    """Coerce ``a`` to a finite square complex matrix (read-only copy)."""
    m = np.array(a, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise ValidationError(f"expected a square matrix, got shape {m.shape}")
    if dim is not None and m.shape[0] != dim:
        raise ValidationError(f"matrix dimension {m.shape[0]} does not match {dim}")
    if not np.all(np.isfinite(m)):
        raise ValidationError("matrix entries must be finite")
    m.setflags(write=False)
    return m


def max_abs(a: np.ndarray) -> float:
    return float(np.max(np.abs(a))) if a.size else 0.0


@dataclass(frozen=True)
class DensityMatrix:
    """A validated density matrix.  Violations raise; nothing is repaired."""

    matrix: np.ndarray

    def __post_init__(self):
        m = as_matrix(self.matrix)
        herm = max_abs(m - m.conj().T)
        if herm > HERMITIAN_TOL:
            raise ValidationError(f"density matrix is not Hermitian (defect {herm!r})")
        tr = complex(np.trace(m))
        if abs(tr - 1.0) > TRACE_TOL:
            raise ValidationError(f"density matrix trace {tr.real!r} differs from 1")
        lo = float(np.linalg.eigvalsh((m + m.conj().T) / 2).min())
        if lo < PSD_TOL:
            raise ValidationError(f"density matrix is not positive semidefinite (eigenvalue {lo!r})")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def pure(cls, psi) -> "DensityMatrix":
        v = np.asarray(psi, dtype=complex).ravel()
        v = v / np.linalg.norm(v)
        return cls(np.outer(v, v.conj()))

    @classmethod
    def diagonal(cls, weights) -> "DensityMatrix":
        return cls(np.diag(np.asarray(weights, dtype=complex)))


def as_density(rho) -> DensityMatrix:
    return rho if isinstance(rho, DensityMatrix) else DensityMatrix(rho)


def completeness_defect(k) -> float:
    """Max-abs entry of ``sum_x K_x^dagger K_x - 1``.

    Accepts a :class:`KrausSet` or any sequence of square matrices, so that
    incomplete candidate sets can be inspected before they are rejected.
    """
    mats = k.matrices if isinstance(k, KrausSet) else [as_matrix(m) for m in k]
    if not mats:
        raise ValidationError("empty Kraus set")
    dim = mats[0].shape[0]
    total = np.zeros((dim, dim), dtype=complex)
    for m in mats:
        if m.shape != (dim, dim):
            raise ValidationError("Kraus operators must share one dimension")
        total += m.conj().T @ m
    return max_abs(total - np.eye(dim))


@dataclass(frozen=True)
class KrausSet:
    """Kraus operators labelled ``0, 1, ...`` in the order given.

    ``tolerance`` is the completeness defect the set is allowed to carry;
    construction fails with :class:`CompletenessError` above it.
    """

    matrices: tuple
    phi: float = 0.0
    params: Mapping[str, float] = field(default_factory=dict)
    tolerance: float = EXACT_COMPLETENESS_TOL

    def __post_init__(self):
        if len(self.matrices) == 0:
            raise ValidationError("a Kraus set needs at least one operator")
        first = as_matrix(self.matrices[0])
        mats = tuple(as_matrix(m, first.shape[0]) for m in self.matrices)
        object.__setattr__(self, "matrices", mats)
        object.__setattr__(self, "params", MappingProxyType(dict(self.params)))
        defect = completeness_defect(mats)
        if defect > self.tolerance:
            raise CompletenessError(defect, self.tolerance)

    @property
    def dim(self) -> int:
        return self.matrices[0].shape[0]

    @property
    def labels(self) -> tuple[int, ...]:
        return tuple(range(len(self.matrices)))

    def __len__(self) -> int:
        return len(self.matrices)

    def __getitem__(self, x: int) -> np.ndarray:
        if not isinstance(x, (int, np.integer)) or not 0 <= x < len(self.matrices):
            raise ValidationError(f"unknown outcome label {x!r}; valid labels are {self.labels}")
        return self.matrices[x]

    def __reduce__(self):
        # the read-only params view does not pickle; worker processes need copies
        return KrausSet, (self.matrices, self.phi, dict(self.params), self.tolerance)

    def relabeled(self, order: Sequence[int]) -> "KrausSet":
        """Return the set with outcomes permuted: new label i is old ``order[i]``."""
        return KrausSet(tuple(self.matrices[i] for i in order), self.phi, dict(self.params), self.tolerance)


@dataclass(frozen=True)
class ModelSpec:
    """Which Kraus model to build, at which angle, with which parameters.

    Builtin ``params`` keys: ``A`` (or ``reset_amplitude`` = sqrt(1 - A^2),
    which avoids the cancellation in ``1 - A**2`` when A is close to 1) and
    ``b`` for ``reset``; ``Gamma`` and ``dt`` for ``atom-feedback``.
    """

    kind: str
    phi: float
    params: Mapping[str, float] = field(default_factory=dict)
    custom_matrices: tuple | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"kind: unknown model kind {self.kind!r}; expected one of {KINDS}")
        if not math.isfinite(self.phi):
            raise ValidationError("phi: must be finite")
        params = {str(k): float(v) for k, v in dict(self.params).items()}
        object.__setattr__(self, "params", MappingProxyType(params))
        if self.kind == "custom":
            if not self.custom_matrices:
                raise ValidationError("custom_matrices: kind 'custom' requires explicit matrices")
            object.__setattr__(self, "custom_matrices", tuple(as_matrix(m) for m in self.custom_matrices))
        elif self.custom_matrices is not None:
            raise ValidationError(f"custom_matrices: not allowed for builtin kind {self.kind!r}")
        _check_params(self.kind, params)

    def __reduce__(self):
        return ModelSpec, (self.kind, self.phi, dict(self.params), self.custom_matrices)

    def with_phi(self, phi: float) -> "ModelSpec":
        return ModelSpec(self.kind, phi, dict(self.params), self.custom_matrices)


def _check_params(kind: str, p: dict) -> None:
    def unit(name):
        if name in p and not 0.0 <= p[name] <= 1.0:
            raise ValidationError(f"{name}: must lie in [0, 1], got {p[name]!r}")

    for name in ("A", "b", "reset_amplitude"):
        unit(name)
    for name in ("Gamma", "dt"):
        if name in p and not p[name] > 0:
            raise ValidationError(f"{name}: must be positive, got {p[name]!r}")
    if kind == "reset" and "A" not in p and "reset_amplitude" not in p:
        raise ValidationError("A: reset model requires 'A' or 'reset_amplitude'")
    if kind == "atom-feedback":
        for name in ("Gamma", "dt"):
            if name not in p:
                raise ValidationError(f"{name}: atom-feedback model requires {name!r}")
        g_dt = p["Gamma"] * p["dt"]
        if g_dt > MAX_ATOM_STEP:
            raise ValidationError(
                f"dt: Gamma*dt = {g_dt!r} exceeds {MAX_ATOM_STEP} (first-order step expansion invalid)"
            )


def commuting_flip(phi: float) -> tuple[np.ndarray, np.ndarray]:
    """``K0 = cos(phi) 1``, ``K1 = sin(phi) sigma_x``."""
    return math.cos(phi) * IDENTITY2, math.sin(phi) * SIGMA_X


def reset_amplitudes(params: Mapping[str, float]) -> tuple[float, float]:
    """Return ``(A, sqrt(1 - A^2))`` from either parametrisation."""
    if "reset_amplitude" in params:
        s = params["reset_amplitude"]
        return math.sqrt(1.0 - s * s), s
    a = params["A"]
    return a, math.sqrt(max(0.0, 1.0 - a * a))


def reset_kraus(phi: float, a: float, s: float) -> tuple[np.ndarray, np.ndarray]:
    """Parameter-dependent resetting: outcome 1 sends |1> to (cos phi, sin phi)."""
    k0 = np.array([[1, 0], [0, a]], dtype=complex)
    k1 = np.array([[0, math.cos(phi) * s], [0, math.sin(phi) * s]], dtype=complex)
    return k0, k1


def atom_feedback_kraus(phi: float, gamma: float, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """One coarse-grained step of a decaying atom with a phi-dependent feedback pulse.

    ``K0`` keeps the exact exponential, so the set is complete only to
    second order in ``gamma * dt``.
    """
    g = gamma * dt
    k0 = np.array([[1, 0], [0, math.exp(-0.5 * g)]], dtype=complex)
    r = math.sqrt(g)
    k1 = np.array([[0, r * math.cos(phi)], [0, -1j * r * math.sin(phi)]], dtype=complex)
    return k0, k1


def atom_tolerance(gamma: float, dt: float) -> float:
    return max(EXACT_COMPLETENESS_TOL, 10.0 * (gamma * dt) ** 2)


def build_model(spec: ModelSpec) -> KrausSet:
    phi, p = spec.phi, spec.params
    if spec.kind == "commuting-flip":
        return KrausSet(commuting_flip(phi), phi, p)
    if spec.kind == "reset":
        return KrausSet(reset_kraus(phi, *reset_amplitudes(p)), phi, p)
    if spec.kind == "atom-feedback":
        g, dt = p["Gamma"], p["dt"]
        return KrausSet(atom_feedback_kraus(phi, g, dt), phi, p, atom_tolerance(g, dt))
    return KrausSet(spec.custom_matrices, phi, p)


def reset_state(phi: float) -> np.ndarray:
    """State prepared by the feedback pulse: ``cos(phi)|0> - i sin(phi)|1>``."""
    return np.array([math.cos(phi), -1j * math.sin(phi)], dtype=complex)


def default_initial_state(spec: ModelSpec) -> DensityMatrix:
    """Initial state each builtin model is studied with.

    ``reset`` uses ``b|0><0| + (1-b)|1><1|`` (b defaults to 0.1);
    ``atom-feedback`` starts in the feedback reset state; everything else
    starts in ``|0><0|``.
    """
    if spec.kind == "reset":
        b = spec.params.get("b", 0.1)
        return DensityMatrix.diagonal([b, 1.0 - b])
    if spec.kind == "atom-feedback":
        return DensityMatrix.pure(reset_state(spec.phi))
    dim = spec.custom_matrices[0].shape[0] if spec.kind == "custom" else 2
    e0 = np.zeros(dim, dtype=complex)
    e0[0] = 1
    return DensityMatrix.pure(e0)


def commutator_norm(a, b) -> float:
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape != b.shape:
        raise ValidationError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return max_abs(a @ b - b @ a)


def apply_outcome(k: KrausSet, x: int, rho) -> tuple[np.ndarray, float]:
    """Select the subensemble with outcome ``x``.

    Returns the unnormalized ``K_x rho K_x^dagger`` and its trace.
    """
    kx = k[x]
    r = kx @ as_density(rho).matrix @ kx.conj().T
    return r, max(0.0, float(np.trace(r).real))
