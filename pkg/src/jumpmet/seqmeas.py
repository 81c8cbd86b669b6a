"""Exact statistics of N sequential Kraus measurements.

Outcome strings are indexed by the integer whose base-``m`` digits, most
significant first, are ``x1 x2 ... xN`` (``m`` = number of outcomes).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from itertools import product
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from ._io import write_csv
from .errors import CapacityError, DegenerateModelError
from .qops import EXACT_COMPLETENESS_TOL, DensityMatrix, KrausSet, as_density, completeness_defect

MAX_BRANCHES = 2**24
NEGATIVE_CLAMP = -1e-14
CONDITIONING_FLOOR = 1e-12

# levels expanded as one vectorized block below the depth-first prefix
_BLOCK_DEPTH = 14


@dataclass(frozen=True)
class SequenceDistribution:
    n_steps: int
    n_outcomes: int
    probs: np.ndarray

    def index(self, bits: Sequence[int]) -> int:
        i = 0
        for x in bits:
            i = i * self.n_outcomes + int(x)
        return i

    def bits(self, i: int) -> tuple[int, ...]:
        out = []
        for _ in range(self.n_steps):
            i, r = divmod(i, self.n_outcomes)
            out.append(r)
        return tuple(reversed(out))

    def __getitem__(self, bits: Sequence[int]) -> float:
        if len(bits) != self.n_steps:
            raise KeyError(bits)
        return float(self.probs[self.index(bits)])

    def items(self) -> Iterator[tuple[tuple[int, ...], float]]:
        for i, p in enumerate(self.probs):
            yield self.bits(i), float(p)

    def total(self) -> float:
        return float(np.sum(self.probs))


def _clamp(p: np.ndarray) -> np.ndarray:
    return np.where(p < 0, np.where(p >= NEGATIVE_CLAMP, 0.0, p), p)


def _conjugate(kx: np.ndarray, r: np.ndarray) -> np.ndarray:
    return kx @ r @ kx.conj().T


def sequence_probability(k: KrausSet, rho0, x: Sequence[int]) -> float:
    r = as_density(rho0).matrix
    for xi in x:
        r = _conjugate(k[xi], r)
    p = float(np.trace(r).real)
    return 0.0 if NEGATIVE_CLAMP <= p < 0 else p


def _expand(k: KrausSet, r: np.ndarray, depth: int) -> np.ndarray:
    """Traces of all ``m**depth`` descendants of the unnormalized state ``r``."""
    mats = k.matrices
    block = r[None]
    for _ in range(depth):
        block = np.stack([m @ block @ m.conj().T for m in mats], axis=1)
        block = block.reshape(-1, *r.shape)
    return np.einsum("nii->n", block).real


def enumerate_distribution(k: KrausSet, rho0, n: int) -> SequenceDistribution:
    """Every length-``n`` outcome string with its exact probability.

    Unnormalized conditioned states are propagated down the branch tree;
    the top ``n - 14`` levels are walked depth first and each subtree below
    them is expanded as one vectorized block.
    """
    m = len(k)
    n = int(n)
    if n < 0:
        raise ValueError("n must be non-negative")
    if m**n > MAX_BRANCHES:
        raise CapacityError(
            f"{m}**{n} outcome strings exceed the exact-enumeration cap of {MAX_BRANCHES}; "
            "use the sampling path (jumpmet.trajectory.simulate_kraus_chains)"
        )
    rho = as_density(rho0).matrix
    top = max(0, n - _BLOCK_DEPTH)
    chunks = []

    def walk(r, depth):
        if depth == top:
            chunks.append(_expand(k, r, n - top))
            return
        for kx in k.matrices:
            walk(_conjugate(kx, r), depth + 1)

    walk(rho, 0)
    probs = _clamp(np.concatenate(chunks))
    probs.setflags(write=False)
    return SequenceDistribution(n, m, probs)


def ensemble_step(k: KrausSet, rho) -> DensityMatrix:
    """Outcome-averaged one-step map ``sum_x K_x rho K_x^dagger``."""
    r = as_density(rho).matrix
    out = sum(_conjugate(kx, r) for kx in k.matrices)
    if completeness_defect(k) > EXACT_COMPLETENESS_TOL:
        out = out / np.trace(out).real
    return DensityMatrix(out)


@dataclass(frozen=True)
class MarkovReport:
    gap: float
    # (x1, x2, x3) triples whose conditioning probability fell below the floor
    skipped: tuple[tuple[int, int, int], ...]
    worst: tuple[int, int, int] | None


def markov_report(k: KrausSet, rho0, floor: float = CONDITIONING_FLOOR) -> MarkovReport:
    """Compare ``P(x3 | x2, x1)`` with the one-step-memory ``P(x3 | x2)``.

    The latter conditions on ``x2`` after the averaged map has absorbed
    ``x1``.  A nonzero gap means the outcome sequence is not a Markov chain.
    """
    rho = as_density(rho0).matrix
    averaged = ensemble_step(k, rho0).matrix
    gap, worst, skipped = 0.0, None, []
    for x1, x2, x3 in product(k.labels, repeat=3):
        r2 = _conjugate(k[x2], _conjugate(k[x1], rho))
        a2 = _conjugate(k[x2], averaged)
        den_full = np.trace(r2).real
        den_markov = np.trace(a2).real
        if den_full < floor or den_markov < floor:
            skipped.append((x1, x2, x3))
            continue
        full = np.trace(_conjugate(k[x3], r2)).real / den_full
        markov = np.trace(_conjugate(k[x3], a2)).real / den_markov
        d = abs(full - markov)
        if worst is None or d > gap:
            gap, worst = d, (x1, x2, x3)
    if worst is None:
        raise DegenerateModelError("every conditioning history has probability below the floor")
    return MarkovReport(float(gap), tuple(skipped), worst)


def markov_gap(k: KrausSet, rho0) -> float:
    return markov_report(k, rho0).gap


def write_distribution_csv(dist: SequenceDistribution, path) -> None:
    rows = (("".join(map(str, bits)), p) for bits, p in dist.items())
    write_csv(path, ["bits", "probability"], rows)


def read_distribution_csv(path) -> dict[str, float]:
    with Path(path).open(newline="") as fh:
        return {row["bits"]: float(row["probability"]) for row in csv.DictReader(fh)}
