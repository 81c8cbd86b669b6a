"""Seeded Monte Carlo quantum-jump trajectories.

Random streams
--------------
Trajectory ``i`` of a run with master seed ``s`` draws from a Philox4x64
generator keyed by the 64-bit *stream seed*
``SeedSequence(s, spawn_key=(i,)).generate_state(1, uint64)[0]``.  That key
is stored on the record, so any single trajectory can be replayed alone and
a run gives the same records whatever the worker count (``JUMPMET_THREADS``,
0 = one per CPU).

Atom trajectories
-----------------
Between detections the atom evolves deterministically from the reset state,
so the per-step jump probability depends only on the number of steps since
the last reset.  The default ``method="renewal"`` draws one uniform per
inter-jump interval and inverts the cumulative jump probability of the
stepwise chain; ``method="stepwise"`` applies the two Kraus operators step
by step with one uniform per step.  Both sample the same process.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.signal import fftconvolve

from ._io import write_csv
from .atomjump import AtomParams
from .errors import ValidationError
from .qops import KrausSet, as_density, atom_feedback_kraus, reset_state

MAX_ATOM_STEP = 1e-2
_PARALLEL_MIN_SHOTS = 256


def stream_seed(seed: int, index: int) -> int:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(index),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def stream(key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=key))


def resolve_workers() -> int:
    raw = os.environ.get("JUMPMET_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ValidationError(f"JUMPMET_THREADS: expected an integer, got {raw!r}") from None
    if n < 0:
        raise ValidationError("JUMPMET_THREADS: must be >= 0")
    return n if n > 0 else (os.cpu_count() or 1)


def _map_chunks(fn: Callable, args: tuple, seed: int, shots: int, workers: int | None) -> list:
    """Run ``fn(*args, seed, start, stop)`` over index chunks, concatenated in index order."""
    workers = resolve_workers() if workers is None else workers
    if workers <= 1 or shots < _PARALLEL_MIN_SHOTS:
        return fn(*args, seed, 0, shots)
    bounds = np.linspace(0, shots, min(workers * 4, shots) + 1).astype(int)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, *args, seed, a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
        out = []
        for fut in futures:
            out.extend(fut.result())
    return out


@dataclass(frozen=True)
class TrajectoryRecord:
    seed: int  # stream seed; replays this trajectory on its own
    index: int
    jump_times: tuple[float, ...]
    final_state: np.ndarray
    n_photons: int
    outcomes: np.ndarray | None = None  # discrete mode only


@dataclass(frozen=True)
class CountHistogram:
    shots: int
    bins: dict[int, int]
    empirical_p: dict[int, float]

    def as_array(self, n_max: int) -> np.ndarray:
        out = np.zeros(n_max + 1)
        for n, c in self.bins.items():
            if n <= n_max:
                out[n] = c / self.shots
        return out

    @classmethod
    def from_counts(cls, counts) -> "CountHistogram":
        counts = np.asarray(counts, dtype=np.int64)
        if counts.size == 0:
            raise ValidationError("records: need at least one trajectory")
        values, freq = np.unique(counts, return_counts=True)
        bins = {int(n): int(c) for n, c in zip(values, freq)}
        shots = int(counts.size)
        return cls(shots, bins, {n: c / shots for n, c in bins.items()})

    def mean(self) -> float:
        return sum(n * c for n, c in self.bins.items()) / self.shots


def histogram_counts(records: Sequence[TrajectoryRecord]) -> CountHistogram:
    return CountHistogram.from_counts([r.n_photons for r in records])


def total_variation(hist: CountHistogram, p: np.ndarray) -> float:
    """Total-variation distance between a histogram and a probability array."""
    p = np.asarray(p, dtype=float)
    emp = hist.as_array(len(p) - 1)
    beyond = sum(c for n, c in hist.bins.items() if n >= len(p)) / hist.shots
    missing = max(0.0, 1.0 - float(np.sum(p)))
    return 0.5 * (float(np.sum(np.abs(emp - p))) + beyond + missing)


# ---------------------------------------------------------------------------
# discrete Kraus chains


def _normalize(v: np.ndarray) -> np.ndarray:
    return v / np.sqrt(np.sum(np.abs(v) ** 2, axis=-1, keepdims=True))


def _apply(km: np.ndarray, psi: np.ndarray) -> np.ndarray:
    # explicit elementwise products: the result for one row never depends on
    # how many rows share the batch
    d = km.shape[0]
    b = np.zeros_like(psi)
    for i in range(d):
        for j in range(d):
            b[:, i] += km[i, j] * psi[:, j]
    return b


def _norm2(b: np.ndarray) -> np.ndarray:
    out = np.zeros(len(b))
    for i in range(b.shape[1]):
        out += b[:, i].real ** 2 + b[:, i].imag ** 2
    return out


def _chain_batch(k: KrausSet, rho, n: int, seed: int, start: int, stop: int) -> list[TrajectoryRecord]:
    mats = k.matrices
    d, m = k.dim, len(mats)
    evals, evecs = np.linalg.eigh(as_density(rho).matrix)
    w = np.clip(evals, 0.0, None)
    cum_init = np.cumsum(w / w.sum())

    keys = [stream_seed(seed, i) for i in range(start, stop)]
    u = np.array([stream(key).random(n + 1) for key in keys]).reshape(len(keys), n + 1)
    first = np.minimum(np.searchsorted(cum_init, u[:, 0], side="right"), d - 1)
    psi = evecs[:, first].T.copy()
    outcomes = np.zeros((len(keys), n), dtype=np.uint8)

    for step in range(n):
        branches = [_apply(km, psi) for km in mats]
        weights = [_norm2(b) for b in branches]
        cum = np.cumsum(np.array(weights), axis=0)
        target = u[:, step + 1] * cum[-1]
        x = np.minimum(np.sum(cum <= target[None, :], axis=0), m - 1)
        chosen = np.choose(x[:, None], branches) if m > 1 else branches[0]
        psi = chosen / np.sqrt(np.choose(x, weights))[:, None]
        outcomes[:, step] = x

    records = []
    for row, key in enumerate(keys):
        outs = outcomes[row].copy()
        outs.setflags(write=False)
        records.append(
            TrajectoryRecord(key, start + row, (), psi[row].copy(), int(np.count_nonzero(outs)), outs)
        )
    return records


def simulate_kraus_chains(
    k: KrausSet, rho0, n: int, seed: int, shots: int, workers: int | None = None
) -> list[TrajectoryRecord]:
    """``shots`` independent ``n``-step chains, state renormalized after every outcome.

    A mixed initial state is unravelled by drawing one of its eigenvectors.
    """
    if n < 0 or shots < 0:
        raise ValidationError("n and shots must be non-negative")
    rho = as_density(rho0).matrix
    chunk = max(1, 2**23 // (n + 1))
    out = []
    for a in range(0, shots, chunk):
        b = min(shots, a + chunk)
        part = _map_chunks(_chain_batch_offset, (k, rho, n, a), seed, b - a, workers)
        out.extend(part)
    return out


def _chain_batch_offset(k, rho, n, offset, seed, start, stop):
    return _chain_batch(k, rho, n, seed, offset + start, offset + stop)


def simulate_kraus_chain(k: KrausSet, rho0, n: int, seed: int, index: int = 0) -> TrajectoryRecord:
    return _chain_batch(k, as_density(rho0).matrix, n, seed, index, index + 1)[0]


def outcome_frequencies(records: Sequence[TrajectoryRecord], n_outcomes: int = 2) -> np.ndarray:
    """Empirical frequency of each outcome string, indexed like ``SequenceDistribution.probs``."""
    outs = np.array([r.outcomes for r in records], dtype=np.int64)
    n = outs.shape[1]
    weights = n_outcomes ** np.arange(n - 1, -1, -1)
    idx = outs @ weights
    return np.bincount(idx, minlength=n_outcomes**n) / len(records)


# ---------------------------------------------------------------------------
# atom with feedback


def _atom_steps(params: AtomParams, dt: float) -> int:
    if not dt > 0:
        raise ValidationError(f"dt: must be positive, got {dt!r}")
    g_dt = params.gamma * dt
    if g_dt > MAX_ATOM_STEP:
        raise ValidationError(f"dt: Gamma*dt = {g_dt!r} exceeds {MAX_ATOM_STEP}")
    ratio = params.t_obs / dt
    steps = int(round(ratio))
    if abs(ratio - steps) > 1e-9 * max(1.0, ratio):
        raise ValidationError(f"dt: t_obs/dt = {ratio!r} is not an integer number of steps")
    return steps


def _jump_hazard(params: AtomParams, dt: float, steps: int) -> np.ndarray:
    """Jump probability of the next step, by number of steps since the last reset."""
    g_dt = params.gamma * dt
    c2, s2 = math.cos(params.phi) ** 2, math.sin(params.phi) ** 2
    decay = np.exp(-g_dt * np.arange(steps))
    return g_dt * s2 * decay / (c2 + s2 * decay)


def _cumulative_jump(hazard: np.ndarray) -> np.ndarray:
    """Entry ``a`` is the probability of a jump within the first ``a + 1`` steps."""
    return 1.0 - np.cumprod(1.0 - hazard)


def _atom_state(phi: float, g_dt: float, age: int) -> np.ndarray:
    v = reset_state(phi)
    v[1] *= math.exp(-0.5 * g_dt * age)
    return v / np.linalg.norm(v)


def _renewal_jumps(rng: np.random.Generator, cum: np.ndarray, steps: int) -> tuple[np.ndarray, int]:
    """Step indices of every jump, plus the step of the last reset.

    Uniforms are drawn in growing blocks; each one is the inter-jump draw of
    the one-at-a-time scheme, so the block size never changes the result.
    """
    t0, block, found = 0, 4, []
    while True:
        ages = np.searchsorted(cum, rng.random(block), side="right")
        pos = t0 - 1 + np.cumsum(ages + 1)
        n_in = int(np.searchsorted(pos, steps, side="left"))
        found.append(pos[:n_in])
        if n_in < block:
            jumps = np.concatenate(found)
            return jumps, (int(jumps[-1]) + 1 if len(jumps) else 0)
        t0 = int(pos[-1]) + 1
        block *= 2


def _atom_renewal(params, dt, steps, cum, seed, start, stop):
    g_dt = params.gamma * dt
    states: dict[int, np.ndarray] = {}
    records = []
    for i in range(start, stop):
        key = stream_seed(seed, i)
        jumps, t0 = _renewal_jumps(stream(key), cum, steps)
        times = tuple(((jumps + 0.5) * dt).tolist())
        age = steps - t0
        if age not in states:
            states[age] = _atom_state(params.phi, g_dt, age)
            states[age].setflags(write=False)
        records.append(TrajectoryRecord(key, i, times, states[age], len(times)))
    return records


def _renewal_counts(cum, steps, seed, start, stop):
    return [len(_renewal_jumps(stream(stream_seed(seed, i)), cum, steps)[0]) for i in range(start, stop)]


def _atom_stepwise(params, dt, steps, seed, start, stop):
    k0, k1 = atom_feedback_kraus(params.phi, params.gamma, dt)
    reset = reset_state(params.phi)
    rows = max(1, 2**22 // max(steps, 1))
    records = []
    for a in range(start, stop, rows):
        keys = [stream_seed(seed, i) for i in range(a, min(stop, a + rows))]
        u = np.array([stream(key).random(steps) for key in keys]).reshape(len(keys), steps)
        psi = np.tile(reset, (len(keys), 1))
        fired = np.zeros((len(keys), steps), dtype=bool)
        for step in range(steps):
            b1, b0 = _apply(k1, psi), _apply(k0, psi)
            p1, p0 = _norm2(b1), _norm2(b0)
            jump = u[:, step] < p1
            psi = np.where(jump[:, None], b1 / np.sqrt(np.where(jump, p1, 1.0))[:, None], b0 / np.sqrt(p0)[:, None])
            fired[:, step] = jump
        for row, key in enumerate(keys):
            times = tuple(((np.flatnonzero(fired[row]) + 0.5) * dt).tolist())
            records.append(TrajectoryRecord(key, a + row, times, psi[row].copy(), len(times)))
    return records


def simulate_atom_trajectories(
    params: AtomParams, dt: float, seed: int, shots: int, method: str = "renewal", workers: int | None = None
) -> list[TrajectoryRecord]:
    steps = _atom_steps(params, dt)
    if method == "renewal":
        cum = _cumulative_jump(_jump_hazard(params, dt, steps))
        return _map_chunks(_atom_renewal, (params, dt, steps, cum), seed, shots, workers)
    if method == "stepwise":
        return _map_chunks(_atom_stepwise, (params, dt, steps), seed, shots, workers)
    raise ValidationError(f"method: expected 'renewal' or 'stepwise', got {method!r}")


def simulate_atom_trajectory(
    params: AtomParams, dt: float, seed: int, index: int = 0, method: str = "renewal"
) -> TrajectoryRecord:
    steps = _atom_steps(params, dt)
    if method == "stepwise":
        return _atom_stepwise(params, dt, steps, seed, index, index + 1)[0]
    if method != "renewal":
        raise ValidationError(f"method: expected 'renewal' or 'stepwise', got {method!r}")
    cum = _cumulative_jump(_jump_hazard(params, dt, steps))
    return _atom_renewal(params, dt, steps, cum, seed, index, index + 1)[0]


def simulate_atom_counts(params: AtomParams, dt: float, seed: int, shots: int, workers: int | None = None) -> np.ndarray:
    """Photon counts of the renewal trajectories, without building records.

    Entry ``i`` equals ``n_photons`` of trajectory ``i`` from
    :func:`simulate_atom_trajectories` with the same seed.
    """
    steps = _atom_steps(params, dt)
    cum = _cumulative_jump(_jump_hazard(params, dt, steps))
    return np.array(_map_chunks(_renewal_counts, (cum, steps), seed, shots, workers), dtype=np.int64)


def discrete_count_distribution(params: AtomParams, dt: float, n_max: int | None = None) -> np.ndarray:
    """Exact photon-count distribution of the stepwise chain (no sampling).

    Renewal sum over jump positions: the waiting-step distribution is
    convolved with itself once per photon and closed with the survival of
    the remaining steps.
    """
    steps = _atom_steps(params, dt)
    n_max = params.n_max if n_max is None else n_max
    hazard = _jump_hazard(params, dt, steps)
    survival = np.concatenate(([1.0], np.cumprod(1.0 - hazard)))
    # wait[j]: first jump completes after exactly j steps
    wait = np.concatenate(([0.0], survival[:-1] * hazard))
    out = np.zeros(n_max + 1)
    arrival = np.zeros(steps + 1)
    arrival[0] = 1.0
    for n in range(n_max + 1):
        out[n] = float(np.dot(arrival, survival[::-1]))
        arrival = np.clip(fftconvolve(arrival, wait)[: steps + 1], 0.0, None)
        if arrival.sum() < 1e-17:
            break
    return out


def write_records_csv(records: Sequence[TrajectoryRecord], path) -> None:
    write_csv(path, ["seed", "n_photons"], ((str(r.seed), str(r.n_photons)) for r in records))


def write_jumps_csv(records: Sequence[TrajectoryRecord], path) -> None:
    rows = ((str(r.seed), str(j), t) for r in records for j, t in enumerate(r.jump_times))
    write_csv(path, ["seed", "jump_index", "time"], rows)
