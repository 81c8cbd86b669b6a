import math

import numpy as np
import pytest
from scipy.stats import chi2

from jumpmet import (
    AtomParams,
    ModelSpec,
    ValidationError,
    build_model,
    default_initial_state,
    enumerate_distribution,
    histogram_counts,
    no_emission_probability,
    photon_probabilities,
    simulate_atom_counts,
    simulate_atom_trajectories,
    simulate_atom_trajectory,
    simulate_kraus_chain,
    simulate_kraus_chains,
)
from jumpmet.qops import KrausSet
from jumpmet.trajectory import (
    TrajectoryRecord,
    discrete_count_distribution,
    outcome_frequencies,
    resolve_workers,
    stream_seed,
    total_variation,
    write_jumps_csv,
    write_records_csv,
)

ATOM = AtomParams(1.0, 1.0, 2.0)


@pytest.fixture(scope="module")
def reset_model():
    spec = ModelSpec("reset", 0.6, {"A": 0.9, "b": 0.1})
    return build_model(spec), default_initial_state(spec)


@pytest.fixture(scope="module")
def atom_records():
    return simulate_atom_trajectories(ATOM, 1e-3, seed=2024, shots=100_000)


def record(n):
    return TrajectoryRecord(0, 0, tuple(float(i) for i in range(n)), np.array([1, 0j]), n)


def test_stream_seed_is_stable():
    assert stream_seed(1, 0) == stream_seed(1, 0)
    assert len({stream_seed(1, i) for i in range(1000)}) == 1000
    assert stream_seed(1, 0) != stream_seed(2, 0)
    assert 0 <= stream_seed(5, 3) < 2**64


def test_identity_chain_never_fires():
    k = KrausSet((np.eye(2), np.zeros((2, 2))), 0.0, {})
    rho0 = np.array([[0.6, 0.2], [0.2, 0.4]])
    for rec in simulate_kraus_chains(k, rho0, 25, seed=3, shots=50):
        assert not rec.outcomes.any() and rec.n_photons == 0
        assert abs(np.linalg.norm(rec.final_state) - 1) < 1e-12


def test_chain_single_replay(reset_model):
    k, rho = reset_model
    batch = simulate_kraus_chains(k, rho, 12, seed=11, shots=40)
    alone = simulate_kraus_chain(k, rho, 12, seed=11, index=17)
    assert alone.seed == batch[17].seed
    assert np.array_equal(alone.outcomes, batch[17].outcomes)
    assert np.array_equal(alone.final_state, batch[17].final_state)


def test_chain_final_states_normalized(reset_model):
    k, rho = reset_model
    for rec in simulate_kraus_chains(k, rho, 30, seed=5, shots=200):
        assert abs(np.linalg.norm(rec.final_state) - 1) < 1e-10


@pytest.mark.parametrize("phi", [0.4, 1.0])
def test_flip_zero_fraction(phi):
    spec = ModelSpec("commuting-flip", phi)
    records = simulate_kraus_chains(build_model(spec), default_initial_state(spec), 10_000, seed=77, shots=1000)
    zeros = sum(r.outcomes.size - r.n_photons for r in records)
    total = 10_000 * 1000
    p = math.cos(phi) ** 2
    se = math.sqrt(p * (1 - p) / total)
    assert abs(zeros / total - p) < 4 * se


def test_reset_strings_match_enumeration(reset_model):
    k, rho = reset_model
    shots = 1_000_000
    freq = outcome_frequencies(simulate_kraus_chains(k, rho, 3, seed=99, shots=shots))
    exact = enumerate_distribution(k, rho, 3).probs
    se = np.sqrt(exact * (1 - exact) / shots)
    assert np.all(np.abs(freq - exact) < 4 * se)
    stat = float(np.sum((freq - exact) ** 2 * shots / exact))
    assert stat < chi2.ppf(0.99, len(exact) - 1)


def test_chain_determinism_across_workers(reset_model):
    k, rho = reset_model
    a = simulate_kraus_chains(k, rho, 6, seed=8, shots=600, workers=1)
    b = simulate_kraus_chains(k, rho, 6, seed=8, shots=600, workers=2)
    assert [r.seed for r in a] == [r.seed for r in b]
    assert all(np.array_equal(x.outcomes, y.outcomes) for x, y in zip(a, b))
    assert all(np.array_equal(x.final_state, y.final_state) for x, y in zip(a, b))


@pytest.mark.parametrize("method", ["renewal", "stepwise"])
def test_atom_determinism(method, monkeypatch):
    params = AtomParams(1.0, 0.9, 1.0)
    runs = []
    for threads in ("1", "2"):
        monkeypatch.setenv("JUMPMET_THREADS", threads)
        runs.append(simulate_atom_trajectories(params, 1e-3, seed=4, shots=300, method=method))
    a, b = runs
    assert [(r.seed, r.jump_times, r.n_photons) for r in a] == [(r.seed, r.jump_times, r.n_photons) for r in b]
    assert all(np.array_equal(x.final_state, y.final_state) for x, y in zip(a, b))
    one = simulate_atom_trajectory(params, 1e-3, seed=4, index=123, method=method)
    assert one.jump_times == a[123].jump_times


def test_resolve_workers(monkeypatch):
    monkeypatch.setenv("JUMPMET_THREADS", "3")
    assert resolve_workers() == 3
    monkeypatch.setenv("JUMPMET_THREADS", "0")
    assert resolve_workers() >= 1
    monkeypatch.setenv("JUMPMET_THREADS", "many")
    with pytest.raises(ValidationError):
        resolve_workers()


def test_atom_record_invariants():
    for rec in simulate_atom_trajectories(AtomParams(1.0, 1.2, 5.0), 1e-3, seed=1, shots=500):
        times = rec.jump_times
        assert all(b > a for a, b in zip(times, times[1:]))
        assert all(0 < t <= 5.0 for t in times)
        assert rec.n_photons == len(times)
        assert abs(np.linalg.norm(rec.final_state) - 1) < 1e-10


def test_atom_without_pulse_stays_dark():
    for method in ("renewal", "stepwise"):
        for rec in simulate_atom_trajectories(AtomParams(1.0, 0.0, 2.0), 1e-2, seed=0, shots=50, method=method):
            assert rec.n_photons == 0
            assert np.allclose(rec.final_state, [1, 0])


def test_atom_p0(atom_records):
    p0 = no_emission_probability(ATOM)
    emp = sum(r.n_photons == 0 for r in atom_records) / len(atom_records)
    assert abs(emp - p0) < 4 * math.sqrt(p0 * (1 - p0) / len(atom_records))


def test_atom_total_variation(atom_records):
    assert total_variation(histogram_counts(atom_records), photon_probabilities(ATOM)) < 0.01


def test_atom_stationary_mean():
    params = AtomParams(1.0, math.pi / 4, 1000.0)
    counts = simulate_atom_counts(params, 1e-2, seed=31, shots=100_000).astype(float)
    # the finite step shifts the mean at first order in Gamma*dt, so compare
    # with the exact discrete chain and check that one against tan^2 separately
    exact = discrete_count_distribution(params.replace(n_max=200), 1e-2)
    mean_exact = float(np.dot(np.arange(len(exact)), exact))
    assert abs(mean_exact - 1) < 0.01
    se = counts.std() / math.sqrt(len(counts))
    assert abs(counts.mean() - mean_exact) < 4 * se
    assert abs(counts.mean() - 1) < 4 * se


def test_discrete_distribution_halves_toward_continuum():
    analytic = photon_probabilities(ATOM)
    errs = []
    for dt in (4e-3, 2e-3, 1e-3):
        d = discrete_count_distribution(ATOM, dt)
        errs.append(np.abs(d - analytic[: len(d)]).sum())
    for coarse, fine in zip(errs, errs[1:]):
        assert fine / coarse == pytest.approx(0.5, abs=0.05)


def test_samplers_agree_with_exact_discrete_chain():
    params = AtomParams(2.0, 1.1, 1.0)
    exact = discrete_count_distribution(params, 5e-3)
    shots = 40_000
    for method in ("renewal", "stepwise"):
        hist = histogram_counts(simulate_atom_trajectories(params, 5e-3, seed=12, shots=shots, method=method))
        emp = hist.as_array(len(exact) - 1)
        keep = exact * shots > 5
        stat = float(np.sum((emp[keep] - exact[keep]) ** 2 * shots / exact[keep]))
        assert stat < chi2.ppf(0.999, keep.sum() - 1)


def test_atom_step_validation():
    with pytest.raises(ValidationError):
        simulate_atom_trajectories(ATOM, 0.05, seed=0, shots=1)
    with pytest.raises(ValidationError):
        simulate_atom_trajectories(ATOM, 3e-3, seed=0, shots=1)
    with pytest.raises(ValidationError):
        simulate_atom_trajectories(ATOM, 1e-3, seed=0, shots=1, method="euler")


def test_histogram_examples():
    h = histogram_counts([record(3)])
    assert h.bins == {3: 1} and h.shots == 1
    h = histogram_counts([record(0), record(2)])
    assert h.empirical_p == {0: 0.5, 2: 0.5}
    assert h.mean() == 1.0
    assert sum(h.bins.values()) == h.shots
    with pytest.raises(ValidationError):
        histogram_counts([])


def test_counts_match_records():
    params = AtomParams(1.0, 1.3, 4.0)
    recs = simulate_atom_trajectories(params, 1e-3, seed=6, shots=400)
    assert list(simulate_atom_counts(params, 1e-3, seed=6, shots=400)) == [r.n_photons for r in recs]


def test_dumps(tmp_path):
    recs = simulate_atom_trajectories(AtomParams(1.0, 1.0, 1.0), 1e-2, seed=3, shots=20)
    write_records_csv(recs, tmp_path / "r.csv")
    write_jumps_csv(recs, tmp_path / "j.csv")
    rows = (tmp_path / "r.csv").read_text().splitlines()
    assert rows[0] == "seed,n_photons"
    assert [tuple(map(int, r.split(","))) for r in rows[1:]] == [(r.seed, r.n_photons) for r in recs]
    jumps = (tmp_path / "j.csv").read_text().splitlines()
    assert jumps[0] == "seed,jump_index,time"
    assert len(jumps) - 1 == sum(r.n_photons for r in recs)
