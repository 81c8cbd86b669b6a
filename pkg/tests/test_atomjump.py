import math
import warnings

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from jumpmet import (
    AtomParams,
    TruncationError,
    TruncationWarning,
    UnidentifiableError,
    ValidationError,
    first_emission_density,
    mean_photon_number,
    no_emission_probability,
    phase_uncertainty,
    photon_number_probability,
    photon_probabilities,
    photon_statistics,
)
from jumpmet.atomjump import STATIONARY_GT, poisson_weights, write_statistics


def literal_pn(n, phi, x, dps=40):
    """Direct evaluation with factorials and powers at high precision."""
    with mp.workdps(dps):
        phi, x = mp.mpf(phi), mp.mpf(x)
        t = [mp.exp(-x) * x**m / mp.factorial(m) for m in range(n + 1)]
        return float(mp.sin(phi) ** (2 * n) * (t[n] + mp.cos(phi) ** 2 * (1 - mp.fsum(t))))


def p0_after(params, remaining):
    return no_emission_probability(params.replace(t_obs=remaining))


@pytest.mark.parametrize("t_obs", [0.0, 0.5, 3.0])
def test_no_emission_without_pulse(t_obs):
    assert no_emission_probability(AtomParams(1.0, 0.0, t_obs)) == 1.0


def test_no_emission_excited():
    assert no_emission_probability(AtomParams(1.0, math.pi / 2, 1.0)) == pytest.approx(math.exp(-1), rel=1e-15)


@pytest.mark.parametrize("phi", [0.3, 1.0, 1.4])
def test_no_emission_stationary(phi):
    p = AtomParams(1.0, phi, STATIONARY_GT)
    assert abs(no_emission_probability(p) - math.cos(phi) ** 2) < 1e-12


def test_first_emission_density():
    assert first_emission_density(0.0, AtomParams(2.0, math.pi / 2, 1.0)) == pytest.approx(2.0)
    for t in (0.0, 0.4, 5.0):
        assert first_emission_density(t, AtomParams(1.0, 0.0, 1.0)) == 0.0
    params = AtomParams(1.3, 0.9, 1.0)
    total, _ = quad(first_emission_density, 0, np.inf, args=(params,))
    assert total == pytest.approx(math.sin(0.9) ** 2, rel=1e-10)
    with pytest.raises(ValidationError):
        first_emission_density(-1.0, params)


@pytest.mark.parametrize("phi, x", [(0.3, 0.0), (1.0, 2.0), (1.4, 17.0), (0.7, 300.0)])
def test_zero_photons_is_no_emission(phi, x):
    p = AtomParams(1.0, phi, x)
    assert photon_number_probability(0, p) == no_emission_probability(p)


@pytest.mark.parametrize("n", [0, 1, 5, 40])
@pytest.mark.parametrize("phi", [0.4, 1.2])
def test_stationary_geometric(n, phi):
    p = AtomParams(1.0, phi, STATIONARY_GT)
    expected = math.sin(phi) ** (2 * n) * math.cos(phi) ** 2
    assert abs(photon_number_probability(n, p) - expected) < 1e-12


@pytest.mark.parametrize("x", [0.5, 2.0, 10.0])
def test_single_photon_quadrature(x):
    params = AtomParams(1.0, 1.0, x)
    value, _ = quad(lambda t: first_emission_density(t, params) * p0_after(params, x - t), 0, x, epsabs=1e-13)
    assert abs(photon_number_probability(1, params) - value) < 1e-10


@pytest.mark.parametrize("n", [0, 1, 2])
@pytest.mark.parametrize("x", [0.7, 3.0, 9.0])
def test_recursion_consistency(n, x):
    params = AtomParams(1.0, 0.9, x)

    def integrand(t):
        return first_emission_density(t, params) * photon_number_probability(n, params.replace(t_obs=x - t))

    value, _ = quad(integrand, 0, x, epsabs=1e-13, epsrel=1e-12)
    assert abs(photon_number_probability(n + 1, params) - value) < 1e-8


def test_time_shift():
    # starting the clock later is the same as watching for less time
    params = AtomParams(0.8, 1.1, 6.0)
    for t in (0.0, 1.5, 4.0):
        shifted = AtomParams(0.8, 1.1, 6.0 - t)
        assert no_emission_probability(shifted) == p0_after(params, 6.0 - t)


@pytest.mark.parametrize("n, phi, x", [(0, 0.3, 1.0), (3, 1.0, 2.5), (10, 1.3, 20.0), (50, 0.8, 40.0), (200, 1.45, 150.0)])
def test_matches_literal_formula(n, phi, x):
    got = photon_number_probability(n, AtomParams(1.0, phi, x))
    assert got == pytest.approx(literal_pn(n, phi, x), rel=1e-9, abs=1e-300)


@pytest.mark.parametrize("x", [1.0, 5.0, 20.0])
@pytest.mark.parametrize("phi", [0.3, 0.8, 1.3])
def test_normalization(x, phi):
    assert abs(float(np.sum(photon_probabilities(AtomParams(1.0, phi, x)))) - 1) < 1e-9


@settings(max_examples=60, deadline=None)
@given(st.floats(0.0, math.pi), st.floats(0.0, 1e4))
def test_probabilities_finite_and_bounded(phi, x):
    p = photon_probabilities(AtomParams(1.0, phi, x))
    assert p.shape == (2001,)
    assert np.all(np.isfinite(p))
    assert np.all((p >= 0) & (p <= 1))


def test_poisson_weights():
    w = poisson_weights(3.0, 10)
    assert w == pytest.approx([math.exp(-3) * 3**m / math.factorial(m) for m in range(11)], rel=1e-13)
    big = poisson_weights(1e4, 2000)
    assert np.all(np.isfinite(big)) and big.max() < 1e-300
    assert list(poisson_weights(0.0, 3)) == [1.0, 0.0, 0.0, 0.0]


def test_statistics_without_pulse():
    s = photon_statistics(AtomParams(1.0, 0.0, 5.0))
    assert s.nbar == 0.0 and s.variance == 0.0 and s.truncation_mass == 0.0


@pytest.mark.parametrize("phi", [0.4, math.pi / 4, 1.2])
def test_stationary_mean(phi):
    s = photon_statistics(AtomParams(1.0, phi, STATIONARY_GT))
    assert s.nbar == pytest.approx(math.tan(phi) ** 2, rel=1e-4)


def test_stationary_mean_quarter_pi():
    s = photon_statistics(AtomParams(1.0, math.pi / 4, STATIONARY_GT))
    assert abs(s.nbar - 1) < 1e-6


def test_mean_photon_number_matches_statistics():
    p = AtomParams(1.0, 0.9, 7.0)
    assert mean_photon_number(0.9, p) == photon_statistics(p).nbar


def test_truncation_warning_and_error():
    with pytest.warns(TruncationWarning):
        s = photon_statistics(AtomParams(1.0, 1.5, 1e4))
    assert 1e-6 < s.truncation_mass < 1e-3
    with pytest.raises(TruncationError):
        photon_statistics(AtomParams(1.0, 1.55, 1e4))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        photon_statistics(AtomParams(1.0, 1.55, 1e4, n_max=20000))


def test_uncertainty_needs_slope():
    with pytest.raises(UnidentifiableError):
        phase_uncertainty(AtomParams(1.0, 0.0, 3.0))


def test_uncertainty_against_high_precision_derivative():
    params = AtomParams(1.0, 1.2, 4.0)

    def nbar(phi):
        return mp.fsum(n * literal_pn(n, phi, 4.0, dps=30) for n in range(120))

    with mp.workdps(30):
        slope = float(mp.diff(lambda f: nbar(float(f)), 1.2, h=1e-4))
    expected = photon_statistics(params).variance / slope**2
    assert phase_uncertainty(params) == pytest.approx(expected, rel=1e-6)


def test_plateau_at_small_angle():
    values = [phase_uncertainty(AtomParams(1.0, 0.5, x)) for x in np.logspace(3, 4, 6)]
    assert max(abs(b / a - 1) for a, b in zip(values, values[1:])) < 0.01


def test_uncertainty_beats_shot_noise_somewhere():
    xs = np.logspace(0, 4, 41)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        v = np.array([phase_uncertainty(AtomParams(1.0, 1.5, x)) for x in xs])
    slopes = np.diff(np.log(v)) / np.diff(np.log(xs))
    assert slopes.min() < -1.0


@pytest.mark.parametrize(
    "kwargs", [dict(gamma=0.0), dict(gamma=-1.0), dict(t_obs=-1.0), dict(phi=4.0), dict(n_max=0), dict(n_max=2.5)]
)
def test_params_validation(kwargs):
    base = dict(gamma=1.0, phi=0.5, t_obs=1.0)
    base.update(kwargs)
    with pytest.raises(ValidationError):
        AtomParams(**base)


def test_statistics_dump(tmp_path):
    import json

    s = photon_statistics(AtomParams(1.0, 0.8, 2.0, n_max=30))
    write_statistics(s, tmp_path / "p.csv", tmp_path / "s.json", 0.25)
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == "n,p_n" and len(lines) == 32
    assert [float(line.split(",")[1]) for line in lines[1:]] == list(s.p)
    data = json.loads((tmp_path / "s.json").read_text())
    assert data == {"nbar": s.nbar, "variance": s.variance, "delta_phi_sq": 0.25, "truncation_mass": s.truncation_mass}
