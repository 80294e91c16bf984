import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from decaybell import hyperon as hy
from decaybell import quantum as qc
from decaybell.errors import InvalidInputError

from conftest import random_density, random_pure, random_unit_vectors

ALPHA = math.sqrt(0.46)


def sphere_rule(n_cos=8, n_phi=12):
    """Gauss-Legendre in cos(theta) times a uniform phi rule; weights sum to 4 pi."""
    x, w = np.polynomial.legendre.leggauss(n_cos)
    phi = np.arange(n_phi) * 2 * math.pi / n_phi
    theta = np.arccos(x)
    dirs = hy.angles_to_vectors(theta[:, None], phi[None, :]).reshape(-1, 3)
    weights = np.repeat(w, n_phi) * (2 * math.pi / n_phi)
    return dirs, weights


# --- decay channel ------------------------------------------------------------


def test_spin_half_kraus_along_z():
    ch = hy.kraus_from_species(hy.HyperonSpecies.spin_half(0.6))
    k_plus, k_minus = ch.operators
    np.testing.assert_allclose(k_plus, math.sqrt(0.8) * np.diag([1, 0]), atol=1e-15)
    np.testing.assert_allclose(k_minus, math.sqrt(0.2) * np.diag([0, 1]), atol=1e-15)
    np.testing.assert_allclose(ch.effect(), np.diag([0.8, 0.2]), atol=1e-15)


def test_zero_alpha_is_uninformative(rng):
    ch = hy.kraus_from_species(hy.HyperonSpecies.spin_half(0.0, random_unit_vectors(rng, 1)[0]))
    np.testing.assert_allclose(ch.effect(), np.eye(2) / 2, atol=1e-15)


def test_kraus_effect_bounded_random_species(rng):
    for _ in range(500):
        h = hy.HyperonSpecies.spin_half(rng.uniform(-1, 1), random_unit_vectors(rng, 1)[0])
        eff = hy.kraus_from_species(h).effect()
        assert np.linalg.eigvalsh(eff).max() <= 1 + 1e-12
        assert np.linalg.eigvalsh(eff).min() >= -1e-12


def spin_one_species(alpha):
    up = qc.bloch_from_density(np.diag([1, 0, 0]).astype(complex)).vector
    down = qc.bloch_from_density(np.diag([0, 0, 1]).astype(complex)).vector
    return hy.HyperonSpecies(Fraction(1), alpha, (up + down) / 2, (up - down) / 2)


def test_spin_one_species_projects_on_extreme_states():
    h = spin_one_species(0.4)
    assert h.dim == 3
    ch = hy.kraus_from_species(h)
    np.testing.assert_allclose(ch.effect(), np.diag([0.7, 0, 0.3]), atol=1e-12)
    with pytest.raises(NotImplementedError):
        h.oriented([1, 0, 0])


@pytest.mark.parametrize("kwargs", [
    dict(spin=Fraction(1, 2), alpha=1.5, omega1=np.zeros(3), omega2=[0, 0, 1]),
    dict(spin=Fraction(1, 2), alpha=0.5, omega1=np.zeros(3), omega2=[0, 0, 2]),
    dict(spin=Fraction(1, 2), alpha=0.5, omega1=np.zeros(3), omega2=[0, 1]),
    dict(spin=Fraction(1, 3), alpha=0.5, omega1=np.zeros(3), omega2=[0, 0, 1]),
    dict(spin=Fraction(1), alpha=0.5, omega1=np.zeros(8), omega2=np.ones(8)),
])
def test_invalid_species_rejected(kwargs):
    with pytest.raises(InvalidInputError):
        hy.HyperonSpecies(**kwargs)


# --- angular densities -------------------------------------------------------------


def test_single_pdf_examples():
    h = hy.HyperonSpecies.spin_half(0.7)
    up = qc.projector(qc.UP)
    assert hy.single_angular_pdf(np.eye(2) / 2, h, [0, 0, 1]) == pytest.approx(1 / (4 * math.pi))
    assert hy.single_angular_pdf(up, h, [0, 0, 1]) == pytest.approx(1.7 / (4 * math.pi))
    assert hy.single_angular_pdf(up, h, [0, 0, -1]) == pytest.approx(0.3 / (4 * math.pi))
    assert hy.single_angular_pdf(up, h, hy.DecayDirection(math.pi / 2, 0.3)) == pytest.approx(1 / (4 * math.pi))


def test_single_pdf_linear_in_polarisation(rng):
    for _ in range(100):
        rho = random_density(rng, 2)
        pol = qc.bloch_from_density(rho).vector
        n = random_unit_vectors(rng, 1)[0]
        a = rng.uniform(-1, 1)
        got = hy.single_angular_pdf(rho, hy.HyperonSpecies.spin_half(a), n)
        assert got == pytest.approx((1 + a * n @ pol) / (4 * math.pi), abs=1e-14)


def test_single_pdf_normalised(rng):
    dirs, weights = sphere_rule()
    for _ in range(10):
        rho = random_density(rng, 2)
        h = hy.HyperonSpecies.spin_half(rng.uniform(-1, 1))
        total = sum(w * hy.single_angular_pdf(rho, h, d) for d, w in zip(dirs, weights))
        assert total == pytest.approx(1, abs=1e-6)


def test_single_pdf_rejects_unnormalised_state():
    with pytest.raises(InvalidInputError):
        hy.single_angular_pdf(np.eye(2), hy.HyperonSpecies.spin_half(0.5), [0, 0, 1])


def test_joint_pdf_examples():
    assert hy.joint_angular_pdf(ALPHA, ALPHA, [0, 0, 1], [0, 0, 1]) == pytest.approx(0.54 / (4 * math.pi) ** 2)
    assert hy.joint_angular_pdf(0, ALPHA, [0, 0, 1], [1, 0, 0]) == pytest.approx(1 / (4 * math.pi) ** 2)
    with pytest.raises(InvalidInputError):
        hy.joint_angular_pdf(1.2, 0.5, [0, 0, 1], [0, 0, 1])


def test_joint_pdf_matches_kraus_route(rng):
    rho = qc.projector(qc.singlet())
    for _ in range(200):
        a, b = rng.uniform(-1, 1, size=2)
        n, m = random_unit_vectors(rng, 2)
        expected = hy.joint_angular_pdf_from_state(rho, hy.HyperonSpecies.spin_half(a), hy.HyperonSpecies.spin_half(b), n, m)
        assert hy.joint_angular_pdf(a, b, n, m) == pytest.approx(expected, abs=1e-14)


def test_joint_pdf_normalised_and_second_moments():
    dirs, weights = sphere_rule(4, 6)
    a = 0.46
    total = 0.0
    moments = np.zeros((3, 3))
    for n, wn in zip(dirs, weights):
        for m, wm in zip(dirs, weights):
            p = wn * wm * hy.joint_angular_pdf(ALPHA, ALPHA, n, m)
            total += p
            moments += p * np.outer(n, m)
    assert total == pytest.approx(1, abs=1e-6)
    np.testing.assert_allclose(9 * moments, -a * np.eye(3), atol=1e-10)


def test_product_state_joint_pdf_factorises(rng):
    ra, rb = random_density(rng, 2), random_density(rng, 2)
    h = hy.HyperonSpecies.spin_half(0.5)
    for n, m in random_unit_vectors(rng, 20).reshape(10, 2, 3):
        joint = hy.joint_angular_pdf_from_state(qc.tensor(ra, rb), h, h, n, m)
        assert joint == pytest.approx(hy.single_angular_pdf(ra, h, n) * hy.single_angular_pdf(rb, h, m), abs=1e-14)


# --- sampling ---------------------------------------------------------------------


@settings(max_examples=100)
@given(st.floats(0, 1), st.floats(-1, 1))
def test_inverse_cdf_inverts(u, a):
    chi = float(hy.linear_cosine_inverse_cdf(np.array(u), a))
    assert -1 - 1e-12 <= chi <= 1 + 1e-12
    cdf = ((chi + 1) - a * (chi * chi - 1) / 2) / 2
    assert cdf == pytest.approx(u, abs=1e-12)


def test_sampled_cosine_distribution_ks():
    batch = hy.sample_events(ALPHA, ALPHA, 100_000, seed=7)
    chi = np.sum(batch.n_L * batch.n_Lbar, axis=1)
    a = 0.46
    cdf = lambda x: ((x + 1) - a * (x * x - 1) / 2) / 2  # noqa: E731
    assert stats.kstest(chi, cdf).pvalue > 1e-3
    # the first daughter alone is isotropic
    assert stats.kstest(batch.n_L[:, 2], stats.uniform(-1, 2).cdf).pvalue > 1e-3


def test_sampled_spin_correlation_matrix():
    batch = hy.sample_events(ALPHA, ALPHA, 400_000, seed=3)
    c = hy.spin_correlation_matrix(batch)
    # each entry is 9 times a mean of products with variance <= 1/9
    tol = 3 * 9 * math.sqrt(1 / 9 / len(batch))
    np.testing.assert_allclose(c, -0.46 * np.eye(3), atol=tol)


def test_sampling_independent_of_workers():
    a = hy.sample_events(ALPHA, ALPHA, 200_000, seed=11, workers=1)
    b = hy.sample_events(ALPHA, ALPHA, 200_000, seed=11, workers=4)
    for col in hy.EVENT_COLUMNS:
        np.testing.assert_array_equal(getattr(a, col), getattr(b, col))


def test_sampling_seed_dependence():
    a = hy.sample_events(ALPHA, ALPHA, 1000, seed=1)
    b = hy.sample_events(ALPHA, ALPHA, 1000, seed=1)
    c = hy.sample_events(ALPHA, ALPHA, 1000, seed=2)
    np.testing.assert_array_equal(a.theta_L, b.theta_L)
    assert not np.array_equal(a.theta_L, c.theta_L)


def test_sample_rejects_bad_count():
    with pytest.raises(InvalidInputError):
        hy.sample_events(ALPHA, ALPHA, 0)


# --- witness --------------------------------------------------------------------


def test_witness_detects_singlet_entanglement():
    report = hy.witness_from_events(hy.sample_events(ALPHA, ALPHA, 1_000_000, seed=42))
    assert report.entangled
    assert report.witness_value == pytest.approx(1 / 3 - 0.46, abs=3 * report.standard_error)
    assert report.standard_error < 3e-3


def test_witness_without_analysing_power():
    report = hy.witness_from_events(hy.sample_events(0.0, ALPHA, 200_000, seed=5))
    assert not report.entangled
    assert report.witness_value == pytest.approx(1 / 3, abs=3 * report.standard_error)


def test_witness_error_scales_as_inverse_sqrt_n():
    small = hy.witness_from_events(hy.sample_events(ALPHA, ALPHA, 40_000, seed=9))
    large = hy.witness_from_events(hy.sample_events(ALPHA, ALPHA, 160_000, seed=9))
    assert small.standard_error / large.standard_error == pytest.approx(2, rel=0.05)


def test_separable_model_never_flagged():
    values = []
    for seed in range(100):
        report = hy.witness_from_events(hy.sample_separable_events(ALPHA, ALPHA, 5000, seed=seed))
        assert not report.entangled
        values.append(report.witness_value)
    # anti-aligned product states give (1 - aL aLb)/3
    assert np.mean(values) == pytest.approx(0.54 / 3, abs=0.01)


def test_tagged_polarization_slope():
    batch = hy.sample_events(ALPHA, ALPHA, 1_000_000, seed=42)
    for axis in ([0, 0, 1], [1, 0, 0]):
        slope, se = hy.tagged_polarization(batch, axis)
        assert slope == pytest.approx(-0.46 / 3, abs=3 * se)


def test_chsh_bound():
    value, violated = hy.hyperon_chsh_bound(ALPHA, ALPHA)
    assert value == pytest.approx(2 * math.sqrt(2) * 0.46)
    assert not violated
    assert hy.hyperon_chsh_bound(1.0, 1.0) == (pytest.approx(2 * math.sqrt(2)), True)
    s = 2 ** -0.25
    assert not hy.hyperon_chsh_bound(s, s * (1 - 1e-12))[1]


def test_chsh_bound_matches_data_correlations():
    # E(a, b) = 9 <(n.a)(m.b)> from the joint density, at the optimal planar angles
    dirs, weights = sphere_rule(4, 6)

    def corr(a, b):
        return 9 * sum(wn * wm * hy.joint_angular_pdf(ALPHA, ALPHA, n, m) * (n @ a) * (m @ b)
                       for n, wn in zip(dirs, weights) for m, wm in zip(dirs, weights))

    d = lambda deg: np.array([math.sin(math.radians(deg)), 0, math.cos(math.radians(deg))])  # noqa: E731
    s = corr(d(0), d(45)) - corr(d(0), d(135)) + corr(d(90), d(45)) + corr(d(90), d(135))
    assert abs(s) == pytest.approx(hy.hyperon_chsh_bound(ALPHA, ALPHA)[0], abs=1e-9)


# --- event files and directions --------------------------------------------------------


def test_event_file_round_trip(tmp_path):
    batch = hy.sample_events(ALPHA, ALPHA, 5000, seed=13)
    path = tmp_path / "events.csv"
    hy.write_events(batch, path)
    back = hy.read_events(path)
    for col in hy.EVENT_COLUMNS:
        np.testing.assert_array_equal(getattr(back, col), getattr(batch, col))
    assert back.seed == 13
    assert hy.witness_from_events(back) == hy.witness_from_events(batch)


def test_bad_event_file(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(InvalidInputError):
        hy.read_events(path)


def test_event_batch_validation():
    with pytest.raises(InvalidInputError):
        hy.EventBatch([4.0], [0.0], [0.0], [0.0])
    with pytest.raises(InvalidInputError):
        hy.EventBatch([], [], [], [])


def test_direction_round_trip(rng):
    for v in random_unit_vectors(rng, 200):
        d = hy.DecayDirection.from_vector(v)
        np.testing.assert_allclose(d.vector, v, atol=1e-14)
    with pytest.raises(InvalidInputError):
        hy.DecayDirection(0.1, 2 * math.pi)
