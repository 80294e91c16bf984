import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from decaybell import chsh, kaon
from decaybell import quantum as qc
from decaybell.chsh import CHSHConfig, JointOutcomeTable, SpinSetting, TimeGrid
from decaybell.errors import InvalidInputError
from decaybell.kaon import ActiveQuestion, Flavor

from conftest import random_density, random_pure, random_unit_vectors

SQRT2 = math.sqrt(2)


# --- tables and S -----------------------------------------------------------------


def test_correlation_from_table_examples():
    assert chsh.correlation_from_table([[0.5, 0], [0, 0.5]]) == 1
    assert chsh.correlation_from_table([[0, 0.5], [0.5, 0]]) == -1
    assert chsh.correlation_from_table(np.full((2, 2), 0.25)) == 0
    assert chsh.correlation_from_table(JointOutcomeTable.from_counts([[3, 1], [1, 3]])) == pytest.approx(0.5)


def test_table_validation():
    with pytest.raises(InvalidInputError):
        JointOutcomeTable([[0.5, 0.5], [0.5, 0.5]])
    with pytest.raises(InvalidInputError):
        JointOutcomeTable([[1.2, -0.2], [0, 0]])
    with pytest.raises(InvalidInputError):
        JointOutcomeTable([1.0])


def test_chsh_value_sign_pattern():
    assert chsh.chsh_value(1, -1, 1, 1) == 4
    assert chsh.chsh_value(1, 1, 1, 1) == 2
    with pytest.raises(InvalidInputError):
        chsh.chsh_value(1.1, 0, 0, 0)


@settings(max_examples=100)
@given(st.lists(st.floats(-1, 1), min_size=4, max_size=4))
def test_chsh_value_bounded_by_four(es):
    assert abs(chsh.chsh_value(*es)) <= 4


# --- local hidden variables -------------------------------------------------------------


def test_sixteen_deterministic_strategies():
    values = chsh.lhv_strategy_values()
    assert values.size == 16
    assert values.max() == 2
    assert values.min() == -2
    assert set(np.unique(values)) == {-2.0, 2.0}


def test_lhv_bound_with_repeated_setting():
    cfg = CHSHConfig.planar(0, 45, 0, 135)
    assert chsh.lhv_brute_force_bound(cfg) == 2


def test_random_local_models_never_exceed_two(rng):
    # hidden variable lam picks a deterministic strategy; tables come from the mixture
    strategies = np.array(list(itertools.product((1, -1), repeat=4)))  # a, a', b, b'
    for _ in range(2000):
        w = rng.dirichlet(np.full(16, 0.3))

        def table(ia, ib):
            t = np.zeros((2, 2))
            for weight, s in zip(w, strategies):
                t[(1 - s[ia]) // 2, (1 - s[ib]) // 2] += weight
            return t

        es = [chsh.correlation_from_table(table(ia, ib)) for ia, ib in ((0, 2), (0, 3), (1, 2), (1, 3))]
        assert abs(chsh.chsh_value(*es)) <= 2 + 1e-12


# --- quantum spin pairs ------------------------------------------------------------------


def test_singlet_reaches_tsirelson():
    res = chsh.quantum_chsh(qc.singlet())
    assert res.magnitude == pytest.approx(2 * SQRT2, abs=1e-12)
    assert res.s_value < 0
    assert res.violates_local_realism


def test_optimal_angles_are_planar():
    cfg = chsh.optimal_config()
    np.testing.assert_allclose(cfg.m.direction, [math.sin(math.pi / 4), 0, math.cos(math.pi / 4)])


def test_tsirelson_bound_random_states_and_settings(rng):
    for _ in range(1000):
        rho = random_density(rng, 4, rank=int(rng.integers(1, 5)))
        dirs = random_unit_vectors(rng, 4)
        cfg = CHSHConfig(*(SpinSetting(d) for d in dirs))
        assert chsh.quantum_chsh(rho, cfg).magnitude <= 2 * SQRT2 + 1e-12


def test_separable_states_respect_classical_bound(rng):
    for _ in range(500):
        weights = rng.dirichlet(np.ones(3))
        rho = sum(w * qc.tensor(qc.projector(random_pure(rng, 2)), qc.projector(random_pure(rng, 2)))
                  for w in weights)
        dirs = random_unit_vectors(rng, 4)
        cfg = CHSHConfig(*(SpinSetting(d) for d in dirs))
        assert chsh.quantum_chsh(rho, cfg).magnitude <= 2 + 1e-12


@pytest.mark.parametrize("p", [0.0, 0.5, 1 / SQRT2, 0.9, 1.0])
def test_werner_state_scaling(p):
    rho = p * qc.projector(qc.singlet()) + (1 - p) * np.eye(4) / 4
    assert chsh.quantum_chsh(rho).magnitude == pytest.approx(2 * SQRT2 * p, abs=1e-12)


def test_maximally_mixed_gives_zero():
    assert chsh.quantum_chsh(np.eye(4) / 4).s_value == pytest.approx(0, abs=1e-15)


def test_quantum_chsh_rejects_wrong_dimension():
    with pytest.raises(InvalidInputError):
        chsh.quantum_chsh(np.eye(2) / 2)


# --- kaon time scan ------------------------------------------------------------------------


def question_direction(flavor: Flavor, t: float, delta_m: float) -> np.ndarray:
    """Bloch direction of the yes/no observable for a stable kaon; rotation about x."""
    base = np.array([0.0, math.sin(delta_m * t), math.cos(delta_m * t)])
    return base if flavor is Flavor.K0 else -base


def test_question_direction_oracle_self_consistent(no_decay):
    t = 1.7
    u = kaon.propagator(t, no_decay)
    obs = u.conj().T @ qc.SIGMA_Z @ u
    np.testing.assert_allclose(obs, qc.spin_observable(question_direction(Flavor.K0, t, no_decay.delta_m)), atol=1e-14)


def test_stable_kaons_equal_rotated_spin_singlet(no_decay, rng):
    flavor_sets = [(Flavor.K0BAR,) * 4, (Flavor.K0,) * 4, (Flavor.K0, Flavor.K0BAR, Flavor.K0BAR, Flavor.K0)]
    for flavors in flavor_sets:
        for times in rng.uniform(0, 12, size=(10, 4)):
            s_kaon = chsh._s_from_times(times, flavors, no_decay, 1.0)
            cfg = CHSHConfig(*(SpinSetting(question_direction(f, t, no_decay.delta_m)) for f, t in zip(flavors, times)))
            assert s_kaon == pytest.approx(chsh.quantum_chsh(qc.singlet(), cfg).s_value, abs=1e-12)


def test_kaon_s_matches_tables(physical):
    times = (0.3, 1.1, 2.4, 0.0)
    flavors = (Flavor.K0, Flavor.K0BAR, Flavor.K0BAR, Flavor.K0)

    def e(i, j):
        table = kaon.strangeness_table(ActiveQuestion(flavors[i], times[i]), ActiveQuestion(flavors[j], times[j]), physical)
        return chsh.correlation_from_table(table)

    expected = chsh.chsh_value(e(0, 1), e(0, 3), e(2, 1), e(2, 3))
    assert chsh._s_from_times(times, flavors, physical, 1.0) == pytest.approx(expected, abs=1e-12)


def test_no_decay_scan_reaches_tsirelson(no_decay):
    res = chsh.kaon_chsh_scan(no_decay)
    assert res.max_S == pytest.approx(2 * SQRT2, abs=1e-6)


@pytest.mark.parametrize("preset", ["physical", "cp-conserving"])
@pytest.mark.parametrize("flavor", [Flavor.K0, Flavor.K0BAR])
def test_decaying_kaons_stay_below_two(preset, flavor):
    res = chsh.kaon_chsh_scan(kaon.load_constants(preset), flavors=(flavor,) * 4)
    assert res.coarse_max_S < 2
    assert res.max_S < 2
    assert res.max_S >= res.coarse_max_S


def test_degenerate_settings_reach_exactly_two(physical):
    # n = n' and m = m' at t = 0 is one measurement repeated: S = 2 E(0, 0) = -2
    res = chsh.kaon_chsh_scan(physical, refine=False, distinct_settings=False)
    assert res.coarse_max_S == pytest.approx(2, abs=1e-12)
    assert res.coarse_argmax == (0.0, 0.0, 0.0, 0.0)


def test_merging_settings_approach_two_from_below(physical):
    # with no minimum gap the optimiser slides n' onto n, where S = 2 E(n, m)
    res = chsh.kaon_chsh_scan(physical, min_separation=0.0)
    assert 1.999 < res.max_S <= 2 + 1e-12
    n, _, n2, _ = res.argmax
    assert abs(n - n2) < 1e-3


def test_separation_constraint_respected(physical):
    res = chsh.kaon_chsh_scan(physical, min_separation=0.5)
    n, m, n2, m2 = res.argmax
    assert abs(n - n2) >= 0.5 * (1 - 1e-9)
    assert abs(m - m2) >= 0.5 * (1 - 1e-9)
    assert res.max_S < chsh.kaon_chsh_scan(physical).max_S
    assert res.min_separation == 0.5


def test_different_flavours_need_no_separation(physical):
    res = chsh.kaon_chsh_scan(physical, flavors=("K0", "K0", "K0bar", "K0bar"), grid=TimeGrid(0, 3, 6), refine=False)
    assert np.isfinite(res.table[2, 1, 2, 1])


def test_single_point_grid(physical):
    grid = TimeGrid(1.0, 1.0, 1)
    res = chsh.kaon_chsh_scan(physical, grid=grid, refine=False, distinct_settings=False)
    e = kaon.correlation_grid(physical, "K0bar", "K0bar", [1.0], [1.0])[0, 0]
    assert res.s_at_max == pytest.approx(2 * e, abs=1e-14)
    with pytest.raises(InvalidInputError):
        chsh.kaon_chsh_scan(physical, grid=grid, refine=False)


def test_excluded_tuples_are_nan(physical):
    res = chsh.kaon_chsh_scan(physical, grid=TimeGrid(0, 3, 5), refine=False)
    assert np.isnan(res.table[1, 2, 1, 3])
    assert np.isnan(res.table[0, 2, 3, 2])
    # neighbouring grid points are exactly one step apart and allowed
    assert np.isfinite(res.table[0, 0, 1, 1])
    assert np.isfinite(res.table[0, 1, 2, 3])


def test_scan_is_deterministic(physical):
    a = chsh.kaon_chsh_scan(physical)
    b = chsh.kaon_chsh_scan(physical)
    assert a.max_S == b.max_S
    assert a.argmax == b.argmax
    np.testing.assert_array_equal(a.table, b.table)


def test_flavour_asymmetry_from_cp_violation(physical, cp_conserving):
    k0 = chsh.kaon_chsh_scan(physical, flavors=(Flavor.K0,) * 4, refine=False)
    k0bar = chsh.kaon_chsh_scan(physical, flavors=(Flavor.K0BAR,) * 4, refine=False)
    assert abs(k0.coarse_max_S - k0bar.coarse_max_S) > 1e-9
    assert np.nanmax(np.abs(k0.table - k0bar.table)) > 1e-6

    k0 = chsh.kaon_chsh_scan(cp_conserving, flavors=(Flavor.K0,) * 4, refine=False)
    k0bar = chsh.kaon_chsh_scan(cp_conserving, flavors=(Flavor.K0BAR,) * 4, refine=False)
    assert k0.coarse_max_S == pytest.approx(k0bar.coarse_max_S, abs=1e-12)
    np.testing.assert_allclose(k0.table, k0bar.table, atol=1e-12)


def test_outcome_sign_flips_s(physical):
    a = chsh.kaon_chsh_scan(physical, grid=TimeGrid(0, 2, 4), refine=False)
    b = chsh.kaon_chsh_scan(physical, grid=TimeGrid(0, 2, 4), refine=False, outcome_sign=-1.0)
    np.testing.assert_array_equal(a.table, -b.table)


def test_default_grid(physical, no_decay):
    assert TimeGrid.default(physical).t_max == pytest.approx(4 / physical.gamma_S)
    assert TimeGrid.default(no_decay).t_max == pytest.approx(2 * math.pi / no_decay.delta_m)


@pytest.mark.parametrize("args", [(0, 1, 0), (-1, 1, 3), (2, 1, 3), (1, 1, 3)])
def test_bad_time_grid(args):
    with pytest.raises(InvalidInputError):
        TimeGrid(*args)
