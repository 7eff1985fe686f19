import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_graph
from netwatch.errors import InvalidAnomaly, NoUniqueStationary
from netwatch.graph import DirectedGraph
from netwatch.simgen import (
    ANOMALY_CASES,
    M0,
    AnomalySpec,
    GenConfig,
    MarkovNetworkProcess,
    TransitionMatrix,
    convert_asym_to_mutual,
    generate_series,
    logit,
    round_half_up,
    sample_base_network,
    stationary_distribution,
    step_markov,
)
from netwatch.stats import TermSet, compute_stats

DYADS = TermSet.parse("edges,asymmetric,mutual")
IDENTITY = TransitionMatrix(1.0, 0.0, 0.0, 1.0)


def test_round_half_up():
    assert [round_half_up(x) for x in (0.5, 1.5, 2.5, 2.49)] == [1, 2, 3, 2]


def test_transition_matrix_validation():
    with pytest.raises(ValueError):
        TransitionMatrix(0.9, 0.2, 0.4, 0.6)
    with pytest.raises(ValueError):
        TransitionMatrix(1.1, -0.1, 0.4, 0.6)


def test_catalogued_type_a_cases_keep_rows_stochastic():
    a1 = ANOMALY_CASES["A.1"][1]["m1"]
    assert (a1.m00, a1.m01, a1.m10, a1.m11) == (0.89, pytest.approx(0.11), 0.4, 0.6)
    a2 = ANOMALY_CASES["A.2"][1]["m1"]
    assert (a2.m10, a2.m11) == (0.6, pytest.approx(0.4))
    a3 = ANOMALY_CASES["A.3"][1]["m1"]
    assert (a3.m00, a3.m01, a3.m10, a3.m11) == (0.5, 0.5, 0.5, 0.5)


def test_stationary_distribution():
    assert stationary_distribution(M0) == pytest.approx((0.8, 0.2))
    assert stationary_distribution(TransitionMatrix(0.7, 0.3, 0.3, 0.7)) == pytest.approx((0.5, 0.5))
    with pytest.raises(NoUniqueStationary):
        stationary_distribution(IDENTITY)


def test_type_a3_stationary_density_is_one_half():
    m1 = AnomalySpec.case("A.3").m1
    assert stationary_distribution(m1)[1] == pytest.approx(0.5 / (0.5 + 0.5))


def test_step_with_identity_or_empty_selection_copies(rng):
    g = random_graph(rng, 8, 0.3)
    assert step_markov(g, 1.0, IDENTITY, rng) == g
    # 56 cells * 0.005 rounds to 0 selected cells
    assert step_markov(g, 0.005, M0, rng) == g


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 12), st.floats(0.01, 1.0), st.integers(0, 2**32 - 1))
def test_step_changes_at_most_selected_cells(n, phi, seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, n, 0.5)
    h = step_markov(g, phi, TransitionMatrix(0.0, 1.0, 1.0, 0.0), rng)
    changed = int((g.adjacency != h.adjacency).sum())
    # with a pure flip matrix every selected cell changes
    assert changed == round_half_up(phi * n * (n - 1))
    assert not h.adjacency.diagonal().any()


@pytest.mark.parametrize("m", [M0, TransitionMatrix(0.7, 0.3, 0.55, 0.45), TransitionMatrix(0.95, 0.05, 0.15, 0.85)])
def test_long_run_edge_fraction_matches_stationary(m):
    cfg = GenConfig(n_nodes=30, phi=0.2, m=m, burn_in=200, base_sweeps=5, seed=3)
    s = generate_series(cfg, 600)
    frac = np.mean([g.density for g in s])
    pi1 = stationary_distribution(m)[1]
    # per-step density sd is about sqrt(pi1(1-pi1)/870); 600 correlated steps, lag-1 corr 0.8*(1-m01-m10)
    assert frac == pytest.approx(pi1, abs=0.01)


def test_convert_zero_and_full():
    rng = np.random.default_rng(0)
    g = random_graph(rng, 20, 0.3)
    assert convert_asym_to_mutual(g, 0.0, rng) == g
    e, asym, mut = compute_stats(DYADS, g)
    full = convert_asym_to_mutual(g, 1.0, rng)
    assert compute_stats(DYADS, full).tolist() == [e + asym, 0, mut + asym]


def test_convert_exact_count_for_400_asymmetric_dyads():
    n = 40
    a = np.zeros((n, n), dtype=bool)
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)][:400]
    for i, j in pairs:
        a[i, j] = True
    g = DirectedGraph(a)
    assert compute_stats(DYADS, g)[1] == 400
    h = convert_asym_to_mutual(g, 0.05, np.random.default_rng(1))
    assert h.n_edges - g.n_edges == 20
    assert compute_stats(DYADS, h)[2] == 20


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 12), st.floats(0.0, 1.0), st.integers(0, 2**32 - 1))
def test_convert_never_removes_edges(n, zeta, seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, n, 0.4)
    h = convert_asym_to_mutual(g, zeta, rng)
    assert not (g.adjacency & ~h.adjacency).any()


def test_base_network_density():
    cfg = GenConfig(n_nodes=40, base_sweeps=20)
    rng = np.random.default_rng(5)
    dens = [sample_base_network(cfg, rng).density for _ in range(20)]
    se = math.sqrt(0.2 * 0.8 / (40 * 39 * 20))
    assert abs(np.mean(dens) - 0.2) < 3 * se
    empty = sample_base_network(GenConfig(n_nodes=40, base_coeffs=(-10, 0, 0), base_sweeps=5), rng)
    assert empty.density < 0.001


def test_generation_is_reproducible():
    cfg = GenConfig(n_nodes=20, burn_in=50, base_sweeps=5, seed=11)
    a, b = generate_series(cfg, 30), generate_series(cfg, 30)
    assert all(x == y for x, y in zip(a, b))
    c = generate_series(GenConfig(n_nodes=20, burn_in=50, base_sweeps=5, seed=12), 30)
    assert any(x != y for x, y in zip(a, c))


def test_zero_strength_type_c_is_bitwise_identical():
    cfg = GenConfig(n_nodes=20, burn_in=50, base_sweeps=5, seed=2)
    plain = generate_series(cfg, 40)
    c0 = generate_series(cfg, 40, AnomalySpec("C", tau=10, zeta=0.0))
    assert all(x == y for x, y in zip(plain, c0))


def test_anomalies_share_the_prefix_before_tau():
    cfg = GenConfig(n_nodes=20, burn_in=50, base_sweeps=5, seed=2)
    plain = generate_series(cfg, 40)
    for name in ("A.3", "B.3", "C.3"):
        s = generate_series(cfg, 40, AnomalySpec.case(name, tau=20))
        assert all(x == y for x, y in zip(plain[:19], s[:19]))
        assert s[19] != plain[19]


def test_type_c_nested_conversions():
    cfg = GenConfig(n_nodes=30, burn_in=20, base_sweeps=5, seed=4)
    at_tau = [generate_series(cfg, 5, AnomalySpec.case(c, tau=5))[4].adjacency for c in ("C.1", "C.2", "C.3")]
    assert not (at_tau[0] & ~at_tau[1]).any() and not (at_tau[1] & ~at_tau[2]).any()


def test_type_a3_shifts_density_to_one_half():
    cfg = GenConfig(n_nodes=30, phi=0.2, burn_in=100, base_sweeps=5, seed=9)
    s = generate_series(cfg, 300, AnomalySpec.case("A.3", tau=101))
    assert np.mean([g.density for g in s[:100]]) == pytest.approx(0.2, abs=0.02)
    assert np.mean([g.density for g in s[150:]]) == pytest.approx(0.5, abs=0.02)


def test_anomaly_validation():
    with pytest.raises(InvalidAnomaly):
        AnomalySpec("D", tau=5)
    with pytest.raises(InvalidAnomaly):
        AnomalySpec("B", tau=5, phi1=0.0)
    with pytest.raises(InvalidAnomaly):
        AnomalySpec("C", tau=0, zeta=0.1)
    with pytest.raises(InvalidAnomaly):
        AnomalySpec("A", tau=5)
    with pytest.raises(InvalidAnomaly):
        AnomalySpec.case("Z.9")


def test_process_labels_start_at_one():
    p = MarkovNetworkProcess(GenConfig(n_nodes=10, burn_in=5, base_sweeps=1), np.random.default_rng(0))
    p.advance()
    assert p.t == 1
    with pytest.raises(ValueError):
        generate_series(GenConfig(n_nodes=10), 0)
    assert logit(0.5) == 0.0
