import numpy as np
import pytest

from wbp.finite_type import markov_chain_law, stationary_distribution, two_type_flip_law
from wbp.lineage import LineageLaw, lineage_average_increment, lineage_average_observable
from wbp.population import lineage_types, simulate_trajectory
from wbp.streams import derive_stream

CHAIN = np.array([[0.7, 0.3], [0.4, 0.6]])


def test_stationary_distribution_two_state():
    pi = stationary_distribution(CHAIN)
    assert pi == pytest.approx([4.0 / 7.0, 3.0 / 7.0])
    assert np.allclose(pi @ CHAIN, pi)


def test_single_child_chain_is_birkhoff_average():
    # one lineage of weight 1: A_n(f) = arithmetic mean of f along the path
    f = np.array([0.0, 1.0])
    law = LineageLaw(markov_chain_law(CHAIN), f)
    traj = simulate_trajectory(law, law.root_generation(0), 200, derive_stream(1, 0), retain=True)
    g = traj[-1]
    assert g.size == 1
    path = lineage_types(g, 0)[:, 0].astype(int)
    assert lineage_average_increment(g) == pytest.approx(f[path].mean(), rel=1e-12)


def test_constant_f_gives_total_mass_exactly():
    # M_e(1) = 1, so A_n(1) = G_n(1) pathwise, on a genuinely branching tree
    law = LineageLaw(two_type_flip_law(), np.ones(2))
    traj = simulate_trajectory(law, law.root_generation(0), 10, derive_stream(2, 0))
    for g in traj[1:]:
        assert lineage_average_increment(g) == g.total_mass()


def test_incremental_equals_tree_walk_exactly():
    # integer-valued f: running sums are exact, both routes agree bitwise
    f = np.array([0.0, 2.0])
    law = LineageLaw(two_type_flip_law(), f)
    traj = simulate_trajectory(law, law.root_generation(0), 12, derive_stream(3, 0), retain=True)
    assert traj[-1].size == 4096
    for g in traj[1:]:
        inc = lineage_average_increment(g)
        sums = np.array([f[lineage_types(g, i)[:, 0].astype(int)].sum() for i in range(g.size)])
        walk = float(np.dot(g.weights, sums) / g.index)
        assert inc == walk


def test_incremental_close_to_observable_route():
    f = np.array([0.3, 1.7])
    base = two_type_flip_law()
    enriched = LineageLaw(base, f)
    traj = simulate_trajectory(enriched, enriched.root_generation(0), 8, derive_stream(4, 0), retain=True)
    averages = np.array([lineage_average_increment(g) for g in traj[1:]])
    walked = lineage_average_observable(traj, lambda t: f[np.rint(t[:, 0]).astype(int)])
    assert np.allclose(averages, walked, rtol=1e-12)


def test_exhaustive_small_tree_comparison():
    # depth-3 flip tree: enumerate all 8 lineages by hand
    f = np.array([5.0, 11.0])
    law = LineageLaw(two_type_flip_law(), f)
    traj = simulate_trajectory(law, law.root_generation(0), 3, derive_stream(5, 0), retain=True)
    g3 = traj[3]
    # type alternates 0 -> 1 -> 0 -> 1 along every lineage
    for i in range(g3.size):
        path = lineage_types(g3, i)[:, 0].astype(int)
        assert path.tolist() == [1, 0, 1]
    expected = (f[1] + f[0] + f[1]) / 3.0
    assert lineage_average_increment(g3) == pytest.approx(expected, rel=1e-14)


def test_ergodic_average_converges_to_stationary():
    f = np.array([0.0, 1.0])
    law = LineageLaw(markov_chain_law(CHAIN), f)
    pi_f = float(stationary_distribution(CHAIN) @ f)
    reps, horizon = 120, 400
    finals = np.empty(reps)
    for r in range(reps):
        traj = simulate_trajectory(law, law.root_generation(0), horizon, derive_stream(6, r))
        finals[r] = lineage_average_increment(traj[-1])
    se = finals.std(ddof=1) / np.sqrt(reps)
    assert abs(finals.mean() - pi_f) <= 4 * se


def test_lineage_law_requires_generation_one():
    law = LineageLaw(two_type_flip_law(), np.ones(2))
    with pytest.raises(ValueError):
        lineage_average_increment(law.root_generation(0))
