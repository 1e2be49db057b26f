import math
from collections import Counter

import numpy as np
import pytest
from scipy.stats import norm

from conftest import graph, path, two_cliques_bridge
from memetrap.cascade import (
    CascadeParams,
    community_restricted,
    run_ensemble,
    simulate,
    simulate_m1,
    simulate_m2,
    simulate_m3,
    simulate_m4,
    subsample,
    substream,
)
from memetrap.community import Partition, trivial_partition
from memetrap.synthgen import PlantedPartitionSpec, gen_network


def raw(target, p=0.85, seed=0):
    return CascadeParams(p=p, target_tweets=target, oversample_factor=1, seed=seed)


def within_3sigma(observed, mean, sd):
    return abs(observed - mean) <= 3 * sd


# ---- params


def test_params_validation():
    with pytest.raises(ValueError):
        CascadeParams(p=1.2)
    with pytest.raises(ValueError):
        CascadeParams(target_tweets=0)
    with pytest.raises(ValueError):
        CascadeParams(sample_rate=0.0)
    assert CascadeParams().n_events == 500


# ---- M1


def test_m1_users_exhaustive():
    net = graph(100, [(i, i + 1) for i in range(99)])
    tr = simulate_m1(net, raw(100), "users", np.random.default_rng(0))
    assert sorted(tr.users.tolist()) == list(range(100))


def test_m1_users_needs_enough_nodes():
    with pytest.raises(ValueError):
        simulate_m1(path(5), raw(6), "users")


def test_m1_tweets_count():
    tr = simulate_m1(path(10), raw(50), "tweets", np.random.default_rng(1))
    assert len(tr) == 50
    assert len(subsample(simulate_m1(path(10), CascadeParams(target_tweets=50), "tweets"), 0.1, 0)) == 50


def test_m1_users_binomial_oracle():
    n, k = 10_000, 10
    net = graph(n, [])
    part = Partition(np.repeat(np.arange(k), n // k))
    runs = 1000
    counts = np.zeros(k)
    for i in range(runs):
        tr = simulate_m1(net, raw(50), "users", substream(11, i))
        counts += np.bincount(part.assignment[tr.users], minlength=k)
    mean = counts / runs
    # each community: hypergeometric(50 draws, 1000 of 10000) ~ binomial(50, 0.1)
    sd = math.sqrt(50 * 0.1 * 0.9 * (n - 50) / (n - 1) / runs)
    # ten simultaneous checks: keep the family-wise level of one 3-sigma test (alpha 0.0027)
    z = norm.isf(0.0027 / 2 / k)
    assert np.all(np.abs(mean - 5.0) <= z * sd)
    assert abs(mean.sum() - 50) < 1e-9


# ---- M2


def test_m2_path_first_step():
    for s in range(50):
        tr = simulate_m2(path(3), raw(2, p=1.0), np.random.default_rng(s), seed_user=0)
        assert tr.users.tolist() == [0, 1]


def triangle_oracle():
    """Exact distinct-adopter distribution for 3 events on a triangle with p=1."""
    dist = Counter()
    for seed in range(3):
        for nb1 in [v for v in range(3) if v != seed]:
            infected = [seed, nb1]
            for x in infected:
                for nb2 in [v for v in range(3) if v != x]:
                    # each leaf of the tree: 1/3 * 1/2 * 1/2 * 1/2
                    dist[len({seed, nb1, nb2})] += 1 / 3 * 1 / 2 * 1 / 2 * 1 / 2
    return dist


def test_m2_triangle_enumeration(triangle):
    oracle = triangle_oracle()
    assert math.isclose(sum(oracle.values()), 1.0)
    runs = 20_000
    obs = Counter(len(set(simulate_m2(triangle, raw(3, p=1.0), substream(5, i)).users.tolist()))
                  for i in range(runs))
    for k, prob in oracle.items():
        assert within_3sigma(obs[k] / runs, prob, math.sqrt(prob * (1 - prob) / runs))
    assert set(obs) <= set(oracle)


def test_m2_star_leaves_uniform():
    star = graph(11, [(0, i) for i in range(1, 11)])
    tr = simulate_m2(star, raw(20_000, p=1.0), np.random.default_rng(3), seed_user=0)
    leaves = tr.users[tr.users > 0]
    counts = np.bincount(leaves, minlength=11)[1:]
    N = len(leaves)
    sd = math.sqrt(N * 0.1 * 0.9)
    assert np.all(np.abs(counts - N * 0.1) <= norm.isf(0.0027 / 2 / 10) * sd)


def test_m2_needs_edges():
    with pytest.raises(ValueError):
        simulate_m2(graph(3, []), raw(5))


# ---- M3


def test_m3_unique_argmax():
    # 0 and 1 infected; node 2 neighbours both, node 3 only node 0
    net = graph(4, [(0, 2), (1, 2), (0, 3), (0, 1)])
    for s in range(20):
        tr = simulate_m3(net, raw(3, p=1.0), np.random.default_rng(s), seed_user=0)
        # after 0: counts 1:1, 2:1, 3:1 -> lowest id 1; then node 2 has two infected neighbours
        assert tr.users.tolist() == [0, 1, 2]


def test_m3_two_cliques_stays_in_seed_clique():
    net, part = two_cliques_bridge(4)
    for seed_user in range(4):
        tr = simulate_m3(net, raw(4, p=1.0), np.random.default_rng(seed_user), seed_user=seed_user)
        adoptions = list(dict.fromkeys(tr.users.tolist()))
        assert all(part.assignment[u] == 0 for u in adoptions[:4])


def test_m3_tie_goes_to_lowest_id():
    star = graph(4, [(0, 1), (0, 2), (0, 3)])
    tr = simulate_m3(star, raw(2, p=1.0), np.random.default_rng(0), seed_user=0)
    assert tr.users[1] == 1


def test_m3_restarts_when_no_candidate():
    net = graph(3, [(0, 1)])  # node 2 isolated
    tr = simulate_m3(net, raw(4, p=1.0), np.random.default_rng(0), seed_user=2)
    assert tr.infector[1] == -1  # nobody had an infected neighbour


# ---- M4


def test_m4_never_leaves_seed_clique_without_restart():
    net, part = two_cliques_bridge(5)
    for s in range(30):
        tr = simulate_m4(net, part, raw(40, p=1.0), np.random.default_rng(s), seed_user=s % 5)
        assert np.all(part.assignment[tr.users] == 0)


def test_m4_single_community_equals_m2():
    rng = np.random.default_rng(2)
    net = graph(30, rng.integers(0, 30, size=(80, 2)))
    one = trivial_partition(30)
    for s in range(20):
        a = simulate_m2(net, raw(60), substream(s, 0))
        b = simulate_m4(net, one, raw(60), substream(s, 0))
        assert np.array_equal(a.users, b.users) and np.array_equal(a.infector, b.infector)


def test_m4_partition_must_cover():
    net, _ = two_cliques_bridge(3)
    with pytest.raises(ValueError):
        simulate_m4(net, Partition([0, 0, 1]), raw(5))
    with pytest.raises(ValueError):
        community_restricted(net, Partition([0, 1]))


def test_m4_more_dominant_than_m2_on_planted_graph():
    net, part = gen_network(PlantedPartitionSpec(n=1000, k=10, p_in=0.1, p_out=0.002, seed=5))
    params = CascadeParams(seed=3)
    m2 = run_ensemble(net, part, "M2", params, n_sims=100, n_samples=1)
    m4 = run_ensemble(net, part, "M4", params, n_sims=100, n_samples=1)
    assert m4.values["r"].mean() >= m2.values["r"].mean()


# ---- shared invariants


@pytest.mark.parametrize("model", ["M1", "M2", "M3", "M4"])
def test_raw_event_count(model):
    net, part = two_cliques_bridge(6)
    params = CascadeParams(target_tweets=7, oversample_factor=3)
    tr = simulate(model, net, part, params, rng=np.random.default_rng(0))
    assert len(tr) == 21


@pytest.mark.parametrize("model", ["M2", "M3", "M4"])
def test_infector_is_infected_adjacent_neighbour(model):
    net, part = gen_network(PlantedPartitionSpec(n=200, k=4, p_in=0.1, p_out=0.01, seed=2))
    for s in range(10):
        tr = simulate(model, net, part, CascadeParams(seed=s), rng=substream(s, 0))
        seen = set()
        for u, src in zip(tr.users.tolist(), tr.infector.tolist()):
            if src >= 0:
                assert src in seen and net.has_edge(u, src)
                if model == "M4":
                    assert part.assignment[u] == part.assignment[src]
            seen.add(u)


def test_unknown_model():
    with pytest.raises(ValueError):
        simulate("M5", path(3), None, raw(2))


# ---- subsampling


def test_subsample_rate_one_is_identity():
    tr = simulate_m2(path(6), raw(30), np.random.default_rng(0))
    out = subsample(tr, 1.0, 4)
    assert np.array_equal(out.users, tr.users) and np.array_equal(out.seq, tr.seq)


def test_subsample_exact_count_and_order():
    tr = simulate_m2(path(20), raw(500), np.random.default_rng(0))
    out = subsample(tr, 0.1, np.random.default_rng(9))
    assert len(out) == 50
    assert out.seq.tolist() == list(range(50))
    assert np.all(np.diff(out.ts) > 0)  # original timestamps kept, still in order


def test_subsample_inclusion_uniform():
    tr = simulate_m2(path(20), raw(500), np.random.default_rng(0))
    reps = 10_000
    hits = np.zeros(500)
    for i in range(reps):
        hits[subsample(tr, 0.1, substream(1, i)).ts] += 1
    freq = hits / reps
    # marginal inclusion of a fixed event under exact-count sampling is 50/500
    sd = math.sqrt(0.1 * 0.9 / reps)
    outside = np.abs(freq - 0.1) > 3 * sd
    assert outside.mean() <= 0.01  # ~0.27% expected by chance alone
    assert np.all(np.abs(freq - 0.1) <= 5 * sd)


def test_subsample_to_empty_is_flagged():
    tr = simulate_m1(path(3), raw(1), "tweets", np.random.default_rng(0))
    with pytest.raises(ValueError):
        subsample(tr, 0.0, 0)
    assert len(subsample(tr, 0.5, 0)) == 1


# ---- ensembles


def test_ensemble_counts_and_self_ratio():
    net, part = gen_network(PlantedPartitionSpec(n=300, k=3, p_in=0.05, p_out=0.005, seed=0))
    ens = run_ensemble(net, part, "M1", CascadeParams(seed=1), n_sims=100, n_samples=10, keep_traces=True)
    assert len(ens.traces) == 1000 and len(ens.values["r"]) == 1000
    s = ens.summary()
    assert s["r"]["mean"] / s["r"]["mean"] == 1.0


def test_ensemble_deterministic():
    net, part = two_cliques_bridge(6)
    a = run_ensemble(net, part, "M3", CascadeParams(target_tweets=5, seed=4), n_sims=10, n_samples=3)
    b = run_ensemble(net, part, "M3", CascadeParams(target_tweets=5, seed=4), n_sims=10, n_samples=3)
    assert a.to_json() == b.to_json()


def test_substreams_are_order_free():
    a = substream(3, 1, 2).random(4)
    substream(3, 9).random(100)
    assert np.array_equal(a, substream(3, 1, 2).random(4))
    assert not np.array_equal(a, substream(3, 2, 1).random(4))


def test_users_mode_on_small_network_draws_kept_users_directly():
    net, part = two_cliques_bridge(15)  # 30 nodes, oversampled pool of 200 would not fit
    params = CascadeParams(target_tweets=20, seed=2)
    ens = run_ensemble(net, part, "M1", params, n_sims=50, n_samples=4, mode="users", keep_traces=True)
    assert all(tr.T == tr.U == 20 for tr in ens.traces)
    hits = np.bincount(np.concatenate([tr.users for tr in ens.traces]), minlength=30)
    # each node is kept with probability 20/30 in each of the 200 samples; 3 sigma family-wise over 30 nodes
    z = norm.isf(0.0027 / 2 / 30)
    assert np.all(np.abs(hits - 200 * 2 / 3) <= z * math.sqrt(200 * 2 / 9))
    with pytest.raises(ValueError, match="distinct users"):
        run_ensemble(net, part, "M1", CascadeParams(target_tweets=31, seed=2), n_sims=1, n_samples=1, mode="users")
