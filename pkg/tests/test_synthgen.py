import json
import math
from dataclasses import replace

import numpy as np
import pytest
from scipy.special import comb

from memetrap.community import Partition, detect_louvain
from memetrap.metrics import concentration, usage_dominance
from memetrap.synthgen import (
    PlantedCascadeSpec,
    PlantedPartitionSpec,
    draw_popularity,
    gen_cascades,
    gen_network,
    write_world,
)
from memetrap.trace import read_traces


def adjusted_rand(a, b):
    table = np.zeros((a.max() + 1, b.max() + 1), dtype=np.int64)
    np.add.at(table, (a, b), 1)
    n = len(a)
    s_ij = comb(table, 2).sum()
    s_a = comb(table.sum(1), 2).sum()
    s_b = comb(table.sum(0), 2).sum()
    expected = s_a * s_b / comb(n, 2)
    return (s_ij - expected) / (0.5 * (s_a + s_b) - expected)


@pytest.fixture(scope="module")
def reference():
    return gen_network(PlantedPartitionSpec(n=1000, k=10, p_in=0.1, p_out=0.002, seed=3))


@pytest.fixture(scope="module")
def reference_memes(reference):
    net, part = reference
    return gen_cascades(net, part, PlantedCascadeSpec(n_memes=100, simple_fraction=0.5, seed=4))


def test_spec_validation():
    with pytest.raises(ValueError):
        PlantedPartitionSpec(p_in=0.1, p_out=0.2)
    with pytest.raises(ValueError):
        PlantedPartitionSpec(n=10, k=3)
    with pytest.raises(ValueError):
        PlantedPartitionSpec(n=10, k=2, sizes=(4, 5))
    PlantedPartitionSpec(n=10, k=2, sizes=(4, 6))


def test_full_blocks_are_cliques():
    net, part = gen_network(PlantedPartitionSpec(n=30, k=3, p_in=1.0, p_out=0.0, seed=0))
    assert net.edge_count == 3 * 45
    for u in range(30):
        assert np.all(part.assignment[net.neighbors(u)] == part.assignment[u])
        assert net.degree(u) == 9


def test_unequal_blocks():
    net, part = gen_network(PlantedPartitionSpec(n=9, k=2, p_in=1.0, p_out=0.0, sizes=(4, 5), seed=0))
    assert list(part.sizes()) == [4, 5] and net.edge_count == 6 + 10


def test_reference_degrees_within_three_sigma(reference):
    net, part = reference
    e = net.edge_array()
    a = part.assignment
    intra = int(np.sum(a[e[:, 0]] == a[e[:, 1]]))
    inter = len(e) - intra
    # edge counts are binomial; mean degree is twice the count over n
    n_intra, n_inter = 10 * 4950, (1000 * 999 // 2) - 10 * 4950
    for count, pairs, p, expected_deg in ((intra, n_intra, 0.1, 9.9), (inter, n_inter, 0.002, 1.8)):
        assert pairs * p * 2 / 1000 == pytest.approx(expected_deg)
        assert abs(count - pairs * p) <= 3 * math.sqrt(pairs * p * (1 - p))


def test_ground_truth_is_valid_partition(reference):
    net, part = reference
    assert isinstance(part, Partition) and part.covers(net) and part.C == 10


def test_louvain_recovers_strong_planted_structure():
    net, truth = gen_network(PlantedPartitionSpec(n=500, k=5, p_in=0.3, p_out=0.001, seed=11))
    found = detect_louvain(net, seed=0)
    assert adjusted_rand(truth.assignment, found.assignment) > 0.95


def test_adjusted_rand_oracle():
    a = np.array([0, 0, 1, 1])
    assert adjusted_rand(a, np.array([1, 1, 0, 0])) == pytest.approx(1.0)
    assert adjusted_rand(np.array([0, 0, 0, 1, 1, 1]), np.array([0, 1, 2, 0, 1, 2])) < 0


def test_sparse_graph_flagged(caplog):
    net, _ = gen_network(PlantedPartitionSpec(n=100, k=10, p_in=0.05, p_out=0.001, seed=0))
    assert net.ingest_stats["sparse_warning"] and "expected mean degree" in caplog.text


def test_infinite_threshold_confines_complex_memes(reference):
    net, part = reference
    spec = PlantedCascadeSpec(n_memes=20, simple_fraction=0.0, complex_threshold=math.inf, seed=1)
    memes = gen_cascades(net, part, spec)
    for tr in memes.traces:
        assert usage_dominance(tr, part).value == 1.0


def test_simple_memes_reach_more_communities(reference, reference_memes):
    net, part = reference
    touched = {"simple": [], "complex": []}
    for tr in reference_memes.traces:
        touched[reference_memes.contagion[tr.meme_id]].append(concentration(tr, net, part)["C_touched"])
    assert len(touched["simple"]) == len(touched["complex"]) == 50
    assert np.mean(touched["simple"]) > np.mean(touched["complex"])


def test_simple_popularity_heavier(reference_memes):
    pop = {"simple": [], "complex": []}
    for tr in reference_memes.traces:
        pop[reference_memes.contagion[tr.meme_id]].append(tr.T)
    assert np.median(pop["simple"]) > 2 * np.median(pop["complex"])
    assert max(pop["complex"]) <= PlantedCascadeSpec().complex_max_tweets


def test_popularity_draws_respect_bounds():
    spec = PlantedCascadeSpec()
    rng = np.random.default_rng(0)
    s = [draw_popularity(spec, "simple", rng) for _ in range(2000)]
    c = [draw_popularity(spec, "complex", rng) for _ in range(2000)]
    assert min(s) >= spec.simple_min_tweets and max(s) <= spec.max_tweets
    assert spec.complex_min_tweets <= min(c) and max(c) <= spec.complex_max_tweets


def test_every_meme_has_enough_adopters(reference_memes):
    assert all(tr.U >= 5 for tr in reference_memes.traces)


def test_interactions_follow_cascade_edges(reference, reference_memes):
    net, part = reference
    bym = reference_memes.log.by_meme()
    tr = reference_memes.traces[0]
    pairs = {(int(u), int(v)) for u, v in zip(tr.users, tr.infector) if v >= 0}
    for ev in bym.get(tr.meme_id, []):
        assert (ev.actor, ev.target) in pairs


def test_intra_multiplier_raises_intra_weight(reference, reference_memes):
    net, part = reference
    a = part.assignment
    intra = inter = 0
    src_intra = src_inter = 0
    for tr in reference_memes.traces:
        inf = tr.infector
        ok = inf >= 0
        same = a[tr.users[ok]] == a[inf[ok]]
        src_intra += same.sum()
        src_inter += (~same).sum()
    for ev in reference_memes.log:
        if a[ev.actor] == a[ev.target]:
            intra += 1
        else:
            inter += 1
    assert intra / src_intra > 3 * inter / max(src_inter, 1)


def test_same_seed_same_world(reference):
    net, part = reference
    spec = PlantedCascadeSpec(n_memes=15, seed=9)
    a, b = gen_cascades(net, part, spec), gen_cascades(net, part, spec)
    for x, y in zip(a.traces, b.traces):
        assert np.array_equal(x.users, y.users) and np.array_equal(x.infector, y.infector)
    assert list(a.log) == list(b.log) and a.contagion == b.contagion
    n2, p2 = gen_network(PlantedPartitionSpec(n=1000, k=10, p_in=0.1, p_out=0.002, seed=3))
    assert np.array_equal(n2.indices, net.indices) and np.array_equal(p2.assignment, part.assignment)
    other = gen_cascades(net, part, replace(spec, seed=10))
    assert any(not np.array_equal(x.users, y.users) for x, y in zip(a.traces, other.traces))


def test_write_world(tmp_path, reference):
    net, part = reference
    nspec = PlantedPartitionSpec(n=1000, k=10, p_in=0.1, p_out=0.002, seed=3)
    cspec = PlantedCascadeSpec(n_memes=12, seed=2)
    memes = gen_cascades(net, part, cspec)
    man = write_world(tmp_path, net, part, memes, nspec, cspec)
    for f in man["files"] + ["manifest.json"]:
        assert (tmp_path / f).exists()
    doc = json.loads((tmp_path / "manifest.json").read_text())
    assert doc["network"]["p_in"] == 0.1 and doc["cascades"]["n_memes"] == 12
    assert set(doc["labels"].values()) <= {"simple", "complex"} and len(doc["labels"]) == 12
    traces = read_traces(tmp_path / "traces.jsonl", net)
    assert sorted(traces) == sorted(tr.meme_id for tr in memes.traces)
    assert all(np.array_equal(traces[tr.meme_id].users, tr.users) for tr in memes.traces)
