import math

import numpy as np
import pytest

from conftest import graph, path, two_cliques_bridge
from memetrap.cascade import CascadeParams, run_ensemble
from memetrap.community import Partition
from memetrap.graph import Interaction, InteractionLog
from memetrap.metrics import (
    REPORT_FIELDS,
    adoption_dominance,
    adoption_entropy,
    average_exposures,
    binned_curve,
    community_flow,
    concentration,
    early_stage,
    entropy,
    exposures_per_adopter,
    new_meme_filter,
    relative_report,
    usage_dominance,
    usage_entropy,
    write_curve,
    write_reports,
)
from memetrap.synthgen import PlantedPartitionSpec, gen_network
from memetrap.trace import EmptyTraceError, MemeTrace


def trace_in(communities, part_sizes=None, users=None):
    """Trace whose i-th tweet comes from a user of community ``communities[i]``.

    Each tweet gets its own user unless ``users`` is given.
    """
    communities = list(communities)
    if users is None:
        users = list(range(len(communities)))
    labels = np.zeros(max(users) + 1, dtype=np.int64)
    for u, c in zip(users, communities):
        labels[u] = c
    C = max(communities) + 1
    # make every id 0..C-1 present so the partition is dense
    labels = np.concatenate([labels, np.arange(C)])
    return MemeTrace("m", users), Partition(labels)


# ---- early stage


def test_early_stage_lengths_and_prefix():
    tr = MemeTrace("m", np.arange(200) % 7)
    e = early_stage(tr)
    assert len(e) == 50 and len(early_stage(tr.prefix(30))) == 30
    assert e.seq[-1] < tr.seq[50]
    assert np.array_equal(e.users, tr.users[:50])


# ---- dominance


def test_usage_dominance_examples():
    tr, part = trace_in([3] * 50)
    d = usage_dominance(tr, part)
    assert d.value == 1.0 and d.community == 3 and not d.tie
    tr, part = trace_in([0] * 30 + [1] * 20)
    assert usage_dominance(tr, part).value == 0.6
    tr, part = trace_in([1] * 25 + [0] * 25)
    d = usage_dominance(tr, part)
    assert d.value == 0.5 and d.community == 0 and d.tie


def test_adoption_dominance_examples():
    tr, part = trace_in([0] * 7 + [1, 2, 3])
    assert adoption_dominance(tr, part).value == 0.7
    tr, part = trace_in(list(range(6)))
    assert adoption_dominance(tr, part).value == pytest.approx(1 / 6)
    tr = MemeTrace("m", [4] * 50)
    assert adoption_dominance(tr, Partition([0, 1, 2, 3, 4])).value == 1.0


def test_dominance_rejects_empty_and_uncovered():
    with pytest.raises(EmptyTraceError, match="empty or sub-minimal trace: gone"):
        usage_dominance(MemeTrace("gone", []), Partition([0]))
    with pytest.raises(ValueError):
        usage_dominance(MemeTrace("m", [5]), Partition([0, 1]))


# ---- entropy


def test_usage_entropy_examples():
    tr, part = trace_in([2] * 10)
    assert usage_entropy(tr, part) == 0.0
    tr, part = trace_in(np.repeat(np.arange(5), 10))
    assert abs(usage_entropy(tr, part) - math.log(5)) <= 1e-12
    tr, part = trace_in([0, 0, 1, 2])
    assert abs(usage_entropy(tr, part) - 1.5 * math.log(2)) <= 1e-12


def test_adoption_entropy_examples():
    assert adoption_entropy(MemeTrace("m", [0, 0, 0]), Partition([0, 1])) == 0.0
    tr, part = trace_in([0, 1, 2, 3])
    assert abs(adoption_entropy(tr, part) - math.log(4)) <= 1e-12
    tr, part = trace_in([0] * 9 + [1])
    expected = -0.9 * math.log(0.9) - 0.1 * math.log(0.1)
    assert abs(adoption_entropy(tr, part) - expected) <= 1e-12
    assert round(expected, 5) == 0.32508


def test_entropy_of_nothing_is_an_error():
    with pytest.raises(ValueError):
        entropy([0, 0])


# ---- exposures


def test_exposures_path_example():
    net = path(3)  # a=0, b=1, c=2
    tr = MemeTrace("m", [0, 2, 1])
    assert exposures_per_adopter(tr, net)[1] == (2, 2)
    assert abs(average_exposures(tr, net, "tweets") - 2 / 3) <= 1e-12
    assert abs(average_exposures(tr, net, "users") - 2 / 3) <= 1e-12


def test_exposures_single_edge():
    assert average_exposures(MemeTrace("m", [0, 1]), graph(2, [(0, 1)])) == 0.5


def test_exposures_repeat_events():
    star = graph(4, [(0, 1), (0, 2), (0, 3)])
    per = exposures_per_adopter(MemeTrace("m", [0] * 5 + [2]), star)
    assert per[2] == (5, 1) and per[0] == (0, 0)


def test_exposures_mode_validation():
    with pytest.raises(ValueError):
        average_exposures(MemeTrace("m", [0]), path(2), "likes")


def test_concentration_uses_first_50():
    net, part = two_cliques_bridge(5)
    tr = MemeTrace("m", [0] * 50 + [9] * 50)
    c = concentration(tr, net, part)
    assert c["T"] == 50 and c["r"] == 1.0 and c["C_touched"] == 1
    assert concentration(tr, net, part, n_early=None)["r"] == 0.5


# ---- relative report


def test_relative_report_arithmetic():
    net, part = two_cliques_bridge(5)
    tr = MemeTrace("m", [0, 1, 2, 3])
    rep = relative_report(tr, net, part, {"r": 0.2, "Ht": 0.0, "Nt": {"mean": 2.0}})
    assert rep.r_rel == pytest.approx(5.0)
    assert rep.Ht_rel is None and "Ht_rel" in rep.missing
    assert rep.Nt_rel == pytest.approx(rep.Nt / 2.0)
    # users-side ratios fall back to the tweets summary, which lacks g
    assert "g_rel" in rep.missing


def test_relative_ratios_near_one_for_random_sampling():
    net, part = gen_network(PlantedPartitionSpec(n=1000, k=10, p_in=0.1, p_out=0.002, seed=8))
    params = CascadeParams(seed=2)
    base = run_ensemble(net, part, "M1", params).summary()
    other = run_ensemble(net, part, "M1", CascadeParams(seed=99), n_sims=30, n_samples=10)
    for m in ("r", "Ht"):
        ratio = other.values[m].mean() / base[m]["mean"]
        rel_se = math.hypot(other.values[m].std(ddof=1) / math.sqrt(len(other.values[m])) / other.values[m].mean(),
                            base[m]["stderr"] / base[m]["mean"])
        assert abs(ratio - 1.0) <= 3 * rel_se


def test_concentrated_trace_has_entropy_ratio_below_one():
    net, part = gen_network(PlantedPartitionSpec(n=1000, k=10, p_in=0.1, p_out=0.002, seed=8))
    base = run_ensemble(net, part, "M1", CascadeParams(seed=2), n_sims=30).summary()
    members = part.members(4)
    tr = MemeTrace("hot", np.random.default_rng(0).choice(members, 50))
    rep = relative_report(tr, net, part, base)
    assert rep.Ht_rel < 1.0 and rep.r_rel > 1.0


def test_report_csv_header(tmp_path):
    net, part = two_cliques_bridge(3)
    rep = relative_report(MemeTrace("m", [0, 1]), net, part, {"r": 0.5})
    write_reports([rep], tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0].split(",") == REPORT_FIELDS and len(lines) == 2


# ---- community flow


def test_flow_all_intra():
    net, part = two_cliques_bridge(4)
    log = InteractionLog([Interaction(0, 1, "retweet", 0, ()), Interaction(5, 6, "mention", 1, ())])
    rep = community_flow(log, net, part)
    assert all(f == 1.0 for f in rep.f_intra.values())
    assert all(f == 0.0 for f in rep.f_inter.values())


def test_flow_edge_weight_and_non_adjacent():
    net, part = two_cliques_bridge(4)
    log = InteractionLog([Interaction(0, 1, "retweet", t, ()) for t in range(3)] + [Interaction(0, 7, "retweet", 9, ())])
    rep = community_flow(log, net, part)
    assert rep.edge_weights[(0, 1)] == 3
    assert rep.non_adjacent == 1
    # community 0 has 6 intra edges, one carrying 3 events; zero-weight edges count
    assert rep.w_intra[0] == pytest.approx(3 / 6)


def test_flow_missing_inter_is_nan():
    net = graph(6, [(0, 1), (1, 2), (3, 4), (4, 5)])
    rep = community_flow(InteractionLog([Interaction(0, 1, "retweet", 0, ())]), net, Partition([0, 0, 0, 1, 1, 1]))
    assert np.all(np.isnan(rep.w_inter))


def test_flow_kind_filter():
    net, part = two_cliques_bridge(4)
    log = InteractionLog([Interaction(0, 1, "retweet", 0, ()), Interaction(3, 4, "mention", 1, ())])
    assert community_flow(log, net, part, "mention").edge_weights == {(3, 4): 1}


def test_flow_homophilous_log_is_significant():
    net, part = gen_network(PlantedPartitionSpec(n=1000, k=10, p_in=0.1, p_out=0.002, seed=4))
    rng = np.random.default_rng(0)
    events = []
    for u, v in net.edges():
        rate = 5.0 if part.assignment[u] == part.assignment[v] else 1.0
        for t in range(rng.poisson(rate)):
            a, b = (u, v) if rng.random() < 0.5 else (v, u)
            events.append(Interaction(a, b, "retweet", t, ()))
    rep = community_flow(InteractionLog(events), net, part)
    s = rep.summary()
    assert s["w_intra_mean"] > s["w_inter_mean"] and s["f_intra_mean"] > s["f_inter_mean"]
    assert rep.p_weight < 0.001 and rep.p_focus < 0.001
    for u in rep.f_intra:
        assert rep.f_intra[u] + rep.f_inter[u] == pytest.approx(1.0)


# ---- new-meme filter and curves


def test_new_meme_filter_boundaries():
    traces = {m: MemeTrace(m, [0]) for m in ("a", "b", "c")}
    kept = new_meme_filter(traces, {"a": 19, "b": 20})
    assert sorted(kept) == ["a", "c"]
    assert [t.meme_id for t in new_meme_filter(list(traces.values()), {"c": 25})] == ["a", "b"]


def test_binned_curve_log2(tmp_path):
    rows = binned_curve([1, 2, 3, 4, 7, 8], [1.0, 2.0, 4.0, 3.0, 5.0, None])
    assert [(r["bin_lo"], r["n"]) for r in rows] == [(1, 1), (2, 2), (4, 2)]
    assert rows[1]["mean"] == 3.0 and rows[1]["stderr"] == pytest.approx(1.0)
    write_curve(rows, tmp_path / "c.csv")
    assert (tmp_path / "c.csv").read_text().splitlines()[0] == "bin_lo,bin_hi,mean,stderr,n"
