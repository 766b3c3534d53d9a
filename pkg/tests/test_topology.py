import itertools
import json
import random

import pytest

from codemin.errors import InfeasibleError, TopologyError
from codemin.topology import (MulticastInstance, attach_virtual_sinks, decompose,
                              find_cycle, generate_random_instance, link_subgraph,
                              make_acyclic_subgraph, max_flow, merging_nodes,
                              min_sink_max_flow, multicast_subgraph, parse_topology,
                              topological_order)

from .conftest import butterfly_doc, make_instance


# ---------------------------------------------------------------------------
# Parsing and validation
# ---------------------------------------------------------------------------

def test_parse_butterfly(butterfly):
    assert len(butterfly.links) == 9
    assert len(butterfly.nodes) == 7
    assert butterfly.rate == 2
    assert butterfly.sinks == ("t1", "t2")
    # max-flow oracle: the canonical structure carries 2 units to each sink
    assert max_flow(butterfly, "s", "t1") == 2
    assert max_flow(butterfly, "s", "t2") == 2


def test_parse_rejects_zero_rate():
    doc = butterfly_doc()
    doc["rate"] = 0
    with pytest.raises(TopologyError, match="rate"):
        parse_topology(json.dumps(doc))


def test_parse_rejects_dangling_link():
    doc = butterfly_doc()
    doc["links"][3]["to"] = "ghost"
    with pytest.raises(TopologyError, match="ghost"):
        parse_topology(json.dumps(doc))


@pytest.mark.parametrize("mutation,message", [
    (lambda d: d["links"].__setitem__(0, {"id": 5, "from": "s", "to": "u"}), "dense"),
    (lambda d: d["links"][2].update({"from": "t1"}), "self-loop"),
    (lambda d: d.update(sinks=[]), "empty sink"),
    (lambda d: d.update(sinks=["t1", "t1"]), "duplicate sink"),
    (lambda d: d.update(source="t1", sinks=["t1", "t2"]), "cannot also be a sink"),
    (lambda d: d.update(nodes=d["nodes"] + ["s"]), "duplicate node"),
    (lambda d: d.pop("rate"), "missing required key"),
])
def test_parse_rejects_invalid_documents(mutation, message):
    doc = butterfly_doc()
    mutation(doc)
    with pytest.raises(TopologyError, match=message):
        parse_topology(json.dumps(doc))


def test_parse_rejects_malformed_json():
    with pytest.raises(TopologyError, match="malformed"):
        parse_topology("{not json")


# ---------------------------------------------------------------------------
# Merging nodes / topological order
# ---------------------------------------------------------------------------

def test_merging_nodes_butterfly(butterfly):
    assert merging_nodes(butterfly) == {"z", "t1", "t2"}


def test_merging_nodes_path_graph():
    g = make_instance([("a", "b"), ("b", "c")], "a", ["c"], 1)
    assert merging_nodes(g) == set()


def test_merging_counts_parallel_links():
    g = make_instance([("a", "b"), ("a", "b"), ("b", "c")], "a", ["c"], 1)
    assert merging_nodes(g) == {"b"}


def test_topological_order_butterfly(butterfly):
    order = topological_order(butterfly)
    assert order is not None and order[0] == "s"
    pos = {n: i for i, n in enumerate(order)}
    for l in butterfly.links:
        assert pos[l.tail] < pos[l.head]


def test_topological_order_cycle():
    g = make_instance([("s", "a"), ("a", "b"), ("b", "c"), ("c", "a"), ("b", "t")],
                      "s", ["t"], 1)
    assert topological_order(g) is None
    cycle = find_cycle(g)
    assert cycle is not None and cycle[0] == cycle[-1]
    assert set(cycle) <= {"a", "b", "c"}


def test_topological_order_no_links():
    g = MulticastInstance(["s", "t"], [], "s", ["t"], 1)
    assert sorted(topological_order(g)) == ["s", "t"]


# ---------------------------------------------------------------------------
# Decomposition
# ---------------------------------------------------------------------------

def test_decompose_three_in_two_out():
    g = make_instance(
        [("s", "a"), ("s", "b"), ("s", "c"), ("a", "v"), ("b", "v"), ("c", "v"),
         ("v", "t1"), ("v", "t2")],
        "s", ["t1", "t2"], 1)
    dg = decompose(g)
    aux = [n for n in dg.graph.nodes if "@" in n]
    assert sorted(aux) == ["v@in0", "v@in1", "v@in2", "v@out0", "v@out1"]
    assert len(dg.inter_aux_links) == 6
    for name, block in dg.block_map.items():
        assert name.startswith("v@out")
    # each outgoing auxiliary node has exactly one outgoing link
    for name in ("v@out0", "v@out1"):
        assert dg.graph.out_degree(name) == 1


def test_decompose_butterfly(butterfly):
    dg = decompose(butterfly)
    # only z decomposed: sinks have out-degree 0, other nodes are not merging
    assert len(dg.inter_aux_links) == 2
    assert set(dg.block_map) == {"z@out0"}
    assert dg.bit_links == (9, 10)


def test_decompose_no_merging_is_identity():
    g = make_instance([("s", "a"), ("a", "t")], "s", ["t"], 1)
    dg = decompose(g)
    assert dg.graph == g
    assert dg.inter_aux_links == {}


def test_decompose_m_formula_random():
    for seed in range(8):
        g = generate_random_instance(14, 24, 2, 2, seed=seed)
        aug, _ = attach_virtual_sinks(g)
        sinks = set(aug.sinks)
        m = sum(aug.in_degree(v) * aug.out_degree(v) for v in aug.nodes
                if v not in sinks and v != aug.source and aug.in_degree(v) >= 2)
        assert len(decompose(g).inter_aux_links) == m


def test_decompose_preserves_max_flows():
    # with every inter-aux link present the decomposition leaves all
    # source->sink max-flows unchanged
    for seed in range(6):
        g = generate_random_instance(12, 20, 2, 2, seed=seed)
        dg = decompose(g)
        aug, eff = attach_virtual_sinks(g)
        for t in g.sinks:
            orig = max_flow(g, g.source, t)
            assert max_flow(dg.graph, g.source, eff[t]) == min(orig, g.rate) or \
                max_flow(dg.graph, g.source, eff[t]) == orig


def test_virtual_sink_added_only_for_sinks_with_outgoing():
    g = make_instance([("s", "a"), ("a", "t1"), ("t1", "t2"), ("a", "t2")],
                      "s", ["t1", "t2"], 1)
    aug, eff = attach_virtual_sinks(g)
    assert eff["t1"] == "t1~vsink" and eff["t2"] == "t2"
    assert aug.in_degree("t1~vsink") == g.rate
    assert aug.sinks == ("t1~vsink", "t2")


# ---------------------------------------------------------------------------
# Max flow
# ---------------------------------------------------------------------------

def _min_cut_oracle(g, s, t):
    """Exhaustive minimum s-t link cut; equals max-flow by duality."""
    others = [n for n in g.nodes if n not in (s, t)]
    best = None
    for pattern in itertools.product((False, True), repeat=len(others)):
        side = {s}
        for n, flag in zip(others, pattern):
            if flag:
                side.add(n)
        cut = sum(1 for l in g.links if l.tail in side and l.head not in side)
        best = cut if best is None else min(best, cut)
    return best


def _path_packing_oracle(g, s, t):
    """Max number of link-disjoint s->t paths by exhaustive search."""
    def best_from(available):
        # find any s->t path in `available`, try all first-link choices
        best = 0
        stack = [(s, [])]
        seen_paths = []
        def dfs(u, used):
            if u == t:
                seen_paths.append(list(used))
                return
            for l in g.links:
                if l.id in available and l.tail == u and l.id not in used:
                    used.append(l.id)
                    dfs(l.head, used)
                    used.pop()
        dfs(s, [])
        if not seen_paths:
            return 0
        for path in seen_paths:
            rest = available - set(path)
            best = max(best, 1 + best_from(rest))
        return best
    return best_from({l.id for l in g.links})


def test_max_flow_butterfly(butterfly):
    assert max_flow(butterfly, "s", "t1") == 2


def test_max_flow_unreachable():
    g = make_instance([("s", "a"), ("t", "a")], "s", ["t"], 1)
    assert max_flow(g, "s", "t") == 0


def test_max_flow_matches_min_cut_oracle():
    rng = random.Random(42)
    for _ in range(60):
        n = rng.randrange(3, 8)
        nodes = [f"n{i}" for i in range(n)]
        links = []
        for _ in range(rng.randrange(2, 14)):
            a, b = rng.sample(range(n), 2)
            links.append((nodes[a], nodes[b]))
        g = make_instance(links, nodes[0], [nodes[-1]], 1, nodes=nodes)
        assert max_flow(g, nodes[0], nodes[-1]) == _min_cut_oracle(g, nodes[0], nodes[-1])


def test_max_flow_matches_path_packing_oracle():
    rng = random.Random(7)
    for _ in range(12):
        n = rng.randrange(3, 6)
        nodes = [f"n{i}" for i in range(n)]
        links = []
        for _ in range(rng.randrange(2, 8)):
            a, b = rng.sample(range(n), 2)
            links.append((nodes[a], nodes[b]))
        g = make_instance(links, nodes[0], [nodes[-1]], 1, nodes=nodes)
        assert max_flow(g, nodes[0], nodes[-1]) == _path_packing_oracle(
            g, nodes[0], nodes[-1])


def test_max_flow_cutoff():
    g = make_instance([("s", "t"), ("s", "t"), ("s", "t")], "s", ["t"], 1)
    assert max_flow(g, "s", "t") == 3
    assert max_flow(g, "s", "t", cutoff=2) == 2


# ---------------------------------------------------------------------------
# Random instance generation
# ---------------------------------------------------------------------------

def test_generator_meets_rate_at_paper_scale():
    g = generate_random_instance(50, 87, 10, 5, seed=3)
    assert len(g.nodes) == 50 and g.n_links == 87 and len(g.sinks) == 10
    assert min_sink_max_flow(g) >= 5
    assert topological_order(g) is not None


def test_generator_tiny():
    g = generate_random_instance(3, 2, 1, 1, seed=1)
    assert max_flow(g, g.source, g.sinks[0]) >= 1


def test_generator_impossible_parameters():
    with pytest.raises(InfeasibleError):
        generate_random_instance(8, 1, 3, 2, seed=0)


def test_generator_reproducible():
    a = generate_random_instance(20, 40, 3, 2, seed=9)
    b = generate_random_instance(20, 40, 3, 2, seed=9)
    assert a.to_json() == b.to_json()
    c = generate_random_instance(20, 40, 3, 2, seed=10)
    assert c.to_json() != a.to_json()


# ---------------------------------------------------------------------------
# Acyclic pruning / subgraphs
# ---------------------------------------------------------------------------

def test_make_acyclic_keeps_acyclic_input(butterfly):
    assert make_acyclic_subgraph(butterfly) is butterfly


def test_make_acyclic_removes_back_link(butterfly):
    doc = butterfly.to_json_dict()
    doc["links"].append({"id": 9, "from": "w", "to": "z"})
    g = parse_topology(json.dumps(doc))
    assert find_cycle(g) is not None
    pruned = make_acyclic_subgraph(g)
    assert find_cycle(pruned) is None
    assert min_sink_max_flow(pruned) == 2
    assert pruned.n_links == 9


def test_make_acyclic_diagnostic_when_both_directions_needed():
    # t0 needs a->b, t1 needs b->a: no feasible acyclic subgraph exists
    g = make_instance(
        [("s", "a"), ("s", "b"), ("a", "b"), ("b", "a"),
         ("b", "t0"), ("b", "t0"), ("a", "t1"), ("a", "t1")],
        "s", ["t0", "t1"], 2)
    assert min_sink_max_flow(g) == 2
    with pytest.raises(InfeasibleError, match="acyclic"):
        make_acyclic_subgraph(g)


def test_make_acyclic_requires_feasible_input():
    g = make_instance([("s", "a"), ("a", "t")], "s", ["t"], 2)
    with pytest.raises(InfeasibleError):
        make_acyclic_subgraph(g)


def test_multicast_subgraph_prunes_dead_ends():
    g = make_instance([("s", "a"), ("a", "t"), ("a", "dead"), ("lost", "a")],
                      "s", ["t"], 1)
    sub = multicast_subgraph(g)
    assert set(sub.nodes) == {"s", "a", "t"}
    assert sub.n_links == 2
    assert max_flow(sub, "s", "t") == 1


def test_link_subgraph_reindexes_dense():
    g = make_instance([("s", "a"), ("s", "b"), ("a", "t"), ("b", "t")],
                      "s", ["t"], 1)
    sub = link_subgraph(g, [0, 2])
    assert [l.id for l in sub.links] == [0, 1]
    assert max_flow(sub, "s", "t") == 1
