"""Directed-multigraph model for single-source multicast.

Covers the instance type and its JSON format, merging-node analysis, the
auxiliary-node graph decomposition, max-flow queries, a layered random
instance generator, and greedy acyclic pruning. Parallel links are
first-class: every link has unit capacity and its own dense integer id.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

from ._maxflow import NO_CUTOFF, FlowSolver
from .errors import CyclicGraphError, InfeasibleError, TopologyError
from .rng import derive_rng

VSINK_SUFFIX = "~vsink"


class Link(NamedTuple):
    id: int
    tail: str
    head: str


class MulticastInstance:
    """Immutable multicast problem: multigraph + source + sinks + target rate.

    Node names are opaque strings; internally they map to dense indices in
    declaration order. Link ids must be dense 0..|E|-1.
    """

    __slots__ = ("nodes", "links", "source", "sinks", "rate",
                 "node_index", "in_links", "out_links")

    def __init__(self, nodes: Iterable[str], links: Iterable[tuple], source: str,
                 sinks: Iterable[str], rate: int):
        self.nodes = tuple(nodes)
        if not self.nodes:
            raise TopologyError("node list is empty")
        self.node_index = {}
        for i, name in enumerate(self.nodes):
            if not isinstance(name, str):
                raise TopologyError(f"nodes[{i}]: node id must be a string, got {name!r}")
            if name in self.node_index:
                raise TopologyError(f"nodes[{i}]: duplicate node id {name!r}")
            self.node_index[name] = i
        raw = [Link(int(l[0]), l[1], l[2]) for l in links]
        self.links = tuple(sorted(raw, key=lambda l: l.id))
        for pos, l in enumerate(self.links):
            if l.id != pos:
                raise TopologyError(
                    f"link ids must be dense 0..{len(raw) - 1}; missing or duplicate id {pos}")
            if l.tail not in self.node_index:
                raise TopologyError(f"links[id={l.id}]: undeclared tail node {l.tail!r}")
            if l.head not in self.node_index:
                raise TopologyError(f"links[id={l.id}]: undeclared head node {l.head!r}")
            if l.tail == l.head:
                raise TopologyError(f"links[id={l.id}]: self-loop at {l.tail!r}")
        if source not in self.node_index:
            raise TopologyError(f"source: undeclared node {source!r}")
        self.source = source
        self.sinks = tuple(sinks)
        if not self.sinks:
            raise TopologyError("sinks: empty sink set")
        seen = set()
        for pos, t in enumerate(self.sinks):
            if t not in self.node_index:
                raise TopologyError(f"sinks[{pos}]: undeclared node {t!r}")
            if t in seen:
                raise TopologyError(f"sinks[{pos}]: duplicate sink {t!r}")
            seen.add(t)
        if source in seen:
            raise TopologyError(f"source {source!r} cannot also be a sink")
        if not isinstance(rate, int) or rate < 1:
            raise TopologyError(f"rate: must be an integer >= 1, got {rate!r}")
        self.rate = rate
        in_links = {n: [] for n in self.nodes}
        out_links = {n: [] for n in self.nodes}
        for l in self.links:
            out_links[l.tail].append(l.id)
            in_links[l.head].append(l.id)
        self.in_links = {n: tuple(v) for n, v in in_links.items()}
        self.out_links = {n: tuple(v) for n, v in out_links.items()}

    def in_degree(self, node: str) -> int:
        return len(self.in_links[node])

    def out_degree(self, node: str) -> int:
        return len(self.out_links[node])

    @property
    def n_links(self) -> int:
        return len(self.links)

    def to_json_dict(self) -> dict:
        return {
            "nodes": list(self.nodes),
            "links": [{"id": l.id, "from": l.tail, "to": l.head} for l in self.links],
            "source": self.source,
            "sinks": list(self.sinks),
            "rate": self.rate,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2) + "\n"

    def __eq__(self, other):
        return (isinstance(other, MulticastInstance)
                and self.nodes == other.nodes and self.links == other.links
                and self.source == other.source and self.sinks == other.sinks
                and self.rate == other.rate)

    def __hash__(self):
        return hash((self.nodes, self.links, self.source, self.sinks, self.rate))

    def __repr__(self):
        return (f"MulticastInstance(|V|={len(self.nodes)}, |E|={len(self.links)}, "
                f"source={self.source!r}, d={len(self.sinks)}, R={self.rate})")


def parse_topology(text: str) -> MulticastInstance:
    """Parse and validate the topology JSON document format."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise TopologyError(f"malformed JSON: {e}") from e
    return topology_from_dict(doc)


def topology_from_dict(doc) -> MulticastInstance:
    if not isinstance(doc, dict):
        raise TopologyError("topology document must be a JSON object")
    for key in ("nodes", "links", "source", "sinks", "rate"):
        if key not in doc:
            raise TopologyError(f"missing required key {key!r}")
    links = []
    for pos, entry in enumerate(doc["links"]):
        if not isinstance(entry, dict) or not {"id", "from", "to"} <= set(entry):
            raise TopologyError(f"links[{pos}]: expected object with id/from/to")
        if not isinstance(entry["id"], int):
            raise TopologyError(f"links[{pos}]: id must be an integer")
        links.append((entry["id"], entry["from"], entry["to"]))
    rate = doc["rate"]
    if isinstance(rate, bool) or not isinstance(rate, int):
        raise TopologyError(f"rate: must be an integer >= 1, got {rate!r}")
    return MulticastInstance(doc["nodes"], links, doc["source"], doc["sinks"], rate)


def load_topology(path) -> MulticastInstance:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_topology(fh.read())


# ---------------------------------------------------------------------------
# Structure queries
# ---------------------------------------------------------------------------

def merging_nodes(g: MulticastInstance) -> set[str]:
    """Nodes with two or more incoming links (parallel links count separately)."""
    return {n for n in g.nodes if g.in_degree(n) >= 2}


def topological_order(g: MulticastInstance) -> list[str] | None:
    """Node order with every link pointing forward, or None if g has a cycle."""
    indeg = {n: g.in_degree(n) for n in g.nodes}
    ready = [n for n in g.nodes if indeg[n] == 0]
    order = []
    while ready:
        n = ready.pop()
        order.append(n)
        for lid in g.out_links[n]:
            h = g.links[lid].head
            indeg[h] -= 1
            if indeg[h] == 0:
                ready.append(h)
    if len(order) != len(g.nodes):
        return None
    return order


def find_cycle(g: MulticastInstance) -> list[str] | None:
    """One directed cycle as a node sequence (first == last), or None."""
    WHITE, GRAY, BLACK = 0, 1, 2
    color = {n: WHITE for n in g.nodes}
    parent = {}
    for root in g.nodes:
        if color[root] != WHITE:
            continue
        stack = [(root, iter(g.out_links[root]))]
        color[root] = GRAY
        while stack:
            node, it = stack[-1]
            advanced = False
            for lid in it:
                h = g.links[lid].head
                if color[h] == WHITE:
                    color[h] = GRAY
                    parent[h] = node
                    stack.append((h, iter(g.out_links[h])))
                    advanced = True
                    break
                if color[h] == GRAY:
                    cycle = [node]
                    cur = node
                    while cur != h:
                        cur = parent[cur]
                        cycle.append(cur)
                    cycle.reverse()
                    cycle.append(cycle[0])
                    return cycle
            if not advanced:
                color[node] = BLACK
                stack.pop()
    return None


def require_acyclic(g: MulticastInstance, what: str) -> None:
    cycle = find_cycle(g)
    if cycle is not None:
        raise CyclicGraphError(
            f"{what} requires an acyclic network; found cycle "
            + " -> ".join(cycle), cycle)


# ---------------------------------------------------------------------------
# Max flow
# ---------------------------------------------------------------------------

def flow_solver(g: MulticastInstance) -> FlowSolver:
    idx = g.node_index
    return FlowSolver(len(g.nodes), [(idx[l.tail], idx[l.head]) for l in g.links])


def max_flow(g: MulticastInstance, s: str, t: str, cutoff: int = NO_CUTOFF) -> int:
    """Value of a maximum integral s->t flow, one unit of capacity per link."""
    if s not in g.node_index or t not in g.node_index:
        raise TopologyError(f"max_flow endpoints must be declared nodes: {s!r}, {t!r}")
    return flow_solver(g).max_flow(g.node_index[s], g.node_index[t], cutoff=cutoff)


def min_sink_max_flow(g: MulticastInstance) -> int:
    solver = flow_solver(g)
    s = g.node_index[g.source]
    return min(solver.max_flow(s, g.node_index[t]) for t in g.sinks)


# ---------------------------------------------------------------------------
# Virtual sinks and coding blocks
# ---------------------------------------------------------------------------

def attach_virtual_sinks(g: MulticastInstance) -> tuple[MulticastInstance, dict[str, str]]:
    """Give every sink with outgoing links a virtual sink behind R fresh links.

    The virtual sink takes over the sink role, so the original sink can be
    treated as an ordinary (decomposable) relay. Returns the augmented
    instance and the {original sink: effective sink} map.
    """
    effective = {t: t for t in g.sinks}
    extra_nodes = []
    extra_links = []
    next_id = len(g.links)
    for t in g.sinks:
        if g.out_degree(t) == 0:
            continue
        v = t + VSINK_SUFFIX
        if v in g.node_index:
            raise TopologyError(f"node name {v!r} collides with the virtual-sink namespace")
        extra_nodes.append(v)
        for _ in range(g.rate):
            extra_links.append((next_id, t, v))
            next_id += 1
        effective[t] = v
    if not extra_nodes:
        return g, effective
    aug = MulticastInstance(
        g.nodes + tuple(extra_nodes),
        [(l.id, l.tail, l.head) for l in g.links] + extra_links,
        g.source,
        tuple(effective[t] for t in g.sinks),
        g.rate,
    )
    return aug, effective


def coding_blocks(aug: MulticastInstance) -> list[tuple[str, int, tuple[int, ...]]]:
    """Canonical block enumeration on a virtual-sink-augmented graph.

    One block per (merging node, outgoing link), skipping sinks and the
    source; blocks sorted by (node index, link id), bit order inside a block
    by incoming link id. Both the chromosome layout and the decomposition
    derive from this single enumeration, which is what keeps their bit <->
    inter-aux-link bijection aligned.
    """
    sinks = set(aug.sinks)
    blocks = []
    for node in aug.nodes:
        if node in sinks or node == aug.source:
            continue
        ins = aug.in_links[node]
        if len(ins) < 2:
            continue
        in_sorted = tuple(sorted(ins))
        for out_id in sorted(aug.out_links[node]):
            blocks.append((node, out_id, in_sorted))
    return blocks


# ---------------------------------------------------------------------------
# Graph decomposition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DecomposedGraph:
    """Auxiliary-node expansion of the merging nodes of an instance.

    graph: the decomposed multigraph (an ordinary MulticastInstance whose
      sinks are the effective, possibly virtual, sinks);
    inter_aux_links: decomposed link id -> (original node, in index, out index);
    block_map: outgoing auxiliary node -> block index;
    bit_links: bit offset -> decomposed link id (the bit <-> link bijection).
    """
    graph: MulticastInstance
    inter_aux_links: dict[int, tuple[str, int, int]]
    block_map: dict[str, int]
    bit_links: tuple[int, ...]


def decompose(g: MulticastInstance) -> DecomposedGraph:
    """Expand each non-sink merging node into incoming/outgoing auxiliary nodes.

    Sinks with outgoing links first receive a virtual sink (R links) and are
    then decomposed like any other merging node. Works on cyclic inputs.
    """
    aug, _ = attach_virtual_sinks(g)
    blocks = coding_blocks(aug)
    decomposed = {}  # node -> (sorted in links, sorted out links)
    for node, _out, ins in blocks:
        if node not in decomposed:
            decomposed[node] = (list(ins), sorted(aug.out_links[node]))

    in_aux = {}   # (node, in position) -> aux node name
    out_aux = {}  # (node, out position) -> aux node name
    nodes = [n for n in aug.nodes if n not in decomposed]
    for node in aug.nodes:
        if node not in decomposed:
            continue
        ins, outs = decomposed[node]
        for i in range(len(ins)):
            name = f"{node}@in{i}"
            in_aux[(node, i)] = name
            nodes.append(name)
        for j in range(len(outs)):
            name = f"{node}@out{j}"
            out_aux[(node, j)] = name
            nodes.append(name)
    if len(set(nodes)) != len(nodes):
        seen = set()
        dup = next(n for n in nodes if n in seen or seen.add(n))
        raise TopologyError(f"auxiliary node name {dup!r} collides with an existing node")

    in_position = {}   # (node, link id) -> in position
    out_position = {}
    for node, (ins, outs) in decomposed.items():
        for i, lid in enumerate(ins):
            in_position[(node, lid)] = i
        for j, lid in enumerate(outs):
            out_position[(node, lid)] = j

    links = []
    for l in aug.links:
        tail, head = l.tail, l.head
        if tail in decomposed:
            tail = out_aux[(tail, out_position[(tail, l.id)])]
        if head in decomposed:
            head = in_aux[(head, in_position[(head, l.id)])]
        links.append((l.id, tail, head))

    inter_aux = {}
    block_map = {}
    bit_links = []
    next_id = len(aug.links)
    for b, (node, out_id, ins) in enumerate(blocks):
        j = out_position[(node, out_id)]
        block_map[out_aux[(node, j)]] = b
        for i in range(len(ins)):
            links.append((next_id, in_aux[(node, i)], out_aux[(node, j)]))
            inter_aux[next_id] = (node, i, j)
            bit_links.append(next_id)
            next_id += 1

    graph = MulticastInstance(nodes, links, aug.source, aug.sinks, aug.rate)
    return DecomposedGraph(graph, inter_aux, block_map, tuple(bit_links))


# ---------------------------------------------------------------------------
# Random layered instances
# ---------------------------------------------------------------------------

MAX_GENERATION_ATTEMPTS = 60


def generate_random_instance(n_nodes: int, n_links: int, d: int, R: int,
                             seed: int) -> MulticastInstance:
    """Random layered acyclic multigraph with every source->sink max-flow >= R.

    For each sink, R link-disjoint source->sink paths are threaded through
    the layers, reusing links already laid down for other sinks about half
    the time; the sharing creates butterfly-like contention, so achieving R
    usually requires coding on some links, while each sink's private path
    system keeps its max-flow >= R by construction. Leftover budget becomes
    uniformly random forward links. Deterministic in `seed`;
    rejection-samples (a build can paint itself into a corner) and gives up
    with a diagnostic.
    """
    if d < 1 or R < 1:
        raise InfeasibleError(f"need d >= 1 and R >= 1, got d={d}, R={R}")
    interior = n_nodes - 1 - d
    if interior < 0:
        raise InfeasibleError(f"n_nodes={n_nodes} cannot host a source and {d} sinks")
    min_links = R * (d + (1 if interior > 0 else 0))
    if n_links < min_links:
        raise InfeasibleError(
            f"n_links={n_links} < {min_links} forces some sink min-cut below R={R}")

    for attempt in range(MAX_GENERATION_ATTEMPTS):
        rng = derive_rng(seed, "gen", attempt)
        g = _build_layered(n_nodes, n_links, d, R, interior, rng)
        if g is not None and min_sink_max_flow(g) >= R:
            return g
    raise InfeasibleError(
        f"gave up after {MAX_GENERATION_ATTEMPTS} attempts generating a feasible "
        f"({n_nodes},{n_links},{d},{R}) instance")


def _build_layered(n_nodes, n_links, d, R, interior, rng, reuse_bias=0.5):
    sinks = [f"t{j}" for j in range(d)]
    if interior > 0:
        n_layers = max(1, min(interior, interior // 12 + 1, n_links // R - d))
        layers = [[] for _ in range(n_layers)]
        for i in range(interior):
            layers[i % n_layers].append(f"v{i}")
    else:
        layers = []
    nodes = ["s"] + [n for layer in layers for n in layer] + sinks

    links = []
    out_by_tail: dict[str, list[tuple[int, str]]] = {}

    def add(tail, head):
        lid = len(links)
        links.append((lid, tail, head))
        out_by_tail.setdefault(tail, []).append((lid, head))
        return lid

    budget = n_links - d * R  # every sink tap is a fresh link
    if budget < R * max(1, len(layers)) and layers:
        return None
    layer_sets = [set(layer) for layer in layers]
    for t in sinks:
        used: set[int] = set()
        for _ in range(R):
            u = "s"
            for depth, layer in enumerate(layers):
                candidates = [(lid, head) for lid, head in out_by_tail.get(u, ())
                              if head in layer_sets[depth] and lid not in used]
                if candidates and (budget == 0 or rng.random() < reuse_bias):
                    lid, v = candidates[rng.randrange(len(candidates))]
                elif budget > 0:
                    v = rng.choice(layer)
                    lid = add(u, v)
                    budget -= 1
                elif candidates:
                    lid, v = candidates[rng.randrange(len(candidates))]
                else:
                    return None  # stuck: no budget and nothing left to reuse
                used.add(lid)
                u = v
            used.add(add(u, t))

    # leftover budget: random forward links (sinks keep out-degree 0)
    strata = [["s"]] + layers + [sinks]
    while len(links) < n_links:
        a = rng.randrange(len(strata) - 1)
        b = rng.randrange(a + 1, len(strata))
        add(rng.choice(strata[a]), rng.choice(strata[b]))

    return MulticastInstance(nodes, links, "s", sinks, R)


# ---------------------------------------------------------------------------
# Subgraph utilities
# ---------------------------------------------------------------------------

def link_subgraph(g: MulticastInstance, keep_links, keep_nodes=None) -> MulticastInstance:
    """Sub-multigraph with the given links, re-indexed to dense ids."""
    keep = sorted(keep_links)
    nodes = g.nodes if keep_nodes is None else tuple(n for n in g.nodes if n in keep_nodes)
    return MulticastInstance(
        nodes,
        [(new_id, g.links[old].tail, g.links[old].head) for new_id, old in enumerate(keep)],
        g.source, g.sinks, g.rate)


def make_acyclic_subgraph(g: MulticastInstance) -> MulticastInstance:
    """Greedy acyclic pruning that keeps every sink max-flow >= R.

    Scans links in id order and removes the first one that lies on a cycle
    and whose removal preserves feasibility, until no cycle remains. Fails
    with a diagnostic when it gets stuck; a feasible acyclic subgraph may
    simply not exist.
    """
    if min_sink_max_flow(g) < g.rate:
        raise InfeasibleError("make_acyclic_subgraph requires all sink max-flows >= R")
    current = g
    while True:
        if find_cycle(current) is None:
            return current
        removed = False
        for l in current.links:
            if not _reaches(current, l.head, l.tail):
                continue  # not on any cycle
            candidate = link_subgraph(current, [k.id for k in current.links if k.id != l.id])
            if min_sink_max_flow(candidate) >= g.rate:
                current = candidate
                removed = True
                break
        if not removed:
            raise InfeasibleError(
                "no acyclic feasible subgraph found: every cycle link is needed "
                f"to sustain rate {g.rate}")


def _reaches(g: MulticastInstance, a: str, b: str) -> bool:
    if a == b:
        return True
    seen = {a}
    stack = [a]
    while stack:
        n = stack.pop()
        for lid in g.out_links[n]:
            h = g.links[lid].head
            if h == b:
                return True
            if h not in seen:
                seen.add(h)
                stack.append(h)
    return False


def multicast_subgraph(g: MulticastInstance) -> MulticastInstance:
    """Restrict to nodes/links on some source->sink path (plus all endpoints)."""
    fwd = {g.source}
    stack = [g.source]
    while stack:
        n = stack.pop()
        for lid in g.out_links[n]:
            h = g.links[lid].head
            if h not in fwd:
                fwd.add(h)
                stack.append(h)
    back = set(g.sinks)
    stack = list(g.sinks)
    while stack:
        n = stack.pop()
        for lid in g.in_links[n]:
            t = g.links[lid].tail
            if t not in back:
                back.add(t)
                stack.append(t)
    keep_nodes = (fwd & back) | {g.source} | set(g.sinks)
    keep_links = [l.id for l in g.links
                  if l.tail in fwd and l.tail in keep_nodes
                  and l.head in back and l.head in keep_nodes]
    if len(keep_links) == g.n_links and len(keep_nodes) == len(g.nodes):
        return g
    return link_subgraph(g, keep_links, keep_nodes)
