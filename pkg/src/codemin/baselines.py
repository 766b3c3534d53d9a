"""Randomized greedy reference algorithms ("Minimal 1" / "Minimal 2").

Both examine removable elements once, in a uniformly random order, keeping a
removal whenever every sink still reaches max-flow >= R. Minimal 1 first
thins whole links out of the original graph, then thins the inter-aux links
of the survivor's decomposition; Minimal 2 thins the inter-aux links of the
full decomposition directly. Because feasibility is monotone in the link
set, a single pass already reaches a fixpoint.
"""

from __future__ import annotations

import random

from .chromosome import all_one, count_coding_links, layout_of
from .errors import InfeasibleError
from .evaluators import DecompositionEvaluator
from .rng import derive_rng
from .topology import MulticastInstance, flow_solver, link_subgraph, min_sink_max_flow


def _require_feasible(g: MulticastInstance, method: str) -> None:
    if min_sink_max_flow(g) < g.rate:
        raise InfeasibleError(f"{method} requires all sink max-flows >= {g.rate}")


def _thin_blocks(g: MulticastInstance, rng: random.Random) -> int:
    """Greedy inter-aux-link removal on g's decomposition; returns the
    resulting coding-link count."""
    ev = DecompositionEvaluator(g)
    layout = ev.layout
    bits = bytearray(all_one(layout))
    order = list(range(layout.m))
    rng.shuffle(order)
    for i in order:
        bits[i] = 0
        if not ev.feasible(bytes(bits)):
            bits[i] = 1
    final = bytes(bits)
    assert ev.feasible(final)
    return count_coding_links(final, layout)


def minimal1(g: MulticastInstance, rng: random.Random) -> int:
    """Greedy subgraph selection first, then greedy coding-link removal."""
    _require_feasible(g, "minimal1")
    solver = flow_solver(g)
    s = g.node_index[g.source]
    sinks = [g.node_index[t] for t in g.sinks]
    removed: set[int] = set()
    order = list(range(g.n_links))
    rng.shuffle(order)
    for lid in order:
        removed.add(lid)
        caps = solver.caps_with_links_disabled(removed)
        if not all(solver.max_flow(s, t, caps=caps, cutoff=g.rate) >= g.rate
                   for t in sinks):
            removed.discard(lid)
    subgraph = link_subgraph(g, [l.id for l in g.links if l.id not in removed])
    return _thin_blocks(subgraph, rng)


def minimal2(g: MulticastInstance, rng: random.Random) -> int:
    """Greedy coding-link removal on the full decomposition, no subgraph stage."""
    _require_feasible(g, "minimal2")
    return _thin_blocks(g, rng)


def run_baseline_batch(g: MulticastInstance, method: str, trials: int,
                       seed: int) -> list[tuple[int, int]]:
    """(trial seed, coding-link count) for `trials` independent runs."""
    fn = {"minimal1": minimal1, "minimal2": minimal2}.get(method)
    if fn is None:
        raise ValueError(f"unknown baseline method {method!r}")
    results = []
    for trial in range(trials):
        trial_seed = derive_rng(seed, method, trial).randrange(1 << 31)
        results.append((trial_seed, fn(g, random.Random(trial_seed))))
    return results
