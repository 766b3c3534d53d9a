"""Chromosome fitness evaluation.

Two routes to the same fitness definition (coding-link count, or infeasible):

* decomposition: delete the inter-aux links whose bit is 0 in the decomposed
  graph and check that every sink still has max-flow >= R. Exact, works with
  cycles.
* algebraic: build an actual random linear code over GF(q) by propagating
  random coefficient vectors in topological order and testing the rank at
  every sink. One-sided error (a feasible chromosome may be declared
  infeasible, never the reverse); acyclic networks only.
"""

from __future__ import annotations

import random
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .chromosome import INFEASIBLE, Fitness, Layout, count_coding_links, layout_of
from .gf import GF2m, field
from .rng import derive_rng
from .topology import (DecomposedGraph, MulticastInstance, attach_virtual_sinks,
                       decompose, flow_solver, require_acyclic, topological_order)


class DecompositionEvaluator:
    """Exact fitness via max-flows on the decomposed graph.

    The flow solver and the bit->arc mapping are built once; evaluations are
    memoized (the evaluator is deterministic, so the cache is purely a speed
    matter and results never depend on it).
    """

    deterministic = True

    def __init__(self, instance: MulticastInstance, cache_limit: int = 1 << 20):
        self.instance = instance
        self.decomposed = decompose(instance)
        self.layout = layout_of(instance)
        g = self.decomposed.graph
        self.solver = flow_solver(g)
        self.rate = g.rate
        self._bit_arcs = np.array([2 * lid for lid in self.decomposed.bit_links],
                                  dtype=np.int64)
        self._source = g.node_index[g.source]
        self._sinks = [g.node_index[t] for t in g.sinks]
        self._sink_order = list(range(len(self._sinks)))
        self._cache: dict[bytes, Fitness] = {}
        self._cache_limit = cache_limit
        self.evaluations = 0  # cache misses, i.e. actual flow computations

    def evaluate(self, bits: bytes, rng: random.Random | None = None) -> Fitness:
        hit = self._cache.get(bits)
        if hit is not None:
            return hit
        fit = Fitness.finite(count_coding_links(bits, self.layout)) \
            if self.feasible_uncached(bits) else INFEASIBLE
        if len(self._cache) >= self._cache_limit:
            self._cache.clear()
        self._cache[bits] = fit
        return fit

    def feasible(self, bits: bytes) -> bool:
        return self.evaluate(bits).is_feasible

    def feasible_uncached(self, bits: bytes) -> bool:
        self.evaluations += 1
        caps = self.solver.base_cap.copy()
        if self._bit_arcs.size:
            mask = np.frombuffer(bits, dtype=np.uint8) == 0
            caps[self._bit_arcs[mask]] = 0
        order = self._sink_order
        for pos, si in enumerate(order):
            t = self._sinks[si]
            if self.solver.max_flow(self._source, t, caps=caps, cutoff=self.rate) < self.rate:
                # remember the culprit; infeasible chromosomes tend to fail there again
                if pos:
                    order.insert(0, order.pop(pos))
                return False
        return True


def evaluate_decomposition(dg: DecomposedGraph, bits: bytes) -> Fitness:
    """One-shot fitness of a chromosome against a decomposed graph."""
    if len(bits) != len(dg.bit_links):
        raise ValueError(f"chromosome length {len(bits)} != {len(dg.bit_links)} block bits")
    g = dg.graph
    solver = flow_solver(g)
    caps = solver.caps_with_links_disabled(
        lid for lid, bit in zip(dg.bit_links, bits) if not bit)
    s = g.node_index[g.source]
    for t in g.sinks:
        if solver.max_flow(s, g.node_index[t], caps=caps, cutoff=g.rate) < g.rate:
            return INFEASIBLE
    count = 0
    by_block: dict[tuple, int] = {}
    for lid, bit in zip(dg.bit_links, bits):
        node, _i, j = dg.inter_aux_links[lid]
        by_block[(node, j)] = by_block.get((node, j), 0) + bit
    for ones in by_block.values():
        if ones >= 2:
            count += 1
    return Fitness.finite(count)


class AlgebraicEvaluator:
    """Randomized fitness via random linear codes over GF(q)."""

    deterministic = False

    def __init__(self, instance: MulticastInstance, q: int = 1 << 16, trials: int = 2):
        require_acyclic(instance, "the algebraic feasibility test")
        m = q.bit_length() - 1
        if q < 2 or (1 << m) != q:
            raise ValueError(f"field order must be a power of two in [2, 2^16], got {q}")
        if trials < 1:
            raise ValueError("trials must be >= 1")
        self.instance = instance
        self.field: GF2m = field(m)
        self.trials = trials
        self.layout = layout_of(instance)
        aug, _ = attach_virtual_sinks(instance)
        self.aug = aug
        self.rate = aug.rate
        order = topological_order(aug)
        block_index = {(b.node, b.out_link): b for b in self.layout.blocks}
        sinks = set(aug.sinks)
        # propagation plan, one step per node in topological order
        plan = []
        for node in order:
            outs = sorted(aug.out_links[node])
            if node == aug.source:
                plan.append(("source", outs, None))
            elif aug.in_degree(node) >= 2 and node not in sinks:
                steps = [(out, block_index[(node, out)]) for out in outs]
                plan.append(("merge", steps, None))
            elif aug.in_degree(node) == 1:
                plan.append(("copy", outs, aug.in_links[node][0]))
            elif outs:
                plan.append(("zero", outs, None))
        self._plan = plan
        self._sink_inputs = [(t, aug.in_links[t]) for t in aug.sinks]

    def evaluate(self, bits: bytes, rng: random.Random) -> Fitness:
        if len(bits) != self.layout.m:
            raise ValueError(f"chromosome length {len(bits)} != layout length {self.layout.m}")
        f = self.field
        q = f.order
        exp, log = f._exp, f._log
        R = self.rate
        zero = (0,) * R
        passed = [False] * len(self._sink_inputs)
        for _trial in range(self.trials):
            vec: list = [None] * self.aug.n_links
            for kind, arg, extra in self._plan:
                if kind == "source":
                    for out in arg:
                        vec[out] = f.random_vector(rng, R)
                elif kind == "copy":
                    v = vec[extra]
                    for out in arg:
                        vec[out] = v
                elif kind == "zero":
                    for out in arg:
                        vec[out] = zero
                else:  # merge
                    for out, block in arg:
                        acc = [0] * R
                        off = block.offset
                        for i, in_link in enumerate(block.in_links):
                            if not bits[off + i]:
                                continue
                            c = rng.randrange(q)
                            if c == 0:
                                continue
                            cl = log[c]
                            w = vec[in_link]
                            for r in range(R):
                                wr = w[r]
                                if wr:
                                    acc[r] ^= exp[cl + log[wr]]
                        vec[out] = tuple(acc)
            all_ok = True
            for si, (_t, ins) in enumerate(self._sink_inputs):
                if passed[si]:
                    continue
                rows = [vec[lid] for lid in ins]
                if f.rank(rows, stop_at=R) >= R:
                    passed[si] = True
                else:
                    all_ok = False
            if all_ok:
                break
        if all(passed):
            return Fitness.finite(count_coding_links(bits, self.layout))
        return INFEASIBLE


def evaluate_algebraic(g: MulticastInstance, layout: Layout, bits: bytes,
                       q: int = 1 << 16, trials: int = 2,
                       rng: random.Random | None = None) -> Fitness:
    """One-shot algebraic fitness; see AlgebraicEvaluator for repeated use."""
    ev = AlgebraicEvaluator(g, q=q, trials=trials)
    if layout != ev.layout:
        raise ValueError("layout does not belong to this instance")
    return ev.evaluate(bits, rng if rng is not None else random.Random())


def evaluate_population(evaluator, population, *, seed: int = 0, generation: int = 0,
                        jobs: int = 1) -> list[Fitness]:
    """Element-wise fitness, order preserved.

    For randomized evaluators each chromosome's rng is derived from
    (seed, generation, bits), so duplicates get identical verdicts and the
    result is independent of evaluation order or concurrency.
    """
    if evaluator.deterministic:
        def one(bits):
            return evaluator.evaluate(bits)
    else:
        def one(bits):
            return evaluator.evaluate(bits, derive_rng(seed, "eval", generation, bits))
    if jobs <= 1:
        return [one(bits) for bits in population]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(one, population))
