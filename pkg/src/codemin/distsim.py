"""Deterministic message-passing simulation of the distributed optimizer.

Each merging node owns only its own shard of the population (the block bits
of its outgoing links). Per generation: the source floods N random pilot
vectors forward, merging nodes emit random linear combinations selected by
their shards, sinks rank-test what they received and start the backward
phase, fitness vectors accumulate coding-link counts (infinity marks
undecodable chromosomes) up to the source, and a coordination vector
carrying selection indices, pair crossover flags and the best-so-far index
rides the next forward phase so every node applies consistent genetic
operations locally.

Nodes are isolated state machines in a burst-oriented scheduler: a node
fires only when all links of the phase have delivered. Every random draw
comes from a stream derived from (seed, purpose, node, generation), so
results are independent of scheduling; a thread-pool scheduler (workers > 1)
exercises exactly that.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dfield

from .chromosome import (BIT, Block, Fitness, INFEASIBLE, Layout,
                         allowed_block_strings, layout_of)
from .errors import InfeasibleError, ProtocolError
from .evaluators import DecompositionEvaluator
from .ga import GAParams, GenerationStat, RunStats, greedy_sweep, pair_crossover_flags, select_indices
from .gf import field
from .rng import derive_rng
from .topology import (MulticastInstance, attach_virtual_sinks, multicast_subgraph,
                       require_acyclic)


@dataclass(frozen=True)
class CoordinationVector:
    """Source-computed directives: selected chromosome indices (consecutive
    entries form the crossover pairs), one flag per pair, and the index of
    the best chromosome of the generation just evaluated."""
    selected: tuple[int, ...]
    cross_flags: tuple[bool, ...]
    best_index: int
    best_updated: bool


@dataclass(frozen=True)
class PilotPacket:
    """N pilot vectors (R field elements each) plus the piggybacked
    coordination vector when one exists."""
    vectors: tuple[tuple[int, ...], ...]
    coordination: CoordinationVector | None = None


@dataclass(frozen=True)
class FitnessPacket:
    """N components, each a coding-link count or infinity."""
    components: tuple

    def __post_init__(self):
        for c in self.components:
            if c is not math.inf and (not isinstance(c, int) or c < 0):
                raise ProtocolError(f"fitness component out of domain: {c!r}")


@dataclass
class NodeState:
    """One protocol participant. Merging nodes carry the population shard:
    per outgoing link, one block-bit string per chromosome."""
    name: str
    is_source: bool = False
    is_sink: bool = False
    in_links: tuple[int, ...] = ()
    out_links: tuple[int, ...] = ()
    blocks: dict[int, Block] = dfield(default_factory=dict)   # out link -> layout block
    shard: dict[int, list[bytes]] = dfield(default_factory=dict)
    archived: dict[int, bytes] = dfield(default_factory=dict)
    pilot_in: dict[int, PilotPacket] = dfield(default_factory=dict)
    fitness_in: dict[int, FitnessPacket] = dfield(default_factory=dict)
    field_ops: int = 0

    @property
    def is_merging(self) -> bool:
        return bool(self.blocks)


# ---------------------------------------------------------------------------
# Per-node protocol steps
# ---------------------------------------------------------------------------

def init_shard(state: NodeState, n_chromosomes: int, representation: str, rng) -> None:
    """[D2]-style shard init: chromosome 0 all-one, the rest sampled under
    the configured representation."""
    for out in state.out_links:
        blk = state.blocks[out]
        column = [b"\x01" * blk.k]
        for _ in range(n_chromosomes - 1):
            if representation == BIT:
                column.append(bytes(rng.randrange(2) for _ in range(blk.k)))
            else:
                column.append(_sample_block(blk.k, rng))
        state.shard[out] = column


def _sample_block(k: int, rng) -> bytes:
    return allowed_block_strings(k)[rng.randrange(k + 2)]


def forward_round(state: NodeState, inputs: dict[int, PilotPacket], f, rng,
                  n_chromosomes: int, rate: int,
                  source_pilots: dict | None = None,
                  source_cv: CoordinationVector | None = None) -> dict[int, PilotPacket]:
    """Compute one node's forward-phase outputs from a full input burst.

    Sources emit `source_pilots` with `source_cv` piggybacked; copy nodes fan
    their single input out; merging nodes emit, per outgoing link and
    chromosome, the random linear combination of the inputs whose shard bit
    is active (zero vector when no bit is). The coordination vector rides
    every output packet so it floods the whole subgraph.
    """
    if set(inputs) != set(state.in_links):
        raise ProtocolError(f"{state.name}: forward burst incomplete")
    cv = source_cv
    for pkt in inputs.values():
        if pkt.coordination is not None:
            cv = pkt.coordination
            break
    if state.is_source:
        out = {lid: PilotPacket(source_pilots[lid], cv) for lid in state.out_links}
    elif state.is_merging:
        exp, log = f._exp, f._log
        q = f.order
        out = {}
        for lid in state.out_links:
            blk = state.blocks[lid]
            column = state.shard[lid]
            vectors = []
            ops = 0
            for i in range(n_chromosomes):
                bits = column[i]
                acc = [0] * rate
                for j, in_link in enumerate(blk.in_links):
                    if not bits[j]:
                        continue
                    c = rng.randrange(q)
                    ops += 2 * rate  # R multiplies + R additions per active input
                    if c == 0:
                        continue
                    cl = log[c]
                    w = inputs[in_link].vectors[i]
                    for r in range(rate):
                        wr = w[r]
                        if wr:
                            acc[r] ^= exp[cl + log[wr]]
                vectors.append(tuple(acc))
            state.field_ops += ops
            out[lid] = PilotPacket(tuple(vectors), cv)
    elif len(state.in_links) == 1:
        pkt = inputs[state.in_links[0]]
        out = {lid: PilotPacket(pkt.vectors, cv) for lid in state.out_links}
    else:
        zero = ((0,) * rate,) * n_chromosomes
        out = {lid: PilotPacket(zero, cv) for lid in state.out_links}
    return out


def sink_fitness_vector(state: NodeState, inputs: dict[int, PilotPacket], f,
                        rate: int, n_chromosomes: int) -> FitnessPacket:
    """Rank test at a sink: component i is 0 if chromosome i delivers rank >= R."""
    if set(inputs) != set(state.in_links):
        raise ProtocolError(f"{state.name}: sink burst incomplete")
    comps = []
    for i in range(n_chromosomes):
        rows = [inputs[lid].vectors[i] for lid in state.in_links]
        comps.append(0 if f.rank(rows, stop_at=rate) >= rate else math.inf)
    return FitnessPacket(tuple(comps))


def own_coding_counts(state: NodeState, n_chromosomes: int) -> list[int]:
    """Coding links at this node per chromosome: out-links whose block has
    two or more active bits."""
    counts = [0] * n_chromosomes
    for lid in state.out_links:
        column = state.shard.get(lid)
        if not column:
            continue
        for i in range(n_chromosomes):
            if column[i].count(1) >= 2:
                counts[i] += 1
    return counts


def backward_round(state: NodeState, inputs: dict[int, FitnessPacket],
                   n_chromosomes: int) -> dict[int, FitnessPacket]:
    """Fold the children's fitness vectors into this node's own and pass the
    full vector to exactly one parent (lowest link id), zero vectors to the
    rest; infinity is absorbing."""
    if set(inputs) != set(state.out_links):
        raise ProtocolError(f"{state.name}: backward burst incomplete")
    own = own_coding_counts(state, n_chromosomes)
    totals = []
    for i in range(n_chromosomes):
        total = own[i]
        for pkt in inputs.values():
            c = pkt.components[i]
            if c is math.inf or total is math.inf:
                total = math.inf
            else:
                total += c
        totals.append(total)
    vector = FitnessPacket(tuple(totals))
    if not state.in_links:
        return {}
    zeros = FitnessPacket((0,) * n_chromosomes)
    first = min(state.in_links)
    return {lid: (vector if lid == first else zeros) for lid in state.in_links}


def source_aggregate_and_coordinate(state: NodeState, inputs: dict[int, FitnessPacket],
                                    params: GAParams, rng,
                                    best_so_far: Fitness) -> tuple[list[Fitness], CoordinationVector]:
    """Component-wise sum of the received vectors, then tournament selection,
    random pairing (consecutive winners) and per-pair crossover flags."""
    if set(inputs) != set(state.out_links):
        raise ProtocolError("source: backward burst incomplete")
    n = params.population_size
    fitnesses = []
    for i in range(n):
        total = 0
        for pkt in inputs.values():
            c = pkt.components[i]
            total = math.inf if (c is math.inf or total is math.inf) else total + c
        fitnesses.append(INFEASIBLE if total is math.inf else Fitness.finite(total))
    winners = select_indices(fitnesses, params.tournament_size, rng)
    flags = pair_crossover_flags(n, params.crossover_probability, rng)
    best_i = min(range(n), key=lambda i: (fitnesses[i]._key(), i))
    updated = fitnesses[best_i] < best_so_far
    cv = CoordinationVector(tuple(winners), tuple(flags), best_i, updated)
    return fitnesses, cv


def apply_local_genetic_ops(state: NodeState, cv: CoordinationVector,
                            params: GAParams, rng) -> NodeState:
    """Reindex the shard by the selected indices, swap each local block of a
    flagged pair with probability 1/2, then mutate each block."""
    n = params.population_size
    for idx in cv.selected:
        if not 0 <= idx < n:
            raise ProtocolError(f"{state.name}: selected index {idx} out of range")
    if cv.best_updated:
        for lid in state.out_links:
            state.archived[lid] = state.shard[lid][cv.best_index]
    for lid in state.out_links:
        column = state.shard[lid]
        blk = state.blocks[lid]
        chosen = [column[i] for i in cv.selected]
        for p, flagged in enumerate(cv.cross_flags):
            if flagged and rng.getrandbits(1):
                chosen[2 * p], chosen[2 * p + 1] = chosen[2 * p + 1], chosen[2 * p]
        rate = params.mutation_rate
        if params.representation == BIT:
            for i in range(n):
                bits = bytearray(chosen[i])
                flipped = False
                for j in range(blk.k):
                    if rng.random() < rate:
                        bits[j] ^= 1
                        flipped = True
                if flipped:
                    chosen[i] = bytes(bits)
        else:
            strings = allowed_block_strings(blk.k)
            for i in range(n):
                if rng.random() >= rate:
                    continue
                current = strings.index(chosen[i])
                pick = rng.randrange(blk.k + 1)
                if pick >= current:
                    pick += 1
                chosen[i] = strings[pick]
        state.shard[lid] = chosen
    return state


# ---------------------------------------------------------------------------
# Scheduler and simulator
# ---------------------------------------------------------------------------

class Simulator:
    """Event-driven engine over per-link FIFO channels with burst barriers.

    `workers > 1` computes each wave of ready nodes on a thread pool;
    deliveries are applied in node order afterwards, so schedules cannot
    change results, only exercise the independence claim.
    """

    def __init__(self, instance: MulticastInstance, params: GAParams,
                 workers: int = 1, trace=None):
        require_acyclic(instance, "the distributed protocol")
        self.base = multicast_subgraph(instance)
        aug, _ = attach_virtual_sinks(self.base)
        self.aug = aug
        self.layout = layout_of(self.base)
        self.params = params
        m = params.q.bit_length() - 1
        if params.q < 2 or (1 << m) != params.q:
            raise ValueError(f"field order must be a power of two in [2, 2^16], got {params.q}")
        self.field = field(m)
        self.workers = max(1, workers)
        self.trace = trace  # file-like; one JSON line per node firing
        self._round = 0

        sinks = set(aug.sinks)
        blocks_by_node: dict[str, dict[int, Block]] = {}
        for blk in self.layout.blocks:
            blocks_by_node.setdefault(blk.node, {})[blk.out_link] = blk
        self.nodes: dict[str, NodeState] = {}
        for name in aug.nodes:
            self.nodes[name] = NodeState(
                name=name,
                is_source=(name == aug.source),
                is_sink=name in sinks,
                in_links=tuple(sorted(aug.in_links[name])),
                out_links=tuple(sorted(aug.out_links[name])),
                blocks=blocks_by_node.get(name, {}),
            )
        self.merging = [self.nodes[n] for n in aug.nodes if self.nodes[n].is_merging]
        self.link_head = {l.id: l.head for l in aug.links}
        self.link_tail = {l.id: l.tail for l in aug.links}

    # -- setup ------------------------------------------------------------

    def init_population(self) -> None:
        for state in self.merging:
            rng = derive_rng(self.params.seed, "node-init", state.name)
            init_shard(state, self.params.population_size,
                       self.params.representation, rng)

    def load_population(self, population: list[bytes]) -> None:
        """Overwrite shards with fixed chromosomes (testing/evaluation mode)."""
        for state in self.merging:
            for lid, blk in state.blocks.items():
                state.shard[lid] = [bits[blk.offset:blk.offset + blk.k]
                                    for bits in population]

    # -- phases -----------------------------------------------------------

    def _emit_trace(self, node: str, kind: str, n_links: int, size: int) -> None:
        if self.trace is not None:
            self.trace.write(json.dumps(
                {"t": self._round, "node": node, "kind": kind,
                 "links": n_links, "size": size}, sort_keys=True) + "\n")

    def _run_wave(self, fire, batch):
        if self.workers > 1 and len(batch) > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                return list(pool.map(fire, batch))
        return [fire(state) for state in batch]

    def forward_phase(self, generation: int, cv: CoordinationVector | None,
                      apply_ops: bool = True) -> None:
        """One [D3/D8] pass: genetic ops on cv receipt, then pilot flooding."""
        n = self.params.population_size
        rate = self.aug.rate
        rng_src = derive_rng(self.params.seed, "src", generation)
        source = self.nodes[self.aug.source]
        source_pilots = {
            lid: tuple(self.field.random_vector(rng_src, rate) for _ in range(n))
            for lid in source.out_links}
        for state in self.nodes.values():
            state.pilot_in.clear()

        waiting = {name: len(st.in_links) for name, st in self.nodes.items()}
        ready = sorted(name for name, k in waiting.items() if k == 0)

        def fire(state: NodeState):
            got_cv = next((p.coordination for p in state.pilot_in.values()
                           if p.coordination is not None), None)
            if got_cv is not None and state.is_merging and apply_ops:
                apply_local_genetic_ops(
                    state, got_cv, self.params,
                    derive_rng(self.params.seed, "node-ops", state.name, generation))
            rng = derive_rng(self.params.seed, "node-fwd", state.name, generation)
            return forward_round(state, dict(state.pilot_in), self.field, rng,
                                 n, rate,
                                 source_pilots if state.is_source else None,
                                 cv if state.is_source else None)

        while ready:
            self._round += 1
            batch = [self.nodes[name] for name in ready]
            outputs = self._run_wave(fire, batch)
            next_ready = []
            for state, out in zip(batch, outputs):
                self._emit_trace(state.name, "pilot", len(out),
                                 n * rate * len(out))
                for lid, pkt in out.items():
                    head = self.link_head[lid]
                    self.nodes[head].pilot_in[lid] = pkt
                    waiting[head] -= 1
                    if waiting[head] == 0:
                        next_ready.append(head)
            ready = sorted(next_ready)

        incomplete = [n for n, k in waiting.items() if k > 0]
        if incomplete:
            raise ProtocolError(f"forward phase starved nodes: {incomplete}")

    def backward_phase(self, generation: int) -> dict[int, FitnessPacket]:
        """[D4/D10]: sinks rank-test and feed fitness vectors back; returns the
        packets that arrived at the source."""
        n = self.params.population_size
        rate = self.aug.rate
        for state in self.nodes.values():
            state.fitness_in.clear()
        waiting = {name: len(st.out_links) for name, st in self.nodes.items()}
        ready = sorted(name for name, k in waiting.items() if k == 0)

        def fire(state: NodeState):
            if state.is_sink:
                vector = sink_fitness_vector(state, dict(state.pilot_in),
                                             self.field, rate, n)
                return {lid: vector for lid in state.in_links}
            return backward_round(state, dict(state.fitness_in), n)

        source_inputs: dict[int, FitnessPacket] = {}
        while ready:
            self._round += 1
            batch = [self.nodes[name] for name in ready]
            outputs = self._run_wave(fire, batch)
            next_ready = []
            for state, out in zip(batch, outputs):
                self._emit_trace(state.name, "fitness", len(out), n * len(out))
                for lid, pkt in out.items():
                    tail = self.link_tail[lid]
                    node = self.nodes[tail]
                    node.fitness_in[lid] = pkt
                    if node.is_source:
                        source_inputs[lid] = pkt
                    waiting[tail] -= 1
                    if waiting[tail] == 0:
                        next_ready.append(tail)
            ready = sorted(next_ready)
        return source_inputs

    # -- introspection ----------------------------------------------------

    def coding_count_totals(self) -> list[int]:
        """Exact per-chromosome coding-link totals, summed over node shards
        (what the source total equals whenever it is finite)."""
        n = self.params.population_size
        totals = [0] * n
        for state in self.merging:
            for i, c in enumerate(own_coding_counts(state, n)):
                totals[i] += c
        return totals

    def merging_field_ops(self) -> dict[str, int]:
        return {state.name: state.field_ops for state in self.merging}

    def reconstruct_best(self) -> bytes:
        bits = bytearray(self.layout.m)
        for blk in self.layout.blocks:
            archived = self.nodes[blk.node].archived.get(blk.out_link)
            if archived is None:
                raise ProtocolError(f"{blk.node} never archived a best-so-far shard")
            bits[blk.offset:blk.offset + blk.k] = archived
        return bytes(bits)


def run_distributed(instance: MulticastInstance, params: GAParams,
                    workers: int = 1, trace=None) -> RunStats:
    """Full [D1]-[D11] run; the best chromosome is reconstructed from the
    node archives and greedy-swept centrally."""
    t0 = time.perf_counter()
    sim = Simulator(instance, params, workers=workers, trace=trace)
    sim.init_population()
    source = sim.nodes[sim.aug.source]
    best_fit = INFEASIBLE
    history = []
    cv = None
    n = params.population_size
    for gen in range(1, params.generations + 1):
        sim.forward_phase(gen, cv)
        inputs = sim.backward_phase(gen)
        rng_sel = derive_rng(params.seed, "select", gen)
        fitnesses, cv = source_aggregate_and_coordinate(source, inputs, params,
                                                        rng_sel, best_fit)
        if gen == 1 and not any(f.is_feasible for f in fitnesses):
            raise InfeasibleError(
                "every chromosome (including all-one) was undecodable in "
                "generation 1: the target rate looks unachievable")
        if cv.best_updated:
            best_fit = fitnesses[cv.best_index]
        finite = [f.coding_links for f in fitnesses if f.is_feasible]
        history.append(GenerationStat(gen, best_fit,
                                      sum(finite) / len(finite) if finite else None))
    # deliver the final coordination vector for archiving only
    for state in sim.merging:
        if cv.best_updated:
            for lid in state.out_links:
                state.archived[lid] = state.shard[lid][cv.best_index]
    best_bits = sim.reconstruct_best()

    exact = DecompositionEvaluator(sim.base)
    swept = greedy_sweep(best_bits, exact)
    return RunStats(
        history=history,
        best_chromosome=best_bits,
        best_fitness=best_fit,
        swept_chromosome=swept,
        swept_fitness=exact.evaluate(swept),
        evaluations=n * params.generations,
        wall_time_s=time.perf_counter() - t0,
        layout=sim.layout,
    )


@dataclass
class DistributedEvaluation:
    """One forward+backward pass over a fixed population."""
    fitnesses: list[Fitness]
    count_totals: list[int]
    field_ops: dict[str, int]
    layout: Layout


def distributed_evaluate(instance: MulticastInstance, population: list[bytes],
                         q: int = 1 << 16, seed: int = 0,
                         workers: int = 1) -> DistributedEvaluation:
    """Evaluate fixed chromosomes through the protocol (no genetic ops)."""
    params = GAParams(population_size=len(population), generations=1, q=q,
                      seed=seed, tournament_size=1)
    sim = Simulator(instance, params, workers=workers)
    if sim.layout.m and any(len(bits) != sim.layout.m for bits in population):
        raise ValueError("population chromosomes do not match the pruned layout")
    sim.load_population(population)
    sim.forward_phase(1, None)
    inputs = sim.backward_phase(1)
    source = sim.nodes[sim.aug.source]
    fitnesses, _cv = source_aggregate_and_coordinate(
        source, inputs, params, derive_rng(seed, "select", 1), INFEASIBLE)
    return DistributedEvaluation(
        fitnesses=fitnesses,
        count_totals=sim.coding_count_totals(),
        field_ops=sim.merging_field_ops(),
        layout=sim.layout,
    )
