"""Centralized evolutionary search for minimal coding-link configurations.

Generational GA: tournament selection, uniform crossover and mutation in
either bit-wise or block-wise form, best-so-far tracking, and a final greedy
sweep that switches remaining 1-bits to 0 whenever feasibility survives.

Randomness is split into purpose-specific streams derived from
(seed, label, generation): "init", "select" (selection + pair crossover
flags; shared verbatim with the distributed simulator's source) and "ops"
(crossover swaps + mutation).
"""

from __future__ import annotations

import random
import time
from dataclasses import dataclass, field as dfield
from typing import NamedTuple

from .chromosome import (BIT, BLOCK, REPRESENTATIONS, Fitness, Layout, all_one,
                         allowed_block_strings, layout_of, sample_chromosome)
from .errors import InfeasibleError
from .evaluators import AlgebraicEvaluator, DecompositionEvaluator, evaluate_population
from .rng import derive_rng
from .topology import MulticastInstance

DEFAULT_MUTATION = {BLOCK: 0.012, BIT: 0.006}


def default_tournament_size(representation: str, population_size: int) -> int:
    """Reference tournament sizes are 100 (block) / 10 (bit) at population
    150; scale the ratio down for smaller populations, where a full-population
    tournament would collapse diversity immediately."""
    if representation == BLOCK:
        return min(100, max(2, -(-2 * population_size // 3)))
    return min(10, max(2, -(-population_size // 15)))


@dataclass
class GAParams:
    population_size: int = 150
    generations: int = 1000
    representation: str = BLOCK
    tournament_size: int | None = None      # None: 100 block / 10 bit at N=150, scaled below
    crossover_probability: float = 0.8
    mutation_rate: float | None = None      # None: 0.012 block-wise, 0.006 bit-wise
    evaluator: str = "decomposition"        # "decomposition" | "algebraic"
    q: int = 1 << 16                        # field order for the algebraic route
    trials: int = 2
    seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        if self.representation not in REPRESENTATIONS:
            raise ValueError(f"representation must be one of {REPRESENTATIONS}")
        if self.tournament_size is None:
            self.tournament_size = default_tournament_size(self.representation,
                                                           self.population_size)
        if self.mutation_rate is None:
            self.mutation_rate = DEFAULT_MUTATION[self.representation]
        if self.population_size < 2:
            raise ValueError("population_size must be >= 2")
        if not 0.0 <= self.crossover_probability <= 1.0:
            raise ValueError("crossover_probability must be in [0, 1]")
        if not 0.0 <= self.mutation_rate <= 1.0:
            raise ValueError("mutation_rate must be in [0, 1]")
        if not 1 <= self.tournament_size <= self.population_size:
            raise ValueError("tournament_size must be in [1, population_size]")
        if self.evaluator not in ("decomposition", "algebraic"):
            raise ValueError("evaluator must be 'decomposition' or 'algebraic'")


class GenerationStat(NamedTuple):
    generation: int
    best: Fitness          # best so far, monotone non-increasing
    mean: float | None     # mean over this generation's feasible chromosomes


@dataclass
class RunStats:
    history: list[GenerationStat]
    best_chromosome: bytes
    best_fitness: Fitness
    swept_chromosome: bytes
    swept_fitness: Fitness
    evaluations: int
    wall_time_s: float
    layout: Layout = dfield(repr=False, default=None)


# ---------------------------------------------------------------------------
# Operators
# ---------------------------------------------------------------------------

def init_population(layout: Layout, params: GAParams, rng: random.Random) -> list[bytes]:
    """All-one chromosome first (the guaranteed-feasible anchor), then N-1
    random chromosomes sampled under the configured representation."""
    pop = [all_one(layout)]
    for _ in range(params.population_size - 1):
        pop.append(sample_chromosome(layout, params.representation, rng))
    return pop


def select_indices(fitnesses: list[Fitness], tournament_size: int,
                   rng: random.Random) -> list[int]:
    """N tournament winners (with replacement); each winner is the lowest-
    fitness pick of its tournament, ties broken by the earliest index."""
    n = len(fitnesses)
    winners = []
    for _ in range(n):
        best = rng.randrange(n)
        for _ in range(tournament_size - 1):
            c = rng.randrange(n)
            if fitnesses[c] < fitnesses[best] or (fitnesses[c] == fitnesses[best] and c < best):
                best = c
        winners.append(best)
    return winners


def tournament_select(population: list[bytes], fitnesses: list[Fitness],
                      tournament_size: int, rng: random.Random) -> list[bytes]:
    if len(population) != len(fitnesses):
        raise ValueError("population and fitness lists differ in length")
    return [population[i] for i in select_indices(fitnesses, tournament_size, rng)]


def uniform_swap(a: bytes, b: bytes, layout: Layout, representation: str,
                 rng: random.Random) -> tuple[bytes, bytes]:
    """Exchange each bit (bit-wise) or each whole block (block-wise)
    independently with probability 1/2."""
    ca, cb = bytearray(a), bytearray(b)
    if representation == BIT:
        for i in range(len(ca)):
            if rng.getrandbits(1):
                ca[i], cb[i] = cb[i], ca[i]
    else:
        for blk in layout.blocks:
            if rng.getrandbits(1):
                lo, hi = blk.offset, blk.offset + blk.k
                ca[lo:hi], cb[lo:hi] = cb[lo:hi], ca[lo:hi]
    return bytes(ca), bytes(cb)


def crossover(parent_a: bytes, parent_b: bytes, layout: Layout, representation: str,
              crossover_probability: float, rng: random.Random) -> tuple[bytes, bytes]:
    """Uniform crossover; the pair is crossed only with probability p_c."""
    if len(parent_a) != len(parent_b) or len(parent_a) != layout.m:
        raise ValueError("parents must share the layout's length")
    if rng.random() >= crossover_probability:
        return parent_a, parent_b
    return uniform_swap(parent_a, parent_b, layout, representation, rng)


def _block_state(bits: bytes, offset: int, k: int) -> int:
    """Index of the block value among its k+2 allowed strings."""
    ones = bits.count(1, offset, offset + k)
    if ones == 0:
        return 0
    if ones == k:
        return k + 1
    if ones == 1:
        return 1 + bits.index(1, offset, offset + k) - offset
    raise ValueError("block-wise mutation requires valid block-wise input blocks")


def mutate(bits: bytes, layout: Layout, representation: str, rate: float,
           rng: random.Random) -> bytes:
    """Bit-wise: flip each bit independently with probability `rate`.
    Block-wise: with probability `rate`, replace a block by a uniform choice
    among its other k+1 allowed strings."""
    if rate == 0.0:
        return bits
    out = bytearray(bits)
    if representation == BIT:
        for i in range(len(out)):
            if rng.random() < rate:
                out[i] ^= 1
    else:
        for blk in layout.blocks:
            if rng.random() >= rate:
                continue
            current = _block_state(bits, blk.offset, blk.k)
            pick = rng.randrange(blk.k + 1)
            if pick >= current:
                pick += 1  # uniform over the other k+1 strings
            out[blk.offset:blk.offset + blk.k] = allowed_block_strings(blk.k)[pick]
    return bytes(out)


# ---------------------------------------------------------------------------
# Greedy sweep
# ---------------------------------------------------------------------------

def greedy_sweep(bits: bytes, evaluator) -> bytes:
    """Flip remaining 1-bits to 0 left to right whenever feasibility is
    preserved; repeat until a full pass changes nothing."""
    if not getattr(evaluator, "deterministic", False):
        raise ValueError("greedy sweep needs the deterministic evaluator")
    if not evaluator.feasible(bits):
        raise InfeasibleError("greedy sweep requires a feasible chromosome")
    current = bytearray(bits)
    changed = True
    while changed:
        changed = False
        for i in range(len(current)):
            if not current[i]:
                continue
            current[i] = 0
            if evaluator.feasible(bytes(current)):
                changed = True
            else:
                current[i] = 1
    return bytes(current)


# ---------------------------------------------------------------------------
# Main loop
# ---------------------------------------------------------------------------

def _mean_feasible(fitnesses: list[Fitness]) -> float | None:
    finite = [f.coding_links for f in fitnesses if f.is_feasible]
    if not finite:
        return None
    return sum(finite) / len(finite)


def pair_crossover_flags(n: int, crossover_probability: float,
                         rng: random.Random) -> list[bool]:
    """One flag per consecutive winner pair; drawn right after selection from
    the same stream (the distributed source computes the identical vector)."""
    return [rng.random() < crossover_probability for _ in range(n // 2)]


def evolve(instance: MulticastInstance, params: GAParams) -> RunStats:
    """Run the full centralized loop and greedy-sweep the best chromosome."""
    t0 = time.perf_counter()
    layout = layout_of(instance)
    exact = DecompositionEvaluator(instance)
    anchor = all_one(layout)
    anchor_fit = exact.evaluate(anchor)
    if not anchor_fit.is_feasible:
        raise InfeasibleError(
            f"target rate {instance.rate} is unachievable on this topology even "
            "with coding at every merging node")
    if params.evaluator == "decomposition":
        evaluator = exact
    else:
        evaluator = AlgebraicEvaluator(instance, q=params.q, trials=params.trials)

    pop = init_population(layout, params, derive_rng(params.seed, "init"))
    best_bits, best_fit = anchor, anchor_fit
    history = []
    evaluations = 0
    n = params.population_size
    for gen in range(1, params.generations + 1):
        fits = evaluate_population(evaluator, pop, seed=params.seed, generation=gen,
                                   jobs=params.jobs)
        evaluations += n
        gen_best = min(range(n), key=lambda i: (fits[i]._key(), i))
        if fits[gen_best] < best_fit:
            best_bits, best_fit = pop[gen_best], fits[gen_best]
        history.append(GenerationStat(gen, best_fit, _mean_feasible(fits)))
        if gen == params.generations:
            break
        rng_sel = derive_rng(params.seed, "select", gen)
        winners = select_indices(fits, params.tournament_size, rng_sel)
        flags = pair_crossover_flags(n, params.crossover_probability, rng_sel)
        rng_ops = derive_rng(params.seed, "ops", gen)
        children = []
        for p in range(n // 2):
            a, b = pop[winners[2 * p]], pop[winners[2 * p + 1]]
            if flags[p]:
                a, b = uniform_swap(a, b, layout, params.representation, rng_ops)
            children.append(a)
            children.append(b)
        if n % 2:
            children.append(pop[winners[-1]])
        pop = [mutate(c, layout, params.representation, params.mutation_rate, rng_ops)
               for c in children]

    swept = greedy_sweep(best_bits, exact)
    swept_fit = exact.evaluate(swept)
    return RunStats(
        history=history,
        best_chromosome=best_bits,
        best_fitness=best_fit,
        swept_chromosome=swept,
        swept_fitness=swept_fit,
        evaluations=evaluations,
        wall_time_s=time.perf_counter() - t0,
        layout=layout,
    )
