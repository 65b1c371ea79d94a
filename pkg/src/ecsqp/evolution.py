"""Generational evolutionary engine with per-operator lineage instrumentation.

A generation runs selection -> pairwise single-point crossover -> mutation ->
evaluation -> adaptive-elitist replacement.  Alongside the new population,
every step emits a :class:`LineageRecord` capturing, for each of the N
offspring slots, which parent it descends from and its fitness after each
operator stage; the record feeds the fitness-change decomposition in
:mod:`ecsqp.price_monitor`.

The engine maximizes internally.  Minimization problems are wrapped by
negating the objective at the boundary.

Two mutation schemes are supported.  ``per-chromosome`` (the default) flips
one uniformly chosen bit in an offspring with probability Pm; this weak
scheme is what the published selection-comparison tables and the collapsing
crossover envelope require.  ``per-bit`` flips every bit independently with
probability Pm (the classic rule implemented by :func:`bit_flip_mutation`);
it explores far more aggressively and keeps the population permanently
diverse, which prevents envelope-based convergence detection.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .encoding import Chromosome, random_bits

__all__ = [
    "EliteState",
    "Engine",
    "FitnessStats",
    "GAConfig",
    "GenerationResult",
    "Individual",
    "LineageRecord",
    "Population",
    "SelectionMethod",
    "adaptive_elitism_replace",
    "binary_tournament_cycle",
    "bit_flip_mutation",
    "evolve_generation",
    "fitness_stats",
    "roulette_select",
    "selection_diagnostics",
    "single_bit_mutation",
    "single_point_crossover",
    "tournament_select",
]

RWS_SHIFT_EPS = 1e-9  # relative offset making shifted fitnesses strictly positive


class SelectionMethod(enum.Enum):
    ROULETTE_WHEEL = "roulette-wheel"
    BINARY_TOURNAMENT = "binary-tournament"


@dataclass(frozen=True)
class GAConfig:
    """Numerical parameters of one evolutionary run."""

    population_size: int
    crossover_rate: float = 1.0
    mutation_rate: float = 0.01
    selection: SelectionMethod = SelectionMethod.BINARY_TOURNAMENT
    overlap_fraction: float = 0.05
    max_generations: int = 100
    rng_seed: int = 0
    elite_shrink: str = "halve"  # or "overlap-fraction"
    mutation_scheme: str = "per-chromosome"  # or "per-bit"

    def __post_init__(self) -> None:
        n = self.population_size
        if n < 2 or n % 2 != 0:
            raise ValueError(f"population size must be even and >= 2, got {n}")
        if not 0.0 <= self.crossover_rate <= 1.0:
            raise ValueError(f"crossover rate must be in [0, 1], got {self.crossover_rate}")
        if not 0.0 <= self.mutation_rate <= 1.0:
            raise ValueError(f"mutation rate must be in [0, 1], got {self.mutation_rate}")
        if not 0.0 < self.overlap_fraction < 1.0:
            raise ValueError(
                f"overlap fraction must be in (0, 1), got {self.overlap_fraction}"
            )
        if self.overlap_fraction * n < 1.0:
            raise ValueError("overlap_fraction * population_size must be >= 1")
        if self.max_generations < 1:
            raise ValueError("max_generations must be positive")
        if self.elite_shrink not in ("halve", "overlap-fraction"):
            raise ValueError(f"unknown elite_shrink rule {self.elite_shrink!r}")
        if self.mutation_scheme not in ("per-chromosome", "per-bit"):
            raise ValueError(f"unknown mutation scheme {self.mutation_scheme!r}")


@dataclass(frozen=True)
class Individual:
    chromosome: Chromosome
    fitness: float
    id: str


class Population:
    """Fixed-size evaluated population, stored as bit and fitness arrays."""

    def __init__(self, bits: np.ndarray, fitness: np.ndarray, generation: int = 0):
        bits = np.asarray(bits, dtype=np.uint8)
        fitness = np.asarray(fitness, dtype=float)
        if bits.ndim != 2 or fitness.shape != (bits.shape[0],):
            raise ValueError("bits must be (N, L) with one fitness per row")
        if bits.shape[0] == 0:
            raise ValueError("population may not be empty")
        if not np.all(np.isfinite(fitness)):
            raise ValueError("all members must carry finite fitness")
        self.bits = bits
        self.fitness = fitness
        self.generation = int(generation)

    def __len__(self) -> int:
        return self.bits.shape[0]

    @property
    def chromosome_length(self) -> int:
        return self.bits.shape[1]

    @property
    def members(self) -> list[Individual]:
        return [
            Individual(Chromosome(self.bits[i]), float(self.fitness[i]),
                       f"g{self.generation}i{i}")
            for i in range(len(self))
        ]

    def best_index(self) -> int:
        return int(np.argmax(self.fitness))

    def best_chromosome(self) -> Chromosome:
        return Chromosome(self.bits[self.best_index()].copy())


@dataclass(frozen=True)
class FitnessStats:
    """Population fitness summary (maximization convention)."""

    mean: float
    variance: float
    best: float
    worst: float

    @classmethod
    def from_values(cls, values: np.ndarray) -> "FitnessStats":
        values = np.asarray(values, dtype=float)
        if values.size == 0:
            raise ValueError("cannot summarize an empty fitness vector")
        return cls(
            mean=float(values.mean()),
            variance=float(values.var()),  # population form, divide by N
            best=float(values.max()),
            worst=float(values.min()),
        )


def fitness_stats(pop: Population) -> FitnessStats:
    return FitnessStats.from_values(pop.fitness)


@dataclass(frozen=True)
class SelectionDiagnostics:
    response: float
    differential: float
    intensity: float


def selection_diagnostics(
    parents: FitnessStats,
    selected: FitnessStats,
    previous: FitnessStats | None = None,
) -> SelectionDiagnostics:
    """Response/differential/intensity of one selection event.

    The differential is the selected-pool mean minus the population mean, the
    intensity is the differential in units of the population's standard
    deviation (NaN when the variance is zero), and the response compares the
    population mean against ``previous`` when given (NaN otherwise).
    """
    differential = selected.mean - parents.mean
    sd = math.sqrt(parents.variance)
    intensity = differential / sd if sd > 0.0 else math.nan
    response = parents.mean - previous.mean if previous is not None else math.nan
    return SelectionDiagnostics(response, differential, intensity)


# ---------------------------------------------------------------------------
# selection
# ---------------------------------------------------------------------------


def roulette_select(
    pop: Population,
    count: int,
    rng: np.random.Generator,
    nonpositive: str = "uniform",
) -> np.ndarray:
    """Fitness-proportionate sampling with replacement.

    Each draw lands on the cumulative-probability bins of f_i / F, so the
    selection probability is literally proportional to fitness.  The wheel is
    only defined for positive fitness; ``nonpositive`` picks the extension
    used when the population violates that:

    - ``"uniform"`` (default): fall back to an unbiased draw for the whole
      population until every member is positive.  Proportional pressure then
      decays naturally as the mean fitness grows, which is the behaviour the
      selection-comparison experiments depend on.
    - ``"shift"``: translate all fitnesses by ``-worst + eps`` so the wheel
      stays usable; this keeps strong pressure at all times.
    """
    f = pop.fitness
    worst = f.min()
    if worst <= 0.0:
        if nonpositive == "uniform":
            return rng.integers(0, len(pop), size=count)
        if nonpositive != "shift":
            raise ValueError(f"unknown nonpositive policy {nonpositive!r}")
        f = f + (-worst + RWS_SHIFT_EPS * max(1.0, abs(worst)))
    total = f.sum()
    if not (np.isfinite(total) and total > 0.0):
        raise ValueError(f"total fitness must be positive, got {total}")
    cum = np.cumsum(f)
    draws = rng.random(count) * total
    return np.minimum(np.searchsorted(cum, draws, side="right"), len(pop) - 1)


def tournament_select(
    pop: Population, k: int, count: int, rng: np.random.Generator
) -> np.ndarray:
    """Strict k-way tournaments, contestants drawn without replacement.

    Each of ``count`` contests draws a fresh k-subset; the highest-fitness
    contestant wins, ties broken uniformly at random.
    """
    n = len(pop)
    if not 1 <= k <= n:
        raise ValueError(f"tournament size {k} must be in [1, {n}]")
    f = pop.fitness
    if k == 2 and n >= 2:
        a = rng.integers(0, n, size=count)
        b = rng.integers(0, n - 1, size=count)
        b = b + (b >= a)
        coin = rng.random(count) < 0.5
        pick_a = (f[a] > f[b]) | ((f[a] == f[b]) & coin)
        return np.where(pick_a, a, b)
    winners = np.empty(count, dtype=np.int64)
    for i in range(count):
        contestants = rng.choice(n, size=k, replace=False)
        cf = f[contestants]
        top = contestants[np.flatnonzero(cf == cf.max())]
        winners[i] = top[0] if top.size == 1 else rng.choice(top)
    return winners


def binary_tournament_cycle(
    pop: Population, rng: np.random.Generator
) -> np.ndarray:
    """One complete cycle of strict binary tournaments without replacement.

    The population is randomly paired off twice, so every chromosome takes
    part in exactly two contests and the best member always wins both of its
    contests.  Yields exactly N winner indices; ties break uniformly.
    """
    n = len(pop)
    if n % 2 != 0:
        raise ValueError("tournament cycles need an even population")
    f = pop.fitness
    winners = np.empty(n, dtype=np.int64)
    out = 0
    for _ in range(2):
        perm = rng.permutation(n)
        a, b = perm[0::2], perm[1::2]
        coin = rng.random(n // 2) < 0.5
        pick_a = (f[a] > f[b]) | ((f[a] == f[b]) & coin)
        winners[out : out + n // 2] = np.where(pick_a, a, b)
        out += n // 2
    return winners


def _select(pop: Population, cfg: GAConfig, count: int, rng) -> np.ndarray:
    if cfg.selection is SelectionMethod.ROULETTE_WHEEL:
        return roulette_select(pop, count, rng)
    if count == len(pop) and count % 2 == 0:
        return binary_tournament_cycle(pop, rng)
    return tournament_select(pop, 2, count, rng)


# ---------------------------------------------------------------------------
# variation operators
# ---------------------------------------------------------------------------


def single_point_crossover(
    p1: Chromosome,
    p2: Chromosome,
    rng: np.random.Generator,
    locus: int | None = None,
) -> tuple[Chromosome, Chromosome]:
    """Swap the suffixes of two equal-length parents after one locus.

    The locus is uniform over {1, ..., L-1} unless given explicitly.
    """
    if len(p1) != len(p2):
        raise ValueError(f"parent length mismatch: {len(p1)} vs {len(p2)}")
    length = len(p1)
    if length < 2:
        raise ValueError("crossover needs chromosomes of length >= 2")
    if locus is None:
        locus = int(rng.integers(1, length))
    if not 1 <= locus <= length - 1:
        raise ValueError(f"locus {locus} outside [1, {length - 1}]")
    c1 = np.concatenate((p1.bits[:locus], p2.bits[locus:]))
    c2 = np.concatenate((p2.bits[:locus], p1.bits[locus:]))
    return Chromosome(c1), Chromosome(c2)


def bit_flip_mutation(
    c: Chromosome, pm: float, rng: np.random.Generator
) -> Chromosome:
    """Flip each bit independently with probability ``pm``."""
    if not 0.0 <= pm <= 1.0:
        raise ValueError(f"mutation rate must be in [0, 1], got {pm}")
    mask = rng.random(len(c)) < pm
    return Chromosome(c.bits ^ mask.astype(np.uint8))


def single_bit_mutation(
    c: Chromosome, pm: float, rng: np.random.Generator
) -> Chromosome:
    """With probability ``pm``, flip one uniformly chosen bit."""
    if not 0.0 <= pm <= 1.0:
        raise ValueError(f"mutation rate must be in [0, 1], got {pm}")
    bits = c.bits.copy()
    if rng.random() < pm:
        bits[rng.integers(0, len(c))] ^= 1
    return Chromosome(bits)


# ---------------------------------------------------------------------------
# replacement
# ---------------------------------------------------------------------------


@dataclass
class EliteState:
    """Mutable carry-over size for the adaptive elitist replacement."""

    n_elite: int
    shrink: str = "halve"
    overlap_fraction: float = 0.05

    @classmethod
    def initial(cls, cfg: GAConfig) -> "EliteState":
        return cls(
            n_elite=math.ceil(cfg.overlap_fraction * cfg.population_size),
            shrink=cfg.elite_shrink,
            overlap_fraction=cfg.overlap_fraction,
        )


def adaptive_elitism_replace(
    parents: Population, offspring: Population, state: EliteState
) -> Population:
    """Merge the best elites of the parents with the best offspring.

    When the offspring pool improves both the mean and the variance of the
    parent fitness, the elite count first shrinks (halving by default, or
    scaling by the overlap fraction), floored at one so the incumbent best
    always survives.
    """
    if len(parents) != len(offspring):
        raise ValueError("parent and offspring populations must have equal size")
    if state.n_elite < 1:
        raise ValueError("elite size must be at least 1")
    ps = fitness_stats(parents)
    os = fitness_stats(offspring)
    if os.mean > ps.mean and os.variance > ps.variance:
        if state.shrink == "halve":
            state.n_elite = max(1, state.n_elite // 2)
        else:
            state.n_elite = max(1, math.floor(state.overlap_fraction * state.n_elite))
    n = len(parents)
    k = min(state.n_elite, n)
    elite_idx = np.argsort(parents.fitness)[::-1][:k]
    off_idx = np.argsort(offspring.fitness)[::-1][: n - k]
    bits = np.concatenate((parents.bits[elite_idx], offspring.bits[off_idx]))
    fit = np.concatenate((parents.fitness[elite_idx], offspring.fitness[off_idx]))
    return Population(bits, fit, generation=parents.generation + 1)


# ---------------------------------------------------------------------------
# one full generation
# ---------------------------------------------------------------------------


class LineageRecord:
    """Per-slot parentage and per-stage fitness of one generation's offspring.

    Slot ``j`` holds the lineage chain of the j-th offspring: the parent that
    won selection slot j, the fitness of that copy (identical to the parent's,
    selection adds no new solutions), and the fitness of the chromosome
    occupying the slot after crossover and after mutation.  ``pair_crossed``
    marks whether the slot's pair actually exchanged material.
    """

    def __init__(
        self,
        parent_fitness: np.ndarray,
        slot_parent: np.ndarray,
        pair_crossed: np.ndarray,
        fitness_after_selection: np.ndarray,
        fitness_after_crossover: np.ndarray,
        fitness_after_mutation: np.ndarray,
    ):
        self.parent_fitness = np.asarray(parent_fitness, dtype=float)
        self.slot_parent = np.asarray(slot_parent, dtype=np.int64)
        self.pair_crossed = np.asarray(pair_crossed, dtype=bool)
        self.fitness_after_selection = np.asarray(fitness_after_selection, dtype=float)
        self.fitness_after_crossover = np.asarray(fitness_after_crossover, dtype=float)
        self.fitness_after_mutation = np.asarray(fitness_after_mutation, dtype=float)
        m = self.slot_parent.shape[0]
        for arr in (
            self.pair_crossed,
            self.fitness_after_selection,
            self.fitness_after_crossover,
            self.fitness_after_mutation,
        ):
            if arr.shape != (m,):
                raise ValueError("lineage arrays must share the slot count")

    @property
    def population_size(self) -> int:
        return self.parent_fitness.shape[0]

    @property
    def slot_count(self) -> int:
        return self.slot_parent.shape[0]

    def offspring_counts(self) -> np.ndarray:
        """Selection slots won by each parent (the z-vector over parents)."""
        return np.bincount(self.slot_parent, minlength=self.population_size).astype(
            np.int64
        )

    def stage_fitness(self, stage: str) -> np.ndarray:
        return {
            "selection": self.fitness_after_selection,
            "crossover": self.fitness_after_crossover,
            "mutation": self.fitness_after_mutation,
        }[stage]

    def stage_deltas(self, stage: str) -> np.ndarray:
        """Per-slot fitness change across one operator stage."""
        if stage == "selection":
            return self.fitness_after_selection - self.parent_fitness[self.slot_parent]
        if stage == "crossover":
            return self.fitness_after_crossover - self.fitness_after_selection
        if stage == "mutation":
            return self.fitness_after_mutation - self.fitness_after_crossover
        raise KeyError(f"unknown stage {stage!r}")

    def crossover_stage_z(self) -> np.ndarray:
        """Offspring attributed to each selected instance by the crossover
        stage: two children when its pair crossed, its own copy otherwise."""
        return np.where(self.pair_crossed, 2, 1).astype(np.int64)

    def children_of(self, parent: int, stage: str) -> np.ndarray:
        """Raw per-child fitness list of one parent after a stage."""
        return self.stage_fitness(stage)[self.slot_parent == parent]


class GenerationResult(NamedTuple):
    population: Population
    lineage: LineageRecord
    stats: FitnessStats


def evolve_generation(
    pop: Population,
    cfg: GAConfig,
    fitness_fn: Callable[[np.ndarray], np.ndarray],
    rng: np.random.Generator,
    elite: EliteState,
) -> GenerationResult:
    """Advance one generation and capture its lineage.

    ``fitness_fn`` maps an ``(m, L)`` bit matrix to ``m`` fitness values
    (maximization).  Intermediate chromosomes left untouched by an operator
    inherit their fitness without re-evaluation, so the per-stage fitness in
    the lineage costs at most two evaluations per slot.
    """
    n, length = pop.bits.shape
    slots = _select(pop, cfg, n, rng)
    sel_bits = pop.bits[slots]
    f_sel = pop.fitness[slots]

    pairs = n // 2
    coins = rng.random(pairs) < cfg.crossover_rate
    loci = rng.integers(1, length, size=pairs) if length > 1 else np.ones(pairs, int)
    child = sel_bits.copy()
    if coins.any():
        swap = (np.arange(length)[None, :] >= loci[:, None]) & coins[:, None]
        a = sel_bits[0::2]
        b = sel_bits[1::2]
        child[0::2] = np.where(swap, b, a)
        child[1::2] = np.where(swap, a, b)
    f_xo = f_sel.copy()
    changed = (child != sel_bits).any(axis=1)
    if changed.any():
        f_xo[changed] = fitness_fn(child[changed])

    if cfg.mutation_scheme == "per-bit":
        flips = (rng.random((n, length)) < cfg.mutation_rate).astype(np.uint8)
        mutated = child ^ flips
        touched = flips.any(axis=1)
    else:
        do = rng.random(n) < cfg.mutation_rate
        which = rng.integers(0, length, size=n)
        mutated = child.copy()
        touched = do
        rows = np.flatnonzero(do)
        mutated[rows, which[rows]] ^= 1
    f_mut = f_xo.copy()
    if touched.any():
        f_mut[touched] = fitness_fn(mutated[touched])

    offspring = Population(mutated, f_mut, generation=pop.generation + 1)
    nxt = adaptive_elitism_replace(pop, offspring, elite)
    lineage = LineageRecord(
        parent_fitness=pop.fitness.copy(),
        slot_parent=slots,
        pair_crossed=np.repeat(coins, 2),
        fitness_after_selection=f_sel,
        fitness_after_crossover=f_xo,
        fitness_after_mutation=f_mut,
    )
    return GenerationResult(nxt, lineage, fitness_stats(nxt))


class Engine:
    """Seeded driver owning the RNG stream, elite state and evaluation count."""

    def __init__(
        self,
        cfg: GAConfig,
        chromosome_length: int,
        fitness_fn: Callable[[np.ndarray], np.ndarray],
        rng: np.random.Generator | None = None,
    ):
        if chromosome_length < 2:
            raise ValueError("chromosome length must be >= 2")
        self.cfg = cfg
        self.chromosome_length = chromosome_length
        self.rng = rng if rng is not None else np.random.default_rng(cfg.rng_seed)
        self.elite = EliteState.initial(cfg)
        self.evaluations = 0
        self._fitness_fn = fitness_fn

    def _evaluate(self, bits: np.ndarray) -> np.ndarray:
        self.evaluations += bits.shape[0]
        values = np.asarray(self._fitness_fn(bits), dtype=float)
        if values.shape != (bits.shape[0],):
            raise ValueError("fitness function must return one value per row")
        return values

    def random_population(self, size: int | None = None) -> Population:
        size = size if size is not None else self.cfg.population_size
        bits = random_bits(self.chromosome_length, size, self.rng)
        return Population(bits, self._evaluate(bits), generation=0)

    def seeded_population(self, seeds: list[np.ndarray]) -> Population:
        """Random population topped up with explicit seed chromosomes."""
        n = self.cfg.population_size
        if len(seeds) > n:
            raise ValueError("more seeds than population slots")
        bits = random_bits(self.chromosome_length, n - len(seeds), self.rng)
        bits = np.vstack([bits] + [np.asarray(s, dtype=np.uint8)[None, :] for s in seeds])
        return Population(bits, self._evaluate(bits), generation=0)

    def step(self, pop: Population) -> GenerationResult:
        return evolve_generation(pop, self.cfg, self._evaluate, self.rng, self.elite)
