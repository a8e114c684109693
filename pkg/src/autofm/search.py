"""Evolutionary selection of the FM algorithm and frequency ratios.

A candidate configuration is a genome with one ratio gene and one connection
gene per candidate oscillator slot. Genomes decode to patch topologies,
fitness is the Fréchet distance between embedding statistics of real audio
and audio synthesized through the trained envelope supernet, and the loop is
a plain elitist GA: keep the top half, refill with uniform crossover and
per-gene mutation, never evaluate two structurally identical genomes in one
generation.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import (
    ConstraintUnsatisfiable,
    DimensionMismatch,
    EmptyPatch,
    IllegalConnection,
    NonPSD,
    ShapeMismatch,
)
from .features import EmbeddingStats, embed
from .fm import (
    OUTPUT,
    FrequencyRatio,
    OscillatorSpec,
    PatchTopology,
    prune_disconnected,
)

RATIO_SENTINEL = 0      # ratio gene value for discarded oscillators in canonical form
INFINITE_FITNESS = math.inf


# ---------------------------------------------------------------------------
# Search space and genome
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SearchSpace:
    """Candidate oscillator slots (per layer) and their ratio sets."""

    layer_sizes: tuple
    ratio_counts: tuple
    granularity: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(n) for n in self.layer_sizes))
        object.__setattr__(self, "ratio_counts", tuple(int(n) for n in self.ratio_counts))
        if len(self.layer_sizes) != len(self.ratio_counts):
            raise ValueError("layer_sizes and ratio_counts must align")

    @property
    def n_candidates(self) -> int:
        return sum(self.layer_sizes)

    @property
    def n_layers(self) -> int:
        return len(self.layer_sizes)

    def layer_of(self, index: int) -> int:
        for layer, size in enumerate(self.layer_sizes):
            if index < size:
                return layer
            index -= size
        raise IndexError(index)

    def layer_slots(self, layer: int):
        start = sum(self.layer_sizes[:layer])
        return range(start, start + self.layer_sizes[layer])

    def connection_domain(self, index: int) -> tuple:
        layer = self.layer_of(index)
        if layer == 0:
            return (None, OUTPUT)
        return (None,) + tuple(self.layer_slots(layer - 1))

    def ratio_domain(self, index: int) -> range:
        return range(1, self.ratio_counts[self.layer_of(index)] + 1)


@dataclass(frozen=True)
class Individual:
    """One genome: ratio steps and connection target per candidate slot."""

    ratios: tuple
    connections: tuple

    def __post_init__(self):
        object.__setattr__(self, "ratios", tuple(int(r) for r in self.ratios))
        object.__setattr__(self, "connections", tuple(self.connections))

    @property
    def active_count(self) -> int:
        return sum(1 for c in self.connections if c is not None)


@dataclass
class FitnessRecord:
    individual: Individual
    score: float
    d_v: Optional[float] = None
    d_a: Optional[float] = None


def decode(individual: Individual, space: SearchSpace) -> PatchTopology:
    """Build the patch a genome describes and prune unreachable oscillators.

    Raises IllegalConnection for a target outside the layer below, and
    EmptyPatch when nothing reaches the output.
    """
    n = space.n_candidates
    if len(individual.ratios) != n or len(individual.connections) != n:
        raise ShapeMismatch(f"genome shape does not match space of {n} candidates")
    oscillators = []
    for i in range(n):
        target = individual.connections[i]
        if target is None:
            continue
        layer = space.layer_of(i)
        if target == OUTPUT:
            if layer != 0:
                raise IllegalConnection(f"candidate {i} (layer {layer}) cannot target the output")
        else:
            if space.layer_of(target) != layer - 1:
                raise IllegalConnection(f"candidate {i} (layer {layer}) cannot target candidate {target}")
        steps = individual.ratios[i]
        if not 1 <= steps <= space.ratio_counts[layer]:
            raise IllegalConnection(f"candidate {i} has ratio step {steps} outside its set")
        oscillators.append(OscillatorSpec(i, layer, FrequencyRatio(steps, space.granularity), target))
    topo = PatchTopology(tuple(oscillators), space.layer_sizes)
    return prune_disconnected(topo)


def encode(topology: PatchTopology, space: SearchSpace) -> Individual:
    """Canonical genome of a (pruned) topology.

    Active oscillators are re-slotted layer by layer in structural-signature
    order, so any two render-equivalent topologies encode identically;
    unused slots carry the ratio sentinel and no connection.
    """
    topo = prune_disconnected(topology)

    def subtree(osc):
        children = sorted(subtree(m) for m in topo.modulators_of(osc.id))
        return (osc.ratio.steps, tuple(children))

    ratios = [RATIO_SENTINEL] * space.n_candidates
    connections = [None] * space.n_candidates

    # carriers in signature order, then each layer follows its parents' order
    ordered = {0: sorted(topo.output_carriers(), key=subtree)}
    for layer in range(1, space.n_layers):
        ordered[layer] = [
            m for parent in ordered.get(layer - 1, [])
            for m in sorted(topo.modulators_of(parent.id), key=subtree)
        ]
    slot_of = {}
    for layer, members in ordered.items():
        slots = list(space.layer_slots(layer))
        if len(members) > len(slots):
            raise ShapeMismatch(f"layer {layer} needs {len(members)} slots, space has {len(slots)}")
        for osc, slot in zip(members, slots):
            slot_of[osc.id] = slot
            ratios[slot] = osc.ratio.steps
            connections[slot] = OUTPUT if osc.target == OUTPUT else slot_of[osc.target]
    return Individual(tuple(ratios), tuple(connections))


def canonicalize(individual: Individual, space: SearchSpace) -> Individual:
    """Normal form: discarded slots zeroed, active slots in structural order.

    Genomes that render identical audio under envelope sharing map to the
    same canonical form; a genome with no path to the output maps to the
    all-discarded form.
    """
    try:
        return encode(decode(individual, space), space)
    except EmptyPatch:
        return Individual((RATIO_SENTINEL,) * space.n_candidates, (None,) * space.n_candidates)


# ---------------------------------------------------------------------------
# Random genomes and variation operators
# ---------------------------------------------------------------------------

def _valid_layer_counts(space: SearchSpace, active_count: int) -> list:
    """All per-layer active-count vectors summing to active_count."""
    options = []
    for counts in itertools.product(*(range(0, n + 1) for n in space.layer_sizes)):
        if sum(counts) != active_count or counts[0] < 1:
            continue
        if any(counts[k] > 0 and counts[k - 1] == 0 for k in range(1, len(counts))):
            continue
        options.append(counts)
    return options


def random_individual(space: SearchSpace, rng, active_count: Optional[int] = None,
                      fixed_connections: Optional[tuple] = None) -> Individual:
    """Sample a legal genome, optionally with an exact active-oscillator count."""
    n = space.n_candidates
    if fixed_connections is not None:
        connections = tuple(fixed_connections)
        ratios = [int(rng.integers(1, space.ratio_counts[space.layer_of(i)] + 1))
                  if connections[i] is not None else RATIO_SENTINEL for i in range(n)]
        return Individual(tuple(ratios), connections)

    ratios = [RATIO_SENTINEL] * n
    connections = [None] * n
    if active_count is None:
        for i in range(n):
            domain = space.connection_domain(i)
            connections[i] = domain[int(rng.integers(len(domain)))]
            ratios[i] = int(rng.integers(1, space.ratio_counts[space.layer_of(i)] + 1))
        return Individual(tuple(ratios), tuple(connections))

    options = _valid_layer_counts(space, active_count)
    if not options:
        raise ConstraintUnsatisfiable(
            f"no layer assignment yields exactly {active_count} active oscillators "
            f"for layer sizes {space.layer_sizes}")
    counts = options[int(rng.integers(len(options)))]
    active_slots = {}
    for layer, count in enumerate(counts):
        slots = list(space.layer_slots(layer))
        picked = sorted(rng.choice(len(slots), size=count, replace=False).tolist())
        active_slots[layer] = [slots[j] for j in picked]
    for layer, slots in active_slots.items():
        for slot in slots:
            ratios[slot] = int(rng.integers(1, space.ratio_counts[layer] + 1))
            if layer == 0:
                connections[slot] = OUTPUT
            else:
                parents = active_slots[layer - 1]
                connections[slot] = parents[int(rng.integers(len(parents)))]
    return Individual(tuple(ratios), tuple(connections))


def repair(individual: Individual, space: SearchSpace, rng) -> Individual:
    """Resample any gene that fell outside its legal domain."""
    ratios = list(individual.ratios)
    connections = list(individual.connections)
    for i in range(space.n_candidates):
        domain = space.connection_domain(i)
        if connections[i] is not None and connections[i] not in domain:
            connections[i] = domain[int(rng.integers(len(domain)))]
        if connections[i] is not None and not 1 <= ratios[i] <= space.ratio_counts[space.layer_of(i)]:
            ratios[i] = int(rng.integers(1, space.ratio_counts[space.layer_of(i)] + 1))
    return Individual(tuple(ratios), tuple(connections))


def _apply_ties(individual: Individual, ratio_ties) -> Individual:
    if not ratio_ties:
        return individual
    ratios = list(individual.ratios)
    for group in ratio_ties:
        lead = ratios[group[0]]
        for i in group[1:]:
            ratios[i] = lead
    return Individual(tuple(ratios), individual.connections)


def crossover(a: Individual, b: Individual, rng, space: SearchSpace,
              ratio_genes_only: bool = False, ratio_ties=None) -> Individual:
    """Per-gene uniform mix of two parents, repaired to legality."""
    if len(a.ratios) != len(b.ratios) or len(a.connections) != len(b.connections):
        raise ShapeMismatch("parents have different genome shapes")
    n = space.n_candidates
    take_b_ratio = rng.random(n) < 0.5
    take_b_conn = rng.random(n) < 0.5
    ratios = [b.ratios[i] if take_b_ratio[i] else a.ratios[i] for i in range(n)]
    if ratio_genes_only:
        connections = a.connections
    else:
        connections = tuple(b.connections[i] if take_b_conn[i] else a.connections[i] for i in range(n))
    child = repair(Individual(tuple(ratios), connections), space, rng)
    return _apply_ties(child, ratio_ties)


def mutate(individual: Individual, p: float, rng, space: SearchSpace,
           ratio_genes_only: bool = False, ratio_ties=None) -> Individual:
    """Independently resample each gene with probability p.

    A mutation event draws uniformly from the gene's legal domain excluding
    its current value, so p is exactly the observable per-gene change rate.
    """
    n = space.n_candidates
    ratio_events = rng.random(n) < p
    conn_events = rng.random(n) < p
    ratios = list(individual.ratios)
    connections = list(individual.connections)
    for i in range(n):
        if ratio_events[i]:
            choices = [v for v in space.ratio_domain(i) if v != ratios[i]]
            if choices:
                ratios[i] = choices[int(rng.integers(len(choices)))]
        if conn_events[i] and not ratio_genes_only:
            choices = [v for v in space.connection_domain(i) if v != connections[i]]
            if choices:
                connections[i] = choices[int(rng.integers(len(choices)))]
    child = repair(Individual(tuple(ratios), tuple(connections)), space, rng)
    return _apply_ties(child, ratio_ties)


# ---------------------------------------------------------------------------
# Fréchet distance
# ---------------------------------------------------------------------------

_PSD_TOL = 1e-9


def _psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    eigvals, eigvecs = np.linalg.eigh(matrix)
    if eigvals.min() < -_PSD_TOL:
        raise NonPSD(f"covariance has eigenvalue {eigvals.min():.3e}")
    eigvals = np.clip(eigvals, 0.0, None)
    return (eigvecs * np.sqrt(eigvals)) @ eigvecs.T


def frechet_distance(r: EmbeddingStats, g: EmbeddingStats) -> float:
    """Fréchet distance between two Gaussian embedding fits.

    ||mu_r - mu_g||^2 + tr(S_r + S_g - 2 sqrt(S_r S_g)), with the matrix
    square root evaluated in the symmetric conjugated form
    sqrt(sqrt(S_r) S_g sqrt(S_r)).
    """
    if r.mean.shape != g.mean.shape:
        raise DimensionMismatch(f"embedding dims differ: {r.mean.shape} vs {g.mean.shape}")
    root_r = _psd_sqrt(r.covariance)
    inner = root_r @ g.covariance @ root_r
    inner = 0.5 * (inner + inner.T)
    eigvals = np.linalg.eigvalsh(inner)
    scale = max(eigvals.max(initial=0.0), 1.0)
    if eigvals.min() < -1e-6 * scale:
        raise NonPSD(f"cross term has eigenvalue {eigvals.min():.3e}")
    trace_sqrt = np.sqrt(np.clip(eigvals, 0.0, None)).sum()
    mean_term = float(np.square(r.mean - g.mean).sum())
    value = mean_term + float(np.trace(r.covariance) + np.trace(g.covariance)) - 2.0 * trace_sqrt
    return max(value, 0.0)


def interpolation_score(d_v: float, d_a: float) -> float:
    """Composite fitness pulling a patch toward the midpoint of two timbres."""
    return d_v + d_a + abs(d_v - d_a)


# ---------------------------------------------------------------------------
# Fitness
# ---------------------------------------------------------------------------

class FitnessEvaluator:
    """Renders a genome over the validation segments and scores it by
    Fréchet distance to the real-audio statistics; results are cached by
    canonical form so render-equivalent genomes are never re-synthesized.

    ``real_stats`` is one EmbeddingStats in single-target mode or a pair in
    interpolation mode.
    """

    def __init__(self, model, val_features, real_stats, mode: str = "single"):
        if mode not in ("single", "interpolation"):
            raise ValueError(f"unknown fitness mode {mode!r}")
        if mode == "interpolation" and (not isinstance(real_stats, (tuple, list)) or len(real_stats) != 2):
            raise ValueError("interpolation mode needs a pair of real statistics")
        self.model = model
        self.val_features = list(val_features)
        self.real_stats = real_stats
        self.mode = mode
        self.cache = {}
        self.evals = 0
        self.hits = 0

    def synthesize(self, topology: PatchTopology) -> list:
        from .model import infer_performance
        from .fm import render

        rendered = []
        for feats in self.val_features:
            perf = infer_performance(self.model, feats, topology)
            rendered.append(render(topology, perf).samples)
        return rendered

    def __call__(self, individual: Individual, space: SearchSpace) -> FitnessRecord:
        canonical = canonicalize(individual, space)
        if canonical in self.cache:
            self.hits += 1
            return self.cache[canonical]
        self.evals += 1
        try:
            topology = decode(canonical, space)
        except EmptyPatch:
            record = FitnessRecord(canonical, INFINITE_FITNESS)
            self.cache[canonical] = record
            return record
        synth_stats = embed(self.synthesize(topology))
        if self.mode == "single":
            record = FitnessRecord(canonical, frechet_distance(self.real_stats, synth_stats))
        else:
            d_v = frechet_distance(self.real_stats[0], synth_stats)
            d_a = frechet_distance(self.real_stats[1], synth_stats)
            record = FitnessRecord(canonical, interpolation_score(d_v, d_a), d_v=d_v, d_a=d_a)
        self.cache[canonical] = record
        return record


def fitness(individual: Individual, model, val_features, real_stats,
            mode: str = "single", space: Optional[SearchSpace] = None) -> FitnessRecord:
    """One-shot fitness evaluation (see FitnessEvaluator for the cached form)."""
    if space is None:
        raise ValueError("a SearchSpace is required to decode the individual")
    return FitnessEvaluator(model, val_features, real_stats, mode)(individual, space)


# ---------------------------------------------------------------------------
# The evolutionary loop
# ---------------------------------------------------------------------------

@dataclass
class SearchConfig:
    population: int = 30
    max_iterations: int = 20
    mutation_probability: float = 0.1
    active_count: Optional[int] = None
    fitness_mode: str = "single"
    seed: int = 0
    fixed_connections: Optional[tuple] = None   # ratio-only search over one topology
    ratio_ties: Optional[tuple] = None          # gene index groups forced equal

    def __post_init__(self):
        if self.population < 2 or self.population % 2:
            raise ValueError("population must be even and >= 2")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass
class SearchContext:
    space: SearchSpace
    evaluate: Callable      # (Individual, SearchSpace) -> FitnessRecord
    log: Optional[Callable] = None      # called with one dict per generation


def _rng_for(seed: int, *key) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed,) + tuple(key)))


def evolve(config: SearchConfig, context: SearchContext) -> list:
    """Run the search and return every distinct genome seen, best first.

    Each generation keeps the top half of the population, then refills with
    one crossover child and one mutant per survivor pair/slot; canonical-form
    duplicates within a generation are resampled so no configuration is
    evaluated twice per generation.
    """
    space = context.space
    pop_size = config.population
    half = pop_size // 2
    ratio_only = config.fixed_connections is not None

    if config.active_count is not None and not ratio_only:
        if not _valid_layer_counts(space, config.active_count):
            raise ConstraintUnsatisfiable(
                f"cannot keep exactly {config.active_count} of {space.n_candidates} oscillators")

    def fresh(rng):
        ind = random_individual(space, rng, active_count=None if ratio_only else config.active_count,
                                fixed_connections=config.fixed_connections)
        return _apply_ties(ind, config.ratio_ties)

    def admit(candidate, seen, batch):
        canonical = canonicalize(candidate, space)
        if canonical in seen:
            return False
        if config.active_count is not None and canonical.active_count != config.active_count:
            return False
        seen.add(canonical)
        batch.append(candidate)
        return True

    # initial population, unique by canonical form
    population = []
    seen = set()
    attempt = 0
    while len(population) < pop_size and attempt < 500 * pop_size:
        admit(fresh(_rng_for(config.seed, 0, attempt)), seen, population)
        attempt += 1
    if not population:
        raise ConstraintUnsatisfiable(
            "no legal individual satisfies the search constraints "
            f"(active_count={config.active_count}, fixed_connections={config.fixed_connections})")
    unique_count = len(population)
    while len(population) < pop_size:      # space smaller than the population
        population.append(population[len(population) % unique_count])

    all_records = {}
    best_history = []

    for gen in range(1, config.max_iterations + 1):
        records = [context.evaluate(ind, space) for ind in population]
        for rec in records:
            all_records.setdefault(rec.individual, rec)
        scores = sorted(r.score for r in records)
        best_all_time = min(r.score for r in all_records.values())
        best_history.append(best_all_time)
        if context.log is not None:
            evals = getattr(context.evaluate, "evals", None)
            hits = getattr(context.evaluate, "hits", None)
            context.log({
                "gen": gen,
                "best": best_all_time,
                "median": float(scores[len(scores) // 2]),
                "evals": evals if evals is not None else len(all_records),
                "cache_hits": hits if hits is not None else 0,
            })
        if gen == config.max_iterations:
            break

        ranked = sorted(zip(records, population), key=lambda pair: pair[0].score)
        survivors = [ind for _, ind in ranked[:half]]
        next_pop = []
        seen = set()
        for slot in range(pop_size):
            use_crossover = slot < half
            for attempt in range(200):
                rng = _rng_for(config.seed, gen, slot, attempt)
                if use_crossover:
                    pa, pb = (survivors[int(rng.integers(half))] for _ in range(2))
                    child = crossover(pa, pb, rng, space,
                                      ratio_genes_only=ratio_only, ratio_ties=config.ratio_ties)
                else:
                    parent = survivors[int(rng.integers(half))]
                    child = mutate(parent, config.mutation_probability, rng, space,
                                   ratio_genes_only=ratio_only, ratio_ties=config.ratio_ties)
                if config.active_count is not None and not ratio_only:
                    if canonicalize(child, space).active_count != config.active_count:
                        continue
                if admit(child, seen, next_pop):
                    break
            else:
                # space exhausted near-duplicates; keep the loop total
                next_pop.append(survivors[slot % half])
        population = next_pop

    assert all(b2 <= b1 + 1e-12 for b1, b2 in zip(best_history, best_history[1:]))
    ranked = sorted(all_records.values(), key=lambda r: r.score)
    return ranked


def enumerate_canonical_individuals(space: SearchSpace, active_count: Optional[int] = None) -> list:
    """Every distinct canonical genome of a space (for brute-force oracles).

    Enumerates carrier-tree multisets under the per-layer slot capacities,
    so the count is the number of render-distinct configurations.
    """
    n_layers = space.n_layers

    def trees(layer):
        for steps in range(1, space.ratio_counts[layer] + 1):
            if layer + 1 < n_layers:
                for children in child_sets(layer + 1):
                    yield (steps, children)
            else:
                yield (steps, ())

    def child_sets(layer):
        # multisets of subtrees rooted at `layer`, any size within capacity
        pool = list(trees(layer))
        max_take = space.layer_sizes[layer]
        for size in range(0, max_take + 1):
            for combo in itertools.combinations_with_replacement(pool, size):
                yield tuple(sorted(combo))

    def layer_usage(tree, layer, usage):
        usage[layer] += 1
        for child in tree[1]:
            layer_usage(child, layer + 1, usage)

    results = []
    carrier_pool = list(trees(0))
    for n_carriers in range(1, space.layer_sizes[0] + 1):
        for forest in itertools.combinations_with_replacement(carrier_pool, n_carriers):
            usage = [0] * n_layers
            for tree in forest:
                layer_usage(tree, 0, usage)
            if any(usage[k] > space.layer_sizes[k] for k in range(n_layers)):
                continue
            if active_count is not None and sum(usage) != active_count:
                continue
            results.append(_forest_to_individual(tuple(sorted(forest)), space))
    unique = {}
    for ind in results:
        unique.setdefault(ind, ind)
    return list(unique.values())


def _forest_to_individual(forest, space: SearchSpace) -> Individual:
    """Build the canonical genome realizing a sorted carrier-tree multiset."""
    oscillators = []
    next_id = itertools.count()

    def place(tree, layer, parent_target):
        osc_id = next(next_id)
        steps, children = tree
        oscillators.append(OscillatorSpec(osc_id, layer, FrequencyRatio(steps, space.granularity), parent_target))
        for child in children:
            place(child, layer + 1, osc_id)

    for tree in forest:
        place(tree, 0, OUTPUT)
    return encode(PatchTopology(tuple(oscillators), space.layer_sizes), space)
