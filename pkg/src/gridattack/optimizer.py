"""Population search over grid genomes.

One generation: evaluate every member that lacks a fitness record, track the
best genome seen anywhere, then eliminate-and-replenish, tail-swap crossover,
and single-gene mutation.  The best individual lives outside the population,
so losing it to an operator never loses it from the result.  A random-search
baseline shares the same evaluation path and result contract.
"""

from __future__ import annotations

import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .grid import Genome, GridConfig, random_genome
from .imaging import BBox, Image, Mask, compose, mask_from_bbox
from .oracle import (
    BudgetExhaustedError,
    DEFAULT_QUERY_BUDGET,
    DEFAULT_TAU_IOU,
    OracleTransportError,
    QueryLedger,
    detect,
    target_confidence,
)
from .robustness import (
    EotConfig,
    FoldConfig,
    apply_transform,
    sample_transforms,
    simulate_folds,
    transform_bbox,
)


@dataclass(frozen=True, slots=True)
class GaConfig:
    """Genetic-algorithm hyperparameters.

    population_size must be even so crossover can pair every member.
    early_stop_conf is the confidence below which an attack counts as a
    success; setting it to 0 disables early stopping (full budget).
    """

    population_size: int = 50
    generations: int = 10
    crossover_rate: float = 0.6
    mutation_rate: float = 0.1
    elimination_threshold: float = 0.2
    early_stop_conf: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.population_size < 2 or self.population_size % 2:
            raise ValueError(
                f"population_size must be even and >= 2, got {self.population_size}"
            )
        if self.generations < 1:
            raise ValueError(f"generations must be >= 1, got {self.generations}")
        for name in ("crossover_rate", "mutation_rate"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0,1], got {value}")
        if not 0.0 <= self.elimination_threshold <= 1.0:
            raise ValueError("elimination_threshold must lie in [0,1]")
        if not 0.0 <= self.early_stop_conf <= 1.0:
            raise ValueError("early_stop_conf must lie in [0,1]")


@dataclass(frozen=True, slots=True)
class FitnessRecord:
    """Outcome of scoring one genome; fit is exactly 1 - y_obj."""

    genome: Genome
    y_obj: float
    per_transform_scores: tuple[float, ...]

    @property
    def fit(self) -> float:
        return 1.0 - self.y_obj


@dataclass(slots=True)
class Population:
    """Fixed-size cohort; records[i] is None until member i is evaluated."""

    members: list[Genome]
    records: list[FitnessRecord | None]
    generation: int = 0

    def __post_init__(self) -> None:
        if len(self.members) != len(self.records):
            raise ValueError("members and records must be parallel lists")

    @property
    def size(self) -> int:
        return len(self.members)


@dataclass(slots=True)
class AttackResult:
    """What a search run produced and what it cost."""

    best_genome: Genome | None
    best_fit: float
    success: bool
    queries_used: int
    generations_run: int
    history: tuple[float, ...] = field(default_factory=tuple)
    partial: bool = False
    error: str | None = None

    @property
    def final_confidence(self) -> float:
        return 1.0 - self.best_fit


# ---------------------------------------------------------------------------
# Operators
# ---------------------------------------------------------------------------

def init_population(
    cfg: GaConfig, genome_len: int, rng: random.Random, anchor_bits: int = 0
) -> Population:
    members = [
        random_genome(genome_len, rng, anchor_bits)
        for _ in range(cfg.population_size)
    ]
    return Population(members, [None] * cfg.population_size)


def select(pop: Population, cfg: GaConfig, rng: random.Random) -> Population:
    """Eliminate everyone whose fitness fell below the cutoff and refill the
    slots with fresh random genomes; survivors keep their records."""
    members = list(pop.members)
    records = list(pop.records)
    for i, rec in enumerate(records):
        if rec is not None and rec.fit < cfg.elimination_threshold:
            old = members[i]
            members[i] = random_genome(len(old.bits), rng, old.anchor_bits)
            records[i] = None
    return Population(members, records, pop.generation + 1)


def crossover(pop: Population, crossover_rate: float, rng: random.Random) -> Population:
    """Randomly pair the population; each pair picks a cut position and, with
    probability crossover_rate, swaps the suffixes from that position on.
    Members whose bits actually changed lose their fitness records."""
    members = list(pop.members)
    records = list(pop.records)
    order = list(range(len(members)))
    rng.shuffle(order)
    genome_len = len(members[0].bits)
    for a, b in zip(order[::2], order[1::2]):
        cut = rng.randrange(genome_len)
        if rng.random() >= crossover_rate:
            continue
        bits_a = members[a].bits
        bits_b = members[b].bits
        new_a = bits_a[:cut] + bits_b[cut:]
        new_b = bits_b[:cut] + bits_a[cut:]
        if new_a != bits_a:
            members[a] = Genome(new_a, members[a].anchor_bits)
            records[a] = None
        if new_b != bits_b:
            members[b] = Genome(new_b, members[b].anchor_bits)
            records[b] = None
    return Population(members, records, pop.generation)


def mutate(pop: Population, mutation_rate: float, rng: random.Random) -> Population:
    """Per member, pick one gene position and flip it with probability
    mutation_rate, so each member moves at most Hamming distance 1."""
    members = list(pop.members)
    records = list(pop.records)
    for i, genome in enumerate(members):
        pos = rng.randrange(len(genome.bits))
        if rng.random() >= mutation_rate:
            continue
        bits = list(genome.bits)
        bits[pos] ^= 1
        members[i] = Genome(tuple(bits), genome.anchor_bits)
        records[i] = None
    return Population(members, records, pop.generation)


# ---------------------------------------------------------------------------
# Fitness
# ---------------------------------------------------------------------------

def evaluate_fitness(
    genome: Genome,
    image: Image,
    target: BBox,
    oracle,
    eot: EotConfig | None,
    ledger: QueryLedger,
    *,
    grid: GridConfig,
    mask: Mask | None = None,
    tau_iou: float = DEFAULT_TAU_IOU,
    folds: FoldConfig | None = None,
    rng: random.Random | None = None,
) -> FitnessRecord:
    """Decode, compose, query, and score one genome.

    With transforms enabled this costs eot.samples queries and averages the
    per-transform target confidences; the target box is tracked through each
    geometric transform before matching.  Requires the full query cost to be
    affordable up front so a member is never half-evaluated.
    """
    needed = eot.samples if eot is not None else 1
    if not ledger.can_spend(needed):
        raise BudgetExhaustedError(
            f"evaluation needs {needed} queries but the budget cannot cover them"
        )
    spec = grid.spec_for(genome)
    sample = compose(image, spec, target, mask, genome=genome)
    adv = sample.image
    if (eot is not None or folds is not None) and rng is None:
        rng = random.Random(eot.seed if eot is not None else 0)

    if eot is not None:
        scores = []
        for t in sample_transforms(eot, rng):
            img_t = apply_transform(adv, t)
            if folds is not None:
                img_t = simulate_folds(img_t, folds.magnitude, folds.grid_n, rng)
            box_t = transform_bbox(target, t, adv.width, adv.height)
            dets = detect(oracle, img_t, ledger)
            scores.append(target_confidence(dets, box_t, tau_iou))
        y_obj = sum(scores) / len(scores)
        return FitnessRecord(genome, y_obj, tuple(scores))

    img_q = adv
    if folds is not None:
        img_q = simulate_folds(adv, folds.magnitude, folds.grid_n, rng)
    dets = detect(oracle, img_q, ledger)
    y_obj = target_confidence(dets, target, tau_iou)
    return FitnessRecord(genome, y_obj, (y_obj,))


def _derived_rng(seed: int, stage: str, index: int) -> random.Random:
    # str seeding hashes through sha512, stable across processes and workers
    return random.Random(f"{seed}:{stage}:{index}")


# ---------------------------------------------------------------------------
# Search drivers
# ---------------------------------------------------------------------------

def run_attack(
    image: Image,
    target: BBox,
    oracle,
    cfg: GaConfig,
    eot: EotConfig | None = None,
    *,
    grid: GridConfig | None = None,
    budget: int | None = DEFAULT_QUERY_BUDGET,
    ledger: QueryLedger | None = None,
    mask: Mask | None = None,
    tau_iou: float = DEFAULT_TAU_IOU,
    folds: FoldConfig | None = None,
    jobs: int = 1,
) -> AttackResult:
    """Full genetic-algorithm attack on one scene.

    Terminates as soon as the best confidence drops below early_stop_conf,
    when the query budget runs out, or after the configured generations.
    A transport failure aborts with the partial flag set.  Identical
    (seed, config, oracle) yield identical results for a fixed jobs value.
    """
    grid = grid or GridConfig()
    ledger = ledger if ledger is not None else QueryLedger(budget)
    mask = mask if mask is not None else mask_from_bbox(target, image.width, image.height)
    rng = random.Random(cfg.seed)
    pop = init_population(cfg, grid.genome_length, rng, grid.anchor_bits)

    start_used = ledger.used
    best_genome: Genome | None = None
    best_fit = 0.0
    history: list[float] = []
    success = False
    partial = False
    error: str | None = None
    generations_run = 0
    needs_rng = eot is not None or folds is not None

    def eval_one(gen_index: int, member_index: int):
        member_rng = (
            _derived_rng(cfg.seed, f"eval:{gen_index}", member_index)
            if needs_rng
            else None
        )
        return evaluate_fitness(
            pop.members[member_index],
            image,
            target,
            oracle,
            eot,
            ledger,
            grid=grid,
            mask=mask,
            tau_iou=tau_iou,
            folds=folds,
            rng=member_rng,
        )

    executor = ThreadPoolExecutor(max_workers=jobs) if jobs > 1 else None
    try:
        for s in range(cfg.generations):
            pop.generation = s
            pending = [i for i, rec in enumerate(pop.records) if rec is None]
            stop = False
            for outcome_idx, outcome in _evaluate_wave(eval_one, s, pending, executor, jobs):
                if isinstance(outcome, BudgetExhaustedError):
                    stop = True
                    break
                if isinstance(outcome, OracleTransportError):
                    partial = True
                    error = str(outcome)
                    stop = True
                    break
                pop.records[outcome_idx] = outcome
                if best_genome is None or outcome.fit > best_fit:
                    best_genome = outcome.genome
                    best_fit = outcome.fit
                if 1.0 - best_fit < cfg.early_stop_conf:
                    success = True
                    stop = True
                    break
            generations_run = s + 1
            history.append(best_fit)
            if stop:
                break
            pop = select(pop, cfg, rng)
            pop = crossover(pop, cfg.crossover_rate, rng)
            pop = mutate(pop, cfg.mutation_rate, rng)
    finally:
        if executor is not None:
            executor.shutdown(wait=True)

    return AttackResult(
        best_genome=best_genome,
        best_fit=best_fit,
        success=success,
        queries_used=ledger.used - start_used,
        generations_run=generations_run,
        history=tuple(history),
        partial=partial,
        error=error,
    )


def _evaluate_wave(eval_one, gen_index: int, pending: list[int], executor, jobs: int):
    """Yield (member_index, FitnessRecord-or-error) in member order.

    With workers, evaluations run in fixed-size waves and are committed in
    member order, so results do not depend on completion order.
    """
    def capture(idx: int):
        try:
            return eval_one(gen_index, idx)
        except (BudgetExhaustedError, OracleTransportError) as exc:
            return exc

    if executor is None:
        for idx in pending:
            yield idx, capture(idx)
        return
    for start in range(0, len(pending), jobs):
        wave = pending[start:start + jobs]
        futures = [executor.submit(capture, idx) for idx in wave]
        for idx, future in zip(wave, futures):
            yield idx, future.result()


def random_search(
    image: Image,
    target: BBox,
    oracle,
    budget: int,
    rng: random.Random,
    *,
    grid: GridConfig | None = None,
    eot: EotConfig | None = None,
    mask: Mask | None = None,
    tau_iou: float = DEFAULT_TAU_IOU,
    folds: FoldConfig | None = None,
    early_stop_conf: float = 0.5,
) -> AttackResult:
    """Baseline: score i.i.d. random genomes until success or budget."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    grid = grid or GridConfig()
    ledger = QueryLedger(budget)
    mask = mask if mask is not None else mask_from_bbox(target, image.width, image.height)

    best_genome: Genome | None = None
    best_fit = 0.0
    history: list[float] = []
    success = False
    partial = False
    error: str | None = None
    evaluations = 0
    while True:
        genome = random_genome(grid.genome_length, rng, grid.anchor_bits)
        try:
            rec = evaluate_fitness(
                genome,
                image,
                target,
                oracle,
                eot,
                ledger,
                grid=grid,
                mask=mask,
                tau_iou=tau_iou,
                folds=folds,
                rng=rng,
            )
        except BudgetExhaustedError:
            break
        except OracleTransportError as exc:
            partial = True
            error = str(exc)
            break
        evaluations += 1
        if best_genome is None or rec.fit > best_fit:
            best_genome = rec.genome
            best_fit = rec.fit
        history.append(best_fit)
        if 1.0 - best_fit < early_stop_conf:
            success = True
            break

    return AttackResult(
        best_genome=best_genome,
        best_fit=best_fit,
        success=success,
        queries_used=ledger.used,
        generations_run=evaluations,
        history=tuple(history),
        partial=partial,
        error=error,
    )
