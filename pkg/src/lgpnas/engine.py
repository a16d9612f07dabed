"""Evolutionary loop with surrogate model management.

Each generation produces a full population of offspring, partially trains
every one of them, and extracts its class-probability semantics at that
checkpoint.  Generation 1 bootstraps the archive by fully evaluating everyone.
From generation 2 on, offspring are ranked by expected improvement under the
surrogate fitted to the archive: the top ceil(0.4 * P) continue training to
the full epoch budget and get measured fitness, the remaining 60% receive the
surrogate's mean prediction as fitness.  Checkpoint semantics plus measured
fitness of every full evaluation grow the archive, and the surrogate is
refitted each generation.

Measured (full) fitness is validation accuracy; estimated individuals can
reproduce but never update the best-so-far value and never enter the archive.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from dataclasses import replace as dataclasses_replace
from pathlib import Path

import numpy as np

from . import __version__, analytics, surrogate
from .config import MODE_SURROGATE, RunConfig, config_to_dict
from .errors import FitError, InsufficientDataError, StructuralError, TrainingError
from .genome import GENE_BY_NAME, Genotype, crossover, mutate, random_genotype, serialize
from .phenotype import describe, to_phenotype
from .smallnet import Dataset, evaluate, extract_semantics, load_dataset, train

logger = logging.getLogger(__name__)

FULL = "full"
ESTIMATED = "estimated"

GENERATIONS_CSV_HEADER = (
    "gen,individual_id,fitness_source,predicted_fitness,actual_fitness,ei,wall_seconds"
)


def expected_improvement(mean: float, sigma: float, f_best: float) -> float:
    """Expected gain over the best known value under a Gaussian prediction.

    Zero when sigma is zero; otherwise ``(mean - f_best) * Phi(Z) + sigma *
    phi(Z)`` with ``Z = (mean - f_best) / sigma``, clamped at zero against
    round-off.
    """
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    if sigma == 0.0:
        return 0.0
    z = (mean - f_best) / sigma
    cdf = 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))
    pdf = math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    return max((mean - f_best) * cdf + sigma * pdf, 0.0)


@dataclass
class Individual:
    uid: int
    genotype: Genotype
    semantics: np.ndarray | None = None
    fitness: float = float("nan")
    fitness_source: str | None = None  # FULL | ESTIMATED
    predicted_fitness: float | None = None
    ei: float | None = None
    test_accuracy: float | None = None
    wall_seconds: float = 0.0


class Archive:
    """Training set of (checkpoint semantics, measured fitness) rows.

    Only full evaluations enter; duplicate semantics rows are rejected.  An
    optional FIFO cap bounds the row count (0 = unbounded).
    """

    def __init__(self, cap: int = 0):
        self.cap = cap
        self._rows: list[tuple[np.ndarray, float]] = []
        self._seen: set[bytes] = set()

    def __len__(self) -> int:
        return len(self._rows)

    def add(self, semantics: np.ndarray, fitness: float) -> bool:
        key = semantics.tobytes()
        if key in self._seen:
            logger.warning("archive: skipping duplicate semantics row")
            return False
        self._rows.append((semantics, fitness))
        self._seen.add(key)
        if self.cap and len(self._rows) > self.cap:
            old, _ = self._rows.pop(0)
            self._seen.discard(old.tobytes())
        return True

    def matrix(self) -> tuple[np.ndarray, np.ndarray]:
        x = np.stack([row[0] for row in self._rows])
        y = np.array([row[1] for row in self._rows])
        return x, y


@dataclass
class GenerationReport:
    gen: int
    n_full: int
    n_estimated: int
    pairs: list[tuple[int, float, float]]  # (uid, predicted, actual)
    quality: analytics.SurrogateQuality | None
    best_fitness: float
    f_star: float
    archive_size: int
    wall_seconds: float


@dataclass
class EvolutionState:
    population: list[Individual] = field(default_factory=list)
    generation: int = 0
    archive: Archive = field(default_factory=Archive)
    model: surrogate.KplsModel | None = None
    f_star: float = float("-inf")
    best: Individual | None = None
    uid_counter: int = 0
    initial_genotypes: list[Genotype] = field(default_factory=list)
    reports: list[GenerationReport] = field(default_factory=list)
    rows_by_gen: dict[int, list[Individual]] = field(default_factory=dict)
    full_trainings: int = 0
    partial_trainings: int = 0
    epochs_trained: int = 0


@dataclass
class RunResult:
    config: RunConfig
    out_dir: Path | None
    manifest: dict
    reports: list[GenerationReport]
    population: list[Individual]
    best: Individual


def select_parent(population: list[Individual], k: int, rng: np.random.Generator) -> Individual:
    """Tournament of ``k`` uniform draws; highest fitness wins, ties go to the
    earlier population index."""
    if not population:
        raise ValueError("empty population")
    if k < 1:
        raise ValueError("tournament size must be >= 1")
    draws = rng.integers(0, len(population), size=k)
    best = min(draws, key=lambda i: (-population[int(i)].fitness, int(i)))
    return population[int(best)]


def _train_seed(master_seed: int, gen: int, index: int) -> int:
    return int(np.random.SeedSequence((master_seed, 11, gen, index)).generate_state(1)[0])


def _evaluation_task(args):
    """Partial-train one offspring and extract its checkpoint semantics."""
    genotype, dataset, cfg, seed = args
    start = time.perf_counter()
    try:
        arch = to_phenotype(genotype, dataset.input_shape, dataset.num_classes)
        net = train(arch, dataset.train, cfg.train, cfg.train.partial_epochs, seed=seed)
        semantics = extract_semantics(net, dataset.val)
    except (TrainingError, StructuralError) as exc:
        return None, None, time.perf_counter() - start, str(exc)
    return net, semantics, time.perf_counter() - start, None


def _full_task(args):
    """Continue a checkpoint to the full epoch budget and measure fitness."""
    net, dataset, cfg = args
    start = time.perf_counter()
    try:
        full_net = train(
            net.architecture, dataset.train, cfg.train, cfg.train.full_epochs, net=net
        )
        fitness, _ = evaluate(full_net, dataset.val)
        test_accuracy, _ = evaluate(full_net, dataset.test)
    except TrainingError as exc:
        return None, None, time.perf_counter() - start, str(exc)
    return fitness, test_accuracy, time.perf_counter() - start, None


def _map_tasks(task, items, workers: int):
    if workers <= 1 or len(items) <= 1:
        return [task(item) for item in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(task, items))


def full_quota(population: int, fraction: float) -> int:
    """ceil(fraction * population), guarded against float round-off."""
    return math.ceil(round(fraction * population, 9))


def _make_offspring(state: EvolutionState, cfg: RunConfig, rng: np.random.Generator) -> list[Genotype]:
    offspring: list[Genotype] = []
    while len(offspring) < cfg.population:
        pa = select_parent(state.population, cfg.tournament_k, rng)
        pb = select_parent(state.population, cfg.tournament_k, rng)
        for child in crossover(pa.genotype, pb.genotype, rng):
            offspring.append(mutate(child, cfg.mutation, rng))
    return offspring[: cfg.population]


def run_generation(state: EvolutionState, cfg: RunConfig, dataset: Dataset) -> EvolutionState:
    """Advance the state by one generation (see the module docstring for the
    phase order)."""
    gen = state.generation + 1
    gen_start = time.perf_counter()
    rng = np.random.default_rng(np.random.SeedSequence((cfg.master_seed, 7, gen)))

    if gen == 1:
        init_rng = np.random.default_rng(np.random.SeedSequence((cfg.master_seed, 5)))
        genotypes = [random_genotype(cfg.genome, init_rng) for _ in range(cfg.population)]
        state.initial_genotypes = list(genotypes)
    else:
        genotypes = _make_offspring(state, cfg, rng)

    offspring = []
    for genotype in genotypes:
        offspring.append(Individual(uid=state.uid_counter, genotype=genotype))
        state.uid_counter += 1

    # partial training + checkpoint semantics for everyone
    tasks = [
        (ind.genotype, dataset, cfg, _train_seed(cfg.master_seed, gen, i))
        for i, ind in enumerate(offspring)
    ]
    nets = []
    failed: set[int] = set()
    for ind, outcome in zip(offspring, _map_tasks(_evaluation_task, tasks, cfg.workers)):
        net, semantics, wall, error = outcome
        nets.append(net)
        ind.semantics = semantics
        ind.wall_seconds += wall
        if error is not None:
            logger.warning("individual %d failed partial training: %s", ind.uid, error)
            ind.fitness = 0.0
            ind.fitness_source = FULL
            failed.add(ind.uid)
            continue
        state.partial_trainings += 1
        state.epochs_trained += cfg.train.partial_epochs

    candidates = [ind for ind in offspring if ind.uid not in failed]

    # choose who gets a full evaluation
    surrogate_mode = cfg.mode == MODE_SURROGATE
    use_model = surrogate_mode and gen > 1 and state.model is not None
    if surrogate_mode and gen > 1 and state.model is None:
        logger.warning("generation %d: no fitted surrogate, fully evaluating everyone", gen)
    if use_model:
        for ind in candidates:
            pred = surrogate.predict(state.model, ind.semantics)
            ind.predicted_fitness = pred.mean
            ind.ei = expected_improvement(pred.mean, math.sqrt(pred.variance), state.f_star)
        quota = full_quota(cfg.population, cfg.full_fraction)
        ranked = sorted(
            candidates,
            key=lambda i: (-i.ei, -i.predicted_fitness, serialize(i.genotype)),
        )
        chosen = ranked[:quota]
    else:
        chosen = list(candidates)
    chosen_ids = {ind.uid for ind in chosen}

    full_tasks = [
        (nets[i], dataset, cfg)
        for i, ind in enumerate(offspring)
        if ind.uid in chosen_ids
    ]
    full_results = _map_tasks(_full_task, full_tasks, cfg.workers)
    pairs = []
    it = iter(full_results)
    for ind in offspring:
        if ind.uid in failed:
            continue
        if ind.uid not in chosen_ids:
            ind.fitness = float(np.clip(ind.predicted_fitness, 0.0, 1.0))
            ind.fitness_source = ESTIMATED
            continue
        fitness, test_accuracy, wall, error = next(it)
        ind.wall_seconds += wall
        ind.fitness_source = FULL
        if error is not None:
            logger.warning("individual %d failed full training: %s", ind.uid, error)
            ind.fitness = 0.0
            continue
        ind.fitness = fitness
        ind.test_accuracy = test_accuracy
        state.full_trainings += 1
        state.epochs_trained += cfg.train.full_epochs - cfg.train.partial_epochs
        state.archive.add(ind.semantics, ind.fitness)
        if ind.predicted_fitness is not None:
            pairs.append((ind.uid, ind.predicted_fitness, ind.fitness))

    # refit the surrogate on the archive for the next generation
    if surrogate_mode:
        try:
            x, y = state.archive.matrix()
            state.model = surrogate.fit(
                x, y,
                h=cfg.surrogate.h,
                bounds=cfg.surrogate.theta_log10_bounds,
                nugget=cfg.surrogate.nugget,
                starts=cfg.surrogate.starts,
                rounds=cfg.surrogate.rounds,
                grid_points=cfg.surrogate.grid_points,
            )
        except (FitError, InsufficientDataError) as exc:
            logger.warning("generation %d: surrogate fit failed (%s)", gen, exc)
            state.model = None

    # best-so-far bookkeeping (measured fitness only)
    for ind in offspring:
        if ind.fitness_source == FULL and ind.fitness > state.f_star:
            state.f_star = ind.fitness
            state.best = ind

    state.population = offspring
    if cfg.elitism and gen > 1 and state.best is not None:
        if state.best.uid not in {ind.uid for ind in offspring}:
            worst = min(range(len(offspring)), key=lambda i: (offspring[i].fitness, -i))
            state.population = list(offspring)
            state.population[worst] = state.best

    quality = analytics.surrogate_quality(
        [p[1] for p in pairs], [p[2] for p in pairs]
    ) if len(pairs) >= 2 else None
    full_count = sum(1 for i in offspring if i.fitness_source == FULL)
    report = GenerationReport(
        gen=gen,
        n_full=full_count,
        n_estimated=len(offspring) - full_count,
        pairs=pairs,
        quality=quality,
        best_fitness=max(i.fitness for i in offspring),
        f_star=state.f_star,
        archive_size=len(state.archive),
        wall_seconds=time.perf_counter() - gen_start,
    )
    state.reports.append(report)
    state.rows_by_gen[gen] = offspring
    state.generation = gen
    return state


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float) and math.isnan(value):
        return ""
    return repr(value) if isinstance(value, float) else str(value)


def run_evolution(cfg: RunConfig, dataset: Dataset | None = None) -> RunResult:
    """Run the configured number of generations and write all artifacts.

    Fully reproducible from (config, master seed): every rng stream is derived
    from the master seed, and all report files except measured wall times are
    byte-identical across repeated runs.
    """
    cfg.validate()
    if dataset is None:
        dataset = load_dataset(cfg.dataset)
    out_dir = Path(cfg.out_dir) if cfg.out_dir else None
    started = time.perf_counter()
    state = EvolutionState(archive=Archive(cap=cfg.archive_cap))
    try:
        for _ in range(cfg.generations):
            state = run_generation(state, cfg, dataset)
            logger.info(
                "generation %d: best %.4f, f* %.4f, archive %d",
                state.generation,
                state.reports[-1].best_fitness,
                state.f_star,
                len(state.archive),
            )
            if out_dir and cfg.mode == MODE_SURROGATE and state.model is not None:
                model_dir = out_dir / "surrogate"
                model_dir.mkdir(parents=True, exist_ok=True)
                dump = surrogate.model_dump(state.model)
                (model_dir / f"gen_{state.generation:03d}.json").write_text(
                    json.dumps(dump, indent=2, sort_keys=True) + "\n"
                )
    finally:
        # flush whatever exists even when a generation fails mid-run
        if out_dir and state.reports:
            _write_artifacts(cfg, state, dataset, out_dir, time.perf_counter() - started)
    manifest = _manifest(cfg, state, time.perf_counter() - started)
    return RunResult(
        config=cfg,
        out_dir=out_dir,
        manifest=manifest,
        reports=state.reports,
        population=state.population,
        best=state.best,
    )


def _manifest(cfg: RunConfig, state: EvolutionState, wall_seconds: float) -> dict:
    return {
        "version": __version__,
        "mode": cfg.mode,
        "master_seed": cfg.master_seed,
        "config": config_to_dict(cfg),
        "generations_completed": state.generation,
        "totals": {
            "full_trainings": state.full_trainings,
            "partial_trainings": state.partial_trainings,
            "epochs_trained": state.epochs_trained,
            "wall_seconds": wall_seconds,
        },
        "best": None if state.best is None else {
            "uid": state.best.uid,
            "fitness": state.best.fitness,
            "test_accuracy": state.best.test_accuracy,
        },
        "artifacts": {
            "generations": "generations.csv",
            "quality_per_gen": "quality_per_gen.csv",
            "pred_vs_actual": "pred_vs_actual.csv",
            "gene_proportions": "gene_proportions.csv",
            "energy": "energy.json",
            "summary": "summary.json",
            "best_genotype": "best_genotype.txt",
            "best_architecture": "best_architecture.txt",
            "final_population": "genotypes",
        },
    }


def _write_artifacts(
    cfg: RunConfig, state: EvolutionState, dataset: Dataset, out_dir: Path, wall: float
) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)

    with (out_dir / "generations.csv").open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(GENERATIONS_CSV_HEADER.split(","))
        for report in state.reports:
            for ind in state.rows_by_gen[report.gen]:
                writer.writerow([
                    report.gen,
                    ind.uid,
                    ind.fitness_source or "",
                    _fmt(ind.predicted_fitness),
                    _fmt(ind.fitness if ind.fitness_source == FULL else None),
                    _fmt(ind.ei),
                    f"{ind.wall_seconds:.3f}",
                ])

    with (out_dir / "quality_per_gen.csv").open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["gen", "n_pairs", "mse", "kendall_tau", "r2"])
        for report in state.reports:
            q = report.quality
            writer.writerow([
                report.gen,
                0 if q is None else q.n_pairs,
                _fmt(None if q is None else q.mse),
                _fmt(None if q is None else q.kendall_tau),
                _fmt(None if q is None else q.r2),
            ])

    with (out_dir / "pred_vs_actual.csv").open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["gen", "individual_id", "predicted", "actual"])
        for report in state.reports:
            for uid, pred, actual in report.pairs:
                writer.writerow([report.gen, uid, _fmt(pred), _fmt(actual)])

    _write_gene_proportions(state, out_dir / "gene_proportions.csv")

    hours = wall / 3600.0
    energy = {
        "params": config_to_dict(cfg)["energy"],
        "runtime_hours": hours,
        "energy_kwh": analytics.energy_kwh(
            _energy_with_runtime(cfg, hours)
        ),
        "full_trainings": state.full_trainings,
        "partial_trainings": state.partial_trainings,
        "epochs_trained": state.epochs_trained,
    }
    (out_dir / "energy.json").write_text(json.dumps(energy, indent=2, sort_keys=True) + "\n")

    pooled_pairs = [pair for report in state.reports for pair in report.pairs]
    pooled = None
    if len(pooled_pairs) >= 2:
        q = analytics.surrogate_quality(
            [p[1] for p in pooled_pairs], [p[2] for p in pooled_pairs]
        )
        pooled = {"mse": q.mse, "kendall_tau": q.kendall_tau,
                  "r2": None if math.isnan(q.r2) else q.r2, "n_pairs": q.n_pairs}
    summary = {
        "mode": cfg.mode,
        "generations": [
            {
                "gen": r.gen,
                "n_full": r.n_full,
                "n_estimated": r.n_estimated,
                "best_fitness": r.best_fitness,
                "f_star": r.f_star,
                "archive_size": r.archive_size,
            }
            for r in state.reports
        ],
        "quality_pooled": pooled,
        "best": None if state.best is None else {
            "uid": state.best.uid,
            "fitness": state.best.fitness,
            "test_accuracy": state.best.test_accuracy,
        },
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")

    geno_dir = out_dir / "genotypes"
    geno_dir.mkdir(exist_ok=True)
    for i, ind in enumerate(state.population):
        (geno_dir / f"final_{i:03d}.txt").write_text(serialize(ind.genotype))
    if state.best is not None:
        (out_dir / "best_genotype.txt").write_text(serialize(state.best.genotype))
        arch = to_phenotype(state.best.genotype, dataset.input_shape, dataset.num_classes)
        (out_dir / "best_architecture.txt").write_text(describe(arch))

    (out_dir / "manifest.json").write_text(
        json.dumps(_manifest(cfg, state, wall), indent=2, sort_keys=True) + "\n"
    )


def _energy_with_runtime(cfg: RunConfig, hours: float):
    return dataclasses_replace(cfg.energy, runtime_hours=hours)


def _write_gene_proportions(state: EvolutionState, path: Path) -> None:
    snapshots = []
    if state.initial_genotypes:
        snapshots.append(analytics.gene_proportions(state.initial_genotypes, "initial"))
    if state.population:
        snapshots.append(
            analytics.gene_proportions([i.genotype for i in state.population], "final")
        )
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["snapshot", "kind", "name", "group", "proportion"])
        for snap in snapshots:
            for gene_name, value in snap.gene_proportions.items():
                writer.writerow(
                    [snap.snapshot, "gene", gene_name, GENE_BY_NAME[gene_name].group, repr(value)]
                )
            for group, value in snap.group_proportions.items():
                writer.writerow([snap.snapshot, "group", group, group, repr(value)])
