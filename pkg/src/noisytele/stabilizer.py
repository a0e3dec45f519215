"""Differential-evolution recovery of noisy teleportation controls.

A candidate is the full control genome of one protocol: Alice's and Bob's
parameter vectors stacked as ``(2, d*d, d*d - 1)``. Fitness is the closed-form
average fidelity only; the fidelity deviation is recorded but never optimized.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .bloch import batch_qubit_D
from .core import Channel, Protocol, batch_analytic_F
from .errors import ConfigError
from .montecarlo import MCConfig, NoiseModel, mc_estimate_FD
from .qlinalg import dagger, substream, unitaries_from_params, wrap_angles

FitnessFn = Callable[[np.ndarray, int, float], np.ndarray]


@dataclass(frozen=True)
class DEConfig:
    n_pop: int = 100
    weight: float = 0.5
    crossover: float = 0.1
    iterations: int = 1000
    seed: int = 0
    stall_window: int = 100
    stall_tol: float = 1e-6

    def __post_init__(self) -> None:
        if self.n_pop < 4:
            raise ConfigError(f"n_pop must be at least 4, got {self.n_pop}")
        if not 0.0 <= self.crossover <= 1.0:
            raise ConfigError(f"crossover rate must lie in [0, 1], got {self.crossover}")
        if self.iterations < 0:
            raise ConfigError("iterations must be non-negative")


def genome_shape(d: int) -> tuple[int, int, int]:
    return (2, d * d, d * d - 1)


class Candidate:
    """One control genome with a lazily cached fitness."""

    def __init__(self, genome: np.ndarray, fitness: float | None = None) -> None:
        self._genome = self._freeze(genome)
        self.fitness = fitness

    @staticmethod
    def _freeze(genome: np.ndarray) -> np.ndarray:
        g = wrap_angles(np.array(genome, dtype=float))
        if g.ndim != 3 or g.shape[0] != 2:
            raise ValueError(f"genome must have shape (2, d*d, d*d - 1), got {g.shape}")
        g.setflags(write=False)
        return g

    @property
    def genome(self) -> np.ndarray:
        return self._genome

    @genome.setter
    def genome(self, value: np.ndarray) -> None:
        self._genome = self._freeze(value)
        self.fitness = None

    @property
    def dim(self) -> int:
        return math.isqrt(self._genome.shape[1])

    def evaluate(self, ch: Channel, fitness: FitnessFn = batch_analytic_F) -> float:
        if self.fitness is None:
            self.fitness = float(fitness(self._genome[None], self.dim, ch.gamma)[0])
        return self.fitness

    def protocol(self) -> Protocol:
        return Protocol.from_genome(self.dim, self._genome)

    def copy(self) -> Candidate:
        return Candidate(self._genome, self.fitness)


@dataclass
class Population:
    """Genomes stacked as ``(n_pop, 2, d*d, d*d - 1)`` plus the best candidate seen."""

    dim: int
    genomes: np.ndarray
    fitness: np.ndarray
    best: Candidate

    @property
    def members(self) -> list[Candidate]:
        return [Candidate(g, float(f)) for g, f in zip(self.genomes, self.fitness)]

    def __len__(self) -> int:
        return self.genomes.shape[0]

    def absorb_best(self) -> bool:
        """Copy the fittest member into ``best`` if it improves on it."""
        i = int(np.argmax(self.fitness))
        if self.fitness[i] > self.best.fitness:
            self.best = Candidate(self.genomes[i], float(self.fitness[i]))
            return True
        return False


def init_population(
    d: int, ch: Channel, cfg: DEConfig, rng: np.random.Generator, fitness: FitnessFn = batch_analytic_F
) -> Population:
    genomes = rng.uniform(-np.pi, np.pi, size=(cfg.n_pop,) + genome_shape(d))
    fit = np.asarray(fitness(genomes, d, ch.gamma), dtype=float)
    i = int(np.argmax(fit))
    return Population(d, genomes, fit, Candidate(genomes[i], float(fit[i])))


def _partners(n: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """For each target ``i`` in ``range(size)``: three distinct indices, none equal to ``i``."""
    picks = rng.random((size, n - 1)).argsort(axis=1)[:, :3]
    return picks + (picks >= np.arange(size)[:, None])


def mutate(pop: Population, i: int, cfg: DEConfig, rng: np.random.Generator) -> np.ndarray:
    """Mutant genome ``p_a + W (p_b - p_c)`` for target ``i``, wrapped."""
    others = np.delete(np.arange(len(pop)), i)
    a, b, c = rng.choice(others, size=3, replace=False)
    g = pop.genomes
    return wrap_angles(g[a] + cfg.weight * (g[b] - g[c]))


def mutate_all(pop: Population, cfg: DEConfig, rng: np.random.Generator) -> np.ndarray:
    """One mutant per member, partners drawn independently per target."""
    a, b, c = _partners(len(pop), len(pop), rng).T
    g = pop.genomes
    return wrap_angles(g[a] + cfg.weight * (g[b] - g[c]))


def crossover(parent: np.ndarray, mutant: np.ndarray, cfg: DEConfig, rng: np.random.Generator) -> np.ndarray:
    """Keep the parent component where a uniform draw exceeds the crossover rate.

    Works on a single genome or on a stack of them.
    """
    parent = np.asarray(parent)
    mutant = np.asarray(mutant)
    if parent.shape != mutant.shape:
        raise ValueError(f"genome shapes differ: {parent.shape} vs {mutant.shape}")
    draws = rng.random(parent.shape)
    return np.where(draws > cfg.crossover, parent, mutant)


def select(
    parent: Candidate, trial: Candidate, ch: Channel | None = None, fitness: FitnessFn = batch_analytic_F
) -> Candidate:
    """Greedy selection; ties go to the trial."""
    if parent.fitness is None or trial.fitness is None:
        if ch is None:
            raise ValueError("unevaluated candidate and no channel to evaluate it")
        parent.evaluate(ch, fitness)
        trial.evaluate(ch, fitness)
    return trial if trial.fitness >= parent.fitness else parent


def _genome_D(genome: np.ndarray, d: int, gamma: float, mc: MCConfig | None) -> float:
    if d == 2:
        u = unitaries_from_params(genome[0], d)
        v = unitaries_from_params(genome[1], d)
        return float(batch_qubit_D(v @ dagger(u), gamma))
    if mc is None:
        return math.nan
    return mc_estimate_FD(Protocol.from_genome(d, genome), Channel(d, gamma), mc).D


@dataclass
class GenerationTrace:
    """Per-generation record; index 0 is the state before any generation."""

    best_F: list[float] = field(default_factory=list)
    best_D: list[float] = field(default_factory=list)
    mean_F: list[float] = field(default_factory=list)
    stall_window: int = 100
    stall_tol: float = 1e-6

    def record(self, pop: Population, D: float) -> None:
        self.best_F.append(float(pop.best.fitness))
        self.best_D.append(D)
        self.mean_F.append(math.fsum(pop.fitness) / len(pop))

    def __len__(self) -> int:
        return len(self.best_F)

    @property
    def converged_at(self) -> int | None:
        """First generation at which best F moved less than the tolerance over the window."""
        f = np.asarray(self.best_F)
        w = self.stall_window
        if len(f) <= w:
            return None
        hits = np.nonzero(f[w:] - f[:-w] <= self.stall_tol)[0]
        return int(hits[0] + w) if hits.size else None


def evolve(
    pop: Population,
    ch: Channel,
    cfg: DEConfig,
    rng: np.random.Generator,
    fitness: FitnessFn = batch_analytic_F,
    iterations: int | None = None,
    mc: MCConfig | None = None,
    trace: GenerationTrace | None = None,
) -> GenerationTrace:
    """Run mutation, crossover and selection for ``iterations`` generations.

    ``pop`` is updated in place. The best candidate's D is recomputed only
    when the best changes (closed form for qubits, ``mc`` otherwise).
    """
    d = pop.dim
    n = cfg.iterations if iterations is None else iterations
    best_D = _genome_D(pop.best.genome, d, ch.gamma, mc)
    if trace is None:
        trace = GenerationTrace(stall_window=cfg.stall_window, stall_tol=cfg.stall_tol)
        trace.record(pop, best_D)
    for _ in range(n):
        trial = crossover(pop.genomes, mutate_all(pop, cfg, rng), cfg, rng)
        trial_fit = np.asarray(fitness(trial, d, ch.gamma), dtype=float)
        accept = trial_fit >= pop.fitness
        pop.genomes[accept] = trial[accept]
        pop.fitness[accept] = trial_fit[accept]
        if pop.absorb_best():
            best_D = _genome_D(pop.best.genome, d, ch.gamma, mc)
        trace.record(pop, best_D)
    return trace


@dataclass
class RecoveryResult:
    gamma: float
    seeds: list[int]
    best_F: np.ndarray  # (repeats, iterations + 1)
    best_D: np.ndarray

    @property
    def mean_F(self) -> np.ndarray:
        return self.best_F.mean(axis=0)

    @property
    def mean_D(self) -> np.ndarray:
        return self.best_D.mean(axis=0)


def _recover_run(d: int, gamma: float, cfg: DEConfig, key: tuple[int, ...], mc: MCConfig | None) -> GenerationTrace:
    rng = substream(cfg.seed, *key)
    ch = Channel(d, gamma)
    pop = init_population(d, ch, cfg, rng)
    return evolve(pop, ch, cfg, rng, mc=mc)


def recover_experiment(
    gammas: Sequence[float],
    cfg: DEConfig,
    repeats: int,
    d: int = 2,
    workers: int = 1,
    mc: MCConfig | None = None,
) -> list[RecoveryResult]:
    """Independent evolutions from random populations for each channel strength.

    Run ``r`` of the ``k``-th gamma uses the stream ``(cfg.seed, k, r)``.
    """
    jobs = [(d, float(g), cfg, (k, r), mc) for k, g in enumerate(gammas) for r in range(repeats)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            traces = list(pool.map(lambda a: _recover_run(*a), jobs))
    else:
        traces = [_recover_run(*a) for a in jobs]
    out = []
    for k, g in enumerate(gammas):
        runs = traces[k * repeats : (k + 1) * repeats]
        out.append(
            RecoveryResult(
                gamma=float(g),
                seeds=[cfg.seed] * repeats,
                best_F=np.array([t.best_F for t in runs]),
                best_D=np.array([t.best_D for t in runs]),
            )
        )
    return out


@dataclass
class StabilizationTrace:
    """Evolution interleaved with control shocks.

    ``shock`` marks rows recorded right after a shock; they share the
    iteration number of the row before them. The first ``burn_in`` shocks
    are excluded from :meth:`cycles`.
    """

    burn_in: int = 0
    iteration: list[int] = field(default_factory=list)
    best_F: list[float] = field(default_factory=list)
    best_D: list[float] = field(default_factory=list)
    mean_F: list[float] = field(default_factory=list)
    shock: list[bool] = field(default_factory=list)

    def extend(self, gen: GenerationTrace, start: int, offset: int) -> None:
        for j in range(start, len(gen)):
            self.append(offset + j, gen.best_F[j], gen.best_D[j], gen.mean_F[j], False)

    def append(self, iteration: int, best_F: float, best_D: float, mean_F: float, shock: bool) -> None:
        self.iteration.append(iteration)
        self.best_F.append(best_F)
        self.best_D.append(best_D)
        self.mean_F.append(mean_F)
        self.shock.append(shock)

    def cycles(self) -> list[dict]:
        """Per counted shock: mean F before and after, and the best F reached before the next shock."""
        shocks = [i for i, s in enumerate(self.shock) if s]
        ends = shocks[1:] + [len(self.shock)]
        out = []
        for i, end in list(zip(shocks, ends))[self.burn_in :]:
            out.append(
                {
                    "iteration": self.iteration[i],
                    "mean_F_before": self.mean_F[i - 1],
                    "mean_F_after": self.mean_F[i],
                    "best_F_after": self.best_F[i],
                    "recovered_F": max(self.best_F[i:end]),
                }
            )
        return out


def _shock(pop: Population, noise: NoiseModel, ch: Channel, rng: np.random.Generator, fitness: FitnessFn) -> None:
    d = pop.dim
    stacked = np.concatenate([pop.genomes, pop.best.genome[None]])
    shocked = wrap_angles(stacked + noise.sample(stacked.shape, rng))
    fit = np.asarray(fitness(shocked, d, ch.gamma), dtype=float)
    pop.genomes[:] = shocked[:-1]
    pop.fitness[:] = fit[:-1]
    # the old best no longer exists: restart tracking from the shocked state
    pop.best = Candidate(shocked[-1], float(fit[-1]))
    pop.absorb_best()


def realtime_stabilization(
    ch: Channel,
    cfg: DEConfig,
    shock_period: int,
    noise: NoiseModel,
    cycles: int,
    burn_in: int = 0,
    run_key: tuple[int, ...] = (0,),
    fitness: FitnessFn = batch_analytic_F,
    mc: MCConfig | None = None,
) -> StabilizationTrace:
    """Evolve for ``shock_period`` generations, then shock and evolve again, ``burn_in + cycles`` times.

    A shock perturbs every member and the best candidate with ``noise``.
    Evolution and shocks draw from separate streams, so a zero-strength shock
    leaves the trace identical to an uninterrupted run.
    """
    if shock_period < 1:
        raise ConfigError("shock_period must be positive")
    if cycles < 0 or burn_in < 0:
        raise ConfigError("cycles and burn_in must be non-negative")
    d = ch.dim
    de_rng = substream(cfg.seed, *run_key, 0)
    shock_rng = substream(cfg.seed, *run_key, 1)
    pop = init_population(d, ch, cfg, de_rng, fitness)
    out = StabilizationTrace(burn_in=burn_in)
    gen = evolve(pop, ch, cfg, de_rng, fitness, iterations=shock_period, mc=mc)
    out.extend(gen, 0, 0)
    iteration = shock_period
    for _ in range(burn_in + cycles):
        _shock(pop, noise, ch, shock_rng, fitness)
        D = _genome_D(pop.best.genome, d, ch.gamma, mc)
        out.append(iteration, float(pop.best.fitness), D, math.fsum(pop.fitness) / len(pop), True)
        gen = evolve(pop, ch, cfg, de_rng, fitness, iterations=shock_period, mc=mc)
        out.extend(gen, 1, iteration)
        iteration += shock_period
    return out


def stabilization_repeats(
    ch: Channel,
    cfg: DEConfig,
    shock_period: int,
    noise: NoiseModel,
    cycles: int,
    repeats: int,
    burn_in: int = 0,
    workers: int = 1,
) -> list[StabilizationTrace]:
    args = [(ch, cfg, shock_period, noise, cycles, burn_in, (r,)) for r in range(repeats)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(lambda a: realtime_stabilization(*a), args))
    return [realtime_stabilization(*a) for a in args]
