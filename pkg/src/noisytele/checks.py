"""Invariant and bound suites run by ``noisytele verify``.

Every check reduces to one worst-case number compared against a bound:
``status`` is ``pass`` iff ``value <= bound``. Tolerance bounds are
multiplied by ``tol_scale``; statistical and bookkeeping bounds are not.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from .bloch import (
    DELTA_MAX,
    SQRT5,
    batch_qubit_D,
    covariance_matrices,
    qubit_D_analytic,
    rotation_matrices,
)
from .core import (
    GAMMA_BV,
    GAMMA_C,
    Channel,
    analytic_F,
    batch_analytic_F,
    entanglement_quantity_E,
    fidelity_bounds,
    input_fidelity,
    optimal_protocol,
    simulate_output,
)
from .montecarlo import MCConfig, deterioration_experiment, haar_protocol_F, mc_estimate_FD, random_protocol
from .qlinalg import (
    dagger,
    haar_random_state,
    haar_random_states,
    haar_random_unitary,
    state_fidelity,
    su_generators,
    substream,
    unitaries_from_params,
)
from .stabilizer import DEConfig, evolve, init_population

GAMMAS = (0.0, GAMMA_C, GAMMA_BV, 1.0)


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    bound: float

    @property
    def passed(self) -> bool:
        return bool(self.value <= self.bound)

    @property
    def status(self) -> str:
        return "pass" if self.passed else "fail"

    def as_row(self) -> tuple:
        return (self.name, self.status, repr(float(self.value)), repr(float(self.bound)))


@dataclass(frozen=True)
class SuiteConfig:
    seed: int = 0
    protocols: int = 10_000
    mc_samples: int = 100_000
    de_repeats: int = 50
    de_iterations: int = 200
    tol_scale: float = 1.0
    workers: int = 1


def _random_params(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    return rng.uniform(-np.pi, np.pi, size=shape)


def _random_qubit_X(n: int, rng: np.random.Generator) -> np.ndarray:
    g = _random_params(rng, (n, 2, 4, 3))
    return unitaries_from_params(g[:, 1], 2) @ dagger(unitaries_from_params(g[:, 0], 2))


def qlinalg_checks(cfg: SuiteConfig) -> Iterator[CheckResult]:
    tol = cfg.tol_scale
    rng = substream(cfg.seed, 1)
    worst = 0.0
    for d in (2, 3, 4):
        u = unitaries_from_params(_random_params(rng, (1000, d * d - 1)), d)
        worst = max(worst, float(np.abs(dagger(u) @ u - np.eye(d)).max()))
    yield CheckResult("qlinalg.unitarity", worst, 1e-10 * tol)

    worst = 0.0
    for d in (2, 3, 4, 5):
        g = su_generators(d).matrices
        gram = np.einsum("iab,jba->ij", g, g)
        worst = max(
            worst,
            float(np.abs(g - dagger(g)).max()),
            float(np.abs(np.trace(g, axis1=1, axis2=2)).max()),
            float(np.abs(gram - 2.0 * np.eye(len(g))).max()),
        )
    yield CheckResult("qlinalg.generators", worst, 1e-12 * tol)

    n = cfg.mc_samples
    z = []
    for d in (2, 3):
        w = haar_random_unitary(d, rng)
        a = np.abs(haar_random_states(d, n, rng)[:, 0]) ** 2
        b = np.abs((haar_random_states(d, n, rng) @ w.T)[:, 0]) ** 2
        z.append(abs(a.mean() - b.mean()) / math.sqrt(a.var(ddof=1) / n + b.var(ddof=1) / n))
    yield CheckResult("qlinalg.haar_left_invariance_z", max(z), 4.0)

    worst = 0.0
    for _ in range(100):
        d = int(rng.integers(2, 5))
        t = haar_random_state(d, rng)
        v = haar_random_state(d, rng)
        rho = 0.7 * np.outer(v, v.conj()) + 0.3 * np.eye(d) / d
        phase = np.exp(1j * rng.uniform(-np.pi, np.pi))
        worst = max(worst, abs(state_fidelity(rho, t) - state_fidelity(rho, phase * t)))
    yield CheckResult("qlinalg.global_phase_invariance", worst, 1e-12 * tol)


def core_checks(cfg: SuiteConfig, fd_pairs: list[tuple[float, float, float]]) -> Iterator[CheckResult]:
    tol = cfg.tol_scale
    rng = substream(cfg.seed, 2)
    worst = 0.0
    for _ in range(200):
        d = int(rng.integers(2, 5))
        proto = random_protocol(d, rng)
        ch = Channel(d, float(rng.uniform(0.0, 1.0)))
        phi = haar_random_state(d, rng)
        worst = max(worst, abs(state_fidelity(simulate_output(proto, ch, phi), phi) - input_fidelity(proto, ch, phi)))
    yield CheckResult("core.consistency_triangle", worst, 1e-10 * tol)

    genomes = _random_params(rng, (cfg.protocols, 2, 4, 3))
    for g in GAMMAS:
        b = fidelity_bounds(Channel(2, g))
        F = batch_analytic_F(genomes, 2, g)
        excess = max(float(b.f_min - F.min()), float(F.max() - b.f_max))
        yield CheckResult(f"core.F_bounds_gamma={g:.6f}", excess, 1e-9 * tol)
    rows = len(GAMMAS) * cfg.protocols
    yield CheckResult("core.F_bounds_sweep_rows", rows, len(GAMMAS) * cfg.protocols)

    worst = 0.0
    for d in (2, 3, 4):
        for _ in range(30):
            proto = random_protocol(d, rng)
            ch = Channel(d, float(rng.choice(GAMMAS)))
            E = entanglement_quantity_E(proto, ch)
            worst = max(worst, abs(analytic_F(proto, ch) - (d * E + 1.0) / (d + 1.0)))
    yield CheckResult("core.F_E_identity", worst, 1e-12 * tol)

    ch = Channel(2, 1.0)
    opt = optimal_protocol(2)
    mc = mc_estimate_FD(opt, ch, MCConfig(cfg.mc_samples, cfg.seed))
    fd_pairs.append((mc.F, mc.D, 4.0 * mc.stderr_F))
    yield CheckResult("core.optimal_mc_D", mc.D, 1e-3)
    yield CheckResult("core.optimal_qubit_D", qubit_D_analytic(opt, ch).D, 1e-12 * tol)


def bloch_checks(cfg: SuiteConfig, fd_pairs: list[tuple[float, float, float]]) -> Iterator[CheckResult]:
    tol = cfg.tol_scale
    rng = substream(cfg.seed, 3)
    X = _random_qubit_X(cfg.protocols, rng)
    R = rotation_matrices(X)
    tr = np.trace(X, axis1=-2, axis2=-1)
    lhs = np.abs(tr) ** 2
    rhs = 1.0 + np.trace(R, axis1=-2, axis2=-1)
    yield CheckResult("bloch.trace_identity", float(np.abs(lhs - rhs).max()), 1e-10 * tol)

    C = covariance_matrices(R)
    deltas = (1.0 - np.trace(R, axis1=-2, axis2=-1) / 3.0) / (2.0 * SQRT5)
    diag = np.diagonal(C, axis1=-2, axis2=-1)
    yield CheckResult("bloch.C_diag_equals_delta_sq", float(np.abs(diag - deltas**2).max()), 1e-10 * tol)
    dd = deltas[..., :, None] * deltas[..., None, :]
    yield CheckResult("bloch.covariance_upper", float((np.abs(C) - dd).max()), 1e-12 * tol)
    yield CheckResult("bloch.covariance_lower", float((-0.5 * dd - C).max()), 1e-12 * tol)

    worst_lin = worst_r2 = worst_tight = worst_var = 0.0
    for g in GAMMAS[1:]:
        D = batch_qubit_D(X, g)
        worst_lin = max(worst_lin, float(np.abs(D - g * batch_qubit_D(X, 1.0)).max()))
        worst_r2 = max(worst_r2, float((D - g * deltas.mean(axis=-1)).max()), float((D - g * DELTA_MAX).max()))
        F = 0.5 + g / 24.0 * np.trace(R, axis1=-2, axis2=-1).sum(axis=-1)
        worst_tight = max(worst_tight, float((D - (0.5 * (1.0 + g) - F) / SQRT5).max()))
        worst_var = max(worst_var, float((D**2 - F * (1.0 - F)).max()))
    yield CheckResult("bloch.D_linear_in_gamma", worst_lin, 1e-12 * tol)
    yield CheckResult("bloch.D_le_gamma_mean_delta", worst_r2, 1e-9 * tol)
    yield CheckResult("bloch.tight_FD_bound", worst_tight, 1e-9 * tol)
    yield CheckResult("bloch.D_sq_le_F_one_minus_F", worst_var, 1e-12 * tol)


def montecarlo_checks(cfg: SuiteConfig, fd_pairs: list[tuple[float, float, float]]) -> Iterator[CheckResult]:
    rng = substream(cfg.seed, 4)
    ch = Channel(2, 1.0)
    proto = random_protocol(2, rng)
    errs = [mc_estimate_FD(proto, ch, MCConfig(n, cfg.seed)).stderr_F for n in (1_000, 10_000, 100_000)]
    dev = max(abs(errs[k] / errs[k + 1] / math.sqrt(10.0) - 1.0) for k in range(2))
    yield CheckResult("montecarlo.stderr_scaling", dev, 0.2)

    for _ in range(5):
        d = int(rng.integers(2, 4))
        r = mc_estimate_FD(random_protocol(d, rng), Channel(d, float(rng.choice(GAMMAS))), MCConfig(20_000, cfg.seed))
        fd_pairs.append((r.F, r.D, 4.0 * r.stderr_F))

    rows = deterioration_experiment(ch, np.linspace(0.0, 1.0, 6), trials=1000, seed=cfg.seed, workers=cfg.workers)
    worst = -math.inf
    for a, b in zip(rows, rows[1:]):
        n = a.trials
        se_F = math.sqrt((a.std_F**2 + b.std_F**2) / n)
        se_D = math.sqrt((a.std_D**2 + b.std_D**2) / n)
        worst = max(worst, (b.mean_F - a.mean_F) - 2.0 * se_F, (a.mean_D - b.mean_D) - 2.0 * se_D)
    yield CheckResult("montecarlo.deterioration_monotone", worst, 0.0)

    F = batch_analytic_F(_random_params(rng, (cfg.protocols, 2, 4, 3)), 2, 1.0)
    z = abs(F.mean() - 0.5) / (F.std(ddof=1) / math.sqrt(len(F)))
    yield CheckResult("montecarlo.uniform_protocol_baseline_z", z, 2.0)

    F = haar_protocol_F(2, 1.0, 2000, rng)
    z = abs(F.mean() - 0.5) / (F.std(ddof=1) / math.sqrt(len(F)))
    yield CheckResult("montecarlo.haar_protocol_baseline_z", z, 2.0)


def stabilizer_checks(cfg: SuiteConfig, fd_pairs: list[tuple[float, float, float]]) -> Iterator[CheckResult]:
    tol = cfg.tol_scale
    ch = Channel(2, 1.0)
    de = DEConfig(iterations=cfg.de_iterations, seed=cfg.seed)
    worst_best = worst_member = worst_tight = 0.0
    for r in range(cfg.de_repeats):
        rng = substream(cfg.seed, 5, r)
        pop = init_population(2, ch, de, rng)
        prev = pop.fitness.copy()
        trace = evolve(pop, ch, de, rng, iterations=0)
        for _ in range(de.iterations):
            evolve(pop, ch, de, rng, iterations=1, trace=trace)
            worst_member = max(worst_member, float((prev - pop.fitness).max()))
            prev = pop.fitness.copy()
        worst_best = max(worst_best, float(-np.diff(trace.best_F).min()))
        F, D = trace.best_F[-1], trace.best_D[-1]
        fd_pairs.append((F, D, 0.0))
        worst_tight = max(worst_tight, D - (ch.f_max - F) / SQRT5)
    yield CheckResult("stabilizer.best_non_decreasing", worst_best, 0.0)
    yield CheckResult("stabilizer.select_never_decreases", worst_member, 0.0)
    yield CheckResult("stabilizer.final_D_tight_bound", worst_tight, 1e-9 * tol)

    def run() -> np.ndarray:
        rng = substream(cfg.seed, 6)
        pop = init_population(2, ch, de, rng)
        evolve(pop, ch, de, rng, iterations=20)
        return pop.genomes

    yield CheckResult("stabilizer.bit_reproducible", float(not np.array_equal(run(), run())), 0.0)


def run_suite(cfg: SuiteConfig = SuiteConfig()) -> list[CheckResult]:
    fd_pairs: list[tuple[float, float, float]] = []
    suites: list[Callable[..., Iterator[CheckResult]]] = [core_checks, bloch_checks, montecarlo_checks, stabilizer_checks]
    out = list(qlinalg_checks(cfg))
    for suite in suites:
        out.extend(suite(cfg, fd_pairs))
    worst = max(D * D - F * (1.0 - F) - slack for F, D, slack in fd_pairs)
    out.append(CheckResult("all.D_sq_le_F_one_minus_F", worst, 1e-12 * cfg.tol_scale))
    return out
