"""Haar-sampling estimates of F and D, control noise and the deterioration sweep."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bloch import batch_qubit_D, qubit_D_analytic
from .core import (
    Channel,
    FDReport,
    Protocol,
    _check_pair,
    analytic_F,
    f_from_trace_weight,
    fidelities,
    optimal_protocol,
    trace_weights,
)
from .errors import ConfigError
from .qlinalg import dagger, haar_random_states, haar_random_unitary, make_rng, substream, unitaries_from_params, wrap_angles


@dataclass(frozen=True)
class MCConfig:
    samples: int = 100_000
    seed: int = 0
    batch: int = 20_000

    def __post_init__(self) -> None:
        if self.samples < 100:
            raise ConfigError(f"need at least 100 samples for a standard error, got {self.samples}")
        if self.batch < 1:
            raise ConfigError("batch must be positive")


@dataclass(frozen=True)
class NoiseModel:
    """Additive control noise ``p -> p + eta * eps`` with ``eps ~ U[-pi, pi]``."""

    eta: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must lie in [0, 1], got {self.eta!r}")

    def sample(self, shape: tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
        return self.eta * rng.uniform(-np.pi, np.pi, size=shape)


def mc_estimate_FD(proto: Protocol, ch: Channel, cfg: MCConfig) -> FDReport:
    """Sample-mean ``F`` and plug-in ``D`` over ``cfg.samples`` Haar inputs.

    Moments are accumulated per batch around a pilot mean and combined with
    ``math.fsum``, so the result does not depend on the batch size beyond
    round-off. ``stderr_D`` uses the delta method on the second central moment.
    """
    _check_pair(proto, ch)
    rng = make_rng(cfg.seed)
    d = proto.dim
    n_total = cfg.samples
    shift = None
    sums: list[list[float]] = [[], [], [], []]
    done = 0
    while done < n_total:
        n = min(cfg.batch, n_total - done)
        f = fidelities(proto.X, ch.gamma, haar_random_states(d, n, rng))
        if shift is None:
            shift = float(f.mean())
        y = f - shift
        yk = np.ones_like(y)
        for k in range(4):
            yk = yk * y
            sums[k].append(float(yk.sum()))
        done += n
    s1, s2, s3, s4 = (math.fsum(s) / n_total for s in sums)
    var = max(s2 - s1 * s1, 0.0)
    mu4 = s4 - 4.0 * s1 * s3 + 6.0 * s1 * s1 * s2 - 3.0 * s1**4
    F = shift + s1
    D = math.sqrt(var)
    stderr_F = math.sqrt(var * n_total / (n_total - 1) / n_total)
    stderr_D = math.sqrt(max(mu4 - var * var, 0.0) / n_total) / (2.0 * D) if D > 0 else 0.0
    return FDReport(
        F=min(max(F, 0.0), 1.0),
        D=min(D, 0.5),
        method="monte_carlo",
        samples=n_total,
        stderr_F=stderr_F,
        stderr_D=stderr_D,
    )


def analytic_FD(proto: Protocol, ch: Channel) -> FDReport:
    """Closed-form ``F`` and, for qubits, closed-form ``D``."""
    if proto.dim != 2:
        raise ValueError("a closed-form D exists only for d=2; use mc_estimate_FD")
    return FDReport(F=analytic_F(proto, ch), D=qubit_D_analytic(proto, ch).D, method="analytic")


def perturb_protocol(proto: Protocol, noise: NoiseModel, rng: np.random.Generator) -> Protocol:
    """Add independent noise to every parameter of every ``U_a`` and ``V_a``."""
    eps = noise.sample(proto.genome.shape, rng)
    return Protocol.from_genome(proto.dim, wrap_angles(proto.genome + eps))


def random_protocol(d: int, rng: np.random.Generator) -> Protocol:
    """Protocol with every parameter uniform on ``[-pi, pi)``."""
    return Protocol.from_genome(d, rng.uniform(-np.pi, np.pi, size=(2, d * d, d * d - 1)))


def haar_protocol_F(d: int, gamma: float, trials: int, rng: np.random.Generator) -> np.ndarray:
    """Average fidelity of protocols whose ``U_a``, ``V_a`` are Haar-random unitaries."""
    out = np.empty(trials)
    for t in range(trials):
        u = np.stack([haar_random_unitary(d, rng) for _ in range(d * d)])
        v = np.stack([haar_random_unitary(d, rng) for _ in range(d * d)])
        out[t] = f_from_trace_weight(trace_weights(v @ dagger(u)), d, gamma)
    return out


@dataclass(frozen=True)
class DeteriorationRow:
    eta: float
    mean_F: float
    std_F: float
    mean_D: float
    std_D: float
    trials: int
    seed: int
    F: np.ndarray = field(repr=False, compare=False, default=None)
    D: np.ndarray = field(repr=False, compare=False, default=None)

    HEADER = ("eta", "mean_F", "std_F", "mean_D", "std_D", "trials", "seed")

    def as_row(self) -> tuple:
        return (self.eta, self.mean_F, self.std_F, self.mean_D, self.std_D, self.trials, self.seed)


def _mean_std(x: np.ndarray) -> tuple[float, float]:
    n = len(x)
    mean = math.fsum(x) / n
    if n < 2:
        return mean, 0.0
    return mean, math.sqrt(math.fsum((x - mean) ** 2) / (n - 1))


def _deterioration_point(
    ch: Channel, eta_index: int, eta: float, trials: int, seed: int, cfg: MCConfig | None
) -> DeteriorationRow:
    d = ch.dim
    base = optimal_protocol(d).genome
    noise = NoiseModel(eta)
    # one stream per (eta, trial): same draws as perturb_protocol with that stream
    genomes = np.stack(
        [wrap_angles(base + noise.sample(base.shape, substream(seed, eta_index, t))) for t in range(trials)]
    )
    u = unitaries_from_params(genomes[:, 0], d)
    v = unitaries_from_params(genomes[:, 1], d)
    X = v @ dagger(u)
    F = f_from_trace_weight(trace_weights(X), d, ch.gamma)
    if d == 2:
        D = batch_qubit_D(X, ch.gamma)
    else:
        if cfg is None:
            raise ConfigError("d > 2 needs an MCConfig for the fidelity deviation")
        D = np.array(
            [
                mc_estimate_FD(Protocol.from_genome(d, g), ch, MCConfig(cfg.samples, int(s), cfg.batch)).D
                for g, s in zip(genomes, np.random.SeedSequence(seed, spawn_key=(eta_index,)).generate_state(trials))
            ]
        )
    mF, sF = _mean_std(F)
    mD, sD = _mean_std(D)
    return DeteriorationRow(eta, mF, sF, mD, sD, trials, seed, F=F, D=D)


def deterioration_experiment(
    ch: Channel,
    eta_grid: Sequence[float],
    trials: int,
    seed: int = 0,
    cfg: MCConfig | None = None,
    workers: int = 1,
) -> list[DeteriorationRow]:
    """Perturb the optimal protocol ``trials`` times per noise level.

    ``F`` is always the closed form; ``D`` is the Bloch closed form for
    qubits and a Monte-Carlo estimate (``cfg``) otherwise. Every trial has its
    own random stream, so results do not depend on ``workers``.
    """
    if trials < 1:
        raise ConfigError("trials must be positive")
    if len(eta_grid) == 0:
        raise ConfigError("eta_grid is empty")
    jobs = [(ch, i, float(eta), trials, seed, cfg) for i, eta in enumerate(eta_grid)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(lambda a: _deterioration_point(*a), jobs))
    return [_deterioration_point(*a) for a in jobs]
