"""Isotropic-channel qudit teleportation: channel, protocol and closed forms."""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np
import numpy.typing as npt

from .errors import ConsistencyError, DimensionError
from .qlinalg import (
    ComplexArray,
    FloatArray,
    ParamVector,
    _check_dim,
    as_pure_state,
    dagger,
    params_from_unitary,
    unitaries_from_params,
    wrap_angles,
)

GAMMA_C = 1.0 / 3.0
GAMMA_BV = 1.0 / math.sqrt(2.0)

# analytic values within this distance of a proven bound are clipped onto it
BOUND_DUST = 1e-9


def clip_to_bounds(value: float, lo: float, hi: float, name: str = "value") -> float:
    """Clip round-off onto ``[lo, hi]``; raise if the violation is real."""
    if value < lo - BOUND_DUST or value > hi + BOUND_DUST:
        raise ConsistencyError(f"{name}={value!r} violates its bound [{lo!r}, {hi!r}]")
    return min(max(value, lo), hi)


@dataclass(frozen=True)
class Channel:
    """Isotropic resource ``gamma |Psi0><Psi0| + (1 - gamma) 1/d^2``."""

    dim: int
    gamma: float

    def __post_init__(self) -> None:
        _check_dim(self.dim)
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma!r}")

    @property
    def f_max(self) -> float:
        return self.gamma + (1.0 - self.gamma) / self.dim

    def density(self) -> ComplexArray:
        return channel_density(self)


def maximally_entangled(d: int) -> ComplexArray:
    """``(1/sqrt(d)) sum_j |jj>`` as a length ``d*d`` vector."""
    return np.eye(d, dtype=np.complex128).reshape(-1) / math.sqrt(d)


def channel_density(ch: Channel) -> ComplexArray:
    d = ch.dim
    psi0 = maximally_entangled(d)
    return ch.gamma * np.outer(psi0, psi0.conj()) + (1.0 - ch.gamma) / d**2 * np.eye(d * d)


class Protocol:
    """Alice's basis unitaries ``U_a`` and Bob's corrections ``V_a``.

    Both families are backed by wrapped parameter arrays of shape
    ``(d*d, d*d - 1)``. Unitaries and the combined corrections
    ``X_a = V_a U_a^dagger`` are built once at construction; instances are
    immutable, so a change of parameters means a new ``Protocol``.
    """

    def __init__(self, d: int, alice: npt.ArrayLike, bob: npt.ArrayLike) -> None:
        d = _check_dim(d)
        shape = (d * d, d * d - 1)
        alice = wrap_angles(np.array(alice, dtype=float))
        bob = wrap_angles(np.array(bob, dtype=float))
        if alice.shape != shape or bob.shape != shape:
            raise DimensionError(f"expected parameter arrays of shape {shape}, got {alice.shape} and {bob.shape}")
        for a in (alice, bob):
            a.setflags(write=False)
        self.dim = d
        self.alice = alice
        self.bob = bob
        self.U = unitaries_from_params(alice, d)
        self.V = unitaries_from_params(bob, d)
        self.X = self.V @ dagger(self.U)
        for m in (self.U, self.V, self.X):
            m.setflags(write=False)

    @classmethod
    def from_genome(cls, d: int, genome: npt.ArrayLike) -> Protocol:
        g = np.asarray(genome, dtype=float)
        return cls(d, g[0], g[1])

    @property
    def genome(self) -> FloatArray:
        """Alice and Bob parameters stacked, shape ``(2, d*d, d*d - 1)``."""
        return np.stack([self.alice, self.bob])

    @property
    def alice_params(self) -> list[ParamVector]:
        return [ParamVector(self.dim, p) for p in self.alice]

    @property
    def bob_params(self) -> list[ParamVector]:
        return [ParamVector(self.dim, p) for p in self.bob]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Protocol):
            return NotImplemented
        return (
            self.dim == other.dim
            and np.array_equal(self.alice, other.alice)
            and np.array_equal(self.bob, other.bob)
        )

    def __repr__(self) -> str:
        return f"Protocol(d={self.dim})"

    def to_text(self) -> str:
        """Flat record: ``d`` then ``2*d*d`` rows of radians, Alice's rows first."""
        rows = [str(self.dim)]
        for p in np.concatenate([self.alice, self.bob]):
            rows.append(" ".join(repr(float(x)) for x in p))
        return "\n".join(rows) + "\n"

    @classmethod
    def from_text(cls, text: str) -> Protocol:
        lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
        if not lines:
            raise ValueError("empty protocol record")
        d = int(lines[0])
        n = d * d
        rows = [[float(x) for x in ln.split()] for ln in lines[1:]]
        if len(rows) != 2 * n or any(len(r) != n - 1 for r in rows):
            raise ValueError(f"protocol record for d={d} needs {2 * n} rows of {n - 1} values")
        arr = np.array(rows)
        return cls(d, arr[:n], arr[n:])

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path: str | Path) -> Protocol:
        return cls.from_text(Path(path).read_text())


def shift_clock(d: int) -> tuple[ComplexArray, ComplexArray]:
    shift = np.roll(np.eye(d, dtype=np.complex128), 1, axis=0)
    clock = np.diag(np.exp(2j * np.pi * np.arange(d) / d))
    return shift, clock


def weyl_heisenberg(d: int) -> ComplexArray:
    """``shift^m clock^n`` indexed by ``m*d + n``."""
    shift, clock = shift_clock(d)
    mp = np.linalg.matrix_power
    return np.stack([mp(shift, m) @ mp(clock, n) for m in range(d) for n in range(d)])


def _symmetric_rotation(d: int, t: float) -> ComplexArray:
    n_sym = d * (d - 1) // 2
    p = np.zeros(d * d - 1)
    p[:n_sym] = t
    return unitaries_from_params(p, d)


@functools.lru_cache(maxsize=None)
def _optimal_params(d: int) -> FloatArray:
    ops = weyl_heisenberg(d)
    # Some clock powers have no logarithm inside the wrapped box for d >= 3;
    # conjugating the whole set by a fixed unitary keeps it orthonormal.
    for t in np.arange(0.0, np.pi, 0.05):
        k = _symmetric_rotation(d, t) if t > 0 else np.eye(d)
        try:
            params = np.stack([params_from_unitary(k @ w @ k.conj().T) for w in ops])
        except ValueError:
            continue
        params[np.abs(params) < 1e-12] = 0.0
        params.setflags(write=False)
        return params
    raise RuntimeError(f"no wrapped parametrization of the Weyl-Heisenberg set for d={d}")


def optimal_protocol(d: int) -> Protocol:
    """Weyl-Heisenberg measurement basis with ``V_a = U_a`` (all ``X_a = 1``)."""
    d = _check_dim(d)
    params = _optimal_params(d)
    proto = Protocol(d, params, params)
    if not is_complete(proto):
        raise ConsistencyError(f"optimal protocol for d={d} is not a complete basis")
    return proto


def measurement_basis(proto: Protocol) -> ComplexArray:
    """Rows are ``|Psi_a> = (U_a x 1)|Psi0>``."""
    d = proto.dim
    return proto.U.reshape(d * d, d * d) / math.sqrt(d)


def is_complete(proto: Protocol, tol: float = 1e-9) -> bool:
    """Whether ``sum_a |Psi_a><Psi_a|`` is the identity on ``d*d`` within ``tol``."""
    basis = measurement_basis(proto)
    proj = basis.T @ basis.conj()
    return bool(np.max(np.abs(proj - np.eye(proj.shape[0]))) <= tol)


def correction_ops(proto: Protocol) -> list[ComplexArray]:
    return list(proto.X)


def _check_pair(proto: Protocol, ch: Channel) -> None:
    if proto.dim != ch.dim:
        raise DimensionError(f"protocol d={proto.dim} vs channel d={ch.dim}")


def xi_values(X: ComplexArray, states: ComplexArray) -> FloatArray:
    """``|<phi|X_a|phi>|^2`` for states ``(n, d)`` and corrections ``(k, d, d)`` -> ``(n, k)``."""
    amp = np.einsum("na,kab,nb->nk", states.conj(), X, states)
    return amp.real**2 + amp.imag**2


def fidelities(X: ComplexArray, gamma: float, states: ComplexArray) -> FloatArray:
    """Input-state fidelity for each row of ``states``."""
    d = X.shape[-1]
    return gamma / d**2 * xi_values(X, states).sum(axis=1) + (1.0 - gamma) / d


def input_fidelity(proto: Protocol, ch: Channel, phi: npt.ArrayLike) -> float:
    _check_pair(proto, ch)
    phi = as_pure_state(phi)
    if phi.shape[0] != proto.dim:
        raise DimensionError(f"state of dimension {phi.shape[0]} for d={proto.dim}")
    f = float(fidelities(proto.X, ch.gamma, phi[None, :])[0])
    lo = (1.0 - ch.gamma) / ch.dim
    return clip_to_bounds(f, lo, ch.f_max, "f")


def simulate_output(proto: Protocol, ch: Channel, phi: npt.ArrayLike) -> ComplexArray:
    """Bob's state ``(gamma/d^2) sum_a X_a rho X_a^dag + (1 - gamma)/d 1``."""
    _check_pair(proto, ch)
    phi = as_pure_state(phi)
    d = proto.dim
    if phi.shape[0] != d:
        raise DimensionError(f"state of dimension {phi.shape[0]} for d={d}")
    rho = np.outer(phi, phi.conj())
    twirled = np.einsum("kab,bc,kdc->ad", proto.X, rho, proto.X.conj())
    return ch.gamma / d**2 * twirled + (1.0 - ch.gamma) / d * np.eye(d)


def trace_weights(X: ComplexArray) -> FloatArray:
    """``sum_a |tr X_a|^2`` for corrections stacked as ``(..., k, d, d)``."""
    tr = np.trace(X, axis1=-2, axis2=-1)
    return (tr.real**2 + tr.imag**2).sum(axis=-1)


def f_from_trace_weight(weight: npt.ArrayLike, d: int, gamma: float) -> FloatArray:
    f_max = gamma + (1.0 - gamma) / d
    return f_max - gamma / (d + 1) * (d - np.asarray(weight) / d**3)


def batch_analytic_F(genomes: npt.ArrayLike, d: int, gamma: float) -> FloatArray:
    """Average fidelity for stacked genomes of shape ``(..., 2, d*d, d*d - 1)``."""
    g = np.asarray(genomes, dtype=float)
    u = unitaries_from_params(g[..., 0, :, :], d)
    v = unitaries_from_params(g[..., 1, :, :], d)
    # tr(V U^dag) = sum_ab V_ab conj(U_ab)
    tr = np.einsum("...ab,...ab->...", v, u.conj())
    weight = (tr.real**2 + tr.imag**2).sum(axis=-1)
    return f_from_trace_weight(weight, d, gamma)


def fidelity_bounds(ch: Channel, mean_delta: float = 0.0) -> FidelityBounds:
    if mean_delta < 0:
        raise ValueError("mean_delta must be non-negative")
    d, g = ch.dim, ch.gamma
    return FidelityBounds(f_min=1.0 / d - g / (d * (d + 1)), f_max=ch.f_max, d_max=g * mean_delta)


def analytic_F(proto: Protocol, ch: Channel) -> float:
    """Closed-form average fidelity from ``sum_a |tr X_a|^2``."""
    _check_pair(proto, ch)
    F = float(f_from_trace_weight(trace_weights(proto.X), ch.dim, ch.gamma))
    b = fidelity_bounds(ch)
    return clip_to_bounds(F, b.f_min, b.f_max, "F")


def entanglement_quantity_E(proto: Protocol, ch: Channel) -> float:
    """Channel overlap averaged over the corrected basis; ``F = (d E + 1)/(d + 1)``.

    Bob's corrections are folded in, i.e. ``|tr X_a|^2`` replaces
    ``|<Psi0|Psi_a>|^2 d^2``.
    """
    _check_pair(proto, ch)
    d, g = ch.dim, ch.gamma
    E = g / d**4 * float(trace_weights(proto.X)) + (1.0 - g) / d**2
    return clip_to_bounds(E, (1.0 - g) / d**2, g + (1.0 - g) / d**2, "E")


def schur_mean_xi(X: npt.ArrayLike, d: int | None = None) -> float:
    """Haar average of ``|<phi|X|phi>|^2``: ``(|tr X|^2 + d) / (d (d + 1))``."""
    X = np.asarray(X, dtype=np.complex128)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {X.shape}")
    if d is None:
        d = X.shape[0]
    elif d != X.shape[0]:
        raise DimensionError(f"matrix of size {X.shape[0]} for d={d}")
    return (abs(np.trace(X)) ** 2 + d) / (d * (d + 1))


@dataclass(frozen=True)
class FidelityBounds:
    f_min: float
    f_max: float
    d_max: float

    def __post_init__(self) -> None:
        if self.f_min > self.f_max or self.d_max < 0:
            raise ValueError(f"inconsistent bounds {self}")


@dataclass(frozen=True)
class FDReport:
    """Average fidelity ``F`` and fidelity deviation ``D`` with provenance."""

    F: float
    D: float
    method: Literal["analytic", "monte_carlo"]
    samples: int = 0
    stderr_F: float = 0.0
    stderr_D: float = 0.0

    def __post_init__(self) -> None:
        if self.method not in ("analytic", "monte_carlo"):
            raise ValueError(f"unknown method {self.method!r}")
        if not (-BOUND_DUST <= self.F <= 1.0 + BOUND_DUST):
            raise ConsistencyError(f"F={self.F!r} outside [0, 1]")
        if not (-BOUND_DUST <= self.D <= 0.5 + BOUND_DUST):
            raise ConsistencyError(f"D={self.D!r} outside [0, 1/2]")
