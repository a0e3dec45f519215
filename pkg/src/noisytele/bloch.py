"""Exact qubit analysis in the Bloch picture.

For ``d = 2`` each correction ``X_a`` acts on Bloch vectors as a rotation
``R_a`` with ``[R_a]_jk = tr(X_a s_j X_a^dag s_k) / 2``. The per-input
fidelity is then a quadratic form on the unit sphere. Its first two moments
come from fourth-order isotropic tensors, which gives closed forms for
``F``, the per-outcome deviations ``Delta_a`` and their covariances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from .core import Channel, Protocol, _check_pair, clip_to_bounds
from .errors import DimensionError
from .qlinalg import FloatArray, is_unitary, su_generators

PAULI = su_generators(2).matrices
SQRT5 = math.sqrt(5.0)
DELTA_MAX = 2.0 / (3.0 * SQRT5)


def rotation_matrices(X: npt.ArrayLike) -> FloatArray:
    """Rotation matrices for stacked 2x2 unitaries, shape ``(..., 3, 3)``."""
    X = np.asarray(X, dtype=np.complex128)
    return 0.5 * np.einsum("...ab,jbc,...dc,kda->...jk", X, PAULI, X.conj(), PAULI).real


@dataclass(frozen=True)
class BlochRotation:
    """Proper rotation with angle in ``[0, pi]`` and unit axis.

    ``X ~ exp(-i angle/2 axis.sigma)`` up to phase; ``matrix`` is the
    transpose of the active rotation ``rho -> X rho X^dag`` on Bloch vectors.
    """

    matrix: FloatArray
    angle: float
    axis: FloatArray

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix))


def bloch_rotation(X: npt.ArrayLike) -> BlochRotation:
    X = np.asarray(X, dtype=np.complex128)
    if X.shape != (2, 2):
        raise DimensionError(f"expected a 2x2 matrix, got shape {X.shape}")
    if not is_unitary(X):
        raise ValueError("bloch_rotation needs a unitary matrix")
    R = rotation_matrices(X)
    cos = float(np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0))
    angle = math.acos(cos)
    active = R.T
    if abs(math.sin(angle)) >= 1e-6:
        axis = np.array(
            [active[2, 1] - active[1, 2], active[0, 2] - active[2, 0], active[1, 0] - active[0, 1]]
        ) / (2.0 * math.sin(angle))
    else:
        # near 0 or pi the antisymmetric part vanishes; (R + 1)/2 -> n n^T at pi
        w, v = np.linalg.eigh(0.5 * (0.5 * (R + R.T) + np.eye(3)))
        axis = v[:, -1]
    axis = axis / np.linalg.norm(axis)
    return BlochRotation(R, angle, axis)


def _matrix(R: BlochRotation | npt.ArrayLike) -> FloatArray:
    return R.matrix if isinstance(R, BlochRotation) else np.asarray(R, dtype=float)


def delta_alpha(R: BlochRotation | npt.ArrayLike) -> float:
    """Deviation of ``xi`` over inputs: ``(1 - tr R / 3) / (2 sqrt 5)``."""
    return (1.0 - float(np.trace(_matrix(R))) / 3.0) / (2.0 * SQRT5)


def qubit_covariance(Ra: BlochRotation | npt.ArrayLike, Rb: BlochRotation | npt.ArrayLike) -> float:
    """Covariance of ``xi_a`` and ``xi_b`` over Haar inputs.

    With ``E[phi_i phi_j phi_k phi_l] = (d_ij d_kl + d_ik d_jl + d_il d_jk)/15``
    on the unit sphere this is
    ``[3 tr(A B^T) + 3 tr(A B) - 2 tr A tr B] / 180``.
    """
    A, B = _matrix(Ra), _matrix(Rb)
    ta, tb = np.trace(A), np.trace(B)
    return float((3.0 * np.sum(A * B) + 3.0 * np.sum(A * B.T) - 2.0 * ta * tb) / 180.0)


def covariance_matrices(R: FloatArray) -> FloatArray:
    """Pairwise covariances for rotations ``(..., k, 3, 3)`` -> ``(..., k, k)``."""
    t = np.trace(R, axis1=-2, axis2=-1)
    abt = np.einsum("...ajk,...bjk->...ab", R, R)
    ab = np.einsum("...ajk,...bkj->...ab", R, R)
    return (3.0 * abt + 3.0 * ab - 2.0 * t[..., :, None] * t[..., None, :]) / 180.0


def batch_qubit_D(X: npt.ArrayLike, gamma: float) -> FloatArray:
    """Qubit fidelity deviation for stacked corrections ``(..., 4, 2, 2)``."""
    C = covariance_matrices(rotation_matrices(X))
    total = C.sum(axis=(-2, -1))
    # a variance: negative values are round-off only
    return gamma / 4.0 * np.sqrt(np.clip(total, 0.0, None))


def _check_qubit(proto: Protocol, ch: Channel) -> None:
    _check_pair(proto, ch)
    if proto.dim != 2:
        raise DimensionError(f"qubit formulas need d=2, got d={proto.dim}")


def qubit_F(proto: Protocol, ch: Channel) -> float:
    _check_qubit(proto, ch)
    F = 0.5 + ch.gamma / 24.0 * float(np.trace(rotation_matrices(proto.X), axis1=-2, axis2=-1).sum())
    return clip_to_bounds(F, 0.5 - ch.gamma / 6.0, 0.5 + ch.gamma / 2.0, "F")


@dataclass(frozen=True)
class QubitDeviationReport:
    F: float
    D: float
    deltas: FloatArray
    covariance: FloatArray

    @property
    def mean_delta(self) -> float:
        return float(np.mean(self.deltas))


def qubit_D_analytic(proto: Protocol, ch: Channel) -> QubitDeviationReport:
    """``D = (gamma/4) sqrt(sum_ab C_ab)`` from the Bloch covariance matrix."""
    _check_qubit(proto, ch)
    R = rotation_matrices(proto.X)
    C = covariance_matrices(R)
    C = 0.5 * (C + C.T)
    deltas = np.array([delta_alpha(r) for r in R])
    D = float(batch_qubit_D(proto.X, ch.gamma))
    D = clip_to_bounds(D, 0.0, ch.gamma * float(deltas.mean()), "D")
    return QubitDeviationReport(F=qubit_F(proto, ch), D=D, deltas=deltas, covariance=C)


def tight_bound_check(F: float, D: float, ch: Channel) -> tuple[bool, float]:
    """Check ``D <= (F_max - F)/sqrt(5)``; returns ``(holds, margin)``."""
    if ch.dim != 2:
        raise DimensionError("the tight F-D bound is a qubit result")
    margin = (0.5 * (1.0 + ch.gamma) - F) / SQRT5 - D
    return margin >= -1e-9, margin
