"""Small dense complex linear algebra for qudit teleportation.

Matrices and states are plain ``numpy`` arrays. The helpers here validate
them, build the generalized Gell-Mann basis, map control parameters to
unitaries and draw Haar-random states and unitaries.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt
import scipy.linalg

from .errors import DimensionError

ComplexArray = npt.NDArray[np.complex128]
FloatArray = npt.NDArray[np.float64]

TWO_PI = 2.0 * np.pi


def make_rng(seed: int | np.random.SeedSequence | None = None) -> np.random.Generator:
    """Return a PCG64 generator for ``seed``."""
    return np.random.Generator(np.random.PCG64(seed))


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator addressed by ``(seed, key)``.

    Streams with different keys are statistically independent and do not
    depend on the order in which they are created.
    """
    return make_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))


def _check_dim(d: int) -> int:
    if int(d) != d or d < 2:
        raise DimensionError(f"qudit dimension must be an integer >= 2, got {d!r}")
    return int(d)


def wrap_angles(x: npt.ArrayLike) -> FloatArray:
    """Wrap angles into ``[-pi, pi)``; values already inside are returned bit-for-bit."""
    x = np.asarray(x, dtype=float)
    w = np.mod(x + np.pi, TWO_PI) - np.pi
    # mod can round up to exactly 2*pi for tiny negative inputs
    w = np.where(w >= np.pi, w - TWO_PI, w)
    return np.where((x >= -np.pi) & (x < np.pi), x, w)


def dagger(m: ComplexArray) -> ComplexArray:
    return np.conj(np.swapaxes(m, -1, -2))


def is_unitary(m: ComplexArray, atol: float = 1e-10) -> bool:
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        return False
    return bool(np.allclose(m @ dagger(m), np.eye(m.shape[0]), atol=atol, rtol=0.0))


def is_hermitian(m: ComplexArray, atol: float = 1e-12) -> bool:
    m = np.asarray(m)
    return m.ndim == 2 and m.shape[0] == m.shape[1] and bool(np.allclose(m, dagger(m), atol=atol, rtol=0.0))


def as_pure_state(vec: npt.ArrayLike, atol: float = 1e-12) -> ComplexArray:
    """Validate a normalized state vector and return it as complex128."""
    v = np.asarray(vec, dtype=np.complex128)
    if v.ndim != 1 or v.shape[0] < 2:
        raise DimensionError(f"a pure state must be a vector of length >= 2, got shape {v.shape}")
    norm2 = float(np.vdot(v, v).real)
    if abs(norm2 - 1.0) > atol:
        raise ValueError(f"state is not normalized: squared norm {norm2!r}")
    return v


def as_density_matrix(m: npt.ArrayLike, subnormalized: bool = False) -> ComplexArray:
    """Validate a density matrix (Hermitian, unit trace unless ``subnormalized``)."""
    rho = np.asarray(m, dtype=np.complex128)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise DimensionError(f"density matrix must be square, got shape {rho.shape}")
    if not is_hermitian(rho):
        raise ValueError("density matrix is not Hermitian")
    if not subnormalized and abs(np.trace(rho).real - 1.0) > 1e-10:
        raise ValueError(f"density matrix trace {np.trace(rho).real!r} != 1")
    return rho


@dataclass(frozen=True)
class GeneratorSet:
    """Generalized Gell-Mann basis of su(d), ``tr(g_i g_j) = 2 delta_ij``.

    ``matrices`` has shape ``(d*d - 1, d, d)``: the symmetric generators first,
    then the antisymmetric ones, then the ``d - 1`` diagonal ones. For ``d = 2``
    this is ``(sigma_x, sigma_y, sigma_z)``.
    """

    dim: int
    matrices: ComplexArray

    def __len__(self) -> int:
        return self.matrices.shape[0]

    def __iter__(self):
        return iter(self.matrices)

    def __getitem__(self, i: int) -> ComplexArray:
        return self.matrices[i]


@functools.lru_cache(maxsize=None)
def _gell_mann(d: int) -> ComplexArray:
    sym, asym, diag = [], [], []
    for j in range(d):
        for k in range(j + 1, d):
            s = np.zeros((d, d), dtype=np.complex128)
            s[j, k] = s[k, j] = 1.0
            sym.append(s)
            a = np.zeros((d, d), dtype=np.complex128)
            a[j, k] = -1j
            a[k, j] = 1j
            asym.append(a)
    for l in range(1, d):
        entries = np.zeros(d)
        entries[:l] = 1.0
        entries[l] = -l
        diag.append(np.diag(np.sqrt(2.0 / (l * (l + 1))) * entries).astype(np.complex128))
    g = np.stack(sym + asym + diag)
    g.setflags(write=False)
    return g


def su_generators(d: int) -> GeneratorSet:
    """Generalized Gell-Mann matrices for dimension ``d``."""
    d = _check_dim(d)
    return GeneratorSet(d, _gell_mann(d))


@dataclass(frozen=True)
class ParamVector:
    """Real control vector of length ``d*d - 1``, stored wrapped into ``[-pi, pi)``."""

    dim: int
    values: FloatArray

    def __post_init__(self) -> None:
        d = _check_dim(self.dim)
        v = wrap_angles(np.array(self.values, dtype=float).reshape(-1))
        if v.shape[0] != d * d - 1:
            raise DimensionError(f"expected {d * d - 1} parameters for d={d}, got {v.shape[0]}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.shape[0]


def unitaries_from_params(params: npt.ArrayLike, d: int) -> ComplexArray:
    """Vectorized :func:`unitary_from_params` over leading axes.

    ``params`` has shape ``(..., d*d - 1)``; the result has shape ``(..., d, d)``.
    For a qubit ``p = (theta/2) n`` rotates the Bloch sphere by ``theta`` about ``n``.
    """
    d = _check_dim(d)
    p = np.asarray(params, dtype=float)
    if p.shape[-1] != d * d - 1:
        raise DimensionError(f"expected {d * d - 1} parameters for d={d}, got {p.shape[-1]}")
    if d == 2:
        return _su2_exp(p)
    h = np.tensordot(p, _gell_mann(d), axes=([-1], [0]))
    w, v = np.linalg.eigh(h)
    return np.einsum("...ab,...b,...cb->...ac", v, np.exp(-1j * w), v.conj())


def _su2_exp(p: FloatArray) -> ComplexArray:
    # exp(-i p.sigma) = cos|p| 1 - i sin|p| (p/|p|).sigma
    r = np.linalg.norm(p, axis=-1)
    c = np.cos(r)
    s = np.sinc(r / np.pi)  # sin(r)/r, finite at r = 0
    x, y, z = (s * p[..., k] for k in range(3))
    out = np.empty(p.shape[:-1] + (2, 2), dtype=np.complex128)
    out[..., 0, 0] = c - 1j * z
    out[..., 0, 1] = -1j * x - y
    out[..., 1, 0] = -1j * x + y
    out[..., 1, 1] = c + 1j * z
    return out


def unitary_from_params(p: ParamVector | npt.ArrayLike, gens: GeneratorSet) -> ComplexArray:
    """``exp(-i p.G)`` for one parameter vector, via eigendecomposition."""
    values = p.values if isinstance(p, ParamVector) else np.asarray(p, dtype=float)
    if isinstance(p, ParamVector) and p.dim != gens.dim:
        raise DimensionError(f"parameter dimension {p.dim} does not match generators ({gens.dim})")
    if values.shape != (len(gens),):
        raise DimensionError(f"expected {len(gens)} parameters, got shape {values.shape}")
    h = np.tensordot(values, gens.matrices, axes=(0, 0))
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * w)) @ v.conj().T


def params_from_unitary(u: ComplexArray, max_branch: int = 2) -> FloatArray:
    """Wrapped parameters ``p`` with ``unitary_from_params(p)`` equal to ``u`` up to phase.

    ``exp`` is not periodic in ``p`` for ``d > 2``, so wrapping an arbitrary
    logarithm can land on a different unitary. Eigenphase branches (each
    shifted by up to ``max_branch`` turns) are searched for a logarithm that
    survives wrapping; the smallest one is returned. Raises ``ValueError`` if
    no branch does.
    """
    u = np.asarray(u, dtype=np.complex128)
    d = _check_dim(u.shape[0])
    # complex Schur form of a normal matrix is diagonal with unitary vectors
    t, evecs = scipy.linalg.schur(u, output="complex")
    phases = np.angle(np.diagonal(t))
    gens = _gell_mann(d)

    def candidate(turns: FloatArray) -> tuple[FloatArray, float] | None:
        theta = -(phases + TWO_PI * turns)
        p = 0.5 * np.einsum("ab,jba->j", (evecs * theta) @ evecs.conj().T, gens).real
        norm = float(np.max(np.abs(p)))
        p = wrap_angles(p)
        overlap = abs(np.trace(u.conj().T @ unitaries_from_params(p, d))) / d
        return (p, norm) if overlap > 1.0 - 1e-10 else None

    principal = candidate(np.zeros(d))
    if principal is not None:
        return principal[0]
    best, best_norm = None, np.inf
    shifts = np.arange(-max_branch, max_branch + 1)
    for turns in itertools.product(shifts, repeat=d):
        found = candidate(np.array(turns, dtype=float))
        if found is not None and found[1] < best_norm:
            best, best_norm = found
    if best is None:
        raise ValueError("no logarithm branch of u survives wrapping into [-pi, pi)")
    return best


def haar_random_states(d: int, n: int, rng: np.random.Generator) -> ComplexArray:
    """``n`` Haar-random pure states as rows of an ``(n, d)`` array."""
    d = _check_dim(d)
    # real and imaginary parts interleaved per sample: n draws then m draws
    # consume the stream exactly like one draw of n + m
    g = rng.standard_normal((n, d, 2))
    z = g[..., 0] + 1j * g[..., 1]
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def haar_random_state(d: int, rng: np.random.Generator) -> ComplexArray:
    return haar_random_states(d, 1, rng)[0]


def haar_random_unitary(d: int, rng: np.random.Generator) -> ComplexArray:
    """Haar-random unitary from a Ginibre matrix and a phase-fixed QR."""
    d = _check_dim(d)
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    diag = np.diagonal(r)
    return q * (diag / np.abs(diag))


def state_fidelity(rho: ComplexArray, target: ComplexArray) -> float:
    """Fidelity ``<t|rho|t>`` of a density matrix with a pure target."""
    rho = np.asarray(rho, dtype=np.complex128)
    t = np.asarray(target, dtype=np.complex128)
    if rho.shape != (t.shape[0], t.shape[0]):
        raise DimensionError(f"state of dimension {t.shape[0]} vs density matrix {rho.shape}")
    val = np.vdot(t, rho @ t)
    if abs(val.imag) > 1e-12:
        raise ValueError("density matrix is not Hermitian")
    f = float(val.real)
    if f < -1e-10 or f > 1.0 + 1e-10:
        raise ValueError(f"fidelity {f!r} outside [0, 1]")
    return min(max(f, 0.0), 1.0)
