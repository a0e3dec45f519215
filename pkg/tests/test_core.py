import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import protocol_with_corrections
from noisytele.core import (
    GAMMA_BV,
    Channel,
    Protocol,
    analytic_F,
    batch_analytic_F,
    channel_density,
    clip_to_bounds,
    correction_ops,
    entanglement_quantity_E,
    fidelity_bounds,
    input_fidelity,
    is_complete,
    maximally_entangled,
    optimal_protocol,
    schur_mean_xi,
    simulate_output,
    xi_values,
)
from noisytele.errors import ConsistencyError, DimensionError
from noisytele.montecarlo import random_protocol
from noisytele.qlinalg import (
    haar_random_state,
    haar_random_states,
    haar_random_unitary,
    make_rng,
    state_fidelity,
    su_generators,
)

SX, SY, SZ = su_generators(2).matrices
seeds = st.integers(0, 2**32 - 1)
gammas = st.sampled_from([0.0, 1 / 3, GAMMA_BV, 1.0]) | st.floats(0.0, 1.0)


def test_channel_validation():
    with pytest.raises(ValueError):
        Channel(2, 1.5)
    with pytest.raises(DimensionError):
        Channel(1, 0.5)


def test_channel_density_limits():
    psi = maximally_entangled(2)
    assert np.allclose(channel_density(Channel(2, 1.0)), np.outer(psi, psi.conj()), atol=0)
    assert np.allclose(channel_density(Channel(3, 0.0)), np.eye(9) / 9)
    w = np.linalg.eigvalsh(channel_density(Channel(2, 1 / 3)))
    assert np.allclose(sorted(w), [1 / 6, 1 / 6, 1 / 6, 1 / 2])


def test_qubit_optimal_protocol_is_the_pauli_set():
    U = optimal_protocol(2).U
    expected = [np.eye(2), SZ, SX, SX @ SZ]
    # up to phase, and as a set
    for e in expected:
        assert any(abs(np.trace(e.conj().T @ u)) / 2 > 1 - 1e-12 for u in U)


@pytest.mark.parametrize("d", [2, 3, 4, 5])
def test_optimal_protocol_is_complete_with_identity_corrections(d):
    proto = optimal_protocol(d)
    assert is_complete(proto)
    for x in correction_ops(proto):
        assert np.allclose(x, np.eye(d), atol=1e-12)


def test_random_protocol_is_generally_incomplete():
    assert not is_complete(random_protocol(2, make_rng(0)))


def test_global_phase_in_bob_keeps_trace_magnitude():
    proto = optimal_protocol(2)
    X = np.exp(0.3j) * np.stack([np.eye(2)] * 4)
    assert np.allclose(np.abs(np.trace(X, axis1=1, axis2=2)), 2)
    assert analytic_F(protocol_with_corrections(X), Channel(2, 1.0)) == pytest.approx(1.0, abs=1e-12)
    assert analytic_F(proto, Channel(2, 1.0)) == pytest.approx(1.0, abs=1e-12)


def test_random_protocol_traces_bounded():
    X = random_protocol(2, make_rng(1)).X
    assert np.all(np.abs(np.trace(X, axis1=1, axis2=2)) <= 2 + 1e-12)


@settings(max_examples=30)
@given(st.integers(2, 4), gammas, seeds)
def test_optimal_input_fidelity_is_constant(d, g, seed):
    phi = haar_random_state(d, make_rng(seed))
    assert input_fidelity(optimal_protocol(d), Channel(d, g), phi) == pytest.approx(g + (1 - g) / d, abs=1e-12)


@settings(max_examples=30)
@given(st.integers(2, 4), seeds)
def test_white_noise_channel_gives_one_over_d(d, seed):
    rng = make_rng(seed)
    proto = random_protocol(d, rng)
    phi = haar_random_state(d, rng)
    assert input_fidelity(proto, Channel(d, 0.0), phi) == pytest.approx(1 / d, abs=1e-12)
    assert np.allclose(simulate_output(proto, Channel(d, 0.0), phi), np.eye(d) / d)


def test_all_sigma_x_on_zero_state():
    proto = protocol_with_corrections([SX] * 4)
    phi = np.array([1.0, 0.0])
    ch = Channel(2, 1.0)
    assert input_fidelity(proto, ch, phi) == pytest.approx(0.0, abs=1e-12)
    assert state_fidelity(simulate_output(proto, ch, phi), phi) == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=40)
@given(st.integers(2, 4), st.floats(0.0, 1.0), seeds)
def test_consistency_triangle(d, g, seed):
    rng = make_rng(seed)
    proto = random_protocol(d, rng)
    ch = Channel(d, g)
    phi = haar_random_state(d, rng)
    rho = simulate_output(proto, ch, phi)
    assert np.allclose(rho, rho.conj().T, atol=1e-12)
    assert abs(np.trace(rho) - 1) < 1e-10
    assert abs(state_fidelity(rho, phi) - input_fidelity(proto, ch, phi)) < 1e-10


def test_optimal_output_state():
    phi = haar_random_state(3, make_rng(2))
    rho = simulate_output(optimal_protocol(3), Channel(3, 0.6), phi)
    assert np.allclose(rho, 0.6 * np.outer(phi, phi.conj()) + 0.4 * np.eye(3) / 3, atol=1e-12)


def test_analytic_F_examples():
    assert analytic_F(optimal_protocol(2), Channel(2, 1.0)) == pytest.approx(1.0, abs=1e-12)
    assert analytic_F(optimal_protocol(2), Channel(2, GAMMA_BV)) == pytest.approx(0.8535533905932737, abs=1e-12)
    assert analytic_F(protocol_with_corrections([SX] * 4), Channel(2, 1.0)) == pytest.approx(1 / 3, abs=1e-12)


def test_traceless_F_matches_monte_carlo():
    proto = protocol_with_corrections([SX, SY, SZ, SX])
    ch = Channel(2, 1.0)
    f = np.array([input_fidelity(proto, ch, p) for p in haar_random_states(2, 20000, make_rng(3))])
    assert abs(f.mean() - 1 / 3) < 4 * f.std() / math.sqrt(len(f))


@settings(max_examples=40)
@given(st.integers(2, 4), gammas, seeds)
def test_F_within_bounds_and_matches_E(d, g, seed):
    proto = random_protocol(d, make_rng(seed))
    ch = Channel(d, g)
    F = analytic_F(proto, ch)
    b = fidelity_bounds(ch)
    assert b.f_min - 1e-9 <= F <= b.f_max + 1e-9
    E = entanglement_quantity_E(proto, ch)
    assert abs((d * E + 1) / (d + 1) - F) < 1e-12


def test_batch_F_matches_protocol_F():
    rng = make_rng(4)
    for d in (2, 3):
        genomes = rng.uniform(-np.pi, np.pi, size=(6, 2, d * d, d * d - 1))
        batched = batch_analytic_F(genomes, d, 0.8)
        for g, f in zip(genomes, batched):
            assert f == pytest.approx(analytic_F(Protocol.from_genome(d, g), Channel(d, 0.8)), abs=1e-12)


def test_E_examples():
    assert entanglement_quantity_E(optimal_protocol(3), Channel(3, 0.5)) == pytest.approx(0.5 + 0.5 / 9, abs=1e-12)
    assert entanglement_quantity_E(protocol_with_corrections([SX] * 4), Channel(2, 0.5)) == pytest.approx(
        0.5 / 4, abs=1e-12
    )


def test_schur_mean_examples():
    assert schur_mean_xi(np.eye(4)) == pytest.approx(1.0)
    assert schur_mean_xi(SX) == pytest.approx(1 / 3)
    with pytest.raises(DimensionError):
        schur_mean_xi(np.ones((2, 3)))


@pytest.mark.parametrize("d", [2, 3])
def test_schur_mean_matches_monte_carlo(d):
    rng = make_rng(5)
    X = haar_random_unitary(d, rng)
    xi = xi_values(X[None], haar_random_states(d, 100_000, rng))[:, 0]
    assert abs(xi.mean() - schur_mean_xi(X)) < 4 * xi.std() / math.sqrt(len(xi))


def test_fidelity_bounds_examples():
    b = fidelity_bounds(Channel(2, 1 / 3))
    assert (b.f_min, b.f_max) == (pytest.approx(4 / 9), pytest.approx(2 / 3))
    b = fidelity_bounds(Channel(3, 0.0))
    assert b.f_min == pytest.approx(1 / 3) and b.f_max == pytest.approx(1 / 3) and b.d_max == 0
    assert fidelity_bounds(Channel(2, 1.0), 2 / (3 * math.sqrt(5))).d_max == pytest.approx(0.29814239699997197)
    with pytest.raises(ValueError):
        fidelity_bounds(Channel(2, 1.0), -0.1)


def test_clip_to_bounds():
    assert clip_to_bounds(1.0 + 1e-12, 0.0, 1.0) == 1.0
    with pytest.raises(ConsistencyError):
        clip_to_bounds(1.0 + 1e-6, 0.0, 1.0)


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        analytic_F(optimal_protocol(2), Channel(3, 1.0))
    with pytest.raises(DimensionError):
        Protocol(2, np.zeros((4, 3)), np.zeros((4, 2)))


def test_protocol_is_immutable_and_wraps():
    proto = Protocol(2, np.full((4, 3), 4.0), np.zeros((4, 3)))
    assert np.all(proto.alice < np.pi)
    with pytest.raises(ValueError):
        proto.alice[0, 0] = 0.0
    with pytest.raises(ValueError):
        proto.X[0, 0, 0] = 0.0
    assert len(proto.alice_params) == 4 and len(proto.bob_params[0]) == 3


@pytest.mark.parametrize("d", [2, 3])
def test_protocol_text_round_trip(d, tmp_path):
    proto = random_protocol(d, make_rng(6))
    text = proto.to_text()
    lines = text.splitlines()
    assert lines[0] == str(d) and len(lines) == 1 + 2 * d * d
    assert Protocol.from_text("# comment\n" + text) == proto
    path = tmp_path / "p.txt"
    proto.save(path)
    assert Protocol.load(path) == proto


def test_protocol_text_errors():
    with pytest.raises(ValueError):
        Protocol.from_text("")
    with pytest.raises(ValueError):
        Protocol.from_text("2\n0 0 0\n")
