from math import factorial

import numpy as np
import pytest

from hetune.pid import initial_theta, pid_tf
from hetune.plant import (IllPosedLoopError, StateSpace, TransferFunction, benchmark_plant,
                          closed_loop, discretize_zoh, pade_delay, step_response, tf_to_ss)


def series(tf, order):
    """Taylor coefficients of num/den at s = 0 by power-series division."""
    num = np.zeros(order + 1)
    num[: min(len(tf.num), order + 1)] = tf.num[: order + 1]
    den = np.zeros(order + 1)
    den[: min(len(tf.den), order + 1)] = tf.den[: order + 1]
    out = np.zeros(order + 1)
    for k in range(order + 1):
        out[k] = (num[k] - np.dot(den[1: k + 1], out[:k][::-1])) / den[0]
    return out


def pade_by_linear_system(T, m):
    """[m/m] Padé of exp(-T s) from the defining linear equations."""
    c = np.array([(-T) ** k / factorial(k) for k in range(2 * m + 1)])
    M = np.array([[c[k - j] for j in range(1, m + 1)] for k in range(m + 1, 2 * m + 1)])
    b = np.concatenate([[1.0], np.linalg.solve(M, -c[m + 1: 2 * m + 1])])
    a = np.array([sum(b[j] * c[k - j] for j in range(k + 1)) for k in range(m + 1)])
    return a, b


def rk4_step_response(ss, r_hat, dt, n_samples, substeps=100):
    """Classical RK4 at ``dt/substeps``; for x' = Ax + b one RK4 step is exactly
    x <- R x + S b with the truncated series below."""
    h = dt / substeps
    A, b = ss.A, ss.B[:, 0] * r_hat
    hA = h * A
    I = np.eye(len(A))
    R = I + hA @ (I + hA / 2 @ (I + hA / 3 @ (I + hA / 4)))
    S = h * (I + hA / 2 @ (I + hA / 3 @ (I + hA / 4)))
    Sb = S @ b
    x = np.zeros(ss.n_states)
    y = np.empty(n_samples)
    for k in range(n_samples):
        y[k] = ss.C[0] @ x + ss.D[0, 0] * r_hat
        for _ in range(substeps):
            x = R @ x + Sb
    return y


def test_benchmark_plants():
    g3 = benchmark_plant("G3")
    np.testing.assert_array_equal(g3.num, [1, -5])
    np.testing.assert_array_equal(g3.den, [1, 30, 200])
    for pid in ("G1", "G2", "G3"):
        assert benchmark_plant(pid).dc_gain() == 1.0
    with pytest.raises(ValueError):
        benchmark_plant("G4")


def test_g2_binomial_denominator():
    want = np.array([1.0])
    for _ in range(8):
        want = np.polynomial.polynomial.polymul(want, [1.0, 0.01])
    np.testing.assert_allclose(benchmark_plant("G2").den, want, rtol=1e-15, atol=0)


def test_pade_matches_linear_system_and_series():
    tf = pade_delay(5.0, 3)
    a, b = pade_by_linear_system(5.0, 3)
    np.testing.assert_allclose(tf.num / tf.den[0], a, rtol=1e-12)
    np.testing.assert_allclose(tf.den / tf.den[0], b, rtol=1e-12)
    want = np.array([(-5.0) ** k / factorial(k) for k in range(7)])
    np.testing.assert_allclose(series(tf, 6), want, rtol=1e-12, atol=0)


@pytest.mark.parametrize("order", [1, 2, 4, 5])
def test_pade_other_orders(order):
    T = 0.7
    want = np.array([(-T) ** k / factorial(k) for k in range(2 * order + 1)])
    np.testing.assert_allclose(series(pade_delay(T, order), 2 * order), want, rtol=1e-11, atol=1e-15)


def test_pade_allpass():
    tf = pade_delay(5.0, 3)
    assert tf(0.0) == 1.0
    w = np.logspace(-3, 3, 25)
    np.testing.assert_allclose(np.abs(tf(1j * w)), 1.0, rtol=1e-12)
    with pytest.raises(ValueError):
        pade_delay(0.0)


def test_first_order_realization():
    ss = tf_to_ss(TransferFunction([1.0], [1.0, 1.0]))
    assert (ss.A.tolist(), ss.B.tolist(), ss.C.tolist(), ss.D.tolist()) == ([[-1.0]], [[1.0]], [[1.0]], [[0.0]])
    assert tf_to_ss(benchmark_plant("G3")).n_states == 2
    with pytest.raises(ValueError):
        tf_to_ss(TransferFunction([0, 0, 1.0], [1.0, 1.0]))


@pytest.mark.parametrize("plant_id", ["G1", "G2", "G3"])
def test_realization_frequency_response(plant_id):
    tf = benchmark_plant(plant_id)
    ss = tf_to_ss(tf)
    for w in np.logspace(-2, 2, 20):
        want = tf(1j * w)
        assert abs(ss.freq_response(1j * w) - want) <= 1e-9 * max(1.0, abs(want))


def test_biproper_realization():
    tf = pid_tf(initial_theta("G1"))
    ss = tf_to_ss(tf)
    for s in (0.3j, 2j, 1 + 1j):
        assert abs(ss.freq_response(s) - tf(s)) <= 1e-9 * abs(tf(s))


def test_closed_loop_static_gain():
    unit = StateSpace(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), [[1.0]])
    loop = closed_loop(unit, unit)
    assert loop.D[0, 0] == 0.5
    with pytest.raises(IllPosedLoopError):
        minus = StateSpace(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), [[-1.0]])
        closed_loop(unit, minus)


@pytest.mark.parametrize("plant_id", ["G1", "G2", "G3"])
def test_closed_loop_with_integral_action(plant_id):
    loop = closed_loop(tf_to_ss(benchmark_plant(plant_id)), tf_to_ss(pid_tf(initial_theta(plant_id))))
    assert loop.is_stable()
    # r -> y DC gain: -C A^-1 B + D
    dc = -loop.C[0] @ np.linalg.solve(loop.A, loop.B[:, 0]) + loop.D[0, 0]
    assert dc == pytest.approx(1.0, abs=1e-9)


def test_closed_loop_matches_transfer_function():
    plant, ctrl = benchmark_plant("G3"), pid_tf(initial_theta("G3"))
    loop = closed_loop(tf_to_ss(plant), tf_to_ss(ctrl))
    for s in (0.1j, 1j, 3 + 2j):
        L = plant(s) * ctrl(s)
        assert abs(loop.freq_response(s, 0) - L / (1 + L)) <= 1e-9 * abs(L / (1 + L))
        # measured output y + v seen from the noise input
        assert abs(loop.freq_response(s, 1) - 1 / (1 + L)) <= 1e-9 * abs(1 / (1 + L))


def test_zoh_scalar_examples():
    d = discretize_zoh(StateSpace([[-1.0]], [[1.0]], [[1.0]], [[0.0]]), 0.1)
    assert d.Ad[0, 0] == pytest.approx(np.exp(-0.1), rel=1e-15)
    d = discretize_zoh(StateSpace([[0.0]], [[1.0]], [[1.0]], [[0.0]]), 0.25)
    assert (d.Ad[0, 0], d.Bd[0, 0]) == (1.0, 0.25)
    with pytest.raises(ValueError):
        discretize_zoh(StateSpace([[0.0]], [[1.0]], [[1.0]], [[0.0]]), 0.0)


def test_zoh_matches_rk4_on_g1_loop():
    loop = closed_loop(tf_to_ss(benchmark_plant("G1")), tf_to_ss(pid_tf(initial_theta("G1"))))
    y = step_response(discretize_zoh(loop, 0.01), 1.0, 1000)
    ref = rk4_step_response(StateSpace(loop.A, loop.B[:, :1], loop.C, loop.D[:, :1]), 1.0, 0.01, 1000)
    assert np.max(np.abs(y - ref)) <= 1e-6


@pytest.mark.parametrize("seed", range(3))
def test_zoh_matches_rk4_random_system(seed):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(4, 4))
    A = M - (max(np.linalg.eigvals(M).real) + 0.5) * np.eye(4)
    ss = StateSpace(A, rng.normal(size=(4, 2)), rng.normal(size=(1, 4)), [[0.0, 1.0]])
    y = step_response(discretize_zoh(ss, 0.01), 1.0, 1000)
    ref = rk4_step_response(StateSpace(A, ss.B[:, :1], ss.C, [[0.0]]), 1.0, 0.01, 1000)
    assert np.max(np.abs(y - ref)) <= 1e-6


def test_step_response_contract():
    loop = closed_loop(tf_to_ss(benchmark_plant("G2")), tf_to_ss(pid_tf(initial_theta("G2"))))
    d = discretize_zoh(loop, 1e-3)
    y = step_response(d, 1.0, 1500)
    assert y[0] == pytest.approx(loop.D[0, 0], abs=1e-15)
    assert abs(y[-1] - 1.0) <= 1e-3            # N dt = 3 x settling estimate
    np.testing.assert_allclose(step_response(d, 2.0, 1500), 2 * y, rtol=1e-12, atol=1e-15)
    a = step_response(d, 1.0, 200, 0.05, np.random.default_rng(1))
    b = step_response(d, 1.0, 200, 0.05, np.random.default_rng(1))
    c = step_response(d, 1.0, 200, 0.05, np.random.default_rng(2))
    assert np.array_equal(a, b) and not np.array_equal(a, c)
    with pytest.raises(ValueError):
        step_response(d, 1.0, 1)
    with pytest.raises(ValueError):
        step_response(d, 0.0, 10)


def test_noise_injection_point():
    loop = closed_loop(tf_to_ss(benchmark_plant("G3")), tf_to_ss(pid_tf(initial_theta("G3"))))
    d = discretize_zoh(loop, 0.01)
    clean = step_response(d, 1.0, 500)
    fb = step_response(d, 1.0, 500, 0.05, np.random.default_rng(0))
    rec = step_response(d, 1.0, 500, 0.05, np.random.default_rng(0), noise_in_feedback=False)
    v = np.random.default_rng(0).normal(0, 0.05, 500)
    np.testing.assert_allclose(rec, clean + v, atol=1e-14)
    assert not np.allclose(fb, rec)


def test_plant_json_roundtrip():
    tf = TransferFunction.from_dict({"num": [1.0], "den": [1.0, 20.0], "delay": 5.0})
    ref = benchmark_plant("G1")
    np.testing.assert_allclose(tf.num, ref.num)
    np.testing.assert_allclose(tf.den, ref.den)
    with pytest.raises(ValueError):
        TransferFunction.from_dict({"num": [1.0]})
