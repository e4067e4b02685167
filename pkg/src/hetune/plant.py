"""Continuous LTI plants, the PID closed loop, and sampled step responses.

Polynomials are stored in ascending powers of ``s`` (``numpy.polynomial``
convention). A closed loop is simulated by forming the continuous
interconnection once, discretizing it exactly under zero-order hold, and
iterating the resulting linear recurrence.
"""
from dataclasses import dataclass
from math import comb, factorial

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.linalg import expm, matrix_balance

from . import kernels


class IllPosedLoopError(ValueError):
    """Algebraic loop: 1 + D_c * D_p vanishes."""


def _trim(c):
    c = np.atleast_1d(np.asarray(c, dtype=float))
    nz = np.flatnonzero(c)
    return c[: nz[-1] + 1] if nz.size else c[:1]


@dataclass(frozen=True, eq=False)
class TransferFunction:
    num: np.ndarray
    den: np.ndarray

    def __post_init__(self):
        num, den = _trim(self.num), _trim(self.den)
        if not den.any():
            raise ValueError("denominator is identically zero")
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)

    @property
    def order(self):
        return len(self.den) - 1

    @property
    def is_proper(self):
        return len(self.num) <= len(self.den)

    def __call__(self, s):
        return P.polyval(s, self.num) / P.polyval(s, self.den)

    def dc_gain(self):
        if self.den[0] == 0:
            return np.inf
        return self.num[0] / self.den[0]

    def __mul__(self, other):
        return TransferFunction(P.polymul(self.num, other.num), P.polymul(self.den, other.den))

    def __repr__(self):
        return f"TransferFunction(num={self.num.tolist()}, den={self.den.tolist()})"

    @classmethod
    def from_dict(cls, d):
        """``{"num": [...], "den": [...], "delay": T}``, ascending powers of s."""
        try:
            tf = cls(d["num"], d["den"])
        except KeyError as exc:
            raise ValueError(f"plant definition lacks {exc}") from None
        delay = float(d.get("delay", 0.0) or 0.0)
        if delay > 0:
            tf = pade_delay(delay, int(d.get("pade_order", 3))) * tf
        return tf

    def to_dict(self):
        return {"num": self.num.tolist(), "den": self.den.tolist()}


def pade_delay(T, order=3):
    """Diagonal Padé approximant of ``exp(-T s)``."""
    if not T > 0:
        raise ValueError(f"delay must be positive, got {T}")
    if order < 1:
        raise ValueError("order must be >= 1")
    n = order
    base = [factorial(2 * n - k) * factorial(n) / (factorial(2 * n) * factorial(k) * factorial(n - k))
            for k in range(n + 1)]
    num = [b * (-T) ** k for k, b in enumerate(base)]
    den = [b * T ** k for k, b in enumerate(base)]
    return TransferFunction(num, den)


BENCHMARK_PLANTS = ("G1", "G2", "G3")


def benchmark_plant(plant_id):
    """The three unit-DC-gain test plants; G1's 5 s delay becomes a 3/3 Padé."""
    if plant_id == "G1":
        return pade_delay(5.0, 3) * TransferFunction([1.0], [1.0, 20.0])
    if plant_id == "G2":
        return TransferFunction([1.0], [comb(8, k) * 0.01 ** k for k in range(9)])
    if plant_id == "G3":
        return TransferFunction([1.0, -5.0], [1.0, 30.0, 200.0])
    raise ValueError(f"unknown plant {plant_id!r}; expected one of {BENCHMARK_PLANTS}")


@dataclass(frozen=True, eq=False)
class StateSpace:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError("A must be square")
        B = np.asarray(self.B, dtype=float)
        C = np.asarray(self.C, dtype=float)
        B = B if B.ndim == 2 else B.reshape(n, -1)
        C = C if C.ndim == 2 else C.reshape(-1, n)
        D = np.asarray(self.D, dtype=float).reshape(C.shape[0], B.shape[1])
        if B.shape[0] != n or C.shape[1] != n:
            raise ValueError(f"inconsistent shapes A{A.shape} B{B.shape} C{C.shape}")
        for name, value in zip("ABCD", (A, B, C, D)):
            object.__setattr__(self, name, value)

    @property
    def n_states(self):
        return self.A.shape[0]

    def poles(self):
        return np.linalg.eigvals(self.A)

    def is_stable(self):
        return self.n_states == 0 or bool(np.all(self.poles().real < 0))

    def freq_response(self, s, inp=0):
        n = self.n_states
        g = self.C @ np.linalg.solve(s * np.eye(n) - self.A, self.B[:, inp])
        return g[0] + self.D[0, inp]


def tf_to_ss(tf):
    """Controllable canonical realization of a proper SISO transfer function."""
    if not tf.is_proper:
        raise ValueError("transfer function is improper")
    den = tf.den / tf.den[-1]
    n = len(den) - 1
    num = np.zeros(n + 1)
    num[: len(tf.num)] = tf.num / tf.den[-1]
    d = num[n]
    if n == 0:
        return StateSpace(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), [[d]])
    A = np.zeros((n, n))
    A[:-1, 1:] = np.eye(n - 1)
    A[-1, :] = -den[:n]
    B = np.zeros((n, 1))
    B[-1, 0] = 1.0
    C = (num[:n] - d * den[:n]).reshape(1, n)
    return StateSpace(A, B, C, [[d]])


def balance(ss):
    """Diagonal power-of-two similarity that equilibrates ``A`` (exact in floating point)."""
    if ss.n_states == 0:
        return ss
    _, t = matrix_balance(ss.A, permute=False, separate=True)
    scale = t[0]
    A = ss.A * scale[None, :] / scale[:, None]
    return StateSpace(A, ss.B / scale[:, None], ss.C * scale[None, :], ss.D)


def closed_loop(plant, controller):
    """Negative unity feedback ``e = r - (y + v)``; inputs ``(r, v)``, output ``y + v``.

    The state is ``[x_plant, x_controller]`` in balanced coordinates.
    """
    Ap, Bp, Cp, Dp = plant.A, plant.B, plant.C, float(plant.D[0, 0])
    Ac, Bc, Cc, Dc = controller.A, controller.B, controller.C, float(controller.D[0, 0])
    gain = 1.0 + Dc * Dp
    if abs(gain) < 1e-12:
        raise IllPosedLoopError("1 + Dc*Dp is zero")
    k = 1.0 / gain
    npl, nc = plant.n_states, controller.n_states
    # u = Ku_x x + Ku_r r + Ku_v v
    Ku_x = k * np.hstack([-Dc * Cp, Cc])
    Ku_r, Ku_v = k * Dc, -k * Dc
    # y = Cy x + Dp u
    Cy = np.hstack([Cp, np.zeros((1, nc))])
    Y_x = Cy + Dp * Ku_x
    Y_r, Y_v = Dp * Ku_r, Dp * Ku_v
    # e = r - v - y
    E_x, E_r, E_v = -Y_x, 1.0 - Y_r, -1.0 - Y_v

    Bpad = np.vstack([Bp, np.zeros((nc, 1))])
    Bcpad = np.vstack([np.zeros((npl, 1)), Bc])
    A = np.block([[Ap, np.zeros((npl, nc))], [np.zeros((nc, npl)), Ac]])
    A = A + Bpad @ Ku_x + Bcpad @ E_x
    B = np.hstack([Bpad * Ku_r + Bcpad * E_r, Bpad * Ku_v + Bcpad * E_v])
    C = Y_x
    D = np.array([[Y_r, Y_v + 1.0]])
    return balance(StateSpace(A, B, C, D))


@dataclass(frozen=True, eq=False)
class DiscreteLoop:
    Ad: np.ndarray
    Bd: np.ndarray      # columns: reference, measurement noise
    C: np.ndarray
    D: np.ndarray
    dt: float


def discretize_zoh(ss, dt):
    """Exact zero-order-hold discretization via the augmented matrix exponential."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    n, m = ss.n_states, ss.B.shape[1]
    M = np.zeros((n + m, n + m))
    M[:n, :n] = ss.A
    M[:n, n:] = ss.B
    E = expm(M * dt)
    return DiscreteLoop(E[:n, :n], E[:n, n:], ss.C, ss.D, float(dt))


def step_response(loop, r_hat, N, noise_std=0.0, rng=None, noise_in_feedback=True):
    """Sampled output for a step of height ``r_hat`` applied at t = 0 from rest.

    ``noise_std`` is relative to the final value ``|r_hat|``. With
    ``noise_in_feedback`` the controller sees the noisy measurement;
    otherwise noise is only added to the recorded samples.
    """
    if N < 2:
        raise ValueError("need N >= 2 samples")
    if r_hat == 0:
        raise ValueError("reference height must be nonzero")
    if noise_std > 0:
        if rng is None:
            raise ValueError("noise requires an rng")
        v = rng.normal(0.0, noise_std * abs(r_hat), size=N)
    else:
        v = np.zeros(N)
    c = loop.C[0]
    d_r, d_v = loop.D[0, 0], loop.D[0, 1]
    if noise_in_feedback:
        return kernels.lti_run(loop.Ad, loop.Bd[:, 0], loop.Bd[:, 1], c, d_r, d_v, r_hat, v)
    clean = kernels.lti_run(loop.Ad, loop.Bd[:, 0], loop.Bd[:, 1], c, d_r, d_v, r_hat,
                            np.zeros(N))
    return clean + v
