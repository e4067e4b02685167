"""Filtered PID controller and the relative perturbation/update rules."""
from dataclasses import dataclass

import numpy as np

from .plant import TransferFunction

THETA_FIELDS = ("Kp", "Ki", "Kd", "Tf")


class UpdateRejected(ValueError):
    """A relative step would flip the sign of (or zero) a parameter."""


@dataclass(frozen=True)
class Theta:
    Kp: float
    Ki: float
    Kd: float
    Tf: float

    def __post_init__(self):
        for name in THETA_FIELDS:
            value = float(getattr(self, name))
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be finite and positive, got {value}")
            object.__setattr__(self, name, value)

    @classmethod
    def from_array(cls, a):
        return cls(*(float(v) for v in a))

    def as_array(self):
        return np.array([self.Kp, self.Ki, self.Kd, self.Tf])

    def to_dict(self):
        return {k: getattr(self, k) for k in THETA_FIELDS}

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(*(d[k] for k in THETA_FIELDS))
        except KeyError as exc:
            raise ValueError(f"theta lacks {exc}") from None


# Ziegler-Nichols starting points for the benchmark plants
INITIAL_THETA = {
    "G1": Theta(4.08, 0.45, 9.33, 0.50),
    "G2": Theta(1.11, 14.61, 0.02, 1e-3),
    "G3": Theta(3.53, 0.21, 14.82, 0.50),
}


def initial_theta(plant_id):
    try:
        return INITIAL_THETA[plant_id]
    except KeyError:
        raise ValueError(f"no initial parameters for plant {plant_id!r}") from None


def pid_tf(theta):
    """``Kp + Ki/s + Kd s/(s Tf + 1)`` over the common denominator ``s (s Tf + 1)``."""
    kp, ki, kd, tf = theta.Kp, theta.Ki, theta.Kd, theta.Tf
    return TransferFunction([ki, kp + ki * tf, kp * tf + kd], [0.0, 1.0, tf])


def perturb(theta, d):
    """``(theta * (1 + d), theta * (1 - d))`` component-wise."""
    d = np.asarray(d, dtype=float)
    if d.shape != (4,):
        raise ValueError("perturbation must have 4 components")
    if np.any(np.abs(d) >= 1):
        raise ValueError(f"relative perturbation must satisfy |d_i| < 1, got {d}")
    t = theta.as_array()
    return Theta.from_array(t * (1 + d)), Theta.from_array(t * (1 - d))


def update(theta, delta):
    """``theta * (1 + delta)``; refuses steps that would leave the positive orthant."""
    delta = np.asarray(delta, dtype=float)
    if delta.shape != (4,):
        raise ValueError("update must have 4 components")
    if not np.all(np.isfinite(delta)):
        raise UpdateRejected(f"non-finite update {delta}")
    if np.any(delta <= -1):
        bad = [THETA_FIELDS[i] for i in np.flatnonzero(delta <= -1)]
        raise UpdateRejected(f"relative update {delta} would flip the sign of {', '.join(bad)}")
    return Theta.from_array(theta.as_array() * (1 + delta))
