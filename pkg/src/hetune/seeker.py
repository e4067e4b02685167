"""Plaintext extremum seeker: normalized cost, simultaneous-perturbation
gradient, and the relative update loop."""
import csv
from dataclasses import dataclass, field, replace

import numpy as np

from . import plant as _plant
from .pid import THETA_FIELDS, Theta, UpdateRejected, perturb, pid_tf, update

N_PARAMS = 4
N_MASKS = 2 ** N_PARAMS


@dataclass(frozen=True)
class SeekerConfig:
    alpha: float = 1.0
    gamma: float = 0.01
    k_max: int = 50
    dt: float = 0.01
    settling_time: float = 50.0
    r_hat: float = 1.0
    seed: int = 0
    n_samples: int = None
    noise_std: float = 0.0          # fraction of |y_inf|
    noise_in_feedback: bool = True

    def __post_init__(self):
        if self.n_samples is None:
            object.__setattr__(self, "n_samples", int(round(self.settling_time / self.dt)))
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not 0 < self.gamma < 1:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if int(self.k_max) != self.k_max or self.k_max < 1:
            raise ValueError(f"k_max must be a positive integer, got {self.k_max}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.r_hat == 0:
            raise ValueError("r_hat must be nonzero")
        if self.n_samples < 2:
            raise ValueError(f"need at least 2 samples, got N={self.n_samples}")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")

    @property
    def N(self):
        return self.n_samples

    def with_(self, **changes):
        return replace(self, **changes)


def mask_from_index(m):
    """Sign vector whose entry i is +1 when bit i of ``m`` is set."""
    if not 0 <= m < N_MASKS:
        raise ValueError(f"mask index {m} out of range")
    return np.array([1.0 if (m >> i) & 1 else -1.0 for i in range(N_PARAMS)])


ALL_MASKS = np.array([mask_from_index(m) for m in range(N_MASKS)])


def sample_mask_index(rng):
    return int(rng.integers(N_MASKS))


def sample_mask(rng):
    """Independent symmetric +-1 entries (a uniform draw over the 16 masks)."""
    return mask_from_index(sample_mask_index(rng))


def trapezoid_weights(N):
    if N < 2:
        raise ValueError("trapezoid rule needs N >= 2")
    w = np.ones(N)
    w[0] = w[-1] = 0.5
    return w


def cost(y, r_hat, w=None, N=None):
    """``(1/N) sum_n w_n (1 - y_n / r_hat)^2``."""
    if r_hat == 0:
        raise ValueError("r_hat must be nonzero")
    y = np.asarray(y, dtype=float)
    N = len(y) if N is None else N
    w = trapezoid_weights(N) if w is None else np.asarray(w, dtype=float)
    if len(y) != N or len(w) != N:
        raise ValueError(f"length mismatch: y={len(y)}, w={len(w)}, N={N}")
    e = 1.0 - y / r_hat
    return float(np.dot(w, e * e) / N)


def spsa_gradient(j_plus, j_minus, d):
    d = np.asarray(d, dtype=float)
    if np.any(d == 0):
        raise ValueError("perturbation has a zero component")
    return (j_plus - j_minus) / (2.0 * d)


def relative_step(j_plus, j_minus, h, cfg):
    """Descent step ``-alpha * grad`` for mask ``h``."""
    return -cfg.alpha * spsa_gradient(j_plus, j_minus, cfg.gamma * np.asarray(h, dtype=float))


class PlantObjective:
    """``theta -> J~(theta)`` by simulating one reference step on the closed loop."""

    def __init__(self, plant, cfg, noise_rng=None):
        tf = plant if isinstance(plant, _plant.TransferFunction) else _plant.benchmark_plant(plant)
        self.plant_tf = tf
        self.plant_ss = _plant.tf_to_ss(tf)
        self.cfg = cfg
        self.noise_rng = noise_rng
        self.weights = trapezoid_weights(cfg.N)

    def loop(self, theta):
        return _plant.closed_loop(self.plant_ss, _plant.tf_to_ss(pid_tf(theta)))

    def is_stable(self, theta):
        return self.loop(theta).is_stable()

    def response(self, theta, noisy=True):
        cfg = self.cfg
        disc = _plant.discretize_zoh(self.loop(theta), cfg.dt)
        std = cfg.noise_std if noisy else 0.0
        with np.errstate(over="ignore", invalid="ignore"):
            return _plant.step_response(disc, cfg.r_hat, cfg.N, std, self.noise_rng,
                                        cfg.noise_in_feedback)

    def __call__(self, theta, noisy=True):
        with np.errstate(over="ignore", invalid="ignore"):
            j = cost(self.response(theta, noisy), self.cfg.r_hat, self.weights, self.cfg.N)
        return j if np.isfinite(j) else np.inf


@dataclass
class IterationRecord:
    k: int
    mask_index: int
    h: np.ndarray
    theta: Theta
    j_plus: float
    j_minus: float
    delta: np.ndarray


@dataclass
class TuningTrace:
    theta0: Theta
    records: list = field(default_factory=list)
    final_theta: Theta = None
    halted: str = None

    def __len__(self):
        return len(self.records)

    def thetas(self):
        """Parameter history ``theta(0) .. theta(K)`` as a (K+1, 4) array."""
        rows = [r.theta.as_array() for r in self.records]
        rows.append(self.final_theta.as_array())
        return np.array(rows)

    def mask_indices(self):
        return [r.mask_index for r in self.records]

    CSV_COLUMNS = (["k", "h1", "h2", "h3", "h4", *THETA_FIELDS, "Jplus", "Jminus"]
                   + [f"dTheta{i}" for i in range(1, 5)])

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.CSV_COLUMNS)
            for r in self.records:
                writer.writerow([r.k, *(int(v) for v in r.h), *(repr(float(v)) for v in r.theta.as_array()),
                                 repr(float(r.j_plus)), repr(float(r.j_minus)), *(repr(float(v)) for v in r.delta)])

    @classmethod
    def read_csv(cls, path):
        records = []
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                h = np.array([float(row[f"h{i}"]) for i in range(1, 5)])
                m = sum(1 << i for i in range(N_PARAMS) if h[i] > 0)
                records.append(IterationRecord(
                    int(row["k"]), m, h, Theta(*(float(row[k]) for k in THETA_FIELDS)),
                    float(row["Jplus"]), float(row["Jminus"]),
                    np.array([float(row[f"dTheta{i}"]) for i in range(1, 5)])))
        if not records:
            raise ValueError(f"{path} holds no iterations")
        trace = cls(records[0].theta, records)
        try:
            trace.final_theta = update(records[-1].theta, records[-1].delta)
        except UpdateRejected:
            trace.final_theta = records[-1].theta
        return trace


def seek_step(theta, objective, cfg, rng, k=0, mask_index=None):
    """One iteration: draw a mask, run the two perturbed experiments, update.

    ``objective`` is any callable ``Theta -> float``; pass a surrogate to
    bypass the plant. Raises :class:`UpdateRejected` when the step would make
    a parameter non-positive; ``theta`` is then kept by the caller.
    """
    m = sample_mask_index(rng) if mask_index is None else mask_index
    h = mask_from_index(m)
    th_plus, th_minus = perturb(theta, cfg.gamma * h)
    j_plus = objective(th_plus)
    j_minus = objective(th_minus)
    delta = relative_step(j_plus, j_minus, h, cfg)
    record = IterationRecord(k, m, h, theta, j_plus, j_minus, delta)
    return update(theta, delta), record


def spawn_rngs(seed):
    """Independent (mask, noise, encryption) generators derived from one seed."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3)]


def run_tuning(plant, theta0, cfg, objective=None):
    """``k_max`` seek steps from ``theta0``; stops early only on a rejected update."""
    mask_rng, noise_rng, _ = spawn_rngs(cfg.seed)
    if objective is None:
        objective = PlantObjective(plant, cfg, noise_rng)
    trace = TuningTrace(theta0)
    theta = theta0
    for k in range(cfg.k_max):
        try:
            theta, record = seek_step(theta, objective, cfg, mask_rng, k)
        except UpdateRejected as exc:
            trace.halted = f"iteration {k}: {exc}"
            break
        trace.records.append(record)
    trace.final_theta = theta
    return trace
