"""Experiment configuration: named presets, JSON loading, validation."""
import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from ..hecore import PRESETS as HE_PRESETS
from ..pid import INITIAL_THETA, Theta
from ..plant import BENCHMARK_PLANTS, TransferFunction, benchmark_plant
from ..seeker import SeekerConfig

BACKENDS = ("plaintext", "reference", "rlwe")
DEFAULT_SEEDS = (0, 1, 2, 3, 4)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "custom"
    plant: object = "G1"            # benchmark id or {"num", "den", "delay"} dict
    theta0: object = None           # defaults to the plant's fixture
    dt: float = 0.01
    settling_time: float = 50.0
    r_hat: float = 1.0
    alpha: float = 1.0
    gamma: float = 0.01
    k_max: int = 50
    noise_pct: float = 0.0          # std of measurement noise in % of y_inf
    seeds: tuple = DEFAULT_SEEDS
    backend: str = "plaintext"
    he_preset: str = "fast"
    transport: str = "inprocess"
    transcript: bool = False
    out: str = "runs"
    n_samples: int = None

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        self.validate()

    def validate(self):
        if isinstance(self.plant, str):
            if self.plant not in BENCHMARK_PLANTS:
                raise ConfigError(f"unknown plant {self.plant!r}; expected one of {BENCHMARK_PLANTS} "
                                  "or a transfer-function object")
        elif not isinstance(self.plant, dict):
            raise ConfigError("plant must be an id or a transfer-function object")
        if self.theta0 is None and not isinstance(self.plant, str):
            raise ConfigError("a custom plant needs an explicit theta0")
        if self.backend not in BACKENDS:
            raise ConfigError(f"unknown backend {self.backend!r}; expected one of {BACKENDS}")
        if self.he_preset not in HE_PRESETS:
            raise ConfigError(f"unknown HE preset {self.he_preset!r}")
        if self.transport not in ("inprocess", "tcp"):
            raise ConfigError(f"unknown transport {self.transport!r}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if not 0 <= self.noise_pct < 100:
            raise ConfigError("noise_pct must lie in [0, 100)")
        try:
            self.plant_tf()
            self.initial_theta()
            self.seeker(self.seeds[0])
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from None

    def plant_tf(self):
        if isinstance(self.plant, str):
            return benchmark_plant(self.plant)
        return TransferFunction.from_dict(self.plant)

    def initial_theta(self):
        if self.theta0 is None:
            return INITIAL_THETA[self.plant]
        if isinstance(self.theta0, Theta):
            return self.theta0
        return Theta.from_dict(self.theta0)

    def seeker(self, seed):
        return SeekerConfig(alpha=self.alpha, gamma=self.gamma, k_max=self.k_max, dt=self.dt,
                            settling_time=self.settling_time, r_hat=self.r_hat, seed=seed,
                            n_samples=self.n_samples, noise_std=self.noise_pct / 100.0)

    @property
    def N(self):
        return self.seeker(self.seeds[0]).N

    def with_(self, **changes):
        return replace(self, **changes)

    def to_dict(self):
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        if isinstance(self.theta0, Theta):
            d["theta0"] = self.theta0.to_dict()
        return d


PRESETS = {
    "g1-paper": dict(plant="G1", dt=0.01, settling_time=50.0),
    "g2-paper": dict(plant="G2", dt=1e-3, settling_time=0.5),
    "g2-literal": dict(plant="G2", dt=1e-4, settling_time=0.05),
    "g3-paper": dict(plant="G3", dt=0.01, settling_time=80.0),
}
PAPER_PRESETS = ("g1-paper", "g2-paper", "g3-paper")


def preset(key, /, **overrides):
    """Named preset with field overrides (``name`` included)."""
    try:
        base = PRESETS[key]
    except KeyError:
        raise ConfigError(f"unknown preset {key!r}; choose from {sorted(PRESETS)}") from None
    return ExperimentConfig(**{"name": key, **base, **overrides})


def from_dict(data):
    """Build a config; ``{"preset": name, ...}`` starts from a named preset."""
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    data = dict(data)
    known = {f.name for f in fields(ExperimentConfig)}
    base = {}
    if "preset" in data:
        name = data.pop("preset")
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
        base = {"name": name, **PRESETS[name]}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
    try:
        return ExperimentConfig(**{**base, **data})
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load(path):
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return from_dict(data)
