"""Scheme parameters, the RNS modulus chain, and named presets."""
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from math import prod

import numpy as np
from sympy import isprime

from ..kernels import MAX_MODULUS_BITS


def ntt_primes(count, bits, ring_dimension, exclude=()):
    """Largest ``count`` primes below ``2**bits`` with ``p = 1 mod 2n``."""
    step = 2 * ring_dimension
    cand = ((1 << bits) - 1) // step * step + 1
    found = []
    while len(found) < count:
        if cand <= step:
            raise ValueError(f"not enough {bits}-bit NTT primes for n={ring_dimension}")
        if cand not in exclude and isprime(cand):
            found.append(cand)
        cand -= step
    return found


@dataclass(frozen=True)
class HeParams:
    """Leveled-scheme parameters.

    ``modulus_chain[0]`` is the base prime that survives every rescale;
    ``modulus_chain[l]`` is the prime dropped when rescaling from level ``l``.
    """

    ring_dimension: int
    modulus_chain: tuple
    scale_c: float = float(2 ** 40)
    error_std: float = 3.2
    levels: int = field(default=None)

    def __post_init__(self):
        chain = tuple(int(p) for p in self.modulus_chain)
        object.__setattr__(self, "modulus_chain", chain)
        if self.levels is None:
            object.__setattr__(self, "levels", len(chain) - 1)
        n = self.ring_dimension
        if n < 1 or n & (n - 1):
            raise ValueError(f"ring_dimension must be a power of two, got {n}")
        if self.levels != len(chain) - 1:
            raise ValueError("levels must equal len(modulus_chain) - 1")
        # the circuit-depth check lives in the cloud session; a shallow chain
        # is allowed here so the level-exhaustion path can be exercised
        if self.levels < 1:
            raise ValueError("need at least one rescaling level")
        if len(set(chain)) != len(chain):
            raise ValueError("modulus chain primes must be pairwise distinct")
        for p in chain:
            if p.bit_length() > MAX_MODULUS_BITS:
                raise ValueError(f"prime {p} exceeds {MAX_MODULUS_BITS} bits")
            if (p - 1) % (2 * n):
                raise ValueError(f"prime {p} is not 1 mod 2n")
            if not isprime(p):
                raise ValueError(f"{p} is not prime")
        if self.scale_c < 1:
            raise ValueError("scale_c must be >= 1")
        if self.error_std <= 0:
            raise ValueError("error_std must be positive")

    @cached_property
    def moduli(self):
        return np.array(self.modulus_chain, dtype=np.int64)

    def modulus_at(self, level):
        """Product of the chain primes alive at ``level``."""
        return prod(self.modulus_chain[: level + 1])

    @property
    def total_modulus(self):
        return self.modulus_at(self.levels)

    @property
    def log2_modulus(self):
        return self.total_modulus.bit_length()

    def to_dict(self):
        return {
            "ring_dimension": self.ring_dimension,
            "modulus_chain": [str(p) for p in self.modulus_chain],
            "scale_c": self.scale_c,
            "error_std": self.error_std,
            "levels": self.levels,
        }

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(
                ring_dimension=int(d["ring_dimension"]),
                modulus_chain=tuple(int(p) for p in d["modulus_chain"]),
                scale_c=float(d.get("scale_c", 2 ** 40)),
                error_std=float(d.get("error_std", 3.2)),
                levels=int(d["levels"]) if "levels" in d else None,
            )
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed parameter set: {exc}") from exc

    @classmethod
    def build(cls, ring_dimension=2048, levels=4, scale_bits=40, base_bits=49,
              error_std=3.2):
        """Chain with one ``base_bits`` prime plus ``levels`` primes near the scale."""
        base = ntt_primes(1, base_bits, ring_dimension)
        rescale = ntt_primes(levels, scale_bits, ring_dimension, exclude=base)
        return cls(ring_dimension, tuple(base + rescale), float(2 ** scale_bits),
                   error_std)


PRESETS = {
    # ring dimension 2048, four rescaling levels at c = 2^40 (chain ~2^209)
    "paper": dict(ring_dimension=2048, levels=4),
    "fast": dict(ring_dimension=1024, levels=4),
    "shallow": dict(ring_dimension=1024, levels=3),
}


@lru_cache(maxsize=None)
def preset(name):
    try:
        kwargs = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown HE preset {name!r}; choose from {sorted(PRESETS)}") from None
    return HeParams.build(**kwargs)
