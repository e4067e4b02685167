"""Backend-independent ciphertext bookkeeping.

Both backends share the level/scale rules implemented here; they only supply
payload arithmetic. A ciphertext at ``level`` l lives modulo the product of
``modulus_chain[:l+1]``. ``scale_power`` is the nominal exponent of ``c``
carried by the payload, ``scale`` the exact scaling factor used on decrypt.
"""
import math
from dataclasses import dataclass
from typing import Any

from ..encoding import scale_round


class HeError(Exception):
    pass


class LevelExhaustedError(HeError):
    pass


class LevelMismatchError(HeError):
    pass


class ScaleMismatchError(HeError):
    pass


class BackendMismatchError(HeError):
    pass


class PlaintextRangeError(HeError):
    pass


class KeyRoleError(HeError):
    """Secret-key operation attempted with evaluation-only material."""


@dataclass(frozen=True, eq=False)
class Ciphertext:
    backend: str
    level: int
    scale_power: int
    scale: float
    payload: Any

    def __repr__(self):
        return (f"Ciphertext({self.backend}, level={self.level}, "
                f"scale_power={self.scale_power}, scale=2^{math.log2(self.scale):.3f})")


@dataclass(frozen=True, eq=False)
class EvaluationKey:
    """Public evaluation material; all the cloud ever receives."""

    backend: str
    params: Any
    relin: Any = None


@dataclass(frozen=True, eq=False)
class SecretKeyMaterial:
    backend: str
    params: Any
    secret: Any
    evaluation: EvaluationKey

    def __repr__(self):
        return f"SecretKeyMaterial({self.backend}, <redacted>)"

    def public(self):
        return self.evaluation


def level_of(ct):
    return ct.level


class Scheme:
    """Client-side entry point: key generation, encryption, decryption."""

    name = None

    def __init__(self, params):
        self.params = params

    # payload hooks ---------------------------------------------------------
    def _keygen(self, rng):
        raise NotImplementedError

    def _encrypt(self, scaled, secret, level, rng):
        raise NotImplementedError

    def _decrypt(self, ct, secret):
        """Centered integer carried by ``ct``."""
        raise NotImplementedError

    # public API -------------------------------------------------------------
    def keygen(self, rng):
        secret, relin = self._keygen(rng)
        evk = EvaluationKey(self.name, self.params, relin)
        return SecretKeyMaterial(self.name, self.params, secret, evk)

    def _check_secret(self, keys):
        if not isinstance(keys, SecretKeyMaterial):
            raise KeyRoleError(f"{type(keys).__name__} cannot encrypt or decrypt")
        if keys.backend != self.name:
            raise BackendMismatchError(f"{keys.backend} keys used with {self.name} backend")

    def enc(self, x, keys, rng=None, *, scale=None, level=None):
        """Fresh encryption of real ``x``.

        ``scale`` overrides the default ``scale_c``; constants that will later
        multiply a ciphertext at level l are best encrypted at scale
        ``modulus_chain[l]`` so the rescale cancels it exactly.
        """
        self._check_secret(keys)
        level = self.params.levels if level is None else level
        scale = self.params.scale_c if scale is None else float(scale)
        scaled = scale_round(x, scale)
        if 2 * abs(scaled) >= self.params.modulus_at(level):
            raise PlaintextRangeError(f"|scale*x| exceeds half the level-{level} modulus: {x}")
        payload = self._encrypt(scaled, keys.secret, level, rng)
        return Ciphertext(self.name, level, 1, scale, payload)

    def dec(self, ct, keys):
        self._check_secret(keys)
        if ct.backend != self.name:
            raise BackendMismatchError(f"{ct.backend} ciphertext given to {self.name}")
        return _exact_div(self._decrypt(ct, keys.secret), ct.scale)

    def evaluator(self, evk):
        raise NotImplementedError


def _exact_div(m, scale):
    n, d = float(scale).as_integer_ratio()
    return (m * d) / n


class Evaluator:
    """Homomorphic operations; holds no secret material and cannot decrypt."""

    name = None

    def __init__(self, evk):
        if isinstance(evk, SecretKeyMaterial):
            evk = evk.public()
        if not isinstance(evk, EvaluationKey):
            raise KeyRoleError("evaluator needs an EvaluationKey")
        if evk.backend != self.name:
            raise BackendMismatchError(f"{evk.backend} key for {self.name} evaluator")
        self.evk = evk
        self.params = evk.params

    # payload hooks ---------------------------------------------------------
    def _add(self, a, b, level):
        raise NotImplementedError

    def _sub(self, a, b, level):
        raise NotImplementedError

    def _mul(self, a, b, level):
        raise NotImplementedError

    def _mul_int(self, a, k, level):
        raise NotImplementedError

    def _rescale(self, a, level):
        raise NotImplementedError

    def _drop(self, a, level, target):
        raise NotImplementedError

    # checks ------------------------------------------------------------------
    def _own(self, *cts):
        for ct in cts:
            if not isinstance(ct, Ciphertext):
                raise TypeError(f"expected Ciphertext, got {type(ct).__name__}")
            if ct.backend != self.name:
                raise BackendMismatchError(f"{ct.backend} ciphertext given to {self.name}")

    def _same_slot(self, a, b):
        self._own(a, b)
        if a.level != b.level:
            raise LevelMismatchError(f"levels differ: {a.level} vs {b.level}")
        if a.scale_power != b.scale_power:
            raise ScaleMismatchError(f"scale powers differ: {a.scale_power} vs {b.scale_power}")

    @staticmethod
    def _need_level(ct, what):
        if ct.level < 1:
            raise LevelExhaustedError(f"{what} needs level >= 1, ciphertext is at level 0")

    # operations --------------------------------------------------------------
    def add(self, a, b):
        self._same_slot(a, b)
        if not math.isclose(a.scale, b.scale, rel_tol=1e-9):
            raise ScaleMismatchError(f"scales differ: {a.scale} vs {b.scale}")
        return Ciphertext(self.name, a.level, a.scale_power, a.scale,
                          self._add(a.payload, b.payload, a.level))

    def sub(self, a, b):
        self._same_slot(a, b)
        if not math.isclose(a.scale, b.scale, rel_tol=1e-9):
            raise ScaleMismatchError(f"scales differ: {a.scale} vs {b.scale}")
        return Ciphertext(self.name, a.level, a.scale_power, a.scale,
                          self._sub(a.payload, b.payload, a.level))

    def mult(self, a, b, rescale=True):
        """Ciphertext product, rescaled by default (one level consumed)."""
        self._same_slot(a, b)
        if rescale:
            self._need_level(a, "mult")
        raw = Ciphertext(self.name, a.level, a.scale_power + b.scale_power,
                         a.scale * b.scale, self._mul(a.payload, b.payload, a.level))
        return self.rescale(raw) if rescale else raw

    def mult_plain(self, a, s):
        """Product with public real ``s``; the result is back at nominal scale."""
        self._own(a)
        self._need_level(a, "mult_plain")
        q_top = self.params.modulus_chain[a.level]
        target = self.params.scale_c ** a.scale_power
        k = scale_round(s, target * q_top / a.scale)
        raw = Ciphertext(self.name, a.level, a.scale_power + 1, target * q_top,
                         self._mul_int(a.payload, k, a.level))
        out = self.rescale(raw)
        return Ciphertext(self.name, out.level, out.scale_power, target, out.payload)

    def rescale(self, a):
        self._own(a)
        self._need_level(a, "rescale")
        if a.scale_power < 2:
            raise ScaleMismatchError("rescale needs scale_power >= 2")
        q_top = self.params.modulus_chain[a.level]
        return Ciphertext(self.name, a.level - 1, a.scale_power - 1, a.scale / q_top,
                          self._rescale(a.payload, a.level))

    def drop_level(self, a, level):
        """Reduce the modulus to ``level`` without touching the scale."""
        self._own(a)
        if level > a.level or level < 0:
            raise LevelMismatchError(f"cannot move from level {a.level} to {level}")
        if level == a.level:
            return a
        return Ciphertext(self.name, level, a.scale_power, a.scale,
                          self._drop(a.payload, a.level, level))

    level_of = staticmethod(level_of)
