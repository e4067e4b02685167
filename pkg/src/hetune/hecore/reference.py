"""Exact-arithmetic backend.

The payload is the encoded integer itself, kept modulo the level's chain
product. There is no key and no noise: it reproduces the fixed-point
arithmetic of the leveled scheme bit-exactly and deterministically, which
makes it the oracle for circuit-level tests.
"""
from ..encoding import mu, round_half_away
from .base import Evaluator, Scheme


class ReferenceScheme(Scheme):
    name = "reference"

    def _keygen(self, rng):
        return None, None

    def _encrypt(self, scaled, secret, level, rng):
        return scaled % self.params.modulus_at(level)

    def _decrypt(self, ct, secret):
        return mu(ct.payload, self.params.modulus_at(ct.level))

    def evaluator(self, evk):
        return ReferenceEvaluator(evk)


class ReferenceEvaluator(Evaluator):
    name = "reference"

    def _q(self, level):
        return self.params.modulus_at(level)

    def _add(self, a, b, level):
        return (a + b) % self._q(level)

    def _sub(self, a, b, level):
        return (a - b) % self._q(level)

    def _mul(self, a, b, level):
        return (a * b) % self._q(level)

    def _mul_int(self, a, k, level):
        return (a * k) % self._q(level)

    def _rescale(self, a, level):
        m = mu(a, self._q(level))
        return round_half_away(m, self.params.modulus_chain[level]) % self._q(level - 1)

    def _drop(self, a, level, target):
        return mu(a, self._q(level)) % self._q(target)
