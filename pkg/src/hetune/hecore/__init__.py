"""Leveled homomorphic arithmetic on encrypted scalars.

Two interchangeable backends implement one contract:

``reference``
    exact fixed-point arithmetic with level/scale bookkeeping, no security;
``rlwe``
    ring-LWE approximate arithmetic with relinearization and rescaling.
"""
from .base import (BackendMismatchError, Ciphertext, EvaluationKey, Evaluator,
                   HeError, KeyRoleError, LevelExhaustedError, LevelMismatchError,
                   PlaintextRangeError, ScaleMismatchError, Scheme,
                   SecretKeyMaterial, level_of)
from .params import PRESETS, HeParams, preset
from .reference import ReferenceEvaluator, ReferenceScheme
from .rlwe import RlweEvaluator, RlweScheme

BACKENDS = {"reference": ReferenceScheme, "rlwe": RlweScheme}


def make_scheme(backend, params):
    try:
        return BACKENDS[backend](params)
    except KeyError:
        raise ValueError(f"unknown backend {backend!r}") from None


__all__ = [
    "BACKENDS", "BackendMismatchError", "Ciphertext", "EvaluationKey", "Evaluator",
    "HeError", "HeParams", "KeyRoleError", "LevelExhaustedError",
    "LevelMismatchError", "PRESETS", "PlaintextRangeError", "ReferenceEvaluator",
    "ReferenceScheme", "RlweEvaluator", "RlweScheme", "ScaleMismatchError", "Scheme",
    "SecretKeyMaterial", "level_of", "make_scheme", "preset",
]
