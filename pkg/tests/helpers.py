"""Shared test utilities."""
import numpy as np

from hetune.hecore import Ciphertext


def walk(obj, seen=None):
    """Every object reachable from ``obj``; ciphertext payloads are opaque."""
    seen = set() if seen is None else seen
    if id(obj) in seen:
        return
    seen.add(id(obj))
    yield obj
    if isinstance(obj, (Ciphertext, str, bytes, int, float, np.ndarray, np.random.Generator)):
        return
    if isinstance(obj, dict):
        children = [*obj.keys(), *obj.values()]
    elif isinstance(obj, (list, tuple, set)):
        children = list(obj)
    elif hasattr(obj, "__dict__"):
        children = list(vars(obj).values())
    else:
        children = []
    for child in children:
        yield from walk(child, seen)
