"""Fixed-point mapping between reals and the residue ring Z_q.

A real ``x`` is stored as ``round(c * x) mod q``; the integer is read back
through the centered lift ``mu`` and divided by ``c ** scale_power``. Every
integer here is an arbitrary-precision Python int, so moduli well beyond 64
bits (e.g. ``2**160``) need no special handling.
"""
import math
import numbers
import warnings
from dataclasses import dataclass


class EncodingRangeWarning(UserWarning):
    """|c*x| reached q/2, so the residue no longer decodes to x."""


@dataclass(frozen=True)
class FixedPointParams:
    scale_c: float
    modulus_q: int

    def __post_init__(self):
        if not self.scale_c >= 1:
            raise ValueError(f"scale_c must be >= 1, got {self.scale_c}")
        if int(self.modulus_q) != self.modulus_q or self.modulus_q < 2:
            raise ValueError(f"modulus_q must be an integer >= 2, got {self.modulus_q}")
        object.__setattr__(self, "modulus_q", int(self.modulus_q))


# scale 2^40 over a 160-bit modulus, the parameter size of the encrypted seeker
PAPER_FIXED_POINT = FixedPointParams(2 ** 40, 2 ** 160)


@dataclass(frozen=True)
class EncodedInt:
    value: int
    scale_power: int = 1

    def __post_init__(self):
        if self.scale_power < 1:
            raise ValueError("scale_power must be >= 1")


def _ratio(x):
    if isinstance(x, numbers.Integral):
        return int(x), 1
    if isinstance(x, numbers.Rational):
        return x.numerator, x.denominator
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"cannot encode {x}")
    return x.as_integer_ratio()


def round_half_away(num, den=1):
    """Nearest integer to ``num/den``; ties go away from zero."""
    if den < 0:
        num, den = -num, -den
    k, r = divmod(abs(num), den)
    if 2 * r >= den:
        k += 1
    return -k if num < 0 else k


def scale_round(x, c):
    """``round(c*x)`` evaluated exactly for float/int/Fraction inputs."""
    xn, xd = _ratio(x)
    cn, cd = _ratio(c)
    return round_half_away(xn * cn, xd * cd)


def encode(x, p):
    """``round(c*x) mod q`` at scale power 1."""
    scaled = scale_round(x, p.scale_c)
    if 2 * abs(scaled) >= p.modulus_q:
        warnings.warn(f"|c*x| = {abs(scaled)} >= q/2; reconstruction will wrap",
                      EncodingRangeWarning, stacklevel=2)
    return EncodedInt(scaled % p.modulus_q, 1)


def mu(v, p):
    """Centered lift of a residue: ``v - q`` when ``v >= q/2``."""
    value = v.value if isinstance(v, EncodedInt) else int(v)
    q = p.modulus_q if isinstance(p, FixedPointParams) else int(p)
    if not 0 <= value < q:
        raise ValueError(f"residue {value} outside [0, {q})")
    return value - q if 2 * value >= q else value


def decode(v, p):
    """``mu(v) / c**scale_power`` as a float (correctly rounded)."""
    cn, cd = _ratio(p.scale_c)
    e = v.scale_power
    return (mu(v, p) * cd ** e) / cn ** e


def add_encoded(a, b, p):
    if a.scale_power != b.scale_power:
        raise ValueError("summands must share the same scale power")
    return EncodedInt((a.value + b.value) % p.modulus_q, a.scale_power)


def mul_encoded(a, b, p):
    return EncodedInt((a.value * b.value) % p.modulus_q, a.scale_power + b.scale_power)
