"""Binary ciphertext and evaluation-key framing.

Ciphertext layout (little-endian)::

    header  16 bytes  u8 backend tag | u8 level | u16 scale_power |
                      u32 ring dimension | f64 scale
    u32 polynomial count
    per polynomial: u32 limb count, then per limb: u32 length, length * u64

Reference-backend payloads are written as one polynomial of length-1 limbs
holding the residues of the encoded integer.
"""
import io
import json
import os
import struct
from pathlib import Path

import numpy as np

from .base import Ciphertext, EvaluationKey, HeError, SecretKeyMaterial
from .rlwe import crt_centered

HEADER = struct.Struct("<BBHId")
TAGS = {"reference": 1, "rlwe": 2}
NAMES = {v: k for k, v in TAGS.items()}


class SerializationError(HeError):
    pass


def _limbs(ct, params):
    if ct.backend == "reference":
        primes = params.modulus_chain[: ct.level + 1]
        return [[np.array([ct.payload % p], dtype=np.uint64) for p in primes]]
    return [[row.astype(np.uint64) for row in poly] for poly in ct.payload]


def ciphertext_to_bytes(ct, params):
    n = 1 if ct.backend == "reference" else params.ring_dimension
    out = io.BytesIO()
    out.write(HEADER.pack(TAGS[ct.backend], ct.level, ct.scale_power, n, ct.scale))
    polys = _limbs(ct, params)
    out.write(struct.pack("<I", len(polys)))
    for poly in polys:
        out.write(struct.pack("<I", len(poly)))
        for limb in poly:
            out.write(struct.pack("<I", len(limb)))
            out.write(limb.astype("<u8").tobytes())
    return out.getvalue()


def ciphertext_from_bytes(data, params):
    try:
        tag, level, scale_power, n, scale = HEADER.unpack_from(data, 0)
        backend = NAMES[tag]
        pos = HEADER.size
        (npoly,) = struct.unpack_from("<I", data, pos)
        pos += 4
        polys = []
        for _ in range(npoly):
            (nlimb,) = struct.unpack_from("<I", data, pos)
            pos += 4
            limbs = []
            for _ in range(nlimb):
                (length,) = struct.unpack_from("<I", data, pos)
                pos += 4
                limbs.append(np.frombuffer(data, dtype="<u8", count=length, offset=pos)
                             .astype(np.int64))
                pos += 8 * length
            polys.append(limbs)
    except (struct.error, KeyError, ValueError) as exc:
        raise SerializationError(f"malformed ciphertext: {exc}") from exc
    if pos != len(data):
        raise SerializationError("trailing bytes after ciphertext")
    if any(len(poly) != level + 1 for poly in polys):
        raise SerializationError("limb count does not match level")
    if backend == "reference":
        residues = [int(limb[0]) for limb in polys[0]]
        primes = params.modulus_chain[: level + 1]
        payload = crt_centered(residues, primes) % params.modulus_at(level)
    else:
        if n != params.ring_dimension:
            raise SerializationError("ring dimension mismatch")
        payload = np.array([np.stack(poly) for poly in polys])
    return Ciphertext(backend, level, scale_power, scale, payload)


def evaluation_key_to_bytes(evk):
    buf = io.BytesIO()
    if evk.relin is not None:
        np.save(buf, np.asarray(evk.relin, dtype="<i8"), allow_pickle=False)
    return buf.getvalue()


def evaluation_key_from_bytes(data, backend, params):
    relin = np.load(io.BytesIO(data), allow_pickle=False).astype(np.int64) if data else None
    return EvaluationKey(backend, params, relin)


KEY_FILES = ("params.json", "evaluation.key", "secret.key")


def save_keys(keys, directory):
    """Write ``params.json``, ``evaluation.key`` and an owner-only ``secret.key``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    params = keys.params
    (directory / "params.json").write_text(
        json.dumps({"backend": keys.backend, **params.to_dict()}, indent=2))
    (directory / "evaluation.key").write_bytes(evaluation_key_to_bytes(keys.evaluation))
    secret = b""
    if keys.secret is not None:
        buf = io.BytesIO()
        np.save(buf, np.asarray(keys.secret.s, dtype="<i1"), allow_pickle=False)
        secret = buf.getvalue()
    path = directory / "secret.key"
    fd = os.open(path, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600)
    with os.fdopen(fd, "wb") as fh:
        fh.write(secret)
    os.chmod(path, 0o600)
    return [directory / name for name in KEY_FILES]


def load_params(path):
    """``HeParams`` plus backend name from a ``params.json`` file."""
    from .params import HeParams
    try:
        data = json.loads(Path(path).read_text())
        backend = data.pop("backend", "rlwe")
    except (OSError, json.JSONDecodeError, AttributeError) as exc:
        raise ValueError(f"cannot read parameters from {path}: {exc}") from None
    return HeParams.from_dict(data), backend


def load_keys(directory):
    from . import make_scheme
    directory = Path(directory)
    params, backend = load_params(directory / "params.json")
    evk = evaluation_key_from_bytes((directory / "evaluation.key").read_bytes(), backend, params)
    raw = (directory / "secret.key").read_bytes()
    secret = None
    if raw:
        s = np.load(io.BytesIO(raw), allow_pickle=False).astype(np.int64)
        secret = make_scheme(backend, params).restore_secret(s)
    return SecretKeyMaterial(backend, params, secret, evk)
