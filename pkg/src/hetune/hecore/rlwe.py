"""Symmetric-key approximate-arithmetic scheme over Z_Q[X]/(X^n + 1).

Residue-number-system layout: a polynomial at level l is an int64 array of
shape ``(l+1, n)``, row j holding coefficients mod ``modulus_chain[j]``. A
ciphertext payload stacks ``(c0, c1)`` into shape ``(2, l+1, n)`` in the
coefficient domain, with ``c0 + c1*s = m + e``. A scalar message occupies the
constant coefficient.

Relinearization uses per-limb digits: key ``i`` encrypts ``s^2`` times the CRT
idempotent of prime ``i`` (1 mod q_i, 0 mod every other prime), so a key
generated for the full chain serves every level by dropping rows.
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .. import kernels
from .base import Evaluator, Scheme


def _bitrev(n):
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def _primitive_2n_root(p, n):
    for g in range(2, p):
        psi = pow(g, (p - 1) // (2 * n), p)
        if pow(psi, n, p) == p - 1:
            return psi
    raise ValueError(f"no primitive {2 * n}-th root mod {p}")


@dataclass(frozen=True, eq=False)
class NttTables:
    moduli: np.ndarray
    psi_rev: np.ndarray
    psi_inv_rev: np.ndarray
    n_inv: np.ndarray

    def rows(self, count, reps=1):
        """Tables for the first ``count`` limbs, tiled ``reps`` times."""
        sl = slice(0, count)
        if reps == 1:
            return self.moduli[sl], self.psi_rev[sl], self.psi_inv_rev[sl], self.n_inv[sl]
        return (np.tile(self.moduli[sl], reps), np.tile(self.psi_rev[sl], (reps, 1)),
                np.tile(self.psi_inv_rev[sl], (reps, 1)), np.tile(self.n_inv[sl], reps))


@lru_cache(maxsize=8)
def ntt_tables(chain, n):
    rev = _bitrev(n)
    psi_rev = np.empty((len(chain), n), dtype=np.int64)
    psi_inv_rev = np.empty_like(psi_rev)
    for row, p in enumerate(chain):
        psi = _primitive_2n_root(p, n)
        psi_inv = pow(psi, -1, p)
        fwd, inv = [1] * n, [1] * n
        for k in range(1, n):
            fwd[k] = fwd[k - 1] * psi % p
            inv[k] = inv[k - 1] * psi_inv % p
        psi_rev[row] = np.array(fwd, dtype=np.int64)[rev]
        psi_inv_rev[row] = np.array(inv, dtype=np.int64)[rev]
    n_inv = np.array([pow(n, -1, p) for p in chain], dtype=np.int64)
    return NttTables(np.array(chain, dtype=np.int64), psi_rev, psi_inv_rev, n_inv)


@dataclass(frozen=True, eq=False)
class RlweSecret:
    s: np.ndarray           # ternary coefficients, shape (n,)
    s_ntt: np.ndarray       # shape (L+1, n)
    const_weights: np.ndarray  # row vector w with (c1*s)[0] = c1 . w


class _Ring:
    """Polynomial arithmetic shared by the scheme and the evaluator."""

    def __init__(self, params):
        self.params = params
        self.n = params.ring_dimension
        self.tables = ntt_tables(params.modulus_chain, self.n)
        self.moduli = self.tables.moduli

    def q(self, rows):
        return self.moduli[:rows, None]

    def ntt(self, polys, rows):
        """NTT of ``polys`` shaped (k, rows, n) or (rows, n)."""
        shape = polys.shape
        flat = polys.reshape(-1, self.n)
        reps = flat.shape[0] // rows
        mod, fwd, _, _ = self.tables.rows(rows, reps)
        return kernels.ntt_forward(flat, mod, fwd).reshape(shape)

    def intt(self, polys, rows):
        shape = polys.shape
        flat = polys.reshape(-1, self.n)
        reps = flat.shape[0] // rows
        mod, _, inv, ninv = self.tables.rows(rows, reps)
        return kernels.ntt_inverse(flat, mod, inv, ninv).reshape(shape)

    def mul(self, a, b, rows):
        """Pointwise product of NTT-domain arrays with trailing (rows, n)."""
        shape = np.broadcast_shapes(a.shape, b.shape)
        a = np.ascontiguousarray(np.broadcast_to(a, shape)).reshape(-1, self.n)
        b = np.ascontiguousarray(np.broadcast_to(b, shape)).reshape(-1, self.n)
        reps = a.shape[0] // rows
        return kernels.mulmod_rows(a, b, np.tile(self.moduli[:rows], reps)).reshape(shape)

    def add(self, a, b, rows):
        s = a + b
        q = self.q(rows)
        return np.where(s >= q, s - q, s)

    def sub(self, a, b, rows):
        s = a - b
        return np.where(s < 0, s + self.q(rows), s)

    def reduce_signed(self, v, rows):
        """Residues of a signed int64 polynomial (n,) for each of ``rows`` limbs."""
        return np.mod(v[None, :], self.q(rows))

    def uniform(self, rng, rows):
        return np.stack([rng.integers(0, int(p), size=self.n, dtype=np.int64)
                         for p in self.moduli[:rows]])

    def gaussian(self, rng):
        return np.rint(rng.normal(0.0, self.params.error_std, size=self.n)).astype(np.int64)


class RlweScheme(Scheme):
    name = "rlwe"

    def __init__(self, params):
        super().__init__(params)
        self.ring = _Ring(params)

    def _keygen(self, rng):
        ring, rows = self.ring, self.params.levels + 1
        secret = self.restore_secret(rng.integers(-1, 2, size=ring.n))
        s_ntt = secret.s_ntt
        s2_ntt = ring.mul(s_ntt, s_ntt, rows)
        relin = np.empty((rows, 2, rows, ring.n), dtype=np.int64)
        for i in range(rows):
            a = ring.uniform(rng, rows)
            e = ring.ntt(ring.reduce_signed(ring.gaussian(rng), rows), rows)
            b = ring.sub(e, ring.mul(a, s_ntt, rows), rows)
            b[i] = (b[i] + s2_ntt[i]) % ring.moduli[i]
            relin[i, 0], relin[i, 1] = b, a
        return secret, relin

    def restore_secret(self, s):
        """Rebuild the derived secret tables from ternary coefficients."""
        ring, rows = self.ring, self.params.levels + 1
        s = np.asarray(s, dtype=np.int64)
        if s.shape != (ring.n,) or np.any(np.abs(s) > 1):
            raise ValueError("secret must be a ternary vector of ring dimension length")
        weights = np.empty(ring.n, dtype=np.int64)
        weights[0] = s[0]
        weights[1:] = -s[:0:-1]
        return RlweSecret(s, ring.ntt(ring.reduce_signed(s, rows), rows), weights)

    def _encrypt(self, scaled, secret, level, rng):
        if rng is None:
            raise ValueError("rlwe encryption needs an rng")
        ring, rows = self.ring, level + 1
        a_ntt = ring.uniform(rng, rows)  # uniform in either domain
        em = ring.reduce_signed(ring.gaussian(rng), rows)
        em[:, 0] = (em[:, 0] + np.array([scaled % int(p) for p in ring.moduli[:rows]],
                                        dtype=np.int64)) % ring.moduli[:rows]
        c0_ntt = ring.sub(ring.ntt(em, rows), ring.mul(a_ntt, secret.s_ntt[:rows], rows), rows)
        return ring.intt(np.stack([c0_ntt, a_ntt]), rows)

    def _decrypt(self, ct, secret):
        ring, rows = self.ring, ct.level + 1
        c0, c1 = ct.payload
        const = (c0[:, 0] + c1 @ secret.const_weights) % ring.moduli[:rows]
        return crt_centered([int(r) for r in const], self.params.modulus_chain[:rows])

    def evaluator(self, evk):
        return RlweEvaluator(evk)


def crt_centered(residues, primes):
    big_q = 1
    for p in primes:
        big_q *= p
    x = 0
    for r, p in zip(residues, primes):
        m = big_q // p
        x += r * m * pow(m, -1, p)
    x %= big_q
    return x - big_q if 2 * x >= big_q else x


class RlweEvaluator(Evaluator):
    name = "rlwe"

    def __init__(self, evk):
        super().__init__(evk)
        self.ring = _Ring(self.params)

    def _add(self, a, b, level):
        return self.ring.add(a, b, level + 1)

    def _sub(self, a, b, level):
        return self.ring.sub(a, b, level + 1)

    def _mul(self, a, b, level):
        ring, rows = self.ring, level + 1
        fa = ring.ntt(a, rows)
        fb = ring.ntt(b, rows)
        d0 = ring.mul(fa[0], fb[0], rows)
        d1 = ring.add(ring.mul(fa[0], fb[1], rows), ring.mul(fa[1], fb[0], rows), rows)
        d2 = ring.intt(ring.mul(fa[1], fb[1], rows), rows)
        # per-limb digits, centered to halve the key-switching noise
        q = ring.q(rows)
        centered = np.where(d2 > q // 2, d2 - q, d2)
        digits = np.mod(centered[:, None, :], q[None, :, :])      # (digit, limb, n)
        fd = ring.ntt(digits, rows)
        keys = self.evk.relin[:rows, :, :rows, :]                  # (digit, 2, limb, n)
        prod = ring.mul(fd[:, None, :, :], keys, rows)             # (digit, 2, limb, n)
        # rows * 2^50 stays well inside int64
        acc = prod.sum(axis=0) % q[None]
        c0 = ring.add(d0, acc[0], rows)
        c1 = ring.add(d1, acc[1], rows)
        return ring.intt(np.stack([c0, c1]), rows)

    def _mul_int(self, a, k, level):
        rows = level + 1
        ks = np.array([k % int(p) for p in self.ring.moduli[:rows]], dtype=np.int64)
        return self.ring.mul(a, np.broadcast_to(ks[None, :, None], a.shape), rows)

    def _rescale(self, a, level):
        ring = self.ring
        p_top = int(ring.moduli[level])
        top = a[:, level, :]
        top_c = np.where(top > p_top // 2, top - p_top, top)
        q = ring.q(level)
        diff = ring.sub(a[:, :level, :], np.mod(top_c[:, None, :], q[None]), level)
        inv = np.array([pow(p_top, -1, int(p)) for p in ring.moduli[:level]], dtype=np.int64)
        return ring.mul(diff, np.broadcast_to(inv[None, :, None], diff.shape), level)

    def _drop(self, a, level, target):
        return np.ascontiguousarray(a[:, :target + 1, :])

