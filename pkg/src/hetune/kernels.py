"""Hot inner loops, each with a numba kernel and a vectorised numpy twin.

Dispatch is decided once by :data:`hetune._accel.USE_NUMBA`. Both variants are
importable directly (``*_numba`` / ``*_numpy``) so tests and the benchmark can
compare them side by side.

Modular arithmetic works on int64 residues modulo primes below ``2**50``.
Products are reduced with a floating-point quotient estimate followed by an
exact wrap-around correction in uint64, which is valid as long as
``p < 2**50``.
"""
import numpy as np

from . import _accel
from ._accel import USE_NUMBA, jit

HAVE_NUMBA = _accel.HAVE_NUMBA

MAX_MODULUS_BITS = 50


# --------------------------------------------------------------------------
# modular multiplication

def mulmod_numpy(a, b, p):
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    p = np.asarray(p, dtype=np.int64)
    q = (a.astype(np.float64) * b.astype(np.float64) / p.astype(np.float64)).astype(np.int64)
    with np.errstate(over="ignore"):
        r = (a.astype(np.uint64) * b.astype(np.uint64)
             - q.astype(np.uint64) * p.astype(np.uint64)).view(np.int64)
    r = np.where(r < 0, r + p, r)
    return np.where(r >= p, r - p, r)


def _mulmod_scalar(a, b, p):
    q = np.int64(np.float64(a) * np.float64(b) / np.float64(p))
    r = np.int64(np.uint64(a) * np.uint64(b) - np.uint64(q) * np.uint64(p))
    if r < 0:
        r += p
    elif r >= p:
        r -= p
    return r


_mulmod_jit = jit(_mulmod_scalar)


def _mulmod_rows(a, b, moduli):
    out = np.empty_like(a)
    for i in range(a.shape[0]):
        p = moduli[i]
        for j in range(a.shape[1]):
            out[i, j] = _mulmod_jit(a[i, j], b[i, j], p)
    return out


_mulmod_rows_numba = jit(_mulmod_rows) if _mulmod_jit is not None else None


def mulmod_rows_numba(a, b, moduli):
    return _mulmod_rows_numba(np.ascontiguousarray(a, dtype=np.int64),
                              np.ascontiguousarray(b, dtype=np.int64),
                              np.asarray(moduli, dtype=np.int64))


def mulmod_rows_numpy(a, b, moduli):
    return mulmod_numpy(a, b, np.asarray(moduli, dtype=np.int64)[:, None])


# --------------------------------------------------------------------------
# negacyclic NTT over Z_p[X]/(X^n + 1), one row per RNS limb
#
# psi_rev[i, k] = psi_i ** bitrev(k), psi_inv_rev[i, k] = psi_i ** -bitrev(k),
# psi_i a primitive 2n-th root of unity mod moduli[i]. Forward output is in
# bit-reversed order; the inverse consumes that order.

def _ntt_forward(a, moduli, psi_rev):
    rows, n = a.shape
    for r in range(rows):
        p = moduli[r]
        t = n
        m = 1
        while m < n:
            t //= 2
            for i in range(m):
                j1 = 2 * i * t
                s = psi_rev[r, m + i]
                for j in range(j1, j1 + t):
                    u = a[r, j]
                    v = _mulmod_jit(a[r, j + t], s, p)
                    x = u + v
                    if x >= p:
                        x -= p
                    y = u - v
                    if y < 0:
                        y += p
                    a[r, j] = x
                    a[r, j + t] = y
            m *= 2
    return a


def _ntt_inverse(a, moduli, psi_inv_rev, n_inv):
    rows, n = a.shape
    for r in range(rows):
        p = moduli[r]
        t = 1
        m = n
        while m > 1:
            h = m // 2
            j1 = 0
            for i in range(h):
                s = psi_inv_rev[r, h + i]
                for j in range(j1, j1 + t):
                    u = a[r, j]
                    v = a[r, j + t]
                    x = u + v
                    if x >= p:
                        x -= p
                    y = u - v
                    if y < 0:
                        y += p
                    a[r, j] = x
                    a[r, j + t] = _mulmod_jit(y, s, p)
                j1 += 2 * t
            t *= 2
            m = h
        for j in range(n):
            a[r, j] = _mulmod_jit(a[r, j], n_inv[r], p)
    return a


_ntt_forward_numba = jit(_ntt_forward) if _mulmod_jit is not None else None
_ntt_inverse_numba = jit(_ntt_inverse) if _mulmod_jit is not None else None


def ntt_forward_numba(a, moduli, psi_rev):
    out = np.array(a, dtype=np.int64, copy=True, order="C")
    return _ntt_forward_numba(out, moduli, psi_rev)


def ntt_inverse_numba(a, moduli, psi_inv_rev, n_inv):
    out = np.array(a, dtype=np.int64, copy=True, order="C")
    return _ntt_inverse_numba(out, moduli, psi_inv_rev, n_inv)


def ntt_forward_numpy(a, moduli, psi_rev):
    a = np.array(a, dtype=np.int64, copy=True)
    rows, n = a.shape
    p = np.asarray(moduli, dtype=np.int64)[:, None, None]
    t, m = n, 1
    while m < n:
        t //= 2
        blk = a.reshape(rows, m, 2, t)
        s = psi_rev[:, m:2 * m, None]
        u = blk[:, :, 0, :]
        v = mulmod_numpy(blk[:, :, 1, :], s, p)
        x = u + v
        x = np.where(x >= p, x - p, x)
        y = u - v
        y = np.where(y < 0, y + p, y)
        blk[:, :, 0, :] = x
        blk[:, :, 1, :] = y
        m *= 2
    return a


def ntt_inverse_numpy(a, moduli, psi_inv_rev, n_inv):
    a = np.array(a, dtype=np.int64, copy=True)
    rows, n = a.shape
    p = np.asarray(moduli, dtype=np.int64)[:, None, None]
    t, m = 1, n
    while m > 1:
        h = m // 2
        blk = a.reshape(rows, h, 2, t)
        s = psi_inv_rev[:, h:m, None]
        u = blk[:, :, 0, :].copy()
        v = blk[:, :, 1, :]
        x = u + v
        x = np.where(x >= p, x - p, x)
        y = u - v
        y = np.where(y < 0, y + p, y)
        blk[:, :, 0, :] = x
        blk[:, :, 1, :] = mulmod_numpy(y, s, p)
        t *= 2
        m = h
    return mulmod_numpy(a, np.asarray(n_inv, dtype=np.int64)[:, None],
                        np.asarray(moduli, dtype=np.int64)[:, None])


# --------------------------------------------------------------------------
# discrete LTI recurrence with a constant reference and a per-sample
# disturbance, zero initial state:
#   y[k]   = c.x[k] + d_r*r + d_v*v[k]
#   x[k+1] = A x[k] + b_r*r + b_v*v[k]

def _lti_run(a, b_r, b_v, c, d_r, d_v, r, v):
    nx = a.shape[0]
    steps = v.shape[0]
    y = np.empty(steps)
    x = np.zeros(nx)
    xn = np.zeros(nx)
    for k in range(steps):
        acc = d_r * r + d_v * v[k]
        for i in range(nx):
            acc += c[i] * x[i]
        y[k] = acc
        for i in range(nx):
            s = b_r[i] * r + b_v[i] * v[k]
            for j in range(nx):
                s += a[i, j] * x[j]
            xn[i] = s
        for i in range(nx):
            x[i] = xn[i]
    return y


_lti_run_numba = jit(_lti_run)


def lti_run_numba(a, b_r, b_v, c, d_r, d_v, r, v):
    return _lti_run_numba(np.ascontiguousarray(a, dtype=np.float64),
                          np.ascontiguousarray(b_r, dtype=np.float64),
                          np.ascontiguousarray(b_v, dtype=np.float64),
                          np.ascontiguousarray(c, dtype=np.float64),
                          float(d_r), float(d_v), float(r),
                          np.ascontiguousarray(v, dtype=np.float64))


def lti_run_numpy(a, b_r, b_v, c, d_r, d_v, r, v):
    a = np.asarray(a, dtype=np.float64)
    drive = np.outer(np.asarray(v, dtype=np.float64), b_v) + r * np.asarray(b_r, dtype=np.float64)
    states = np.empty((len(v), a.shape[0]))
    x = np.zeros(a.shape[0])
    for k in range(len(v)):
        states[k] = x
        x = a @ x + drive[k]
    return states @ np.asarray(c, dtype=np.float64) + d_r * r + d_v * np.asarray(v, dtype=np.float64)


if USE_NUMBA:
    mulmod_rows = mulmod_rows_numba
    ntt_forward = ntt_forward_numba
    ntt_inverse = ntt_inverse_numba
    lti_run = lti_run_numba
else:
    mulmod_rows = mulmod_rows_numpy
    ntt_forward = ntt_forward_numpy
    ntt_inverse = ntt_inverse_numpy
    lti_run = lti_run_numpy

BACKEND = "numba" if USE_NUMBA else "numpy"
