# Compiled kernels for the word backend: every modulus < 2^32, residues held in uint64.
# Arrays are (L, d) with limb-major layout; q is a (L,) uint64 vector.
import numpy as np
from numba import njit

_S32 = np.uint64(32)
_ONE = np.uint64(1)
_ZERO = np.uint64(0)
_LO32 = np.uint64(0xFFFFFFFF)


@njit(inline="always")
def _shoup(x, w, ws, q):
    # x*w mod q for x < 2^32, ws = floor(w*2^32/q)
    v = x * w - ((x * ws) >> _S32) * q
    return min(v, v - q)


@njit(inline="always")
def _red64(x, q, r, r_sh, b_sh):
    """x mod q for any 64-bit x without division; r = 2^32 mod q, r_sh its Shoup
    constant and b_sh = floor(2^32/q). Take them as scalars so loops vectorize."""
    a = _shoup(x >> _S32, r, r_sh, q)
    b = _shoup(x & _LO32, _ONE, b_sh, q)
    s = a + b
    return min(s, s - q)


@njit(cache=True)
def ntt_forward(a, q, psi, psi_sh):
    """In-place negacyclic NTT (Cooley-Tukey, bit-reversed psi powers, Shoup multiply).

    Butterflies are branch-free (min(v, v - q) is a conditional subtract on unsigned
    words) so the inner loop vectorizes.
    """
    L, n = a.shape
    for l in range(L):
        ql = q[l]
        row = a[l]
        t = n
        m = 1
        while m < n:
            t >>= 1
            for i in range(m):
                j1 = 2 * i * t
                w = psi[l, m + i]
                ws = psi_sh[l, m + i]
                lo = row[j1:j1 + t]
                hi = row[j1 + t:j1 + 2 * t]
                for j in range(t):
                    u = lo[j]
                    x = hi[j]
                    v = x * w - ((x * ws) >> _S32) * ql
                    v = min(v, v - ql)
                    s = u + v
                    lo[j] = min(s, s - ql)
                    dd = u + ql - v
                    hi[j] = min(dd, dd - ql)
            m <<= 1


@njit(cache=True)
def ntt_inverse(a, q, ipsi, ipsi_sh, ninv, ninv_sh):
    """In-place inverse of ntt_forward (Gentleman-Sande), including the 1/d scaling."""
    L, n = a.shape
    for l in range(L):
        ql = q[l]
        row = a[l]
        t = 1
        m = n >> 1
        while m >= 1:
            for i in range(m):
                j1 = 2 * i * t
                w = ipsi[l, m + i]
                ws = ipsi_sh[l, m + i]
                lo = row[j1:j1 + t]
                hi = row[j1 + t:j1 + 2 * t]
                for j in range(t):
                    u = lo[j]
                    x = hi[j]
                    s = u + x
                    lo[j] = min(s, s - ql)
                    dd = u + ql - x
                    dd = min(dd, dd - ql)
                    v = dd * w - ((dd * ws) >> _S32) * ql
                    hi[j] = min(v, v - ql)
            t <<= 1
            m >>= 1
        w = ninv[l]
        ws = ninv_sh[l]
        for j in range(n):
            x = row[j]
            v = x * w - ((x * ws) >> _S32) * ql
            row[j] = min(v, v - ql)


@njit(cache=True)
def mul_pointwise(a, b, q, red, out):
    L, n = a.shape
    for l in range(L):
        ql = q[l]
        r, r_sh, b_sh = red[l, 0], red[l, 1], red[l, 2]
        for j in range(n):
            out[l, j] = _red64(a[l, j] * b[l, j], ql, r, r_sh, b_sh)


@njit(cache=True)
def mul_pointwise_shoup(a, b, b_sh, q, out):
    """out = a*b mod q with b fixed and b_sh = floor(b*2^32/q) precomputed."""
    L, n = a.shape
    for l in range(L):
        ql = q[l]
        for j in range(n):
            out[l, j] = _shoup(a[l, j], b[l, j], b_sh[l, j], ql)


@njit(cache=True)
def add_mod(a, b, q, out):
    L, n = a.shape
    for l in range(L):
        ql = q[l]
        for j in range(n):
            s = a[l, j] + b[l, j]
            out[l, j] = min(s, s - ql)


BLOCK = 2048


@njit(cache=True)
def sparse_mul_blocked(out, u, idx, vals, q, red, prereduce):
    """out = t*u mod q, accumulating over output blocks that stay in L1 cache.

    Without ``prereduce`` the caller guarantees h*(q-1)^2 < 2^64, with it h*(q-1) < 2^64.
    Each block is reduced once after all h monomials have been added.
    """
    L, n = u.shape
    buf = np.empty(BLOCK, dtype=np.uint64)
    for l in range(L):
        ql = q[l]
        r, r_sh, b_sh = red[l, 0], red[l, 1], red[l, 2]
        ul = u[l]
        ol = out[l]
        for j0 in range(0, n, BLOCK):
            j1 = min(j0 + BLOCK, n)
            m = j1 - j0
            buf[:m] = _ZERO
            for k in range(idx.shape[0]):
                s = idx[k]
                c = vals[l, k]
                cn = ql - c if c != _ZERO else _ZERO
                # wrapped part: j < s takes -c * u[n - s + j]
                hi = min(j1, s)
                if hi > j0:
                    src = ul[n - s + j0:n - s + hi]
                    dst = buf[:hi - j0]
                    if prereduce:
                        for j in range(hi - j0):
                            dst[j] += _red64(cn * src[j], ql, r, r_sh, b_sh)
                    else:
                        for j in range(hi - j0):
                            dst[j] += cn * src[j]
                lo = max(j0, s)
                if j1 > lo:
                    src = ul[lo - s:j1 - s]
                    dst = buf[lo - j0:m]
                    if prereduce:
                        for j in range(j1 - lo):
                            dst[j] += _red64(c * src[j], ql, r, r_sh, b_sh)
                    else:
                        for j in range(j1 - lo):
                            dst[j] += c * src[j]
            for j in range(m):
                ol[j0 + j] = _red64(buf[j], ql, r, r_sh, b_sh)


@njit(cache=True)
def sparse_mac_eager(acc, u, idx, vals, q):
    """acc += t*u reducing after every product; for moduli without accumulator headroom."""
    L, n = u.shape
    for l in range(L):
        ql = q[l]
        for k in range(idx.shape[0]):
            s = idx[k]
            c = vals[l, k]
            cn = ql - c if c != _ZERO else _ZERO
            for j in range(s):
                acc[l, j] = (acc[l, j] + (cn * u[l, n - s + j]) % ql) % ql
            for j in range(s, n):
                acc[l, j] = (acc[l, j] + (c * u[l, j - s]) % ql) % ql


@njit(cache=True)
def inv_pointwise(a, q, out):
    """Modular inverse of every entry by Fermat; returns False if any entry is zero."""
    L, n = a.shape
    for l in range(L):
        ql = q[l]
        e0 = ql - np.uint64(2)
        for j in range(n):
            x = a[l, j]
            if x == _ZERO:
                return False
            r = _ONE
            e = e0
            while e > _ZERO:
                if e & _ONE:
                    r = (r * x) % ql
                x = (x * x) % ql
                e >>= _ONE
            out[l, j] = r
    return True


@njit(cache=True)
def decode_single(w, q, p, p_sh, out):
    """round_half_up(p*w/q) mod p for one limb; p_sh = floor(p*2^32/q)."""
    n = w.shape[1]
    ql = q[0]
    for j in range(n):
        x = w[0, j]
        i = (x * p_sh) >> _S32
        f = x * p - i * ql
        if f >= ql:
            f -= ql
            i += _ONE
        if f + f >= ql:
            i += _ONE
        out[j] = _ZERO if i == p else i


@njit(cache=True)
def decode_rns(w, q, crt_inv, crt_inv_sh, p, p_sh, qinv, out, frac):
    """BFV rounding of the CRT value of w.

    For each coefficient y_i = w_i * (Q/q_i)^-1 mod q_i and p*y_i = I_i*q_i + f_i,
    so round(p*w/Q) = sum(I_i) + round(sum(f_i/q_i)) modulo p. The integer part is
    exact; the fractional sum is returned in ``frac`` so callers can detect ties.
    """
    L, n = w.shape
    for j in range(n):
        tot = _ZERO
        f = 0.0
        for l in range(L):
            ql = q[l]
            y = _shoup(w[l, j], crt_inv[l], crt_inv_sh[l], ql)
            i = (y * p_sh[l]) >> _S32
            r = y * p - i * ql
            if r >= ql:
                r -= ql
                i += _ONE
            tot += i
            f += r * qinv[l]
        out[j] = tot
        frac[j] = f
