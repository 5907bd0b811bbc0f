"""Arithmetic in R_q = Z_q[X]/(X^d + 1) under a residue number system.

Two storage backends share one interface:

* word: every modulus below 2^32, residues in ``uint64`` arrays, compiled kernels
  with Shoup-constant reduction.
* wide: any modulus in [2^32, 2^62), residues as Python ints in ``object`` arrays,
  vectorized numpy butterflies. Slower but exact for the full modulus range.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from enum import IntEnum
from functools import cached_property

import numpy as np
from sympy import isprime

from . import _kernels as K
from .errors import ContractError, NotInvertible

WORD_LIMIT = 1 << 32
MODULUS_LIMIT = 1 << 62
ERROR_ETA = 21  # centered binomial B(2*eta, 1/2) - eta, variance eta/2 = 10.5


class Domain(IntEnum):
    COEFF = 0
    NTT = 1


@dataclass
class OpCounter:
    """Tally of scalar modular multiplications performed by instrumented calls."""

    mul: int = 0

    def add(self, n: int) -> None:
        self.mul += int(n)


def _bitrev(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    out = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        out |= ((idx >> b) & 1) << (bits - 1 - b)
    return out


def _root_2d(q: int, d: int) -> int:
    """Smallest-generator primitive 2d-th root of unity mod q."""
    e = (q - 1) // (2 * d)
    for g in range(2, q):
        psi = pow(g, e, q)
        if pow(psi, d, q) == q - 1:
            return psi
    raise ContractError(f"no primitive {2 * d}-th root mod {q}")


def ntt_primes(d: int, bits: int, count: int = 1, exclude=()) -> list[int]:
    """The ``count`` largest primes below 2^bits with q = 1 mod 2d."""
    step = 2 * d
    q = ((1 << bits) - 1) // step * step + 1
    out = []
    while len(out) < count:
        if q < step:
            raise ContractError(f"not enough NTT primes below 2^{bits} for d={d}")
        if q < (1 << bits) and q not in exclude and isprime(q):
            out.append(q)
        q -= step
    return out


def parse_descriptor(text: str) -> tuple[int, tuple[int, ...]]:
    """Split ``d=<u32> moduli=<q0>,<q1>,...`` into (d, moduli) without building tables."""
    m = re.fullmatch(r"\s*d=(\d{1,10})\s+moduli=(\d{1,20}(?:,\d{1,20})*)\s*", text)
    if not m:
        raise ContractError(f"bad context descriptor: {text!r}")
    return int(m.group(1)), tuple(int(x) for x in m.group(2).split(","))


class RingContext:
    """Ring degree, RNS moduli and precomputed transform tables. Immutable.

    ``ntt=False`` admits primes with q != 1 mod 2d for small exact experiments: such a
    ring has no transform, multiplies by schoolbook and inverts by Euclid.
    """

    def __init__(self, d: int, moduli, *, ntt: bool = True):
        d = int(d)
        moduli = tuple(int(q) for q in moduli)
        if d < 2 or d & (d - 1):
            raise ContractError(f"d must be a power of two >= 2, got {d}")
        if not moduli:
            raise ContractError("at least one modulus is required")
        if len(set(moduli)) != len(moduli):
            raise ContractError("moduli must be distinct")
        for q in moduli:
            if not 2 < q < MODULUS_LIMIT:
                raise ContractError(f"modulus {q} outside (2, 2^62)")
            if ntt and q % (2 * d) != 1:
                raise ContractError(f"modulus {q} is not 1 mod 2d={2 * d}")
            if not isprime(q):
                raise ContractError(f"modulus {q} is not prime")
        self.d = d
        self.moduli = moduli
        self.ntt = bool(ntt)
        self.L = len(moduli)
        self.wide = max(moduli) >= WORD_LIMIT
        self.dtype = object if self.wide else np.uint64
        self.q_big = 1
        for q in moduli:
            self.q_big *= q
        # CRT basis: Q_i = Q/q_i and (Q_i)^-1 mod q_i
        self.crt_cofactors = tuple(self.q_big // q for q in moduli)
        self.crt_inverses = tuple(pow(c % q, -1, q) for c, q in zip(self.crt_cofactors, moduli))
        self._build_tables()

    def _build_tables(self):
        d, L = self.d, self.L
        sh = lambda w, q: (int(w) << 32) // q
        self.q_vec = np.array(self.moduli, dtype=object if self.wide else np.uint64)
        if not self.wide:
            self.crt_inv_vec = np.array(self.crt_inverses, dtype=np.uint64)
            self.crt_inv_sh = np.array([sh(c, q) for c, q in zip(self.crt_inverses, self.moduli)],
                                       dtype=np.uint64)
            self.red = np.array([[(1 << 32) % q, sh((1 << 32) % q, q), (1 << 32) // q]
                                 for q in self.moduli], dtype=np.uint64)
            self.q_inv_f = np.array([1.0 / q for q in self.moduli])
        if not self.ntt:
            self.roots = ()
            return
        rev = _bitrev(d)
        psi = np.empty((L, d), dtype=object)
        ipsi = np.empty((L, d), dtype=object)
        for i, q in enumerate(self.moduli):
            root = _root_2d(q, d)
            iroot = pow(root, -1, q)
            pw = [1] * d
            ipw = [1] * d
            for k in range(1, d):
                pw[k] = pw[k - 1] * root % q
                ipw[k] = ipw[k - 1] * iroot % q
            psi[i] = [pw[r] for r in rev]
            ipsi[i] = [ipw[r] for r in rev]
        self.roots = tuple(int(psi[i, 1]) for i in range(L))
        ninv = [pow(d, -1, q) for q in self.moduli]
        if self.wide:
            self.psi, self.ipsi = psi, ipsi
            self.ninv = np.array(ninv, dtype=object)
        else:
            self.psi = psi.astype(np.uint64)
            self.ipsi = ipsi.astype(np.uint64)
            self.psi_sh = np.array([[sh(w, q) for w in row] for row, q in zip(psi, self.moduli)],
                                   dtype=np.uint64)
            self.ipsi_sh = np.array([[sh(w, q) for w in row] for row, q in zip(ipsi, self.moduli)],
                                    dtype=np.uint64)
            self.ninv = np.array(ninv, dtype=np.uint64)
            self.ninv_sh = np.array([sh(n, q) for n, q in zip(ninv, self.moduli)], dtype=np.uint64)

    def shoup(self, w: int) -> np.ndarray:
        """Per-limb Shoup constants floor((w mod q_i) * 2^32 / q_i) for a scalar w."""
        cache = self.__dict__.setdefault("_shoup_cache", {})
        out = cache.get(w)
        if out is None:
            out = cache[w] = np.array([((w % q) << 32) // q for q in self.moduli], dtype=np.uint64)
        return out

    @property
    def logq(self) -> float:
        return math.log2(self.q_big)

    def table_words(self) -> int:
        """Stored words for one direction of transform tables (one per coefficient per limb)."""
        return self.d * self.L

    @classmethod
    def parse(cls, text: str) -> "RingContext":
        return cls(*parse_descriptor(text))

    def describe(self) -> str:
        return f"d={self.d} moduli={','.join(str(q) for q in self.moduli)}"

    def __eq__(self, other):
        return (isinstance(other, RingContext)
                and (self.d, self.moduli, self.ntt) == (other.d, other.moduli, other.ntt))

    def __hash__(self):
        return hash((self.d, self.moduli, self.ntt))

    def __repr__(self):
        return f"RingContext({self.describe()}{'' if self.ntt else ', ntt=False'})"

    @cached_property
    def _qcol(self):
        return self.q_vec.reshape(self.L, 1)


@dataclass(eq=False)
class RnsPoly:
    ctx: RingContext
    coeffs: np.ndarray  # (L, d); uint64 or object
    domain: Domain = Domain.COEFF

    def __eq__(self, other):
        return (isinstance(other, RnsPoly) and self.ctx == other.ctx
                and self.domain == other.domain and np.array_equal(self.coeffs, other.coeffs))

    def copy(self) -> "RnsPoly":
        return RnsPoly(self.ctx, self.coeffs.copy(), self.domain)

    def limb(self, i: int) -> np.ndarray:
        return self.coeffs[i]


@dataclass(eq=False)
class BigCoeffPoly:
    ctx: RingContext
    coeffs: np.ndarray = field(repr=False)  # (d,) object array in [0, q_big)

    def __eq__(self, other):
        return isinstance(other, BigCoeffPoly) and self.ctx == other.ctx and list(self.coeffs) == list(other.coeffs)


# -- construction helpers ------------------------------------------------------

def zeros(ctx: RingContext, domain: Domain = Domain.COEFF) -> RnsPoly:
    if ctx.wide:
        c = np.empty((ctx.L, ctx.d), dtype=object)
        c.fill(0)
    else:
        c = np.zeros((ctx.L, ctx.d), dtype=np.uint64)
    return RnsPoly(ctx, c, domain)


def from_ints(ctx: RingContext, values) -> RnsPoly:
    """Embed signed integer coefficients (length d) into every limb."""
    vals = np.asarray(values)
    if vals.shape != (ctx.d,):
        raise ContractError(f"expected {ctx.d} coefficients, got shape {vals.shape}")
    if vals.dtype == object or ctx.wide:
        ints = [int(v) for v in vals]
        rows = [[v % q for v in ints] for q in ctx.moduli]
        c = np.array(rows, dtype=object) if ctx.wide else np.array(rows, dtype=np.uint64)
    else:
        v = vals.astype(np.int64)
        c = np.stack([(v % np.int64(q)).astype(np.uint64) for q in ctx.moduli])
    return RnsPoly(ctx, c, Domain.COEFF)


def constant(ctx: RingContext, c: int = 1) -> RnsPoly:
    v = np.zeros(ctx.d, dtype=object)
    v[0] = int(c)
    return from_ints(ctx, v)


def monomial(ctx: RingContext, k: int, c: int = 1) -> RnsPoly:
    v = np.zeros(ctx.d, dtype=object)
    v[k] = int(c)
    return from_ints(ctx, v)


def to_signed(p: RnsPoly) -> list[int]:
    """Centered integer representatives in (-q_big/2, q_big/2]."""
    big = crt_reconstruct(p)
    Q = p.ctx.q_big
    return [int(x) - Q if 2 * int(x) > Q else int(x) for x in big.coeffs]


def _check(a: RnsPoly, b: RnsPoly):
    if a.ctx is not b.ctx and a.ctx != b.ctx:
        raise ContractError("ring context mismatch")


def _need(p: RnsPoly, dom: Domain, op: str):
    if p.domain != dom:
        raise ContractError(f"{op} expects {dom.name} domain, got {p.domain.name}")


# -- transforms ---------------------------------------------------------------

def _wide_forward(a, ctx):
    L, n = a.shape
    a = a.copy()
    q3 = ctx.q_vec.reshape(L, 1, 1)
    t, m = n, 1
    while m < n:
        t //= 2
        A = a.reshape(L, m, 2, t)
        w = ctx.psi[:, m:2 * m].reshape(L, m, 1)
        u = A[:, :, 0, :].copy()
        v = (A[:, :, 1, :] * w) % q3
        A[:, :, 0, :] = (u + v) % q3
        A[:, :, 1, :] = (u - v) % q3
        m *= 2
    return a


def _wide_inverse(a, ctx):
    L, n = a.shape
    a = a.copy()
    q3 = ctx.q_vec.reshape(L, 1, 1)
    t, m = 1, n // 2
    while m >= 1:
        A = a.reshape(L, m, 2, t)
        w = ctx.ipsi[:, m:2 * m].reshape(L, m, 1)
        u = A[:, :, 0, :].copy()
        x = A[:, :, 1, :].copy()
        A[:, :, 0, :] = (u + x) % q3
        A[:, :, 1, :] = ((u - x) * w) % q3
        t *= 2
        m //= 2
    return (a * ctx.ninv.reshape(L, 1)) % ctx._qcol


def _ntt_muls(ctx: RingContext) -> int:
    n = ctx.d
    return ctx.L * (n // 2) * (n.bit_length() - 1)


def ntt_forward(p: RnsPoly, ctx: RingContext | None = None, counter: OpCounter | None = None) -> RnsPoly:
    ctx = ctx or p.ctx
    if ctx != p.ctx:
        raise ContractError("ring context mismatch")
    _need(p, Domain.COEFF, "ntt_forward")
    if not ctx.ntt:
        raise ContractError(f"{ctx} has no NTT")
    if ctx.wide:
        out = _wide_forward(p.coeffs, ctx)
    else:
        out = p.coeffs.copy()
        K.ntt_forward(out, ctx.q_vec, ctx.psi, ctx.psi_sh)
    if counter is not None:
        counter.add(_ntt_muls(ctx))
    return RnsPoly(ctx, out, Domain.NTT)


def ntt_inverse(p: RnsPoly, ctx: RingContext | None = None, counter: OpCounter | None = None) -> RnsPoly:
    ctx = ctx or p.ctx
    if ctx != p.ctx:
        raise ContractError("ring context mismatch")
    _need(p, Domain.NTT, "ntt_inverse")
    if not ctx.ntt:
        raise ContractError(f"{ctx} has no NTT")
    if ctx.wide:
        out = _wide_inverse(p.coeffs, ctx)
    else:
        out = p.coeffs.copy()
        K.ntt_inverse(out, ctx.q_vec, ctx.ipsi, ctx.ipsi_sh, ctx.ninv, ctx.ninv_sh)
    if counter is not None:
        counter.add(_ntt_muls(ctx) + ctx.L * ctx.d)
    return RnsPoly(ctx, out, Domain.COEFF)


def to_ntt(p: RnsPoly) -> RnsPoly:
    return p if p.domain == Domain.NTT else ntt_forward(p)


def to_coeff(p: RnsPoly) -> RnsPoly:
    return p if p.domain == Domain.COEFF else ntt_inverse(p)


# -- ring operations ----------------------------------------------------------

def mul_pointwise(a: RnsPoly, b: RnsPoly, counter: OpCounter | None = None) -> RnsPoly:
    _check(a, b)
    _need(a, Domain.NTT, "mul_pointwise")
    _need(b, Domain.NTT, "mul_pointwise")
    ctx = a.ctx
    if ctx.wide:
        out = (a.coeffs * b.coeffs) % ctx._qcol
    else:
        out = np.empty_like(a.coeffs)
        K.mul_pointwise(a.coeffs, b.coeffs, ctx.q_vec, ctx.red, out)
    if counter is not None:
        counter.add(ctx.L * ctx.d)
    return RnsPoly(ctx, out, Domain.NTT)


def poly_mul(a: RnsPoly, b: RnsPoly, ctx: RingContext | None = None) -> RnsPoly:
    """Negacyclic product. NTT inputs give an NTT result; otherwise COEFF."""
    _check(a, b)
    if ctx is not None and ctx != a.ctx:
        raise ContractError("ring context mismatch")
    if not a.ctx.ntt:
        _need(a, Domain.COEFF, "poly_mul")
        _need(b, Domain.COEFF, "poly_mul")
        return _schoolbook_mul(a, b)
    both_ntt = a.domain == Domain.NTT and b.domain == Domain.NTT
    prod = mul_pointwise(to_ntt(a), to_ntt(b))
    return prod if both_ntt else ntt_inverse(prod)


def _schoolbook_mul(a: RnsPoly, b: RnsPoly) -> RnsPoly:
    ctx = a.ctx
    d = ctx.d
    out = zeros(ctx)
    for i, q in enumerate(ctx.moduli):
        full = np.convolve(a.coeffs[i].astype(object), b.coeffs[i].astype(object))
        row = full[:d].copy()
        row[:d - 1] -= full[d:]
        out.coeffs[i] = [int(x) % q for x in row]
    return out


def _same_domain(a, b, op):
    _check(a, b)
    if a.domain != b.domain:
        raise ContractError(f"{op}: domain mismatch ({a.domain.name} vs {b.domain.name})")


def poly_add(a: RnsPoly, b: RnsPoly, ctx: RingContext | None = None) -> RnsPoly:
    _same_domain(a, b, "poly_add")
    if a.ctx.wide:
        out = (a.coeffs + b.coeffs) % a.ctx._qcol
    else:
        out = np.empty_like(a.coeffs)
        K.add_mod(a.coeffs, b.coeffs, a.ctx.q_vec, out)
    return RnsPoly(a.ctx, out, a.domain)


def poly_neg(a: RnsPoly, ctx: RingContext | None = None) -> RnsPoly:
    qcol = a.ctx._qcol
    out = (qcol - a.coeffs) % qcol
    return RnsPoly(a.ctx, out, a.domain)


def poly_sub(a: RnsPoly, b: RnsPoly, ctx: RingContext | None = None) -> RnsPoly:
    _same_domain(a, b, "poly_sub")
    return poly_add(a, poly_neg(b))


def scalar_mul(a: RnsPoly, c: int) -> RnsPoly:
    ctx = a.ctx
    if ctx.wide:
        cv = np.array([int(c) % q for q in ctx.moduli], dtype=object).reshape(ctx.L, 1)
        out = (a.coeffs * cv) % ctx._qcol
    else:
        cv = np.array([[int(c) % q] * ctx.d for q in ctx.moduli], dtype=np.uint64)
        out = np.empty_like(a.coeffs)
        K.mul_pointwise(a.coeffs, cv, ctx.q_vec, ctx.red, out)
    return RnsPoly(ctx, out, a.domain)


# -- CRT ------------------------------------------------------------------------

def crt_reconstruct(p: RnsPoly, ctx: RingContext | None = None) -> BigCoeffPoly:
    _need(p, Domain.COEFF, "crt_reconstruct")
    ctx = p.ctx
    acc = np.zeros(ctx.d, dtype=object)
    for i, q in enumerate(ctx.moduli):
        row = p.coeffs[i].astype(object)
        acc = acc + (row * ctx.crt_inverses[i] % q) * ctx.crt_cofactors[i]
    return BigCoeffPoly(ctx, acc % ctx.q_big)


def crt_decompose(big: BigCoeffPoly, ctx: RingContext | None = None) -> RnsPoly:
    ctx = ctx or big.ctx
    vals = np.asarray(big.coeffs, dtype=object)
    if ctx.wide:
        c = np.stack([vals % q for q in ctx.moduli])
    else:
        c = np.array([[int(v) % q for v in vals] for q in ctx.moduli], dtype=np.uint64)
    return RnsPoly(ctx, c, Domain.COEFF)


# -- inversion ------------------------------------------------------------------

def _inv_rows(rows: np.ndarray, qs, wide: bool) -> np.ndarray | None:
    if wide:
        out = np.empty_like(rows)
        for i, q in enumerate(qs):
            r = rows[i]
            if any(int(x) == 0 for x in r):
                return None
            out[i] = [pow(int(x), -1, q) for x in r]
        return out
    out = np.empty_like(rows)
    ok = K.inv_pointwise(rows, np.asarray(qs, dtype=np.uint64), out)
    return out if ok else None


def invert_in_limb(p: RnsPoly, i: int) -> np.ndarray:
    """Inverse of limb i in R_{q_i}, returned in the same domain as ``p``."""
    ctx = p.ctx
    if not ctx.ntt:
        return invert(p).coeffs[i]
    hat = p if p.domain == Domain.NTT else ntt_forward(p)
    row = hat.coeffs[i:i + 1].copy()
    inv = _inv_rows(row, ctx.moduli[i:i + 1], ctx.wide)
    if inv is None:
        raise NotInvertible(f"limb {i} has a zero evaluation")
    if p.domain == Domain.NTT:
        return inv[0]
    full = hat.copy()
    full.coeffs[i] = inv[0]
    return ntt_inverse(full).coeffs[i]


def _poly_inverse(a: list[int], d: int, q: int) -> list[int] | None:
    """Inverse of a in Z_q[X]/(X^d+1) for prime q by extended Euclid, or None."""
    def trim(f):
        while f and f[-1] == 0:
            f.pop()
        return f

    def sub_mul(f, g, c, k):  # f - c*X^k*g
        f = f + [0] * max(0, len(g) + k - len(f))
        for j, x in enumerate(g):
            f[j + k] = (f[j + k] - c * x) % q
        return trim(f)

    r0, r1 = trim([1] + [0] * (d - 1) + [1]), trim([x % q for x in a])
    s0, s1 = [], [1]
    while r1:
        inv_lead = pow(r1[-1], -1, q)
        quot = [0] * max(0, len(r0) - len(r1) + 1)
        r = list(r0)
        while len(r) >= len(r1) and r:
            k = len(r) - len(r1)
            c = r[-1] * inv_lead % q
            quot[k] = c
            r = sub_mul(r, r1, c, k)
        s = list(s0)
        for k, c in enumerate(quot):
            if c:
                s = sub_mul(s, s1, c, k)
        r0, r1, s0, s1 = r1, r, s1, s
    if len(r0) != 1:
        return None
    c = pow(r0[0], -1, q)
    out = [x * c % q for x in s0] + [0] * d
    # s0 has degree < d by construction; fold defensively anyway
    res = [0] * d
    for j, x in enumerate(out):
        res[j % d] = (res[j % d] + (x if (j // d) % 2 == 0 else -x)) % q
    return res


def _invert_generic(p: RnsPoly) -> RnsPoly | None:
    ctx = p.ctx
    out = zeros(ctx)
    for i, q in enumerate(ctx.moduli):
        inv = _poly_inverse([int(x) for x in p.coeffs[i]], ctx.d, q)
        if inv is None:
            return None
        out.coeffs[i] = inv
    return out


def invert(p: RnsPoly) -> RnsPoly:
    """Inverse in R_q, returned in NTT domain (COEFF for a ring without one);
    NotInvertible if any limb is a zero divisor."""
    if not p.ctx.ntt:
        _need(p, Domain.COEFF, "invert")
        inv = _invert_generic(p)
        if inv is None:
            raise NotInvertible("element shares a factor with X^d+1")
        return inv
    hat = to_ntt(p)
    inv = _inv_rows(hat.coeffs, hat.ctx.moduli, hat.ctx.wide)
    if inv is None:
        raise NotInvertible("element has a zero evaluation")
    return RnsPoly(p.ctx, inv, Domain.NTT)


def is_invertible(p: RnsPoly) -> bool:
    if not p.ctx.ntt:
        return _invert_generic(p) is not None
    hat = to_ntt(p)
    return not np.any(hat.coeffs == 0)


# -- samplers -----------------------------------------------------------------

def sample_uniform(ctx: RingContext, rng: np.random.Generator) -> RnsPoly:
    rows = [rng.integers(0, q, size=ctx.d, dtype=np.uint64) for q in ctx.moduli]
    c = np.stack(rows)
    if ctx.wide:
        c = c.astype(object)
    return RnsPoly(ctx, c, Domain.COEFF)


def sample_ternary(ctx: RingContext, rng: np.random.Generator) -> RnsPoly:
    return from_ints(ctx, rng.integers(-1, 2, size=ctx.d))


def sample_error(ctx: RingContext, rng: np.random.Generator) -> RnsPoly:
    e = rng.binomial(2 * ERROR_ETA, 0.5, size=ctx.d).astype(np.int64) - ERROR_ETA
    return from_ints(ctx, e)
