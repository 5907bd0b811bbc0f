"""Outsourced decryption routines.

The client picks a sparse unblinding factor t (kept in factored form), hands the cloud
s~ = s * t^-1, and after the cloud returns u*s~ recovers u*s = (u*s~)*t with h
shift-scale-accumulate passes per factor.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from . import _kernels as K
from . import estimator as E
from . import he
from . import ring as R
from .errors import (ContractError, HeadroomExceeded, InfeasibleParams, InvalidParams,
                     NotInvertible, ResampleLimit)
from .ring import Domain, OpCounter, RingContext, RnsPoly

MAX_ATTEMPTS = 1000
SUPPORTED_LAMBDA = (128, 192, 256)


@dataclass(eq=False)
class SparsePoly:
    ctx: RingContext
    indices: np.ndarray  # (h,) int64, strictly increasing
    values: np.ndarray  # (L, h) residues

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        vals = np.asarray(self.values, dtype=self.ctx.dtype)
        h = idx.shape[0]
        if vals.shape != (self.ctx.L, h):
            raise ContractError(f"sparse values must have shape (L, h) = ({self.ctx.L}, {h})")
        if h and (idx[0] < 0 or idx[-1] >= self.ctx.d or np.any(np.diff(idx) <= 0)):
            raise ContractError("sparse indices must be strictly increasing in [0, d)")
        for i, q in enumerate(self.ctx.moduli):
            if any(int(x) >= q for x in vals[i]):
                raise ContractError("sparse residue out of range")
        if h and not np.all(np.any(vals != 0, axis=0)):
            raise ContractError("every stored position must be nonzero in some limb")
        self.indices, self.values = idx, vals

    @property
    def h(self) -> int:
        return int(self.indices.shape[0])

    def __eq__(self, other):
        return (isinstance(other, SparsePoly) and self.ctx == other.ctx
                and np.array_equal(self.indices, other.indices)
                and np.array_equal(self.values, other.values))

    @classmethod
    def from_ints(cls, ctx: RingContext, indices, values) -> "SparsePoly":
        """Build from integer coefficients shared by every limb (reduced per modulus)."""
        order = np.argsort(indices)
        idx = np.asarray(indices, dtype=np.int64)[order]
        ints = [int(values[k]) for k in order]
        rows = [[v % q for v in ints] for q in ctx.moduli]
        return cls(ctx, idx, np.array(rows, dtype=ctx.dtype).reshape(ctx.L, len(ints)))


def densify(t: SparsePoly) -> RnsPoly:
    out = R.zeros(t.ctx)
    out.coeffs[:, t.indices] = t.values
    return out


def hamming_weight(p: RnsPoly) -> int:
    """Number of coefficient positions that are nonzero in R_q."""
    c = R.to_coeff(p).coeffs
    return int(np.count_nonzero(np.any(c != 0, axis=0)))


@dataclass(eq=False)
class BlindingKeyPair:
    factors: tuple[SparsePoly, ...]
    t_inv: RnsPoly  # NTT domain

    @property
    def ctx(self) -> RingContext:
        return self.t_inv.ctx

    @property
    def weights(self) -> tuple[int, ...]:
        return tuple(f.h for f in self.factors)

    @classmethod
    def from_factors(cls, factors: Sequence[SparsePoly]) -> "BlindingKeyPair":
        """Pair with t = prod(factors); raises NotInvertible if some factor is a zero divisor."""
        factors = tuple(factors)
        t_inv = None
        for f in factors:
            fi = R.invert(densify(f))
            t_inv = fi if t_inv is None else R.poly_mul(t_inv, fi)
        return cls(factors, t_inv)

    @classmethod
    def identity(cls, ctx: RingContext) -> "BlindingKeyPair":
        return cls.from_factors([SparsePoly.from_ints(ctx, [0], [1])])

    def dense_t(self) -> RnsPoly:
        """Product of the factors in coefficient form (tests and diagnostics only)."""
        acc = None
        for f in self.factors:
            acc = densify(f) if acc is None else sparse_dense_mul(f, acc)
        return acc


@dataclass(eq=False)
class BlindedSecretKey:
    s_tilde: RnsPoly  # NTT domain


@dataclass(eq=False)
class BlindedCiphertext:
    u_tilde: RnsPoly  # COEFF domain
    v: RnsPoly

    def __eq__(self, other):
        return isinstance(other, BlindedCiphertext) and self.u_tilde == other.u_tilde and self.v == other.v


@dataclass(frozen=True)
class ProtocolParams:
    ring: RingContext
    lam: int
    h: int
    h1: int
    h2: int
    q2: int = 2


def composite_weight_bound(h1: int, h2: int) -> int:
    return h1 * h2 - min(h1, h2)


def _positions(d: int, h: int, rng: np.random.Generator) -> np.ndarray:
    return np.sort(rng.choice(d, size=h, replace=False)).astype(np.int64)


def skbd_keygen(ring: RingContext, h: int, rng: np.random.Generator,
                max_attempts: int = MAX_ATTEMPTS) -> tuple[SparsePoly, RnsPoly]:
    """Sparse unblinding factor t of weight h and its inverse (NTT domain, or COEFF for a
    ring without a transform).

    Positions are drawn once without replacement; each limb draws its own nonzero
    values in [1, q_i) and retries until that limb of t is a unit.
    """
    d, L = ring.d, ring.L
    if not 1 <= h <= d:
        raise ContractError(f"weight h={h} outside [1, {d}]")
    idx = _positions(d, h, rng)
    vals = np.empty((L, h), dtype=ring.dtype)
    inv = R.zeros(ring, Domain.NTT if ring.ntt else Domain.COEFF)
    attempts = 0
    pending = list(range(L))
    while pending:
        for i in pending:
            vals[i] = rng.integers(1, ring.moduli[i], size=h, dtype=np.uint64)
        dense = R.zeros(ring)
        dense.coeffs[:, idx] = vals
        hat = R.ntt_forward(dense) if ring.ntt else dense
        still = []
        for i in pending:
            attempts += 1
            if ring.ntt:
                r = R._inv_rows(hat.coeffs[i:i + 1], ring.moduli[i:i + 1], ring.wide)
            else:
                row = R._poly_inverse([int(x) for x in hat.coeffs[i]], d, ring.moduli[i])
                r = None if row is None else [row]
            if r is None:
                still.append(i)
            else:
                inv.coeffs[i] = r[0]
        if attempts >= max_attempts and still:
            raise ResampleLimit(f"no invertible factor after {attempts} limb attempts")
        pending = still
    return SparsePoly(ring, idx, vals), inv


def skbd_keygen_composite(ring: RingContext, h1: int, h2: int, q2: int, rng: np.random.Generator,
                          max_attempts: int = MAX_ATTEMPTS) -> BlindingKeyPair:
    """t = A * B with A from skbd_keygen(h1) and B of weight h2 with values in [1, q2)."""
    if h1 < 1 or h2 < 1 or q2 < 2:
        raise InvalidParams("need h1, h2 >= 1 and q2 >= 2")
    if q2 >= min(ring.moduli):
        raise InvalidParams(f"q2={q2} must be below every modulus")
    a, a_inv = skbd_keygen(ring, h1, rng, max_attempts)
    for _ in range(max_attempts):
        idx = _positions(ring.d, h2, rng)
        vals = rng.integers(1, q2, size=h2)
        b = SparsePoly.from_ints(ring, idx, vals)
        try:
            b_inv = R.invert(densify(b))
        except NotInvertible:
            continue
        return BlindingKeyPair((a, b), R.mul_pointwise(a_inv, b_inv))
    raise ResampleLimit(f"no invertible second factor after {max_attempts} attempts")


def blind_secret_key(sk: he.SecretKey, pair: BlindingKeyPair) -> BlindedSecretKey:
    if sk.params.ring != pair.ctx:
        raise ContractError("secret key and blinding pair live in different rings")
    return BlindedSecretKey(R.mul_pointwise(sk.s_hat, pair.t_inv))


def blind_decrypt(bsk: BlindedSecretKey, ct: he.Ciphertext) -> BlindedCiphertext:
    """Cloud side: u~ = u * s~, v passed through."""
    if ct.u.ctx != bsk.s_tilde.ctx:
        raise ContractError("ciphertext and blinded key live in different rings")
    u_t = R.ntt_inverse(R.mul_pointwise(R.ntt_forward(ct.u), bsk.s_tilde))
    return BlindedCiphertext(u_t, ct.v)


@lru_cache(maxsize=1024)
def select_accumulation_path(h: int, q: int, acc_bits: int = 64) -> str:
    """'lazy' if h products of (q-1)^2 fit the accumulator, 'prereduced' if h reduced
    products do; otherwise HeadroomExceeded."""
    limit = 1 << acc_bits
    if h * (q - 1) ** 2 < limit:
        return "lazy"
    if h * (q - 1) < limit:
        return "prereduced"
    raise HeadroomExceeded(f"h={h} with q of {q.bit_length()} bits exceeds a {acc_bits}-bit accumulator")


def _acc_bits(ctx: RingContext) -> int:
    return 128 if ctx.wide else 64


@lru_cache(maxsize=1024)
def _plan(h: int, moduli: tuple[int, ...], acc_bits: int) -> tuple[str, ...]:
    out = []
    for q in moduli:
        try:
            out.append(select_accumulation_path(h, q, acc_bits))
        except HeadroomExceeded:
            out.append("eager")
    return tuple(out)


def _wide_mac(acc, u, idx, vals, q, path):
    n = u.shape[0]
    for s, c in zip(idx, vals):
        s, c = int(s), int(c)
        cn = (q - c) % q
        lo = cn * u[n - s:]
        hi = c * u[:n - s]
        if path != "lazy":
            lo, hi = lo % q, hi % q
        acc[:s] += lo
        acc[s:] += hi
        if path == "eager":
            acc %= q


def _word_mac(out, u, t: SparsePoly, ctx: RingContext, path: str, sl) -> None:
    if path == "eager":
        out[sl] = 0
        K.sparse_mac_eager(out[sl], u[sl], t.indices, t.values[sl], ctx.q_vec[sl])
    else:
        K.sparse_mul_blocked(out[sl], u[sl], t.indices, t.values[sl], ctx.q_vec[sl], ctx.red[sl],
                             path == "prereduced")


def sparse_dense_mul(t: SparsePoly, u: RnsPoly, counter: OpCounter | None = None,
                     path: str | None = None) -> RnsPoly:
    """Negacyclic t*u by monomial shift-scale-accumulate with one final reduction per limb.

    ``path`` forces 'lazy', 'prereduced' or 'eager' (tests); by default each limb takes the
    cheapest path its headroom allows and falls back to eager reduction.
    """
    ctx = u.ctx
    if t.ctx is not ctx and t.ctx != ctx:
        raise ContractError("ring context mismatch")
    if u.domain != Domain.COEFF:
        raise ContractError("sparse_dense_mul expects a COEFF-domain dense operand")
    bits = _acc_bits(ctx)
    plan = _plan(t.h, ctx.moduli, bits) if path is None else (path,) * ctx.L
    if ctx.wide:
        acc = R.zeros(ctx).coeffs
        for i, q in enumerate(ctx.moduli):
            _wide_mac(acc[i], u.coeffs[i], t.indices, t.values[i], q, plan[i])
            if plan[i] != "eager":
                assert all(int(x) < (1 << bits) for x in acc[i]), "accumulator overflow"
            acc[i] %= q
    else:
        acc = np.empty((ctx.L, ctx.d), dtype=np.uint64)
        if len(set(plan)) == 1:
            _word_mac(acc, u.coeffs, t, ctx, plan[0], slice(None))
        else:
            for i in range(ctx.L):
                _word_mac(acc, u.coeffs, t, ctx, plan[i], slice(i, i + 1))
    if counter is not None:
        counter.add(t.h * ctx.d * ctx.L)
    return RnsPoly(ctx, acc, Domain.COEFF)


def unblind(pair: BlindingKeyPair, bct: BlindedCiphertext, counter: OpCounter | None = None,
            order: Sequence[int] | None = None) -> RnsPoly:
    """w = u~ * prod(factors) + v, factors applied one at a time."""
    w = bct.u_tilde
    for k in (order if order is not None else range(len(pair.factors))):
        w = sparse_dense_mul(pair.factors[k], w, counter)
    return R.poly_add(w, bct.v)


def local_decrypt(pair: BlindingKeyPair, bct: BlindedCiphertext, params: he.HeParams,
                  counter: OpCounter | None = None) -> he.Plaintext:
    return he.decode(params, unblind(pair, bct, counter), counter)


def local_mul_count(pair: BlindingKeyPair) -> int:
    """Scalar multiplications local_decrypt performs: sum(h_k)*d*L + 2*d*L."""
    ctx = pair.ctx
    return (sum(pair.weights) + 2) * ctx.d * ctx.L


def min_factor_weight(h: int, h1: int) -> int:
    h2 = 1
    while composite_weight_bound(h1, h2) < h:
        h2 += 1
    return h2


def setup(ring: RingContext, chi_sk: str = "ternary", lam: int = 128, *, h1: int = 6, q2: int = 2,
          enum_target: float | None = None) -> ProtocolParams:
    """Smallest weight h meeting lam bits against the zero-forced attack, and factor
    weights (h1 fixed, h2 minimal) meeting the weight bound and the enumeration gate.

    ``enum_target`` defaults to lam.
    """
    if lam not in SUPPORTED_LAMBDA:
        raise ContractError(f"lambda must be one of {SUPPORTED_LAMBDA}")
    if chi_sk != "ternary":
        raise ContractError("only the ternary secret distribution is modelled")
    d, q = ring.d, ring.q_big
    h = E.min_secure_weight(d, q, lam, h_max=d // 2)
    target = lam if enum_target is None else enum_target
    h2 = min_factor_weight(h, h1)
    while E.composite_enum_bits(d, q, h1, q2, h2) < target:
        h2 += 1
        if h2 > d:
            raise InfeasibleParams("enumeration gate cannot be met for this modulus")
    return ProtocolParams(ring, lam, h, h1, h2, q2)
