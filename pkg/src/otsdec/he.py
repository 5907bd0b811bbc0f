"""Minimal BFV-style public-key encryption over an RNS ring.

Keys follow the cancelling convention b = -a*s + e, so u*s + v = delta1*m + noise.
Decryption rounds p*w/Q half-up on the exact integer representative of w.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from . import ring as R
from .errors import ContractError
from .ring import Domain, OpCounter, RingContext, RnsPoly

DEFAULT_PLAIN = 65537
PLAIN_CANDIDATES = (65537, 257, 17, 5, 3, 2)
SIGMA2 = R.ERROR_ETA / 2


@dataclass(frozen=True)
class HeParams:
    ring: RingContext
    p: int = DEFAULT_PLAIN

    def __post_init__(self):
        if self.p < 2:
            raise ContractError("plaintext modulus must be >= 2")
        if any(self.p >= q for q in self.ring.moduli):
            raise ContractError(f"plaintext modulus {self.p} must be below every q_i")

    @property
    def delta1(self) -> int:
        return self.ring.q_big // self.p


@dataclass(eq=False)
class SecretKey:
    params: HeParams
    s: RnsPoly
    s_hat: RnsPoly
    s_hat_sh: np.ndarray | None = None  # Shoup constants for the cached evaluation form

    @classmethod
    def from_poly(cls, params: HeParams, s: RnsPoly) -> "SecretKey":
        s_hat = R.ntt_forward(s)
        sh = None
        if not params.ring.wide:
            q = np.array(params.ring.moduli, dtype=object).reshape(-1, 1)
            sh = ((s_hat.coeffs.astype(object) << 32) // q).astype(np.uint64)
        return cls(params, s, s_hat, sh)


@dataclass(eq=False)
class PublicKey:
    params: HeParams
    a: RnsPoly
    b: RnsPoly


@dataclass(eq=False)
class Plaintext:
    m: np.ndarray  # (d,) int64 in [0, p)

    def __eq__(self, other):
        return isinstance(other, Plaintext) and np.array_equal(self.m, other.m)


@dataclass(eq=False)
class Ciphertext:
    u: RnsPoly
    v: RnsPoly
    noise_budget_hint: float | None = None

    def __eq__(self, other):
        return isinstance(other, Ciphertext) and self.u == other.u and self.v == other.v


def random_plaintext(params: HeParams, rng: np.random.Generator) -> Plaintext:
    return Plaintext(rng.integers(0, params.p, size=params.ring.d, dtype=np.int64))


def keygen(params: HeParams, rng: np.random.Generator, *, s: RnsPoly | None = None,
           e: RnsPoly | None = None) -> tuple[PublicKey, SecretKey]:
    """Sample (pk, sk). ``s`` and ``e`` override the sampled values (test hook)."""
    ctx = params.ring
    a = R.sample_uniform(ctx, rng)
    s = R.sample_ternary(ctx, rng) if s is None else s
    e = R.sample_error(ctx, rng) if e is None else e
    b = R.poly_sub(e, R.poly_mul(a, s))
    return PublicKey(params, a, b), SecretKey.from_poly(params, s)


def encode_scaled(params: HeParams, m: Plaintext) -> RnsPoly:
    m_arr = np.asarray(m.m)
    if m_arr.shape != (params.ring.d,) or np.any(m_arr < 0) or np.any(m_arr >= params.p):
        raise ContractError("plaintext must hold d entries in [0, p)")
    return R.scalar_mul(R.from_ints(params.ring, m_arr.astype(np.int64)), params.delta1)


def encrypt(pk: PublicKey, m: Plaintext, rng: np.random.Generator, *, r: RnsPoly | None = None,
            e2: RnsPoly | None = None, e3: RnsPoly | None = None) -> Ciphertext:
    """u = a*r + e2, v = b*r + delta1*m + e3. Keyword overrides are test hooks."""
    params = pk.params
    ctx = params.ring
    r = R.sample_ternary(ctx, rng) if r is None else r
    e2 = R.sample_error(ctx, rng) if e2 is None else e2
    e3 = R.sample_error(ctx, rng) if e3 is None else e3
    r_hat = R.ntt_forward(r)
    u = R.poly_add(R.ntt_inverse(R.mul_pointwise(R.to_ntt(pk.a), r_hat)), e2)
    v = R.ntt_inverse(R.mul_pointwise(R.to_ntt(pk.b), r_hat))
    v = R.poly_add(R.poly_add(v, encode_scaled(params, m)), e3)
    return Ciphertext(u, v)


def eval_add(ct1: Ciphertext, ct2: Ciphertext) -> Ciphertext:
    return Ciphertext(R.poly_add(ct1.u, ct2.u), R.poly_add(ct1.v, ct2.v))


def _mul_cached_key(u_hat: RnsPoly, sk: SecretKey, counter: OpCounter | None) -> RnsPoly:
    ctx = u_hat.ctx
    if sk.s_hat_sh is None:
        return R.mul_pointwise(u_hat, sk.s_hat, counter)
    out = np.empty_like(u_hat.coeffs)
    K.mul_pointwise_shoup(u_hat.coeffs, sk.s_hat.coeffs, sk.s_hat_sh, ctx.q_vec, out)
    if counter is not None:
        counter.add(ctx.L * ctx.d)
    return RnsPoly(ctx, out, Domain.NTT)


def inner_product(sk: SecretKey, ct: Ciphertext, counter: OpCounter | None = None) -> RnsPoly:
    """w = u*s + v in coefficient form, using the cached evaluation form of s."""
    if ct.u.ctx != sk.params.ring:
        raise ContractError("ciphertext and key live in different rings")
    u_hat = R.ntt_forward(ct.u, counter=counter)
    w = R.ntt_inverse(_mul_cached_key(u_hat, sk, counter), counter=counter)
    return R.poly_add(w, ct.v)


def decode(params: HeParams, w: RnsPoly, counter: OpCounter | None = None) -> Plaintext:
    """round_half_up(p*w/Q) mod p coefficient-wise, exact."""
    ctx = w.ctx
    p = params.p
    if w.domain != Domain.COEFF:
        raise ContractError("decode expects COEFF domain")
    if counter is not None:
        counter.add(2 * ctx.L * ctx.d)
    if ctx.wide:
        big = R.crt_reconstruct(w).coeffs
        Q = ctx.q_big
        return Plaintext(np.array([((2 * p * int(x) + Q) // (2 * Q)) % p for x in big], dtype=np.int64))
    if ctx.L == 1:
        out = np.empty(ctx.d, dtype=np.uint64)
        K.decode_single(w.coeffs, ctx.q_vec, np.uint64(p), ctx.shoup(p)[0], out)
        return Plaintext(out.astype(np.int64))
    tot = np.empty(ctx.d, dtype=np.uint64)
    frac = np.empty(ctx.d, dtype=np.float64)
    K.decode_rns(w.coeffs, ctx.q_vec, ctx.crt_inv_vec, ctx.crt_inv_sh, np.uint64(p), ctx.shoup(p),
                 ctx.q_inv_f, tot, frac)
    h = frac + 0.5
    rounded = np.floor(h)
    m = (tot.astype(np.int64) + rounded.astype(np.int64)) % p
    # a float sum of L fractions can land on the wrong side of a half-integer only when
    # it is within a few ulps of it; settle those coefficients exactly
    near = np.nonzero(np.abs(h - np.round(h)) < 1e-9)[0]
    if near.size:
        Q = ctx.q_big
        for j in near:
            x = sum(int(w.coeffs[i, j]) * ctx.crt_inverses[i] % q * ctx.crt_cofactors[i]
                    for i, q in enumerate(ctx.moduli)) % Q
            m[j] = ((2 * p * x + Q) // (2 * Q)) % p
    return Plaintext(m)


def decrypt(sk: SecretKey, ct: Ciphertext, counter: OpCounter | None = None) -> Plaintext:
    """Baseline decryption: forward transform, pointwise product with cached s, inverse, round."""
    return decode(sk.params, inner_product(sk, ct, counter), counter)


def noise_failure_log2(ring: RingContext, p: int, adds: int = 0) -> float:
    """log2 upper bound on the probability that any coefficient fails to decode.

    Noise per coefficient of a fresh ciphertext is e*r + e2*s + e3: 2d products of a
    ternary and a centered binomial value plus one binomial value, each bounded by eta.
    A sum of ``adds + 1`` ciphertexts is bounded with Bernstein's inequality and a union
    bound over the d coefficients.
    """
    d = ring.d
    k = adds + 1
    var = k * (2 * d * (2.0 / 3.0) * SIGMA2 + SIGMA2)
    Q = ring.q_big
    delta = Q // p
    margin = delta / 2 - k * p  # slack lost to Q mod p rounding of delta
    if margin <= 0:
        return 0.0
    M = float(R.ERROR_ETA)
    exponent = margin * margin / 2 / (var + M * margin / 3)
    val = math.log2(2 * d) - exponent / math.log(2)
    return min(0.0, val)


def pick_plain_modulus(ring: RingContext, adds: int = 1, target_log2: float = -40.0) -> int:
    """Largest candidate plaintext modulus whose decryption failure bound is below 2^target."""
    for p in PLAIN_CANDIDATES:
        if p < min(ring.moduli) and noise_failure_log2(ring, p, adds) <= target_log2:
            return p
    raise ContractError(f"no plaintext modulus gives failure < 2^{target_log2} for {ring}")
