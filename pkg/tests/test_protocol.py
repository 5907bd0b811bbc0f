import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from otsdec import he
from otsdec import protocol as P
from otsdec import ring as R
from otsdec.errors import ContractError, HeadroomExceeded, InfeasibleParams, InvalidParams, NotInvertible

from conftest import limb_ints, schoolbook


def _params(d, bits, L=1, adds=1):
    ctx = R.RingContext(d, R.ntt_primes(d, bits, L))
    return he.HeParams(ctx, he.pick_plain_modulus(ctx, adds=adds))


@pytest.fixture(params=[(1024, 30, 1), (1024, 24, 3), (256, 50, 2)], ids=["word", "rns", "wide"])
def params(request):
    return _params(*request.param)


def test_sparse_poly_invariants(word_ctx):
    with pytest.raises(ContractError):
        P.SparsePoly(word_ctx, np.array([3, 1]), np.ones((2, 2), dtype=np.uint64))
    with pytest.raises(ContractError):
        P.SparsePoly(word_ctx, np.array([1, 16]), np.ones((2, 2), dtype=np.uint64))
    with pytest.raises(ContractError):
        P.SparsePoly(word_ctx, np.array([1, 2]), np.zeros((2, 2), dtype=np.uint64))
    with pytest.raises(ContractError):
        P.SparsePoly(word_ctx, np.array([1]), np.array([[word_ctx.moduli[0]], [1]], dtype=np.uint64))
    t = P.SparsePoly.from_ints(word_ctx, [9, 2, 5], [1, -1, 4])
    assert t.indices.tolist() == [2, 5, 9]
    assert P.hamming_weight(P.densify(t)) == 3
    assert R.to_signed(P.densify(t))[2] == -1


def test_blinding_pair_inverts(params, rng):
    ctx = params.ring
    for _ in range(5):
        pair = P.skbd_keygen_composite(ctx, 6, 3, 2, rng)
        assert pair.weights == (6, 3)
        t = R.to_ntt(pair.dense_t())
        assert R.mul_pointwise(t, pair.t_inv) == R.to_ntt(R.constant(ctx, 1))


def test_single_factor_keygen(params, rng):
    t, t_inv = P.skbd_keygen(params.ring, 7, rng)
    assert t.h == 7 and t_inv.domain == R.Domain.NTT
    assert R.mul_pointwise(R.to_ntt(P.densify(t)), t_inv) == R.to_ntt(R.constant(params.ring, 1))
    assert int(t.values.min()) >= 1 if not params.ring.wide else min(map(int, t.values.ravel())) >= 1


def test_composite_weight_bound(rng):
    ctx = R.RingContext(1024, R.ntt_primes(1024, 30, 1))
    for h1, h2 in [(6, 3), (6, 4), (5, 5)]:
        pair = P.skbd_keygen_composite(ctx, h1, h2, 2, rng)
        assert P.hamming_weight(pair.dense_t()) >= P.composite_weight_bound(h1, h2)
    assert P.composite_weight_bound(6, 3) == 15


def test_composite_rejects_bad_q2(word_ctx, rng):
    with pytest.raises(InvalidParams):
        P.skbd_keygen_composite(word_ctx, 6, 3, word_ctx.moduli[1], rng)
    with pytest.raises(InvalidParams):
        P.skbd_keygen_composite(word_ctx, 0, 3, 2, rng)


def test_from_factors_rejects_zero_divisor():
    ctx = R.RingContext(8, [17])
    psi = R._root_2d(17, 8)
    bad = P.SparsePoly.from_ints(ctx, [0, 1], [-psi, 1])
    with pytest.raises(NotInvertible):
        P.BlindingKeyPair.from_factors([bad])


def test_blinded_key_and_ciphertext_invariants(params, rng):
    pk, sk = he.keygen(params, rng)
    pair = P.skbd_keygen_composite(params.ring, 6, 3, 2, rng)
    bsk = P.blind_secret_key(sk, pair)
    assert bsk.s_tilde.domain == R.Domain.NTT
    assert R.to_coeff(R.mul_pointwise(bsk.s_tilde, R.to_ntt(pair.dense_t()))) == sk.s
    ct = he.encrypt(pk, he.random_plaintext(params, rng), rng)
    bct = P.blind_decrypt(bsk, ct)
    assert bct.v == ct.v and bct.u_tilde.domain == R.Domain.COEFF
    assert P.unblind(pair, bct) == he.inner_product(sk, ct)


def test_local_decrypt_equals_baseline(params, rng):
    pk, sk = he.keygen(params, rng)
    pair = P.skbd_keygen_composite(params.ring, 6, 3, 2, rng)
    bsk = P.blind_secret_key(sk, pair)
    for _ in range(10):
        m = he.random_plaintext(params, rng)
        ct = he.encrypt(pk, m, rng)
        assert P.local_decrypt(pair, P.blind_decrypt(bsk, ct), params) == he.decrypt(sk, ct) == m


def test_local_decrypt_after_addition(rng):
    params = _params(1024, 30, adds=1)
    pk, sk = he.keygen(params, rng)
    pair = P.skbd_keygen_composite(params.ring, 6, 3, 2, rng)
    bsk = P.blind_secret_key(sk, pair)
    m1, m2 = he.random_plaintext(params, rng), he.random_plaintext(params, rng)
    ct = he.eval_add(he.encrypt(pk, m1, rng), he.encrypt(pk, m2, rng))
    got = P.local_decrypt(pair, P.blind_decrypt(bsk, ct), params)
    assert got.m.tolist() == ((m1.m + m2.m) % params.p).tolist()


def test_factor_order_does_not_matter(params, rng):
    pk, sk = he.keygen(params, rng)
    pair = P.skbd_keygen_composite(params.ring, 6, 3, 2, rng)
    bct = P.blind_decrypt(P.blind_secret_key(sk, pair), he.encrypt(pk, he.random_plaintext(params, rng), rng))
    assert P.unblind(pair, bct, order=[0, 1]) == P.unblind(pair, bct, order=[1, 0])


def test_identity_pair_is_a_no_op(params, rng):
    pk, sk = he.keygen(params, rng)
    pair = P.BlindingKeyPair.identity(params.ring)
    bsk = P.blind_secret_key(sk, pair)
    assert R.to_coeff(bsk.s_tilde) == sk.s


def test_local_mul_count(params, rng):
    pk, sk = he.keygen(params, rng)
    pair = P.skbd_keygen_composite(params.ring, 6, 3, 2, rng)
    bct = P.blind_decrypt(P.blind_secret_key(sk, pair), he.encrypt(pk, he.random_plaintext(params, rng), rng))
    c = R.OpCounter()
    P.local_decrypt(pair, bct, params, c)
    d, L = params.ring.d, params.ring.L
    assert c.mul == P.local_mul_count(pair) == 9 * d * L + 2 * d * L


# -- sparse multiplication ----------------------------------------------------------

def test_headroom_selection_boundaries():
    q = (1 << 31) + 1
    h_lazy = ((1 << 64) - 1) // (q - 1) ** 2  # largest h with h*(q-1)^2 < 2^64
    assert P.select_accumulation_path(h_lazy, q) == "lazy"
    assert P.select_accumulation_path(h_lazy + 1, q) == "prereduced"
    h_pre = ((1 << 64) - 1) // (q - 1)
    assert P.select_accumulation_path(h_pre, q) == "prereduced"
    with pytest.raises(HeadroomExceeded):
        P.select_accumulation_path(h_pre + 1, q)
    assert P.select_accumulation_path(10**6, 97) == "lazy"
    q = (1 << 61) + 1  # (q-1)^2 = 2^122
    assert P.select_accumulation_path(63, q, acc_bits=128) == "lazy"
    assert P.select_accumulation_path(64, q, acc_bits=128) == "prereduced"


def _check_sparse(ctx, rng, h, path=None):
    u = R.sample_uniform(ctx, rng)
    idx = np.sort(rng.choice(ctx.d, h, replace=False))
    vals = np.stack([rng.integers(1, q, size=h, dtype=np.uint64) for q in ctx.moduli])
    t = P.SparsePoly(ctx, idx, vals.astype(object) if ctx.wide else vals)
    got = P.sparse_dense_mul(t, u, path=path)
    assert got == R.poly_mul(P.densify(t), u)
    for i, q in enumerate(ctx.moduli):
        assert limb_ints(got, i) == schoolbook(limb_ints(P.densify(t), i), limb_ints(u, i), q)


@pytest.mark.parametrize("path", [None, "lazy", "prereduced", "eager"])
def test_sparse_dense_mul_word(path, rng):
    ctx = R.RingContext(64, R.ntt_primes(64, 28, 2))  # h*(q-1)^2 < 2^64 for h <= 256
    for h in (1, 5, 17, 40, 64):
        _check_sparse(ctx, rng, h, path)


@pytest.mark.parametrize("path", [None, "prereduced", "eager"])
def test_sparse_dense_mul_wide(path, rng):
    ctx = R.RingContext(64, R.ntt_primes(64, 61, 2))
    for h in (1, 15, 40):
        _check_sparse(ctx, rng, h, path)


def test_sparse_dense_mul_at_headroom_limit(rng):
    # 31-bit modulus: lazy accumulation allowed for h <= 4, prereduced beyond
    ctx = R.RingContext(2048, [R.ntt_primes(2048, 32)[0]])
    q = ctx.moduli[0]
    h_lazy = ((1 << 64) - 1) // (q - 1) ** 2
    assert 1 <= h_lazy < 40
    for h in (h_lazy, h_lazy + 1):
        _check_sparse(ctx, rng, h)
    # worst case: every value q-1 against an all-(q-1) operand
    u = R.RnsPoly(ctx, np.full((1, ctx.d), q - 1, dtype=np.uint64))
    for h in (h_lazy, h_lazy + 1, 40):
        t = P.SparsePoly(ctx, np.arange(h) * 7, np.full((1, h), q - 1, dtype=np.uint64))
        assert P.sparse_dense_mul(t, u) == R.poly_mul(P.densify(t), u)


def test_sparse_dense_mul_contracts(word_ctx, wide_ctx, rng):
    t = P.SparsePoly.from_ints(word_ctx, [1], [1])
    with pytest.raises(ContractError):
        P.sparse_dense_mul(t, R.to_ntt(R.sample_uniform(word_ctx, rng)))
    with pytest.raises(ContractError):
        P.sparse_dense_mul(t, R.sample_uniform(wide_ctx, rng))


def test_sparse_dense_mul_counts(word_ctx, rng):
    t = P.SparsePoly.from_ints(word_ctx, [0, 3, 7], [1, 2, 3])
    c = R.OpCounter()
    P.sparse_dense_mul(t, R.sample_uniform(word_ctx, rng), c)
    assert c.mul == 3 * word_ctx.d * word_ctx.L


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 31), min_size=1, max_size=12, unique=True),
       st.lists(st.integers(-10**6, 10**6), min_size=32, max_size=32), st.integers(1, 2**40))
def test_sparse_equals_dense_property(idx, u_vals, c):
    ctx = R.RingContext(32, R.ntt_primes(32, 30, 2))
    t = P.SparsePoly.from_ints(ctx, idx, [c + k for k in range(len(idx))])
    u = R.from_ints(ctx, np.array(u_vals, dtype=object))
    assert P.sparse_dense_mul(t, u) == R.poly_mul(P.densify(t), u)


# -- setup ----------------------------------------------------------------------------

@pytest.mark.parametrize("log_d,bits,lam,h_ref", [(13, 23, 128, 17), (15, 22, 128, 13), (16, 13, 256, 26)])
def test_setup_weights(log_d, bits, lam, h_ref):
    from otsdec.bench import bench_ring
    ring = bench_ring(1 << log_d, bits)
    pp = P.setup(ring, lam=lam)
    assert abs(pp.h - h_ref) <= 2
    assert pp.h1 == 6 and pp.q2 == 2
    assert P.composite_weight_bound(pp.h1, pp.h2) >= pp.h
    from otsdec.estimator import composite_enum_bits
    assert composite_enum_bits(ring.d, ring.q_big, pp.h1, pp.q2, pp.h2) >= lam
    assert composite_enum_bits(ring.d, ring.q_big, pp.h1, pp.q2, pp.h2 - 1) < lam or \
        P.composite_weight_bound(pp.h1, pp.h2 - 1) < pp.h


def test_setup_errors():
    with pytest.raises(InfeasibleParams):
        P.setup(R.RingContext(16, [97]))
    with pytest.raises(ContractError):
        P.setup(R.RingContext(16, [97]), lam=100)
    with pytest.raises(ContractError):
        P.setup(R.RingContext(16, [97]), chi_sk="gaussian")


def test_min_factor_weight():
    for h in range(1, 40):
        h2 = P.min_factor_weight(h, 6)
        assert P.composite_weight_bound(6, h2) >= h
        assert h2 == 1 or P.composite_weight_bound(6, h2 - 1) < h


def test_index_sets_uniform_small(rng):
    # quick version of the uniformity check; the acceptance suite runs the full one
    ctx = R.RingContext(16, [17], ntt=False)
    counts = {}
    n = 3000
    for _ in range(n):
        t, _ = P.skbd_keygen(ctx, 2, rng)
        key = tuple(t.indices.tolist())
        counts[key] = counts.get(key, 0) + 1
    assert len(counts) == math.comb(16, 2)
    expect = n / math.comb(16, 2)
    chi2 = sum((c - expect) ** 2 / expect for c in counts.values())
    assert chi2 < 200  # 119 dof; p < 1e-6 beyond this
