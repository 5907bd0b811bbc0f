import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from otsdec import he
from otsdec import protocol as P
from otsdec import ring as R
from otsdec import wire as W
from otsdec.errors import MalformedFrame, ResidueOutOfRange, UnsupportedVersion, WireError


def _hdr_len(L):
    return 4 + 1 + 8 * L + 1


def test_zero_poly_layout():
    ctx = R.RingContext(8, [17])
    b = W.encode_poly(R.zeros(ctx))
    assert len(b) == _hdr_len(1) + 64
    assert b[:_hdr_len(1)] == struct.pack("<IBQB", 8, 1, 17, 0)
    assert b[_hdr_len(1):] == bytes(64)


def test_dense_layout_limb_major(word_ctx):
    p = R.from_ints(word_ctx, list(range(16)))
    b = W.encode_poly(p)
    body = np.frombuffer(b[_hdr_len(2):], dtype="<u8").reshape(2, 16)
    assert body.tolist() == [list(range(16))] * 2
    assert b[_hdr_len(2) - 1] == 0
    assert W.encode_poly(R.to_ntt(p))[_hdr_len(2) - 1] == 1


def test_sparse_layout():
    for L in (1, 2, 3):
        ctx = R.RingContext(16, R.ntt_primes(16, 30, L))
        t = P.SparsePoly.from_ints(ctx, [3], [5])
        b = W.encode_sparse(t)
        assert len(b) - _hdr_len(L) == 4 + (4 + 8 * L)
        assert struct.unpack_from("<II", b, _hdr_len(L)) == (1, 3)


@pytest.mark.parametrize("ctx_name", ["word_ctx", "wide_ctx", "mixed_ctx"])
def test_poly_round_trip(ctx_name, request, rng):
    ctx = request.getfixturevalue(ctx_name)
    for _ in range(1000):
        p = R.sample_uniform(ctx, rng)
        if rng.integers(2):
            p = R.to_ntt(p)
        b = W.encode_poly(p)
        q = W.decode_poly(b)
        assert q == p and q.domain == p.domain
        assert W.encode_poly(q) == b


def test_sparse_round_trip(word_ctx, wide_ctx, rng):
    for ctx in (word_ctx, wide_ctx):
        for h in (0, 1, 5, 16):
            idx = rng.choice(16, size=h, replace=False)
            vals = [int(rng.integers(1, 1000)) for _ in range(h)]
            t = P.SparsePoly.from_ints(ctx, idx, vals)
            b = W.encode_sparse(t)
            u = W.decode_sparse(b)
            assert u.indices.tolist() == t.indices.tolist()
            assert W.encode_sparse(u) == b


def test_ct_and_bct_round_trip(rng):
    ctx = R.RingContext(64, R.ntt_primes(64, 30, 2))
    params = he.HeParams(ctx, 257)
    pk, sk = he.keygen(params, rng)
    ct = he.encrypt(pk, he.random_plaintext(params, rng), rng)
    assert W.decode_ct(W.encode_ct(ct)) == ct
    pair = P.skbd_keygen_composite(ctx, 3, 2, 2, rng)
    bct = P.blind_decrypt(P.blind_secret_key(sk, pair), ct)
    got = W.parse_bcts(W.bcts_payload([bct, bct]), ctx)
    assert got == [bct, bct]


def test_frame_round_trip():
    f = W.encode_frame(W.Msg.STORE_CT, b"abc")
    assert f[:4] == b"OTSD" and f[4] == 1 and f[5] == 2
    assert struct.unpack_from("<I", f, 6)[0] == 3
    assert W.decode_frame(f) == W.Frame(W.Msg.STORE_CT, b"abc")


def test_frame_errors():
    f = W.encode_frame(W.Msg.OK, b"xy")
    with pytest.raises(MalformedFrame):
        W.decode_frame(f[:5])
    with pytest.raises(MalformedFrame):
        W.decode_frame(b"XXXX" + f[4:])
    with pytest.raises(UnsupportedVersion):
        W.decode_frame(f[:4] + b"\x02" + f[5:])
    with pytest.raises(MalformedFrame):
        W.decode_frame(f + b"z")
    with pytest.raises(MalformedFrame):
        W.parse_header(W.FRAME_HEADER.pack(b"OTSD", 1, 1, W.MAX_PAYLOAD + 1))


def test_poly_decode_errors():
    ctx = R.RingContext(8, [17])
    b = W.encode_poly(R.from_ints(ctx, [1] * 8))
    with pytest.raises(MalformedFrame):
        W.decode_poly(b[:-1])
    with pytest.raises(MalformedFrame):
        W.decode_poly(b + b"\0")
    bad = bytearray(b)
    bad[_hdr_len(1):_hdr_len(1) + 8] = struct.pack("<Q", 17)
    with pytest.raises(ResidueOutOfRange):
        W.decode_poly(bytes(bad))
    bad = bytearray(b)
    bad[_hdr_len(1) - 1] = 7
    with pytest.raises(MalformedFrame):
        W.decode_poly(bytes(bad))
    with pytest.raises(MalformedFrame):
        W.decode_poly(struct.pack("<IBQB", 6, 1, 17, 0) + bytes(48))
    with pytest.raises(MalformedFrame):
        W.decode_poly(struct.pack("<IBQB", 8, 1, 15, 0) + bytes(64))
    with pytest.raises(MalformedFrame):
        W.decode_poly(struct.pack("<IB", 1 << 30, 1) + bytes(9))
    with pytest.raises(MalformedFrame):
        W.decode_poly(b, R.RingContext(8, [97]))


def test_sparse_decode_errors():
    ctx = R.RingContext(8, [17])
    good = W.encode_sparse(P.SparsePoly.from_ints(ctx, [1, 4], [2, 3]))
    h0 = _hdr_len(1)
    dup = bytearray(good)
    struct.pack_into("<I", dup, h0 + 4 + 12, 1)
    with pytest.raises(MalformedFrame):
        W.decode_sparse(bytes(dup))
    big = bytearray(good)
    struct.pack_into("<I", big, h0, 9)
    with pytest.raises(MalformedFrame):
        W.decode_sparse(bytes(big))
    zero = bytearray(good)
    struct.pack_into("<Q", zero, h0 + 8, 0)
    with pytest.raises(MalformedFrame):
        W.decode_sparse(bytes(zero))


def test_setup_payload(word_ctx, rng):
    s = R.to_ntt(R.sample_uniform(word_ctx, rng))
    ctx, got = W.parse_setup(W.setup_payload(word_ctx, s))
    assert ctx == word_ctx and got == s
    with pytest.raises(MalformedFrame):
        W.parse_setup(W.setup_payload(word_ctx, R.to_coeff(s)))
    with pytest.raises(MalformedFrame):
        W.parse_setup(struct.pack("<H", 3) + b"\xff\xfe\xfd")


def test_small_payloads():
    assert W.parse_ids(W.ids_payload([0, 5, 7])) == [0, 5, 7]
    assert W.parse_ids(W.ids_payload([])) == []
    assert W.parse_pair(W.pair_payload(3, 4)) == (3, 4)
    assert W.parse_id(W.id_payload(9)) == 9
    assert W.parse_err(W.err_payload(0x11, "nope")) == (0x11, "nope")
    with pytest.raises(MalformedFrame):
        W.parse_ids(struct.pack("<II", 3, 1))
    with pytest.raises(MalformedFrame):
        W.parse_pair(b"\0" * 7)
    with pytest.raises(MalformedFrame):
        W.parse_id(b"")


@settings(max_examples=300, deadline=None)
@given(st.binary(max_size=200))
def test_decoders_only_raise_wire_errors(data):
    for fn in (W.decode_poly, W.decode_sparse, W.decode_ct, W.parse_setup, W.parse_ids,
               W.parse_bcts, W.parse_err, W.decode_frame):
        try:
            fn(data)
        except WireError:
            pass
