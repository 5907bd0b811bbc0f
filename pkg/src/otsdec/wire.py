"""Little-endian binary encodings and the request/response frame.

Frame:  b"OTSD" | version u8 | msg_type u8 | payload_len u32 | payload
Poly:   d u32 | L u8 | L x q_i u64 | domain u8 | body
        dense body  = L*d residues u64, limb-major
        sparse body = h u32 | h x (index u32 | L x residue u64)
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import ContractError, MalformedFrame, ResidueOutOfRange, UnsupportedVersion
from .he import Ciphertext
from .protocol import BlindedCiphertext, SparsePoly
from .ring import Domain, RingContext, RnsPoly, parse_descriptor

MAGIC = b"OTSD"
VERSION = 0x01
FRAME_HEADER = struct.Struct("<4sBBI")
MAX_PAYLOAD = 1 << 28
MAX_D = 1 << 17
MAX_L = 64


class Msg(IntEnum):
    SETUP = 0x01
    STORE_CT = 0x02
    EVAL_ADD = 0x03
    BLIND_DEC = 0x04
    OK = 0x05
    ERR = 0x06


class ErrCode(IntEnum):
    ORDER = 0x10
    UNKNOWN_ID = 0x11
    MALFORMED = 0x12


@dataclass(frozen=True)
class Frame:
    msg_type: int
    payload: bytes
    version: int = VERSION


def encode_frame(msg_type: int, payload: bytes = b"") -> bytes:
    return FRAME_HEADER.pack(MAGIC, VERSION, int(msg_type), len(payload)) + payload


def parse_header(header: bytes) -> tuple[int, int]:
    """Validate a 10-byte frame header; returns (msg_type, payload_len)."""
    if len(header) != FRAME_HEADER.size:
        raise MalformedFrame("truncated frame header")
    magic, version, msg_type, n = FRAME_HEADER.unpack(header)
    if magic != MAGIC:
        raise MalformedFrame("bad magic")
    if version != VERSION:
        raise UnsupportedVersion(f"unsupported version 0x{version:02x}")
    if n > MAX_PAYLOAD:
        raise MalformedFrame("payload too large")
    return msg_type, n


def decode_frame(data: bytes) -> Frame:
    msg_type, n = parse_header(bytes(data[:FRAME_HEADER.size]))
    payload = bytes(data[FRAME_HEADER.size:])
    if len(payload) != n:
        raise MalformedFrame(f"payload length {len(payload)} != declared {n}")
    return Frame(msg_type, payload)


class Reader:
    """Bounds-checked cursor over a byte buffer."""

    def __init__(self, data: bytes, pos: int = 0):
        self.data = memoryview(data)
        self.pos = pos

    def take(self, n: int) -> memoryview:
        if n < 0 or self.pos + n > len(self.data):
            raise MalformedFrame("truncated payload")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64s(self, n: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * n), dtype="<u8").astype(np.uint64)

    def done(self) -> None:
        if self.pos != len(self.data):
            raise MalformedFrame(f"{len(self.data) - self.pos} trailing bytes")


# -- polynomials ------------------------------------------------------------------

def _header(ctx: RingContext, domain: int) -> bytes:
    return (struct.pack("<IB", ctx.d, ctx.L) + struct.pack(f"<{ctx.L}Q", *ctx.moduli)
            + struct.pack("<B", int(domain)))


def _residues(rows) -> bytes:
    return np.ascontiguousarray(np.asarray(rows).astype(np.uint64)).astype("<u8").tobytes()


def encode_poly(p: RnsPoly) -> bytes:
    return _header(p.ctx, p.domain) + _residues(p.coeffs)


def encode_sparse(t: SparsePoly) -> bytes:
    ctx = t.ctx
    out = [_header(ctx, Domain.COEFF), struct.pack("<I", t.h)]
    vals = np.asarray(t.values).astype(np.uint64)
    for k in range(t.h):
        out.append(struct.pack("<I", int(t.indices[k])))
        out.append(vals[:, k].astype("<u8").tobytes())
    return b"".join(out)


_CTX_CACHE: dict[tuple, RingContext] = {}


def context_for(d: int, moduli: tuple[int, ...]) -> RingContext:
    key = (d, moduli)
    ctx = _CTX_CACHE.get(key)
    if ctx is None:
        try:
            ctx = RingContext(d, moduli)
        except ContractError as e:
            raise MalformedFrame(f"invalid ring in header: {e}") from None
        if len(_CTX_CACHE) > 32:
            _CTX_CACHE.clear()
        _CTX_CACHE[key] = ctx
    return ctx


def _read_header(r: Reader, ctx: RingContext | None, body_words) -> tuple[RingContext, int]:
    d = r.u32()
    L = r.u8()
    if not 2 <= d <= MAX_D or d & (d - 1) or not 1 <= L <= MAX_L:
        raise MalformedFrame(f"bad ring header d={d} L={L}")
    moduli = tuple(int(q) for q in r.u64s(L))
    domain = r.u8()
    if domain not in (0, 1):
        raise MalformedFrame(f"bad domain flag {domain}")
    if body_words is not None and len(r.data) - r.pos < 8 * body_words(d, L):
        raise MalformedFrame("truncated polynomial body")
    if ctx is not None:
        if (d, moduli) != (ctx.d, ctx.moduli):
            raise MalformedFrame("polynomial ring does not match the session ring")
    else:
        ctx = context_for(d, moduli)
    return ctx, domain


def _check_range(rows: np.ndarray, ctx: RingContext) -> None:
    for i, q in enumerate(ctx.moduli):
        if rows.shape[-1] and int(rows[i].max()) >= q:
            raise ResidueOutOfRange(f"residue >= q_{i}")


def read_poly(r: Reader, ctx: RingContext | None = None) -> RnsPoly:
    ctx, domain = _read_header(r, ctx, lambda d, L: d * L)
    rows = r.u64s(ctx.L * ctx.d).reshape(ctx.L, ctx.d)
    _check_range(rows, ctx)
    coeffs = rows.astype(object) if ctx.wide else rows.copy()
    return RnsPoly(ctx, coeffs, Domain(domain))


def read_sparse(r: Reader, ctx: RingContext | None = None) -> SparsePoly:
    ctx, domain = _read_header(r, ctx, None)
    if domain != Domain.COEFF:
        raise MalformedFrame("sparse polynomials are coefficient-domain")
    h = r.u32()
    if h > ctx.d:
        raise MalformedFrame("sparse weight exceeds d")
    idx = np.empty(h, dtype=np.int64)
    vals = np.empty((ctx.L, h), dtype=np.uint64)
    for k in range(h):
        idx[k] = r.u32()
        vals[:, k] = r.u64s(ctx.L)
    _check_range(vals, ctx)
    try:
        return SparsePoly(ctx, idx, vals.astype(object) if ctx.wide else vals)
    except ContractError as e:
        raise MalformedFrame(str(e)) from None


def decode_poly(data: bytes, ctx: RingContext | None = None) -> RnsPoly:
    r = Reader(data)
    p = read_poly(r, ctx)
    r.done()
    return p


def decode_sparse(data: bytes, ctx: RingContext | None = None) -> SparsePoly:
    r = Reader(data)
    t = read_sparse(r, ctx)
    r.done()
    return t


def encode_ct(ct: Ciphertext) -> bytes:
    return encode_poly(ct.u) + encode_poly(ct.v)


def read_ct(r: Reader, ctx: RingContext | None = None) -> Ciphertext:
    u = read_poly(r, ctx)
    v = read_poly(r, u.ctx)
    if u.domain != Domain.COEFF or v.domain != Domain.COEFF:
        raise MalformedFrame("ciphertext components must be coefficient-domain")
    return Ciphertext(u, v)


def decode_ct(data: bytes, ctx: RingContext | None = None) -> Ciphertext:
    r = Reader(data)
    ct = read_ct(r, ctx)
    r.done()
    return ct


def encode_bct(b: BlindedCiphertext) -> bytes:
    return encode_poly(b.u_tilde) + encode_poly(b.v)


def read_bct(r: Reader, ctx: RingContext | None = None) -> BlindedCiphertext:
    ct = read_ct(r, ctx)
    return BlindedCiphertext(ct.u, ct.v)


# -- message payloads ---------------------------------------------------------------

def _text(s: str) -> bytes:
    b = s.encode("utf-8")[:0xFFFF]
    return struct.pack("<H", len(b)) + b


def _read_text(r: Reader) -> str:
    n = r.u16()
    try:
        return bytes(r.take(n)).decode("utf-8")
    except UnicodeDecodeError:
        raise MalformedFrame("text is not valid UTF-8") from None


def setup_payload(ctx: RingContext, s_tilde: RnsPoly) -> bytes:
    return _text(ctx.describe()) + encode_poly(s_tilde)


def parse_setup(payload: bytes) -> tuple[RingContext, RnsPoly]:
    r = Reader(payload)
    desc = _read_text(r)
    try:
        d, moduli = parse_descriptor(desc)
    except ContractError as e:
        raise MalformedFrame(str(e)) from None
    if not 2 <= d <= MAX_D or not 1 <= len(moduli) <= MAX_L:
        raise MalformedFrame(f"ring outside supported range d={d} L={len(moduli)}")
    ctx = context_for(d, moduli)
    s = read_poly(r, ctx)
    r.done()
    if s.domain != Domain.NTT:
        raise MalformedFrame("blinded key must be sent in NTT domain")
    return ctx, s


def ids_payload(ids) -> bytes:
    ids = list(ids)
    return struct.pack(f"<I{len(ids)}I", len(ids), *ids)


def parse_ids(payload: bytes) -> list[int]:
    r = Reader(payload)
    n = r.u32()
    if 4 * n != len(payload) - 4:
        raise MalformedFrame("id list length mismatch")
    out = [r.u32() for _ in range(n)]
    r.done()
    return out


def pair_payload(a: int, b: int) -> bytes:
    return struct.pack("<II", a, b)


def parse_pair(payload: bytes) -> tuple[int, int]:
    if len(payload) != 8:
        raise MalformedFrame("EVAL_ADD expects two ids")
    return struct.unpack("<II", payload)


def id_payload(i: int) -> bytes:
    return struct.pack("<I", i)


def parse_id(payload: bytes) -> int:
    if len(payload) != 4:
        raise MalformedFrame("expected a single id")
    return struct.unpack("<I", payload)[0]


def err_payload(code: int, text: str) -> bytes:
    return struct.pack("<B", code) + _text(text)


def parse_err(payload: bytes) -> tuple[int, str]:
    r = Reader(payload)
    code = r.u8()
    text = _read_text(r)
    r.done()
    return code, text


def bcts_payload(items) -> bytes:
    items = list(items)
    return struct.pack("<I", len(items)) + b"".join(encode_bct(b) for b in items)


def parse_bcts(payload: bytes, ctx: RingContext | None = None) -> list[BlindedCiphertext]:
    r = Reader(payload)
    n = r.u32()
    out = [read_bct(r, ctx) for _ in range(n)]
    r.done()
    return out
