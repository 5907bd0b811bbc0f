"""Cloud server and client driver for the two-phase outsourced decryption exchange.

Setup phase: the client sends SETUP{ring, s~}. Decryption phase: the client uploads
ciphertexts, asks for evaluations, and pulls blinded decryptions with BLIND_DEC, which
it finishes locally with its sparse factors.
"""
from __future__ import annotations

import logging
import socket
import socketserver
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

from . import he
from . import protocol as P
from . import wire as W
from .errors import ContractError, ProtocolError, WireError
from .protocol import BlindedCiphertext, BlindedSecretKey, BlindingKeyPair
from .ring import RingContext

DEFAULT_PORT = 7740
SEED_ENV = "OTSDEC_SEED"
log = logging.getLogger(__name__)

Tamper = Callable[[BlindedCiphertext], BlindedCiphertext]


class State(Enum):
    AWAIT_SETUP = "await_setup"
    READY = "ready"


@dataclass
class Session:
    """Per-connection server state; ``handle_frame`` is a pure request -> response step."""

    tamper: Tamper | None = None
    state: State = State.AWAIT_SETUP
    ctx: RingContext | None = None
    key: BlindedSecretKey | None = None
    store: list = field(default_factory=list)

    def _err(self, code: int, text: str) -> bytes:
        return W.encode_frame(W.Msg.ERR, W.err_payload(code, text))

    def handle_frame(self, frame: bytes) -> tuple[bytes, bool]:
        """Returns (response frame, close connection)."""
        try:
            f = W.decode_frame(frame)
            return self._dispatch(f.msg_type, f.payload), False
        except WireError as e:
            return self._err(W.ErrCode.MALFORMED, str(e)), True
        except (ContractError, ValueError, OverflowError) as e:
            return self._err(W.ErrCode.MALFORMED, f"rejected: {e}"), True

    def handle(self, msg_type: int, payload: bytes) -> tuple[bytes, bool]:
        return self.handle_frame(W.encode_frame(msg_type, payload))

    def _ct(self, i: int):
        if not 0 <= i < len(self.store):
            raise KeyError(i)
        return self.store[i]

    def _dispatch(self, msg_type: int, payload: bytes) -> bytes:
        if msg_type == W.Msg.SETUP:
            if self.state is not State.AWAIT_SETUP:
                return self._err(W.ErrCode.ORDER, "session already set up")
            ctx, s_tilde = W.parse_setup(payload)
            self.ctx, self.key, self.state = ctx, BlindedSecretKey(s_tilde), State.READY
            return W.encode_frame(W.Msg.OK)
        if msg_type not in (W.Msg.STORE_CT, W.Msg.EVAL_ADD, W.Msg.BLIND_DEC):
            raise W.MalformedFrame(f"unexpected message type 0x{msg_type:02x}")
        if self.state is not State.READY:
            return self._err(W.ErrCode.ORDER, "SETUP must come first")
        if msg_type == W.Msg.STORE_CT:
            ct = W.decode_ct(payload, self.ctx)
            self.store.append(ct)
            return W.encode_frame(W.Msg.OK, W.id_payload(len(self.store) - 1))
        if msg_type == W.Msg.EVAL_ADD:
            a, b = W.parse_pair(payload)
            try:
                ct = he.eval_add(self._ct(a), self._ct(b))
            except KeyError as e:
                return self._err(W.ErrCode.UNKNOWN_ID, f"unknown ciphertext id {e.args[0]}")
            self.store.append(ct)
            return W.encode_frame(W.Msg.OK, W.id_payload(len(self.store) - 1))
        ids = W.parse_ids(payload)
        try:
            cts = [self._ct(i) for i in ids]
        except KeyError as e:
            return self._err(W.ErrCode.UNKNOWN_ID, f"unknown ciphertext id {e.args[0]}")
        out = []
        for ct in cts:
            b = P.blind_decrypt(self.key, ct)
            out.append(self.tamper(b) if self.tamper else b)
        return W.encode_frame(W.Msg.OK, W.bcts_payload(out))


def _recv_exact(sock, n: int) -> bytes | None:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            return None
        buf.extend(chunk)
    return bytes(buf)


def read_frame(sock) -> bytes | None:
    """One raw frame from a socket, or None on clean EOF. Header errors raise WireError."""
    header = _recv_exact(sock, W.FRAME_HEADER.size)
    if header is None:
        return None
    _, n = W.parse_header(header)
    payload = _recv_exact(sock, n)
    if payload is None:
        raise W.MalformedFrame("connection closed mid-frame")
    return header + payload


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        session = Session(tamper=self.server.tamper)
        sock = self.request
        while True:
            try:
                raw = read_frame(sock)
            except WireError as e:
                sock.sendall(W.encode_frame(W.Msg.ERR, W.err_payload(W.ErrCode.MALFORMED, str(e))))
                return
            except OSError:
                return
            if raw is None:
                return
            resp, close = session.handle_frame(raw)
            try:
                sock.sendall(resp)
            except OSError:
                return
            if close:
                return


class CloudServer(socketserver.ThreadingTCPServer):
    """Threaded server; each connection owns one Session."""

    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, bind=("127.0.0.1", DEFAULT_PORT), tamper: Tamper | None = None):
        super().__init__(bind, _Handler)
        self.tamper = tamper

    @property
    def address(self) -> tuple[str, int]:
        return self.server_address[:2]

    def start_background(self) -> threading.Thread:
        t = threading.Thread(target=self.serve_forever, daemon=True)
        t.start()
        return t


def serve(bind_addr=("127.0.0.1", DEFAULT_PORT), tamper: Tamper | None = None) -> None:
    with CloudServer(bind_addr, tamper) as srv:
        log.info("serving on %s:%d", *srv.address)
        srv.serve_forever()


class ClientSession:
    """Client role: performs setup once, then uploads, evaluates and finishes decryptions.

    Only s~ and ciphertexts are ever serialized. Every outbound frame is checked
    against a deny-list of the encoded secret key and unblinding factors.
    """

    def __init__(self, addr, pair: BlindingKeyPair, params: he.HeParams, sk: he.SecretKey,
                 timeout: float = 30.0, recorder: list | None = None):
        self.addr = tuple(addr)
        self.pair = pair
        self.params = params
        self.sk = sk
        self.timeout = timeout
        self.recorder = recorder
        self.sock: socket.socket | None = None
        self._deny = _deny_list(sk, pair)

    # transport
    def connect(self) -> None:
        for attempt in range(2):
            try:
                self.sock = socket.create_connection(self.addr, timeout=self.timeout)
                return
            except OSError:
                if attempt:
                    raise
                time.sleep(0.2)

    def close(self) -> None:
        if self.sock is not None:
            self.sock.close()
            self.sock = None

    def __enter__(self):
        self.connect()
        return self

    def __exit__(self, *exc):
        self.close()

    def check_outbound(self, frame: bytes) -> None:
        for name, pattern in self._deny:
            if pattern in frame:
                raise ContractError(f"refusing to send frame containing {name}")

    def _request(self, msg_type: int, payload: bytes) -> bytes:
        frame = W.encode_frame(msg_type, payload)
        self.check_outbound(frame)
        if self.recorder is not None:
            self.recorder.append(frame)
        if self.sock is None:
            self.connect()
        self.sock.sendall(frame)
        raw = read_frame(self.sock)
        if raw is None:
            raise ConnectionError("server closed the connection")
        f = W.decode_frame(raw)
        if f.msg_type == W.Msg.ERR:
            raise ProtocolError(*W.parse_err(f.payload))
        if f.msg_type != W.Msg.OK:
            raise W.MalformedFrame(f"unexpected response type 0x{f.msg_type:02x}")
        return f.payload

    # protocol steps
    def setup(self) -> None:
        bsk = P.blind_secret_key(self.sk, self.pair)
        self._request(W.Msg.SETUP, W.setup_payload(self.params.ring, bsk.s_tilde))

    def store(self, ct: he.Ciphertext) -> int:
        return W.parse_id(self._request(W.Msg.STORE_CT, W.encode_ct(ct)))

    def eval_add(self, a: int, b: int) -> int:
        return W.parse_id(self._request(W.Msg.EVAL_ADD, W.pair_payload(a, b)))

    def blind_dec(self, ids: Sequence[int]) -> list[BlindedCiphertext]:
        return W.parse_bcts(self._request(W.Msg.BLIND_DEC, W.ids_payload(ids)), self.params.ring)

    def decrypt(self, ids: Sequence[int]) -> list[he.Plaintext]:
        return [P.local_decrypt(self.pair, b, self.params) for b in self.blind_dec(ids)]


def _deny_list(sk: he.SecretKey, pair: BlindingKeyPair) -> list[tuple[str, bytes]]:
    """Byte patterns that must never leave the client: encoded bodies of s, its evaluation
    form, and each sparse factor (headers excluded so matches cannot be dodged by framing)."""
    hdr = 4 + 1 + 8 * sk.s.ctx.L + 1
    out = [("secret key", W.encode_poly(sk.s)[hdr:]),
           ("secret key (NTT)", W.encode_poly(sk.s_hat)[hdr:])]
    for k, f in enumerate(pair.factors):
        out.append((f"unblinding factor {k}", W.encode_sparse(f)[hdr:]))
    return out


def client_session(addr, pair: BlindingKeyPair, params: he.HeParams, sk: he.SecretKey,
                   pk: he.PublicKey, messages: Sequence[he.Plaintext], rng,
                   add_pairs: Sequence[tuple[int, int]] = (), recorder: list | None = None):
    """Full exchange: setup, upload ``messages``, evaluate ``add_pairs`` of upload indices,
    blind-decrypt everything and finish locally. Returns (plaintexts, ids)."""
    with ClientSession(addr, pair, params, sk, recorder=recorder) as cs:
        cs.setup()
        ids = [cs.store(he.encrypt(pk, m, rng)) for m in messages]
        for a, b in add_pairs:
            ids.append(cs.eval_add(ids[a], ids[b]))
        return cs.decrypt(ids), ids
