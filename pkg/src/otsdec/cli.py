"""Command-line entry point.

Key material lives in a directory: params.json (ring and plaintext modulus), pk.bin,
sk.bin, and after ``blind-key`` also factors.bin (client) and s_tilde.bin (cloud).
``--d`` accepts either log2 of the degree (up to 20) or the degree itself.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import struct
import sys
from pathlib import Path

import numpy as np

from . import bench as B
from . import estimator as E
from . import he
from . import protocol as P
from . import ring as R
from . import service as S
from . import wire as W
from .errors import ContractError, OtsdecError, ProtocolError, WireError

EXIT_OK, EXIT_CONTRACT, EXIT_IO = 0, 2, 3
ZF_FIELDS = ["d", "logq", "h", "zf_bits", "r", "beta", "feasible"]
ESTIMATE_FIELDS = ["d", "logq", "h", "brute", "mitm", "enum", "zf_bits", "r", "beta", "feasible"]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_help(sys.stderr)
        self.exit(EXIT_CONTRACT, f"{self.prog}: error: {message}\n")


def degree(text: str) -> int:
    v = int(text)
    d = 1 << v if v <= 20 else v
    if d < 2 or d & (d - 1):
        raise argparse.ArgumentTypeError(f"{text} is not a power of two or its log2")
    return d


def int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x]


def h_range(text: str) -> range:
    a, sep, b = text.partition("..")
    if not sep:
        raise argparse.ArgumentTypeError("expected a..b")
    if int(b) < int(a):
        raise argparse.ArgumentTypeError(f"empty range {text}")
    return range(int(a), int(b) + 1)


def host_port(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    return (host or "127.0.0.1", int(port) if port else S.DEFAULT_PORT)


def _rng(args) -> np.random.Generator:
    seed = args.seed
    if seed is None and os.environ.get(S.SEED_ENV):
        seed = int(os.environ[S.SEED_ENV])
    return np.random.default_rng(seed)


def _out(args, rows, fields) -> None:
    if args.csv:
        B.write_csv(args.csv, rows, fields)
    else:
        print(",".join(fields))
        for r in rows:
            print(",".join(str(r[f]) for f in fields))


# -- key directory ------------------------------------------------------------------

def _save_params(path: Path, params: he.HeParams) -> None:
    path.mkdir(parents=True, exist_ok=True)
    doc = {"d": params.ring.d, "moduli": list(params.ring.moduli), "p": params.p}
    (path / "params.json").write_text(json.dumps(doc) + "\n")


def _load_params(path: Path) -> he.HeParams:
    doc = json.loads((path / "params.json").read_text())
    return he.HeParams(R.RingContext(doc["d"], doc["moduli"]), doc["p"])


def _read_polys(data: bytes, ctx, n: int) -> list[R.RnsPoly]:
    r = W.Reader(data)
    out = [W.read_poly(r, ctx) for _ in range(n)]
    r.done()
    return out


def _load_sk(path: Path, params: he.HeParams) -> he.SecretKey:
    (s,) = _read_polys((path / "sk.bin").read_bytes(), params.ring, 1)
    return he.SecretKey.from_poly(params, s)


def _load_pk(path: Path, params: he.HeParams) -> he.PublicKey:
    a, b = _read_polys((path / "pk.bin").read_bytes(), params.ring, 2)
    return he.PublicKey(params, a, b)


def _save_factors(path: Path, pair: P.BlindingKeyPair) -> None:
    body = struct.pack("<I", len(pair.factors)) + b"".join(W.encode_sparse(f) for f in pair.factors)
    (path / "factors.bin").write_bytes(body)


def _load_factors(path: Path, ctx) -> P.BlindingKeyPair:
    r = W.Reader((path / "factors.bin").read_bytes())
    factors = [W.read_sparse(r, ctx) for _ in range(r.u32())]
    r.done()
    return P.BlindingKeyPair.from_factors(factors)


def _read_plaintext(path: str, params: he.HeParams) -> he.Plaintext:
    vals = np.array([int(x) for x in Path(path).read_text().split()], dtype=np.int64)
    if vals.shape != (params.ring.d,):
        raise ContractError(f"plaintext file must hold {params.ring.d} integers")
    return he.Plaintext(vals)


def _write_plaintext(m: he.Plaintext, path: str | None) -> None:
    text = " ".join(str(int(x)) for x in m.m) + "\n"
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


# -- subcommands ----------------------------------------------------------------------

def cmd_params(args) -> int:
    c = E.find_params(args.lam, args.d, h1=args.h1, q2=args.q2)
    print(f"h={c.h} logq={c.log_q} h1={c.h1} h2={c.h2}")
    return EXIT_OK


def cmd_keygen(args) -> int:
    ring = B.bench_ring(args.d, args.logq, args.L)
    p = args.p if args.p else he.pick_plain_modulus(ring, adds=args.adds)
    params = he.HeParams(ring, p)
    pk, sk = he.keygen(params, _rng(args))
    out = Path(args.keys)
    _save_params(out, params)
    (out / "pk.bin").write_bytes(W.encode_poly(pk.a) + W.encode_poly(pk.b))
    (out / "sk.bin").write_bytes(W.encode_poly(sk.s))
    print(f"{ring.describe()} p={p}")
    return EXIT_OK


def cmd_blind_key(args) -> int:
    path = Path(args.keys)
    params = _load_params(path)
    sk = _load_sk(path, params)
    ring = params.ring
    if args.h2 is None:
        pp = P.setup(ring, lam=args.lam, h1=args.h1, q2=args.q2)
        h1, h2 = pp.h1, pp.h2
    else:
        h1, h2 = args.h1, args.h2
    pair = P.skbd_keygen_composite(ring, h1, h2, args.q2, _rng(args))
    bsk = P.blind_secret_key(sk, pair)
    _save_factors(path, pair)
    (path / "s_tilde.bin").write_bytes(W.encode_poly(bsk.s_tilde))
    print(f"h1={h1} h2={h2} q2={args.q2}")
    return EXIT_OK


def cmd_encrypt(args) -> int:
    path = Path(args.keys)
    params = _load_params(path)
    pk = _load_pk(path, params)
    rng = _rng(args)
    m = _read_plaintext(args.message, params) if args.message else he.random_plaintext(params, rng)
    Path(args.out).write_bytes(W.encode_ct(he.encrypt(pk, m, rng)))
    if args.message_out:
        _write_plaintext(m, args.message_out)
    return EXIT_OK


def cmd_decrypt(args) -> int:
    path = Path(args.keys)
    params = _load_params(path)
    ct = W.decode_ct(Path(args.ct).read_bytes(), params.ring)
    _write_plaintext(he.decrypt(_load_sk(path, params), ct), args.out)
    return EXIT_OK


def cmd_blind_dec(args) -> int:
    path = Path(args.keys)
    params = _load_params(path)
    (s_tilde,) = _read_polys((path / "s_tilde.bin").read_bytes(), params.ring, 1)
    ct = W.decode_ct(Path(args.ct).read_bytes(), params.ring)
    bct = P.blind_decrypt(P.BlindedSecretKey(s_tilde), ct)
    Path(args.out).write_bytes(W.encode_bct(bct))
    return EXIT_OK


def cmd_local_dec(args) -> int:
    path = Path(args.keys)
    params = _load_params(path)
    pair = _load_factors(path, params.ring)
    r = W.Reader(Path(args.bct).read_bytes())
    bct = W.read_bct(r, params.ring)
    r.done()
    _write_plaintext(P.local_decrypt(pair, bct, params), args.out)
    return EXIT_OK


def cmd_serve(args) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    try:
        S.serve(args.bind)
    except KeyboardInterrupt:
        pass
    return EXIT_OK


def cmd_client(args) -> int:
    rng = _rng(args)
    ring = B.bench_ring(args.d, args.logq, args.L)
    params = he.HeParams(ring, he.pick_plain_modulus(ring, adds=1))
    pk, sk = he.keygen(params, rng)
    pp = P.setup(ring, lam=args.lam)
    pair = P.skbd_keygen_composite(ring, pp.h1, pp.h2, pp.q2, rng)
    msgs = [he.random_plaintext(params, rng) for _ in range(args.messages)]
    adds = [(i, i + 1) for i in range(args.messages - 1)]
    got, ids = S.client_session(args.connect, pair, params, sk, pk, msgs, rng, adds)
    want = msgs + [he.Plaintext((msgs[a].m + msgs[b].m) % params.p) for a, b in adds]
    bad = sum(g != w for g, w in zip(got, want))
    print(f"{ring.describe()} h={pp.h} h1={pp.h1} h2={pp.h2} ids={len(ids)} mismatches={bad}")
    return EXIT_OK if bad == 0 else EXIT_CONTRACT


def _bench_params(args, d: int, L: int) -> B.BenchParams:
    h, logq = B.REFERENCE_PARAMS[args.lam].get(d.bit_length() - 1, (args.h, args.logq))
    h = h if args.h is None else args.h
    logq = logq if args.logq is None else args.logq
    if h is None or logq is None:
        raise ContractError(f"d={d} has no table entry; pass --h and --logq")
    ring = B.bench_ring(d, logq, L)
    return B.BenchParams(ring, args.lam, h, args.h1, E.factor_weight(h, args.h1))


def cmd_bench(args) -> int:
    bps = [_bench_params(args, d, L) for d in args.d for L in args.L]
    reports = B.bench_sweep(bps, args.iters, args.runs, 0 if args.seed is None else args.seed)
    _out(args, [r.csv_row() for r in reports], B.BENCH_FIELDS)
    for r in reports:
        print(f"# d={r.d} L={r.L} baseline_muls={r.baseline_muls} local_muls={r.local_muls} p={r.p}",
              file=sys.stderr)
    return EXIT_OK


def cmd_space(args) -> int:
    rows = []
    for d in args.d:
        for L in args.L:
            rep = B.space_report(_bench_params(args, d, L), args.seed or 0)
            rows.extend(rep.rows())
            print(f"# d={d} L={L} ratio={rep.ratio:.4f} formula_ratio={rep.formula_ratio:.4f}",
                  file=sys.stderr)
    _out(args, rows, B.SPACE_FIELDS)
    return EXIT_OK


def cmd_estimate(args) -> int:
    q = 1 << args.logq
    h = args.h if args.h is not None else E.min_secure_weight(args.d, q, args.lam)
    rep = E.estimate(args.d, q, h, h1=args.h1, q2=args.q2)
    _out(args, [rep.as_row(args.lam)], ESTIMATE_FIELDS)
    return EXIT_OK


def cmd_zf_curve(args) -> int:
    q = 1 << args.logq
    rows = []
    for h in args.h_range:
        z = E.zf_attack_bits(args.d, q, h)
        rows.append({"d": args.d, "logq": args.logq, "h": h, "zf_bits": round(z.bits, 3),
                     "r": "" if z.r is None else z.r, "beta": "" if z.beta is None else z.beta,
                     "feasible": int(z.feasible)})
    _out(args, rows, ZF_FIELDS)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="otsdec", description="Outsourced decryption with sparse blinding keys.")
    ap.add_argument("--seed", type=int, default=None, help=f"RNG seed (default: ${S.SEED_ENV} or random)")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(fn=fn)
        return p

    def lam(p):
        p.add_argument("--lambda", dest="lam", type=int, default=128, choices=(128, 192, 256))

    def factors(p):
        p.add_argument("--h1", type=int, default=6)
        p.add_argument("--q2", type=int, default=2)

    def csv(p):
        p.add_argument("--csv", metavar="PATH", help="write CSV here instead of stdout")

    def ring(p, logq=23):
        p.add_argument("--d", type=degree, required=True)
        p.add_argument("--logq", type=int, default=logq, help="total modulus bits")
        p.add_argument("--L", type=int, default=1, help="number of RNS limbs")

    p = add("params", cmd_params, "parameter search for one (lambda, d)")
    lam(p)
    factors(p)
    p.add_argument("--d", type=degree, required=True)

    p = add("keygen", cmd_keygen, "generate BFV keys into a key directory")
    ring(p)
    p.add_argument("--p", type=int, default=None, help="plaintext modulus (default: largest safe)")
    p.add_argument("--adds", type=int, default=1, help="additions the plaintext modulus must survive")
    p.add_argument("--keys", required=True)

    p = add("blind-key", cmd_blind_key, "sample unblinding factors and the blinded key")
    lam(p)
    factors(p)
    p.add_argument("--h2", type=int, default=None, help="second factor weight (default: from setup)")
    p.add_argument("--keys", required=True)

    p = add("encrypt", cmd_encrypt, "encrypt a plaintext file (or a random one)")
    p.add_argument("--keys", required=True)
    p.add_argument("--message", help="file of d whitespace-separated integers in [0, p)")
    p.add_argument("--message-out", help="write the encrypted plaintext here")
    p.add_argument("--out", required=True)

    p = add("decrypt", cmd_decrypt, "baseline decryption with the secret key")
    p.add_argument("--keys", required=True)
    p.add_argument("--ct", required=True)
    p.add_argument("--out")

    p = add("blind-dec", cmd_blind_dec, "cloud-side blind decryption with the blinded key")
    p.add_argument("--keys", required=True)
    p.add_argument("--ct", required=True)
    p.add_argument("--out", required=True)

    p = add("local-dec", cmd_local_dec, "finish a blind decryption with the sparse factors")
    p.add_argument("--keys", required=True)
    p.add_argument("--bct", required=True)
    p.add_argument("--out")

    p = add("serve", cmd_serve, "run the cloud server")
    p.add_argument("--bind", type=host_port, default=("127.0.0.1", S.DEFAULT_PORT))

    p = add("client", cmd_client, "run a demo client session against a server")
    p.add_argument("--connect", type=host_port, default=("127.0.0.1", S.DEFAULT_PORT))
    ring(p, logq=30)
    lam(p)
    p.add_argument("--messages", type=int, default=2)

    p = add("bench", cmd_bench, "time baseline against local decryption")
    lam(p)
    p.add_argument("--h1", type=int, default=6)
    p.add_argument("--d", type=lambda s: [degree(x) for x in s.split(",")], required=True)
    p.add_argument("--L", type=int_list, default=[1])
    p.add_argument("--logq", type=int, default=None, help="total modulus bits (default: table value)")
    p.add_argument("--h", type=int, default=None, help="weight (default: table value)")
    p.add_argument("--iters", type=int, default=1000)
    p.add_argument("--runs", type=int, default=1, help="repeated runs; the median run is reported")
    csv(p)

    p = add("space", cmd_space, "itemized client-side storage")
    lam(p)
    p.add_argument("--h1", type=int, default=6)
    p.add_argument("--d", type=lambda s: [degree(x) for x in s.split(",")], required=True)
    p.add_argument("--L", type=int_list, default=[1])
    p.add_argument("--logq", type=int, default=None)
    p.add_argument("--h", type=int, default=None)
    csv(p)

    p = add("estimate", cmd_estimate, "attack costs for one parameter point")
    lam(p)
    factors(p)
    p.add_argument("--d", type=degree, required=True)
    p.add_argument("--logq", type=int, required=True)
    p.add_argument("--h", type=int, default=None, help="weight (default: minimal secure)")
    csv(p)

    p = add("zf-curve", cmd_zf_curve, "zero-forced attack cost over a range of weights")
    p.add_argument("--d", type=degree, required=True)
    p.add_argument("--logq", type=int, required=True)
    p.add_argument("--h-range", type=h_range, required=True, metavar="A..B")
    csv(p)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.fn(args)
    except (OSError, WireError, ProtocolError, json.JSONDecodeError) as e:
        print(f"otsdec: {e}", file=sys.stderr)
        return EXIT_IO
    except (OtsdecError, ValueError) as e:
        print(f"otsdec: {e}", file=sys.stderr)
        return EXIT_CONTRACT


if __name__ == "__main__":
    sys.exit(main())
