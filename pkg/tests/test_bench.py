import csv

import numpy as np
import pytest

from otsdec import bench as B
from otsdec import protocol as P
from otsdec import ring as R
from otsdec.errors import OutputMismatch


def _small(L=1, d=1 << 10, logq=30):
    return B.BenchParams(B.bench_ring(d, logq, L), 128, 13, 6, 3)


def test_bench_ring_sizes():
    ring = B.bench_ring(1 << 13, 23)
    assert ring.L == 1 and ring.moduli[0].bit_length() == 23
    ring = B.bench_ring(1 << 15, 44, 2)
    assert ring.L == 2 and all(q.bit_length() == 22 for q in ring.moduli)
    # no 13-bit prime is 1 mod 2^17, so the size grows until one exists
    ring = B.bench_ring(1 << 16, 13)
    assert ring.moduli == (786433,)


def test_reference_params():
    bp = B.BenchParams.reference(128, 15)
    assert (bp.h, bp.h1, bp.h2) == (13, 6, 3)
    assert bp.ring.d == 1 << 15
    bp = B.BenchParams.reference(256, 13, L=2)
    assert bp.h2 == 8 and bp.ring.L == 2


def test_bench_report_fields():
    rep = B.bench_decrypt(_small(), iters=20, seed=3)
    assert rep.iters == 20 and rep.baseline_total_ms > 0 and rep.local_total_ms > 0
    assert rep.speedup == pytest.approx(1 - rep.local_total_ms / rep.baseline_total_ms)
    ratio = rep.local_total_ms / rep.baseline_total_ms
    assert ratio == pytest.approx(9 / (rep.a_fit * 10 + 1))
    assert rep.local_muls == (6 + 3 + 2) * 1024
    assert set(rep.csv_row()) == set(B.BENCH_FIELDS)


def test_mul_counts_multi_limb():
    bp = _small(L=3, d=256, logq=90)
    fx = B.make_fixture(bp, np.random.default_rng(1), pool=2)
    rep = B.bench_decrypt(bp, iters=2, fx=fx)
    assert rep.local_muls == P.local_mul_count(fx.pair) == (6 + 3 + 2) * 256 * 3


def test_bench_refuses_mismatch():
    bp = _small(d=256)
    fx = B.make_fixture(bp, np.random.default_rng(2), pool=2)
    b = fx.bcts[1]
    u = b.u_tilde.copy()
    q = u.ctx.moduli[0]
    u.coeffs[0, 0] = (int(u.coeffs[0, 0]) + q // 2) % q
    fx.bcts[1] = P.BlindedCiphertext(u, b.v)
    with pytest.raises(OutputMismatch):
        B.bench_decrypt(bp, iters=5, fx=fx)


def test_bench_sweep_shape():
    reps = B.bench_sweep([_small(d=256), _small(d=512)], iters=5, runs=3)
    assert [r.d for r in reps] == [256, 512]
    assert all(r.iters == 15 for r in reps)


def test_a_from_ratio():
    assert B.a_from_ratio(9 / (2 * 10 + 1), 9, 1024) == pytest.approx(2.0)


@pytest.mark.parametrize("L", [1, 2, 4])
def test_space_report_2_15(L):
    bp = B.BenchParams.reference(128, 15, L=L)
    rep = B.space_report(bp)
    assert rep.ratio <= 0.55
    assert abs(rep.ratio - rep.formula_ratio) < 0.01
    for k in ("baseline_s_hat", "baseline_intt_tables", "baseline_ciphertext", "ours_blinded_ct"):
        assert 0 <= rep.measured[k] - rep.formula[k] <= rep.header_bits
    # sparse storage: index plus L residues per nonzero, never more than the 2*ell*h model
    assert rep.measured["ours_t_factors"] <= rep.formula["ours_t_factors"] + rep.header_bits
    assert rep.baseline_bits - sum(v for k, v in rep.formula.items() if k.startswith("baseline_")) \
        <= rep.header_bits


def test_space_formula_arithmetic():
    bp = B.BenchParams.reference(128, 15)
    rep = B.space_report(bp)
    assert rep.ell == 64
    assert rep.formula["ours_t_factors"] == 2 * 64 * 9 == 1152


def test_space_measured_vs_formula_2_13():
    bp = B.BenchParams.reference(128, 13)
    rep = B.space_report(bp)
    hdr = 4 + 1 + 8 + 1
    assert rep.measured["baseline_s_hat"] - rep.formula["baseline_s_hat"] == 8 * hdr
    assert rep.measured["baseline_ciphertext"] - rep.formula["baseline_ciphertext"] == 16 * hdr
    assert (rep.baseline_bits - sum(v for k, v in rep.formula.items() if k.startswith("baseline_"))) // 8 <= 64


def test_space_rows_and_csv(tmp_path):
    rep = B.space_report(B.BenchParams.reference(128, 13))
    rows = rep.rows()
    comps = [r["component"] for r in rows]
    assert comps[-2:] == ["baseline_total", "ours_total"]
    path = tmp_path / "space.csv"
    B.write_csv(path, rows, B.SPACE_FIELDS)
    with open(path) as fh:
        got = list(csv.DictReader(fh))
    assert list(got[0]) == B.SPACE_FIELDS
    assert int(got[-1]["bits"]) == rep.ours_bits
