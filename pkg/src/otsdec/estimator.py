"""Attack-cost models for the sparse blinding factor and the Table-style parameter search.

Bit counts are log2 of operation counts. Counting attacks use exact integer
combinatorics; lattice attacks use the BKZ cost polynomial
poly(beta) = 0.00405892 beta^2 - 0.337913 beta + 34.9018 plus log2(dim) + 7 and the
limiting root-Hermite relation delta(beta) = ((beta/(2 pi e)) (pi beta)^(1/beta))^(1/(2(beta-1))).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .errors import ContractError, InfeasibleParams, NoFeasibleBeta
from .ring import RnsPoly

TWO_PI_E = 2 * math.pi * math.e
BETA_MIN = 50
H1_DEFAULT = 6
Q2_DEFAULT = 2
ENUM_TARGET_DEFAULT = 128
T_NORM_MODELS = ("uniform", "centered")
PROB_MODELS = ("exact", "product")


# -- counting attacks ---------------------------------------------------------------

def _log2_int(x: int) -> float:
    return math.log2(x) if x > 0 else float("-inf")


def sparse_space(d: int, q: int, h: int) -> int:
    """#S_h: weight-h polynomials with nonzero coefficients in [1, q)."""
    return math.comb(d, h) * (q - 1) ** h


def brute_force_bits(d: int, q: int, h: int, chi_sk: str = "ternary") -> float:
    if not 0 <= h <= d:
        raise ContractError("need 0 <= h <= d")
    if chi_sk != "ternary":
        raise ContractError("only the ternary secret distribution is modelled")
    # 3^d has ~1.58 d bits; skip the big power when the sparse space is clearly smaller
    s_h = sparse_space(d, q, h)
    if s_h.bit_length() < 1.58 * d:
        return _log2_int(s_h)
    return min(_log2_int(s_h), d * math.log2(3))


def mitm_bits(d: int, q: int, h: int, chi_sk: str = "ternary") -> float:
    return brute_force_bits(d, q, h, chi_sk) / 2


def composite_enum_bits(d: int, q: int, h1: int, q2: int, h2: int) -> float:
    """Half the log2 size of the composite sampling space (meet-in-the-middle enumeration)."""
    return 0.5 * _log2_int(sparse_space(d, q, h1) * sparse_space(d, q2, h2))


# -- lattice model -------------------------------------------------------------------

def expected_s_norm(d: int) -> float:
    """Expected Euclidean norm of a uniform ternary vector of length d."""
    return math.sqrt(2 * d / 3)


def expected_t_norm(q: int, h: int, model: str = "uniform") -> float:
    """Expected norm of h nonzero residues: uniform on [0, q) gives q*sqrt(h/3),
    centered in (-q/2, q/2) gives q*sqrt(h/12)."""
    if model == "uniform":
        return q * math.sqrt(h / 3)
    if model == "centered":
        return q * math.sqrt(h / 12)
    raise ContractError(f"unknown t-norm model {model!r}")


def target_ratio_c(d: int, q: int, s_norm: float, t_norm: float) -> float:
    """Ratio of the target norm to the Gaussian-heuristic shortest-vector length."""
    if s_norm <= 0 or t_norm <= 0:
        raise ContractError("norms must be positive")
    return math.sqrt(TWO_PI_E * s_norm * t_norm / (d * q))


def alpha_balance(s_norm: float, t_norm: float) -> float:
    if s_norm <= 0 or t_norm <= 0:
        raise ContractError("norms must be positive")
    return s_norm / t_norm


def poly_beta(beta: float) -> float:
    return 0.00405892 * beta * beta - 0.337913 * beta + 34.9018


def bkz_log_ops(beta: float, dim: int) -> float:
    return poly_beta(beta) + math.log2(dim) + 7


def log_delta(beta):
    """Natural log of the root-Hermite factor reached by block size beta (scalar or array)."""
    b = np.asarray(beta, dtype=np.float64)
    out = (np.log(b / TWO_PI_E) + np.log(np.pi * b) / b) / (2 * (b - 1))
    return float(out) if out.ndim == 0 else out


def delta_from_beta(beta: float) -> float:
    return math.exp(log_delta(beta))


@lru_cache(maxsize=8)
def _log_delta_table(beta_max: int) -> np.ndarray:
    return log_delta(np.arange(BETA_MIN, beta_max + 1))


def beta_from_delta(delta: float, dim: int) -> int:
    """Smallest beta in [50, dim] whose root-Hermite factor is at most ``delta``."""
    return _beta_from_log_delta(math.log(delta), dim)


def _beta_from_log_delta(ld: float, dim: int) -> int:
    if dim < BETA_MIN:
        raise NoFeasibleBeta(f"dimension {dim} below the block-size floor {BETA_MIN}")
    tab = _log_delta_table(int(dim))
    k = int(np.searchsorted(-tab, -ld, side="left"))
    if k >= tab.shape[0]:
        raise NoFeasibleBeta(f"required delta exp({ld:.3e}) needs beta > dim={dim}")
    return BETA_MIN + k


def required_log_delta(c, n):
    """log of the root-Hermite factor needed to expose a target c times the Gaussian
    heuristic in an n-dimensional lattice of the NTRU shape."""
    return (np.log(c) + 0.5 * np.log(n / TWO_PI_E)) / n


def gh_delta(d: int) -> float:
    """Required delta for a target at the Gaussian heuristic (c = 1) in dimension 2d,
    i.e. (d/(pi e))^(1/(4d))."""
    return math.exp(required_log_delta(1.0, 2 * d))


def lattice_attack(d: int, q: int, s_norm: float, t_norm: float) -> tuple[float, int | None, float]:
    """Full-dimension attack on L(s~, alpha): (bits, beta, c). bits is inf when infeasible."""
    c = target_ratio_c(d, q, s_norm, t_norm)
    n = 2 * d
    try:
        beta = _beta_from_log_delta(float(required_log_delta(c, n)), n)
    except NoFeasibleBeta:
        return math.inf, None, c
    return bkz_log_ops(beta, n), beta, c


# -- zero-forced attack --------------------------------------------------------------

def zf_single_guess_prob(d: int, h: int, r: int) -> Fraction:
    """Exact probability that r guessed positions avoid all h nonzeros of a uniform support."""
    if not 0 <= r <= d - h:
        raise ContractError("need 0 <= r <= d - h")
    return Fraction(math.comb(d - r, h), math.comb(d, h))


def zf_success_prob(d: int, h: int, r: int, model: str = "exact") -> float:
    """p = 1 - (1 - p0)^d: some negacyclic shift of the support avoids the guess."""
    if not 0 <= r <= d - h:
        raise ContractError("need 0 <= r <= d - h")
    if model == "exact":
        p0 = float(zf_single_guess_prob(d, h, r))
    elif model == "product":
        p0 = (1 - r / (d - 1)) ** h
    else:
        raise ContractError(f"unknown probability model {model!r}")
    if p0 >= 1.0:
        return 1.0
    return float(-math.expm1(d * math.log1p(-p0)))


def _log2_success(d: int, h: int, r: np.ndarray, model: str) -> np.ndarray:
    m = (d - r).astype(np.float64)
    if model == "exact":
        ln_p0 = np.zeros_like(m)
        for k in range(h):
            ln_p0 += np.log(m - k) - math.log(d - k)
    elif model == "product":
        with np.errstate(divide="ignore"):
            ln_p0 = h * np.log1p(-r / (d - 1))
    else:
        raise ContractError(f"unknown probability model {model!r}")
    p0 = np.exp(ln_p0)
    with np.errstate(divide="ignore", invalid="ignore"):
        lp = np.where(p0 >= 1.0, 0.0, np.log2(-np.expm1(d * np.log1p(-np.minimum(p0, 1.0)))))
    return lp


@dataclass(frozen=True)
class ZfResult:
    bits: float
    r: int | None
    beta: int | None
    feasible: bool = True


def zf_attack_bits(d: int, q: int, h: int, chi_sk: str = "ternary", *, t_norm_model: str = "uniform",
                   prob_model: str = "exact", s_norm: float | None = None,
                   t_norm: float | None = None) -> ZfResult:
    """Cheapest zero-forced attack over the number r of guessed zero positions.

    For each r the lattice has dimension n = 2(d - r); beta is the smallest block size
    reaching the required root-Hermite factor for the target ratio c(r), and the cost is
    -log2 p(r) + poly(beta) + log2(n) + 7. When no r admits a feasible beta the result
    falls back to exhaustive search with ``feasible=False``.
    """
    if not 1 <= h <= d:
        raise ContractError("need 1 <= h <= d")
    if chi_sk != "ternary":
        raise ContractError("only the ternary secret distribution is modelled")
    s_norm = expected_s_norm(d) if s_norm is None else s_norm
    t_norm = expected_t_norm(q, h, t_norm_model) if t_norm is None else t_norm
    r = np.arange(0, d - h + 1)
    m = d - r
    n = 2 * m
    lp = _log2_success(d, h, r, prob_model)
    c = np.sqrt(TWO_PI_E * s_norm * (t_norm / q) / m)
    ld = required_log_delta(c, n.astype(np.float64))
    tab = _log_delta_table(2 * d)
    k = np.searchsorted(-tab, -ld, side="left")
    beta = BETA_MIN + k
    ok = (k < tab.shape[0]) & (beta <= n) & np.isfinite(lp)
    if not np.any(ok):
        return ZfResult(brute_force_bits(d, q, h), None, None, False)
    bits = np.where(ok, -lp + poly_beta(beta.astype(np.float64)) + np.log2(n) + 7, np.inf)
    i = int(np.argmin(bits))
    return ZfResult(float(bits[i]), int(r[i]), int(beta[i]), True)


def min_secure_weight(d: int, q: int, lam: float, h_max: int | None = None, **kw) -> int:
    """Smallest h whose zero-forced cost reaches lam bits."""
    h_max = d // 2 if h_max is None else h_max
    for h in range(1, h_max + 1):
        if zf_attack_bits(d, q, h, **kw).bits >= lam:
            return h
    raise InfeasibleParams(f"no weight h <= {h_max} reaches {lam} bits at d={d}")


# -- reports and parameter search ---------------------------------------------------

@dataclass(frozen=True)
class AttackReport:
    d: int
    logq: float
    h: int
    brute_bits: float
    mitm_bits: float
    composite_enum_bits: float
    zf_bits: float
    zf_r: int | None
    zf_beta: int | None
    lattice_c_ratio: float
    h1: int = H1_DEFAULT
    h2: int = 0
    q2: int = Q2_DEFAULT
    zf_feasible: bool = True
    notes: tuple[str, ...] = field(default=())

    def feasible(self, lam: float, enum_target: float | None = None) -> bool:
        """True when every gate clears: zero-forced cost >= lam and enumeration >= enum_target
        (default lam)."""
        target = lam if enum_target is None else enum_target
        return self.zf_bits >= lam and self.composite_enum_bits >= target and self.mitm_bits >= target

    def as_row(self, lam: float | None = None) -> dict:
        return {
            "d": self.d, "logq": round(self.logq, 2), "h": self.h,
            "brute": round(self.brute_bits, 2), "mitm": round(self.mitm_bits, 2),
            "enum": round(self.composite_enum_bits, 2), "zf_bits": round(self.zf_bits, 2),
            "r": "" if self.zf_r is None else self.zf_r,
            "beta": "" if self.zf_beta is None else self.zf_beta,
            "feasible": "" if lam is None else int(self.feasible(lam)),
        }


def factor_weight(h: int, h1: int = H1_DEFAULT) -> int:
    """Smallest h2 with h1*h2 - min(h1, h2) >= h."""
    h2 = 1
    while h1 * h2 - min(h1, h2) < h:
        h2 += 1
    return h2


def estimate(d: int, q: int, h: int, *, h1: int = H1_DEFAULT, h2: int | None = None,
             q2: int = Q2_DEFAULT, **zf_kw) -> AttackReport:
    h2 = factor_weight(h, h1) if h2 is None else h2
    zf = zf_attack_bits(d, q, h, **zf_kw)
    t_model = zf_kw.get("t_norm_model", "uniform")
    c = target_ratio_c(d, q, expected_s_norm(d), expected_t_norm(q, h, t_model))
    brute = brute_force_bits(d, q, h)
    notes = []
    if zf.beta == BETA_MIN:
        notes.append(f"block size clamped at {BETA_MIN}")
    if not zf.feasible:
        notes.append("no feasible block size for any r; zero-forced cost set to exhaustive search")
    return AttackReport(d=d, logq=math.log2(q), h=h, brute_bits=brute, mitm_bits=brute / 2,
                        composite_enum_bits=composite_enum_bits(d, q, h1, q2, h2),
                        zf_bits=zf.bits, zf_r=zf.r, zf_beta=zf.beta, lattice_c_ratio=c,
                        h1=h1, h2=h2, q2=q2, zf_feasible=zf.feasible, notes=tuple(notes))


@dataclass(frozen=True)
class ParamChoice:
    lam: int
    d: int
    h: int
    log_q: int
    h1: int
    h2: int
    report: AttackReport


def enum_log_q(d: int, h1: int, h2: int, q2: int, target: float) -> float:
    """Real log2(q - 1) at which the composite enumeration space equals 2^target."""
    rest = _log2_int(math.comb(d, h1)) + _log2_int(math.comb(d, h2)) + h2 * _log2_int(q2 - 1)
    return (2 * target - rest) / h1


def find_params(lam: int, d: int, *, h1: int = H1_DEFAULT, q2: int = Q2_DEFAULT,
                enum_target: float = ENUM_TARGET_DEFAULT, zf_logq: float | None = None,
                **zf_kw) -> ParamChoice:
    """(h, log q) in the style of the published parameter table.

    h is the smallest weight clearing lam bits against the zero-forced attack; log q is
    the enumeration threshold for (h1, h2, q2) rounded down to an integer. The zero-forced
    cost barely depends on q, so it is evaluated at ``zf_logq`` (default: the threshold).
    """
    if lam not in (128, 192, 256):
        raise ContractError("lambda must be 128, 192 or 256")
    if d < 2 or d & (d - 1):
        raise ContractError("d must be a power of two")
    # The zero-forced cost depends on q only through c, which is q-free under both norm
    # models, so a nominal modulus is enough for the weight search.
    q_nominal = 1 << int(zf_logq if zf_logq is not None else 20)
    h = min_secure_weight(d, q_nominal, lam, **zf_kw)
    h2 = factor_weight(h, h1)
    need = enum_log_q(d, h1, h2, q2, enum_target)
    log_q = math.floor(need)
    if log_q < 2:
        raise InfeasibleParams("enumeration gate met for any modulus; table convention undefined")
    report = estimate(d, 1 << log_q, h, h1=h1, h2=h2, q2=q2, **zf_kw)
    return ParamChoice(lam, d, h, log_q, h1, h2, report)


# -- NTRU-shaped instances ----------------------------------------------------------

@dataclass(eq=False)
class NtruInstance:
    r: RnsPoly
    gamma_s: float
    gamma_t: float
    q: int
    s_norm: float | None = None
    t_norm: float | None = None

    def well_formed(self) -> bool:
        """Witness norms within sqrt(q)/gamma (only meaningful for generated instances)."""
        if self.s_norm is None or self.t_norm is None:
            return False
        root = math.sqrt(self.q)
        return self.s_norm <= root / self.gamma_s and self.t_norm <= root / self.gamma_t


def witness_norm(values) -> float:
    """Euclidean norm of a list of signed integers."""
    return math.sqrt(sum(int(v) * int(v) for v in values))
