"""Integer bases for the NTRU-shaped attack lattice and its zero-forced restriction.

For s~ = s * t^-1 over a single modulus q, L(s~, alpha) is spanned by the rows of
((alpha I, S~), (0, q I)) where row i of S~ holds the coefficients of s~ * x^i, so
t * L = (alpha t, s) mod q. A rational alpha = num/den is cleared by scaling the whole
basis by den. No reduction is performed here.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .ring import Domain, RnsPoly

MAX_DIM_D = 256


@dataclass(eq=False)
class LatticeBasis:
    matrix: np.ndarray  # object array of Python ints, rows are basis vectors
    alpha_num: int
    alpha_den: int
    q: int
    kind: str = "full"
    J: tuple[int, ...] = ()

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def negacyclic_rows(coeffs, q: int) -> np.ndarray:
    """d x d matrix whose row i is c * x^i mod (x^d + 1, q)."""
    c = [int(x) % q for x in coeffs]
    d = len(c)
    out = np.empty((d, d), dtype=object)
    row = list(c)
    for i in range(d):
        out[i] = row
        row = [(q - row[-1]) % q] + row[:-1]
    return out


def _single_limb(s_tilde: RnsPoly) -> tuple[list[int], int]:
    if s_tilde.ctx.L != 1:
        raise ContractError("lattice bases are built over a single modulus")
    if s_tilde.domain != Domain.COEFF:
        raise ContractError("lattice bases need s~ in COEFF domain")
    if s_tilde.ctx.d > MAX_DIM_D:
        raise ContractError(f"d={s_tilde.ctx.d} exceeds the basis-construction cap {MAX_DIM_D}")
    return [int(x) for x in s_tilde.coeffs[0]], s_tilde.ctx.moduli[0]


def _assemble(S: np.ndarray, q: int, num: int, den: int) -> np.ndarray:
    k = S.shape[0]
    B = np.zeros((2 * k, 2 * k), dtype=object)
    for i in range(k):
        B[i, i] = num
        B[k + i, k + i] = den * q
    B[:k, k:] = S * den
    return B


def build_lattice_basis(s_tilde: RnsPoly, alpha_num: int = 1, alpha_den: int = 1) -> LatticeBasis:
    if alpha_num <= 0 or alpha_den <= 0:
        raise ContractError("alpha must be a positive rational")
    c, q = _single_limb(s_tilde)
    S = negacyclic_rows(c, q)
    return LatticeBasis(_assemble(S, q, alpha_num, alpha_den), alpha_num, alpha_den, q)


def build_zf_basis(s_tilde: RnsPoly, alpha_num: int, alpha_den: int, J) -> LatticeBasis:
    """Basis of dimension 2(d - r) assuming t vanishes on the r positions in J."""
    if alpha_num <= 0 or alpha_den <= 0:
        raise ContractError("alpha must be a positive rational")
    c, q = _single_limb(s_tilde)
    d = len(c)
    J = tuple(sorted(set(int(j) for j in J)))
    if any(not 0 <= j < d for j in J) or len(J) >= d:
        raise ContractError("J must be a proper subset of [0, d)")
    keep = [i for i in range(d) if i not in set(J)]
    S = negacyclic_rows(c, q)[np.ix_(keep, keep)]
    return LatticeBasis(_assemble(S, q, alpha_num, alpha_den), alpha_num, alpha_den, q, "zero-forced", J)


def row_combination(coeffs, basis: LatticeBasis) -> np.ndarray:
    """Integer row vector times the basis (exact)."""
    v = np.array([int(x) for x in coeffs], dtype=object)
    k = basis.dim // 2
    if v.shape[0] != k:
        raise ContractError(f"expected {k} coefficients")
    return v.dot(basis.matrix[:k])
