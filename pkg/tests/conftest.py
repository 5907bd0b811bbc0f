import numpy as np
import pytest

from otsdec import ring as R


def schoolbook(a, b, q):
    """Negacyclic product of two integer coefficient lists mod q, X^d = -1."""
    d = len(a)
    out = [0] * d
    for i, x in enumerate(a):
        if not x:
            continue
        for j, y in enumerate(b):
            k = i + j
            if k < d:
                out[k] += x * y
            else:
                out[k - d] -= x * y
    return [v % q for v in out]


def limb_ints(p, i):
    return [int(x) for x in p.coeffs[i]]


@pytest.fixture(scope="session")
def word_ctx():
    return R.RingContext(16, R.ntt_primes(16, 30, 2))


@pytest.fixture(scope="session")
def wide_ctx():
    return R.RingContext(16, R.ntt_primes(16, 50, 2))


@pytest.fixture(scope="session")
def mixed_ctx():
    # one word-size and one wide modulus: everything runs on the wide backend
    return R.RingContext(16, [R.ntt_primes(16, 28)[0], R.ntt_primes(16, 61)[0]])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance summary -----------------------------------------------------------

ACCEPTANCE: dict[int, tuple[str, str, str]] = {}


class Criterion:
    """Context manager recording FAIL unless its block completes."""

    def __init__(self, n: int, title: str):
        self.n, self.title, self.detail = n, title, ""

    def __enter__(self):
        ACCEPTANCE[self.n] = ("FAIL", self.title, "")
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            ACCEPTANCE[self.n] = ("PASS", self.title, self.detail)
        else:
            ACCEPTANCE[self.n] = ("FAIL", self.title, f"{exc_type.__name__}: {exc}".splitlines()[0])
        line = "criterion %2d: %s  %s  %s" % ((self.n,) + ACCEPTANCE[self.n])
        print(line)
        return False


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        status, title, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {status}  {title}  {detail}".rstrip())
