"""Exception hierarchy.

Everything raised deliberately by the package derives from ``OtsdecError``;
``ContractError`` marks violated preconditions and maps to CLI exit code 2.
"""


class OtsdecError(Exception):
    pass


class ContractError(OtsdecError, ValueError):
    """A documented precondition was violated (domain or context mismatch, bad params)."""


class NotInvertible(OtsdecError, ArithmeticError):
    """A ring element has a zero NTT evaluation in some limb."""


class ResampleLimit(OtsdecError, RuntimeError):
    """Rejection sampling of a blinding factor exhausted its attempt budget."""


class HeadroomExceeded(OtsdecError, OverflowError):
    """Neither delayed-reduction path fits the accumulator width."""


class InvalidParams(ContractError):
    pass


class InfeasibleParams(OtsdecError):
    """No parameter choice within the search range meets the security target."""


class NoFeasibleBeta(OtsdecError):
    """The required root-Hermite factor is out of reach for every block size <= dim."""


class OutputMismatch(OtsdecError):
    """Benchmarked decryption paths disagreed; timing is not reported."""


class WireError(OtsdecError):
    code = 0x12


class MalformedFrame(WireError):
    pass


class ResidueOutOfRange(WireError):
    pass


class UnsupportedVersion(WireError):
    pass


class ProtocolError(OtsdecError):
    """The server answered a request with an ERR frame."""

    def __init__(self, code: int, text: str):
        super().__init__(f"server error 0x{code:02x}: {text}")
        self.code = code
        self.text = text
