"""Exception types shared across the toolkit."""


class AabacError(Exception):
    """Base class for all toolkit errors."""


# --- policy ---

class PolicySyntaxError(AabacError):
    def __init__(self, position: int, expected: str):
        self.position = position
        self.expected = expected
        super().__init__(f"syntax error at position {position}: expected {expected}")


class EmptyPolicy(AabacError):
    """Raised when a policy string is blank."""


class WidthOverflow(AabacError):
    """An integer value or comparison bound does not fit its bit width."""


# --- abe ---

class UnsupportedThreshold(AabacError):
    """Threshold node is neither 1-of-n nor n-of-n."""


class PolicyNotSatisfied(AabacError):
    """The key's attributes do not satisfy the ciphertext policy (the
    expected denial signal, not a fault)."""


class IntegrityError(AabacError):
    """Authenticated decryption failed: the ciphertext was tampered with."""


class ParamsMismatch(AabacError):
    """Key and ciphertext were produced under different public params."""


# --- naming ---

class MalformedName(AabacError):
    pass


class MissingLocator(AabacError):
    """Name carries no local_ledger annotation."""


# --- ndn_sim ---

class Timeout(AabacError):
    """Interest lifetime elapsed without a Data packet."""


class NoRoute(AabacError):
    """No FIB entry, producer, or cache entry matched the Interest."""


class MissingSegment(AabacError):
    def __init__(self, index: int):
        self.index = index
        super().__init__(f"missing segment {index}")


class UnknownSigner(AabacError):
    """Signer is not present in the trust store."""


class DuplicatePrefix(AabacError):
    pass


# --- ledger / noc ---

class NotFound(AabacError):
    pass


class DuplicateUser(AabacError):
    pass


class UnknownUser(AabacError):
    pass


class RequestDenied(AabacError):
    """Local ledger refused to vet a key request.

    reason is one of: unknown_user, bad_signature, revoked, attribute_not_held.
    """

    def __init__(self, reason: str, detail: str = ""):
        self.reason = reason
        super().__init__(f"request denied: {reason}" + (f" ({detail})" if detail else ""))


class UntrustedRequest(AabacError):
    """Key request lacks a valid local-ledger signature."""


class UnknownLedger(AabacError):
    """Request signed by a ledger the NOC does not recognize."""


# --- publisher ---

class AgreementViolation(AabacError):
    """Policy references an attribute outside the namespace agreement."""


class TooEarly(AabacError):
    """Epoch advance attempted before the reencryption interval elapsed."""


# --- consumer ---

class SignatureInvalid(AabacError):
    """A fetched packet failed signature verification."""


class AccessDenied(AabacError):
    """Decryption still impossible after a key refresh."""


# --- cli ---

class SpecError(AabacError):
    """Scenario spec file is invalid."""
