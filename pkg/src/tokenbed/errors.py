"""Coded errors shared by every layer of the testbed.

Each error carries a stable machine-readable ``code`` (used by scenario
outcomes and defense reports to name the blocking layer) plus human text.
"""

from __future__ import annotations


class TestbedError(Exception):
    """Base class; ``code`` identifies the failure class across layers."""

    code = "Error"

    def __init__(self, detail: str = ""):
        self.detail = detail
        super().__init__(f"{self.code}: {detail}" if detail else self.code)


# --- issuance (identity service) ---

class Ineligible(TestbedError):
    code = "Ineligible"


class IssuerBanned(TestbedError):
    code = "IssuerBanned"

    def __init__(self, banned_until: int, detail: str = ""):
        self.banned_until = banned_until
        super().__init__(detail or f"banned until t={banned_until}")


class NoValidKey(TestbedError):
    code = "NoValidKey"


# --- token validation ---

class InvalidToken(TestbedError):
    code = "InvalidToken"


class ExpiredToken(TestbedError):
    code = "ExpiredToken"


class UnknownKey(TestbedError):
    code = "UnknownKey"


class BadSignature(TestbedError):
    code = "InvalidSignature"


# --- redemption / spending ---

class RateLimited(TestbedError):
    code = "RateLimited"

    def __init__(self, cooldown_until: int, detail: str = ""):
        self.cooldown_until = cooldown_until
        super().__init__(detail or f"quota exhausted; cooldown until t={cooldown_until}")


class DoubleSpend(TestbedError):
    code = "DoubleSpend"


class TGTValidationFailed(TestbedError):
    code = "TGTValidationFailed"


class DeviceMismatch(TestbedError):
    code = "DeviceMismatch"


# --- credential store ---

class NotFound(TestbedError):
    code = "NotFound"


class AccessDenied(TestbedError):
    code = "AccessDenied"


class ApprovalDenied(TestbedError):
    code = "ApprovalDenied"


# --- client ---

class ServiceUnavailable(TestbedError):
    code = "ServiceUnavailable"


# --- attack bundle ---

class MalformedBundle(TestbedError):
    code = "MalformedBundle"


class BadTokenLength(TestbedError):
    code = "BadTokenLength"


# --- harness ---

class UnknownScenario(TestbedError):
    code = "UnknownScenario"


class ProfileConflict(TestbedError):
    # no conflicting profile combinations exist today; reserved
    code = "ProfileConflict"
