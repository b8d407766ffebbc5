"""Bit-exact token and challenge wire formats.

A token serializes to exactly 354 bytes:

    offset  0   token_type        2  (big-endian)
    offset  2   nonce            32
    offset 34   challenge_digest 32
    offset 66   token_key_id     32
    offset 98   authenticator   256

The first 98 bytes are the signed portion; the authenticator is the blind
signature over them. Challenges are static for a fixed configuration, so
the challenge digest never varies between two tokens of the same kind and
the nonce is the only client-chosen field.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum

TOKEN_TYPE_BLIND_RSA = 0x0002  # single 2-byte constant, both kinds

NONCE_LEN = 32
DIGEST_LEN = 32
KEY_ID_LEN = 32
AUTHENTICATOR_LEN = 256
INPUT_LEN = 2 + NONCE_LEN + DIGEST_LEN + KEY_ID_LEN  # 98
TOKEN_LEN = INPUT_LEN + AUTHENTICATOR_LEN  # 354


class TokenKind(Enum):
    TGT = "TGT"  # long-lived, per-device, redeemable for OTTs
    OTT = "OTT"  # single-use, attached to each request


@dataclass(frozen=True)
class TokenChallenge:
    """Static challenge structure; all fields length-prefixed on the wire.

    redemption_context and origin_info default to zero-filled / empty, so a
    fixed (kind, issuer_name) pair always serializes to identical bytes.
    """

    token_type: int
    issuer_name: str
    redemption_context: bytes = field(default=b"\x00" * 32)
    origin_info: bytes = field(default=b"")

    def __post_init__(self):
        if not self.issuer_name:
            raise ValueError("issuer_name must be non-empty")
        if not self.issuer_name.isascii():
            raise ValueError("issuer_name must be ASCII")
        if len(self.redemption_context) not in (0, 32):
            raise ValueError("redemption_context must be 0 or 32 bytes")

    def serialize(self) -> bytes:
        name = self.issuer_name.encode("ascii")
        return b"".join([
            self.token_type.to_bytes(2, "big"),
            len(name).to_bytes(2, "big"), name,
            len(self.redemption_context).to_bytes(1, "big"), self.redemption_context,
            len(self.origin_info).to_bytes(2, "big"), self.origin_info,
        ])


def build_challenge(kind: TokenKind, issuer_name: str) -> TokenChallenge:
    """Deterministic challenge for a token kind and issuer endpoint name."""
    del kind  # both kinds share the same structure; names keep them distinct
    return TokenChallenge(token_type=TOKEN_TYPE_BLIND_RSA, issuer_name=issuer_name)


def challenge_digest(challenge: TokenChallenge) -> bytes:
    return hashlib.sha256(challenge.serialize()).digest()


@dataclass(frozen=True)
class TokenInput:
    """The 98-byte signed portion before the authenticator is attached."""

    data: bytes

    def __post_init__(self):
        if len(self.data) != INPUT_LEN:
            raise ValueError(f"token input must be {INPUT_LEN} bytes, got {len(self.data)}")


def make_token_input(kind: TokenKind, nonce: bytes, challenge: TokenChallenge,
                     key_id: bytes) -> TokenInput:
    """Concatenate the signed portion: type || nonce || challenge digest || key id."""
    del kind
    if len(nonce) != NONCE_LEN:
        raise ValueError(f"nonce must be {NONCE_LEN} bytes, got {len(nonce)}")
    if len(key_id) != KEY_ID_LEN:
        raise ValueError(f"key_id must be {KEY_ID_LEN} bytes, got {len(key_id)}")
    data = (TOKEN_TYPE_BLIND_RSA.to_bytes(2, "big") + nonce
            + challenge_digest(challenge) + key_id)
    return TokenInput(data)


@dataclass(frozen=True)
class Token:
    token_type: int
    nonce: bytes
    challenge_digest: bytes
    token_key_id: bytes
    authenticator: bytes

    def serialize(self) -> bytes:
        return (self.token_type.to_bytes(2, "big") + self.nonce
                + self.challenge_digest + self.token_key_id + self.authenticator)

    def signed_portion(self) -> bytes:
        return self.serialize()[:INPUT_LEN]

    def digest(self) -> bytes:
        """32-byte digest of the full serialization; keys ledgers and spent sets."""
        return hashlib.sha256(self.serialize()).digest()


def assemble_token(token_input: TokenInput, authenticator: bytes) -> Token:
    if len(authenticator) != AUTHENTICATOR_LEN:
        raise ValueError(
            f"authenticator must be {AUTHENTICATOR_LEN} bytes, got {len(authenticator)}")
    return parse_token(token_input.data + authenticator)


def parse_token(data: bytes) -> Token:
    """Slice the fixed layout at offsets 0, 2, 34, 66, 98."""
    if len(data) != TOKEN_LEN:
        raise ValueError(f"token must be {TOKEN_LEN} bytes, got {len(data)}")
    return Token(
        token_type=int.from_bytes(data[0:2], "big"),
        nonce=data[2:34],
        challenge_digest=data[34:66],
        token_key_id=data[66:98],
        authenticator=data[98:],
    )
