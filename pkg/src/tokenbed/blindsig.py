"""RSA blind signatures and issuer key lifecycle.

The scheme is the blind variant of RSA-PSS with a zero-length salt, so the
message encoding is deterministic and the signer is a pure function of the
blinded payload: the unblinded signature is byte-identical to what a direct
deterministic PSS signer would have produced over the same message. That
equality is the cross-check used throughout the test suite.

Flow (client holds the message m, issuer holds the private key):

    em      = EMSA-PSS(m, salt_len=0)           client
    blinded = em * r^e mod n                    client, random r
    s_blind = blinded^d mod n                   issuer (never sees m)
    sig     = s_blind * r^-1 mod n              client
    verify(m, sig) == accept                    anyone with the public key

Keys are 2048-bit RSA; signatures and blinded payloads are exactly 256
bytes. Key generation accepts a ``random.Random`` so whole worlds can be
reproduced from a seed.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field

import gmpy2
from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import padding, rsa

PUBLIC_EXPONENT = 65537
MODULUS_BITS = 2048
SIGNATURE_LEN = MODULUS_BITS // 8  # 256
_HLEN = 32  # sha256 everywhere a digest appears

_PSS = padding.PSS(mgf=padding.MGF1(hashes.SHA256()), salt_length=0)


class BlindSignatureError(Exception):
    """Unblinding or state misuse failed; distinct from plain reject."""


def _digest(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def key_id_for(public_key: rsa.RSAPublicKey) -> bytes:
    """32-byte digest of the canonical (DER SPKI) public key encoding."""
    der = public_key.public_bytes(
        serialization.Encoding.DER,
        serialization.PublicFormat.SubjectPublicKeyInfo,
    )
    return _digest(der)


@dataclass(frozen=True)
class IssuerKeyPair:
    """A signing key with its validity window.

    The window is the *only* source of token expiry: tokens carry no
    expiry of their own and live exactly as long as the key that signed
    them is inside [valid_start, valid_end).
    """

    private_key: rsa.RSAPrivateKey
    public_key: rsa.RSAPublicKey
    key_id: bytes
    valid_start: int
    valid_end: int

    def valid_at(self, now: int) -> bool:
        return self.valid_start <= now < self.valid_end


@dataclass(frozen=True)
class BlindedMessage:
    payload: bytes  # modulus-length


@dataclass(frozen=True)
class BlindSignature:
    payload: bytes  # modulus-length


@dataclass
class BlindingState:
    """Client-side secret for one blinding; consumed exactly once."""

    blinding_factor: int
    original_message: bytes
    consumed: bool = field(default=False)


def _seeded_prime(rng: random.Random, bits: int) -> int:
    # top two bits forced so p*q has exactly 2*bits bits
    while True:
        cand = rng.getrandbits(bits) | (1 << (bits - 1)) | (1 << (bits - 2)) | 1
        p = int(gmpy2.next_prime(cand))
        if p.bit_length() != bits:
            continue
        if (p - 1) % PUBLIC_EXPONENT == 0:
            continue
        return p


def keygen(valid_start: int, valid_end: int,
           rng: random.Random | None = None) -> IssuerKeyPair:
    """Generate a fresh 2048-bit issuer key pair for the given window.

    ``rng`` makes generation reproducible; omitted, system entropy is used.
    """
    if valid_start >= valid_end:
        raise ValueError(
            f"invalid validity window: start {valid_start} >= end {valid_end}")
    rng = rng if rng is not None else random.SystemRandom()
    p = _seeded_prime(rng, MODULUS_BITS // 2)
    q = _seeded_prime(rng, MODULUS_BITS // 2)
    while q == p:
        q = _seeded_prime(rng, MODULUS_BITS // 2)
    n = p * q
    lam = (p - 1) * (q - 1) // int(gmpy2.gcd(p - 1, q - 1))
    d = pow(PUBLIC_EXPONENT, -1, lam)
    private = rsa.RSAPrivateNumbers(
        p=p, q=q, d=d,
        dmp1=d % (p - 1), dmq1=d % (q - 1),
        iqmp=rsa.rsa_crt_iqmp(p, q),
        public_numbers=rsa.RSAPublicNumbers(PUBLIC_EXPONENT, n),
    ).private_key()
    public = private.public_key()
    return IssuerKeyPair(
        private_key=private,
        public_key=public,
        key_id=key_id_for(public),
        valid_start=valid_start,
        valid_end=valid_end,
    )


def _mgf1(seed: bytes, length: int) -> bytes:
    out = b""
    for counter in range((length + _HLEN - 1) // _HLEN):
        out += hashlib.sha256(seed + counter.to_bytes(4, "big")).digest()
    return out[:length]


def _emsa_pss_encode(message: bytes) -> bytes:
    """Deterministic EMSA-PSS (salt length 0) for a 2048-bit modulus."""
    em_len = SIGNATURE_LEN
    m_hash = hashlib.sha256(message).digest()
    h = hashlib.sha256(b"\x00" * 8 + m_hash).digest()
    db = b"\x00" * (em_len - _HLEN - 2) + b"\x01"
    db_mask = _mgf1(h, em_len - _HLEN - 1)
    masked = bytes(a ^ b for a, b in zip(db, db_mask))
    # emBits = 2047: clear the single spare top bit so the value is < n
    masked = bytes([masked[0] & 0x7F]) + masked[1:]
    return masked + h + b"\xbc"


def blind(message: bytes, public_key: rsa.RSAPublicKey,
          rng: random.Random | None = None) -> tuple[BlindedMessage, BlindingState]:
    """Blind ``message`` for signing; returns the payload to send and the
    secret state needed to finalize."""
    if not message:
        raise ValueError("cannot blind an empty message")
    rng = rng if rng is not None else random.SystemRandom()
    pub = public_key.public_numbers()
    n, e = pub.n, pub.e
    m = int.from_bytes(_emsa_pss_encode(message), "big")
    if int(gmpy2.gcd(m, n)) != 1:
        # would reveal a factor of n; cannot happen for honest keys
        raise BlindSignatureError("message encoding not invertible mod n")
    r = rng.randrange(2, n)
    while int(gmpy2.gcd(r, n)) != 1:
        r = rng.randrange(2, n)
    blinded = int(gmpy2.powmod(r, e, n)) * m % n
    payload = blinded.to_bytes(SIGNATURE_LEN, "big")
    return BlindedMessage(payload), BlindingState(r, message)


def blind_sign(key: IssuerKeyPair, blinded: BlindedMessage) -> BlindSignature:
    """Sign a blinded payload. The signer never sees the original message;
    the output is deterministic in the payload."""
    if len(blinded.payload) != SIGNATURE_LEN:
        raise ValueError(
            f"blinded payload must be {SIGNATURE_LEN} bytes, got {len(blinded.payload)}")
    numbers = key.private_key.private_numbers()
    n = numbers.public_numbers.n
    z = int.from_bytes(blinded.payload, "big")
    if z >= n:
        raise ValueError("blinded payload out of range for modulus")
    s = int(gmpy2.powmod(z, numbers.d, n))
    return BlindSignature(s.to_bytes(SIGNATURE_LEN, "big"))


def finalize(state: BlindingState, blind_sig: BlindSignature,
             public_key: rsa.RSAPublicKey) -> bytes:
    """Unblind and self-check; returns a signature over the original
    message verifiable with ``public_key``. Consumes ``state``."""
    if state.consumed:
        raise BlindSignatureError("blinding state already consumed")
    state.consumed = True
    n = public_key.public_numbers().n
    s_blind = int.from_bytes(blind_sig.payload, "big")
    sig = s_blind * pow(state.blinding_factor, -1, n) % n
    sig_bytes = sig.to_bytes(SIGNATURE_LEN, "big")
    if not verify(state.original_message, sig_bytes, public_key):
        raise BlindSignatureError(
            "unblinded signature failed verification (wrong key or corrupt signature)")
    return sig_bytes


def verify(message: bytes, signature: bytes,
           public_key: rsa.RSAPublicKey) -> bool:
    """Accept iff ``signature`` is valid for ``message`` under the key."""
    try:
        public_key.verify(signature, message, _PSS, hashes.SHA256())
        return True
    except InvalidSignature:
        return False
    except ValueError:
        return False


def sign_direct(key: IssuerKeyPair, message: bytes) -> bytes:
    """Non-blind deterministic signature over ``message``.

    Identical bytes to blind -> blind_sign -> finalize on the same message,
    which makes this the independent cross-check for the blind flow.
    """
    return key.private_key.sign(message, _PSS, hashes.SHA256())
