"""Server side of the two-stage token pipeline.

Five cooperating services:

  * IdentityService    - verifies device eligibility, blind-signs TGTs,
                         bans devices that grind token issuance
  * TokenGrantingService - redeems a TGT for a batch of blind-signed OTTs,
                         charging a per-TGT quota ledger
  * Relay              - metadata-stripping hop; everything behind it sees
                         tokens but never a device identity
  * Gateway            - consumes one OTT per request (spent set)
  * ComputeNode        - validates the TGT, optionally enforcing the result,
                         and returns a canned response

Only the identity service is reachable outside the relay, so device ids
exist solely in its log. Token expiry everywhere derives from signing-key
validity windows; the tokens themselves carry no expiry.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

from cryptography.exceptions import InvalidSignature as _Ed25519Reject
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PublicKey

from . import blindsig
from .blindsig import BlindedMessage, BlindSignature, IssuerKeyPair
from .errors import (
    BadSignature,
    DeviceMismatch,
    DoubleSpend,
    ExpiredToken,
    Ineligible,
    InvalidToken,
    IssuerBanned,
    NoValidKey,
    RateLimited,
    TGTValidationFailed,
    UnknownKey,
)
from .eventlog import EventLog
from .tokens import Token, TokenKind

TGT_ISSUER_NAME = "tgt.issuer.test"
OTT_ISSUER_NAME = "ott.issuer.test"

DAY = 86_400
HOUR = 3_600


@dataclass(frozen=True)
class ServiceConfig:
    """Knobs for the whole pipeline; defaults give the desk-scale world."""

    enforce_tgt_validation: bool = False
    ott_batch_target: int = 50
    quota_limit: int = 100          # OTT redemptions per window per TGT
    quota_window: int = DAY
    cooldown_period: int = DAY
    tgt_key_lifetime: int = 4 * DAY
    ott_key_lifetime: int = 12 * HOUR
    tgt_issuance_ban_threshold: int = 5
    device_binding_enabled: bool = False

    def __post_init__(self):
        for name in ("ott_batch_target", "quota_limit", "quota_window",
                     "cooldown_period", "tgt_key_lifetime", "ott_key_lifetime",
                     "tgt_issuance_ban_threshold"):
            value = getattr(self, name)
            if not isinstance(value, int) or value <= 0:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")


@dataclass(frozen=True)
class DeviceAttestation:
    device_id: str
    platform_genuine: bool
    device_pubkey: Optional[bytes] = None  # raw verifying key, binding mode only


@dataclass(frozen=True)
class BindingProof:
    """Per-request proof of possession of the device key committed in the TGT."""

    device_public: bytes
    signature: bytes


def binding_message(payload: bytes, ott_digest: bytes) -> bytes:
    """What the device signs per request: payload digest || spent-OTT digest."""
    return hashlib.sha256(payload).digest() + ott_digest


@dataclass(frozen=True)
class RelayedRequest:
    payload: bytes
    tokens: tuple[Token, ...]
    metadata: dict[str, str]
    binding: Optional[BindingProof] = None


@dataclass(frozen=True)
class NodeResponse:
    status: str
    body: bytes


# ---------------------------------------------------------------------------
# key set and shared validation routine
# ---------------------------------------------------------------------------

@dataclass
class RotationReport:
    minted: list[tuple[TokenKind, bytes]] = field(default_factory=list)
    retired: list[tuple[TokenKind, bytes]] = field(default_factory=list)


class IssuerKeySet:
    """Signing keys per token kind, rotated on a fixed period.

    Expired keys stay in the list for audit and for classifying stale
    tokens as expired, but are never selected for signing.
    """

    _KINDS = (TokenKind.TGT, TokenKind.OTT)

    def __init__(self, rng: random.Random, lifetimes: dict[TokenKind, int],
                 log: EventLog):
        self._rng = rng
        self._lifetimes = dict(lifetimes)
        self._log = log
        self.keys: dict[TokenKind, list[IssuerKeyPair]] = {k: [] for k in self._KINDS}
        self._retired_logged: set[bytes] = set()
        for kind in self._KINDS:
            self._mint(kind, 0, now=0)

    def _mint(self, kind: TokenKind, start: int, now: int) -> IssuerKeyPair:
        life = self._lifetimes[kind]
        key = blindsig.keygen(start, start + life, self._rng)
        self.keys[kind].append(key)
        self._log.log(now, "keyset", "KEY_MINTED",
                      detail=f"kind={kind.value} key={key.key_id.hex()[:16]} "
                             f"window=[{key.valid_start},{key.valid_end})")
        return key

    def rotate(self, now: int) -> RotationReport:
        """Mint successors for keys whose window ends within one rotation
        period; report newly minted and newly expired key ids."""
        report = RotationReport()
        for kind in self._KINDS:
            period = self._lifetimes[kind]
            while self.keys[kind][-1].valid_end <= now + period:
                key = self._mint(kind, self.keys[kind][-1].valid_end, now)
                report.minted.append((kind, key.key_id))
            for key in self.keys[kind]:
                if key.valid_end <= now and key.key_id not in self._retired_logged:
                    self._retired_logged.add(key.key_id)
                    report.retired.append((kind, key.key_id))
                    self._log.log(now, "keyset", "KEY_RETIRED",
                                  detail=f"kind={kind.value} key={key.key_id.hex()[:16]}")
        return report

    def signing_key(self, kind: TokenKind, now: int) -> IssuerKeyPair:
        for key in reversed(self.keys[kind]):
            if key.valid_at(now):
                return key
        raise NoValidKey(f"no {kind.value} signing key valid at t={now}")

    def kind_keys(self, kind: TokenKind) -> list[IssuerKeyPair]:
        return self.keys[kind]

    def active_public(self, kind: TokenKind, now: int):
        """Client-visible directory entry: (key_id, public key) valid now."""
        key = self.signing_key(kind, now)
        return key.key_id, key.public_key

    def public_windows(self, kind: TokenKind) -> list[tuple[bytes, int, int]]:
        return [(k.key_id, k.valid_start, k.valid_end) for k in self.keys[kind]]


def validate_token(token: Token, keys: Sequence[IssuerKeyPair], now: int) -> IssuerKeyPair:
    """Filter keys to the ones valid at ``now``, match token_key_id, then
    verify the authenticator over the 98-byte signed portion."""
    valid_keys = [k for k in keys if k.valid_at(now)]
    matches = [k for k in valid_keys if k.key_id == token.token_key_id]
    if not matches:
        if any(k.key_id == token.token_key_id for k in keys):
            raise ExpiredToken("token signed by a key outside its validity window")
        raise UnknownKey("token_key_id matches no known key")
    key = matches[0]
    if not blindsig.verify(token.signed_portion(), token.authenticator, key.public_key):
        raise BadSignature("authenticator does not verify over the signed portion")
    return key


# ---------------------------------------------------------------------------
# quota ledger, spent set, ban list
# ---------------------------------------------------------------------------

@dataclass
class LedgerEntry:
    redeemed_count: int = 0
    window_start: int = 0
    cooldown_until: Optional[int] = None
    lifetime_redeemed: int = 0  # monotone; never reset, used for attribution


class QuotaLedger:
    """Per-TGT redemption accounting with a cooldown once the quota trips."""

    def __init__(self):
        self.entries: dict[bytes, LedgerEntry] = {}

    def _entry(self, tgt_digest: bytes, now: int) -> LedgerEntry:
        if tgt_digest not in self.entries:
            self.entries[tgt_digest] = LedgerEntry(window_start=now)
        return self.entries[tgt_digest]

    def reset_if_cooled(self, tgt_digest: bytes, now: int) -> LedgerEntry:
        entry = self._entry(tgt_digest, now)
        if entry.cooldown_until is not None and now >= entry.cooldown_until:
            entry.redeemed_count = 0
            entry.window_start = now
            entry.cooldown_until = None
        return entry

    def sweep(self, now: int) -> list[bytes]:
        """reset_if_cooled over every entry; returns digests that reset."""
        done = []
        for digest in sorted(self.entries):
            entry = self.entries[digest]
            was_cooling = entry.cooldown_until is not None
            self.reset_if_cooled(digest, now)
            if was_cooling and entry.cooldown_until is None:
                done.append(digest)
        return done

    def charge(self, tgt_digest: bytes, amount: int, now: int,
               config: ServiceConfig) -> int:
        """Charge ``amount`` redemptions; returns quota remaining.

        Raises RateLimited when cooling down or when the charge would
        exceed the window quota (which starts the cooldown).
        """
        entry = self.reset_if_cooled(tgt_digest, now)
        if entry.cooldown_until is None and now >= entry.window_start + config.quota_window:
            entry.redeemed_count = 0
            entry.window_start = now
        if entry.cooldown_until is not None:
            raise RateLimited(entry.cooldown_until)
        if entry.redeemed_count + amount > config.quota_limit:
            entry.cooldown_until = now + config.cooldown_period
            raise RateLimited(entry.cooldown_until)
        entry.redeemed_count += amount
        entry.lifetime_redeemed += amount
        return config.quota_limit - entry.redeemed_count

    def lifetime_redeemed(self, tgt_digest: bytes) -> int:
        entry = self.entries.get(tgt_digest)
        return entry.lifetime_redeemed if entry else 0

    def snapshot(self) -> list[tuple[str, int, int]]:
        return [(d.hex(), e.redeemed_count, e.lifetime_redeemed)
                for d, e in sorted(self.entries.items())]


class SpentSet:
    """Consumed-OTT digests; exact membership at desk scale."""

    def __init__(self):
        self._spent: set[bytes] = set()

    def insert(self, digest: bytes) -> bool:
        """Atomic check-then-insert; False when already spent."""
        if digest in self._spent:
            return False
        self._spent.add(digest)
        return True

    def __contains__(self, digest: bytes) -> bool:
        return digest in self._spent

    def __len__(self) -> int:
        return len(self._spent)


class IssuanceBanList:
    """Sliding-window TGT-issuance counters per device, with ban state."""

    def __init__(self):
        self._times: dict[str, list[int]] = {}
        self.banned_until: dict[str, int] = {}

    def check(self, device_id: str, now: int, threshold: int, window: int,
              ban_duration: int) -> None:
        until = self.banned_until.get(device_id)
        if until is not None and now < until:
            raise IssuerBanned(until)
        times = [t for t in self._times.get(device_id, []) if t > now - window]
        self._times[device_id] = times
        if len(times) >= threshold:
            until = now + ban_duration
            self.banned_until[device_id] = until
            raise IssuerBanned(until)

    def record(self, device_id: str, now: int) -> None:
        self._times.setdefault(device_id, []).append(now)


# ---------------------------------------------------------------------------
# services
# ---------------------------------------------------------------------------

class IdentityService:
    """Device-facing issuer: the only service that ever sees a device id."""

    def __init__(self, keyset: IssuerKeySet, banlist: IssuanceBanList,
                 config: ServiceConfig, log: EventLog):
        self.keyset = keyset
        self.banlist = banlist
        self.config = config
        self.log = log

    def issue_tgt(self, att: DeviceAttestation, blinded: BlindedMessage,
                  now: int, commitment: Optional[bytes] = None) -> BlindSignature:
        if not att.platform_genuine:
            self.log.log(now, "identity", "TGT_ISSUE_DENIED",
                         detail=f"device={att.device_id} reason=ineligible")
            raise Ineligible("device is not genuine platform hardware")
        try:
            self.banlist.check(att.device_id, now,
                               self.config.tgt_issuance_ban_threshold,
                               self.config.quota_window,
                               self.config.cooldown_period)
        except IssuerBanned as err:
            self.log.log(now, "identity", "TGT_ISSUE_DENIED",
                         detail=f"device={att.device_id} reason=banned_until:{err.banned_until}")
            raise
        if self.config.device_binding_enabled:
            expected = hashlib.sha256(att.device_pubkey or b"").digest()
            if commitment is None or commitment != expected:
                self.log.log(now, "identity", "TGT_ISSUE_DENIED",
                             detail=f"device={att.device_id} reason=bad_device_commitment")
                raise DeviceMismatch("issuance requires a commitment to the device key")
        key = self.keyset.signing_key(TokenKind.TGT, now)
        signature = blindsig.blind_sign(key, blinded)
        self.banlist.record(att.device_id, now)
        self.log.log(now, "identity", "TGT_ISSUED",
                     detail=f"device={att.device_id} key={key.key_id.hex()[:16]}")
        return signature


class TokenGrantingService:
    """Redeems a valid TGT for a batch of blind-signed OTTs, rate limited
    per TGT digest. Sits behind the relay; never learns who is asking."""

    def __init__(self, keyset: IssuerKeySet, ledger: QuotaLedger,
                 config: ServiceConfig, log: EventLog):
        self.keyset = keyset
        self.ledger = ledger
        self.config = config
        self.log = log
        # raw blinded payloads observed, for unlinkability audits
        self.transcript: list[bytes] = []

    def redeem(self, tgt: Token, blinded_batch: Sequence[BlindedMessage],
               now: int) -> list[BlindSignature]:
        if len(blinded_batch) < 1:
            raise ValueError("redemption batch must contain at least one blinded message")
        try:
            validate_token(tgt, self.keyset.kind_keys(TokenKind.TGT), now)
        except (UnknownKey, BadSignature) as err:
            self.log.log(now, "tgs", "REDEEM_DENIED", tgt.digest(),
                         detail=f"reason={err.code}")
            raise InvalidToken(f"TGT rejected: {err.code}") from err
        except ExpiredToken:
            self.log.log(now, "tgs", "REDEEM_DENIED", tgt.digest(),
                         detail="reason=ExpiredToken")
            raise
        digest = tgt.digest()
        try:
            remaining = self.ledger.charge(digest, len(blinded_batch), now, self.config)
        except RateLimited as err:
            self.log.log(now, "tgs", "REDEEM_DENIED", digest,
                         detail=f"reason=RateLimited cooldown_until={err.cooldown_until}")
            raise
        key = self.keyset.signing_key(TokenKind.OTT, now)
        self.transcript.extend(b.payload for b in blinded_batch)
        signatures = [blindsig.blind_sign(key, b) for b in blinded_batch]
        self.log.log(now, "tgs", "OTT_BATCH_SIGNED", digest,
                     detail=f"batch={len(signatures)} remaining={remaining}")
        return signatures


class Relay:
    """Metadata-stripping hop; payload and tokens pass through unmodified."""

    def __init__(self, log: EventLog):
        self.log = log

    def forward(self, req: RelayedRequest, now: int) -> RelayedRequest:
        stripped = replace(req, metadata={})
        self.log.log(now, "relay", "RELAY_FORWARDED",
                     detail=f"tokens={len(req.tokens)} payload_len={len(req.payload)}")
        return stripped


class Gateway:
    """Validates and consumes the outer OTT, then hands the inner package
    (payload + TGT) to the compute node. The OTT itself is dropped."""

    def __init__(self, keyset: IssuerKeySet, spent: SpentSet, node: "ComputeNode",
                 config: ServiceConfig, log: EventLog):
        self.keyset = keyset
        self.spent = spent
        self.node = node
        self.config = config
        self.log = log
        # token bytes observed per request, for replay-indistinguishability audits
        self.transcript: list[tuple[bytes, bytes, bytes]] = []

    def validate_ott(self, ott: Token, now: int) -> IssuerKeyPair:
        try:
            key = validate_token(ott, self.keyset.kind_keys(TokenKind.OTT), now)
        except (UnknownKey, BadSignature) as err:
            self.log.log(now, "gateway", "OTT_REJECTED", ott.digest(),
                         detail=f"reason={err.code}")
            raise InvalidToken(f"OTT rejected: {err.code}") from err
        except ExpiredToken:
            self.log.log(now, "gateway", "OTT_REJECTED", ott.digest(),
                         detail="reason=ExpiredToken")
            raise
        if not self.spent.insert(ott.digest()):
            self.log.log(now, "gateway", "OTT_REJECTED", ott.digest(),
                         detail="reason=DoubleSpend")
            raise DoubleSpend("OTT already consumed")
        self.log.log(now, "gateway", "OTT_CONSUMED", ott.digest(),
                     detail=f"spent_set={len(self.spent)}")
        return key

    def handle(self, req: RelayedRequest, now: int) -> NodeResponse:
        if len(req.tokens) < 2:
            raise InvalidToken("request must carry an OTT and a TGT")
        ott, tgt = req.tokens[0], req.tokens[1]
        self.transcript.append((req.payload, ott.serialize(), tgt.serialize()))
        self.validate_ott(ott, now)
        return self.node.handle(req.payload, tgt, now,
                                ott_digest=ott.digest(), binding=req.binding)


class ComputeNode:
    """Handles a request after the gateway consumed its OTT.

    TGT validation always runs; whether a failure aborts the request is
    controlled by enforce_tgt_validation (default off: the failure is
    logged and a success response is returned anyway). The response body
    depends only on the payload, never on the TGT.
    """

    def __init__(self, keyset: IssuerKeySet, config: ServiceConfig, log: EventLog):
        self.keyset = keyset
        self.config = config
        self.log = log

    def _check_binding(self, payload: bytes, tgt: Token, now: int,
                       ott_digest: Optional[bytes],
                       binding: Optional[BindingProof]) -> None:
        if binding is None:
            self.log.log(now, "node", "BINDING_REJECTED", tgt.digest(),
                         detail="reason=missing_proof")
            raise DeviceMismatch("request carries no device binding proof")
        if ott_digest is None:
            self.log.log(now, "node", "BINDING_REJECTED", tgt.digest(),
                         detail="reason=missing_ott_digest")
            raise DeviceMismatch("no consumed-token digest to bind against")
        if hashlib.sha256(binding.device_public).digest() != tgt.nonce:
            self.log.log(now, "node", "BINDING_REJECTED", tgt.digest(),
                         detail="reason=key_not_committed_in_tgt")
            raise DeviceMismatch("device key does not match the TGT commitment")
        try:
            verifier = Ed25519PublicKey.from_public_bytes(binding.device_public)
            verifier.verify(binding.signature, binding_message(payload, ott_digest))
        except (_Ed25519Reject, ValueError) as err:
            self.log.log(now, "node", "BINDING_REJECTED", tgt.digest(),
                         detail="reason=bad_signature")
            raise DeviceMismatch("device binding signature does not verify") from err

    def handle(self, payload: bytes, tgt: Token, now: int,
               ott_digest: Optional[bytes] = None,
               binding: Optional[BindingProof] = None) -> NodeResponse:
        if self.config.device_binding_enabled:
            self._check_binding(payload, tgt, now, ott_digest, binding)
        try:
            validate_token(tgt, self.keyset.kind_keys(TokenKind.TGT), now)
            self.log.log(now, "node", "TGT_VALID", tgt.digest())
        except (UnknownKey, BadSignature, ExpiredToken) as err:
            if self.config.enforce_tgt_validation:
                self.log.log(now, "node", "TGT_INVALID_ABORT", tgt.digest(),
                             detail=f"reason={err.code}")
                raise TGTValidationFailed(f"TGT validation failed: {err.code}") from err
            self.log.log(now, "node", "TGT_INVALID_BYPASSED", tgt.digest(),
                         detail=f"reason={err.code} enforcement=off")
        body = b"canned-response:" + hashlib.sha256(payload).hexdigest()[:16].encode()
        self.log.log(now, "node", "NODE_RESPONSE",
                     detail=f"payload_digest={hashlib.sha256(payload).hexdigest()[:16]}")
        return NodeResponse(status="ok", body=body)
