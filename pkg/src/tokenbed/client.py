"""Device side of the pipeline: tiered credential store, token-pair
fetcher, and request issuer.

The store models three hardening tiers for at-rest tokens:

  * LOGIN_KEYCHAIN        - any caller can read/write once the user approves
  * ENTITLEMENT_PROTECTED - only callers presenting the configured
                            entitlement, regardless of user approval
                            (privileged/kernel-level readers still get through)
  * HARDWARE_SEALED       - plaintext only for the owning daemon; everyone
                            else is denied and the at-rest copy is sealed

The fetcher keeps one TGT plus a cache of up to ``ott_batch_target`` OTTs,
reusing the stored TGT while its signing key is valid and topping the
cache up through the relay. With ``fresh_tgt_on_launch`` nothing is ever
persisted and every launch re-issues.
"""

from __future__ import annotations

import base64
import hashlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey

from . import blindsig
from .errors import AccessDenied, ApprovalDenied, NotFound, RateLimited, ServiceUnavailable
from .services import BindingProof, DeviceAttestation, RelayedRequest, binding_message
from .tokens import Token, TokenKind, assemble_token, make_token_input, parse_token

TGT_SERVICE_NAME = "pcc.tgt"
OTT_SERVICE_PREFIX = "pcc.ott."
DEFAULT_ENTITLEMENT = "keychain-access:pcc"


class StoreTier(Enum):
    LOGIN_KEYCHAIN = "login"
    ENTITLEMENT_PROTECTED = "entitlement"
    HARDWARE_SEALED = "sealed"


@dataclass(frozen=True)
class Caller:
    """Identity of whoever is touching the store."""

    caller_id: str
    entitlements: frozenset[str] = frozenset()
    user_approves: bool = False
    privileged: bool = False  # kernel-level reader; bypasses all but sealing


class CredentialStore:
    """Tiered client-side storage mapping service names to token bytes."""

    def __init__(self, tier: StoreTier, owner_daemon_id: str,
                 required_entitlement: str = DEFAULT_ENTITLEMENT):
        self.tier = tier
        self.owner_daemon_id = owner_daemon_id
        self.required_entitlement = required_entitlement
        self.entries: dict[str, bytes] = {}

    def _authorize(self, caller: Caller) -> None:
        if self.tier is StoreTier.HARDWARE_SEALED:
            # sealing holds even against privileged readers; plaintext
            # exists only inside the owning daemon
            if caller.caller_id != self.owner_daemon_id:
                raise AccessDenied("store is sealed to its owning daemon")
            return
        if caller.privileged:
            return
        if self.tier is StoreTier.ENTITLEMENT_PROTECTED:
            if self.required_entitlement not in caller.entitlements:
                raise AccessDenied(
                    f"caller lacks required entitlement {self.required_entitlement}")
            return
        if not caller.user_approves:
            raise ApprovalDenied("user declined the access prompt")

    def read(self, service_name: str, caller: Caller) -> bytes:
        self._authorize(caller)
        if service_name not in self.entries:
            raise NotFound(f"no entry named {service_name}")
        return self.entries[service_name]

    def write(self, service_name: str, data: bytes, caller: Caller) -> None:
        self._authorize(caller)
        self.entries[service_name] = bytes(data)

    def delete(self, service_name: str, caller: Caller) -> None:
        self._authorize(caller)
        if service_name not in self.entries:
            raise NotFound(f"no entry named {service_name}")
        del self.entries[service_name]

    def names(self, caller: Caller) -> list[str]:
        self._authorize(caller)
        return sorted(self.entries)

    def _at_rest_value(self, name: str) -> bytes:
        if self.tier is StoreTier.HARDWARE_SEALED:
            # at rest only an opaque sealed blob ever exists
            return b"sealed:" + hashlib.sha256(self.entries[name]).digest()
        return self.entries[name]

    def snapshot_lines(self) -> list[str]:
        """At-rest image: one ``service_name<TAB>base64(bytes)`` line per entry."""
        return [f"{name}\t{base64.b64encode(self._at_rest_value(name)).decode()}"
                for name in sorted(self.entries)]

    def snapshot(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for line in self.snapshot_lines():
                fh.write(line + "\n")


@dataclass
class TokenPair:
    """One TGT plus the cached OTTs redeemed under it."""

    tgt: Token
    otts: list[Token] = field(default_factory=list)
    device_key: Optional[Ed25519PrivateKey] = None
    origin: str = "issued"  # issued | restored | imported
    # ott digest -> digest of the TGT it was redeemed under, for cache audits
    provenance: dict[bytes, bytes] = field(default_factory=dict)


class ClientDevice:
    """A simulated device: one request in flight at a time, one store."""

    def __init__(self, name: str, device_id: str, store: CredentialStore,
                 world, source_addr: str = "203.0.113.1",
                 platform_genuine: bool = True,
                 fresh_tgt_on_launch: bool = False,
                 device_key: Optional[Ed25519PrivateKey] = None):
        self.name = name
        self.device_id = device_id
        self.store = store
        self.world = world
        self.source_addr = source_addr
        self.platform_genuine = platform_genuine
        self.fresh_tgt_on_launch = fresh_tgt_on_launch
        self.device_key = device_key
        self.pair: Optional[TokenPair] = None
        self.topup_redeemed_total = 0       # lifetime OTTs redeemed by this device
        self.issued_tgt_digests: set[bytes] = set()  # TGTs this device self-issued

    # -- identity material ---------------------------------------------------

    @property
    def daemon_caller(self) -> Caller:
        return Caller(caller_id=self.store.owner_daemon_id,
                      entitlements=frozenset({self.store.required_entitlement}),
                      user_approves=True)

    @property
    def device_public_bytes(self) -> Optional[bytes]:
        if self.device_key is None:
            return None
        from cryptography.hazmat.primitives import serialization
        return self.device_key.public_key().public_bytes(
            serialization.Encoding.Raw, serialization.PublicFormat.Raw)

    def attestation(self) -> DeviceAttestation:
        return DeviceAttestation(self.device_id, self.platform_genuine,
                                 self.device_public_bytes)

    def metadata(self) -> dict[str, str]:
        return {"device_id": self.device_id, "source_addr": self.source_addr}

    def relaunch(self) -> None:
        """Drop in-memory state, as a daemon restart would."""
        self.pair = None

    # -- token pair lifecycle ------------------------------------------------

    def _tgt_key_valid(self, tgt: Token, now: int) -> bool:
        for key_id, start, end in self.world.keyset.public_windows(TokenKind.TGT):
            if key_id == tgt.token_key_id:
                return start <= now < end
        return False

    def _issue_new_tgt(self, now: int) -> Token:
        binding = self.world.config.device_binding_enabled
        challenge = self.world.challenges[TokenKind.TGT]
        key_id, public_key = self.world.keyset.active_public(TokenKind.TGT, now)
        if binding:
            nonce = hashlib.sha256(self.device_public_bytes or b"").digest()
            commitment = nonce
        else:
            nonce = self.world.rng.randbytes(32)
            commitment = None
        token_input = make_token_input(TokenKind.TGT, nonce, challenge, key_id)
        blinded, state = blindsig.blind(token_input.data, public_key, self.world.rng)
        blind_sig = self.world.identity.issue_tgt(self.attestation(), blinded, now,
                                                  commitment=commitment)
        authenticator = blindsig.finalize(state, blind_sig, public_key)
        tgt = assemble_token(token_input, authenticator)
        self.issued_tgt_digests.add(tgt.digest())
        return tgt

    def ensure_tgt(self, now: int, force: bool = False) -> Token:
        """Reuse the held/stored TGT while its key is valid; otherwise issue.

        ``force`` always issues a fresh one (the grinding path). Imported
        pairs are pinned: the stolen TGT is used as-is, never replaced.
        """
        if not force:
            if self.pair is None and not self.fresh_tgt_on_launch:
                try:
                    self.adopt_store_pair(origin="restored")
                except NotFound:
                    pass
            if self.pair is not None:
                if self.pair.origin == "imported":
                    return self.pair.tgt
                if self._tgt_key_valid(self.pair.tgt, now):
                    return self.pair.tgt
        self.pair = TokenPair(tgt=self._issue_new_tgt(now), device_key=self.device_key)
        self._persist()
        return self.pair.tgt

    def _top_up(self, now: int) -> int:
        """Redeem blinded OTTs through the relay until the cache is at target."""
        assert self.pair is not None
        need = self.world.config.ott_batch_target - len(self.pair.otts)
        if need <= 0:
            return 0
        challenge = self.world.challenges[TokenKind.OTT]
        key_id, public_key = self.world.keyset.active_public(TokenKind.OTT, now)
        inputs, states, blinded = [], [], []
        for _ in range(need):
            token_input = make_token_input(TokenKind.OTT, self.world.rng.randbytes(32),
                                           challenge, key_id)
            message, state = blindsig.blind(token_input.data, public_key, self.world.rng)
            inputs.append(token_input)
            states.append(state)
            blinded.append(message)
        signatures = self.world.send_redeem(self.pair.tgt, blinded, self.metadata(), now)
        cached = {t.digest() for t in self.pair.otts}
        for token_input, state, signature in zip(inputs, states, signatures):
            authenticator = blindsig.finalize(state, signature, public_key)
            ott = assemble_token(token_input, authenticator)
            if ott.digest() in cached:
                raise RuntimeError("duplicate OTT digest in cache")
            cached.add(ott.digest())
            self.pair.otts.append(ott)
            self.pair.provenance[ott.digest()] = self.pair.tgt.digest()
        self.topup_redeemed_total += need
        return need

    def fetch_linked_token_pair(self, now: int) -> TokenPair:
        """Ensure a valid TGT and a full OTT cache; persist unless fresh-mode."""
        self.ensure_tgt(now)
        self._top_up(now)
        self._persist()
        return self.pair

    def _drop_expired_otts(self, now: int) -> int:
        """Lazily discard cached OTTs whose signing key window has passed."""
        if self.pair is None:
            return 0
        windows = {key_id: (start, end)
                   for key_id, start, end in self.world.keyset.public_windows(TokenKind.OTT)}
        keep, dropped = [], 0
        for ott in self.pair.otts:
            window = windows.get(ott.token_key_id)
            if window and window[0] <= now < window[1]:
                keep.append(ott)
            else:
                self.pair.provenance.pop(ott.digest(), None)
                dropped += 1
        if dropped:
            self.pair.otts = keep
            self._persist()
        return dropped

    def issue_request(self, prompt: bytes, now: int):
        """Spend one cached OTT on a request through relay -> gateway -> node."""
        self._drop_expired_otts(now)
        if self.pair is None or not self.pair.otts:
            try:
                self.fetch_linked_token_pair(now)
            except RateLimited as err:
                if self.pair is None or not self.pair.otts:
                    raise ServiceUnavailable(
                        f"token top-up rate limited until t={err.cooldown_until}") from err
        ott = self.pair.otts.pop(0)
        self.pair.provenance.pop(ott.digest(), None)
        self._persist()
        binding = None
        if self.world.config.device_binding_enabled and self.device_key is not None:
            signature = self.device_key.sign(binding_message(prompt, ott.digest()))
            binding = BindingProof(self.device_public_bytes, signature)
        request = RelayedRequest(payload=prompt, tokens=(ott, self.pair.tgt),
                                 metadata=self.metadata(), binding=binding)
        return self.world.send_request(request, now)

    # -- persistence ----------------------------------------------------------

    def _persist(self) -> None:
        if self.fresh_tgt_on_launch:
            return  # never any at-rest copy
        caller = self.daemon_caller
        stale = [n for n in self.store.names(caller)
                 if n == TGT_SERVICE_NAME or n.startswith(OTT_SERVICE_PREFIX)]
        for name in stale:
            self.store.delete(name, caller)
        if self.pair is None:
            return
        self.store.write(TGT_SERVICE_NAME, self.pair.tgt.serialize(), caller)
        for index, ott in enumerate(self.pair.otts):
            self.store.write(f"{OTT_SERVICE_PREFIX}{index}", ott.serialize(), caller)

    def adopt_store_pair(self, origin: str = "restored") -> TokenPair:
        """Load whatever token pair the store holds into memory."""
        caller = self.daemon_caller
        tgt = parse_token(self.store.read(TGT_SERVICE_NAME, caller))
        indexed = []
        for name in self.store.names(caller):
            if name.startswith(OTT_SERVICE_PREFIX):
                indexed.append((int(name[len(OTT_SERVICE_PREFIX):]), name))
        otts = [parse_token(self.store.read(name, caller))
                for _, name in sorted(indexed)]
        self.pair = TokenPair(tgt=tgt, otts=otts, device_key=self.device_key,
                              origin=origin)
        return self.pair

    def discard_tokens(self) -> None:
        self.pair = None
        self._persist()
