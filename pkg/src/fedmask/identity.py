"""Participant identity hashing and roster bookkeeping.

The compensator never learns usernames, tokens, or the project id. Each
client hashes its own username and access token, the compensator combines
the per-client hashes into order-invariant aggregate hashes, and the server
independently derives the same aggregates from its roster. Equal aggregates
prove both parties saw the same participant set without revealing it.
"""

from __future__ import annotations

import hashlib
import hmac
import os
import secrets
from dataclasses import dataclass

from .errors import BadCredentials, MalformedHash, RosterFull, TokenAlreadyBound

_HEX_DIGITS = frozenset("0123456789abcdef")


def sha256_hex(text: str) -> str:
    """Lowercase hex SHA-256 of the UTF-8 encoding of text."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _require_hash(value, what: str) -> str:
    if not isinstance(value, str) or len(value) != 64 or not set(value) <= _HEX_DIGITS:
        raise MalformedHash(f"{what} must be 64 lowercase hex chars, got {value!r}")
    return value


def combine_hashes(hashes) -> str:
    """Order-invariant combination: digest of the sorted, concatenated hashes.

    The member hashes are fixed-width hex strings, so plain concatenation
    without separators is unambiguous.
    """
    items = [_require_hash(h, "member hash") for h in hashes]
    if not items:
        raise MalformedHash("cannot combine an empty hash list")
    return hashlib.sha256("".join(sorted(items)).encode("ascii")).hexdigest()


@dataclass(frozen=True)
class CompensatorIdentity:
    """The hash triple attached to every aggregate noise message."""

    project_hash: str
    username_hash: str
    token_hash: str

    def __post_init__(self):
        _require_hash(self.project_hash, "project hash")
        _require_hash(self.username_hash, "username hash")
        _require_hash(self.token_hash, "token hash")

    def to_wire(self) -> dict:
        return {
            "project_hash": self.project_hash,
            "username_hash": self.username_hash,
            "token_hash": self.token_hash,
        }

    @classmethod
    def from_wire(cls, obj) -> "CompensatorIdentity":
        try:
            return cls(
                project_hash=obj["project_hash"],
                username_hash=obj["username_hash"],
                token_hash=obj["token_hash"],
            )
        except (KeyError, TypeError) as exc:
            raise MalformedHash(f"malformed identity object: {obj!r}") from exc


def combine_member_hashes(project_hash: str, members) -> CompensatorIdentity:
    """Aggregate identity from per-member (username_hash, token_hash) pairs.

    This is the compensator-side derivation: it only ever sees hashes.
    """
    members = list(members)
    if not members:
        raise MalformedHash("member list must be non-empty")
    return CompensatorIdentity(
        project_hash=_require_hash(project_hash, "project hash"),
        username_hash=combine_hashes(u for u, _ in members),
        token_hash=combine_hashes(t for _, t in members),
    )


def derive_compensator_identity(project_id: str, members) -> CompensatorIdentity:
    """Server-side derivation from the raw project id and member hash pairs."""
    return combine_member_hashes(sha256_hex(project_id), members)


@dataclass
class ParticipantToken:
    """One invitation token; binding to a username is single-use."""

    token: str
    project_id: str
    bound_username: str | None = None

    @property
    def used(self) -> bool:
        return self.bound_username is not None


class Roster:
    """The issued tokens of one project and their username bindings."""

    def __init__(self, project_id: str, capacity: int):
        if capacity < 1:
            raise ValueError(f"capacity must be positive, got {capacity}")
        self.project_id = project_id
        self.capacity = capacity
        self._tokens: dict = {}

    def issue(self, rng=None) -> ParticipantToken:
        if len(self._tokens) >= self.capacity:
            raise RosterFull(
                f"all {self.capacity} tokens for this project are already issued"
            )
        while True:
            token = new_token(rng)
            if token not in self._tokens:
                break
        record = ParticipantToken(token=token, project_id=self.project_id)
        self._tokens[token] = record
        return record

    def bind(self, token: str, username: str) -> None:
        record = self._tokens.get(token)
        if record is None:
            raise BadCredentials("token not recognized for this project")
        if record.bound_username is not None:
            if record.bound_username == username:
                return  # idempotent re-join with the same credentials
            raise TokenAlreadyBound("token already bound to another participant")
        if any(r.bound_username == username for r in self._tokens.values()):
            raise TokenAlreadyBound(f"username {username!r} already joined")
        record.bound_username = username

    def holds(self, username: str, token: str) -> bool:
        record = self._tokens.get(token)
        return record is not None and record.bound_username == username

    @property
    def issued(self) -> int:
        return len(self._tokens)

    @property
    def joined(self) -> int:
        return sum(1 for r in self._tokens.values() if r.used)

    @property
    def full(self) -> bool:
        return self.joined >= self.capacity

    def members(self) -> list:
        """Bound (username, token) pairs, in binding-insertion order."""
        return [
            (r.bound_username, r.token)
            for r in self._tokens.values()
            if r.bound_username is not None
        ]

    def identity(self) -> CompensatorIdentity:
        return derive_compensator_identity(
            self.project_id,
            [(sha256_hex(u), sha256_hex(t)) for u, t in self.members()],
        )

    def to_wire(self) -> list:
        return [
            {"token": r.token, "bound_username": r.bound_username}
            for r in self._tokens.values()
        ]

    @classmethod
    def from_wire(cls, project_id: str, capacity: int, rows) -> "Roster":
        roster = cls(project_id, capacity)
        for row in rows:
            record = ParticipantToken(
                token=row["token"],
                project_id=project_id,
                bound_username=row.get("bound_username"),
            )
            roster._tokens[record.token] = record
        return roster


# Password digests: salted, iterated SHA-256 via pbkdf2. Fine for the desk
# scale this runs at; a deployment should swap in a slow memory-hard KDF.
_PBKDF2_ITERATIONS = 100_000


def hash_password(password: str, *, salt: bytes | None = None) -> str:
    if salt is None:
        salt = os.urandom(16)
    digest = hashlib.pbkdf2_hmac(
        "sha256", password.encode("utf-8"), salt, _PBKDF2_ITERATIONS
    )
    return f"{salt.hex()}${digest.hex()}"


def verify_password(password: str, stored: str) -> bool:
    try:
        salt_hex, digest_hex = stored.split("$", 1)
        salt = bytes.fromhex(salt_hex)
    except ValueError:
        return False
    digest = hashlib.pbkdf2_hmac(
        "sha256", password.encode("utf-8"), salt, _PBKDF2_ITERATIONS
    )
    return hmac.compare_digest(digest.hex(), digest_hex)


def new_token(rng=None) -> str:
    """One 128-bit access token as 32 hex chars. Pass a random.Random to pin."""
    if rng is None:
        return secrets.token_hex(16)
    return bytes(rng.getrandbits(8) for _ in range(16)).hex()


def new_id(rng=None) -> str:
    """Opaque 128-bit identifier, hex (project ids, session ids)."""
    if rng is None:
        return secrets.token_hex(16)
    return bytes(rng.getrandbits(8) for _ in range(16)).hex()
