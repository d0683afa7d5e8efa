"""Hash combination, aggregate identities, roster binding, passwords.

Digest constants were derived with the sha256sum binary (see the notes
directory of the build), not with this package's own hashing code.
"""

import random

import pytest

from fedmask.errors import (
    BadCredentials,
    MalformedHash,
    RosterFull,
    TokenAlreadyBound,
)
from fedmask.identity import (
    CompensatorIdentity,
    Roster,
    combine_hashes,
    combine_member_hashes,
    derive_compensator_identity,
    hash_password,
    new_id,
    new_token,
    sha256_hex,
    verify_password,
)

# sha256sum oracle digests
DIGEST_EMPTY = "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
DIGEST_ALICE = "2bd806c97f0e00af1a1fc3328fa763a9269723c8db8fac4f93af71db186d6e90"
DIGEST_PROJECT_42 = "87a84fc90906e059b46893cce14782df38a28fdc53290f8cb52dab00753088a3"
DIGEST_DEADBEEF = "2baf1f40105d9501fe319a8ec463fdf4325a2a5df445adf3f572f626253678c9"

# combination of sha256("u1"), sha256("u2"), sha256("u3"): sort the hex
# strings, concatenate without separators, digest the ASCII bytes.
COMBINED_U123 = "32643cbe9f3006343bfabeab0836150eef649426c30e204a7e4296d8ae0dae10"
COMBINED_T123 = "09fe7c6fdf4f4cbfd57eaa6c6c98de43fd6d2e0764df7da852105afc8695c3d4"
HASH_PROJ_1 = "920581d82c9c3a08fc5cc38ecae2fcef37d73135da4f4d934d2e2e9f86fb95f7"


class TestHashing:
    def test_sha256_hex_matches_external_oracle(self):
        assert sha256_hex("") == DIGEST_EMPTY
        assert sha256_hex("alice") == DIGEST_ALICE
        assert sha256_hex("project-42") == DIGEST_PROJECT_42
        assert sha256_hex("deadbeef") == DIGEST_DEADBEEF

    def test_combine_matches_external_oracle(self):
        hashes = [sha256_hex(u) for u in ("u1", "u2", "u3")]
        assert combine_hashes(hashes) == COMBINED_U123
        assert combine_hashes(sha256_hex(t) for t in ("t1", "t2", "t3")) == COMBINED_T123

    def test_combine_is_order_invariant(self):
        hashes = [sha256_hex(u) for u in ("u1", "u2", "u3")]
        gen = random.Random(31)
        for _ in range(100):
            shuffled = hashes[:]
            gen.shuffle(shuffled)
            assert combine_hashes(shuffled) == COMBINED_U123

    def test_combine_rejects_bad_input(self):
        with pytest.raises(MalformedHash):
            combine_hashes([])
        with pytest.raises(MalformedHash):
            combine_hashes(["zz" * 32])
        with pytest.raises(MalformedHash):
            combine_hashes([sha256_hex("x").upper()])
        with pytest.raises(MalformedHash):
            combine_hashes(["abc"])


class TestCompensatorIdentity:
    def _members(self):
        return [
            (sha256_hex(f"u{i}"), sha256_hex(f"t{i}")) for i in (1, 2, 3)
        ]

    def test_derivation_matches_oracle(self):
        identity = derive_compensator_identity("proj-1", self._members())
        assert identity.project_hash == HASH_PROJ_1
        assert identity.username_hash == COMBINED_U123
        assert identity.token_hash == COMBINED_T123

    def test_server_and_compensator_derivations_agree(self):
        members = self._members()
        from_id = derive_compensator_identity("proj-1", members)
        from_hash = combine_member_hashes(sha256_hex("proj-1"), members)
        assert from_id == from_hash

    def test_permutation_invariance(self):
        members = self._members()
        base = derive_compensator_identity("proj-1", members)
        gen = random.Random(7)
        for _ in range(100):
            shuffled = members[:]
            gen.shuffle(shuffled)
            assert derive_compensator_identity("proj-1", shuffled) == base

    def test_any_member_change_changes_identity(self):
        base = derive_compensator_identity("proj-1", self._members())
        mutated = self._members()
        mutated[1] = (mutated[1][0], sha256_hex("t2-other"))
        assert derive_compensator_identity("proj-1", mutated) != base

    def test_wire_roundtrip_and_validation(self):
        identity = derive_compensator_identity("proj-1", self._members())
        assert CompensatorIdentity.from_wire(identity.to_wire()) == identity
        with pytest.raises(MalformedHash):
            CompensatorIdentity.from_wire({"project_hash": "x"})
        with pytest.raises(MalformedHash):
            CompensatorIdentity("short", DIGEST_ALICE, DIGEST_ALICE)


class TestRoster:
    def test_issue_cap(self):
        roster = Roster("p", 3)
        for _ in range(3):
            roster.issue()
        assert roster.issued == 3
        with pytest.raises(RosterFull):
            roster.issue()

    def test_tokens_are_32_hex_chars_and_unique(self):
        roster = Roster("p", 3)
        tokens = [roster.issue(random.Random(5)).token for _ in range(3)]
        assert len(set(tokens)) == 3
        for t in tokens:
            assert len(t) == 32
            assert set(t) <= set("0123456789abcdef")

    def test_seeded_issue_is_reproducible(self):
        a = Roster("p", 2).issue(random.Random(9)).token
        b = Roster("p", 2).issue(random.Random(9)).token
        assert a == b

    def test_bind_flow(self):
        roster = Roster("p", 2)
        t1 = roster.issue().token
        t2 = roster.issue().token
        roster.bind(t1, "amy")
        assert roster.holds("amy", t1)
        assert not roster.holds("amy", t2)
        assert not roster.full
        roster.bind(t2, "bob")
        assert roster.full
        assert roster.members() == [("amy", t1), ("bob", t2)]

    def test_unknown_token_is_a_credential_error(self):
        roster = Roster("p", 1)
        roster.issue()
        with pytest.raises(BadCredentials):
            roster.bind("f" * 32, "amy")

    def test_token_single_use(self):
        roster = Roster("p", 2)
        t1 = roster.issue().token
        roster.bind(t1, "amy")
        with pytest.raises(TokenAlreadyBound):
            roster.bind(t1, "bob")
        roster.bind(t1, "amy")  # same pair again is a no-op

    def test_username_cannot_join_twice(self):
        roster = Roster("p", 2)
        t1 = roster.issue().token
        t2 = roster.issue().token
        roster.bind(t1, "amy")
        with pytest.raises(TokenAlreadyBound):
            roster.bind(t2, "amy")

    def test_identity_matches_direct_derivation(self):
        roster = Roster("proj-1", 3)
        for name in ("u1", "u2", "u3"):
            token = roster.issue().token
            roster.bind(token, name)
        identity = roster.identity()
        expected = derive_compensator_identity(
            "proj-1",
            [(sha256_hex(u), sha256_hex(t)) for u, t in roster.members()],
        )
        assert identity == expected
        assert identity.project_hash == HASH_PROJ_1

    def test_wire_roundtrip(self):
        roster = Roster("p", 2)
        t1 = roster.issue().token
        roster.issue()
        roster.bind(t1, "amy")
        back = Roster.from_wire("p", 2, roster.to_wire())
        assert back.members() == roster.members()
        assert back.issued == 2


class TestPasswords:
    def test_verify_accepts_right_password(self):
        stored = hash_password("hunter2")
        assert verify_password("hunter2", stored)
        assert not verify_password("hunter3", stored)

    def test_salted_digests_differ(self):
        assert hash_password("pw") != hash_password("pw")

    def test_malformed_stored_digest_rejected(self):
        assert not verify_password("pw", "notadigest")
        assert not verify_password("pw", "zz$aa")


class TestIdentifiers:
    def test_token_and_id_formats(self):
        for value in (new_token(), new_id()):
            assert len(value) == 32
            assert set(value) <= set("0123456789abcdef")

    def test_seeded_generation_reproducible(self):
        assert new_token(random.Random(3)) == new_token(random.Random(3))
        assert new_id(random.Random(3)) != new_id(random.Random(4))
