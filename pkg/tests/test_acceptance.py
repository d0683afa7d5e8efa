"""Acceptance gate: every core guarantee of the framework, end to end.

Each test checks one observable promise at its stated tolerance and prints
one PASS line on success, so a verbose run reads as a checklist. The
expected values come from independent oracles: Python big integers for the
field arithmetic, math.fsum and the statistics module for the real-number
paths, and hashlib plus sorted concatenation for the identities.
"""

import csv
import io
import math
import random
import statistics

import numpy as np
import pytest

from conftest import start_project

from fedmask.errors import IdentityMismatch, ModulusTooLarge, SyncMismatch
from fedmask.identity import derive_compensator_identity, sha256_hex
from fedmask.masking import (
    GaussianSpec,
    PrimeModulus,
    RngHandle,
    field_aggregate,
    field_share,
    field_unmask,
    mi_upper_bound,
    real_aggregate,
    real_share,
    real_unmask,
    validate_modulus,
)
from fedmask.protocol import ParameterValue, SyncState
from fedmask.simnet import (
    FAULT_FORWARD_INDIVIDUAL_NOISE,
    FAULT_NOISE_TO_SERVER,
    assert_privacy,
    run_simulation,
)

DEFAULT_PRIME = 2**54 - 33
PARTITIONS = [[[1.0], [2.0]], [[3.0], [4.0]], [[5.0]]]


def result_rows(result: bytes):
    reader = csv.reader(io.StringIO(result.decode("utf-8")))
    assert next(reader) == ["column", "mean", "variance"]
    return {int(row[0]): (float(row[1]), float(row[2])) for row in reader}


def test_field_masking_reconstructs_exact_sums():
    """10000 randomized trials: the masked pipeline equals the plain
    modular sum with zero tolerance, across K in 3..16 and three primes."""
    picker = random.Random(101)
    rng = RngHandle(7)
    primes = (17, 101, DEFAULT_PRIME)
    for _ in range(10_000):
        p = picker.choice(primes)
        modulus = PrimeModulus(p)
        clients = picker.randint(3, 16)
        width = picker.randint(1, 3)
        secrets = [
            [picker.randrange(p) for _ in range(width)] for _ in range(clients)
        ]
        noises, maskeds = [], []
        for values in secrets:
            noise, masked = field_share(values, modulus, rng)
            noises.append(noise)
            maskeds.append(masked)
        recovered = field_unmask(
            field_aggregate(maskeds, modulus),
            field_aggregate(noises, modulus),
            modulus,
        )
        expected = [
            sum(values[i] for values in secrets) % p for i in range(width)
        ]
        assert [int(x) for x in recovered] == expected
    print("PASS: field masking reconstructs exact modular sums, 10000 trials")


def test_default_modulus_headroom_bound():
    """The 54-bit default prime leaves room for 500 clients but not 1024,
    and a big-integer shadow confirms the 512-client worst case never
    overflows the signed 64-bit accumulator."""
    modulus = PrimeModulus(DEFAULT_PRIME)
    validate_modulus(modulus, 500)
    with pytest.raises(ModulusTooLarge):
        validate_modulus(modulus, 1024)

    # worst case: 512 clients each contributing the largest field element
    p = DEFAULT_PRIME
    assert 512 * (p - 1) < 2**63  # raw sum fits, by big-integer arithmetic
    assert 2 * (p - 1) < 2**63  # the per-step fold bound
    shadow = (512 * (p - 1)) % p
    assert shadow == 18014398509481439  # frozen from the big-integer oracle
    contributions = [np.array([p - 1], dtype=np.int64) for _ in range(512)]
    assert int(field_aggregate(contributions, modulus)[0]) == shadow
    print("PASS: modulus headroom holds at 500 clients, rejected at 1024")


def test_real_masking_reconstructs_within_micro_tolerance():
    """1000 randomized trials at the default noise variance of 1e12:
    unmasked sums stay within 1e-6 of the true sum, per element."""
    picker = random.Random(202)
    rng = RngHandle(8)
    spec = GaussianSpec(1e12)
    worst = 0.0
    for _ in range(1_000):
        clients = picker.randint(3, 16)
        width = picker.randint(1, 4)
        secrets = [
            [picker.uniform(-1e6, 1e6) for _ in range(width)]
            for _ in range(clients)
        ]
        noises, maskeds = [], []
        for values in secrets:
            noise, masked = real_share(np.array(values), spec, rng)
            noises.append(noise)
            maskeds.append(masked)
        recovered = real_unmask(real_aggregate(maskeds), real_aggregate(noises))
        for i in range(width):
            expected = math.fsum(values[i] for values in secrets)
            worst = max(worst, abs(float(recovered[i]) - expected))
    assert worst <= 1e-6
    print(f"PASS: real masking within 1e-6 over 1000 trials (worst {worst:.3e})")


def test_variance_end_to_end_matches_centralized_oracle():
    """Three participants holding {1,2}, {3,4}, {5}: the federated run
    reports count 5 exactly and mean 3.0, variance 2.0 within 1e-6
    relative, and the no-masking debug mode agrees within 1e-6."""
    flat = [1.0, 2.0, 3.0, 4.0, 5.0]
    expected_mean = statistics.fmean(flat)
    expected_variance = statistics.pvariance(flat)

    masked = run_simulation(3, PARTITIONS, seed=4, masking=True)
    state = masked.server_core.algorithm_state(masked.project_id)
    assert state.global_count == 5  # exact, by field masking
    rows = result_rows(masked.result)
    assert rows[0][0] == pytest.approx(expected_mean, rel=1e-6)
    assert rows[0][1] == pytest.approx(expected_variance, rel=1e-6)

    clear = run_simulation(3, PARTITIONS, seed=4, masking=False)
    clear_rows = result_rows(clear.result)
    assert rows[0][0] == pytest.approx(clear_rows[0][0], abs=1e-6)
    assert rows[0][1] == pytest.approx(clear_rows[0][1], abs=1e-6)
    print("PASS: federated variance matches the centralized oracle")


def test_leakage_bound_reference_points():
    """The masking leakage bound hits its three closed-form reference
    values exactly, at both unit scale and the default noise scale."""
    for sigma2 in (1.0, 1e12):
        assert abs(mi_upper_bound(sigma2, sigma2) - 0.5) <= 1e-12
        assert abs(mi_upper_bound(3 * sigma2, sigma2) - 1.0) <= 1e-12
        assert abs(mi_upper_bound(0.0, sigma2) - 0.0) <= 1e-12
    print("PASS: leakage bound reference points exact to 1e-12")


def test_identity_permutation_invariance_and_tamper_detection(server_core):
    """The compensator identity ignores member order across 100 shuffles,
    and the server rejects an identity built from one mutated token."""
    members = [
        (sha256_hex(f"user{i}"), sha256_hex(f"token-{i}")) for i in range(7)
    ]
    reference = derive_compensator_identity("some-project", members)
    shuffler = random.Random(2718)
    for _ in range(100):
        shuffled = list(members)
        shuffler.shuffle(shuffled)
        assert derive_compensator_identity("some-project", shuffled) == reference

    project_id, _, _, joined = start_project(server_core)
    sync = SyncState.from_wire(
        server_core.fetch_status(project_id, *next(iter(joined.items())))["sync"]
    )
    noise = {"local-count": ParameterValue.non_negative_integer(3)}
    pairs = [(sha256_hex(u), sha256_hex(t)) for u, t in joined.items()]
    tampered = [(pairs[0][0], sha256_hex("tampered-token"))] + pairs[1:]
    with pytest.raises(IdentityMismatch):
        server_core.submit_compensation(
            sha256_hex(project_id),
            derive_compensator_identity(project_id, tampered),
            sync,
            noise,
        )
    # positive control: the untampered identity is accepted
    server_core.submit_compensation(
        sha256_hex(project_id),
        derive_compensator_identity(project_id, pairs),
        sync,
        noise,
    )
    print("PASS: identity is order-free and tamper-evident, 100 shuffles")


def test_synchronization_rejects_stale_and_misstepped_messages(server_core):
    """A stale-round submission and a wrong-step compensation both bounce
    with SyncMismatch, and an honest run advances 0,1,2,3 with no gaps."""
    project_id, _, _, joined = start_project(server_core)
    username, token = next(iter(joined.items()))
    stale = SyncState("Init", 0)
    with pytest.raises(SyncMismatch):
        server_core.submit_local(
            project_id, username, token, stale,
            {"local-count": ParameterValue.non_negative_integer(1)},
            {},
        )
    wrong_step = SyncState("Sum-square-error", 1)
    pairs = [(sha256_hex(u), sha256_hex(t)) for u, t in joined.items()]
    with pytest.raises(SyncMismatch):
        server_core.submit_compensation(
            sha256_hex(project_id),
            derive_compensator_identity(project_id, pairs),
            wrong_step,
            {"local-count": ParameterValue.non_negative_integer(3)},
        )

    report = run_simulation(3, PARTITIONS, seed=6)
    rounds = [s.round for s in report.sync_history]
    steps = [s.step for s in report.sync_history]
    assert rounds == [0, 1, 2, 3, 3]
    assert steps == ["Init", "Sum", "Sum-square-error", "Result", "Finished"]
    print("PASS: stale and misstepped messages rejected; rounds gap-free")


def test_privacy_scan_on_honest_runs_and_fault_injections():
    """assert_privacy stays green across 100 randomized honest runs and
    pinpoints the offending message under each of the two fault modes."""
    master = random.Random(424242)
    for index in range(100):
        clients = master.randint(3, 5)
        width = master.randint(1, 2)
        gen = np.random.default_rng(master.getrandbits(32))
        scale = 10.0 ** master.uniform(0.0, 4.0)
        partitions = [
            gen.normal(0.0, scale, size=(master.randint(1, 5), width))
            for _ in range(clients)
        ]
        report = run_simulation(
            clients, partitions, seed=master.getrandbits(32), masking=True
        )
        outcome = assert_privacy(report.trace, report.witness)
        assert outcome.ok, f"honest run {index}: {outcome.summary()}"

    for fault in (FAULT_NOISE_TO_SERVER, FAULT_FORWARD_INDIVIDUAL_NOISE):
        report = run_simulation(3, PARTITIONS, seed=99, fault=fault)
        outcome = assert_privacy(report.trace, report.witness)
        assert not outcome.ok
        events = {e.seq: e for e in report.trace}
        for violation in outcome.violations:
            assert violation.rule == "a"
            assert violation.event_seq in events  # located in the trace
    print("PASS: privacy scan green on 100 honest runs, red on both faults")


def test_http_and_memory_transports_agree_byte_for_byte():
    """One scenario over loopback HTTP and over the in-memory fabric
    downloads byte-identical result files."""
    memory = run_simulation(3, PARTITIONS, seed=4242, transport="memory")
    http = run_simulation(3, PARTITIONS, seed=4242, transport="http")
    assert http.result == memory.result
    print("PASS: HTTP and in-memory transports agree byte for byte")
