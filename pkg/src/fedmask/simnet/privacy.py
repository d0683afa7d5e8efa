"""Data-flow assertions over a recorded message trace.

Byte-level checks against the canonical encodings collected in the Witness:
because the wire format is canonical (one and only one byte string per
value), "does this value appear in that message" is an exact substring
test on complete wire objects, not a heuristic.

Checked rules:
  a. no individual noise share appears in any server-bound message;
  b. no masked or raw model value appears in any compensator-bound message;
  c. clients never talk to each other;
  d. every masked round produces exactly one compensation message;
  e. raw dataset payloads appear in no message at all;
  f. raw usernames and tokens never reach the compensator (hashes only).

Rules a, b, and f rely on values being distinguishable by their encodings.
With the default modulus and noise variance a collision between, say, an
aggregate and an individual share has negligible probability; tiny test
moduli can collide and are not meaningful inputs here.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field

from .harness import Witness
from .memnet import TraceEvent


@dataclass(frozen=True)
class Violation:
    rule: str
    event_seq: int
    detail: str


@dataclass
class PrivacyReport:
    violations: list = dc_field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def summary(self) -> str:
        if self.ok:
            return "privacy assertions passed"
        lines = [f"{len(self.violations)} privacy violation(s):"]
        lines += [
            f"  [{v.rule}] event {v.event_seq}: {v.detail}" for v in self.violations
        ]
        return "\n".join(lines)


def assert_privacy(trace, witness: Witness) -> PrivacyReport:
    report = PrivacyReport()
    requests = [e for e in trace if e.kind == "request"]

    for event in requests:
        if event.destination == "server":
            _scan_for_noise(event, witness, report)
        if event.destination == "compensator":
            _scan_for_model_values(event, witness, report)
            _scan_for_credentials(event, witness, report)
        if event.source.startswith("client-") and event.destination.startswith("client-"):
            report.violations.append(
                Violation(
                    rule="c",
                    event_seq=event.seq,
                    detail=f"client-to-client message {event.source} -> {event.destination}",
                )
            )
        _scan_for_datasets(event, witness, report)

    _check_compensation_counts(requests, witness, report)
    return report


def _scan_for_noise(event: TraceEvent, witness: Witness, report: PrivacyReport) -> None:
    for client, name, encoding in witness.noise_values:
        if encoding in event.payload:
            report.violations.append(
                Violation(
                    rule="a",
                    event_seq=event.seq,
                    detail=(
                        f"noise share of {client}/{name} found in "
                        f"{event.method} {event.endpoint} from {event.source}"
                    ),
                )
            )


def _scan_for_model_values(
    event: TraceEvent, witness: Witness, report: PrivacyReport
) -> None:
    for kind, entries in (
        ("masked", witness.masked_values),
        ("raw", witness.raw_flagged_values),
    ):
        for client, name, encoding in entries:
            if encoding in event.payload:
                report.violations.append(
                    Violation(
                        rule="b",
                        event_seq=event.seq,
                        detail=(
                            f"{kind} model value of {client}/{name} found in "
                            f"{event.method} {event.endpoint}"
                        ),
                    )
                )


def _scan_for_credentials(
    event: TraceEvent, witness: Witness, report: PrivacyReport
) -> None:
    for token in witness.tokens:
        if token.encode("utf-8") in event.payload:
            report.violations.append(
                Violation(
                    rule="f",
                    event_seq=event.seq,
                    detail=f"raw access token found in {event.method} {event.endpoint}",
                )
            )
    for username in witness.usernames:
        needle = json.dumps(username).encode("utf-8")
        if needle in event.payload:
            report.violations.append(
                Violation(
                    rule="f",
                    event_seq=event.seq,
                    detail=(
                        f"raw username {username!r} found in "
                        f"{event.method} {event.endpoint}"
                    ),
                )
            )


def _scan_for_datasets(event: TraceEvent, witness: Witness, report: PrivacyReport) -> None:
    for client, blob in witness.dataset_blobs:
        if blob and blob in event.payload:
            report.violations.append(
                Violation(
                    rule="e",
                    event_seq=event.seq,
                    detail=(
                        f"raw dataset bytes of {client} found in "
                        f"{event.method} {event.endpoint} to {event.destination}"
                    ),
                )
            )


def _check_compensation_counts(
    requests, witness: Witness, report: PrivacyReport
) -> None:
    seen: dict = {}
    for event in requests:
        if event.destination != "server" or "/compensation" not in event.endpoint:
            continue
        try:
            payload = json.loads(event.payload.decode("utf-8"))
            round_no = int(payload["sync"]["round"])
        except (ValueError, KeyError, TypeError):
            report.violations.append(
                Violation(
                    rule="d",
                    event_seq=event.seq,
                    detail="compensation message with unreadable sync state",
                )
            )
            continue
        seen.setdefault(round_no, []).append(event.seq)

    for round_no in sorted(witness.flagged_rounds):
        events = seen.get(round_no, [])
        if len(events) != 1:
            report.violations.append(
                Violation(
                    rule="d",
                    event_seq=events[-1] if events else -1,
                    detail=(
                        f"round {round_no} produced {len(events)} compensation "
                        "messages, expected exactly one"
                    ),
                )
            )
    for round_no, events in sorted(seen.items()):
        if round_no not in witness.flagged_rounds:
            report.violations.append(
                Violation(
                    rule="d",
                    event_seq=events[0],
                    detail=f"unexpected compensation for unflagged round {round_no}",
                )
            )
