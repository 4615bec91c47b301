"""Zero-touch response: carry out policy decisions with no operator in the loop."""

from __future__ import annotations

import csv
import enum
import io
import logging
import threading
from collections.abc import Callable, Iterable
from dataclasses import dataclass
from pathlib import Path

from .flowdata import FlowRecord, write_csv
from .ztengine import (
    RELEASE,
    Attestation,
    AttestationEvidence,
    Decision,
    PolicyDecision,
    Reason,
    Registry,
)

log = logging.getLogger(__name__)


class ConsistencyError(RuntimeError):
    """A decision refers to state the registry does not have (a pipeline bug)."""


class ActionKind(str, enum.Enum):
    BLACKHOLE_FLOW = "BlackholeFlow"
    ISOLATE_DEVICE = "IsolateDevice"
    RAISE_ALERT = "RaiseAlert"
    RELEASE_QUARANTINE = "ReleaseQuarantine"


@dataclass(frozen=True)
class ResponseAction:
    kind: ActionKind
    target: str
    timestamp: int
    reason: str


@dataclass(frozen=True)
class AuditEntry:
    seq: int
    timestamp: int
    action: str
    target: str
    reason: str

    def as_tuple(self) -> tuple[int, str, str, str]:
        return (self.timestamp, self.action, self.target, self.reason)


AUDIT_HEADER = ("seq", "timestamp", "action", "target", "reason")


class AuditLog:
    """Append-only, totally ordered log; ``seq`` is assigned under a lock at append time."""

    def __init__(self):
        self._entries: list[AuditEntry] = []
        self._lock = threading.Lock()

    def append(self, timestamp: int, action: str, target: str, reason: str = "") -> AuditEntry:
        with self._lock:
            entry = AuditEntry(len(self._entries) + 1, int(timestamp), str(action), target, reason)
            self._entries.append(entry)
            return entry

    # usable directly as a Registry journal
    __call__ = append

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self):
        return iter(list(self._entries))

    @property
    def entries(self) -> tuple[AuditEntry, ...]:
        return tuple(self._entries)

    def to_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(AUDIT_HEADER)
        for e in self._entries:
            w.writerow([e.seq, e.timestamp, e.action, e.target, e.reason])
        return buf.getvalue()

    def write(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def parse(cls, text: str) -> AuditLog:
        out = cls()
        rows = csv.reader(io.StringIO(text))
        header = next(rows, None)
        if header is None or tuple(header) != AUDIT_HEADER:
            raise ValueError("not an audit log: bad header")
        for row in rows:
            seq, ts, action, target, reason = row
            entry = out.append(int(ts), action, target, reason)
            if entry.seq != int(seq):
                raise ValueError(f"audit log sequence gap at seq {seq}")
        return out


@dataclass(frozen=True)
class SinkEntry:
    flow_id: str
    flow: FlowRecord
    reason: str


class BlackholeSink:
    """Non-routable sink; nothing appended here is ever forwarded."""

    def __init__(self):
        self._entries: list[SinkEntry] = []
        self._lock = threading.Lock()

    def append(self, flow_id: str, flow: FlowRecord, reason: str) -> None:
        with self._lock:
            self._entries.append(SinkEntry(flow_id, flow, reason))

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def entries(self) -> tuple[SinkEntry, ...]:
        return tuple(self._entries)

    def flow_ids(self) -> set[str]:
        return {e.flow_id for e in self._entries}

    def to_csv(self) -> str:
        buf = io.StringIO()
        write_csv(((e.flow, [e.reason]) for e in self._entries), buf, extra=("reason",))
        return buf.getvalue()


def replay(initial: Registry, entries: Iterable[AuditEntry]) -> Registry:
    """Rebuild registry state by applying an audit log to a copy of ``initial``."""
    ordered = sorted(entries, key=lambda e: (e.timestamp, e.seq))
    return initial.replay(e.as_tuple() for e in ordered)


StepUp = Callable[[str, int], bool]


class ResponseEngine:
    """Applies policy decisions: forwards, blackholes, isolates and alerts.

    ``step_up(device_id, now)`` performs step-up authentication for
    Challenge decisions; without one every challenge fails closed.
    """

    def __init__(
        self,
        registry: Registry,
        audit: AuditLog | None = None,
        sink: BlackholeSink | None = None,
        step_up: StepUp | None = None,
    ):
        self.registry = registry
        self.audit = audit if audit is not None else AuditLog()
        self.sink = sink if sink is not None else BlackholeSink()
        self.step_up = step_up
        self.forwarded: list[tuple[str, FlowRecord]] = []
        self._lock = threading.RLock()

    def _log(self, kind: ActionKind, target: str, now: int, reason: str) -> ResponseAction:
        self.audit.append(now, kind.value, target, reason)
        return ResponseAction(kind, target, now, reason)

    def _alert_target(self, flow: FlowRecord, flow_id: str) -> str:
        return flow.device_id if flow.device_id in self.registry else flow_id

    def apply_decision(
        self,
        decision: PolicyDecision,
        flow: FlowRecord,
        flow_id: str,
        reevaluate: Callable[[], PolicyDecision] | None = None,
    ) -> list[ResponseAction]:
        """Carry out ``decision`` for one flow and return the actions taken.

        A Challenge gets exactly one step-up attempt and one re-evaluation
        (``reevaluate`` is called after a passed step-up); anything but
        Allow at that point ends in the sink.
        """
        now = flow.timestamp
        with self._lock:
            if decision.decision is Decision.CHALLENGE:
                decision = self._resolve_challenge(decision, flow, reevaluate)

            if decision.decision is Decision.ALLOW:
                self.forwarded.append((flow_id, flow))
                return []

            reason = f"{decision.reason.value}:{decision.rule}" if decision.rule else decision.reason.value
            if decision.decision is Decision.BLACKHOLE:
                if decision.reason is Reason.SIGNATURE:
                    self._record_hit(flow, decision)
                self.sink.append(flow_id, flow, reason)
                return [
                    self._log(ActionKind.BLACKHOLE_FLOW, flow_id, now, reason),
                    self._log(ActionKind.RAISE_ALERT, self._alert_target(flow, flow_id), now, reason),
                ]

            if decision.decision is Decision.QUARANTINE:
                if flow.device_id not in self.registry:
                    raise ConsistencyError(f"quarantine requested for unknown device {flow.device_id!r}")
                self._record_hit(flow, decision)
                self.sink.append(flow_id, flow, reason)
                actions = [self._log(ActionKind.BLACKHOLE_FLOW, flow_id, now, reason)]
                # the registry journals IsolateDevice into the same audit log
                self.registry.quarantine(flow.device_id, now, reason)
                if self.registry.journal is not self.audit:
                    self.audit.append(now, ActionKind.ISOLATE_DEVICE.value, flow.device_id, reason)
                actions.append(ResponseAction(ActionKind.ISOLATE_DEVICE, flow.device_id, now, reason))
                actions.append(self._log(ActionKind.RAISE_ALERT, flow.device_id, now, reason))
                return actions

            raise ConsistencyError(f"unresolved decision {decision.decision}")

    def _record_hit(self, flow: FlowRecord, decision: PolicyDecision) -> None:
        if flow.device_id in self.registry:
            self.registry.record_signature_hit(flow.device_id, flow.timestamp, decision.rule)

    def _resolve_challenge(self, decision, flow, reevaluate) -> PolicyDecision:
        dev = flow.device_id
        if dev not in self.registry:
            raise ConsistencyError(f"challenge issued for unknown device {dev!r}")
        passed = self.step_up is not None and self.step_up(dev, flow.timestamp)
        if not passed:
            return PolicyDecision(Decision.BLACKHOLE, Reason.AUTH, "step-up-failed", dev)
        final = reevaluate() if reevaluate is not None else decision
        if final.decision is Decision.CHALLENGE:
            return PolicyDecision(Decision.BLACKHOLE, final.reason, f"challenge-unresolved:{final.rule}", dev)
        return final

    def release_quarantine(
        self, device_id: str, evidence: AttestationEvidence, now: int
    ) -> ResponseAction | None:
        """Lift quarantine after a fresh, full re-attestation; trust restarts at 0.2."""
        with self._lock:
            rec = self.registry.get(device_id)
            if rec is None:
                raise ConsistencyError(f"release requested for unknown device {device_id!r}")
            if not rec.quarantined:
                log.warning("release_quarantine: %s is not quarantined; nothing to do", device_id)
                return None
            if evidence.grade() is not Attestation.FULLY_ATTESTED:
                log.warning("release_quarantine: %s failed re-attestation; quarantine kept", device_id)
                return None
            self.registry.release(device_id, now, "reattested")
            if self.registry.journal is not self.audit:
                self.audit.append(now, RELEASE, device_id, "reattested")
            return ResponseAction(ActionKind.RELEASE_QUARANTINE, device_id, now, "reattested")
