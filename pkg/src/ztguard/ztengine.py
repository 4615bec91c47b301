"""Zero-trust core: device registry, continuous authentication, segmentation,
signature matching and the flow policy decision table."""

from __future__ import annotations

import csv
import enum
import hashlib
import hmac
import io
import threading
from collections import Counter
from collections.abc import Callable, Iterable, Mapping, Sequence
from dataclasses import dataclass, replace

from .flowdata import FlowRecord, Protocol


class RegistrationError(ValueError):
    pass


class UnknownDeviceError(KeyError):
    pass


class Attestation(str, enum.Enum):
    UNVERIFIED = "Unverified"
    SECURE_BOOT_VERIFIED = "SecureBootVerified"
    FIRMWARE_VALID = "FirmwareValid"
    FULLY_ATTESTED = "FullyAttested"


@dataclass(frozen=True)
class AttestationEvidence:
    """Onboarding evidence; anything other than a real bool counts as malformed."""

    secure_boot: object = None
    firmware_ok: object = None

    def grade(self) -> Attestation:
        sb, fw = self.secure_boot, self.firmware_ok
        if not isinstance(sb, bool) or not isinstance(fw, bool):
            return Attestation.UNVERIFIED
        if sb and fw:
            return Attestation.FULLY_ATTESTED
        if sb:
            return Attestation.SECURE_BOOT_VERIFIED
        if fw:
            return Attestation.FIRMWARE_VALID
        return Attestation.UNVERIFIED


def credential_digest(secret: str) -> str:
    return hashlib.sha256(secret.encode("utf-8")).hexdigest()


# --------------------------------------------------------------------------
# segmentation

DEFAULT_SEGMENT = "default-restricted"

# (device class, dominant protocol or "*") -> segment; exact protocol wins over "*".
SEGMENT_TABLE: dict[tuple[str, str], str] = {
    ("camera", "UDP"): "video-stream",
    ("camera", "*"): "video-mgmt",
    ("sensor", "*"): "telemetry",
    ("thermostat", "*"): "building",
    ("plug", "*"): "building",
    ("hub", "HTTP"): "control-web",
    ("hub", "*"): "control",
}


@dataclass(frozen=True)
class DeviceProfile:
    """Traffic profile summary used for segment assignment."""

    device_class: str = ""
    dominant_protocol: Protocol | None = None

    @classmethod
    def from_flows(cls, device_class: str, flows: Iterable[FlowRecord]) -> DeviceProfile:
        counts = Counter(f.protocol for f in flows)
        if not counts:
            return cls(device_class)
        top = max(counts.values())
        dominant = next(p for p in Protocol if counts.get(p) == top)
        return cls(device_class, dominant)


def assign_segment(profile: DeviceProfile | None, table: Mapping[tuple[str, str], str] = SEGMENT_TABLE) -> str:
    if profile is None:
        return DEFAULT_SEGMENT
    cls = profile.device_class.strip().lower()
    if profile.dominant_protocol is not None:
        hit = table.get((cls, profile.dominant_protocol.value))
        if hit:
            return hit
    return table.get((cls, "*"), DEFAULT_SEGMENT)


# --------------------------------------------------------------------------
# device records and trust


class TrustEvent(str, enum.Enum):
    AUTH_PASS = "AuthPass"
    AUTH_FAIL = "AuthFail"
    SIGNATURE_HIT = "SignatureHit"
    CLEAN_WINDOW = "CleanWindow"


TRUST_DELTAS = {
    TrustEvent.AUTH_PASS: 0.05,
    TrustEvent.CLEAN_WINDOW: 0.02,
    TrustEvent.AUTH_FAIL: -0.1,
    TrustEvent.SIGNATURE_HIT: -0.3,
}

RELEASE_TRUST = 0.2


def _clamp_trust(x: float) -> float:
    # rounding keeps repeated +0.05 steps from drifting (0.6000000000000001)
    return round(min(max(x, 0.0), 1.0), 10)


def update_trust(score: float, event: TrustEvent | str) -> float:
    return _clamp_trust(score + TRUST_DELTAS[TrustEvent(event)])


@dataclass(frozen=True)
class DeviceRecord:
    device_id: str
    attestation: Attestation
    credential: str  # sha256 digest, never the secret itself
    trust_score: float
    segment: str
    quarantined: bool = False
    last_auth: int = 0
    device_class: str = ""
    signature_hits: tuple[int, ...] = ()

    def __post_init__(self):
        if not 0.0 <= self.trust_score <= 1.0:
            raise ValueError("trust_score must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "device_id": self.device_id,
            "attestation": self.attestation.value,
            "credential": self.credential,
            "trust_score": self.trust_score,
            "segment": self.segment,
            "quarantined": self.quarantined,
            "last_auth": self.last_auth,
            "device_class": self.device_class,
            "signature_hits": list(self.signature_hits),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> DeviceRecord:
        return cls(
            device_id=d["device_id"],
            attestation=Attestation(d["attestation"]),
            credential=d["credential"],
            trust_score=float(d["trust_score"]),
            segment=d["segment"],
            quarantined=bool(d["quarantined"]),
            last_auth=int(d["last_auth"]),
            device_class=d.get("device_class", ""),
            signature_hits=tuple(int(h) for h in d.get("signature_hits", ())),
        )


class AuthResult(str, enum.Enum):
    PASS = "Pass"
    FAIL = "Fail"


# registry mutations, also the action names written to the audit log
AUTH_PASS = TrustEvent.AUTH_PASS.value
AUTH_FAIL = TrustEvent.AUTH_FAIL.value
SIGNATURE_HIT = TrustEvent.SIGNATURE_HIT.value
CLEAN_WINDOW = TrustEvent.CLEAN_WINDOW.value
ISOLATE = "IsolateDevice"
RELEASE = "ReleaseQuarantine"
REATTEST = "Reattest"
REGISTRY_EVENTS = frozenset({AUTH_PASS, AUTH_FAIL, SIGNATURE_HIT, CLEAN_WINDOW, ISOLATE, RELEASE, REATTEST})

Journal = Callable[[int, str, str, str], object]


def apply_event(rec: DeviceRecord, action: str, timestamp: int, reason: str = "") -> DeviceRecord:
    """Pure transition of one device record; used live and when replaying an audit log."""
    if action in (AUTH_PASS, AUTH_FAIL, SIGNATURE_HIT, CLEAN_WINDOW):
        rec = replace(rec, trust_score=update_trust(rec.trust_score, action))
        if action == AUTH_PASS:
            rec = replace(rec, last_auth=timestamp)
        elif action == SIGNATURE_HIT:
            rec = replace(rec, signature_hits=rec.signature_hits + (timestamp,))
        return rec
    if action == ISOLATE:
        return replace(rec, quarantined=True)
    if action == RELEASE:
        return replace(
            rec,
            quarantined=False,
            trust_score=RELEASE_TRUST,
            attestation=Attestation.FULLY_ATTESTED,
            last_auth=timestamp,
            signature_hits=(),
        )
    if action == REATTEST:
        return replace(rec, attestation=Attestation(reason), last_auth=timestamp)
    raise ValueError(f"not a registry event: {action!r}")


class Registry:
    """Device identity registry.

    Every mutation runs under one lock and is reported to ``journal`` as
    ``(timestamp, action, device_id, reason)``, so an audit log fed from the
    journal can rebuild the registry with :meth:`replay`.
    """

    def __init__(self, auth_ttl_ms: int = 300_000, journal: Journal | None = None):
        self.auth_ttl_ms = auth_ttl_ms
        self.journal = journal
        self._records: dict[str, DeviceRecord] = {}
        self._lock = threading.RLock()

    def __contains__(self, device_id: str) -> bool:
        return device_id in self._records

    def __len__(self) -> int:
        return len(self._records)

    def get(self, device_id: str) -> DeviceRecord | None:
        return self._records.get(device_id)

    def records(self) -> list[DeviceRecord]:
        with self._lock:
            return [self._records[k] for k in sorted(self._records)]

    def _require(self, device_id: str) -> DeviceRecord:
        rec = self._records.get(device_id)
        if rec is None:
            raise UnknownDeviceError(device_id)
        return rec

    def _mutate(self, device_id: str, action: str, timestamp: int, reason: str = "") -> DeviceRecord:
        with self._lock:
            rec = apply_event(self._require(device_id), action, timestamp, reason)
            self._records[device_id] = rec
            if self.journal is not None:
                self.journal(timestamp, action, device_id, reason)
            return rec

    def register_device(
        self,
        device_id: str,
        credential: str,
        evidence: AttestationEvidence,
        now: int = 0,
        profile: DeviceProfile | None = None,
    ) -> DeviceRecord:
        """Onboard a device. Only full attestation earns the 0.5 starting trust."""
        with self._lock:
            if device_id in self._records:
                raise RegistrationError(f"device {device_id!r} is already registered")
            grade = evidence.grade() if isinstance(evidence, AttestationEvidence) else Attestation.UNVERIFIED
            rec = DeviceRecord(
                device_id=device_id,
                attestation=grade,
                credential=credential_digest(credential),
                trust_score=0.5 if grade is Attestation.FULLY_ATTESTED else 0.0,
                segment=assign_segment(profile),
                last_auth=now,
                device_class=profile.device_class if profile else "",
            )
            self._records[device_id] = rec
            return rec

    def authenticate(self, device_id: str, credential: str | None, now: int) -> AuthResult:
        with self._lock:
            rec = self._records.get(device_id)
            if rec is None:
                return AuthResult.FAIL
            if credential is None or not hmac.compare_digest(rec.credential, credential_digest(credential)):
                reason = "bad-credential"
            elif rec.quarantined:
                reason = "quarantined"
            elif now - rec.last_auth > self.auth_ttl_ms:
                reason = "stale-session"
            else:
                self._mutate(device_id, AUTH_PASS, now, "ok")
                return AuthResult.PASS
            self._mutate(device_id, AUTH_FAIL, now, reason)
            return AuthResult.FAIL

    def reattest(self, device_id: str, evidence: AttestationEvidence, now: int) -> DeviceRecord:
        """Re-run onboarding checks for a known device and restart its session."""
        grade = evidence.grade() if isinstance(evidence, AttestationEvidence) else Attestation.UNVERIFIED
        return self._mutate(device_id, REATTEST, now, grade.value)

    def record_signature_hit(self, device_id: str, now: int, name: str = "") -> DeviceRecord:
        return self._mutate(device_id, SIGNATURE_HIT, now, name)

    def clean_window(self, device_id: str, now: int) -> DeviceRecord:
        return self._mutate(device_id, CLEAN_WINDOW, now, "")

    def quarantine(self, device_id: str, now: int, reason: str) -> DeviceRecord:
        return self._mutate(device_id, ISOLATE, now, reason)

    def release(self, device_id: str, now: int, reason: str = "reattested") -> DeviceRecord:
        return self._mutate(device_id, RELEASE, now, reason)

    # ---- persistence / replay

    def copy(self, journal: Journal | None = None) -> Registry:
        other = Registry(self.auth_ttl_ms, journal)
        other._records = dict(self._records)
        return other

    def to_dict(self) -> dict:
        return {"auth_ttl_ms": self.auth_ttl_ms, "devices": [r.to_dict() for r in self.records()]}

    @classmethod
    def from_dict(cls, d: Mapping, journal: Journal | None = None) -> Registry:
        reg = cls(int(d.get("auth_ttl_ms", 300_000)), journal)
        for item in d["devices"]:
            rec = DeviceRecord.from_dict(item)
            reg._records[rec.device_id] = rec
        return reg

    def replay(self, entries: Iterable[tuple[int, str, str, str]]) -> Registry:
        """Copy of this registry with the registry events among ``entries`` applied in order."""
        out = self.copy()
        for timestamp, action, target, reason in entries:
            if action in REGISTRY_EVENTS and target in out._records:
                out._records[target] = apply_event(out._records[target], action, timestamp, reason)
        return out


# --------------------------------------------------------------------------
# device manifest


@dataclass(frozen=True)
class ManifestEntry:
    device_id: str
    credential: str
    device_class: str
    evidence: AttestationEvidence


MANIFEST_COLUMNS = ("device_id", "credential", "device_class", "secure_boot", "firmware_ok")

_TRUE = {"1", "true", "yes", "pass"}
_FALSE = {"0", "false", "no", "fail"}


def _flag(text: str):
    t = text.strip().lower()
    if t in _TRUE:
        return True
    if t in _FALSE:
        return False
    return None  # malformed evidence -> Unverified


def read_manifest(text: str) -> list[ManifestEntry]:
    reader = csv.DictReader(io.StringIO(text))
    missing = [c for c in MANIFEST_COLUMNS if c not in (reader.fieldnames or [])]
    if missing:
        raise ValueError(f"device manifest lacks column(s): {', '.join(missing)}")
    return [
        ManifestEntry(
            row["device_id"].strip(),
            row["credential"],
            row["device_class"].strip(),
            AttestationEvidence(_flag(row["secure_boot"] or ""), _flag(row["firmware_ok"] or "")),
        )
        for row in reader
    ]


def write_manifest(entries: Iterable[ManifestEntry]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MANIFEST_COLUMNS)
    for e in entries:

        def fmt(v):
            return "1" if v is True else "0" if v is False else ""

        w.writerow([e.device_id, e.credential, e.device_class, fmt(e.evidence.secure_boot), fmt(e.evidence.firmware_ok)])
    return buf.getvalue()


def onboard(
    registry: Registry,
    entries: Sequence[ManifestEntry],
    now: int = 0,
    flows: Sequence[FlowRecord] = (),
) -> list[DeviceRecord]:
    """Register manifest devices; observed flows (if any) refine each device's segment."""
    by_device: dict[str, list[FlowRecord]] = {}
    for f in flows:
        by_device.setdefault(f.device_id, []).append(f)
    out = []
    for e in entries:
        profile = DeviceProfile.from_flows(e.device_class, by_device.get(e.device_id, ()))
        out.append(registry.register_device(e.device_id, e.credential, e.evidence, now, profile))
    return out


# --------------------------------------------------------------------------
# signatures


@dataclass(frozen=True)
class Signature:
    """Known-attack predicate; ``None`` fields are wildcards.

    Matches when the protocol agrees, ``packet_rate > min_rate``,
    ``session_duration < max_duration`` and ``packet_size > min_size``.
    """

    name: str
    protocol: Protocol | None = None
    min_rate: float | None = None
    max_duration: float | None = None
    min_size: float | None = None

    def matches(self, flow: FlowRecord) -> bool:
        if self.protocol is not None and flow.protocol is not self.protocol:
            return False
        if self.min_rate is not None and not flow.packet_rate > self.min_rate:
            return False
        if self.max_duration is not None and not flow.session_duration < self.max_duration:
            return False
        if self.min_size is not None and not flow.packet_size > self.min_size:
            return False
        return True


SignatureDb = Sequence[Signature]


def match_signatures(flow: FlowRecord, db: SignatureDb) -> str | None:
    for sig in db:
        if sig.matches(flow):
            return sig.name
    return None


DEFAULT_SIGNATURES = """\
# name, protocol, min_rate, max_duration, min_size   ('*' = any)
syn-flood,  TCP,  1000, 1.0, *
udp-flood,  UDP,  2500, *,   *
icmp-flood, ICMP, 1000, *,   *
http-flood, HTTP, 400,  *,   *
"""


def parse_signatures(text: str) -> list[Signature]:
    sigs = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 5:
            raise ValueError(f"signature line {lineno}: expected 5 fields, got {len(parts)}")
        name, proto, rate, dur, size = parts

        def num(v, field_name):
            if v == "*":
                return None
            try:
                return float(v)
            except ValueError:
                raise ValueError(f"signature line {lineno}: bad {field_name} {v!r}") from None

        try:
            protocol = None if proto == "*" else Protocol(proto.upper())
        except ValueError:
            raise ValueError(f"signature line {lineno}: unknown protocol {proto!r}") from None
        sigs.append(Signature(name, protocol, num(rate, "min_rate"), num(dur, "max_duration"), num(size, "min_size")))
    return sigs


# --------------------------------------------------------------------------
# policy


class Decision(str, enum.Enum):
    ALLOW = "Allow"
    BLACKHOLE = "Blackhole"
    QUARANTINE = "QuarantineDevice"
    CHALLENGE = "Challenge"


class Reason(str, enum.Enum):
    NONE = "none"
    AUTH = "auth"
    SIGNATURE = "signature"
    ML = "ml"
    SCORE = "score"
    LOW_TRUST = "low-trust"
    ATTESTATION = "attestation"


@dataclass(frozen=True)
class PolicyConfig:
    block_threshold: float = 0.9
    challenge_threshold: float = 0.5
    quarantine_hits: int = 3
    hit_window_ms: int = 60_000
    low_trust: float = 0.2

    def __post_init__(self):
        for v in (self.block_threshold, self.challenge_threshold, self.low_trust):
            if not 0.0 <= v <= 1.0:
                raise ValueError("policy thresholds must lie in [0, 1]")
        if self.quarantine_hits < 1:
            raise ValueError("quarantine_hits must be >= 1")


@dataclass(frozen=True)
class PolicyDecision:
    decision: Decision
    reason: Reason
    rule: str = ""
    device_id: str = ""


def evaluate_policy(
    device: DeviceRecord | None,
    flow: FlowRecord,
    sig: str | None,
    model_score: float,
    *,
    authenticated: bool,
    config: PolicyConfig = PolicyConfig(),
    stepped_up: bool = False,
) -> PolicyDecision:
    """Decide one flow, first matching rule wins.

    1. unknown, unauthenticated or quarantined device -> Blackhole(auth)
    2. signature hit -> Blackhole(signature), or QuarantineDevice once the
       device reaches ``quarantine_hits`` hits inside ``hit_window_ms``
    3. score >= block threshold -> Blackhole(ml)
    4. score >= challenge threshold, trust below ``low_trust`` or partial
       attestation -> Challenge; after a passed step-up only partial
       attestation remains disqualifying, and yields Blackhole(attestation)
    5. Allow
    """
    if not 0.0 <= model_score <= 1.0:
        raise ValueError(f"model_score {model_score} outside [0, 1]")
    dev_id = flow.device_id
    if device is None:
        return PolicyDecision(Decision.BLACKHOLE, Reason.AUTH, "unregistered", dev_id)
    if device.quarantined:
        return PolicyDecision(Decision.BLACKHOLE, Reason.AUTH, "quarantined", dev_id)
    if not authenticated:
        return PolicyDecision(Decision.BLACKHOLE, Reason.AUTH, "auth-failed", dev_id)
    if sig is not None:
        recent = sum(1 for t in device.signature_hits if flow.timestamp - t < config.hit_window_ms)
        if recent + 1 >= config.quarantine_hits:
            return PolicyDecision(Decision.QUARANTINE, Reason.SIGNATURE, sig, dev_id)
        return PolicyDecision(Decision.BLACKHOLE, Reason.SIGNATURE, sig, dev_id)
    if model_score >= config.block_threshold:
        return PolicyDecision(Decision.BLACKHOLE, Reason.ML, f"score={model_score:.4f}", dev_id)
    partial = device.attestation is not Attestation.FULLY_ATTESTED
    if stepped_up:
        if partial:
            return PolicyDecision(Decision.BLACKHOLE, Reason.ATTESTATION, device.attestation.value, dev_id)
        return PolicyDecision(Decision.ALLOW, Reason.NONE, "step-up", dev_id)
    if partial:
        return PolicyDecision(Decision.CHALLENGE, Reason.ATTESTATION, device.attestation.value, dev_id)
    if model_score >= config.challenge_threshold:
        return PolicyDecision(Decision.CHALLENGE, Reason.SCORE, f"score={model_score:.4f}", dev_id)
    if device.trust_score < config.low_trust:
        return PolicyDecision(Decision.CHALLENGE, Reason.LOW_TRUST, f"trust={device.trust_score:.2f}", dev_id)
    return PolicyDecision(Decision.ALLOW, Reason.NONE, "", dev_id)
