"""Five-step operational workflow over a flow stream.

input -> zero-trust analysis (authenticate, signatures) -> ML scoring ->
policy decision -> zero-touch response -> forwarded output.
"""

from __future__ import annotations

import hashlib
import io
from collections import Counter
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import detectors
from .evalmetrics import (
    MetricsRow,
    compute_metrics,
    confusion,
    render_csv,
    render_table,
    roc_auc,
)
from .flowdata import (
    FEATURE_NAMES,
    FlowRecord,
    SchemaError,
    SynthConfig,
    benign_device_ids,
    bot_device_ids,
    feature_matrix,
    generate_synthetic,
    ingest_csv,
    write_csv,
)
from .ztengine import (
    DEFAULT_SIGNATURES,
    AttestationEvidence,
    AuthResult,
    Decision,
    ManifestEntry,
    PolicyConfig,
    Registry,
    Signature,
    evaluate_policy,
    match_signatures,
    onboard,
    parse_signatures,
    read_manifest,
)
from .ztouch import ActionKind, AuditLog, BlackholeSink, ResponseEngine

Scorer = Callable[[Sequence[FlowRecord]], np.ndarray]

OUTPUT_FILES = ("report.txt", "report.csv", "sink.csv", "audit.log", "forwarded.csv")


@dataclass
class PipelineConfig:
    """Where a simulation run reads from and writes to.

    ``input_path=None`` means synthetic input from ``synth`` (or the
    standard dataset seeded with ``seed``). ``registry_path=None`` with
    synthetic input onboards every synthetic device with full attestation.
    ``signatures_path=None`` uses the built-in signature set.
    """

    model_path: str | Path | None = None
    signatures_path: str | Path | None = None
    registry_path: str | Path | None = None
    input_path: str | Path | None = None
    synth: SynthConfig | None = None
    seed: int = 0
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    auth_ttl_ms: int = 300_000
    out_dir: str | Path | None = None

    def __post_init__(self):
        if self.auth_ttl_ms < 0:
            raise ValueError("auth_ttl_ms must be >= 0")


@dataclass
class PipelineReport:
    input_flows: int = 0
    rejected: int = 0
    allowed: int = 0
    blackholed: dict[str, int] = field(default_factory=dict)
    challenged: int = 0
    challenged_allowed: int = 0
    challenged_blackholed: int = 0
    quarantined_devices: int = 0
    alerts: int = 0
    metrics: MetricsRow | None = None

    @property
    def blackholed_total(self) -> int:
        return sum(self.blackholed.values())

    def conserved(self) -> bool:
        return self.input_flows == self.allowed + self.blackholed_total + self.rejected

    def to_text(self) -> str:
        lines = [
            f"input_flows: {self.input_flows}",
            f"rejected: {self.rejected}",
            f"allowed: {self.allowed}",
            f"blackholed: {self.blackholed_total}",
        ]
        for reason in sorted(self.blackholed):
            lines.append(f"  {reason}: {self.blackholed[reason]}")
        lines += [
            f"challenged: {self.challenged}",
            f"  allowed_after_step_up: {self.challenged_allowed}",
            f"  blackholed_after_challenge: {self.challenged_blackholed}",
            f"quarantined_devices: {self.quarantined_devices}",
            f"alerts: {self.alerts}",
        ]
        text = "\n".join(lines) + "\n"
        if self.metrics is not None:
            text += "\ndetection metrics (ground truth used for reporting only)\n" + render_table([self.metrics])
        return text


@dataclass
class PipelineRun:
    """Everything a run produced, for tests and for writing outputs."""

    report: PipelineReport
    registry: Registry
    initial_registry: Registry
    audit: AuditLog
    sink: BlackholeSink
    forwarded: list[tuple[str, FlowRecord]]
    flow_ids: dict[str, FlowRecord]

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.txt").write_text(self.report.to_text(), encoding="utf-8")
        rows = [self.report.metrics] if self.report.metrics else []
        (out / "report.csv").write_text(render_csv(rows), encoding="utf-8")
        (out / "sink.csv").write_text(self.sink.to_csv(), encoding="utf-8")
        self.audit.write(out / "audit.log")
        buf = io.StringIO()
        write_csv((f for _, f in self.forwarded), buf)
        (out / "forwarded.csv").write_text(buf.getvalue(), encoding="utf-8")


def synthetic_manifest(cfg: SynthConfig) -> list[ManifestEntry]:
    """Fully attested manifest for every device the generator can emit (bots included:
    they model compromised devices that onboarded legitimately)."""
    classes = ("camera", "sensor", "thermostat", "plug", "hub")

    def secret(dev: str) -> str:
        return hashlib.sha256(f"{cfg.seed}:{dev}".encode()).hexdigest()[:24]

    entries = []
    for i, dev in enumerate(benign_device_ids(cfg)):
        entries.append(ManifestEntry(dev, secret(dev), classes[i % len(classes)], AttestationEvidence(True, True)))
    for dev in bot_device_ids(cfg):
        entries.append(ManifestEntry(dev, secret(dev), "camera", AttestationEvidence(True, True)))
    return entries


def model_scorer(model: detectors.TrainedModel) -> Scorer:
    unknown = [n for n in model.feature_names if n not in FEATURE_NAMES]
    if unknown:
        raise SchemaError(f"model expects feature(s) the flow schema cannot provide: {', '.join(unknown)}")

    def score(flows: Sequence[FlowRecord]) -> np.ndarray:
        if not flows:
            return np.empty(0)
        X = feature_matrix(flows, model.feature_names)
        if model.norm is not None:
            X = model.norm.transform(X)
        return model.scores(X)

    return score


def _load_inputs(cfg: PipelineConfig):
    if cfg.input_path is not None:
        with open(cfg.input_path, encoding="utf-8", newline="") as fh:
            records, rejects = ingest_csv(fh)
        return records, len(rejects), None
    synth = cfg.synth or SynthConfig.standard(seed=cfg.seed, n_flows=1000)
    return generate_synthetic(synth), 0, synth


def run_pipeline(
    cfg: PipelineConfig,
    scorer: Scorer | None = None,
    signatures: Sequence[Signature] | None = None,
    manifest: Sequence[ManifestEntry] | None = None,
) -> PipelineRun:
    """Run the workflow. ``scorer``/``signatures``/``manifest`` override what ``cfg`` points at."""
    # ---- startup: everything that can fail fatally fails here
    if scorer is None:
        if cfg.model_path is None:
            raise ValueError("a model file (or scorer) is required")
        scorer = model_scorer(detectors.load_model(cfg.model_path))
    if signatures is None:
        text = Path(cfg.signatures_path).read_text(encoding="utf-8") if cfg.signatures_path else DEFAULT_SIGNATURES
        signatures = parse_signatures(text)
    records, n_rejected, synth = _load_inputs(cfg)
    if manifest is None:
        if cfg.registry_path is not None:
            manifest = read_manifest(Path(cfg.registry_path).read_text(encoding="utf-8"))
        elif synth is not None:
            manifest = synthetic_manifest(synth)
        else:
            manifest = []

    valid = [(i, r) for i, r in enumerate(records) if r.is_valid(require_label=False)]
    n_rejected += len(records) - len(valid)
    valid.sort(key=lambda item: (item[1].timestamp, item[0]))
    flows = [r for _, r in valid]
    flow_ids = {f"flow-{i:06d}": r for i, r in valid}
    ids = [f"flow-{i:06d}" for i, _ in valid]

    audit = AuditLog()
    registry = Registry(cfg.auth_ttl_ms)
    t0 = flows[0].timestamp if flows else 0
    onboard(registry, manifest, now=t0, flows=flows)
    initial = registry.copy()
    registry.journal = audit
    credentials = {e.device_id: e.credential for e in manifest}

    def step_up(device_id: str, now: int) -> bool:
        return registry.authenticate(device_id, credentials.get(device_id), now) is AuthResult.PASS

    engine = ResponseEngine(registry, audit, BlackholeSink(), step_up)
    scores = np.clip(np.asarray(scorer(flows), dtype=float), 0.0, 1.0) if flows else np.empty(0)

    report = PipelineReport(input_flows=len(valid) + n_rejected, rejected=n_rejected)
    blackholed: Counter[str] = Counter()
    window_start: dict[str, int] = {}
    incident: set[str] = set()
    attacked = np.zeros(len(flows), dtype=bool)

    for pos, (flow_id, flow, score) in enumerate(zip(ids, flows, scores)):
        dev, now = flow.device_id, flow.timestamp
        _maybe_clean_window(registry, dev, now, cfg.policy, window_start, incident)
        authed = dev in registry and registry.authenticate(dev, credentials.get(dev), now) is AuthResult.PASS
        sig = match_signatures(flow, signatures)
        score = float(score)
        decision = evaluate_policy(registry.get(dev), flow, sig, score, authenticated=authed, config=cfg.policy)

        def again(flow=flow, sig=sig, score=score, dev=dev):
            return evaluate_policy(
                registry.get(dev), flow, sig, score, authenticated=True, config=cfg.policy, stepped_up=True
            )

        actions = engine.apply_decision(decision, flow, flow_id, reevaluate=again)
        sunk = next((a for a in actions if a.kind is ActionKind.BLACKHOLE_FLOW), None)
        if decision.decision is Decision.CHALLENGE:
            report.challenged += 1
            if sunk is None:
                report.challenged_allowed += 1
            else:
                report.challenged_blackholed += 1
        if sunk is None:
            report.allowed += 1
        else:
            attacked[pos] = True
            blackholed[sunk.reason.split(":", 1)[0]] += 1
            incident.add(dev)
        report.alerts += sum(1 for a in actions if a.kind is ActionKind.RAISE_ALERT)

    report.blackholed = dict(sorted(blackholed.items()))
    report.quarantined_devices = sum(1 for r in registry.records() if r.quarantined)
    if flows and all(f.label is not None for f in flows):
        actual = np.array([int(f.label) for f in flows])
        cm = confusion(attacked.astype(int), actual)
        acc, prec, rec, f1 = compute_metrics(cm)
        auc_value = roc_auc(scores, actual) if 0 < actual.sum() < len(actual) else 0.0
        report.metrics = MetricsRow("pipeline", acc, prec, rec, f1, auc_value)

    run = PipelineRun(report, registry, initial, audit, engine.sink, engine.forwarded, flow_ids)
    if cfg.out_dir is not None:
        run.write(cfg.out_dir)
    return run


def _maybe_clean_window(registry, dev, now, policy, window_start, incident) -> None:
    """Credit a device with CleanWindow after a full window without blackholed flows."""
    rec = registry.get(dev)
    if rec is None or rec.quarantined:
        return
    start = window_start.setdefault(dev, now)
    if now - start >= policy.hit_window_ms:
        if dev not in incident:
            registry.clean_window(dev, now)
        incident.discard(dev)
        window_start[dev] = now


__all__ = [
    "OUTPUT_FILES",
    "PipelineConfig",
    "PipelineReport",
    "PipelineRun",
    "model_scorer",
    "run_pipeline",
    "synthetic_manifest",
]
