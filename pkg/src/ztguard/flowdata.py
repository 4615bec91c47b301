"""Flow records: CSV ingest, synthesis, cleaning, feature selection, min-max scaling, splits."""

from __future__ import annotations

import csv
import enum
import io
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import IO

import numpy as np


class SchemaError(ValueError):
    """The CSV source does not carry the columns the flow schema requires."""


class Protocol(str, enum.Enum):
    TCP = "TCP"
    UDP = "UDP"
    ICMP = "ICMP"
    HTTP = "HTTP"


class Label(enum.IntEnum):
    BENIGN = 0
    ATTACK = 1


CSV_COLUMNS = (
    "device_id",
    "timestamp",
    "src_addr",
    "dst_addr",
    "protocol",
    "packet_size",
    "packet_rate",
    "session_duration",
    "label",
)


@dataclass(frozen=True)
class FlowRecord:
    """One observed IoT traffic flow.

    Construction does not validate numeric ranges: corrupt records must be
    representable so that :func:`clean` can drop them.
    """

    device_id: str
    timestamp: int
    protocol: Protocol
    packet_size: float
    packet_rate: float
    session_duration: float
    src_addr: str = ""
    dst_addr: str = ""
    label: Label | None = None

    def is_valid(self, require_label: bool = True) -> bool:
        for v in (self.packet_size, self.packet_rate, self.session_duration):
            if not math.isfinite(v) or v < 0:
                return False
        if not math.isfinite(self.timestamp):
            return False
        if not isinstance(self.protocol, Protocol):
            return False
        return self.label is not None or not require_label

    def to_row(self) -> list[str]:
        return [
            self.device_id,
            str(self.timestamp),
            self.src_addr,
            self.dst_addr,
            self.protocol.value,
            repr(float(self.packet_size)),
            repr(float(self.packet_rate)),
            repr(float(self.session_duration)),
            "" if self.label is None else str(int(self.label)),
        ]


@dataclass(frozen=True)
class RejectedRow:
    row: int  # 1-based data row number, header excluded
    raw: tuple[str, ...]
    error: str


# --------------------------------------------------------------------------
# CSV


def _parse_number(text: str, name: str) -> float:
    text = text.strip()
    if not text:
        raise ValueError(f"empty {name}")
    return float(text)  # raises on non-numeric; "nan"/"inf" survive for clean()


def _parse_record(cells: Mapping[str, str]) -> FlowRecord:
    proto_text = cells["protocol"].strip().upper()
    try:
        protocol = Protocol(proto_text)
    except ValueError:
        raise ValueError(f"unknown protocol {cells['protocol']!r}") from None
    ts = _parse_number(cells["timestamp"], "timestamp")
    if not math.isfinite(ts):
        raise ValueError("non-finite timestamp")
    label_text = cells["label"].strip()
    if label_text == "":
        label = None
    elif label_text in ("0", "1"):
        label = Label(int(label_text))
    else:
        raise ValueError(f"bad label {label_text!r}")
    return FlowRecord(
        device_id=cells["device_id"].strip(),
        timestamp=int(ts),
        protocol=protocol,
        packet_size=_parse_number(cells["packet_size"], "packet_size"),
        packet_rate=_parse_number(cells["packet_rate"], "packet_rate"),
        session_duration=_parse_number(cells["session_duration"], "session_duration"),
        src_addr=cells["src_addr"].strip(),
        dst_addr=cells["dst_addr"].strip(),
        label=label,
    )


def ingest_csv(
    source: IO[str] | IO[bytes] | str,
    schema: Mapping[str, str] | None = None,
) -> tuple[list[FlowRecord], list[RejectedRow]]:
    """Parse flow CSV text into records plus a list of rejected rows.

    ``schema`` maps canonical column names to the header names used in the
    file; unmapped columns are looked up under their canonical name. A
    missing ``label`` column is tolerated (unlabeled traffic).
    """
    if isinstance(source, str):
        source = io.StringIO(source)
    else:
        head = source.read(0)
        if isinstance(head, bytes):
            source = io.TextIOWrapper(source, encoding="utf-8", newline="")  # type: ignore[arg-type]
    mapping = {c: c for c in CSV_COLUMNS}
    if schema:
        mapping.update(schema)

    reader = csv.reader(source)
    header = next(reader, None)
    if header is None:
        raise SchemaError("missing header")
    header = [h.strip() for h in header]
    positions: dict[str, int | None] = {}
    for canon, col in mapping.items():
        if col in header:
            positions[canon] = header.index(col)
        elif canon == "label":
            positions[canon] = None
        else:
            raise SchemaError(f"missing column {col!r}")

    records: list[FlowRecord] = []
    rejects: list[RejectedRow] = []
    for rownum, raw in enumerate(reader, start=1):
        if not raw:
            continue
        try:
            if len(raw) != len(header):
                raise ValueError(f"expected {len(header)} fields, got {len(raw)}")
            cells = {c: ("" if i is None else raw[i]) for c, i in positions.items()}
            records.append(_parse_record(cells))
        except ValueError as exc:
            rejects.append(RejectedRow(rownum, tuple(raw), str(exc)))
    return records, rejects


def write_csv(records: Iterable[FlowRecord], out: IO[str], extra: Sequence[str] = ()) -> None:
    """Write records in the standard flow schema.

    ``extra`` names trailing columns; each record must then be a
    ``(record, values)`` pair.
    """
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(list(CSV_COLUMNS) + list(extra))
    for item in records:
        if extra:
            rec, values = item  # type: ignore[misc]
            writer.writerow(rec.to_row() + [str(v) for v in values])
        else:
            writer.writerow(item.to_row())


def clean(records: Iterable[FlowRecord]) -> list[FlowRecord]:
    return [r for r in records if r.is_valid(require_label=True)]


# --------------------------------------------------------------------------
# features

FEATURE_NAMES = (
    "packet_size",
    "packet_rate",
    "session_duration",
    "bytes_per_second",
    "log_packet_size",
    "log_packet_rate",
    "log_session_duration",
    "log_bytes_per_second",
    "proto_tcp",
    "proto_udp",
    "proto_icmp",
    "proto_http",
)


def flow_features(rec: FlowRecord) -> list[float]:
    """Feature vector in FEATURE_NAMES order.

    The four observed quantities are kept raw and as log1p; the log view
    tames the heavy tails that flood traffic produces.
    """
    bps = rec.packet_size * rec.packet_rate
    return [
        rec.packet_size,
        rec.packet_rate,
        rec.session_duration,
        bps,
        math.log1p(rec.packet_size),
        math.log1p(rec.packet_rate),
        math.log1p(rec.session_duration),
        math.log1p(bps),
        float(rec.protocol is Protocol.TCP),
        float(rec.protocol is Protocol.UDP),
        float(rec.protocol is Protocol.ICMP),
        float(rec.protocol is Protocol.HTTP),
    ]


@dataclass
class Dataset:
    feature_names: tuple[str, ...]
    rows: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.feature_names = tuple(self.feature_names)
        self.rows = np.asarray(self.rows, dtype=float)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.rows.ndim != 2:
            self.rows = self.rows.reshape(len(self.labels), len(self.feature_names))
        if self.rows.shape != (len(self.labels), len(self.feature_names)):
            raise ValueError(
                f"rows shape {self.rows.shape} does not match "
                f"{len(self.labels)} labels x {len(self.feature_names)} features"
            )
        if not np.all(np.isfinite(self.rows)):
            raise ValueError("dataset contains non-finite entries")
        if not np.all((self.labels == 0) | (self.labels == 1)):
            raise ValueError("labels must be 0 or 1")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def columns(self, names: Sequence[str]) -> Dataset:
        idx = [self.feature_names.index(n) for n in names]
        return Dataset(tuple(names), self.rows[:, idx], self.labels)

    def subset(self, index: np.ndarray) -> Dataset:
        return Dataset(self.feature_names, self.rows[index], self.labels[index])


def to_dataset(records: Sequence[FlowRecord]) -> Dataset:
    """Feature matrix for labeled records (run :func:`clean` first)."""
    rows = np.array([flow_features(r) for r in records], dtype=float).reshape(len(records), len(FEATURE_NAMES))
    labels = np.array([int(r.label) for r in records], dtype=np.int64)
    return Dataset(FEATURE_NAMES, rows, labels)


def feature_matrix(records: Sequence[FlowRecord], names: Sequence[str]) -> np.ndarray:
    """Raw (unnormalized) features for ``names``, labels not required."""
    unknown = [n for n in names if n not in FEATURE_NAMES]
    if unknown:
        raise SchemaError(f"unknown feature(s): {', '.join(unknown)}")
    idx = [FEATURE_NAMES.index(n) for n in names]
    full = np.array([flow_features(r) for r in records], dtype=float).reshape(len(records), len(FEATURE_NAMES))
    return full[:, idx]


def pearson(x: np.ndarray, y: np.ndarray) -> float:
    """Pearson correlation; 0.0 when either side has zero variance."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        return 0.0
    return float(dx @ dy) / math.sqrt(sxx * syy)


def select_features(ds: Dataset, threshold: float = 0.05) -> tuple[Dataset, list[str]]:
    """Keep features with |pearson(feature, label)| >= threshold, in column order.

    If nothing qualifies the single strongest feature is kept so the result
    is never empty.
    """
    if len(ds) == 0:
        raise ValueError("cannot select features on an empty dataset")
    if len(np.unique(ds.labels)) < 2:
        raise ValueError("feature selection needs both classes")
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    corr = [abs(pearson(ds.rows[:, j], ds.labels)) for j in range(ds.n_features)]
    kept = [name for name, r in zip(ds.feature_names, corr) if r >= threshold]
    if not kept:
        kept = [ds.feature_names[int(np.argmax(corr))]]
    return ds.columns(kept), kept


# --------------------------------------------------------------------------
# min-max scaling


@dataclass(frozen=True)
class NormParams:
    min_x: tuple[float, ...]
    max_x: tuple[float, ...]

    def __post_init__(self):
        if len(self.min_x) != len(self.max_x):
            raise ValueError("min_x and max_x lengths differ")
        for lo, hi in zip(self.min_x, self.max_x):
            if not lo <= hi:
                raise ValueError(f"min {lo} exceeds max {hi}")

    def __len__(self) -> int:
        return len(self.min_x)

    def transform(self, rows: np.ndarray) -> np.ndarray:
        """Scale a matrix (or single row) with the stored min/max, clamped to [0, 1]."""
        rows = np.asarray(rows, dtype=float)
        if rows.shape[-1] != len(self):
            raise ValueError(f"expected {len(self)} features, got {rows.shape[-1]}")
        lo = np.array(self.min_x)
        span = np.array(self.max_x) - lo
        safe = np.where(span > 0, span, 1.0)
        out = np.where(span > 0, (rows - lo) / safe, 0.0)
        return np.clip(out, 0.0, 1.0)

    def inverse(self, rows: np.ndarray) -> np.ndarray:
        rows = np.asarray(rows, dtype=float)
        lo = np.array(self.min_x)
        return rows * (np.array(self.max_x) - lo) + lo

    def to_dict(self) -> dict:
        return {"min_x": list(self.min_x), "max_x": list(self.max_x)}

    @classmethod
    def from_dict(cls, d: Mapping) -> NormParams:
        return cls(tuple(float(v) for v in d["min_x"]), tuple(float(v) for v in d["max_x"]))


def fit_normalize(ds: Dataset) -> tuple[Dataset, NormParams]:
    if len(ds) == 0:
        raise ValueError("cannot normalize an empty dataset")
    params = NormParams(
        tuple(float(v) for v in ds.rows.min(axis=0)),
        tuple(float(v) for v in ds.rows.max(axis=0)),
    )
    return Dataset(ds.feature_names, params.transform(ds.rows), ds.labels), params


def apply_normalize(p: NormParams, row: Sequence[float]) -> np.ndarray:
    row = np.asarray(row, dtype=float)
    if row.ndim != 1 or len(row) != len(p):
        raise ValueError(f"row has {row.size} features, normalizer expects {len(p)}")
    return p.transform(row)


# --------------------------------------------------------------------------
# splitting


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5 + 1e-9))


def split(ds: Dataset, test_fraction: float = 0.2, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Stratified, seeded train/test split.

    Each class contributes round(count * test_fraction) rows (half rounds
    up) to the test side. Both sides keep the original row order.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie strictly between 0 and 1")
    rng = np.random.default_rng(seed)
    test_idx: list[np.ndarray] = []
    classes = np.unique(ds.labels)
    if len(classes) < 2:
        raise ValueError("split needs both classes present")
    for c in (0, 1):
        members = np.flatnonzero(ds.labels == c)
        if len(members) < 2:
            raise ValueError(f"class {c} has {len(members)} row(s); cannot stratify")
        n_test = _round_half_up(len(members) * test_fraction)
        test_idx.append(rng.permutation(members)[:n_test])
    test = np.sort(np.concatenate(test_idx))
    mask = np.ones(len(ds), dtype=bool)
    mask[test] = False
    return ds.subset(np.flatnonzero(mask)), ds.subset(test)


# --------------------------------------------------------------------------
# synthesis


class AttackKind(str, enum.Enum):
    SYN_FLOOD = "SynFlood"
    UDP_FLOOD = "UdpFlood"
    HTTP_FLOOD = "HttpFlood"


@dataclass(frozen=True)
class FeatureDist:
    """Log-normal draw with the given median and log-space spread, clipped to [lo, hi]."""

    median: float
    spread: float
    lo: float
    hi: float

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        draws = self.median * np.exp(self.spread * rng.standard_normal(n))
        return np.clip(draws, self.lo, self.hi)


@dataclass(frozen=True)
class TrafficProfile:
    protocols: Mapping[Protocol, float]
    packet_size: FeatureDist
    packet_rate: FeatureDist
    session_duration: FeatureDist


BENIGN = "Benign"

DEFAULT_PROFILES: dict[str, TrafficProfile] = {
    BENIGN: TrafficProfile(
        protocols={Protocol.TCP: 0.45, Protocol.UDP: 0.30, Protocol.HTTP: 0.15, Protocol.ICMP: 0.10},
        packet_size=FeatureDist(420.0, 0.6, 40.0, 1500.0),
        packet_rate=FeatureDist(15.0, 1.0, 0.1, 400.0),
        session_duration=FeatureDist(20.0, 1.2, 0.01, 600.0),
    ),
    AttackKind.SYN_FLOOD.value: TrafficProfile(
        protocols={Protocol.TCP: 1.0},
        packet_size=FeatureDist(60.0, 0.15, 40.0, 120.0),
        packet_rate=FeatureDist(1800.0, 0.6, 300.0, 20000.0),
        session_duration=FeatureDist(0.05, 0.8, 0.001, 2.0),
    ),
    AttackKind.UDP_FLOOD.value: TrafficProfile(
        protocols={Protocol.UDP: 1.0},
        packet_size=FeatureDist(900.0, 0.4, 64.0, 1500.0),
        packet_rate=FeatureDist(3000.0, 0.6, 300.0, 50000.0),
        session_duration=FeatureDist(8.0, 0.8, 0.1, 120.0),
    ),
    AttackKind.HTTP_FLOOD.value: TrafficProfile(
        protocols={Protocol.HTTP: 1.0},
        packet_size=FeatureDist(350.0, 0.4, 100.0, 1500.0),
        packet_rate=FeatureDist(120.0, 0.5, 10.0, 1000.0),
        session_duration=FeatureDist(240.0, 0.4, 30.0, 900.0),
    ),
}


@dataclass
class SynthConfig:
    n_benign: int = 7000
    attacks: dict[AttackKind, int] = field(
        default_factory=lambda: {AttackKind.SYN_FLOOD: 1000, AttackKind.UDP_FLOOD: 1000, AttackKind.HTTP_FLOOD: 1000}
    )
    seed: int = 0
    profiles: dict[str, TrafficProfile] = field(default_factory=lambda: dict(DEFAULT_PROFILES))
    n_devices: int = 50
    n_bots: int = 20
    start_ms: int = 1_700_000_000_000
    mean_gap_ms: float = 20.0

    def __post_init__(self):
        self.attacks = {AttackKind(k): int(v) for k, v in self.attacks.items()}
        if self.n_benign < 0 or any(v < 0 for v in self.attacks.values()):
            raise ValueError("counts must be non-negative")
        if self.n_devices < 1 or self.n_bots < 1:
            raise ValueError("device pools must be non-empty")

    @property
    def total(self) -> int:
        return self.n_benign + sum(self.attacks.values())

    @classmethod
    def standard(cls, seed: int = 0, n_flows: int = 10_000, attack_fraction: float = 0.3) -> SynthConfig:
        """Benchmark dataset: ``n_flows`` flows, attacks split evenly over the three kinds."""
        n_attack = _round_half_up(n_flows * attack_fraction)
        kinds = list(AttackKind)
        per = [n_attack // len(kinds) + (1 if i < n_attack % len(kinds) else 0) for i in range(len(kinds))]
        return cls(n_benign=n_flows - n_attack, attacks=dict(zip(kinds, per)), seed=seed)


def benign_device_ids(cfg: SynthConfig) -> list[str]:
    return [f"iot-{i:03d}" for i in range(cfg.n_devices)]


def bot_device_ids(cfg: SynthConfig) -> list[str]:
    return [f"bot-{i:03d}" for i in range(cfg.n_bots)]


def generate_synthetic(cfg: SynthConfig) -> list[FlowRecord]:
    """Seeded labeled flows in timestamp order.

    Benign flows come from the ``iot-*`` device pool and attack flows from
    the ``bot-*`` pool, so attack sources never share an identity with
    benign devices.
    """
    rng = np.random.default_rng(cfg.seed)
    kinds: list[str] = [BENIGN] * cfg.n_benign
    for kind in AttackKind:
        kinds += [kind.value] * cfg.attacks.get(kind, 0)
    if not kinds:
        return []

    columns: dict[str, dict[str, np.ndarray]] = {}
    for name in [BENIGN] + [k.value for k in AttackKind]:
        n = kinds.count(name)
        prof = cfg.profiles[name]
        protos = list(prof.protocols)
        weights = np.array([prof.protocols[p] for p in protos], dtype=float)
        columns[name] = {
            "protocol": rng.choice(len(protos), size=n, p=weights / weights.sum()),
            "packet_size": prof.packet_size.sample(rng, n),
            "packet_rate": prof.packet_rate.sample(rng, n),
            "session_duration": prof.session_duration.sample(rng, n),
        }

    order = rng.permutation(len(kinds))
    gaps = rng.exponential(cfg.mean_gap_ms, size=len(kinds))
    stamps = cfg.start_ms + np.floor(np.cumsum(gaps)).astype(np.int64)
    devices = benign_device_ids(cfg)
    bots = bot_device_ids(cfg)
    device_pick = rng.integers(0, len(devices), size=len(kinds))
    bot_pick = rng.integers(0, len(bots), size=len(kinds))
    server_pick = rng.integers(1, 9, size=len(kinds))

    cursor = {name: 0 for name in columns}
    records = []
    for pos, k in enumerate(order):
        name = kinds[k]
        i = cursor[name]
        cursor[name] += 1
        col = columns[name]
        protos = list(cfg.profiles[name].protocols)
        if name == BENIGN:
            dev_index = int(device_pick[pos])
            device = devices[dev_index]
            src = f"10.0.{dev_index // 250}.{dev_index % 250 + 2}"
            dst = f"192.168.1.{int(server_pick[pos]) + 20}"
            label = Label.BENIGN
        else:
            bot_index = int(bot_pick[pos])
            device = bots[bot_index]
            src = f"10.66.{bot_index // 250}.{bot_index % 250 + 2}"
            dst = "192.168.1.10"
            label = Label.ATTACK
        records.append(
            FlowRecord(
                device_id=device,
                timestamp=int(stamps[pos]),
                protocol=protos[int(col["protocol"][i])],
                packet_size=round(float(col["packet_size"][i]), 3),
                packet_rate=round(float(col["packet_rate"][i]), 3),
                session_duration=round(float(col["session_duration"][i]), 4),
                src_addr=src,
                dst_addr=dst,
                label=label,
            )
        )
    return records
