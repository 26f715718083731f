"""Safeguard adapter surface: alerts, threat kinds, fingerprint db, null adapter.

The null safeguard is the lower bound of the benchmark: it claims every
threat kind (like products that advertise broad coverage), forwards every
packet untouched, and never reports anything, so its matrix column reads
NotDetected across the board.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .harness import Direction, FORWARD, ForwardDecision, SafeguardAdapter
from .packets import PacketRecord


class ThreatKind(enum.Enum):
    ANOM_ONOFF = "ANOM_ONOFF"
    ANOM_TRAFFIC = "ANOM_TRAFFIC"
    ANOM_UPLOAD = "ANOM_UPLOAD"
    OPEN_PORT = "OPEN_PORT"
    WEAK_PASSWORD = "WEAK_PASSWORD"
    QUARANTINE = "QUARANTINE"
    SYN_FLOOD = "SYN_FLOOD"
    UDP_FLOOD = "UDP_FLOOD"
    DNS_FLOOD = "DNS_FLOOD"
    HTTP_FLOOD = "HTTP_FLOOD"
    IPFRAG_FLOOD = "IPFRAG_FLOOD"
    PORT_SCAN = "PORT_SCAN"
    OS_SCAN = "OS_SCAN"
    MALICIOUS_DEST = "MALICIOUS_DEST"
    PII_EXPOSURE = "PII_EXPOSURE"
    UNENCRYPTED = "UNENCRYPTED"
    DOH = "DOH"
    # alert-only kinds
    OPEN_PORT_FINDING = "OPEN_PORT_FINDING"
    FALSE_POSITIVE = "FALSE_POSITIVE"


ALL_THREAT_KINDS = frozenset(
    k for k in ThreatKind if k not in (ThreatKind.OPEN_PORT_FINDING, ThreatKind.FALSE_POSITIVE)
)

# Table row order used by the detection matrix and reports
THREAT_ROW_ORDER = [
    ThreatKind.ANOM_ONOFF,
    ThreatKind.ANOM_TRAFFIC,
    ThreatKind.ANOM_UPLOAD,
    ThreatKind.OPEN_PORT,
    ThreatKind.WEAK_PASSWORD,
    ThreatKind.QUARANTINE,
    ThreatKind.SYN_FLOOD,
    ThreatKind.UDP_FLOOD,
    ThreatKind.DNS_FLOOD,
    ThreatKind.HTTP_FLOOD,
    ThreatKind.IPFRAG_FLOOD,
    ThreatKind.PORT_SCAN,
    ThreatKind.OS_SCAN,
    ThreatKind.MALICIOUS_DEST,
    ThreatKind.PII_EXPOSURE,
    ThreatKind.UNENCRYPTED,
    ThreatKind.DOH,
]


@dataclass(frozen=True)
class Alert:
    time: float
    threat_kind: ThreatKind
    device_ids: tuple[str, ...] = ()
    detail: str = ""


UNKNOWN_LABEL = "UNKNOWN"


@dataclass(frozen=True)
class FingerprintPattern:
    kind: str  # oui | dhcp_hostname | mdns | upnp
    pattern: str


@dataclass
class FingerprintDb:
    """Maps observable device facts to labels with specificity weights."""

    entries: dict[FingerprintPattern, tuple[str, float]] = field(default_factory=dict)

    def add(self, kind: str, pattern: str, label: str, weight: float) -> None:
        if weight <= 0:
            raise ValueError("weight must be positive")
        key = FingerprintPattern(kind, pattern.lower())
        if key in self.entries and self.entries[key][0] != label:
            raise ValueError(f"conflicting label for pattern {key}")
        self.entries[key] = (label, weight)

    def lookup(self, kind: str, value: str) -> tuple[str, float] | None:
        return self.entries.get(FingerprintPattern(kind, value.lower()))

    def infer(self, facts: list[tuple[str, str]]) -> str:
        """Best label for a set of (kind, value) facts; UNKNOWN if none match.

        The label with the highest total matched weight wins; ties break
        lexicographically.
        """
        scores: dict[str, float] = {}
        for kind, value in facts:
            hit = self.lookup(kind, value)
            if hit:
                label, weight = hit
                scores[label] = scores.get(label, 0.0) + weight
        if not scores:
            return UNKNOWN_LABEL
        best = max(scores.items(), key=lambda kv: (kv[1], ))
        tied = sorted(label for label, s in scores.items() if s == best[1])
        return tied[0]

    @classmethod
    def load(cls, path: str) -> "FingerprintDb":
        """Line format: pattern_kind, pattern, label, weight ('#' comments)."""
        db = cls()
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                parts = [p.strip() for p in line.split(",")]
                if len(parts) != 4:
                    raise ValueError(f"{path}:{lineno}: expected 4 fields")
                db.add(parts[0], parts[1], parts[2], float(parts[3]))
        return db


class NullSafeguard(SafeguardAdapter):
    name = "null"
    claimed_threats = ALL_THREAT_KINDS

    def process(self, packet: PacketRecord, direction: Direction) -> ForwardDecision:
        return FORWARD

    def poll_alerts(self, since: float) -> list[Alert]:
        return []

    def identify_devices(self) -> dict[str, str]:
        if not hasattr(self, "services"):
            return {}
        return {dev_id: UNKNOWN_LABEL for dev_id in self.services.device_ids()}

    def reset(self) -> None:
        pass
