"""Bandwidth/latency accounting for the edge→server offloading model.

Transmission is payload_bytes / bandwidth with zero protocol overhead;
edge compute times may be scaled by a CPU factor to model weaker edge
hardware. kB means 1000 bytes throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

DEFAULT_BANDWIDTH_BYTES_PER_S = 100_000.0
DEFAULT_CPU_SCALE = 3.0


@dataclass(frozen=True)
class DeviceProfile:
    """Channel and edge-device parameters plus optional resource budgets."""

    bandwidth_bytes_per_s: float = DEFAULT_BANDWIDTH_BYTES_PER_S
    cpu_scale: float = DEFAULT_CPU_SCALE
    compute_budget: Optional[float] = None  # C_e, model parameter count
    comm_budget: Optional[float] = None  # B_e, payload byte bound

    def __post_init__(self):
        if self.bandwidth_bytes_per_s <= 0:
            raise ValueError("bandwidth must be positive")
        if self.cpu_scale <= 0:
            raise ValueError("cpu_scale must be positive")
        for name in ("compute_budget", "comm_budget"):
            value = getattr(self, name)
            if value is not None and value <= 0:
                raise ValueError(f"{name} must be positive when set")


def tx_time(payload_bytes: float, profile: DeviceProfile) -> float:
    """Seconds on the uplink: bytes / bandwidth, no protocol overhead."""
    if payload_bytes < 0:
        raise ValueError("payload must be non-negative")
    return payload_bytes / profile.bandwidth_bytes_per_s


def scale_edge_time(measured_ms: float, profile: DeviceProfile) -> float:
    """Model edge hardware: multiply a measured time by the CPU scale factor."""
    if measured_ms < 0:
        raise ValueError("measured time must be non-negative")
    return measured_ms * profile.cpu_scale


def total_time(
    edge_feature_ms: float,
    edge_encode_ms: float,
    tx_s: float,
    server_decode_ms: float,
    server_feature_ms: float,
    server_ad_ms: float,
) -> float:
    """End-to-end seconds: edge ms + transmission + server ms."""
    components = (
        edge_feature_ms,
        edge_encode_ms,
        tx_s,
        server_decode_ms,
        server_feature_ms,
        server_ad_ms,
    )
    if any(c < 0 for c in components):
        raise ValueError("time components must be non-negative")
    edge_s = (edge_feature_ms + edge_encode_ms) / 1000.0
    server_s = (server_decode_ms + server_feature_ms + server_ad_ms) / 1000.0
    return edge_s + tx_s + server_s


@dataclass(frozen=True)
class ConstraintViolation:
    bound: str  # "compute" or "communication"
    actual: float
    budget: float


@dataclass(frozen=True)
class ConstraintCheck:
    ok: bool
    violations: tuple


def check_constraints(
    model_params: Optional[float], payload_bytes: Optional[float], profile: DeviceProfile
) -> ConstraintCheck:
    """Compare scenario cost against the profile budgets; absent budgets pass."""
    violations = []
    if (
        profile.compute_budget is not None
        and model_params is not None
        and model_params > profile.compute_budget
    ):
        violations.append(
            ConstraintViolation("compute", float(model_params), profile.compute_budget)
        )
    if (
        profile.comm_budget is not None
        and payload_bytes is not None
        and payload_bytes > profile.comm_budget
    ):
        violations.append(
            ConstraintViolation(
                "communication", float(payload_bytes), profile.comm_budget
            )
        )
    return ConstraintCheck(ok=not violations, violations=tuple(violations))


# ---------------------------------------------------------------------------
# Latency report


@dataclass(frozen=True)
class LatencyRow:
    """One scenario's time decomposition; ms components, tx/total seconds."""

    scenario: str
    edge_feature_ms: float
    edge_encode_ms: float
    tx_s: float
    server_decode_ms: float
    server_feature_ms: float
    server_ad_ms: float
    payload_bytes: float
    total_s: float
    delta_vs_baseline_percent: Optional[float] = None


@dataclass(frozen=True)
class LatencyReport:
    rows: tuple
    baseline: str

    def row(self, scenario: str) -> LatencyRow:
        for r in self.rows:
            if r.scenario == scenario:
                return r
        raise KeyError(f"no latency row for scenario {scenario!r}")


def build_latency_row(
    scenario: str,
    *,
    edge_feature_ms: float,
    edge_encode_ms: float,
    server_decode_ms: float,
    server_feature_ms: float,
    server_ad_ms: float,
    payload_bytes: float,
    profile: DeviceProfile,
) -> LatencyRow:
    """Fill in tx and total from the components and the channel model."""
    tx = tx_time(payload_bytes, profile)
    tot = total_time(
        edge_feature_ms,
        edge_encode_ms,
        tx,
        server_decode_ms,
        server_feature_ms,
        server_ad_ms,
    )
    return LatencyRow(
        scenario=scenario,
        edge_feature_ms=edge_feature_ms,
        edge_encode_ms=edge_encode_ms,
        tx_s=tx,
        server_decode_ms=server_decode_ms,
        server_feature_ms=server_feature_ms,
        server_ad_ms=server_ad_ms,
        payload_bytes=payload_bytes,
        total_s=tot,
    )


def attach_deltas(report: LatencyReport, round_digits: Optional[int] = None) -> LatencyReport:
    """Compute each row's total-time delta against the baseline row.

    With round_digits set, deltas come from totals rounded to that many
    decimals — the printed-precision convention used when replaying
    published tables.
    """
    base = report.row(report.baseline).total_s
    if round_digits is not None:
        base = round(base, round_digits)
    if base == 0:
        raise ValueError("baseline total must be non-zero")
    rows = []
    for r in report.rows:
        tot = round(r.total_s, round_digits) if round_digits is not None else r.total_s
        rows.append(
            replace(r, delta_vs_baseline_percent=100.0 * (tot - base) / base)
        )
    return LatencyReport(rows=tuple(rows), baseline=report.baseline)


def _fmt_ms(value: float) -> str:
    return "-" if value == 0 else f"{value:.2f}"


def format_component_table(report: LatencyReport) -> str:
    """Per-image time decomposition, ms components in pipeline order."""
    header = (
        "scenario|edge_feature_ms|edge_encode_ms|server_decode_ms"
        "|server_feature_ms|server_ad_ms|total_ms"
    )
    lines = [header]
    for r in report.rows:
        total_ms = (
            r.edge_feature_ms
            + r.edge_encode_ms
            + r.server_decode_ms
            + r.server_feature_ms
            + r.server_ad_ms
        )
        lines.append(
            "|".join(
                [
                    r.scenario,
                    _fmt_ms(r.edge_feature_ms),
                    _fmt_ms(r.edge_encode_ms),
                    _fmt_ms(r.server_decode_ms),
                    _fmt_ms(r.server_feature_ms),
                    _fmt_ms(r.server_ad_ms),
                    f"{total_ms:.2f}",
                ]
            )
        )
    return "\n".join(lines) + "\n"


def format_summary_table(report: LatencyReport) -> str:
    """Payload/transmission/total summary with deltas vs the baseline."""
    lines = ["scenario|payload_kb|tx_s|total_s|delta_time_percent"]
    for r in report.rows:
        delta = (
            "-"
            if r.delta_vs_baseline_percent is None
            else f"{r.delta_vs_baseline_percent:+.2f}"
        )
        lines.append(
            "|".join(
                [
                    r.scenario,
                    f"{r.payload_bytes / 1000.0:.2f}",
                    f"{r.tx_s:.2f}",
                    f"{r.total_s:.2f}",
                    delta,
                ]
            )
        )
    return "\n".join(lines) + "\n"


def report_to_dict(report: LatencyReport) -> dict:
    """Machine-readable tree mirroring both tables."""
    return {
        "baseline": report.baseline,
        "rows": [
            {
                "scenario": r.scenario,
                "edge_feature_ms": r.edge_feature_ms,
                "edge_encode_ms": r.edge_encode_ms,
                "tx_s": r.tx_s,
                "server_decode_ms": r.server_decode_ms,
                "server_feature_ms": r.server_feature_ms,
                "server_ad_ms": r.server_ad_ms,
                "payload_bytes": r.payload_bytes,
                "total_s": r.total_s,
                "delta_vs_baseline_percent": r.delta_vs_baseline_percent,
            }
            for r in report.rows
        ],
    }
