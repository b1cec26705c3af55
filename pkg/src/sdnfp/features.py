"""Feature extraction: reply dispersion and RTT differences from traces.

Labels always come from the simulator's ground-truth miss flags, never from
the classifier.  A pair is Y when either member triggered an install; an RTT
difference is Y when exactly the first member did and N when neither did.
Anything else (both flagged, or only the second) does not fit the two-sided
taxonomy and is excluded with a count.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

from .probes import PAIR_GAP_MAX_NS, TraceRecord
from .units import NS_PER_MS

DISPERSION = "dispersion"
DELTA_RTT = "delta_rtt"

MISSING_NS = -1  # sentinel for an absent timestamp in external traces


class MissingReplyError(ValueError):
    """A required reply timestamp is absent from the trace."""


class AmbiguousLabelError(ValueError):
    """The miss flags of an RTT-difference pair fit neither PDF."""


@dataclass(frozen=True)
class ScenarioContext:
    k: int
    switch_kind: str
    data_link_bps: int
    time_span_ns: int


@dataclass(frozen=True)
class FeatureSample:
    feature: str
    value_ms: float
    label: str
    context: ScenarioContext


@dataclass
class DropCounts:
    missing_reply: int = 0
    ambiguous_label: int = 0

    def as_dict(self) -> dict:
        return {"missing_reply": self.missing_reply, "ambiguous_label": self.ambiguous_label}


def _require_reply(record: TraceRecord) -> None:
    if record.client_recv_ns == MISSING_NS or record.server_recv_ns == MISSING_NS:
        raise MissingReplyError(f"packet {record.packet_id} in trial {record.trial} has no reply")


def dispersion_from_trace(
    first: TraceRecord, second: TraceRecord, vantage: str = "client"
) -> float:
    """Signed reply gap in ms; negative means the replies arrived reordered.

    vantage='server' reads the simulator-only server-side arrival gap, kept
    for diagnostics.
    """
    _require_reply(first)
    _require_reply(second)
    if vantage == "client":
        return (second.client_recv_ns - first.client_recv_ns) / NS_PER_MS
    if vantage == "server":
        return (second.server_recv_ns - first.server_recv_ns) / NS_PER_MS
    raise ValueError("vantage must be client or server")


def delta_rtt_from_trace(first: TraceRecord, second: TraceRecord) -> float:
    """RTT(first) - RTT(second) in ms."""
    _require_reply(first)
    _require_reply(second)
    rtt1 = first.client_recv_ns - first.client_send_ns
    rtt2 = second.client_recv_ns - second.client_send_ns
    return (rtt1 - rtt2) / NS_PER_MS


def pair_label(first: TraceRecord, second: TraceRecord) -> str:
    return "Y" if (first.miss_flag or second.miss_flag) else "N"


def delta_rtt_label(first: TraceRecord, second: TraceRecord) -> str:
    if first.miss_flag and not second.miss_flag:
        return "Y"
    if not first.miss_flag and not second.miss_flag:
        return "N"
    raise AmbiguousLabelError(
        f"trial {first.trial}: miss flags ({first.miss_flag}, {second.miss_flag}) "
        "fit neither PDF_N nor PDF_Y"
    )


def group_trial(records: list[TraceRecord]) -> tuple[list[tuple[TraceRecord, TraceRecord]], list[TraceRecord]]:
    """Split one trial's probe records into back-to-back pairs and singles.

    Probes whose send gap is within PAIR_GAP_MAX_NS form a pair; everything
    else is a single.  This reconstructs the train structure from the trace
    alone, so extraction works on persisted CSVs.
    """
    probes = sorted(
        (r for r in records if r.kind == "PROBE"),
        key=lambda r: (r.client_send_ns, r.packet_id),
    )
    pairs = []
    singles = []
    i = 0
    while i < len(probes):
        if (
            i + 1 < len(probes)
            and probes[i + 1].client_send_ns - probes[i].client_send_ns <= PAIR_GAP_MAX_NS
        ):
            pairs.append((probes[i], probes[i + 1]))
            i += 2
        else:
            singles.append(probes[i])
            i += 1
    return pairs, singles


def label_samples(
    records: list[TraceRecord],
    context: ScenarioContext,
    drops: DropCounts | None = None,
) -> list[FeatureSample]:
    """Labeled dispersion and RTT-difference samples for a whole trace.

    Pairs feed the dispersion feature; consecutive singles feed the RTT
    difference (the train's two tail probes by default).  Samples with a
    missing reply or an ambiguous flag combination are dropped and counted.
    """
    if drops is None:
        drops = DropCounts()
    by_trial: dict[int, list[TraceRecord]] = {}
    for rec in records:
        by_trial.setdefault(rec.trial, []).append(rec)
    samples: list[FeatureSample] = []
    for trial in sorted(by_trial):
        pairs, singles = group_trial(by_trial[trial])
        for first, second in pairs:
            try:
                value = dispersion_from_trace(first, second)
            except MissingReplyError:
                drops.missing_reply += 1
                continue
            samples.append(FeatureSample(DISPERSION, value, pair_label(first, second), context))
        for j in range(0, len(singles) - 1, 2):
            first, second = singles[j], singles[j + 1]
            try:
                value = delta_rtt_from_trace(first, second)
                label = delta_rtt_label(first, second)
            except MissingReplyError:
                drops.missing_reply += 1
                continue
            except AmbiguousLabelError:
                drops.ambiguous_label += 1
                continue
            samples.append(FeatureSample(DELTA_RTT, value, label, context))
    return samples


FEATURE_FIELDS = ("feature", "value_ms", "label", "k", "kind", "link_bps", "span_s")


def write_feature_csv(path, samples) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(FEATURE_FIELDS)
        for s in samples:
            writer.writerow(
                [
                    s.feature,
                    repr(s.value_ms),
                    s.label,
                    s.context.k,
                    s.context.switch_kind,
                    s.context.data_link_bps,
                    repr(s.context.time_span_ns / 1e9),
                ]
            )


def read_feature_csv(path) -> list[FeatureSample]:
    samples = []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or tuple(reader.fieldnames) != FEATURE_FIELDS:
            raise ValueError(f"feature file {path} does not carry the expected header")
        for row in reader:
            ctx = ScenarioContext(
                k=int(row["k"]),
                switch_kind=row["kind"],
                data_link_bps=int(row["link_bps"]),
                time_span_ns=int(float(row["span_s"]) * 1e9 + 0.5),
            )
            samples.append(
                FeatureSample(row["feature"], float(row["value_ms"]), row["label"], ctx)
            )
    return samples


def split_populations(samples, feature: str) -> tuple[list[float], list[float]]:
    """(values_N, values_Y) for one feature."""
    values_n = [s.value_ms for s in samples if s.feature == feature and s.label == "N"]
    values_y = [s.value_ms for s in samples if s.feature == feature and s.label == "Y"]
    return values_n, values_y
