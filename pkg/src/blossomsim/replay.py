"""
Recorded per-cluster decisions and their replay into run summaries.

A decision log is a delimited text file, one record per detected cluster and
strategy::

    cluster_id,strategy,status,reason,ik,completely_removed
    b001,boundary,accepted,,success,false
    b002,boundary,rejected_policy,obstacle_clearance,,

``reason`` is set exactly for rejected clusters, ``ik`` exactly for accepted
ones and ``completely_removed`` (true/false) exactly for IK successes. Lines
starting with ``#`` are comments.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .errors import ParseError
from .execution import RunSummary, merge_summaries
from .perception import RejectReason, VerdictStatus
from .routing import IKResult, Strategy

COLUMNS = ("cluster_id", "strategy", "status", "reason", "ik", "completely_removed")
BUNDLED_LOG = "field_trial.log"


@dataclass(frozen=True)
class DecisionRecord:
    cluster_id: str
    strategy: Strategy
    status: VerdictStatus
    reason: Optional[RejectReason] = None
    ik: Optional[IKResult] = None
    completely_removed: Optional[bool] = None

    def __post_init__(self):
        if not self.cluster_id:
            raise ValueError("empty cluster id")
        accepted = self.status is VerdictStatus.ACCEPTED
        if accepted == (self.reason is not None):
            raise ValueError("reason is required exactly for rejected clusters")
        if accepted != (self.ik is not None):
            raise ValueError("ik is required exactly for accepted clusters")
        if (self.ik is IKResult.SUCCESS) != (self.completely_removed is not None):
            raise ValueError("completely_removed is required exactly for IK successes")

    def row(self) -> list:
        flag = "" if self.completely_removed is None else ("true" if self.completely_removed else "false")
        return [
            self.cluster_id,
            self.strategy.value,
            self.status.value,
            self.reason.value if self.reason else "",
            self.ik.value if self.ik else "",
            flag,
        ]


@dataclass(frozen=True)
class DecisionLog:
    records: tuple

    def validate(self, defined_ids: Optional[Iterable[str]] = None) -> "DecisionLog":
        """Check id uniqueness per strategy and, if given, membership in ``defined_ids``."""
        seen = set()
        defined = set(defined_ids) if defined_ids is not None else None
        for i, r in enumerate(self.records, start=1):
            key = (r.cluster_id, r.strategy)
            if key in seen:
                raise ParseError(f"duplicate record for {r.cluster_id} ({r.strategy.value})", record=i)
            seen.add(key)
            if defined is not None and r.cluster_id not in defined:
                raise ParseError(f"record references undefined cluster {r.cluster_id!r}", record=i)
        return self

    def strategies(self) -> tuple:
        present = {r.strategy for r in self.records}
        return tuple(s for s in Strategy if s in present)

    def to_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in self.records:
            w.writerow(r.row())
        return buf.getvalue()


def _enum(cls, value, what, line, record):
    try:
        return cls(value)
    except ValueError:
        choices = ", ".join(m.value for m in cls)
        raise ParseError(f"bad {what} {value!r} (expected one of {choices})", line, record) from None


def parse_decision_log(text: str) -> DecisionLog:
    """Parse a decision log.

    Raises:
        ParseError: with line and record context on any malformed record.
    """
    records = []
    header_seen = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        fields = next(csv.reader([raw]))
        if not header_seen:
            if tuple(f.strip() for f in fields) != COLUMNS:
                raise ParseError(f"expected header {','.join(COLUMNS)}", lineno)
            header_seen = True
            continue
        rec_no = len(records) + 1
        if len(fields) != len(COLUMNS):
            raise ParseError(f"expected {len(COLUMNS)} fields, got {len(fields)}", lineno, rec_no)
        cid, strat, status, reason, ik, removed = (f.strip() for f in fields)
        if removed not in ("", "true", "false"):
            raise ParseError(f"completely_removed must be true, false or empty, got {removed!r}", lineno, rec_no)
        try:
            rec = DecisionRecord(
                cluster_id=cid,
                strategy=_enum(Strategy, strat, "strategy", lineno, rec_no),
                status=_enum(VerdictStatus, status, "status", lineno, rec_no),
                reason=_enum(RejectReason, reason, "reason", lineno, rec_no) if reason else None,
                ik=_enum(IKResult, ik, "ik", lineno, rec_no) if ik else None,
                completely_removed=None if removed == "" else removed == "true",
            )
        except ValueError as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(str(exc), lineno, rec_no) from None
        records.append(rec)
    if not header_seen:
        raise ParseError("missing header line")
    return DecisionLog(tuple(records)).validate()


def load_decision_log(path) -> DecisionLog:
    return parse_decision_log(Path(path).read_text(encoding="utf-8"))


def bundled_log_path() -> Path:
    return Path(str(resources.files("blossomsim") / "data" / BUNDLED_LOG))


def load_bundled_log() -> DecisionLog:
    return parse_decision_log((resources.files("blossomsim") / "data" / BUNDLED_LOG).read_text(encoding="utf-8"))


def summarize_log(log: DecisionLog, strategy) -> RunSummary:
    strategy = Strategy(strategy)
    s = RunSummary(strategy=strategy.value)
    reasons: dict = {}
    for r in log.records:
        if r.strategy is not strategy:
            continue
        s.detected += 1
        if r.status is VerdictStatus.ACCEPTED:
            s.accepted += 1
        elif r.status is VerdictStatus.REJECTED_AUTOMATIC:
            s.rejected_auto += 1
        else:
            s.rejected_policy += 1
        if r.reason is not None:
            reasons[r.reason.value] = reasons.get(r.reason.value, 0) + 1
        if r.ik is IKResult.SUCCESS:
            s.success += 1
            s.clusters_thinned += 1
            s.clusters_completely_removed += int(bool(r.completely_removed))
        elif r.ik is IKResult.NO_IK:
            s.no_ik += 1
        elif r.ik is IKResult.NON_OPTIMAL_IK:
            s.non_optimal += 1
    s.reject_reasons = dict(sorted(reasons.items()))
    return s


def replay(log: DecisionLog) -> dict:
    """Per-strategy summaries plus ``total``, in the same shape as a simulated run."""
    out = {s.value: summarize_log(log, s) for s in log.strategies()}
    total = merge_summaries(list(out.values()), "total")
    total.replicates = 1
    out["total"] = total
    return out


def decisions_from_replicates(replicates: Sequence) -> DecisionLog:
    """Decision log of a simulated run; ids are prefixed with the scene seed (``s<seed>.<id>``)."""
    records = []
    for rep in replicates:
        for res in rep.results.values():
            removed = {t.cluster_id: t.completely_removed for t in res.traces if not t.aborted}
            for v in res.verdicts:
                ik = res.ik.get(v.id)
                records.append(
                    DecisionRecord(
                        cluster_id=f"s{rep.seed}.{v.id}",
                        strategy=res.strategy,
                        status=v.status,
                        reason=v.reason,
                        ik=ik,
                        completely_removed=removed.get(v.id) if ik is IKResult.SUCCESS else None,
                    )
                )
    return DecisionLog(tuple(records))
