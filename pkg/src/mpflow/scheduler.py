"""Per-segment sub-flow selection.

Two selectors are provided:

* :func:`select_default` is the usual lowest-RTT scheduler: pick the
  schedulable active sub-flow with the smallest smoothed RTT, and use backup
  sub-flows only when no active sub-flow is alive at all. While an active
  sub-flow is alive but window-limited, data waits for it rather than
  leaking onto backups.

* :func:`select_ppos` is the primary-path-only scheduler: as long as any
  sub-flow on a designated primary pair is alive, all data goes there; on
  primary failure it falls back to the remaining sub-flows, and because the
  choice is re-evaluated per segment, traffic returns to the primary as
  soon as a sub-flow on it exists again.

Both selectors are pure functions of (connection state, mss, window) and
break smoothed-RTT ties by lowest sub-flow id, so scheduling is fully
deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import List, Optional

from .model import ConfigurationError, ConnectionState, SchedulerKind, SubflowState


class ChoiceReason(Enum):
    ACTIVE_PATH = "active-path"
    BACKUP_FALLBACK = "backup-fallback"
    PRIMARY_PATH = "primary-path"
    NO_PATH = "no-path"


@dataclass(frozen=True)
class SchedulerDecision:
    """Outcome of one selection; ``chosen`` is None iff reason is NO_PATH."""

    chosen: Optional[int]
    reason: ChoiceReason


_NO_PATH = SchedulerDecision(None, ChoiceReason.NO_PATH)


def is_schedulable(sf: SubflowState, mss: int, window: int) -> bool:
    """True iff the sub-flow is alive and one more MSS fits in its window."""
    return sf.alive and sf.inflight_bytes + mss <= window


def _best(flows: List[SubflowState]) -> SubflowState:
    return min(flows, key=lambda sf: (sf.srtt_us, sf.id))


def _pick(
    flows: List[SubflowState], mss: int, window: int, reason: ChoiceReason
) -> Optional[SchedulerDecision]:
    candidates = [sf for sf in flows if is_schedulable(sf, mss, window)]
    if candidates:
        return SchedulerDecision(_best(candidates).id, reason)
    return None


def select_default(conn: ConnectionState, mss: int, window: int) -> SchedulerDecision:
    """Lowest-RTT selection with backup fallback.

    Backup sub-flows are used to transmit data only when no active sub-flow
    is available: an alive active that is merely window-limited holds the
    segment back (NO_PATH) instead of diverting it to a backup.
    """
    actives = [sf for sf in conn.subflows if sf.alive and not sf.low_prio]
    decision = _pick(actives, mss, window, ChoiceReason.ACTIVE_PATH)
    if decision:
        return decision
    if actives:
        return _NO_PATH
    backups = [sf for sf in conn.subflows if sf.alive and sf.low_prio]
    decision = _pick(backups, mss, window, ChoiceReason.BACKUP_FALLBACK)
    return decision or _NO_PATH


def select_ppos(conn: ConnectionState, mss: int, window: int) -> SchedulerDecision:
    """Primary-path-only selection.

    All data goes to sub-flows on the primary pairs while any of them is
    alive (min srtt arbitrates among several). Only when no primary-pair
    sub-flow is alive does the selection fall back to the remaining
    sub-flows, reported as BACKUP_FALLBACK whatever their flag.
    """
    if not conn.primary_path_only:
        raise ConfigurationError("primary-path-only scheduling is not enabled")
    primary_pairs = set(conn.primary_pairs)
    primaries = [sf for sf in conn.subflows if sf.alive and sf.pair() in primary_pairs]
    decision = _pick(primaries, mss, window, ChoiceReason.PRIMARY_PATH)
    if decision:
        return decision
    if primaries:
        return _NO_PATH
    rest_actives = [
        sf
        for sf in conn.subflows
        if sf.alive and sf.pair() not in primary_pairs and not sf.low_prio
    ]
    decision = _pick(rest_actives, mss, window, ChoiceReason.BACKUP_FALLBACK)
    if decision:
        return decision
    if rest_actives:
        return _NO_PATH
    rest_backups = [
        sf
        for sf in conn.subflows
        if sf.alive and sf.pair() not in primary_pairs and sf.low_prio
    ]
    decision = _pick(rest_backups, mss, window, ChoiceReason.BACKUP_FALLBACK)
    return decision or _NO_PATH


def select(conn: ConnectionState, mss: int, window: int) -> SchedulerDecision:
    """Dispatch to the connection's configured selector."""
    if conn.scheduler is SchedulerKind.PPOS:
        return select_ppos(conn, mss, window)
    return select_default(conn, mss, window)
