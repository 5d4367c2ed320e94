"""Socket-option style control surface for sub-flow priorities.

These operations are the public API an application drives a connection
with: flip one sub-flow between active and backup, maintain the persistent
active/backup interface lists, and enable the primary-path-only scheduler.
Every local priority flip also queues an MP_PRIO signal for the peer.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional

from .model import (
    ConnectionState,
    InterfacePair,
    NotFoundError,
    SchedulerKind,
    SubflowState,
    ValidationError,
    classify_subflow_priority,
)
from .wire import MpPrioOption

__all__ = [
    "SubPrioRequest",
    "set_subflow_priority",
    "apply_remote_mp_prio",
    "set_active_interface_list",
    "set_backup_interface_list",
    "enable_primary_path_only",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SubPrioRequest:
    """Request to set one sub-flow's priority: (id, low_prio)."""

    id: int
    low_prio: bool


def _set_flag_and_signal(conn: ConnectionState, sf: SubflowState, low_prio: bool) -> None:
    sf.low_prio = low_prio
    conn.outbox.append(MpPrioOption(backup_flag=low_prio, addr_id=sf.id))


def set_subflow_priority(conn: ConnectionState, req: SubPrioRequest) -> None:
    """Make a sub-flow active (low_prio=False) or backup (low_prio=True).

    Always queues exactly one MP_PRIO signal for the peer, even when the
    requested value equals the current one. Takes effect for the next
    scheduling decision.
    """
    sf = conn.subflow_by_id(req.id)
    if sf is None or not sf.alive:
        raise NotFoundError(f"no alive sub-flow with id {req.id}")
    _set_flag_and_signal(conn, sf, req.low_prio)


def apply_remote_mp_prio(
    conn: ConnectionState, opt: MpPrioOption, received_on: Optional[int] = None
) -> None:
    """Apply a peer's MP_PRIO signal to the local view.

    An absent addr_id addresses the sub-flow the option arrived on
    (``received_on``). A signal naming no alive sub-flow is ignored with a
    diagnostic, per liberal-receive.
    """
    target = opt.addr_id if opt.addr_id is not None else received_on
    if target is None:
        logger.debug("MP_PRIO without addr_id and no carrying sub-flow; ignored")
        return
    sf = conn.subflow_by_id(target)
    if sf is None or not sf.alive:
        logger.debug("MP_PRIO for unknown or dead sub-flow %d; ignored", target)
        return
    sf.low_prio = opt.backup_flag


def _replace_list(target: List[InterfacePair], pairs: List[InterfacePair]) -> None:
    for pair in pairs:
        if not isinstance(pair, InterfacePair):
            raise ValidationError(f"not an interface pair: {pair!r}")
    # set semantics, first occurrence wins for ordering
    target[:] = list(dict.fromkeys(pairs))


def set_active_interface_list(conn: ConnectionState, pairs: List[InterfacePair]) -> None:
    """Replace the active interface list wholesale.

    Existing sub-flows keep their current priority; only sub-flows created
    from now on consult the new list.
    """
    _replace_list(conn.active_list, pairs)


def set_backup_interface_list(conn: ConnectionState, pairs: List[InterfacePair]) -> None:
    """Replace the backup interface list wholesale. Same non-retroactive
    semantics as :func:`set_active_interface_list`."""
    _replace_list(conn.backup_list, pairs)


def enable_primary_path_only(
    conn: ConnectionState, primary_pairs: List[InterfacePair]
) -> None:
    """Enable the primary-path-only scheduler with an explicit primary set.

    Every current and future sub-flow off the primary pairs becomes a backup
    sub-flow; each flipped sub-flow also gets an MP_PRIO signal queued so the
    peer's view follows. Sub-flows on a primary pair keep the priority the
    lists give them, which is what lets a re-established primary sub-flow
    come back active.
    """
    if not primary_pairs:
        raise ValidationError("primary pair set must be non-empty")
    mesh = set(conn.mesh_pairs())
    for pair in primary_pairs:
        if pair not in mesh:
            raise ValidationError(f"{pair} is not a (local, remote) pair of this connection")
    conn.primary_path_only = True
    conn.primary_pairs = list(dict.fromkeys(primary_pairs))
    conn.scheduler = SchedulerKind.PPOS
    for sf in conn.subflows:
        if not sf.alive:
            continue
        if sf.pair() not in conn.primary_pairs and not sf.low_prio:
            _set_flag_and_signal(conn, sf, True)
