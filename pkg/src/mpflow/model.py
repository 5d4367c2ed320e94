"""Connection and sub-flow state machine for a multipath transport endpoint.

A connection aggregates one TCP-like sub-flow per (local interface, remote
interface) pair. The full-mesh path manager creates all m x n combinations up
front; sub-flows can later be opened or closed individually, and a sub-flow
that dies is replaced by a brand new one (new id) rather than resurrected.

Priority semantics: a sub-flow with ``low_prio=True`` is a backup sub-flow
and carries data only when no active sub-flow is available. Whether a newly
created sub-flow starts active or backup is decided by
:func:`classify_subflow_priority` against the connection's persistent
interface lists, which is what makes priorities survive sub-flow
re-creation.
"""

from __future__ import annotations

import ipaddress
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

from .wire import MpPrioOption

PORT_BASE = 40000


class MpflowError(Exception):
    """Base class for library errors."""


class ConfigurationError(MpflowError):
    pass


class ValidationError(MpflowError):
    pass


class NotFoundError(MpflowError):
    pass


class AlreadyExistsError(MpflowError):
    pass


class AddrFamily(Enum):
    V4 = "v4"
    V6 = "v6"


_ADDR_WIDTH = {AddrFamily.V4: 4, AddrFamily.V6: 16}


@dataclass(frozen=True)
class EndpointAddress:
    """An interface address plus port. Port 0 is allowed in list/interface
    contexts, where matching is on addresses only."""

    family: AddrFamily
    address: bytes
    port: int = 0

    def __post_init__(self) -> None:
        if len(self.address) != _ADDR_WIDTH[self.family]:
            raise ValidationError(
                f"{self.family.value} address must be "
                f"{_ADDR_WIDTH[self.family]} bytes, got {len(self.address)}"
            )
        if not 0 <= self.port <= 0xFFFF:
            raise ValidationError(f"port out of range: {self.port}")

    @classmethod
    def from_string(cls, text: str, port: int = 0) -> "EndpointAddress":
        addr = ipaddress.ip_address(text)
        family = AddrFamily.V4 if addr.version == 4 else AddrFamily.V6
        return cls(family, addr.packed, port)

    def host(self) -> str:
        return str(ipaddress.ip_address(self.address))

    def with_port(self, port: int) -> "EndpointAddress":
        return EndpointAddress(self.family, self.address, port)


@dataclass(frozen=True)
class InterfacePair:
    """A (source address, destination address) pair identifying a path.

    Equality is exact byte equality on (family, src, dst); ports are not
    part of a pair.
    """

    family: AddrFamily
    src: bytes
    dst: bytes

    def __post_init__(self) -> None:
        width = _ADDR_WIDTH[self.family]
        if len(self.src) != width or len(self.dst) != width:
            raise ValidationError(
                f"pair addresses must both be {width}-byte "
                f"{self.family.value} addresses"
            )

    @classmethod
    def between(cls, src: EndpointAddress, dst: EndpointAddress) -> "InterfacePair":
        if src.family is not dst.family:
            raise ValidationError("mixed address families within one pair")
        return cls(src.family, src.address, dst.address)

    def __str__(self) -> str:
        return f"{ipaddress.ip_address(self.src)}->{ipaddress.ip_address(self.dst)}"


class SchedulerKind(Enum):
    DEFAULT = "default"
    PPOS = "ppos"


@dataclass
class SubflowState:
    """One sub-flow of a connection.

    ``srtt_us`` is 0 until the first acknowledgment has been processed.
    ``consecutive_timeouts`` counts retransmission timeouts since the last
    acknowledgment; the simulator uses it for failure detection.
    """

    id: int
    src: EndpointAddress
    dst: EndpointAddress
    low_prio: bool = False
    alive: bool = True
    srtt_us: int = 0
    inflight_bytes: int = 0
    consecutive_timeouts: int = 0
    bytes_sent_total: int = 0
    created_us: int = 0
    died_us: Optional[int] = None

    def pair(self) -> InterfacePair:
        return InterfacePair.between(self.src, self.dst)


@dataclass(frozen=True)
class PriorityLists:
    """The two persistent interface lists consulted at sub-flow creation."""

    active_list: Tuple[InterfacePair, ...] = ()
    backup_list: Tuple[InterfacePair, ...] = ()


def classify_subflow_priority(pair: InterfacePair, lists: PriorityLists) -> bool:
    """Return the ``low_prio`` flag for a sub-flow created over ``pair``.

    Rules, in precedence order:
      1. if the active list is non-empty, pairs on it are active and every
         other pair is backup (the active list wins on double membership);
      2. otherwise, if the backup list is non-empty, pairs on it are backup
         and every other pair is active;
      3. otherwise every new sub-flow is active.
    """
    if lists.active_list:
        return pair not in lists.active_list
    if lists.backup_list:
        return pair in lists.backup_list
    return False


@dataclass
class ConnectionState:
    """The meta-connection: sub-flow set, priority lists and scheduler choice.

    A ConnectionState is confined to a single logical owner; nothing here
    locks. Cross-host signaling is explicit through ``outbox``.
    """

    local_addrs: List[EndpointAddress]
    remote_addrs: List[EndpointAddress]
    scheduler: SchedulerKind = SchedulerKind.DEFAULT
    subflows: List[SubflowState] = field(default_factory=list)
    next_id: int = 1
    active_list: List[InterfacePair] = field(default_factory=list)
    backup_list: List[InterfacePair] = field(default_factory=list)
    primary_path_only: bool = False
    primary_pairs: List[InterfacePair] = field(default_factory=list)
    outbox: List[MpPrioOption] = field(default_factory=list)

    def priority_lists(self) -> PriorityLists:
        return PriorityLists(tuple(self.active_list), tuple(self.backup_list))

    def subflow_by_id(self, subflow_id: int) -> Optional[SubflowState]:
        for sf in self.subflows:
            if sf.id == subflow_id:
                return sf
        return None

    def alive_subflows(self) -> List[SubflowState]:
        return [sf for sf in self.subflows if sf.alive]

    def alive_subflow_on(self, pair: InterfacePair) -> Optional[SubflowState]:
        for sf in self.subflows:
            if sf.alive and sf.pair() == pair:
                return sf
        return None

    def mesh_pairs(self) -> List[InterfacePair]:
        """All (local, remote) pairs of the connection, local-index major."""
        return [
            InterfacePair.between(local, remote)
            for local in self.local_addrs
            for remote in self.remote_addrs
        ]


def _birth_priority(conn: ConnectionState, pair: InterfacePair) -> bool:
    # Under the primary-path-only scheduler every sub-flow off the primary
    # pairs is forced to backup, current and future alike.
    if conn.primary_path_only and pair not in conn.primary_pairs:
        return True
    return classify_subflow_priority(pair, conn.priority_lists())


def _add_subflow(
    conn: ConnectionState, src: EndpointAddress, dst: EndpointAddress
) -> SubflowState:
    sf = SubflowState(
        id=conn.next_id,
        src=src,
        dst=dst,
        low_prio=_birth_priority(conn, InterfacePair.between(src, dst)),
    )
    conn.next_id += 1
    conn.subflows.append(sf)
    return sf


def new_connection(
    local_addrs: List[EndpointAddress],
    remote_addrs: List[EndpointAddress],
    scheduler: SchedulerKind = SchedulerKind.DEFAULT,
) -> ConnectionState:
    """Create a connection with the full mesh of m x n sub-flows.

    Sub-flow ids are assigned in (local-index, remote-index) order starting
    at 1, and sub-flow ports deterministically as PORT_BASE + id, so a fresh
    connection is fully reproducible.
    """
    if not local_addrs or not remote_addrs:
        raise ConfigurationError("both address lists must be non-empty")
    conn = ConnectionState(
        local_addrs=list(local_addrs),
        remote_addrs=list(remote_addrs),
        scheduler=scheduler,
    )
    for local in conn.local_addrs:
        for remote in conn.remote_addrs:
            port = PORT_BASE + conn.next_id
            _add_subflow(conn, local.with_port(port), remote.with_port(port))
    return conn


def list_subflow_ids(conn: ConnectionState) -> List[int]:
    """Ids of all alive sub-flows, in id order."""
    return sorted(sf.id for sf in conn.subflows if sf.alive)


def get_subflow_tuple(
    conn: ConnectionState, subflow_id: int
) -> Tuple[EndpointAddress, EndpointAddress]:
    """The (source, destination) endpoints of the sub-flow, ports included."""
    sf = conn.subflow_by_id(subflow_id)
    if sf is None:
        raise NotFoundError(f"no sub-flow with id {subflow_id}")
    return (sf.src, sf.dst)


def open_subflow(
    conn: ConnectionState, endpoints: Tuple[EndpointAddress, EndpointAddress]
) -> int:
    """Open a sub-flow over an explicit 4-tuple and return its fresh id.

    The new sub-flow's priority is derived from the interface lists at this
    moment (the persistence hook): nothing is inherited from any earlier
    sub-flow over the same pair.
    """
    src, dst = endpoints
    for sf in conn.subflows:
        if sf.alive and sf.src == src and sf.dst == dst:
            raise AlreadyExistsError(f"sub-flow {sf.id} already bound to this tuple")
    return _add_subflow(conn, src, dst).id


def close_subflow(conn: ConnectionState, subflow_id: int) -> None:
    """Close an alive sub-flow. Its id is never reused and it is never
    scheduled again; a later sub-flow over the same pair gets a new id."""
    sf = conn.subflow_by_id(subflow_id)
    if sf is None or not sf.alive:
        raise NotFoundError(f"no alive sub-flow with id {subflow_id}")
    sf.alive = False
