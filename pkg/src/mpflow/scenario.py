"""Scenario documents, built-in experiment timelines and CSV output.

A scenario is a small line-oriented text document describing a topology and
a timed action script::

    scenario fig4
    duration 100s

    link 1 1mbps 100ms 10.0.0.1 10.0.1.1
    link 2 1mbps 100ms 10.0.0.1 10.0.2.1
    link 3 1mbps 100ms 10.0.0.1 10.0.3.1

    at 15s set_sub_prio 2 3 backup
    at 35s link_down 1

Lines starting with ``#`` are comments. Times take an ``ms`` or ``s``
suffix, bandwidths ``bps``, ``kbps`` or ``mbps``. Action verbs:

    set_sub_prio <subflow-id>... backup|active
    set_active_list [<link-id>...]
    set_backup_list [<link-id>...]
    enable_ppos [<link-id>...]        (no ids: link of the first pair)
    link_down <link-id>...
    link_up <link-id>...

List and ppos actions name interface pairs through the link that serves
them. Setting the environment variable ``MPFLOW_PRIMARY_PATH_ONLY=1``
forces ``enable_ppos`` at t=0 with the default primary pair on every run.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, IO, List, Optional, Tuple, Union

from . import simnet, sockopt
from .model import (
    EndpointAddress,
    InterfacePair,
    ValidationError,
    new_connection,
)
from .simnet import LinkSpec, SimConfig, Simulation, TimelineReport
from .sockopt import SubPrioRequest

PPOS_ENV_VAR = "MPFLOW_PRIMARY_PATH_ONLY"

CSV_HEADER = "bucket_start_ms,subflow_id,pair,bytes_acked,throughput_bps,low_prio,alive"

ACTION_VERBS = (
    "set_sub_prio",
    "set_active_list",
    "set_backup_list",
    "enable_ppos",
    "link_down",
    "link_up",
)


class ScenarioError(Exception):
    """Problem in a scenario document."""

    def __init__(self, message: str, line: Optional[int] = None) -> None:
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class ScenarioSyntaxError(ScenarioError):
    pass


class ScenarioSemanticError(ScenarioError):
    pass


@dataclass(frozen=True)
class ScenarioAction:
    """One timed action; targets are sub-flow ids for set_sub_prio and link
    ids for everything else."""

    at_ms: int
    verb: str
    targets: Tuple[int, ...] = ()
    low_prio: Optional[bool] = None


@dataclass(frozen=True)
class Scenario:
    name: str
    duration_ms: int
    links: Tuple[LinkSpec, ...]
    actions: Tuple[ScenarioAction, ...]


def _parse_time_ms(token: str, line: int) -> int:
    for suffix, scale in (("ms", 1), ("s", 1000)):
        if token.endswith(suffix):
            digits = token[: -len(suffix)]
            if digits.isdigit():
                return int(digits) * scale
    raise ScenarioSyntaxError(f"bad time {token!r} (want e.g. 15s or 15000ms)", line)


def _parse_bandwidth_bps(token: str, line: int) -> int:
    lowered = token.lower()
    for suffix, scale in (("mbps", 1_000_000), ("kbps", 1_000), ("bps", 1)):
        if lowered.endswith(suffix):
            digits = lowered[: -len(suffix)]
            if digits.isdigit():
                return int(digits) * scale
    raise ScenarioSyntaxError(f"bad bandwidth {token!r} (want e.g. 1mbps)", line)


def _parse_int_list(tokens: List[str], line: int, what: str) -> Tuple[int, ...]:
    values = []
    for token in tokens:
        if not token.isdigit():
            raise ScenarioSyntaxError(f"bad {what} {token!r}", line)
        values.append(int(token))
    return tuple(values)


def parse_scenario(text: str) -> Scenario:
    """Parse and validate a scenario document."""
    name: Optional[str] = None
    duration_ms: Optional[int] = None
    links: List[LinkSpec] = []
    raw_actions: List[Tuple[int, ScenarioAction]] = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        keyword = tokens[0]
        if keyword == "scenario":
            if len(tokens) != 2:
                raise ScenarioSyntaxError("scenario takes exactly one name", lineno)
            name = tokens[1]
        elif keyword == "duration":
            if len(tokens) != 2:
                raise ScenarioSyntaxError("duration takes exactly one time", lineno)
            duration_ms = _parse_time_ms(tokens[1], lineno)
        elif keyword == "link":
            if len(tokens) != 6:
                raise ScenarioSyntaxError(
                    "link takes: id bandwidth delay src-addr dst-addr", lineno
                )
            (link_ids,) = (_parse_int_list([tokens[1]], lineno, "link id"),)
            bandwidth = _parse_bandwidth_bps(tokens[2], lineno)
            delay_ms = _parse_time_ms(tokens[3], lineno)
            try:
                src = EndpointAddress.from_string(tokens[4])
                dst = EndpointAddress.from_string(tokens[5])
                pair = InterfacePair.between(src, dst)
                spec = LinkSpec(link_ids[0], pair, bandwidth, delay_ms)
            except (ValueError, ValidationError) as exc:
                raise ScenarioSyntaxError(str(exc), lineno) from exc
            if any(existing.link_id == spec.link_id for existing in links):
                raise ScenarioSemanticError(f"duplicate link id {spec.link_id}", lineno)
            links.append(spec)
        elif keyword == "at":
            if len(tokens) < 3:
                raise ScenarioSyntaxError("action takes: at <time> <verb> ...", lineno)
            at_ms = _parse_time_ms(tokens[1], lineno)
            verb = tokens[2]
            args = tokens[3:]
            if verb not in ACTION_VERBS:
                raise ScenarioSyntaxError(f"unknown action {verb!r}", lineno)
            low_prio: Optional[bool] = None
            if verb == "set_sub_prio":
                if not args or args[-1] not in ("backup", "active"):
                    raise ScenarioSyntaxError(
                        "set_sub_prio takes sub-flow ids then backup|active", lineno
                    )
                low_prio = args[-1] == "backup"
                targets = _parse_int_list(args[:-1], lineno, "sub-flow id")
                if not targets:
                    raise ScenarioSyntaxError("set_sub_prio needs at least one id", lineno)
            else:
                targets = _parse_int_list(args, lineno, "link id")
                if verb in ("link_down", "link_up") and not targets:
                    raise ScenarioSyntaxError(f"{verb} needs at least one link id", lineno)
            raw_actions.append(
                (lineno, ScenarioAction(at_ms, verb, targets, low_prio))
            )
        else:
            raise ScenarioSyntaxError(f"unknown keyword {keyword!r}", lineno)

    if name is None:
        raise ScenarioSyntaxError("missing 'scenario <name>' line")
    if duration_ms is None or duration_ms <= 0:
        raise ScenarioSyntaxError("missing or non-positive 'duration'")
    if not links:
        raise ScenarioSyntaxError("scenario needs at least one link")

    link_ids = {spec.link_id for spec in links}
    for lineno, action in raw_actions:
        if action.verb != "set_sub_prio":
            for target in action.targets:
                if target not in link_ids:
                    raise ScenarioSemanticError(
                        f"action references link {target}; topology has links "
                        f"{sorted(link_ids)}",
                        lineno,
                    )

    actions = tuple(
        action for _, action in sorted(raw_actions, key=lambda item: item[1].at_ms)
    )
    return Scenario(name, duration_ms, tuple(links), actions)


def format_scenario(scenario: Scenario) -> str:
    """Render a scenario back to its canonical document form."""
    lines = [f"scenario {scenario.name}", f"duration {scenario.duration_ms}ms", ""]
    for link in scenario.links:
        lines.append(
            f"link {link.link_id} {link.bandwidth_bps}bps "
            f"{link.one_way_delay_ms}ms "
            f"{EndpointAddress(link.pair.family, link.pair.src).host()} "
            f"{EndpointAddress(link.pair.family, link.pair.dst).host()}"
        )
    if scenario.actions:
        lines.append("")
    for action in scenario.actions:
        parts = [f"at {action.at_ms}ms {action.verb}"]
        parts.extend(str(t) for t in action.targets)
        if action.verb == "set_sub_prio":
            parts.append("backup" if action.low_prio else "active")
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


_FIG_TOPOLOGY = """\
link 1 1mbps 100ms 10.0.0.1 10.0.1.1
link 2 1mbps 100ms 10.0.0.1 10.0.2.1
link 3 1mbps 100ms 10.0.0.1 10.0.3.1
"""

FIG4_DOC = (
    "scenario fig4\nduration 100s\n\n" + _FIG_TOPOLOGY + "\n"
    "at 15s set_sub_prio 2 3 backup\n"
    "at 35s link_down 1\n"
    "at 55s link_up 1\n"
    "at 75s link_down 2 3\n"
    "at 95s link_up 2 3\n"
)

FIG5_DOC = (
    "scenario fig5\nduration 100s\n\n" + _FIG_TOPOLOGY + "\n"
    "at 0s set_backup_list 2 3\n"
    "at 15s set_sub_prio 2 3 backup\n"
    "at 35s link_down 1\n"
    "at 55s link_up 1\n"
    "at 75s link_down 2 3\n"
    "at 95s link_up 2 3\n"
)

FIG6_DEFAULT_DOC = (
    "scenario fig6_default\nduration 100s\n\n" + _FIG_TOPOLOGY + "\n"
    "at 30s link_down 1\n"
    "at 70s link_up 1\n"
)

FIG6_PPOS_DOC = (
    "scenario fig6_ppos\nduration 100s\n\n" + _FIG_TOPOLOGY + "\n"
    "at 0s enable_ppos 1\n"
    "at 30s link_down 1\n"
    "at 70s link_up 1\n"
)

BUILTIN_DOCS: Dict[str, str] = {
    "fig4": FIG4_DOC,
    "fig5": FIG5_DOC,
    "fig6_default": FIG6_DEFAULT_DOC,
    "fig6_ppos": FIG6_PPOS_DOC,
}

BUILTIN_SUMMARIES: Dict[str, str] = {
    "fig4": "priority flip at 15s, link-1 outage 35-55s, links-2/3 outage 75-95s",
    "fig5": "fig4 plus a backup interface list, so re-created sub-flows stay backup",
    "fig6_default": "default scheduler, link-1 outage 30-70s",
    "fig6_ppos": "primary-path-only scheduler on link 1, link-1 outage 30-70s",
}


def builtin_scenario(name: str) -> Scenario:
    if name not in BUILTIN_DOCS:
        raise ScenarioError(
            f"unknown built-in scenario {name!r}; have {sorted(BUILTIN_DOCS)}"
        )
    return parse_scenario(BUILTIN_DOCS[name])


def _connection_endpoints(
    links: Tuple[LinkSpec, ...]
) -> Tuple[List[EndpointAddress], List[EndpointAddress]]:
    locals_, remotes = [], []
    for link in links:
        src = EndpointAddress(link.pair.family, link.pair.src)
        dst = EndpointAddress(link.pair.family, link.pair.dst)
        if src not in locals_:
            locals_.append(src)
        if dst not in remotes:
            remotes.append(dst)
    return locals_, remotes


def _action_closure(scenario: Scenario, action: ScenarioAction):
    pair_by_link = {link.link_id: link.pair for link in scenario.links}

    def apply(sim: Simulation) -> None:
        if action.verb == "set_sub_prio":
            for subflow_id in action.targets:
                sockopt.set_subflow_priority(
                    sim.sender, SubPrioRequest(subflow_id, action.low_prio)
                )
        elif action.verb == "set_active_list":
            sockopt.set_active_interface_list(
                sim.sender, [pair_by_link[i] for i in action.targets]
            )
        elif action.verb == "set_backup_list":
            sockopt.set_backup_interface_list(
                sim.sender, [pair_by_link[i] for i in action.targets]
            )
        elif action.verb == "enable_ppos":
            if action.targets:
                pairs = [pair_by_link[i] for i in action.targets]
            else:
                pairs = [sim.sender.mesh_pairs()[0]]
            sockopt.enable_primary_path_only(sim.sender, pairs)
        elif action.verb in ("link_down", "link_up"):
            for link_id in action.targets:
                sim.set_link_state(link_id, up=action.verb == "link_up")
        else:  # pragma: no cover - parse_scenario rejects unknown verbs
            raise ScenarioError(f"unknown action verb {action.verb!r}")

    return apply


def _ppos_forced_by_env() -> bool:
    return os.environ.get(PPOS_ENV_VAR, "").lower() in ("1", "true", "yes", "on")


def run_scenario(
    scenario: Scenario,
    bucket_ms: int = 1000,
    seed: Optional[int] = None,
    duration_ms: Optional[int] = None,
    config: SimConfig = SimConfig(),
) -> TimelineReport:
    """Build the connection pair for a scenario and execute it.

    ``seed`` is accepted for forward compatibility with stochastic
    extensions; the engine is fully deterministic and ignores it.
    """
    del seed
    local_addrs, remote_addrs = _connection_endpoints(scenario.links)
    sender = new_connection(local_addrs, remote_addrs)
    receiver = simnet.mirror_connection(sender)
    sim = Simulation(
        sender,
        receiver,
        list(scenario.links),
        duration_ms=duration_ms or scenario.duration_ms,
        bucket_ms=bucket_ms,
        config=config,
    )
    if _ppos_forced_by_env():
        default_primary = ScenarioAction(0, "enable_ppos")
        sim.schedule_action(0, _action_closure(scenario, default_primary))
    for action in scenario.actions:
        link_change = action.verb in ("link_down", "link_up")
        sim.schedule_action(
            action.at_ms, _action_closure(scenario, action), link_change=link_change
        )
    return sim.run()


def emit_csv(report: TimelineReport, out: Union[str, Path, IO[str]]) -> None:
    """Write a report as CSV: one row per (bucket, sub-flow alive in it),
    sorted by (bucket_start_ms, subflow_id), plus a genealogy footer in
    comment lines."""
    if isinstance(out, (str, Path)):
        with open(out, "w", encoding="utf-8", newline="") as handle:
            emit_csv(report, handle)
        return
    pair_by_id = {rec.subflow_id: rec.pair for rec in report.subflow_genealogy}
    out.write(CSV_HEADER + "\n")
    for row in report.rows:
        throughput_bps = row.bytes_acked * 8 * 1000 // report.bucket_ms
        out.write(
            f"{row.bucket_start_ms},{row.subflow_id},{pair_by_id[row.subflow_id]},"
            f"{row.bytes_acked},{throughput_bps},{int(row.low_prio)},{int(row.alive)}\n"
        )
    for rec in report.subflow_genealogy:
        died = "-" if rec.died_ms is None else str(rec.died_ms)
        out.write(
            f"# subflow {rec.subflow_id} pair={rec.pair} "
            f"created_ms={rec.created_ms} died_ms={died}\n"
        )
