#!/usr/bin/env python3
"""Run every built-in scenario and write one CSV timeline per scenario.

Usage:
    python3 scripts/run_experiments.py [output-dir]

Also prints a compact per-phase summary (which sub-flows carried data in
each second) so a run can be eyeballed without plotting. Feed the CSVs to
your plotting tool of choice for the throughput-vs-time figures.
"""

import sys
from pathlib import Path

from mpflow.scenario import (
    BUILTIN_DOCS,
    BUILTIN_SUMMARIES,
    builtin_scenario,
    emit_csv,
    run_scenario,
)


def carrier_phases(report):
    """Collapse the timeline into (start_s, end_s, carrying sub-flow ids)."""
    per_bucket = {}
    for row in report.rows:
        bucket = row.bucket_start_ms // 1000
        per_bucket.setdefault(bucket, set())
        if row.bytes_acked > 0:
            per_bucket[bucket].add(row.subflow_id)
    phases = []
    for bucket in sorted(per_bucket):
        carriers = tuple(sorted(per_bucket[bucket]))
        if phases and phases[-1][2] == carriers:
            phases[-1] = (phases[-1][0], bucket, carriers)
        else:
            phases.append((bucket, bucket, carriers))
    return phases


def main() -> int:
    out_dir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("out")
    out_dir.mkdir(parents=True, exist_ok=True)
    for name in sorted(BUILTIN_DOCS):
        report = run_scenario(builtin_scenario(name))
        target = out_dir / f"{name}.csv"
        emit_csv(report, target)
        print(f"{name}: {BUILTIN_SUMMARIES[name]}")
        print(f"  wrote {target}")
        for start, end, carriers in carrier_phases(report):
            label = ",".join(map(str, carriers)) if carriers else "-"
            print(f"  [{start:3d}s..{end:3d}s] carrying: {label}")
        for rec in report.subflow_genealogy:
            died = "-" if rec.died_ms is None else f"{rec.died_ms / 1000:.1f}s"
            print(
                f"  subflow {rec.subflow_id} on {rec.pair}: "
                f"created {rec.created_ms / 1000:.1f}s, died {died}"
            )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
