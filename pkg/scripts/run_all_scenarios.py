#!/usr/bin/env python3
"""Run every bundled scenario and print its report; exit non-zero on any
failed assertion. Handy smoke check before committing scenario edits."""
from __future__ import annotations

import sys
from pathlib import Path

from teamsim.harness import check_assertions, load_scenario, report, run

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def main() -> int:
    ok = True
    for path in sorted(SCENARIOS.glob("*.toml")):
        scenario = load_scenario(path)
        metrics = run(scenario)
        results = check_assertions(scenario, metrics)
        print(report(metrics, results))
        print()
        ok &= all(passed for _, passed, _ in results)
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
