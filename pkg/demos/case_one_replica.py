"""One desk-scale sparse experiment (n = p = 300) compared across methods.

Prints the comparison table as CSV.  Run with
``python3 demos/case_one_replica.py [seed]``.
"""

from __future__ import annotations

import sys

from specreg import MethodConfig, SimulationConfig, StopConfig, run_case


def main(seed: int = 0) -> None:
    cfg = SimulationConfig(
        n=300,
        p=300,
        methods=[MethodConfig(m) for m in ("landweber", "showalter", "soar", "hbf", "nesterov")],
        baselines=["ls", "sc", "ridge"],
        stop=StopConfig("discrepancy", 1.0, 1, 5000),
    )
    report = run_case(cfg, seed)
    print(f"||beta|| = {report.beta_norm:.4f}, ||e|| = {report.noise_norm:.4f}")
    print(report.table_csv(), end="")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 0)
