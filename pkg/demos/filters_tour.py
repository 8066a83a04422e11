"""Tour of the spectral filters: generator, bias and the debiased generator.

Run with ``python3 demos/filters_tour.py``.
"""

from __future__ import annotations

import numpy as np

from specreg import FilterSpec, Method, REGULARIZING_METHODS, bias_value, debiased_generator_value, generator_value
from specreg import verify_generator_conditions

LAM = np.array([0.01, 0.1, 1.0, 10.0])


def main() -> None:
    print(f"{'method':>10} | {'lambda':>6} | {'g':>10} | {'r':>10} | {'(1+r)g':>10}")
    for m in REGULARIZING_METHODS:
        dt = 0.05 if m in (Method.LANDWEBER, Method.NESTEROV) else 1.0
        spec = FilterSpec(m, alpha=0.1 if m is not Method.NESTEROV else 0.01, dt=dt)
        g = generator_value(spec, LAM)
        r = bias_value(spec, LAM)
        gt = debiased_generator_value(spec, LAM)
        for lam, a, b, c in zip(LAM, g, r, gt):
            print(f"{m.value:>10} | {lam:6.2f} | {a:10.4f} | {b:10.4f} | {c:10.4f}")
    print()
    for m in REGULARIZING_METHODS:
        dt = 0.1 if m in (Method.LANDWEBER, Method.NESTEROV) else 1.0
        rep = verify_generator_conditions(FilterSpec(m, dt=dt))
        print(f"{m.value:>10}: conditions {'hold' if rep.passed else 'FAIL'} (sup|r| = {rep.d12_cr:.3f})")


if __name__ == "__main__":
    main()
