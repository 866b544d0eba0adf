#!/usr/bin/env python3
"""Calibration report for the bundled case2 scenario.

Prints the analytic occlusion windows, per-station error statistics (to judge
how close the angle-noise defaults land to the target per-station means), and
the fused-track continuity numbers the acceptance suite relies on.

Usage: python scripts/calibrate_case2.py [seed]
"""

import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from skysim.data import bundled_scenario
from skysim.engine import SimRun
from skysim.scenario import line_of_sight, load_scenario


def occlusion_windows(cfg):
    """Sensing availability per station along the flight plan."""
    plan = cfg.uavs[0].plan
    out = {}
    for bs in cfg.stations:
        blocked = []
        t = 0.0
        while t <= plan.t_end:
            pos = plan.position_at(t)
            if not line_of_sight(bs.position, pos, cfg.buildings):
                blocked.append(t)
            t += 0.5
        if blocked:
            out[bs.id] = (min(blocked), max(blocked))
        else:
            out[bs.id] = None
    return out


def main():
    seed = int(sys.argv[1]) if len(sys.argv) > 1 else None
    cfg = load_scenario(bundled_scenario("case2"))
    print("analytic occlusion windows (s):")
    for sid, win in occlusion_windows(cfg).items():
        print(f"  {sid}: {win}")
    t0 = time.perf_counter()
    sim = SimRun(cfg, seed=seed)
    report = sim.run()
    wall = time.perf_counter() - t0
    print(f"\nsim: {report['duration_s']} s simulated in {wall:.1f} s wall")
    for sid, s in report["stations"].items():
        e = s["errors"]
        print(f"  {sid}: mean={e['mean']} p95={e['p95']} max={e['max']} "
              f"n={e['n']} longest_gap={s['longest_gap']}")
    f = report["fused"]
    print(f"  fused: mean={f['errors']['mean']} p95={f['errors']['p95']} "
          f"max={f['errors']['max']} n_fixes={f['n_fixes']} "
          f"under10={f['frac_under_10m']} longest_gap={f['longest_gap']}")
    print(f"  alerts: {report['alerts']}")


if __name__ == "__main__":
    main()
