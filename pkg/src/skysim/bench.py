"""Planner benchmark suite and numba-vs-numpy kernel comparison."""

from __future__ import annotations

import json
import math
import os
import subprocess
import sys
import time
from pathlib import Path
from typing import Dict, List, Optional

from .planning import (GameConfig, MctsConfig, PlanRequest, build_graph,
                       equilibrium_iterate, greedy_sequential, mcts_plan,
                       _assignment_from_routes)
from .scenario import ScenarioConfig, load_scenario

BENCH_DIR = Path(__file__).resolve().parents[2] / "bench"


def requests_from_scenario(cfg: ScenarioConfig, graph) -> List[PlanRequest]:
    """One request per UAV: current position cell -> final waypoint cell."""
    requests = []
    for entry in sorted(cfg.uavs, key=lambda u: u.state.id):
        start = graph.node_index.get(cfg.grid.cell_of(entry.state.position))
        goal = graph.node_index.get(cfg.grid.cell_of(entry.plan.waypoints[-1][0]))
        if start is None or goal is None:
            raise ValueError(f"uav {entry.state.id}: start/goal cell is blocked")
        dep = max(0, int(round(entry.plan.t_start / graph.step_dt)))
        requests.append(PlanRequest(entry.state.id, start, goal, dep))
    return requests


def bench_one(path: Path, iterations: int = 2000, seed: int = 7) -> dict:
    cfg = load_scenario(path)
    horizon = min(96, max(16, 4 * max(cfg.grid.dims)))
    graph = build_graph(cfg, horizon)
    requests = requests_from_scenario(cfg, graph)
    out: Dict[str, object] = {"instance": path.name, "uavs": len(requests),
                              "nodes": graph.n_nodes, "horizon": graph.horizon}

    t0 = time.perf_counter()
    greedy = _assignment_from_routes(graph, greedy_sequential(requests, graph))
    out["greedy"] = {"total_cost": round(greedy.total_cost, 3),
                     "max_cost": round(greedy.max_cost, 3),
                     "conflicts": greedy.conflicts,
                     "seconds": round(time.perf_counter() - t0, 3)}

    t0 = time.perf_counter()
    eq = equilibrium_iterate(requests, graph, GameConfig(epsilon=1e-6, max_rounds=64))
    out["equilibrium"] = {"total_cost": round(eq.total_cost, 3),
                          "max_cost": round(eq.max_cost, 3),
                          "conflicts": eq.conflicts, "converged": eq.converged,
                          "rounds": eq.rounds,
                          "seconds": round(time.perf_counter() - t0, 3)}

    t0 = time.perf_counter()
    mcts = mcts_plan(requests, graph, MctsConfig(iterations=iterations,
                                                 risk_weight=math.inf), seed=seed)
    out["mcts"] = {"total_cost": round(mcts.total_cost, 3),
                   "max_cost": round(mcts.max_cost, 3),
                   "conflicts": mcts.conflicts,
                   "seconds": round(time.perf_counter() - t0, 3)}
    return out


def run_planner_bench(instances_dir: Optional[str] = None) -> List[dict]:
    base = Path(instances_dir) if instances_dir else BENCH_DIR
    paths = sorted(base.glob("*.json"))
    if not paths:
        raise FileNotFoundError(f"no benchmark instances in {base}")
    return [bench_one(p) for p in paths]


# ---------------------------------------------------------------------------
# Kernel benchmark: times both acceleration modes in subprocesses so the
# SKYSIM_FORCE_NUMPY flag is honored at import time.

_KERNEL_SCRIPT = r"""
import json, time
import numpy as np
from skysim import _accel, _kernels

def t(f, *a, repeat=3):
    f(*a)  # warm (and JIT-compile on the numba path)
    best = 1e9
    for _ in range(repeat):
        t0 = time.perf_counter(); f(*a); best = min(best, time.perf_counter() - t0)
    return best

out = {"mode": "numba" if _accel.NUMBA_ENABLED else "numpy"}
n, m = 4096, 128
H = np.zeros((n, m), dtype=np.complex128)
amps = (np.random.default_rng(0).standard_normal(8) + 1j).astype(np.complex128)
out["echo_accumulate_s"] = t(lambda: _kernels.echo_accumulate(H, amps, np.linspace(0.01, 0.5, 8), np.linspace(0.01, 0.5, 8)))
P = np.abs(np.random.default_rng(1).standard_normal((n, m)))
out["local_peaks_s"] = t(lambda: _kernels.local_peaks(P, 5.0))
S = np.random.default_rng(2).uniform(0, 200, (6, 3))
ph = np.random.default_rng(3).uniform(0, 1, 6)
NV = np.random.default_rng(4).integers(500, 2500, (4000, 6)).astype(float)
P0 = np.tile(np.array([50., 50., 40.]), (4000, 1))
out["phase_gauss_newton_s"] = t(lambda: _kernels.phase_gauss_newton(S, ph, NV, 0.08, P0.copy()))
from skysim.planning import build_graph
from skysim.scenario import parse_scenario
cfg = parse_scenario({"grid": {"origin": [0,0,0], "cell_size": 50.0, "dims": [8,8,1]},
                      "stations": [], "uavs": [], "seed": 1, "duration_s": 10.0})
g = build_graph(cfg, 48, cruise_speed=5.0)
loads = np.zeros(g.n_edges * g.horizon, dtype=np.int64)
out["dijkstra_s"] = t(lambda: _kernels.time_expanded_dijkstra(
    g.indptr, g.targets, g.edge_ids, g.edge_a, g.edge_b, loads, g.blocked.ravel(),
    g.n_nodes, g.horizon, 0, 0, g.n_nodes - 1))
print(json.dumps(out))
"""


def run_kernel_bench() -> List[dict]:
    results = []
    for force in ("1", "0"):
        env = dict(os.environ)
        env["SKYSIM_FORCE_NUMPY"] = force
        proc = subprocess.run([sys.executable, "-c", _KERNEL_SCRIPT],
                              capture_output=True, text=True, env=env, timeout=300)
        if proc.returncode != 0:
            results.append({"mode": f"force_numpy={force}", "error": proc.stderr[-500:]})
        else:
            results.append(json.loads(proc.stdout.strip().splitlines()[-1]))
    return results
