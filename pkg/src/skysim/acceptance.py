"""Acceptance criteria P1-P11, each with its stated tolerance and budget.

Every criterion returns a CriterionResult; run_suite() executes a named
subset. Timed criteria measure steady-state runtime: kernels are warmed once
before the clock starts (JIT compilation is a one-time cost, cached on disk).
"""

from __future__ import annotations

import itertools
import json
import math
import time
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, List, Optional

import numpy as np

from .carrier_phase import AmbiguousSolution, carrier_phase_solve, measure_phase
from .control import ApprovalContext, ControlPlane, ControlError, Domain, DomainTree, \
    OverrideCommand, UavIdentity
from .data import bundled_scenario
from .engine import SimRun, run_scenario
from .fusion import StationEstimate, fuse_estimates
from .geometry import Vec3
from .planning import (GameConfig, MctsConfig, PlanRequest, accumulate_loads,
                       best_response, build_graph, count_conflicts, enumerate_routes,
                       equilibrium_certificate, equilibrium_iterate, greedy_sequential,
                       make_graph, mcts_plan, route_cost, _assignment_from_routes)
from .scenario import FlightPlan, load_scenario
from .sensing import (BsConfig, TargetTruth, detect, range_doppler_map,
                      resolution_limits, synth_echo)

SPEED_OF_LIGHT = 299_792_458.0


@dataclass
class CriterionResult:
    cid: str
    title: str
    passed: bool
    detail: str = ""
    seconds: float = 0.0
    budget: Optional[float] = None

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        timing = f" ({self.seconds:.2f}s" + (f" < {self.budget:.0f}s)" if self.budget
                                             else ")")
        return f"{self.cid} {status}{timing} - {self.title}"


def _warm_kernels() -> None:
    from . import _kernels
    h = np.zeros((16, 8), dtype=np.complex128)
    _kernels.echo_accumulate(h, np.ones(1, dtype=np.complex128),
                             np.array([0.1]), np.array([0.2]))
    _kernels.local_peaks(np.abs(h), 0.5)
    _kernels.phase_gauss_newton(np.random.default_rng(0).uniform(0, 100, (6, 3)),
                                np.random.default_rng(1).uniform(0, 1, 6),
                                np.zeros((2, 6)), 0.08,
                                np.full((2, 3), 50.0))
    _kernels.time_expanded_dijkstra(
        np.array([0, 1], dtype=np.int64), np.array([0], dtype=np.int64),
        np.array([0], dtype=np.int64), np.array([1.0]), np.array([0.0]),
        np.zeros(4, dtype=np.int64), np.zeros(8, dtype=np.uint8), 1, 3, 0, 0, 0)


def _sub6(n_symbols=16) -> BsConfig:
    return BsConfig(id="bs-sub6", position=Vec3(0, 0, 0), band="sub6",
                    fc=3.75e9, bandwidth=100e6, delta_f=30e3, pri=2.5e-3,
                    eirp=46.0, rx_gain=16.0, noise_figure=5.0,
                    n_symbols=n_symbols, max_range_gate=3000.0)


def _mmwave() -> BsConfig:
    return BsConfig(id="bs-mmwave", position=Vec3(0, 0, 0), band="mmwave",
                    fc=26e9, bandwidth=800e6, delta_f=75e3, pri=2e-4,
                    eirp=55.0, rx_gain=27.0, noise_figure=7.0,
                    n_symbols=128, max_range_gate=1200.0)


# ---------------------------------------------------------------------------
# P1 - range resolution


def _resolved(bs, separation: float) -> bool:
    rng = np.random.default_rng(101)
    range_res, _, _, _ = resolution_limits(bs)
    r1 = 200 * bs.range_bin
    r2 = r1 + separation
    targets = [(Vec3(r1, 0, 0), Vec3(0, 0, 0), 0.1), (Vec3(r2, 0, 0), Vec3(0, 0, 0), 0.1)]
    frame = synth_echo(bs, targets, rng, noise_std=0.0)
    power = range_doppler_map(frame, bs)  # rect window: full resolution
    dets = detect(power, bs, [TargetTruth(p, v) for p, v, _ in targets], rng)
    m1 = [d for d in dets if abs(d.range - r1) < range_res / 2]
    m2 = [d for d in dets if abs(d.range - r2) < range_res / 2]
    return bool(m1 and m2 and (m1[0] is not m2[0]))


def p1() -> CriterionResult:
    bs = _sub6()
    t0 = time.perf_counter()
    wide = _resolved(bs, 3.0)
    narrow = _resolved(bs, 0.5)
    dt = time.perf_counter() - t0
    ok = wide and not narrow and dt < 1.0
    return CriterionResult(
        "P1", "range resolution at B=100 MHz: 3.0 m resolved, 0.5 m merged",
        ok, f"3.0m resolved={wide}, 0.5m resolved={narrow}", dt, 1.0)


# ---------------------------------------------------------------------------
# P2 - closed-form resolution limits


def p2() -> CriterionResult:
    def sig4(value: float, reference: float) -> bool:
        return abs(value - reference) <= abs(reference) * 5e-4

    sub6 = _sub6(64)
    mm = _mmwave()
    rr_s, vr_s, rm_s, vm_s = resolution_limits(sub6)
    rr_m, _, _, vm_m = resolution_limits(mm)
    checks = {
        # independent closed forms at c = 299,792,458 m/s
        "range_res_sub6": sig4(rr_s, SPEED_OF_LIGHT / (2 * 100e6)),
        "range_res_mm": sig4(rr_m, SPEED_OF_LIGHT / (2 * 800e6)),
        "vel_max_sub6": sig4(vm_s, SPEED_OF_LIGHT / (4 * 3.75e9 * 2.5e-3)),
        "vel_max_mm": sig4(vm_m, SPEED_OF_LIGHT / (4 * 26e9 * 2e-4)),
        "range_max_sub6": sig4(rm_s, SPEED_OF_LIGHT / (2 * 30e3)),
        # quoted figures (1.499 m, 0.1874 m at 4 s.f.; the quoted v_max pair
        # traces to c ~ 3e8, checked at 0.15% relative)
        "quoted_rr_sub6": sig4(rr_s, 1.499),
        "quoted_rr_mm": sig4(rr_m, 0.1874),
        "quoted_vm_sub6": abs(vm_s - 8.0) <= 8.0 * 1.5e-3,
        "quoted_vm_mm": abs(vm_m - 14.42) <= 14.42 * 1.5e-3,
    }
    failed = [k for k, v in checks.items() if not v]
    return CriterionResult(
        "P2", "resolution formulas match closed form to 4 significant figures",
        not failed,
        f"rr={rr_s:.4f}/{rr_m:.5f} m, vmax={vm_s:.4f}/{vm_m:.4f} m/s"
        + (f"; failed: {failed}" if failed else ""))


# ---------------------------------------------------------------------------
# P3 - inverse-variance fusion accuracy


def p3() -> CriterionResult:
    rng = np.random.default_rng(33)
    n = 10_000
    t0 = time.perf_counter()
    errors = np.empty((n, 3))
    cov1 = np.eye(3) * 2.5 ** 2
    cov2 = np.eye(3) * 3.5 ** 2
    for i in range(n):
        truth = rng.uniform(-100, 100, 3)
        e1 = StationEstimate("s1", 0.0, Vec3(*(truth + rng.normal(0, 2.5, 3))), cov1)
        e2 = StationEstimate("s2", 0.0, Vec3(*(truth + rng.normal(0, 3.5, 3))), cov2)
        pos, _ = fuse_estimates([e1, e2])
        errors[i] = pos.as_array() - truth
    dt = time.perf_counter() - t0
    rms = float(np.sqrt(np.mean(errors ** 2)))
    predicted = (2.5 ** -2 + 3.5 ** -2) ** -0.5
    ok = abs(rms - 2.03) <= 0.05 and dt < 5.0
    return CriterionResult(
        "P3", "fused RMS 2.03 m +/- 0.05 m from 2.5 m and 3.5 m stations",
        ok, f"rms={rms:.4f} m (inverse-variance prediction {predicted:.4f})", dt, 5.0)


# ---------------------------------------------------------------------------
# P4/P5 - bundled case2 scenario (shared run)


@lru_cache(maxsize=1)
def _case2_run():
    cfg = load_scenario(bundled_scenario("case2"))
    sim = SimRun(cfg)
    t0 = time.perf_counter()
    report = sim.run()
    return sim, report, time.perf_counter() - t0


def p4() -> CriterionResult:
    sim, report, dt = _case2_run()
    fused = report["fused"]
    st = report["stations"]
    ok = (fused["n_fixes"] >= 80
          and fused["frac_under_10m"] == 1.0
          and fused["longest_gap"] == 0
          and all(s["longest_gap"] >= 1 for s in st.values())
          and dt < 30.0)
    detail = (f"fixes={fused['n_fixes']}, under10={fused['frac_under_10m']}, "
              f"fused_gap={fused['longest_gap']}, station_gaps="
              f"{[s['longest_gap'] for s in st.values()]}, max_err={fused['errors']['max']} m")
    return CriterionResult(
        "P4", "case2: >=80 fused fixes, 100% under 10 m, gapless fused track",
        ok, detail, dt, 30.0)


def p5() -> CriterionResult:
    sim, report, _ = _case2_run()
    # every airborne cadence step must be covered by at least one station,
    # starting from the very first one
    covered = set()
    for cover in sim.station_cover.values():
        for idx_list in cover.values():
            covered.update(idx_list)
    last = max(covered)
    missing = [i for i in range(0, last + 1) if i not in covered]
    ok = not missing and min(covered) == 0
    return CriterionResult(
        "P5", "0.1 m^2 target detected by at least one station at every cadence",
        ok, f"cadences 0..{last}, uncovered={missing[:5]}")


# ---------------------------------------------------------------------------
# P6 - carrier-phase positioning

_CP_STATIONS = [Vec3(129.22, 192.31, 66.31), Vec3(-46.87, 55.81, 172.11),
                Vec3(7.78, 45.54, 53.45), Vec3(11.16, 267.88, 108.97),
                Vec3(33.01, 167.58, 126.30), Vec3(1.73, 11.18, 24.25)]
_CP_TRUTH = Vec3(50.0, 50.0, 40.0)
_CP_LAM = 0.08


def p6() -> CriterionResult:
    half = 0.10
    box = (Vec3(_CP_TRUTH.x - half, _CP_TRUTH.y - half, _CP_TRUTH.z - half),
           Vec3(_CP_TRUTH.x + half, _CP_TRUTH.y + half, _CP_TRUTH.z + half))
    t0 = time.perf_counter()
    noiseless = [measure_phase(s, _CP_TRUTH, _CP_LAM, station_id=f"st{i}")
                 for i, s in enumerate(_CP_STATIONS)]
    pos0, _ = carrier_phase_solve(noiseless, _CP_STATIONS, box, ambiguity_span=5)
    exact = pos0.dist(_CP_TRUTH) < 1e-6
    ok_count = 0
    for trial in range(200):
        rng = np.random.default_rng(5000 + trial)
        meas = [measure_phase(s, _CP_TRUTH, _CP_LAM, rng, 0.05, f"st{i}")
                for i, s in enumerate(_CP_STATIONS)]
        try:
            pos, _ = carrier_phase_solve(meas, _CP_STATIONS, box, ambiguity_span=5)
            if pos.dist(_CP_TRUTH) < 0.1:
                ok_count += 1
        except (AmbiguousSolution, ValueError):
            pass
    dt = time.perf_counter() - t0
    ok = exact and ok_count >= 190 and dt < 10.0
    return CriterionResult(
        "P6", "carrier phase: noiseless exact, >=95% of 200 noisy trials under 0.1 m",
        ok, f"noiseless_err={pos0.dist(_CP_TRUTH):.2e} m, noisy={ok_count}/200", dt, 10.0)


# ---------------------------------------------------------------------------
# P7 - Wardrop user equilibrium


def p7() -> CriterionResult:
    g = make_graph([0, 1], [(0, 1, 10.0, 1.0, 99), (0, 1, 0.0, 2.0, 99)], horizon=1)
    reqs = [PlanRequest(f"u{i}", 0, 1) for i in range(8)]
    asg = equilibrium_iterate(reqs, g, GameConfig(epsilon=1e-6, max_rounds=64))
    loads = accumulate_loads(g, list(asg.routes.values()))
    split = sorted(loads[:, 0].tolist())
    costs = sorted(set(round(c, 9) for c in asg.costs.values()))
    certified, worst = equilibrium_certificate(asg, reqs, g, 1e-6)
    ok = (asg.converged and split == [2, 6] and costs == [12.0] and certified)
    return CriterionResult(
        "P7", "two-route Wardrop: 2/6 split at equal cost 12, certified at eps=1e-6",
        ok, f"split={split}, costs={costs}, worst_improvement={worst:.2e}")


# ---------------------------------------------------------------------------
# P8 - MCTS optimality and the 20-UAV benchmark


def p8() -> CriterionResult:
    from .bench import BENCH_DIR, requests_from_scenario
    from .scenario import load_scenario as _load
    t0 = time.perf_counter()
    notes = []
    ok = True
    for name in ("tiny_cross_2uav.json", "tiny_bottleneck_3uav.json"):
        cfg = _load(BENCH_DIR / name)
        g = build_graph(cfg, 12)
        reqs = requests_from_scenario(cfg, g)
        per_uav = 4 if len(reqs) <= 2 else 3
        cands = {r.uav_id: enumerate_routes(r, g, max_steps=6, cap=64)[:per_uav]
                 for r in reqs}
        joint = math.prod(len(v) for v in cands.values())
        best = None
        for combo in itertools.product(*[cands[r.uav_id] for r in reqs]):
            loads = accumulate_loads(g, list(combo))
            key = (count_conflicts(g, loads),
                   round(sum(route_cost(g, r, loads) for r in combo), 9))
            best = key if best is None or key < best else best
        asg = mcts_plan(reqs, g, MctsConfig(iterations=10_000, risk_weight=math.inf),
                        seed=3, candidates=cands)
        got = (asg.conflicts, round(asg.total_cost, 9))
        if got != best or joint > 60:
            ok = False
        notes.append(f"{name}: joint={joint}, optimal={best}, mcts={got}")
    cfg20 = _load(BENCH_DIR / "swarm20.json")
    g20 = build_graph(cfg20, 32)
    reqs20 = requests_from_scenario(cfg20, g20)
    greedy = _assignment_from_routes(g20, greedy_sequential(reqs20, g20))
    m20 = mcts_plan(reqs20, g20, MctsConfig(iterations=3000, risk_weight=math.inf,
                                            max_candidates=8, exploration_c=40.0),
                    seed=7)
    if not (m20.total_cost <= greedy.total_cost + 1e-9 and m20.conflicts == 0):
        ok = False
    notes.append(f"swarm20: greedy=({greedy.conflicts},{greedy.total_cost:.0f}), "
                 f"mcts=({m20.conflicts},{m20.total_cost:.0f})")
    dt = time.perf_counter() - t0
    ok = ok and dt < 60.0
    return CriterionResult(
        "P8", "MCTS matches exhaustive optimum on tiny instances; beats greedy on 20 UAVs",
        ok, "; ".join(notes), dt, 60.0)


# ---------------------------------------------------------------------------
# P9 - control-plane safety under randomized load


def _p9_domains() -> DomainTree:
    return DomainTree([
        Domain("national", "national"),
        Domain("prov", "provincial", "national", coverage=(-5000, -5000, 5000, 5000),
               gateway_pos=Vec3(0, 0, 0)),
        Domain("d-west", "district", "prov", coverage=(-5000, -5000, 0, 5000),
               gateway_pos=Vec3(-800, 0, 0)),
        Domain("d-east", "district", "prov", coverage=(0, -5000, 5000, 5000),
               gateway_pos=Vec3(800, 0, 0)),
    ])


def p9(ticks: int = 100_000) -> CriterionResult:
    rng = np.random.default_rng(2209)
    positions = {}
    cp = ControlPlane(_p9_domains(), position_oracle=lambda u: positions.get(u))
    ctx = ApprovalContext(zones=[])
    uids = [f"u{i}" for i in range(20)]
    plan_counter = 0
    world_modes = {}
    t0 = time.perf_counter()
    violations = []

    def check_invariants():
        # active-implies-approved for the management plane's own mode view
        cp.check_safety()
        seqs = [e["seq"] for e in cp.events]
        if seqs != sorted(seqs) or len(set(seqs)) != len(seqs):
            violations.append("audit sequence not strictly increasing")
        if len(cp.state["delivered_cmds"]) != len(set(cp.state["delivered_cmds"])):
            violations.append("override applied twice")

    t = 0.0
    for step in range(ticks):
        t += 0.1
        op = int(rng.integers(0, 10))
        uid = uids[int(rng.integers(0, len(uids)))]
        try:
            if op == 0:
                positions[uid] = Vec3(float(rng.uniform(-1500, 1500)),
                                      float(rng.uniform(-1500, 1500)), 60.0)
                cp.register(UavIdentity(uid, f"tok-{uid}", "d-west"), t)
            elif op == 1:
                cp.admit(uid, f"tok-{uid}",
                         "d-west" if rng.random() < 0.5 else "d-east", t)
            elif op == 2 and rng.random() < 0.1:
                cp.deregister(uid, t)
            elif op == 3:
                plan_counter += 1
                aid = f"a{plan_counter}"
                cp.submit_plan(aid, uid, t)
                plan = FlightPlan(uav_id=uid,
                                  waypoints=((Vec3(0, 0, 60), t), (Vec3(100, 0, 60), t + 25)),
                                  cruise_speed=5.0)
                if rng.random() < 0.8:
                    ok, _ = cp.approve_plan(aid, plan, ctx, t, "prov")
                    if ok and rng.random() < 0.9:
                        cp.activate_plan(aid, t)
                        world_modes[uid] = "nominal"
                else:
                    cp.reject_plan(aid, t, "prov")
            elif op == 4:
                # close out a random active authorization
                active = [a for a, rec in cp.state["authorizations"].items()
                          if rec["status"] == "active"]
                if active:
                    aid = active[int(rng.integers(len(active)))]
                    if rng.random() < 0.5:
                        cp.complete_plan(aid, t)
                    else:
                        cp.abort_plan(aid, t)
            elif op == 5:
                cp.dispatch_override(
                    OverrideCommand(f"c{step}", uid,
                                    ("hover", "return_home", "land")[int(rng.integers(3))],
                                    t, "prov"),
                    "pc5" if rng.random() < 0.5 else "uu", t)
            elif op == 6:
                sess = cp.state["sessions"].get(uid)
                if sess:
                    target = "d-east" if sess["domain"] == "d-west" else "d-west"
                    cp.handover(uid, sess["domain"], target, t)
            elif op == 7:
                cp.send_data(uid, int(rng.integers(256, 8192)), t)
            elif op == 8:
                positions[uid] = Vec3(float(rng.uniform(-4000, 4000)),
                                      float(rng.uniform(-4000, 4000)), 60.0)
            else:
                cp.raise_alert("rogue", {"uav_id": f"ghost-{step}"}, t)
        except ControlError:
            pass
        cp.process_links(t, rng)
        if step % 20_000 == 0:
            check_invariants()
    check_invariants()
    replay_ok = cp.verify_replay()
    if not replay_ok:
        violations.append("event-sourcing replay mismatch")
    # priority invariant is asserted inside GatewayQueue.drain on every
    # delivery; reaching this point means no inversion occurred
    dt = time.perf_counter() - t0
    ok = not violations and replay_ok
    return CriterionResult(
        "P9", f"control-plane invariants over {ticks} randomized ticks",
        ok, f"events={len(cp.events)}, violations={violations or 'none'}", dt)


# ---------------------------------------------------------------------------
# P10 - PC5 latency and range limit


def p10(draws: int = 10_000) -> CriterionResult:
    positions = {"u1": Vec3(-400, 0, 60)}
    cp = ControlPlane(_p9_domains(), position_oracle=lambda u: positions.get(u))
    cp.register(UavIdentity("u1", "tok", "d-west"), 0.0)
    cp.admit("u1", "tok", "d-west", 0.0)
    rng = np.random.default_rng(1010)
    t0 = time.perf_counter()
    for i in range(draws):
        t = float(i)
        cp.dispatch_override(OverrideCommand(f"c{i}", "u1", "hover", t, "d-west"),
                             "pc5", t)
        cp.process_links(t + 0.5, rng)
    lat = np.array(cp.override_latencies)
    queueing = 1e-4  # single service slot per delivery in this workload
    frac = float(np.mean(lat <= 3e-3 + queueing))
    # out of range: beyond 1 km from the serving gateway, PC5 never delivers
    positions["u2"] = Vec3(-800 - 1500, 0, 60)
    cp.register(UavIdentity("u2", "tok2", "d-west"), 20_000.0)
    cp.admit("u2", "tok2", "d-west", 20_000.0)
    before = list(cp.state["delivered_cmds"])
    for i in range(100):
        t = 20_001.0 + i
        cp.dispatch_override(OverrideCommand(f"far{i}", "u2", "land", t, "d-west"),
                             "pc5", t)
        cp.process_links(t + 0.5, rng)
    far_delivered = [c for c in cp.state["delivered_cmds"]
                     if c.startswith("far") and c not in before]
    dt = time.perf_counter() - t0
    ok = len(lat) == draws and frac >= 0.99 and not far_delivered
    return CriterionResult(
        "P10", "PC5 latency <= 3 ms + queueing in >=99% of draws; dead beyond 1 km",
        ok, f"within_budget={frac:.4f} over {draws}, beyond_range_delivered="
            f"{len(far_delivered)}", dt)


# ---------------------------------------------------------------------------
# P11 - byte determinism


def p11() -> CriterionResult:
    t0 = time.perf_counter()
    outputs = []
    for _ in range(2):
        cfg = load_scenario(bundled_scenario("case2"))
        cfg.duration = 21.0
        cfg.validate()
        report, audit = run_scenario(
            cfg, events=[("spawn_rogue", 6.0,
                          {"position": [120.0, 80.0, 55.0], "velocity": [2.0, -1.0, 0.0]})])
        outputs.append((json.dumps(report, indent=2), audit))
    same = outputs[0] == outputs[1]
    dt = time.perf_counter() - t0
    return CriterionResult(
        "P11", "identical seed reproduces metrics and audit log byte-for-byte",
        same, f"metrics_bytes={len(outputs[0][0])}, audit_bytes={len(outputs[0][1])}",
        dt)


SUITES = {
    "sensing": ["P1", "P2", "P5"],
    "fusion": ["P3", "P4", "P6"],
    "planning": ["P7", "P8"],
    "control": ["P9", "P10"],
    "all": ["P1", "P2", "P3", "P4", "P5", "P6", "P7", "P8", "P9", "P10", "P11"],
}

_CRITERIA: dict = {"P1": p1, "P2": p2, "P3": p3, "P4": p4, "P5": p5, "P6": p6,
                   "P7": p7, "P8": p8, "P9": p9, "P10": p10, "P11": p11}


def run_criterion(cid: str) -> CriterionResult:
    _warm_kernels()
    return _CRITERIA[cid]()


def run_suite(suite: str = "all") -> List[CriterionResult]:
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; pick from {sorted(SUITES)}")
    _warm_kernels()
    return [_CRITERIA[cid]() for cid in SUITES[suite]]
