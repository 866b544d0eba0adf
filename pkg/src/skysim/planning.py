"""Swarm route planning on a time-expanded airspace graph.

The airspace grid becomes a directed graph (6-connected moves plus wait
self-edges) expanded over discrete steps. Every edge traversal takes one step
and costs an affine congestion latency l(x) = a + b*x seconds, where x counts
simultaneous occupants of that edge at that step. Conflicts are capacity
violations (occupants > capacity).

Two planners operate on this substrate: round-robin best-response iteration
toward an epsilon user equilibrium (no UAV can cut its own latency by more
than epsilon by unilaterally rerouting), and Monte Carlo Tree Search over
sequential per-UAV route commitments for a joint near-optimum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import _kernels
from .scenario import ScenarioConfig

RISK_BIG = 1e9  # stands in for risk_weight = inf (lexicographic conflicts-then-cost)


class PlanningError(ValueError):
    pass


@dataclass
class DynamicGraph:
    """Directed CSR graph; congestion and capacity are per undirected link.

    A directed edge and its reverse twin share one link, so head-on traffic
    through a corridor both loads its latency and counts against its
    capacity. Same-direction flows reduce to the classic per-edge congestion
    game (each parallel edge is its own link).
    """

    node_keys: List            # arbitrary hashable per node (grid cells use (ix,iy,iz))
    indptr: np.ndarray         # CSR row pointers [n_nodes+1]
    targets: np.ndarray        # CSR target node per directed edge slot
    edge_ids: np.ndarray       # edge id per CSR slot
    edge_a: np.ndarray         # free-flow seconds per edge
    edge_b: np.ndarray         # seconds per unit load per edge
    edge_link: np.ndarray      # undirected link id per edge
    link_capacity: np.ndarray  # max simultaneous occupants per link
    blocked: np.ndarray        # uint8 [n_nodes, horizon+1]
    horizon: int
    step_dt: float
    node_index: Dict = field(default_factory=dict)
    edge_pairs: List[Tuple[int, int]] = field(default_factory=list)

    @property
    def n_nodes(self) -> int:
        return len(self.node_keys)

    @property
    def n_edges(self) -> int:
        return len(self.edge_a)

    @property
    def n_links(self) -> int:
        return len(self.link_capacity)

    def out_edges(self, u: int):
        for slot in range(self.indptr[u], self.indptr[u + 1]):
            yield int(self.targets[slot]), int(self.edge_ids[slot])

    def edge_between(self, u: int, v: int) -> Optional[int]:
        for tgt, e in self.out_edges(u):
            if tgt == v:
                return e
        return None

    def link_of(self, u: int, v: int) -> Optional[int]:
        e = self.edge_between(u, v)
        return None if e is None else int(self.edge_link[e])

    def validate(self) -> None:
        if np.any(self.edge_a < 0) or np.any(self.edge_b < 0):
            raise PlanningError("latency coefficients must be non-negative")
        if np.any(self.link_capacity < 1):
            raise PlanningError("link capacity must be >= 1")


def make_graph(node_keys: Sequence,
               edges: Sequence[Tuple[int, int, float, float, int]],
               horizon: int,
               step_dt: float = 1.0,
               blocked: Optional[np.ndarray] = None) -> DynamicGraph:
    """Assemble a graph from (u, v, a, b, capacity) directed edge tuples."""
    n = len(node_keys)
    order = sorted(range(len(edges)), key=lambda i: (edges[i][0], edges[i][1], i))
    indptr = np.zeros(n + 1, dtype=np.int64)
    targets = np.empty(len(edges), dtype=np.int64)
    edge_ids = np.empty(len(edges), dtype=np.int64)
    a = np.empty(len(edges))
    b = np.empty(len(edges))
    cap = np.empty(len(edges), dtype=np.int64)
    pairs: List[Tuple[int, int]] = [(0, 0)] * len(edges)
    for slot, i in enumerate(order):
        u, v, ea, eb, ec = edges[i]
        targets[slot] = v
        edge_ids[slot] = i
        a[i], b[i], cap[i] = ea, eb, ec
        pairs[i] = (u, v)
        indptr[u + 1] += 1
    indptr = np.cumsum(indptr)
    if blocked is None:
        blocked = np.zeros((n, horizon + 1), dtype=np.uint8)
    # Pair each directed edge with its reverse twin (matched by occurrence
    # order) into one undirected link; unpaired edges and self-loops get
    # their own links.
    edge_link = np.full(len(edges), -1, dtype=np.int64)
    link_caps: List[int] = []
    by_pair: Dict[Tuple[int, int], List[int]] = {}
    for i, (u, v, *_rest) in enumerate(edges):
        by_pair.setdefault((u, v), []).append(i)
    for (u, v), ids in sorted(by_pair.items()):
        if u > v:
            continue
        twins = by_pair.get((v, u), []) if u != v else []
        for idx, i in enumerate(ids):
            link = len(link_caps)
            edge_link[i] = link
            if idx < len(twins):
                j = twins[idx]
                edge_link[j] = link
                link_caps.append(int(min(cap[i], cap[j])))
            else:
                link_caps.append(int(cap[i]))
        for idx in range(len(ids), len(twins)):
            j = twins[idx]
            edge_link[j] = len(link_caps)
            link_caps.append(int(cap[j]))
    g = DynamicGraph(node_keys=list(node_keys), indptr=indptr, targets=targets,
                     edge_ids=edge_ids, edge_a=a, edge_b=b,
                     edge_link=edge_link, link_capacity=np.array(link_caps, dtype=np.int64),
                     blocked=blocked.astype(np.uint8), horizon=horizon, step_dt=step_dt,
                     node_index={k: i for i, k in enumerate(node_keys)},
                     edge_pairs=pairs)
    g.validate()
    return g


def build_graph(config: ScenarioConfig, horizon_steps: int,
                cruise_speed: Optional[float] = None,
                t0: float = 0.0) -> DynamicGraph:
    """Time-expanded grid graph from a scenario.

    Cells permanently inside a restricted zone are dropped; cells covered
    only during an active window are blocked in the matching layers. Step s
    corresponds to sim time t0 + s*step_dt.
    """
    from .scenario import zone_violations

    grid = config.grid
    if cruise_speed is None:
        speeds = sorted(u.plan.cruise_speed for u in config.uavs) or [5.0]
        cruise_speed = speeds[len(speeds) // 2]
    step_dt = grid.cell_size / cruise_speed
    nx, ny, nz = grid.dims
    blocking = [z for z in config.zones if z.kind in ("restricted", "temporary")]

    def blocked_always(center) -> bool:
        return any(z.active_window is None and z.contains(center, 0.0) for z in blocking)

    keys = []
    for ix in range(nx):
        for iy in range(ny):
            for iz in range(nz):
                center = grid.cell_center(ix, iy, iz)
                if not blocked_always(center):
                    keys.append((ix, iy, iz))
    index = {k: i for i, k in enumerate(keys)}
    blocked = np.zeros((len(keys), horizon_steps + 1), dtype=np.uint8)
    windowed = [z for z in blocking if z.active_window is not None]
    if windowed:
        for k, i in index.items():
            center = grid.cell_center(*k)
            for s in range(horizon_steps + 1):
                t = t0 + s * step_dt
                if any(z.contains(center, t) for z in windowed):
                    blocked[i, s] = 1

    a_move = grid.cell_size / cruise_speed
    cap = config.planner.edge_capacity
    b = config.planner.load_coeff
    edges = []
    for k, i in index.items():
        ix, iy, iz = k
        edges.append((i, i, step_dt, 0.0, cap))  # wait
        for dx, dy, dz in ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)):
            nb = (ix + dx, iy + dy, iz + dz)
            j = index.get(nb)
            if j is not None:
                edges.append((i, j, a_move, b, cap))
    return make_graph(keys, edges, horizon_steps, step_dt, blocked)


@dataclass(frozen=True)
class PlanRequest:
    uav_id: str
    start: int      # node id
    goal: int       # node id
    dep_step: int = 0


@dataclass
class RoutePlan:
    uav_id: str
    dep_step: int
    nodes: List[int]             # node per step, nodes[0] at dep_step
    edges: List[int] = field(default_factory=list)  # edge id per hop (parallel edges differ)

    def __post_init__(self):
        if not self.edges and len(self.nodes) > 1:
            raise PlanningError(f"route for {self.uav_id} is missing edge ids")
        if self.edges and len(self.edges) != len(self.nodes) - 1:
            raise PlanningError(f"route for {self.uav_id}: edge count mismatch")

    @property
    def arrival_step(self) -> int:
        return self.dep_step + len(self.nodes) - 1

    def edges_steps(self, graph: DynamicGraph):
        """(edge_id, step) pairs the route occupies."""
        for i, e in enumerate(self.edges):
            u, v = graph.edge_pairs[e]
            if u != self.nodes[i] or v != self.nodes[i + 1]:
                raise PlanningError(
                    f"route for {self.uav_id}: edge {e} does not join "
                    f"{self.nodes[i]} -> {self.nodes[i + 1]}")
            yield e, self.dep_step + i


@dataclass
class RouteAssignment:
    routes: Dict[str, RoutePlan]
    costs: Dict[str, float]
    total_cost: float
    conflicts: int
    converged: bool = True
    rounds: int = 0

    @property
    def max_cost(self) -> float:
        return max(self.costs.values()) if self.costs else 0.0


@dataclass
class GameConfig:
    epsilon: float = 1e-6   # seconds
    max_rounds: int = 64

    def __post_init__(self):
        if self.epsilon <= 0:
            raise PlanningError("epsilon must be > 0")
        if self.max_rounds < 1:
            raise PlanningError("max_rounds must be >= 1")


@dataclass
class MctsConfig:
    iterations: int = 2000
    exploration_c: float = 30.0        # seconds scale of the UCB bonus
    rollout_policy: str = "greedy-shortest"   # or "random"
    risk_weight: float = 600.0         # seconds per capacity conflict; inf = lexicographic
    prune_threshold: int = 0           # 0 disables pruning
    prune_margin: float = 0.5
    max_candidates: int = 8

    def __post_init__(self):
        if self.iterations < 1:
            raise PlanningError("iterations must be >= 1")
        if self.exploration_c <= 0:
            raise PlanningError("exploration_c must be > 0")
        if self.risk_weight < 0:
            raise PlanningError("risk_weight must be >= 0")
        if self.rollout_policy not in ("greedy-shortest", "random"):
            raise PlanningError("rollout_policy must be greedy-shortest|random")


# ---------------------------------------------------------------------------
# Loads and costs

def accumulate_loads(graph: DynamicGraph, routes: Sequence[RoutePlan]) -> np.ndarray:
    """Per-(link, step) occupancy counts over a set of routes."""
    loads = np.zeros((graph.n_links, graph.horizon), dtype=np.int64)
    for route in routes:
        for e, s in route.edges_steps(graph):
            if s >= graph.horizon:
                raise PlanningError(f"route for {route.uav_id} exceeds the horizon")
            loads[graph.edge_link[e], s] += 1
    return loads


def route_cost(graph: DynamicGraph, route: RoutePlan, loads: np.ndarray,
               include_self: bool = False) -> float:
    """Latency of one route under a link-load profile.

    With include_self the route's own occupancy is assumed absent from loads
    and added back per hop (the usual best-response evaluation); otherwise
    loads is taken as the full joint profile.
    """
    cost = 0.0
    for e, s in route.edges_steps(graph):
        x = loads[graph.edge_link[e], s] + (1 if include_self else 0)
        cost += graph.edge_a[e] + graph.edge_b[e] * x
    return cost


def evolve_situation(graph: DynamicGraph, assignment: RouteAssignment
                     ) -> Tuple[np.ndarray, List[Tuple[int, int, int, int]]]:
    """Per-link per-step occupancy plus flagged capacity violations."""
    loads = accumulate_loads(graph, list(assignment.routes.values()))
    over = []
    ls, ss = np.nonzero(loads > graph.link_capacity[:, None])
    for l, s in zip(ls.tolist(), ss.tolist()):
        over.append((l, s, int(loads[l, s]), int(graph.link_capacity[l])))
    return loads, over


def count_conflicts(graph: DynamicGraph, loads: np.ndarray) -> int:
    over = loads - graph.link_capacity[:, None]
    return int(np.sum(over[over > 0]))


def _loads_per_edge(graph: DynamicGraph, loads: np.ndarray) -> np.ndarray:
    """Expand link loads to the per-edge layout the Dijkstra kernel expects."""
    return np.ascontiguousarray(loads[graph.edge_link])


# ---------------------------------------------------------------------------
# Best response / equilibrium

def _walk_back(state: int, prev_state: np.ndarray, prev_edge: np.ndarray,
               h1: int) -> Tuple[List[int], List[int]]:
    nodes: List[int] = []
    edges: List[int] = []
    st = state
    while st >= 0:
        nodes.append(int(st // h1))
        e = int(prev_edge[st])
        if e >= 0:
            edges.append(e)
        st = int(prev_state[st])
    nodes.reverse()
    edges.reverse()
    return nodes, edges


def best_response(request: PlanRequest, graph: DynamicGraph,
                  loads: np.ndarray) -> Tuple[RoutePlan, float]:
    """Time-dependent shortest path under the other agents' loads."""
    dist, prev_state, prev_edge = _kernels.time_expanded_dijkstra(
        graph.indptr, graph.targets, graph.edge_ids,
        graph.edge_a, graph.edge_b, _loads_per_edge(graph, loads).ravel(),
        graph.blocked.ravel(),
        graph.n_nodes, graph.horizon, request.start, request.dep_step, request.goal)
    h1 = graph.horizon + 1
    goal_states = [request.goal * h1 + s for s in range(request.dep_step, h1)]
    best_s = None
    best_c = math.inf
    for st in goal_states:
        if dist[st] < best_c - 1e-12:
            best_c = dist[st]
            best_s = st
    if best_s is None or not math.isfinite(best_c) or best_c >= 1e29:
        raise PlanningError(
            f"goal unreachable within horizon for uav {request.uav_id}")
    nodes, edges = _walk_back(best_s, prev_state, prev_edge, h1)
    return RoutePlan(uav_id=request.uav_id, dep_step=request.dep_step,
                     nodes=nodes, edges=edges), best_c


def greedy_sequential(requests: Sequence[PlanRequest], graph: DynamicGraph
                      ) -> Dict[str, RoutePlan]:
    """Baseline: each UAV best-responds to the ones planned before it."""
    routes: Dict[str, RoutePlan] = {}
    loads = np.zeros((graph.n_links, graph.horizon), dtype=np.int64)
    for req in requests:
        route, _ = best_response(req, graph, loads)
        routes[req.uav_id] = route
        for e, st in route.edges_steps(graph):
            loads[graph.edge_link[e], st] += 1
    return routes


def _assignment_from_routes(graph: DynamicGraph, routes: Dict[str, RoutePlan],
                            converged: bool = True, rounds: int = 0) -> RouteAssignment:
    loads = accumulate_loads(graph, list(routes.values()))
    costs = {uid: route_cost(graph, r, loads) for uid, r in routes.items()}
    return RouteAssignment(routes=dict(routes), costs=costs,
                           total_cost=float(sum(costs.values())),
                           conflicts=count_conflicts(graph, loads),
                           converged=converged, rounds=rounds)


def equilibrium_iterate(requests: Sequence[PlanRequest], graph: DynamicGraph,
                        cfg: GameConfig) -> RouteAssignment:
    """Round-robin best responses until epsilon-stable or the round limit."""
    requests = list(requests)
    routes = greedy_sequential(requests, graph)
    loads = accumulate_loads(graph, list(routes.values()))
    rounds = 0
    converged = False
    while rounds < cfg.max_rounds:
        rounds += 1
        improved = False
        for req in requests:
            current = routes[req.uav_id]
            for e, st in current.edges_steps(graph):
                loads[graph.edge_link[e], st] -= 1
            current_cost = route_cost(graph, current, loads, include_self=True)
            candidate, cand_cost = best_response(req, graph, loads)
            if cand_cost < current_cost - cfg.epsilon:
                routes[req.uav_id] = candidate
                improved = True
            for e, st in routes[req.uav_id].edges_steps(graph):
                loads[graph.edge_link[e], st] += 1
        if not improved:
            converged = True
            break
    return _assignment_from_routes(graph, routes, converged, rounds)


def equilibrium_certificate(assignment: RouteAssignment, requests: Sequence[PlanRequest],
                            graph: DynamicGraph, epsilon: float) -> Tuple[bool, float]:
    """Recompute every best response; returns (certified, worst improvement)."""
    loads = accumulate_loads(graph, list(assignment.routes.values()))
    worst = 0.0
    for req in requests:
        current = assignment.routes[req.uav_id]
        work = loads.copy()
        for e, st in current.edges_steps(graph):
            work[graph.edge_link[e], st] -= 1
        current_cost = route_cost(graph, current, work, include_self=True)
        _, cand_cost = best_response(req, graph, work)
        worst = max(worst, current_cost - cand_cost)
    return worst <= epsilon, worst


# ---------------------------------------------------------------------------
# Candidate route generation (shared by MCTS and its exhaustive oracle)

def generate_candidates(request: PlanRequest, graph: DynamicGraph,
                        k: int, max_delay: int = 2) -> List[RoutePlan]:
    """Up to k diverse routes: penalty-diversified shortest paths plus
    wait-at-start variants. Deterministic."""
    zero = np.zeros((graph.n_edges, graph.horizon), dtype=np.int64)  # per-edge layout
    out: List[RoutePlan] = []
    seen = set()

    def push(route: RoutePlan):
        key = (route.dep_step, tuple(route.nodes))
        if key not in seen:
            seen.add(key)
            out.append(route)

    penalty = np.zeros(graph.n_edges)
    g_pen = graph
    for _ in range(k):
        dist, prev_state, prev_edge = _kernels.time_expanded_dijkstra(
            g_pen.indptr, g_pen.targets, g_pen.edge_ids,
            g_pen.edge_a + penalty, g_pen.edge_b, zero.ravel(), g_pen.blocked.ravel(),
            g_pen.n_nodes, g_pen.horizon, request.start, request.dep_step, request.goal)
        h1 = graph.horizon + 1
        best_s, best_c = None, math.inf
        for s in range(request.dep_step, h1):
            st = request.goal * h1 + s
            if dist[st] < best_c - 1e-12:
                best_c, best_s = dist[st], st
        if best_s is None or best_c >= 1e29:
            break
        nodes, eids = _walk_back(best_s, prev_state, prev_edge, h1)
        route = RoutePlan(request.uav_id, request.dep_step, nodes, eids)
        push(route)
        for e, s in route.edges_steps(graph):
            u, v = graph.edge_pairs[e]
            if u != v:
                penalty[e] += graph.edge_a[e] * 0.5 + graph.step_dt * 0.25
    base = list(out)
    wait_edge = graph.edge_between(request.start, request.start)
    for delay in range(1, max_delay + 1):
        for route in base:
            if wait_edge is not None and route.arrival_step + delay <= graph.horizon:
                delayed = RoutePlan(route.uav_id, route.dep_step,
                                    [route.nodes[0]] * delay + list(route.nodes),
                                    [wait_edge] * delay + list(route.edges))
                push(delayed)
    if not out:
        raise PlanningError(f"goal unreachable within horizon for uav {request.uav_id}")
    return out[: k + max_delay * k]


def enumerate_routes(request: PlanRequest, graph: DynamicGraph,
                     max_steps: int, cap: int = 512) -> List[RoutePlan]:
    """All routes up to max_steps by DFS (tiny instances / oracles only)."""
    out: List[RoutePlan] = []
    stack = [(request.start, [request.start], [])]
    while stack:
        node, nodes, edges = stack.pop()
        if len(out) >= cap:
            break
        if node == request.goal:
            out.append(RoutePlan(request.uav_id, request.dep_step, list(nodes), list(edges)))
            continue
        if len(nodes) - 1 >= max_steps:
            continue
        step = request.dep_step + len(nodes) - 1
        succs = sorted(graph.out_edges(node), reverse=True)
        for v, e in succs:
            if step + 1 <= graph.horizon and not graph.blocked[v, step + 1]:
                stack.append((v, nodes + [v], edges + [e]))
    out.sort(key=lambda r: (len(r.nodes), tuple(r.nodes), tuple(r.edges)))
    return out


# ---------------------------------------------------------------------------
# MCTS over sequential route commitments

class _MctsNode:
    __slots__ = ("depth", "children", "visits", "value_sum", "parent", "choice")

    def __init__(self, depth: int, parent=None, choice: Optional[int] = None):
        self.depth = depth
        self.parent = parent
        self.choice = choice
        self.children: Dict[int, _MctsNode] = {}
        self.visits = 0
        self.value_sum = 0.0

    @property
    def mean(self) -> float:
        return self.value_sum / self.visits if self.visits else -math.inf


def _joint_value(graph: DynamicGraph, routes: List[RoutePlan], risk_weight: float
                 ) -> Tuple[float, float, int]:
    loads = accumulate_loads(graph, routes)
    total = sum(route_cost(graph, r, loads) for r in routes)
    conflicts = count_conflicts(graph, loads)
    rw = RISK_BIG if math.isinf(risk_weight) else risk_weight
    return -(total + rw * conflicts), total, conflicts


def mcts_plan(requests: Sequence[PlanRequest], graph: DynamicGraph,
              cfg: MctsConfig, seed: int,
              candidates: Optional[Dict[str, List[RoutePlan]]] = None) -> RouteAssignment:
    """Tree search over per-UAV route commitments (descending urgency order).

    Node depth d commits a candidate route for the d-th UAV; rollouts complete
    the rest with the configured policy; node value is the negative of
    (total cost + risk_weight * conflicts). Returns the best complete
    assignment seen. Deterministic given seed.
    """
    requests = sorted(requests, key=lambda r: (r.dep_step, r.uav_id))
    if len(requests) > 64:
        raise PlanningError("mcts_plan caps at 64 UAVs")
    if graph.horizon > 128:
        raise PlanningError("mcts_plan caps at horizon 128")
    if candidates is None:
        candidates = {r.uav_id: generate_candidates(r, graph, cfg.max_candidates)
                      for r in requests}
    cand_list = [candidates[r.uav_id] for r in requests]
    rng = np.random.default_rng(seed)
    n = len(requests)

    def rollout_complete(chosen: List[RoutePlan], depth: int) -> List[RoutePlan]:
        routes = list(chosen)
        if cfg.rollout_policy == "random":
            for d in range(depth, n):
                routes.append(cand_list[d][int(rng.integers(len(cand_list[d])))])
            return routes
        loads = accumulate_loads(graph, routes)
        for d in range(depth, n):
            best_i, best_c = 0, math.inf
            for i, cand in enumerate(cand_list[d]):
                c = route_cost(graph, cand, loads, include_self=True)
                over = 0
                for e, st in cand.edges_steps(graph):
                    if loads[graph.edge_link[e], st] + 1 > graph.link_capacity[graph.edge_link[e]]:
                        over += 1
                rw = RISK_BIG if math.isinf(cfg.risk_weight) else cfg.risk_weight
                c = c + rw * over
                if c < best_c - 1e-12:
                    best_c, best_i = c, i
            pick = cand_list[d][best_i]
            routes.append(pick)
            for e, st in pick.edges_steps(graph):
                loads[graph.edge_link[e], st] += 1
        return routes

    root = _MctsNode(0)
    best_routes: Optional[List[RoutePlan]] = None
    best_value = -math.inf
    best_cost = math.inf

    for _ in range(cfg.iterations):
        node = root
        chosen: List[RoutePlan] = []
        # Selection / expansion
        while node.depth < n:
            options = cand_list[node.depth]
            unvisited = [i for i in range(len(options)) if i not in node.children]
            if unvisited:
                i = unvisited[0]
                child = _MctsNode(node.depth + 1, node, i)
                node.children[i] = child
                node = child
                chosen.append(options[i])
                break
            # Prune under-visited, clearly-bad children.
            if cfg.prune_threshold > 0 and len(node.children) > 1:
                doomed = [i for i, ch in node.children.items()
                          if ch.visits < cfg.prune_threshold
                          and math.isfinite(best_cost)
                          and ch.visits > 0
                          and -ch.mean > (best_cost * (1.0 + cfg.prune_margin))]
                for i in doomed:
                    if len(node.children) > 1:
                        del node.children[i]
            total_visits = max(node.visits, 1)
            log_n = math.log(total_visits)
            best_i, best_score = None, -math.inf
            for i in sorted(node.children):
                ch = node.children[i]
                score = ch.mean + cfg.exploration_c * math.sqrt(2.0 * log_n / ch.visits)
                if score > best_score + 1e-12:
                    best_score, best_i = score, i
            node = node.children[best_i]
            chosen.append(cand_list[node.depth - 1][best_i])
        routes = rollout_complete(chosen, len(chosen))
        value, total, conflicts = _joint_value(graph, routes, cfg.risk_weight)
        if value > best_value + 1e-12:
            best_value = value
            best_routes = routes
            best_cost = total
        # Backpropagate
        walk = node
        while walk is not None:
            walk.visits += 1
            walk.value_sum += value
            walk = walk.parent

    assert best_routes is not None
    routes_map = {r.uav_id: r for r in best_routes}
    assignment = _assignment_from_routes(graph, routes_map)
    assignment.rounds = cfg.iterations
    return assignment
