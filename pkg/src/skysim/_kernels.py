"""Hot numeric kernels, each with a numba path and a vectorized numpy path.

The active path is chosen at import time by skysim._accel (numba when
available, numpy when SKYSIM_FORCE_NUMPY=1 or numba is missing). Integer
outputs are identical between paths; float outputs agree to rounding.
"""

import numpy as np

from ._accel import NUMBA_ENABLED, maybe_njit

# ---------------------------------------------------------------------------
# Echo accumulation: H[k, m] += a_i * exp(j*dk_i*k) * exp(j*dm_i*m) per target


def _echo_accumulate_numpy(H, amps, dphi_k, dphi_m):
    n, m = H.shape
    k = np.arange(n)
    mm = np.arange(m)
    for i in range(amps.shape[0]):
        H += amps[i] * np.exp(1j * dphi_k[i] * k)[:, None] * np.exp(1j * dphi_m[i] * mm)[None, :]
    return H


@maybe_njit(parallel=False)
def _echo_accumulate_numba(H, amps, dphi_k, dphi_m):
    n, m = H.shape
    for i in range(amps.shape[0]):
        rot_k = np.exp(1j * dphi_k[i])
        rot_m = np.exp(1j * dphi_m[i])
        pk = amps[i]
        for kk in range(n):
            pm = pk
            for jj in range(m):
                H[kk, jj] += pm
                pm = pm * rot_m
            pk = pk * rot_k
    return H


echo_accumulate = _echo_accumulate_numba if NUMBA_ENABLED else _echo_accumulate_numpy


# ---------------------------------------------------------------------------
# Local peak scan: 3x3 local maxima (>= neighbors) strictly above threshold


def _local_peaks_numpy(power, thresh):
    padded = np.full((power.shape[0] + 2, power.shape[1] + 2), -1.0)
    padded[1:-1, 1:-1] = power
    c = padded[1:-1, 1:-1]
    mask = (c > thresh) & (c > 0)
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr == 0 and dc == 0:
                continue
            mask &= c >= padded[1 + dr:padded.shape[0] - 1 + dr, 1 + dc:padded.shape[1] - 1 + dc]
    rows, cols = np.nonzero(mask)
    return rows.astype(np.int64), cols.astype(np.int64)


@maybe_njit()
def _local_peaks_numba(power, thresh):
    nr, nc = power.shape
    rows = []
    cols = []
    for r in range(nr):
        for c in range(nc):
            v = power[r, c]
            if v <= thresh or v <= 0.0:
                continue
            ok = True
            for dr in range(-1, 2):
                for dc in range(-1, 2):
                    if dr == 0 and dc == 0:
                        continue
                    rr = r + dr
                    cc = c + dc
                    if 0 <= rr < nr and 0 <= cc < nc and power[rr, cc] > v:
                        ok = False
                        break
                if not ok:
                    break
            if ok:
                rows.append(r)
                cols.append(c)
    out_r = np.empty(len(rows), dtype=np.int64)
    out_c = np.empty(len(cols), dtype=np.int64)
    for i in range(len(rows)):
        out_r[i] = rows[i]
        out_c[i] = cols[i]
    return out_r, out_c


local_peaks = _local_peaks_numba if NUMBA_ENABLED else _local_peaks_numpy


# ---------------------------------------------------------------------------
# Time-expanded Dijkstra over a CSR graph with per-(edge, step) loads.
#
# State = node * (horizon+1) + step. Traversing edge e out of step s costs
# a[e] + b[e] * (loads[e, s] + 1) seconds and arrives at step s+1. blocked
# is node x step availability. Ties in cost break toward the smaller state
# id (lexicographic node id, then step).


def _dijkstra_impl(indptr, targets, edge_ids, a, b, loads, blocked,
                   n_nodes, horizon, start_node, start_step, goal_node):
    n_states = n_nodes * (horizon + 1)
    INF = 1e30
    dist = np.full(n_states, INF)
    prev_state = np.full(n_states, -1, dtype=np.int64)
    prev_edge = np.full(n_states, -1, dtype=np.int64)
    start = start_node * (horizon + 1) + start_step
    if blocked[start_node * (horizon + 1) + start_step] != 0:
        return dist, prev_state, prev_edge
    dist[start] = 0.0
    # binary heap of (cost, state) pairs; capacity bounds total pushes
    # (one per successful relaxation, <= states * max out-degree)
    heap_cost = np.empty(n_states * 8 + 8, dtype=np.float64)
    heap_state = np.empty(n_states * 8 + 8, dtype=np.int64)
    heap_cost[0] = 0.0
    heap_state[0] = start
    size = 1
    while size > 0:
        c0 = heap_cost[0]
        s0 = heap_state[0]
        size -= 1
        heap_cost[0] = heap_cost[size]
        heap_state[0] = heap_state[size]
        i = 0
        while True:
            lchild = 2 * i + 1
            rchild = lchild + 1
            best = i
            if lchild < size and (heap_cost[lchild] < heap_cost[best]
                                  or (heap_cost[lchild] == heap_cost[best]
                                      and heap_state[lchild] < heap_state[best])):
                best = lchild
            if rchild < size and (heap_cost[rchild] < heap_cost[best]
                                  or (heap_cost[rchild] == heap_cost[best]
                                      and heap_state[rchild] < heap_state[best])):
                best = rchild
            if best == i:
                break
            heap_cost[i], heap_cost[best] = heap_cost[best], heap_cost[i]
            heap_state[i], heap_state[best] = heap_state[best], heap_state[i]
            i = best
        if c0 > dist[s0]:
            continue
        node = s0 // (horizon + 1)
        step = s0 % (horizon + 1)
        if node == goal_node:
            continue  # states beyond the goal are never useful
        if step >= horizon:
            continue
        for ei in range(indptr[node], indptr[node + 1]):
            v = targets[ei]
            e = edge_ids[ei]
            if blocked[v * (horizon + 1) + step + 1] != 0:
                continue
            cost = c0 + a[e] + b[e] * (loads[e * horizon + step] + 1.0)
            s1 = v * (horizon + 1) + step + 1
            # First equal-cost relaxation wins; pop order is (cost, state)
            # lexicographic, so the smaller-id predecessor relaxes first.
            if cost < dist[s1]:
                dist[s1] = cost
                prev_state[s1] = s0
                prev_edge[s1] = e
                j = size
                heap_cost[j] = cost
                heap_state[j] = s1
                size += 1
                while j > 0:
                    parent = (j - 1) // 2
                    if (heap_cost[parent] > heap_cost[j]
                            or (heap_cost[parent] == heap_cost[j]
                                and heap_state[parent] > heap_state[j])):
                        heap_cost[parent], heap_cost[j] = heap_cost[j], heap_cost[parent]
                        heap_state[parent], heap_state[j] = heap_state[j], heap_state[parent]
                        j = parent
                    else:
                        break
    return dist, prev_state, prev_edge


time_expanded_dijkstra = maybe_njit()(_dijkstra_impl) if NUMBA_ENABLED else _dijkstra_impl


# ---------------------------------------------------------------------------
# Carrier-phase candidate evaluation: per integer-vector Gauss-Newton.


def _phase_gauss_newton_numpy(stations, phases, n_vecs, wavelength, p0, iters=15):
    """Batched GN over candidate integer vectors.

    stations (k,3), phases (k,), n_vecs (n_cand,k), p0 (n_cand,3) starting
    points. Returns refined positions (n_cand,3) and objectives (n_cand,).
    """
    p = p0.copy()
    rng_target = phases[None, :] + n_vecs  # (n_cand, k) target ranges in cycles
    for _ in range(iters):
        diff = p[:, None, :] - stations[None, :, :]          # (n, k, 3)
        d = np.sqrt(np.sum(diff * diff, axis=2))             # (n, k)
        r = rng_target - d / wavelength                      # residual, cycles
        u = diff / np.maximum(d, 1e-12)[:, :, None]
        J = -u / wavelength                                  # (n, k, 3)
        JtJ = np.einsum("nki,nkj->nij", J, J)
        Jtr = np.einsum("nki,nk->ni", J, r)
        JtJ += 1e-12 * np.eye(3)[None, :, :]
        step = np.linalg.solve(JtJ, Jtr[..., None])[..., 0]
        p = p - step
    diff = p[:, None, :] - stations[None, :, :]
    d = np.sqrt(np.sum(diff * diff, axis=2))
    r = rng_target - d / wavelength
    return p, np.sum(r * r, axis=1)


@maybe_njit()
def _phase_gauss_newton_numba(stations, phases, n_vecs, wavelength, p0, iters=15):
    n_cand = n_vecs.shape[0]
    k = stations.shape[0]
    out_p = np.empty((n_cand, 3))
    out_obj = np.empty(n_cand)
    for idx in range(n_cand):
        p = p0[idx].copy()
        for _ in range(iters):
            JtJ = np.zeros((3, 3))
            Jtr = np.zeros(3)
            for s in range(k):
                dx = p[0] - stations[s, 0]
                dy = p[1] - stations[s, 1]
                dz = p[2] - stations[s, 2]
                d = np.sqrt(dx * dx + dy * dy + dz * dz)
                if d < 1e-12:
                    d = 1e-12
                r = phases[s] + n_vecs[idx, s] - d / wavelength
                jx = -dx / (d * wavelength)
                jy = -dy / (d * wavelength)
                jz = -dz / (d * wavelength)
                JtJ[0, 0] += jx * jx
                JtJ[0, 1] += jx * jy
                JtJ[0, 2] += jx * jz
                JtJ[1, 1] += jy * jy
                JtJ[1, 2] += jy * jz
                JtJ[2, 2] += jz * jz
                Jtr[0] += jx * r
                Jtr[1] += jy * r
                Jtr[2] += jz * r
            JtJ[1, 0] = JtJ[0, 1]
            JtJ[2, 0] = JtJ[0, 2]
            JtJ[2, 1] = JtJ[1, 2]
            for di in range(3):
                JtJ[di, di] += 1e-12
            step = np.linalg.solve(JtJ, Jtr)
            p = p - step
        obj = 0.0
        for s in range(k):
            dx = p[0] - stations[s, 0]
            dy = p[1] - stations[s, 1]
            dz = p[2] - stations[s, 2]
            d = np.sqrt(dx * dx + dy * dy + dz * dz)
            r = phases[s] + n_vecs[idx, s] - d / wavelength
            obj += r * r
        out_p[idx] = p
        out_obj[idx] = obj
    return out_p, out_obj


phase_gauss_newton = _phase_gauss_newton_numba if NUMBA_ENABLED else _phase_gauss_newton_numpy
