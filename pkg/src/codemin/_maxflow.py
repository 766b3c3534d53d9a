"""Integral max-flow kernel for unit-capacity multigraphs.

Dinic's algorithm (BFS level graph + DFS blocking augmentation) over flat
arc arrays. Arc 2i is link i, arc 2i+1 its residual. The kernel is JIT
compiled with numba when available; `dinic_py` is the identical pure-Python
reference used both as fallback and as a cross-check in tests. A `cutoff`
stops augmenting once that much flow is reached (feasibility tests only
need `rate` units).
"""

from __future__ import annotations

import numpy as np

NO_CUTOFF = 1 << 30


def dinic_py(n, adj_ptr, adj_arc, arc_to, cap, s, t, cutoff=NO_CUTOFF):
    """Reference implementation over any indexable int sequences; mutates cap."""
    flow = 0
    level = [0] * n
    queue = [0] * n
    it = [0] * n
    path = []
    while flow < cutoff:
        for i in range(n):
            level[i] = -1
        level[s] = 0
        queue[0] = s
        qh, qt = 0, 1
        while qh < qt:
            u = queue[qh]
            qh += 1
            for k in range(adj_ptr[u], adj_ptr[u + 1]):
                a = adj_arc[k]
                v = arc_to[a]
                if cap[a] > 0 and level[v] < 0:
                    level[v] = level[u] + 1
                    queue[qt] = v
                    qt += 1
        if level[t] < 0:
            return flow
        for i in range(n):
            it[i] = adj_ptr[i]
        while flow < cutoff:
            # one augmenting path in the level graph; unit caps move 1 each
            path.clear()
            u = s
            found = False
            while True:
                if u == t:
                    found = True
                    break
                advanced = False
                while it[u] < adj_ptr[u + 1]:
                    a = adj_arc[it[u]]
                    v = arc_to[a]
                    if cap[a] > 0 and level[v] == level[u] + 1:
                        path.append(a)
                        u = v
                        advanced = True
                        break
                    it[u] += 1
                if advanced:
                    continue
                level[u] = -1  # dead end; prune
                if not path:
                    break
                a = path.pop()
                u = arc_to[a ^ 1]
            if not found:
                break
            for a in path:
                cap[a] -= 1
                cap[a ^ 1] += 1
            flow += 1
    return flow


try:
    from numba import njit
except ImportError:  # pragma: no cover - exercised only without the fast extra
    njit = None

if njit is not None:

    @njit(cache=True)
    def _dinic_jit(n, adj_ptr, adj_arc, arc_to, cap, s, t, cutoff):
        flow = 0
        level = np.empty(n, dtype=np.int32)
        queue = np.empty(n, dtype=np.int32)
        it = np.empty(n, dtype=np.int32)
        path = np.empty(2 * n + len(arc_to), dtype=np.int32)
        while flow < cutoff:
            level[:] = -1
            level[s] = 0
            queue[0] = s
            qh, qt = 0, 1
            while qh < qt:
                u = queue[qh]
                qh += 1
                for k in range(adj_ptr[u], adj_ptr[u + 1]):
                    a = adj_arc[k]
                    v = arc_to[a]
                    if cap[a] > 0 and level[v] < 0:
                        level[v] = level[u] + 1
                        queue[qt] = v
                        qt += 1
            if level[t] < 0:
                return flow
            for i in range(n):
                it[i] = adj_ptr[i]
            while flow < cutoff:
                plen = 0
                u = s
                found = False
                while True:
                    if u == t:
                        found = True
                        break
                    advanced = False
                    while it[u] < adj_ptr[u + 1]:
                        a = adj_arc[it[u]]
                        v = arc_to[a]
                        if cap[a] > 0 and level[v] == level[u] + 1:
                            path[plen] = a
                            plen += 1
                            u = v
                            advanced = True
                            break
                        it[u] += 1
                    if advanced:
                        continue
                    level[u] = -1
                    if plen == 0:
                        break
                    plen -= 1
                    a = path[plen]
                    u = arc_to[a ^ 1]
                if not found:
                    break
                for i in range(plen):
                    a = path[i]
                    cap[a] -= 1
                    cap[a ^ 1] += 1
                flow += 1
        return flow

HAVE_NUMBA = njit is not None


class FlowSolver:
    """Reusable max-flow solver over a fixed multigraph structure.

    Capacities vary per query (links are masked on and off by the
    evaluators), the arc arrays are built once.
    """

    def __init__(self, n_nodes: int, link_pairs):
        """`link_pairs`: iterable of (tail_index, head_index), position = link id."""
        pairs = list(link_pairs)
        m = len(pairs)
        self.n_nodes = n_nodes
        self.n_links = m
        arc_to = np.empty(2 * m, dtype=np.int32)
        adj_lists = [[] for _ in range(n_nodes)]
        for i, (u, v) in enumerate(pairs):
            arc_to[2 * i] = v
            arc_to[2 * i + 1] = u
            adj_lists[u].append(2 * i)
            adj_lists[v].append(2 * i + 1)
        adj_ptr = np.empty(n_nodes + 1, dtype=np.int32)
        adj_arc = np.empty(2 * m, dtype=np.int32)
        pos = 0
        for u in range(n_nodes):
            adj_ptr[u] = pos
            for a in adj_lists[u]:
                adj_arc[pos] = a
                pos += 1
        adj_ptr[n_nodes] = pos
        self.arc_to = arc_to
        self.adj_ptr = adj_ptr
        self.adj_arc = adj_arc
        base = np.zeros(2 * m, dtype=np.int32)
        base[0::2] = 1
        self.base_cap = base
        if not HAVE_NUMBA:
            self._arc_to_l = arc_to.tolist()
            self._adj_ptr_l = adj_ptr.tolist()
            self._adj_arc_l = adj_arc.tolist()

    def caps_with_links_disabled(self, disabled_link_ids) -> np.ndarray:
        caps = self.base_cap.copy()
        for lid in disabled_link_ids:
            caps[2 * lid] = 0
        return caps

    def max_flow(self, s: int, t: int, caps: np.ndarray | None = None,
                 cutoff: int = NO_CUTOFF) -> int:
        """Max s->t flow. `caps` (not mutated) defaults to all links enabled."""
        if s == t:
            return 0
        base = self.base_cap if caps is None else caps
        if HAVE_NUMBA:
            return int(_dinic_jit(self.n_nodes, self.adj_ptr, self.adj_arc,
                                  self.arc_to, base.copy(), s, t, cutoff))
        return dinic_py(self.n_nodes, self._adj_ptr_l, self._adj_arc_l,
                        self._arc_to_l, base.tolist(), s, t, cutoff)
