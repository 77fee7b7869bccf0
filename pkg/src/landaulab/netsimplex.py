"""Exact solver for dense transportation problems.

Primal network simplex on the complete bipartite graph between two weighted
point sets, specialized to the uncapacitated transportation problem

    min  sum_ij C[i, j] x[i, j]
    s.t. sum_j x[i, j] = a[i],   sum_i x[i, j] = b[j],   x >= 0.

The spanning tree is kept in the depth-first "thread" representation
(parent / next / prev / last / size arrays) so that every pivot costs time
proportional to the cycle length plus the re-hung subtree, while entering
arcs are priced with a vectorized Dantzig rule over cyclic row blocks
(Bland's rule across blocks prevents stalling).  Tree arcs are keyed by
their child node, which is enough because an uncapacitated non-tree arc
always carries zero flow.

Costs and weights are floats; optimality is certified a posteriori by a
full reduced-cost scan (`SimplexResult.dual_gap`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["SimplexResult", "solve_transport"]

# Arcs per pricing block; one block is one dense numpy reduced-cost scan.
_BLOCK_ARCS = 1 << 17


@dataclass
class SimplexResult:
    cost: float
    flow_rows: np.ndarray     # source index per positive basic arc
    flow_cols: np.ndarray     # sink index per positive basic arc
    flow_vals: np.ndarray     # flow values (same length)
    potential_source: np.ndarray
    potential_sink: np.ndarray
    dual_gap: float           # |primal - dual| of the certified pair
    min_reduced_cost: float   # most negative reduced cost at termination
    pivots: int

    def plan_matrix(self, n: int, m: int) -> np.ndarray:
        """Materialize the optimal plan as a dense (n, m) array."""
        pi = np.zeros((n, m))
        pi[self.flow_rows, self.flow_cols] = self.flow_vals
        return pi


def solve_transport(a, b, cost, tol: float = 1e-11, max_pivots: int | None = None) -> SimplexResult:
    """Solve the dense transportation problem exactly.

    Parameters
    ----------
    a, b : array_like
        Source and sink weights (positive, equal sums).
    cost : array_like, shape (len(a), len(b))
        Dense cost matrix.
    tol : float
        Relative entering threshold: arcs enter while their reduced cost is
        below ``-tol * max(1, |C|_max)``.
    """
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    C = np.ascontiguousarray(cost, dtype=np.float64)
    n, m = C.shape
    if a.shape != (n,) or b.shape != (m,):
        raise ValueError("cost matrix shape does not match weight vectors")
    if np.any(a < 0) or np.any(b < 0):
        raise ValueError("negative weights")
    if abs(a.sum() - b.sum()) > 1e-9 * max(a.sum(), 1.0):
        raise ValueError(f"unbalanced marginals: {a.sum():.12g} vs {b.sum():.12g}")

    N = n + m                 # non-root nodes: sources 0..n-1, sinks n..N-1
    root = N
    cmax = float(np.abs(C).max()) if C.size else 1.0
    big = 1.0 + 0.5 * (N + 1) * max(cmax, 1.0)
    enter_tol = -tol * max(1.0, cmax)

    # --- initial strongly feasible tree: every node hangs off the root via
    # an artificial arc (source->root carrying a[i], root->sink carrying b[j]).
    parent = [root] * N + [-1]
    arc = [n * m + k for k in range(N)] + [-1]   # arc id of edge to parent
    flow = list(a) + list(b) + [0.0]             # keyed by child node
    nxt = list(range(1, N)) + [root, 0]          # depth-first thread
    prv = [root] + list(range(0, N - 1)) + [N - 1]
    last = list(range(N)) + [N - 1]
    size = [1] * N + [N + 1]
    pot = np.empty(N + 1)
    pot[:n] = big
    pot[n:N] = -big
    pot[root] = 0.0

    def arc_ends(aid):
        """(source node, sink node) of an arc id, artificials included."""
        if aid < n * m:
            return aid // m, n + aid % m
        k = aid - n * m
        return (k, root) if k < n else (root, k)

    # --- vectorized cyclic block pricing -----------------------------------
    rows_per_block = max(1, _BLOCK_ARCS // m)
    nblocks = (n + rows_per_block - 1) // rows_per_block
    state = {"block": 0}

    def find_entering():
        misses = 0
        blk = state["block"]
        while misses < nblocks:
            r0 = blk * rows_per_block
            r1 = min(r0 + rows_per_block, n)
            rc = C[r0:r1] - pot[r0:r1, None]
            rc += pot[None, n:N]
            k = int(np.argmin(rc))
            blk = (blk + 1) % nblocks
            if rc.flat[k] < enter_tol:
                state["block"] = blk
                i = r0 + k // m
                j = k % m
                return i * m + j, i, n + j
            misses += 1
        return None

    # --- tree mechanics (thread representation) ----------------------------
    def find_apex(p, q):
        sp, sq = size[p], size[q]
        while True:
            while sp < sq:
                p = parent[p]
                sp = size[p]
            while sp > sq:
                q = parent[q]
                sq = size[q]
            if sp == sq:
                if p == q:
                    return p
                p = parent[p]
                sp = size[p]
                q = parent[q]
                sq = size[q]

    def trace_path(p, w):
        nodes = [p]
        edges = []
        while p != w:
            edges.append(p)         # tree edge keyed by child node p
            p = parent[p]
            nodes.append(p)
        return nodes, edges

    def remove_edge(s, t):
        size_t = size[t]
        prev_t = prv[t]
        last_t = last[t]
        next_last_t = nxt[last_t]
        parent[t] = -1
        arc[t] = -1
        flow[t] = 0.0
        nxt[prev_t] = next_last_t
        prv[next_last_t] = prev_t
        nxt[last_t] = t
        prv[t] = last_t
        while s != -1:
            size[s] -= size_t
            if last[s] == last_t:
                last[s] = prev_t
            s = parent[s]

    def make_root(q):
        ancestors = []
        u = q
        while u != -1:
            ancestors.append(u)
            u = parent[u]
        ancestors.reverse()
        for p, q2 in zip(ancestors, ancestors[1:]):
            size_p = size[p]
            last_p = last[p]
            prev_q = prv[q2]
            last_q = last[q2]
            next_last_q = nxt[last_q]
            parent[p] = q2
            parent[q2] = -1
            arc[p] = arc[q2]
            arc[q2] = -1
            flow[p] = flow[q2]
            flow[q2] = 0.0
            size[p] = size_p - size[q2]
            size[q2] = size_p
            nxt[prev_q] = next_last_q
            prv[next_last_q] = prev_q
            nxt[last_q] = q2
            prv[q2] = last_q
            if last_p == last_q:
                last[p] = prev_q
                last_p = prev_q
            prv[p] = last_q
            nxt[last_q] = p
            nxt[last_p] = q2
            prv[q2] = last_p
            last[q2] = last_p

    def add_edge(aid, p, q, f):
        last_p = last[p]
        next_last_p = nxt[last_p]
        size_q = size[q]
        last_q = last[q]
        parent[q] = p
        arc[q] = aid
        flow[q] = f
        nxt[last_p] = q
        prv[q] = last_p
        prv[next_last_p] = last_q
        nxt[last_q] = next_last_p
        while p != -1:
            size[p] += size_q
            if last[p] == last_p:
                last[p] = last_q
            p = parent[p]

    def update_potentials(aid, p, q):
        src, snk = arc_ends(aid)
        cval = C[src, snk - n] if aid < n * m else big
        if q == snk:
            d = pot[p] - cval - pot[q]
        else:
            d = pot[p] + cval - pot[q]
        u = q
        stop = nxt[last[q]]
        while u != stop:
            pot[u] += d
            u = nxt[u]

    # --- pivot loop ---------------------------------------------------------
    pivots = 0
    limit = max_pivots if max_pivots is not None else 200 * (N + 1) + 100000
    while True:
        found = find_entering()
        if found is None:
            break
        aid, p, q = found
        pivots += 1
        if pivots > limit:
            raise RuntimeError(f"network simplex exceeded {limit} pivots")

        apex = find_apex(p, q)
        _, edges_p = trace_path(p, apex)
        _, edges_q = trace_path(q, apex)
        # Cycle orientation follows the entering arc p -> q, then q-side
        # upward to the apex, then p-side downward back to p.  For a tree
        # edge keyed by its child t:
        #   q-side (upward):   aligned iff arc points child -> parent
        #   p-side (downward): aligned iff arc points parent -> child
        # Only edges running against the cycle direction bound the step.
        theta = np.inf
        leave = -1          # child node keying the leaving edge
        leave_side = 1
        # Tie-break order of the classic leaving-arc rule: q-side edges from
        # the apex down to q first, then p-side edges from p up to the apex;
        # first strict minimum wins (keeps the tree strongly feasible).
        for t in reversed(edges_q):
            src, _ = arc_ends(arc[t])
            if src != t and flow[t] < theta:
                theta = flow[t]
                leave, leave_side = t, 1
        for t in edges_p:
            src, _ = arc_ends(arc[t])
            if src == t and flow[t] < theta:
                theta = flow[t]
                leave, leave_side = t, 0

        # Augment theta around the cycle (entering arc gains +theta).
        if theta > 0.0 and theta != np.inf:
            for t in edges_q:
                src, _ = arc_ends(arc[t])
                flow[t] += theta if src == t else -theta
                if flow[t] < 0.0:
                    flow[t] = 0.0
            for t in edges_p:
                src, _ = arc_ends(arc[t])
                flow[t] += -theta if src == t else theta
                if flow[t] < 0.0:
                    flow[t] = 0.0
        if theta == np.inf:
            raise RuntimeError("unbounded transportation cycle (negative weights?)")
        if leave == -1:
            raise RuntimeError("no leaving edge found on augmenting cycle")

        # Remove the leaving edge, re-root the detached subtree at the
        # entering arc's endpoint inside it, and attach it through that arc.
        t = leave
        s = parent[t]
        ep, eq = p, q
        if leave_side == 0:
            # Leaving edge on the p side: the detached subtree contains p.
            ep, eq = eq, ep
        remove_edge(s, t)
        make_root(eq)
        add_edge(aid, ep, eq, theta)
        update_potentials(aid, ep, eq)

    # --- extract solution ----------------------------------------------------
    rows, cols, vals = [], [], []
    art_flow = 0.0
    for t in range(N):
        aid = arc[t]
        if aid < 0:
            continue
        f = flow[t]
        if aid >= n * m:
            art_flow = max(art_flow, abs(f))
            continue
        if f > 0.0:
            rows.append(aid // m)
            cols.append(aid % m)
            vals.append(f)
    if art_flow > 1e-9 * max(1.0, a.sum()):
        raise RuntimeError("artificial arc kept positive flow; problem infeasible")

    rows = np.asarray(rows, dtype=np.intp)
    cols = np.asarray(cols, dtype=np.intp)
    vals = np.asarray(vals)
    primal = float(np.dot(C[rows, cols], vals)) if vals.size else 0.0

    u = pot[:n].copy()
    v = -pot[n:N].copy()
    shift = 0.0
    if n:
        # Remove the big-M gauge so duals are reported in cost units.
        shift = u.max()
        u -= shift
        v += shift
    dual = float(np.dot(u, a) + np.dot(v, b))
    min_rc = float((C - u[:, None] - v[None, :]).min()) if C.size else 0.0

    return SimplexResult(
        cost=primal,
        flow_rows=rows,
        flow_cols=cols,
        flow_vals=vals,
        potential_source=u,
        potential_sink=v,
        dual_gap=abs(primal - dual),
        min_reduced_cost=min_rc,
        pivots=pivots,
    )
