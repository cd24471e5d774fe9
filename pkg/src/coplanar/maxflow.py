"""Augmenting-path max-flow with search-tree reuse (Boykov-Kolmogorov).

The network keeps terminals implicit: each node carries a source capacity and
a sink capacity, and non-terminal arcs are stored in pairs with their reverse.
The kernel is compiled with numba; the graphs built by expansion moves have a
few thousand nodes and are solved hundreds of times per labeling step.
"""
import numpy as np
from numba import njit

NONE = -1
TERMINAL = -2
ORPHAN = -3
FREE, SRC, SNK = 0, 1, 2
INF_D = 1 << 60


class FlowNetwork:
    """Directed network with implicit source/sink terminals."""

    def __init__(self, n_nodes):
        self.n = int(n_nodes)
        self.source_cap = np.zeros(self.n)
        self.sink_cap = np.zeros(self.n)
        self._tails, self._heads, self._caps, self._rcaps = [], [], [], []

    def add_terminal(self, u, source_cap=0.0, sink_cap=0.0):
        if source_cap < 0 or sink_cap < 0:
            raise ValueError("capacities must be nonnegative")
        self.source_cap[u] += source_cap
        self.sink_cap[u] += sink_cap

    def add_terminals(self, nodes, source_caps, sink_caps):
        np.add.at(self.source_cap, nodes, source_caps)
        np.add.at(self.sink_cap, nodes, sink_caps)

    def add_edge(self, u, v, cap, rev_cap=0.0):
        if cap < 0 or rev_cap < 0:
            raise ValueError("capacities must be nonnegative")
        self.add_edges([u], [v], [cap], [rev_cap])

    def add_edges(self, tails, heads, caps, rev_caps=None):
        tails = np.asarray(tails, dtype=np.int64).ravel()
        caps = np.asarray(caps, dtype=float).ravel()
        rev = np.zeros_like(caps) if rev_caps is None else np.asarray(rev_caps, dtype=float).ravel()
        self._tails.append(tails)
        self._heads.append(np.asarray(heads, dtype=np.int64).ravel())
        self._caps.append(caps)
        self._rcaps.append(rev)

    @classmethod
    def from_arcs(cls, n_nodes, source, sink, arcs):
        """Build from an explicit-terminal arc list [(u, v, cap), ...].

        Returns the network over the non-terminal nodes, the node relabeling,
        and the capacity of direct source->sink arcs (always saturated).
        """
        inner = [u for u in range(n_nodes) if u not in (source, sink)]
        index = {u: i for i, u in enumerate(inner)}
        net = cls(len(inner))
        direct = 0.0
        tails, heads, caps = [], [], []
        for u, v, c in arcs:
            if c < 0:
                raise ValueError("capacities must be nonnegative")
            if u == v or u == sink or v == source:
                continue
            if u == source and v == sink:
                direct += c
            elif u == source:
                net.source_cap[index[v]] += c
            elif v == sink:
                net.sink_cap[index[u]] += c
            else:
                tails.append(index[u])
                heads.append(index[v])
                caps.append(c)
        if tails:
            net.add_edges(tails, heads, caps)
        return net, index, direct

    def _csr(self):
        if self._tails:
            t = np.concatenate(self._tails)
            h = np.concatenate(self._heads)
            c = np.concatenate(self._caps)
            r = np.concatenate(self._rcaps)
        else:
            t = h = np.zeros(0, dtype=np.int64)
            c = r = np.zeros(0)
        if np.any(c < 0) or np.any(r < 0):
            raise ValueError("capacities must be nonnegative")
        m = len(t)
        # arc 2e is t->h, arc 2e+1 its reverse
        src = np.empty(2 * m, dtype=np.int64)
        src[0::2], src[1::2] = t, h
        dst = np.empty(2 * m, dtype=np.int64)
        dst[0::2], dst[1::2] = h, t
        cap = np.empty(2 * m)
        cap[0::2], cap[1::2] = c, r
        order = np.argsort(src, kind="stable")
        pos = np.empty(2 * m, dtype=np.int64)
        pos[order] = np.arange(2 * m)
        sister_orig = np.arange(2 * m) ^ 1
        first = np.zeros(self.n + 1, dtype=np.int64)
        np.add.at(first, src + 1, 1)
        first = np.cumsum(first)
        return first, dst[order], cap[order].copy(), pos[sister_orig[order]]

    def maxflow(self):
        """Return (flow value, side) with side[u] = 0 for source side, 1 for sink side."""
        first, head, rcap, sister = self._csr()
        tr = self.source_cap - self.sink_cap
        base = float(np.minimum(self.source_cap, self.sink_cap).sum())
        flow, side = _bk(self.n, first, head, rcap, sister, tr.copy())
        return base + flow, side


def max_flow(net: FlowNetwork):
    return net.maxflow()


@njit(cache=True)
def _bk(n, first, head, rcap, sister, tr):
    parent = np.full(n, NONE, np.int64)
    tree = np.zeros(n, np.int8)
    ts = np.zeros(n, np.int64)
    dist = np.zeros(n, np.int64)
    active = np.zeros(n, np.bool_)
    queue = np.empty(max(n, 1), np.int64)
    qh = 0
    ql = 0
    orph = np.empty(max(n, 1), np.int64)
    oh = 0
    ol = 0
    for u in range(n):
        if tr[u] > 0:
            tree[u] = SRC
        elif tr[u] < 0:
            tree[u] = SNK
        else:
            continue
        parent[u] = TERMINAL
        dist[u] = 1
        active[u] = True
        queue[(qh + ql) % n] = u
        ql += 1

    flow = 0.0
    time = 0
    current = -1
    while True:
        i = -1
        if current >= 0:
            active[current] = False
            if parent[current] != NONE:
                i = current
            current = -1
        while i < 0 and ql > 0:
            u = queue[qh]
            qh = (qh + 1) % n
            ql -= 1
            active[u] = False
            if parent[u] != NONE:
                i = u
        if i < 0:
            break

        # growth
        mid = -1
        if tree[i] == SRC:
            for a in range(first[i], first[i + 1]):
                if rcap[a] > 0:
                    j = head[a]
                    if parent[j] == NONE:
                        tree[j] = SRC
                        parent[j] = sister[a]
                        ts[j] = ts[i]
                        dist[j] = dist[i] + 1
                        if not active[j]:
                            active[j] = True
                            queue[(qh + ql) % n] = j
                            ql += 1
                    elif tree[j] == SNK:
                        mid = a
                        break
                    elif ts[j] <= ts[i] and dist[j] > dist[i]:
                        parent[j] = sister[a]
                        ts[j] = ts[i]
                        dist[j] = dist[i] + 1
        else:
            for a in range(first[i], first[i + 1]):
                if rcap[sister[a]] > 0:
                    j = head[a]
                    if parent[j] == NONE:
                        tree[j] = SNK
                        parent[j] = sister[a]
                        ts[j] = ts[i]
                        dist[j] = dist[i] + 1
                        if not active[j]:
                            active[j] = True
                            queue[(qh + ql) % n] = j
                            ql += 1
                    elif tree[j] == SRC:
                        mid = sister[a]
                        break
                    elif ts[j] <= ts[i] and dist[j] > dist[i]:
                        parent[j] = sister[a]
                        ts[j] = ts[i]
                        dist[j] = dist[i] + 1

        time += 1
        if mid < 0:
            continue

        active[i] = True
        current = i

        # augment along source-tree path, mid arc, sink-tree path
        b = rcap[mid]
        u = head[sister[mid]]
        while parent[u] != TERMINAL:
            a2 = parent[u]
            if rcap[sister[a2]] < b:
                b = rcap[sister[a2]]
            u = head[a2]
        if tr[u] < b:
            b = tr[u]
        u = head[mid]
        while parent[u] != TERMINAL:
            a2 = parent[u]
            if rcap[a2] < b:
                b = rcap[a2]
            u = head[a2]
        if -tr[u] < b:
            b = -tr[u]

        rcap[sister[mid]] += b
        rcap[mid] -= b
        u = head[sister[mid]]
        while parent[u] != TERMINAL:
            a2 = parent[u]
            rcap[a2] += b
            rcap[sister[a2]] -= b
            nxt = head[a2]
            if rcap[sister[a2]] <= 0:
                rcap[sister[a2]] = 0.0
                parent[u] = ORPHAN
                oh = (oh - 1) % n
                orph[oh] = u
                ol += 1
            u = nxt
        tr[u] -= b
        if tr[u] <= 0:
            tr[u] = 0.0
            parent[u] = ORPHAN
            oh = (oh - 1) % n
            orph[oh] = u
            ol += 1
        u = head[mid]
        while parent[u] != TERMINAL:
            a2 = parent[u]
            rcap[sister[a2]] += b
            rcap[a2] -= b
            nxt = head[a2]
            if rcap[a2] <= 0:
                rcap[a2] = 0.0
                parent[u] = ORPHAN
                oh = (oh - 1) % n
                orph[oh] = u
                ol += 1
            u = nxt
        tr[u] += b
        if tr[u] >= 0:
            tr[u] = 0.0
            parent[u] = ORPHAN
            oh = (oh - 1) % n
            orph[oh] = u
            ol += 1
        flow += b

        # adoption
        while ol > 0:
            i2 = orph[oh]
            oh = (oh + 1) % n
            ol -= 1
            is_src = tree[i2] == SRC
            d_min = INF_D
            a_min = NONE
            for a0 in range(first[i2], first[i2 + 1]):
                ok = rcap[sister[a0]] > 0 if is_src else rcap[a0] > 0
                if not ok:
                    continue
                j = head[a0]
                if (tree[j] == SRC) != is_src or parent[j] == NONE:
                    continue
                d = 0
                jj = j
                while True:
                    if ts[jj] == time:
                        d += dist[jj]
                        break
                    a = parent[jj]
                    d += 1
                    if a == TERMINAL:
                        ts[jj] = time
                        dist[jj] = 1
                        break
                    if a == ORPHAN:
                        d = INF_D
                        break
                    jj = head[a]
                if d < INF_D:
                    if d < d_min:
                        a_min = a0
                        d_min = d
                    jj = j
                    while ts[jj] != time:
                        ts[jj] = time
                        dist[jj] = d
                        d -= 1
                        jj = head[parent[jj]]
            if a_min != NONE:
                parent[i2] = a_min
                ts[i2] = time
                dist[i2] = d_min + 1
            else:
                for a0 in range(first[i2], first[i2 + 1]):
                    j = head[a0]
                    if (tree[j] == SRC) != is_src or parent[j] == NONE:
                        continue
                    a = parent[j]
                    ok = rcap[sister[a0]] > 0 if is_src else rcap[a0] > 0
                    if ok and not active[j]:
                        active[j] = True
                        queue[(qh + ql) % n] = j
                        ql += 1
                    if a != TERMINAL and a != ORPHAN and head[a] == i2:
                        parent[j] = ORPHAN
                        orph[(oh + ol) % n] = j
                        ol += 1
                parent[i2] = NONE
                tree[i2] = FREE

    side = np.ones(n, np.int8)
    for u in range(n):
        if parent[u] != NONE and tree[u] == SRC:
            side[u] = 0
    return flow, side
