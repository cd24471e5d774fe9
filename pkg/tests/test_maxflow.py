from collections import deque

import numpy as np
import pytest

from coplanar.maxflow import FlowNetwork, max_flow


def solve_arcs(n, s, t, arcs):
    net, index, direct = FlowNetwork.from_arcs(n, s, t, arcs)
    flow, side = max_flow(net)
    return flow + direct, net, index, side


def edmonds_karp(n, s, t, arcs):
    """Shortest augmenting paths on a dense residual matrix."""
    cap = np.zeros((n, n))
    for u, v, c in arcs:
        cap[u, v] += c
    flow = 0.0
    while True:
        prev = [-1] * n
        prev[s] = s
        q = deque([s])
        while q and prev[t] < 0:
            u = q.popleft()
            for v in range(n):
                if prev[v] < 0 and cap[u, v] > 1e-12:
                    prev[v] = u
                    q.append(v)
        if prev[t] < 0:
            return flow
        b, v = np.inf, t
        while v != s:
            b = min(b, cap[prev[v], v])
            v = prev[v]
        v = t
        while v != s:
            cap[prev[v], v] -= b
            cap[v, prev[v]] += b
            v = prev[v]
        flow += b


def test_single_arc():
    flow, *_ = solve_arcs(2, 0, 1, [(0, 1, 3.0)])
    assert flow == 3.0


def test_diamond():
    s, a, b, t = range(4)
    flow, *_ = solve_arcs(4, s, t, [(s, a, 2), (s, b, 2), (a, t, 1), (b, t, 1)])
    assert flow == 2.0


def test_negative_capacity_rejected():
    net = FlowNetwork(2)
    with pytest.raises(ValueError):
        net.add_edge(0, 1, -1.0)


def _cut_capacity(arcs, s, t, index, side):
    def sink_side(u):
        if u == s:
            return False
        if u == t:
            return True
        return bool(side[index[u]])

    return sum(c for u, v, c in arcs if not sink_side(u) and sink_side(v))


@pytest.mark.parametrize("seed", range(50))
def test_random_networks_match_edmonds_karp(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 12))
    m = int(rng.integers(n, 4 * n))
    arcs = [(int(u), int(v), float(rng.integers(0, 20))) for u, v in rng.integers(0, n, (m, 2)) if u != v]
    s, t = 0, n - 1
    flow, net, index, side = solve_arcs(n, s, t, arcs)
    assert flow == pytest.approx(edmonds_karp(n, s, t, arcs), abs=1e-9)
    # the returned partition is a minimum cut
    assert _cut_capacity(arcs, s, t, index, side) == pytest.approx(flow, abs=1e-9)


def test_terminal_only_network():
    net = FlowNetwork(3)
    net.source_cap[:] = [1.0, 5.0, 0.0]
    net.sink_cap[:] = [4.0, 2.0, 3.0]
    flow, side = net.maxflow()
    assert flow == 3.0
    assert side.tolist() == [1, 0, 1]
