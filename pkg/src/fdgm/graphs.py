"""Time-varying undirected graphs, weight matrices, and spectral utilities.

Nodes are numbered 0..n-1 internally; the text serialization format uses
1-based ids (see :func:`write_sequence` / :func:`read_sequence`).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleWindow

ROW_SUM_TOL = 1e-12
PSD_TOL = 1e-10


def _normalize_edges(n, edges):
    out = set()
    for e in edges:
        i, j = e
        i, j = int(i), int(j)
        if i == j:
            raise ValueError(f"self-loop on node {i}")
        if not (0 <= i < n and 0 <= j < n):
            raise ValueError(f"edge ({i},{j}) out of range for n={n}")
        out.add((min(i, j), max(i, j)))
    if not out:
        raise ValueError("edge set must be nonempty")
    return tuple(sorted(out))


@dataclass(frozen=True)
class GraphSnapshot:
    """One time slice of the interaction graph: n nodes and an undirected,
    nonempty edge set without self-loops."""

    n: int
    edges: tuple

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("need at least 2 nodes")
        object.__setattr__(self, "edges", _normalize_edges(self.n, self.edges))

    def neighbors(self, i):
        return tuple(sorted({b for a, b in self.edges if a == i}
                            | {a for a, b in self.edges if b == i}))

    def degrees(self):
        deg = np.zeros(self.n, dtype=int)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    def adjacency(self):
        a = np.zeros((self.n, self.n))
        for i, j in self.edges:
            a[i, j] = a[j, i] = 1.0
        return a

    def is_connected(self):
        return connected_components(self.n, self.edges) == 1


def connected_components(n, edges):
    """Number of connected components, by traversal."""
    adj = [[] for _ in range(n)]
    for i, j in edges:
        adj[i].append(j)
        adj[j].append(i)
    seen = [False] * n
    comps = 0
    for s in range(n):
        if seen[s]:
            continue
        comps += 1
        stack = [s]
        seen[s] = True
        while stack:
            u = stack.pop()
            for v in adj[u]:
                if not seen[v]:
                    seen[v] = True
                    stack.append(v)
    return comps


@dataclass(frozen=True)
class WeightMatrix:
    """Symmetric PSD interaction-weight matrix with zero row sums.

    Off-diagonal entries are ``-h_ij`` on the snapshot's edges (with
    ``h_ij`` in ``[h_lower, h_upper]``) and zero elsewhere; each diagonal
    entry equals the negated off-diagonal row sum.
    """

    matrix: np.ndarray
    h_lower: float
    h_upper: float

    def __post_init__(self):
        if not (0 < self.h_lower <= self.h_upper < np.inf):
            raise ValueError("need 0 < h_lower <= h_upper < inf")

    def validate(self, snapshot=None):
        """Raise AssertionError if any structural invariant is violated."""
        h = self.matrix
        assert np.array_equal(h, h.T), "not symmetric"
        assert np.max(np.abs(h.sum(axis=1))) <= ROW_SUM_TOL, "row sums not zero"
        assert np.linalg.eigvalsh(h)[0] >= -PSD_TOL, "not PSD"
        if snapshot is not None:
            off = {(i, j) for i in range(snapshot.n) for j in range(i + 1, snapshot.n)
                   if h[i, j] != 0.0}
            assert off == set(snapshot.edges), "sparsity pattern mismatch"
            for i, j in snapshot.edges:
                assert -self.h_upper <= h[i, j] <= -self.h_lower, \
                    f"weight {-h[i, j]} outside [{self.h_lower},{self.h_upper}]"


def laplacian_weights(g: GraphSnapshot) -> WeightMatrix:
    """Graph Laplacian: degree on the diagonal, -1 on edges."""
    h = np.diag(g.degrees().astype(float)) - g.adjacency()
    return WeightMatrix(h, 1.0, 1.0)


def metropolis_weights(g: GraphSnapshot, lipschitz) -> WeightMatrix:
    """Metropolis weights: edge {i,j} gets 1/max(|N_i|L_i, |N_j|L_j).

    ``lipschitz`` is the per-node array of gradient Lipschitz constants,
    all positive.
    """
    lips = np.asarray(lipschitz, dtype=float)
    if lips.shape != (g.n,):
        raise ValueError(f"lipschitz must have shape ({g.n},)")
    if np.any(lips <= 0):
        raise ValueError("all Lipschitz constants must be positive")
    deg = g.degrees()
    h = np.zeros((g.n, g.n))
    used = []
    for i, j in g.edges:
        w = 1.0 / max(deg[i] * lips[i], deg[j] * lips[j])
        h[i, j] = h[j, i] = -w
        used.append(w)
    np.fill_diagonal(h, -h.sum(axis=1))
    h_lower = 1.0 / np.max(deg * lips)
    return WeightMatrix(h, h_lower, max(used))


@dataclass
class GraphSequence:
    """Ordered time-varying edge sets with a claimed connectivity window.

    ``window`` is the length B such that every union graph over
    [kB, (k+1)B-1] is claimed connected; verify with
    :func:`verify_b_connectivity`.
    """

    snapshots: list
    window: int
    descriptor: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if not self.snapshots:
            raise ValueError("empty sequence")
        n = self.snapshots[0].n
        if any(s.n != n for s in self.snapshots):
            raise ValueError("all snapshots must share the same node count")

    @property
    def n(self):
        return self.snapshots[0].n

    def __len__(self):
        return len(self.snapshots)

    def __getitem__(self, k):
        return self.snapshots[k]

    def union(self, start, stop):
        """Union graph over snapshots [start, stop)."""
        edges = set()
        for s in self.snapshots[start:stop]:
            edges.update(s.edges)
        return GraphSnapshot(self.n, tuple(edges))


def verify_b_connectivity(seq: GraphSequence, window: int, horizon: int) -> bool:
    """True iff every length-`window` union graph within `horizon` steps
    is connected (by traversal). `horizon` must be a multiple of `window`."""
    if horizon % window != 0:
        raise ValueError("horizon must be a multiple of the window length")
    if horizon > len(seq):
        raise ValueError("horizon exceeds materialized sequence length")
    for k in range(horizon // window):
        if not seq.union(k * window, (k + 1) * window).is_connected():
            return False
    return True


def _random_spanning_tree(n, rng):
    # attach each node to a uniformly chosen earlier node in a random order
    order = rng.permutation(n)
    edges = []
    for idx in range(1, n):
        parent = order[rng.integers(0, idx)]
        edges.append((int(min(order[idx], parent)), int(max(order[idx], parent))))
    return edges


def _ring_edges(n):
    if n == 2:
        return [(0, 1)]
    return [(i, (i + 1) % n) for i in range(n)]


def generate_sequence(kind, n, window, horizon, seed, activation_prob=0.3,
                      extra_edges=None) -> GraphSequence:
    """Deterministic seeded generator for B-connected test sequences.

    kind
        ``gossip``        one edge per step; a spanning tree's edges are
                          scheduled inside every window (needs window >= n-1).
        ``windowed_tree`` random subsets of a fixed connected base graph,
                          with one spanning tree's edges scheduled per window.
        ``full_static``   the same ring graph every step (window 1 suffices).
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    if window < 1:
        raise ValueError("window must be >= 1")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    rng = np.random.default_rng(seed)
    descriptor = {"kind": kind, "n": n, "window": window, "horizon": horizon,
                  "seed": seed}

    if kind == "full_static":
        g = GraphSnapshot(n, tuple(_ring_edges(n)))
        return GraphSequence([g] * horizon, window, descriptor)

    if kind == "gossip":
        if window < n - 1:
            raise InfeasibleWindow(
                f"gossip needs window >= n-1 ({n - 1}), got {window}")
        steps = []
        n_windows = -(-horizon // window)
        for _ in range(n_windows):
            tree = _random_spanning_tree(n, rng)
            slots = list(rng.choice(window, size=n - 1, replace=False))
            per_slot = {}
            for slot, edge in zip(slots, rng.permutation(len(tree))):
                per_slot[int(slot)] = tree[edge]
            for t in range(window):
                if t in per_slot:
                    e = per_slot[t]
                else:
                    i = int(rng.integers(0, n))
                    j = int(rng.integers(0, n - 1))
                    j = j + 1 if j >= i else j
                    e = (min(i, j), max(i, j))
                steps.append(GraphSnapshot(n, (e,)))
        return GraphSequence(steps[:horizon], window, descriptor)

    if kind == "windowed_tree":
        if extra_edges is None:
            extra_edges = n // 2
        base = set(_ring_edges(n))
        while len(base) < min(len(_ring_edges(n)) + extra_edges,
                              n * (n - 1) // 2):
            i = int(rng.integers(0, n))
            j = int(rng.integers(0, n - 1))
            j = j + 1 if j >= i else j
            base.add((min(i, j), max(i, j)))
        base = sorted(base)
        tree = _bfs_tree_edges(n, base)
        steps = []
        n_windows = -(-horizon // window)
        descriptor["activation_prob"] = activation_prob
        for _ in range(n_windows):
            window_edges = [set() for _ in range(window)]
            for e in tree:
                window_edges[int(rng.integers(0, window))].add(e)
            for t in range(window):
                mask = rng.random(len(base)) < activation_prob
                window_edges[t].update(e for e, m in zip(base, mask) if m)
                if not window_edges[t]:
                    window_edges[t].add(base[int(rng.integers(0, len(base)))])
                steps.append(GraphSnapshot(n, tuple(window_edges[t])))
        return GraphSequence(steps[:horizon], window, descriptor)

    raise ValueError(f"unknown sequence kind {kind!r}")


def _bfs_tree_edges(n, edges):
    adj = [[] for _ in range(n)]
    for i, j in edges:
        adj[i].append(j)
        adj[j].append(i)
    for a in adj:
        a.sort()
    seen = [False] * n
    seen[0] = True
    queue = [0]
    tree = []
    while queue:
        u = queue.pop(0)
        for v in adj[u]:
            if not seen[v]:
                seen[v] = True
                tree.append((min(u, v), max(u, v)))
                queue.append(v)
    return tree


def bfs_spanning_tree(g: GraphSnapshot) -> GraphSnapshot:
    """BFS spanning tree rooted at node 0, children visited in ascending
    order. `g` must be connected."""
    if not g.is_connected():
        raise ValueError("graph is not connected")
    return GraphSnapshot(g.n, tuple(_bfs_tree_edges(g.n, g.edges)))


def spectral_radius(wm) -> float:
    """Largest eigenvalue of a weight matrix (or plain symmetric array)."""
    h = wm.matrix if isinstance(wm, WeightMatrix) else np.asarray(wm)
    return float(np.linalg.eigvalsh(h)[-1])


def algebraic_connectivity(laplacian) -> float:
    """Second-smallest eigenvalue of a Laplacian (or any weight matrix)."""
    h = laplacian.matrix if isinstance(laplacian, WeightMatrix) else np.asarray(laplacian)
    return float(np.linalg.eigvalsh(h)[1])


def max_degree(g: GraphSnapshot) -> int:
    return int(g.degrees().max())


def write_sequence(seq: GraphSequence, path):
    """Line-oriented text format: header ``n B horizon``, then one line per
    step with space-separated ``i-j`` edge tokens (1-based node ids)."""
    lines = [f"{seq.n} {seq.window} {len(seq)}"]
    for s in seq.snapshots:
        lines.append(" ".join(f"{i + 1}-{j + 1}" for i, j in s.edges))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_sequence(path) -> GraphSequence:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    n, window, horizon = (int(tok) for tok in lines[0].split())
    if len(lines) - 1 != horizon:
        raise ValueError(f"expected {horizon} snapshot lines, found {len(lines) - 1}")
    snaps = []
    for ln in lines[1:]:
        edges = []
        for tok in ln.split():
            a, b = tok.split("-")
            edges.append((int(a) - 1, int(b) - 1))
        snaps.append(GraphSnapshot(n, tuple(edges)))
    return GraphSequence(snaps, window, {"kind": "file", "path": str(path)})
