"""Graph-cut MRF optimization: max-flow, alpha-expansion, grid helpers.

Labelings are optimized by repeated binary expansion moves.  Each move asks
every pixel "keep your label or switch to alpha" and answers all pixels at
once with one min-cut.  The pairwise cost is truncated linear in label index,
V(a, b) = min(|a - b|, tau) * weight, which is a metric, so every move graph
is submodular and solvable exactly.

Capacities are floats at the surface; the cut itself runs on integers
(capacity * 2^16) because the underlying solver requires them.  Moves are
accepted only when the exact float energy strictly decreases, so the
quantization can never push the energy up or flip a tie.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import breadth_first_order, maximum_flow

from .config import Params

log = logging.getLogger(__name__)

FLOW_SCALE = 65536  # capacity quantization (2^16)


class FlowNetwork:
    """Directed flow network with float capacities and designated terminals."""

    def __init__(self, num_nodes, source, sink):
        if not (0 <= source < num_nodes and 0 <= sink < num_nodes):
            raise ValueError("terminals must be node indices")
        if source == sink:
            raise ValueError("source and sink must differ")
        self.num_nodes = num_nodes
        self.source = source
        self.sink = sink
        self._us = []
        self._vs = []
        self._caps = []

    def add_arc(self, u, v, cap):
        if cap < 0:
            raise ValueError("capacities must be nonnegative")
        if u == v:
            raise ValueError("self-arcs not allowed")
        self._us.append(u)
        self._vs.append(v)
        self._caps.append(float(cap))

    def add_arcs(self, us, vs, caps):
        caps = np.asarray(caps, dtype=np.float64)
        if np.any(caps < 0):
            raise ValueError("capacities must be nonnegative")
        us = np.asarray(us)
        vs = np.asarray(vs)
        if np.any(us == vs):
            raise ValueError("self-arcs not allowed")
        self._us.extend(int(u) for u in us)
        self._vs.extend(int(v) for v in vs)
        self._caps.extend(float(c) for c in caps)

    def arcs(self):
        return (np.asarray(self._us, dtype=np.int64),
                np.asarray(self._vs, dtype=np.int64),
                np.asarray(self._caps, dtype=np.float64))

    def to_dimacs(self):
        """DIMACS max-flow text dump (1-based node ids)."""
        us, vs, caps = self.arcs()
        lines = [f"p max {self.num_nodes} {len(us)}",
                 f"n {self.source + 1} s", f"n {self.sink + 1} t"]
        for u, v, c in zip(us, vs, caps):
            lines.append(f"a {u + 1} {v + 1} {c:.9g}")
        return "\n".join(lines) + "\n"


def max_flow(net):
    """Max flow value and min-cut partition of a FlowNetwork.

    Returns (value, source_side) where source_side is a bool array over
    nodes, True for nodes reachable from the source in the residual graph.
    """
    us, vs, caps = net.arcs()
    n = net.num_nodes
    q = np.round(caps * FLOW_SCALE).astype(np.int64)
    mat = coo_matrix((q, (us, vs)), shape=(n, n)).tocsr()
    mat.sum_duplicates()
    res = maximum_flow(mat, net.source, net.sink)
    # residual = capacity - flow; reverse residuals are the positive part of
    # -flow at transpose positions, which res.flow already carries
    residual = (mat + res.flow * 0) - res.flow
    residual.data = np.where(residual.data > 0, residual.data, 0)
    residual.eliminate_zeros()
    order = breadth_first_order(residual, net.source, directed=True,
                                return_predecessors=False)
    side = np.zeros(n, dtype=bool)
    side[order] = True
    if side[net.sink]:
        raise AssertionError("sink reachable after max flow")
    return res.flow_value / FLOW_SCALE, side


@dataclass
class MrfProblem:
    """Unary costs per node and label plus truncated-linear pairwise terms."""

    unary: np.ndarray          # (N, L) float
    edges_i: np.ndarray        # (M,) int
    edges_j: np.ndarray        # (M,) int
    edge_weights: np.ndarray   # (M,) float, >= 0
    tau: int = 2

    def __post_init__(self):
        self.unary = np.asarray(self.unary, dtype=np.float64)
        self.edges_i = np.asarray(self.edges_i, dtype=np.int64)
        self.edges_j = np.asarray(self.edges_j, dtype=np.int64)
        self.edge_weights = np.asarray(self.edge_weights, dtype=np.float64)
        if np.any(self.edge_weights < 0):
            raise ValueError("edge weights must be nonnegative")

    @property
    def num_nodes(self):
        return self.unary.shape[0]

    @property
    def num_labels(self):
        return self.unary.shape[1]

    def v(self, a, b):
        """Truncated-linear label distance (unweighted)."""
        return np.minimum(np.abs(np.asarray(a) - np.asarray(b)), self.tau)


def mrf_energy(prob, labels):
    """Exact float energy of a labeling."""
    labels = np.asarray(labels, dtype=np.int64)
    e_unary = prob.unary[np.arange(prob.num_nodes), labels].sum()
    diff = prob.v(labels[prob.edges_i], labels[prob.edges_j])
    return float(e_unary + (diff * prob.edge_weights).sum())


def _expansion_move(prob, labels, alpha):
    """One alpha-expansion: returns the proposed labeling (may equal input)."""
    f = labels
    var = np.flatnonzero(f != alpha)
    if var.size == 0:
        return labels
    n = var.size
    var_id = np.full(prob.num_nodes, -1, dtype=np.int64)
    var_id[var] = np.arange(n)
    theta0 = prob.unary[var, f[var]].copy()
    theta1 = prob.unary[var, alpha].copy()

    ei, ej, w = prob.edges_i, prob.edges_j, prob.edge_weights
    vi, vj = var_id[ei], var_id[ej]
    fi, fj = f[ei], f[ej]

    both = (vi >= 0) & (vj >= 0)
    e00 = prob.v(fi[both], fj[both]) * w[both]
    e01 = prob.v(fi[both], alpha) * w[both]
    e10 = prob.v(alpha, fj[both]) * w[both]
    np.add.at(theta1, vi[both], e10 - e00)
    np.add.at(theta1, vj[both], -e10)  # e11 - e10 with e11 = 0
    cut_cap = e01 + e10 - e00  # submodular because V is a metric
    if cut_cap.size and cut_cap.min() < -1e-9:
        raise AssertionError("non-submodular expansion edge")
    cut_cap = np.maximum(cut_cap, 0.0)

    only_i = (vi >= 0) & (vj < 0)
    np.add.at(theta0, vi[only_i], prob.v(fi[only_i], alpha) * w[only_i])
    only_j = (vi < 0) & (vj >= 0)
    np.add.at(theta0, vj[only_j], prob.v(alpha, fj[only_j]) * w[only_j])

    base = np.minimum(theta0, theta1)
    cap_s = theta1 - base  # cut when the node takes alpha (sink side)
    cap_t = theta0 - base  # cut when the node keeps its label
    src, snk = n, n + 1
    us = [np.full(n, src), np.arange(n), vi[both]]
    vs = [np.arange(n), np.full(n, snk), vj[both]]
    cs = [cap_s, cap_t, cut_cap]
    net = FlowNetwork(n + 2, src, snk)
    net.add_arcs(np.concatenate(us), np.concatenate(vs), np.concatenate(cs))
    _, side = max_flow(net)
    take = ~side[:n]  # sink side switches to alpha
    out = labels.copy()
    out[var[take]] = alpha
    return out


def alpha_expansion(prob, init=None, max_sweeps=None, params=None):
    """Sweep expansion moves over all labels until no move helps.

    Moves are accepted only on strict energy decrease, so the energy after
    each sweep is non-increasing and ties keep the incumbent labeling.
    """
    params = params or Params()
    if max_sweeps is None:
        max_sweeps = params.max_sweeps
    if init is None:
        labels = np.argmin(prob.unary, axis=1).astype(np.int64)
    else:
        labels = np.asarray(init, dtype=np.int64).copy()
        if labels.shape != (prob.num_nodes,):
            raise ValueError("init labeling shape mismatch")
    energy = mrf_energy(prob, labels)
    for sweep in range(max_sweeps):
        improved = False
        for alpha in range(prob.num_labels):
            proposal = _expansion_move(prob, labels, alpha)
            e_new = mrf_energy(prob, proposal)
            if e_new < energy:
                labels, energy = proposal, e_new
                improved = True
        log.debug("sweep %d energy %.6f", sweep, energy)
        if not improved:
            break
    return labels


def grid_edges(h, w):
    """4-connected grid edges over row-major pixel indices."""
    idx = np.arange(h * w).reshape(h, w)
    horiz = np.stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()])
    vert = np.stack([idx[:-1, :].ravel(), idx[1:, :].ravel()])
    ei = np.concatenate([horiz[0], vert[0]])
    ej = np.concatenate([horiz[1], vert[1]])
    return ei, ej


def contrast_weights(norm_img, edges_i, edges_j, params=None, lambda_s=1.0):
    """Edge weights lambda_s * exp(-(di - dj)^2 / (2 sigma_c^2))."""
    params = params or Params()
    v = np.asarray(norm_img, dtype=np.float64).ravel()
    d = v[edges_i] - v[edges_j]
    return lambda_s * np.exp(-(d * d) / (2.0 * params.sigma_c ** 2))


def auto_lambda_s(unary, params=None):
    """Default smoothness weight: factor times the mean per-node unary range."""
    params = params or Params()
    if params.lambda_s is not None:
        return float(params.lambda_s)
    rng = unary.max(axis=1) - unary.min(axis=1)
    return params.lambda_s_factor * float(rng.mean())


def solve_grid(unary_volume, norm_img, params=None, init=None):
    """Expansion over an (H, W, L) unary volume with contrast smoothness.

    Returns label indices of shape (H, W).
    """
    params = params or Params()
    H, W, L = unary_volume.shape
    unary = unary_volume.reshape(H * W, L).astype(np.float64)
    ei, ej = grid_edges(H, W)
    lam = auto_lambda_s(unary, params)
    wts = contrast_weights(norm_img, ei, ej, params, lambda_s=lam)
    prob = MrfProblem(unary, ei, ej, wts, tau=params.tau)
    init_flat = None if init is None else np.asarray(init).ravel()
    labels = alpha_expansion(prob, init=init_flat, params=params)
    return labels.reshape(H, W), prob
