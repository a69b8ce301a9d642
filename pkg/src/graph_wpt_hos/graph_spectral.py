"""Sensor graphs, the combinatorial Laplacian, and the graph Fourier transform."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse.csgraph import connected_components

MAX_ATTEMPTS = 100
_SYMMETRY_TOL = 1e-9
_SIGN_TOL = 1e-12


class GraphConstructionError(RuntimeError):
    """Raised when a connected random geometric graph cannot be produced."""


class RewiringError(RuntimeError):
    """Raised when rewiring cannot keep the graph connected."""


class ContractViolation(ValueError):
    """Raised when an input breaks an operation's precondition."""


@dataclass(frozen=True, eq=False)
class SensorGraph:
    """Weighted undirected topology over ``node_count`` sensors.

    Attributes:
        adjacency: Symmetric, nonnegative M x M weights with zero diagonal.
        node_positions: M x 2 coordinates in the unit square, or None when the
            graph was not built geometrically.
    """

    adjacency: np.ndarray
    node_positions: np.ndarray | None = None

    def __post_init__(self) -> None:
        a = np.asarray(self.adjacency, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ContractViolation(f"adjacency must be square, got shape {a.shape}")
        if np.max(np.abs(a - a.T), initial=0.0) > _SYMMETRY_TOL:
            raise ContractViolation("adjacency must be symmetric")
        if np.any(a < 0):
            raise ContractViolation("adjacency must be entrywise nonnegative")
        if np.any(np.diag(a) != 0):
            raise ContractViolation("adjacency must have a zero diagonal")
        a = a.copy()
        a.setflags(write=False)
        object.__setattr__(self, "adjacency", a)
        if self.node_positions is not None:
            pos = np.array(self.node_positions, dtype=float)
            pos.setflags(write=False)
            object.__setattr__(self, "node_positions", pos)

    @property
    def node_count(self) -> int:
        return self.adjacency.shape[0]

    @property
    def edges(self) -> list[tuple[int, int]]:
        """Upper-triangular edge list ``(i, j)`` with ``i < j``."""
        i, j = np.nonzero(np.triu(self.adjacency, k=1))
        return list(zip(i.tolist(), j.tolist()))

    @property
    def edge_count(self) -> int:
        return int(np.count_nonzero(np.triu(self.adjacency, k=1)))

    @property
    def mean_degree(self) -> float:
        return 2.0 * self.edge_count / self.node_count

    def is_connected(self) -> bool:
        return is_connected(self.adjacency)


@dataclass(frozen=True, eq=False)
class LaplacianSpectrum:
    """Orthonormal Laplacian eigenbasis with ascending eigenvalues.

    ``eigenvectors[:, i]`` pairs with ``eigenvalues[i]``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    laplacian: np.ndarray = field(repr=False)

    @property
    def node_count(self) -> int:
        return self.eigenvalues.shape[0]


def is_connected(adjacency: np.ndarray) -> bool:
    n_components, _ = connected_components(np.asarray(adjacency) > 0, directed=False)
    return n_components == 1


def _geometric_adjacency(points: np.ndarray, radius: float) -> np.ndarray:
    dist = np.sqrt(((points[:, None, :] - points[None, :, :]) ** 2).sum(-1))
    adj = (dist <= radius).astype(float)
    np.fill_diagonal(adj, 0.0)
    return adj


def _radius_for_degree(points: np.ndarray, target: float) -> float:
    """Bisect the connection radius so the realized mean degree is near ``target``.

    Mean degree is a step function of the radius, so bisection lands on the
    smallest radius whose degree reaches the target and then picks whichever
    side of the step is closer.
    """
    m = points.shape[0]
    dist = np.sqrt(((points[:, None, :] - points[None, :, :]) ** 2).sum(-1))
    pair_d = np.sort(dist[np.triu_indices(m, k=1)])

    def degree(r: float) -> float:
        return 2.0 * np.searchsorted(pair_d, r, side="right") / m

    lo, hi = 0.0, math.sqrt(2.0)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if degree(mid) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12:
            break
    # hi reaches the target, lo falls short; keep the closer of the two.
    if abs(degree(lo) - target) < abs(degree(hi) - target):
        return lo
    return hi


def build_random_geometric_graph(
    node_count: int, target_mean_degree: float, seed: int | np.random.SeedSequence
) -> SensorGraph:
    """Random geometric graph on the unit square with a target mean degree.

    Positions are redrawn from successive seed substreams until the graph is
    connected, at most ``MAX_ATTEMPTS`` times.
    """
    if node_count < 2:
        raise ContractViolation(f"node_count must be >= 2, got {node_count}")
    if node_count == 2:
        if not 0 < target_mean_degree <= 1:
            raise ContractViolation("target_mean_degree must be 1 for two nodes")
    elif not 1 < target_mean_degree < node_count - 1:
        raise ContractViolation(
            f"target_mean_degree must lie in (1, {node_count - 1}), got {target_mean_degree}"
        )
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    radius = float("nan")
    for child in ss.spawn(MAX_ATTEMPTS):
        rng = np.random.default_rng(child)
        points = rng.uniform(0.0, 1.0, size=(node_count, 2))
        radius = _radius_for_degree(points, target_mean_degree)
        adj = _geometric_adjacency(points, radius)
        if abs(adj.sum() / node_count - target_mean_degree) > 0.5:
            continue
        if is_connected(adj):
            return SensorGraph(adj, points)
    raise GraphConstructionError(
        f"no connected graph after {MAX_ATTEMPTS} attempts (last radius {radius:.6f})"
    )


def rewire_edges(
    graph: SensorGraph, fraction: float, seed: int | np.random.SeedSequence
) -> SensorGraph:
    """Move ``ceil(fraction * |E|)`` random edges onto random absent node pairs."""
    if not 0.0 <= fraction <= 1.0:
        raise ContractViolation(f"fraction must lie in [0, 1], got {fraction}")
    if not graph.is_connected():
        raise ContractViolation("graph must be connected before rewiring")
    edges = graph.edges
    n_move = math.ceil(fraction * len(edges) - 1e-12)
    if n_move == 0:
        return graph
    m = graph.node_count
    if len(edges) == m * (m - 1) // 2:
        raise RewiringError("complete graph has no absent edges to rewire onto")
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    pick_ss, *retry_ss = ss.spawn(MAX_ATTEMPTS + 1)
    chosen = np.random.default_rng(pick_ss).choice(len(edges), size=n_move, replace=False)
    removed = [edges[k] for k in sorted(chosen.tolist())]
    base = np.array(graph.adjacency)
    for i, j in removed:
        base[i, j] = base[j, i] = 0.0
    # Candidate slots are absent in the original graph, so a removed edge is never re-added.
    iu, ju = np.triu_indices(m, k=1)
    absent = [(a, b) for a, b in zip(iu.tolist(), ju.tolist()) if graph.adjacency[a, b] == 0]
    if len(absent) < n_move:
        raise RewiringError(f"only {len(absent)} absent edges for {n_move} moves")
    weights = [graph.adjacency[i, j] for i, j in removed]
    for child in retry_ss:
        picks = np.random.default_rng(child).choice(len(absent), size=n_move, replace=False)
        adj = base.copy()
        for w, k in zip(weights, picks.tolist()):
            a, b = absent[k]
            adj[a, b] = adj[b, a] = w
        if is_connected(adj):
            return SensorGraph(adj, graph.node_positions)
    raise RewiringError(f"rewiring {n_move} edges left the graph disconnected {MAX_ATTEMPTS} times")


def laplacian(graph: SensorGraph) -> np.ndarray:
    """Combinatorial Laplacian ``D - A``."""
    a = graph.adjacency
    return np.diag(a.sum(axis=1)) - a


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    out = vectors.copy()
    for k in range(out.shape[1]):
        col = out[:, k]
        idx = np.flatnonzero(np.abs(col) > _SIGN_TOL)
        if idx.size and col[idx[0]] < 0:
            out[:, k] = -col
    return out


def eigendecompose(lap: np.ndarray) -> LaplacianSpectrum:
    """Symmetric eigendecomposition with a deterministic eigenvector sign.

    The first entry of each eigenvector whose magnitude exceeds 1e-12 is made
    positive. The smallest eigenvalue is clamped into ``[0, 1e-9]`` against
    round-off.
    """
    lap = np.asarray(lap, dtype=float)
    if lap.ndim != 2 or lap.shape[0] != lap.shape[1]:
        raise ContractViolation(f"Laplacian must be square, got shape {lap.shape}")
    asym = np.max(np.abs(lap - lap.T), initial=0.0)
    if asym > _SYMMETRY_TOL:
        raise ContractViolation(f"Laplacian is not symmetric (max asymmetry {asym:.3g})")
    vals, vecs = np.linalg.eigh(0.5 * (lap + lap.T))
    order = np.argsort(vals, kind="stable")
    vals, vecs = vals[order], vecs[:, order]
    if abs(vals[0]) <= 1e-9:
        vals[0] = 0.0
    vecs = _fix_signs(vecs)
    for arr in (vals, vecs):
        arr.setflags(write=False)
    frozen = lap.copy()
    frozen.setflags(write=False)
    return LaplacianSpectrum(vals, vecs, frozen)


def spectrum_of(graph: SensorGraph) -> LaplacianSpectrum:
    return eigendecompose(laplacian(graph))


def _check_rows(spectrum: LaplacianSpectrum, data: np.ndarray) -> np.ndarray:
    data = np.asarray(data, dtype=float)
    if data.ndim < 2 or data.shape[-2] != spectrum.node_count:
        raise ContractViolation(
            f"expected {spectrum.node_count} rows, got array of shape {data.shape}"
        )
    return data


def gft(spectrum: LaplacianSpectrum, window: np.ndarray) -> np.ndarray:
    """Project an M x L window (or a stack of them) onto the Laplacian eigenbasis."""
    window = _check_rows(spectrum, window)
    return np.matmul(spectrum.eigenvectors.T, window)


def igft(spectrum: LaplacianSpectrum, coefficients: np.ndarray) -> np.ndarray:
    coefficients = _check_rows(spectrum, coefficients)
    return np.matmul(spectrum.eigenvectors, coefficients)


def save_graph(graph: SensorGraph, path: str | Path) -> None:
    """Write the plain-text edge list: ``M n``, then ``i j w`` lines, then ``pos i x y``."""
    lines = [f"M {graph.node_count}"]
    for i, j in graph.edges:
        lines.append(f"{i} {j} {float(graph.adjacency[i, j])!r}")
    if graph.node_positions is not None:
        for i, (x, y) in enumerate(graph.node_positions.tolist()):
            lines.append(f"pos {i} {x!r} {y!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_graph(path: str | Path) -> SensorGraph:
    adj = None
    positions: dict[int, tuple[float, float]] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "M":
                adj = np.zeros((int(parts[1]), int(parts[1])))
            elif parts[0] == "pos":
                positions[int(parts[1])] = (float(parts[2]), float(parts[3]))
            else:
                if adj is None:
                    raise ValueError("edge before 'M' header")
                i, j, w = int(parts[0]), int(parts[1]), float(parts[2])
                adj[i, j] = adj[j, i] = w
        except (IndexError, ValueError) as exc:
            raise ValueError(f"{path}:{lineno}: malformed graph line {raw!r} ({exc})") from exc
    if adj is None:
        raise ValueError(f"{path}: missing 'M <node_count>' header")
    pos = None
    if positions:
        pos = np.array([positions[i] for i in range(adj.shape[0])])
    return SensorGraph(adj, pos)
