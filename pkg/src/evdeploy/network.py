"""Grid road network and free-flow shortest paths."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra


class ConfigurationError(ValueError):
    """Raised when a scenario or behaviour configuration is invalid."""


@dataclass(frozen=True, eq=False)
class NetworkGraph:
    """Directed road network with planar node coordinates in km.

    Attributes:
        xy: (N, 2) node coordinates, km.
        links: (L, 2) int array of (from, to) node ids.
        length_km: (L,) link lengths.
        speed_kmh: (L,) free-flow link speeds.
    """

    xy: np.ndarray
    links: np.ndarray
    length_km: np.ndarray
    speed_kmh: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_nodes(self) -> int:
        return len(self.xy)

    @property
    def n_links(self) -> int:
        return len(self.links)

    def validate(self) -> None:
        if len(np.unique(self.xy, axis=0)) != self.n_nodes:
            raise ConfigurationError("node coordinates must be unique")
        euclid = np.linalg.norm(self.xy[self.links[:, 0]] - self.xy[self.links[:, 1]], axis=1)
        if np.any(self.length_km < euclid - 1e-12):
            raise ConfigurationError("link shorter than the straight line between its endpoints")
        if np.any(self.speed_kmh <= 0):
            raise ConfigurationError("link speeds must be positive")
        if not np.all(np.isfinite(self.distance_matrix)):
            raise ConfigurationError("network is not strongly connected")

    def _adjacency(self, weights: np.ndarray) -> csr_matrix:
        n = self.n_nodes
        return csr_matrix((weights, (self.links[:, 0], self.links[:, 1])), shape=(n, n))

    def _solve(self) -> None:
        dist, pred = dijkstra(self._adjacency(self.length_km), directed=True, return_predecessors=True)
        # travel time along the shortest-distance path (not the fastest path)
        link_time = {(int(a), int(b)): l / s for (a, b), l, s in zip(self.links, self.length_km, self.speed_kmh)}
        n = self.n_nodes
        time = np.full((n, n), np.inf)
        for src in range(n):
            time[src, src] = 0.0
            for v in np.argsort(dist[src], kind="stable"):
                p = pred[src, v]
                if p >= 0:
                    time[src, v] = time[src, p] + link_time[(int(p), int(v))]
        self._cache["dist"] = dist
        self._cache["pred"] = pred
        self._cache["time"] = time * 3600.0

    @property
    def distance_matrix(self) -> np.ndarray:
        """All-pairs shortest network distance, km."""
        if "dist" not in self._cache:
            self._solve()
        return self._cache["dist"]

    @property
    def time_matrix(self) -> np.ndarray:
        """Free-flow travel time along the shortest-distance path, seconds."""
        if "time" not in self._cache:
            self._solve()
        return self._cache["time"]

    def path(self, origin: int, destination: int) -> list[int]:
        if "pred" not in self._cache:
            self._solve()
        pred = self._cache["pred"]
        if origin == destination:
            return [origin]
        if pred[origin, destination] < 0:
            raise ValueError(f"node {destination} unreachable from {origin}")
        nodes = [destination]
        while nodes[-1] != origin:
            nodes.append(int(pred[origin, nodes[-1]]))
        return nodes[::-1]

    @cached_property
    def node_index(self) -> dict[tuple[float, float], int]:
        return {(float(x), float(y)): i for i, (x, y) in enumerate(self.xy)}

    def node_at(self, x: float, y: float, tol: float = 1e-6) -> int:
        """Node id at coordinate (x, y); raises KeyError if none within ``tol``."""
        d = np.hypot(self.xy[:, 0] - x, self.xy[:, 1] - y)
        i = int(np.argmin(d))
        if d[i] > tol:
            raise KeyError(f"no network node at ({x}, {y})")
        return i

    def to_dict(self) -> dict:
        return {
            "xy": self.xy.tolist(),
            "links": self.links.tolist(),
            "length_km": self.length_km.tolist(),
            "speed_kmh": self.speed_kmh.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkGraph":
        return cls(
            xy=np.asarray(d["xy"], dtype=float).reshape(-1, 2),
            links=np.asarray(d["links"], dtype=np.int64).reshape(-1, 2),
            length_km=np.asarray(d["length_km"], dtype=float),
            speed_kmh=np.asarray(d["speed_kmh"], dtype=float),
        )


def grid_network(rows: int, cols: int, spacing_km: float = 1.0, speed_kmh: float = 40.0,
                 length_jitter: float = 0.0, rng: np.random.Generator | None = None) -> NetworkGraph:
    """Rectangular grid with a bidirectional link between 4-neighbours.

    Node ``r * cols + c`` sits at ``(c * spacing, r * spacing)``. With
    ``length_jitter > 0`` each undirected edge is lengthened by a factor drawn
    uniformly from ``[1, 1 + length_jitter]`` (both directions share it).
    """
    if rows < 2 or cols < 2:
        raise ConfigurationError(f"grid must be at least 2x2, got {rows}x{cols}")
    if spacing_km <= 0 or speed_kmh <= 0:
        raise ConfigurationError("spacing and speed must be positive")
    if length_jitter < 0:
        raise ConfigurationError("length_jitter must be >= 0")
    r, c = np.divmod(np.arange(rows * cols), cols)
    xy = np.column_stack([c * spacing_km, r * spacing_km]).astype(float)

    edges = []
    for i in range(rows):
        for j in range(cols):
            u = i * cols + j
            if j + 1 < cols:
                edges.append((u, u + 1))
            if i + 1 < rows:
                edges.append((u, u + cols))
    edges = np.asarray(edges, dtype=np.int64)
    factor = np.ones(len(edges))
    if length_jitter > 0:
        if rng is None:
            raise ConfigurationError("length_jitter requires an rng")
        factor = 1.0 + rng.uniform(0.0, length_jitter, size=len(edges))
    links = np.concatenate([edges, edges[:, ::-1]])
    length = np.tile(spacing_km * factor, 2)
    speed = np.full(len(links), float(speed_kmh))
    return NetworkGraph(xy=xy, links=links, length_km=length, speed_kmh=speed)
