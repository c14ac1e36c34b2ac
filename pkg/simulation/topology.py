"""Warehouse topology: uniform product placement, sink at the bottom edge."""
from __future__ import annotations

from collections import deque
from typing import Optional, Sequence

import numpy as np

AREA = (300.0, 300.0)


def sink_position(area: tuple[float, float] = AREA) -> tuple[float, float]:
    return (area[0] / 2.0, 0.0)


def generate_topology(
    n_nodes: int,
    seed,
    area: tuple[float, float] = AREA,
    sink: Optional[tuple[float, float]] = None,
) -> np.ndarray:
    """
    Positions of the sink (row 0) followed by n_nodes products.

    Products are i.i.d. uniform over the area; `seed` is anything
    numpy's default_rng accepts.
    """
    if n_nodes < 1:
        raise ValueError(f"n_nodes must be >= 1, got {n_nodes}")
    rng = np.random.default_rng(seed)
    products = rng.uniform((0.0, 0.0), area, size=(n_nodes, 2))
    sink_xy = np.asarray(sink if sink is not None else sink_position(area), dtype=float)
    return np.vstack([sink_xy, products])


def bfs_hops(adjacency: Sequence[Sequence[int]], source: int = 0) -> list[Optional[int]]:
    """Hop distance from source; None for unreachable nodes."""
    hops: list[Optional[int]] = [None] * len(adjacency)
    hops[source] = 0
    frontier = deque([source])
    while frontier:
        node = frontier.popleft()
        for neighbor in adjacency[node]:
            if hops[neighbor] is None:
                hops[neighbor] = hops[node] + 1
                frontier.append(neighbor)
    return hops


def eccentricity(adjacency: Sequence[Sequence[int]], source: int = 0) -> int:
    """Largest BFS depth from source over the nodes it reaches."""
    return max((h for h in bfs_hops(adjacency, source) if h is not None), default=0)


def hop_diameter(adjacency: Sequence[Sequence[int]], source: int = 0) -> int:
    """Longest shortest path, in hops, between two nodes of source's component."""
    component = [v for v, h in enumerate(bfs_hops(adjacency, source)) if h is not None]
    return max((eccentricity(adjacency, v) for v in component), default=0)


def is_connected(adjacency: Sequence[Sequence[int]], source: int = 0) -> bool:
    return all(h is not None for h in bfs_hops(adjacency, source))
