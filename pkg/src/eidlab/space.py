"""Finite metric measure spaces, curves and binned measures.

Measures, vertex functions and vertex sets are plain numpy arrays indexed by
vertex: float arrays of length ``V`` for measures and functions, boolean
masks of length ``V`` for sets.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from itertools import product
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.spatial import ConvexHull

from .errors import DomainError, ParseError, ResourceError, ValidationError

STENCILS = ("axis", "king", "knight-extended")
METRIC_MODES = ("graph-shortest-path", "euclidean-embedding")
DEFAULT_MAX_VERTICES = 1 << 22


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class GridSpec:
    """Axis-aligned tensor grid with a neighbor stencil."""

    lo: tuple
    hi: tuple
    counts: tuple
    stencil: str = "axis"

    def __post_init__(self):
        lo = tuple(float(x) for x in np.atleast_1d(self.lo))
        hi = tuple(float(x) for x in np.atleast_1d(self.hi))
        counts = tuple(int(c) for c in np.atleast_1d(self.counts))
        if not (len(lo) == len(hi) == len(counts)):
            raise ValidationError("lo, hi and counts must have the same length")
        if any(c < 2 for c in counts):
            raise ValidationError("grid needs at least 2 points per axis")
        if any(a >= b for a, b in zip(lo, hi)):
            raise ValidationError("grid extent needs lo < hi on every axis")
        if self.stencil not in STENCILS:
            raise ValidationError(f"unknown stencil {self.stencil!r}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "counts", counts)

    @property
    def dim(self):
        return len(self.counts)

    @property
    def shape(self):
        return self.counts

    @property
    def n_points(self):
        return int(np.prod(self.counts))

    @property
    def spacing(self):
        return np.array([(b - a) / (c - 1) for a, b, c in zip(self.lo, self.hi, self.counts)])

    def axis_values(self, axis):
        return np.linspace(self.lo[axis], self.hi[axis], self.counts[axis])

    def points(self):
        """Grid points in C (row-major) order, shape ``(n_points, dim)``."""
        idx = np.indices(self.counts).reshape(self.dim, -1).T
        return np.asarray(self.lo) + idx * self.spacing

    def index_of(self, multi_index):
        return int(np.ravel_multi_index(tuple(multi_index), self.counts))


def stencil_offsets(stencil, dim):
    """Integer neighbor offsets of a stencil, both signs included."""
    if stencil == "axis":
        offs = [tuple(s if i == a else 0 for i in range(dim)) for a in range(dim) for s in (-1, 1)]
    elif stencil == "king":
        offs = [o for o in product((-1, 0, 1), repeat=dim) if any(o)]
    elif stencil == "knight-extended":
        offs = [
            o for o in product(range(-2, 3), repeat=dim)
            if any(o) and math.gcd(*(abs(x) for x in o)) == 1
        ]
    else:
        raise ValidationError(f"unknown stencil {stencil!r}")
    return np.array(sorted(offs), dtype=np.int64)


def stencil_anisotropy(stencil, dim, spacing=None):
    """Worst-case ratio of stencil path length to Euclidean distance.

    The stencil path metric is the norm whose unit ball is the convex hull of
    the normalized step vectors, so the ratio is one over that hull's inradius.
    """
    if dim == 1:
        return 1.0
    steps = stencil_offsets(stencil, dim).astype(float)
    if spacing is not None:
        steps = steps * np.asarray(spacing, dtype=float)
    dirs = steps / np.linalg.norm(steps, axis=1, keepdims=True)
    hull = ConvexHull(dirs)
    inradius = float(np.min(-hull.equations[:, -1]))
    return 1.0 / inradius


@dataclass(frozen=True, eq=False)
class MetricGraph:
    """Finite weighted undirected graph, optionally embedded in R^n.

    Edges are stored once with ``u < v``; duplicate edges are merged by
    summing conductances.
    """

    n_vertices: int
    edges: np.ndarray
    conductance: np.ndarray
    coords: np.ndarray | None = None
    metric_mode: str = "graph-shortest-path"
    grid: GridSpec | None = field(default=None, repr=False)

    def __post_init__(self):
        V = int(self.n_vertices)
        if V < 1:
            raise ValidationError("graph needs at least one vertex")
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        c = np.asarray(self.conductance, dtype=float).reshape(-1)
        if len(c) != len(edges):
            raise ValidationError("one conductance per edge required")
        if len(edges):
            if edges.min() < 0 or edges.max() >= V:
                raise ValidationError("edge endpoint out of range")
            if np.any(edges[:, 0] == edges[:, 1]):
                raise ValidationError("self-loops are not allowed")
            if not np.all(np.isfinite(c)) or np.any(c <= 0):
                raise ValidationError("conductances must be finite and strictly positive")
            edges = np.sort(edges, axis=1)
            key = edges[:, 0] * V + edges[:, 1]
            uniq, inv = np.unique(key, return_inverse=True)
            if len(uniq) != len(key):
                c = np.bincount(inv, weights=c, minlength=len(uniq))
                edges = np.stack([uniq // V, uniq % V], axis=1)
            else:
                order = np.argsort(key, kind="stable")
                edges, c = edges[order], c[order]
        coords = self.coords
        if coords is not None:
            coords = np.asarray(coords, dtype=float)
            if coords.ndim == 1:
                coords = coords[:, None]
            if coords.shape[0] != V:
                raise ValidationError("coords must be given for every vertex")
            coords = _frozen(coords)
        if self.metric_mode not in METRIC_MODES:
            raise ValidationError(f"unknown metric mode {self.metric_mode!r}")
        if self.metric_mode == "euclidean-embedding" and coords is None:
            raise ValidationError("euclidean-embedding metric needs coords")
        object.__setattr__(self, "n_vertices", V)
        object.__setattr__(self, "edges", _frozen(edges))
        object.__setattr__(self, "conductance", _frozen(c))
        object.__setattr__(self, "coords", coords)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def dim(self):
        return None if self.coords is None else self.coords.shape[1]

    @cached_property
    def adjacency(self):
        """Symmetric CSR matrix of conductances."""
        V = self.n_vertices
        u, v = self.edges[:, 0], self.edges[:, 1]
        A = sparse.coo_matrix(
            (np.concatenate([self.conductance, self.conductance]), (np.concatenate([u, v]), np.concatenate([v, u]))),
            shape=(V, V),
        )
        return A.tocsr()

    @cached_property
    def incidence(self):
        """Signed edge-vertex incidence, ``(B f)[e] = f(u_e) - f(v_e)``."""
        E, V = self.n_edges, self.n_vertices
        rows = np.repeat(np.arange(E), 2)
        cols = self.edges.reshape(-1)
        vals = np.tile([1.0, -1.0], E)
        return sparse.csr_matrix((vals, (rows, cols)), shape=(E, V))

    @cached_property
    def endpoint_sum(self):
        """Unsigned incidence transpose: spreads edge values onto both endpoints."""
        return abs(self.incidence).T.tocsr()

    def edge_lengths(self):
        if self.coords is None:
            return np.ones(self.n_edges)
        d = self.coords[self.edges[:, 0]] - self.coords[self.edges[:, 1]]
        return np.linalg.norm(d, axis=1)

    def neighbors(self, v):
        A = self.adjacency
        return A.indices[A.indptr[v]:A.indptr[v + 1]]

    def closed_neighborhood(self, mask):
        """``A`` together with every vertex one edge away from it."""
        mask = np.asarray(mask, dtype=bool)
        reach = (self.adjacency @ mask.astype(float)) > 0
        return mask | reach

    def distances(self, sources=None):
        """Metric distances from ``sources`` (all vertices if None)."""
        if self.metric_mode == "euclidean-embedding":
            src = np.arange(self.n_vertices) if sources is None else np.atleast_1d(sources)
            diff = self.coords[src][:, None, :] - self.coords[None, :, :]
            return np.linalg.norm(diff, axis=2)
        L = self.edge_lengths()
        u, v = self.edges[:, 0], self.edges[:, 1]
        W = sparse.csr_matrix((L, (u, v)), shape=(self.n_vertices,) * 2)
        return csgraph.dijkstra(W, directed=False, indices=sources)

    def graph_distances(self, sources=None):
        """Shortest-path distances with Euclidean edge lengths, whatever the metric mode."""
        L = self.edge_lengths()
        u, v = self.edges[:, 0], self.edges[:, 1]
        W = sparse.csr_matrix((L, (u, v)), shape=(self.n_vertices,) * 2)
        return csgraph.dijkstra(W, directed=False, indices=sources)

    def with_conductance(self, conductance):
        return MetricGraph(self.n_vertices, self.edges, conductance, self.coords, self.metric_mode, self.grid)

    def same_structure(self, other):
        return (
            self.n_vertices == other.n_vertices
            and np.array_equal(self.edges, other.edges)
            and np.array_equal(self.conductance, other.conductance)
            and (
                (self.coords is None and other.coords is None)
                or (self.coords is not None and other.coords is not None and np.array_equal(self.coords, other.coords))
            )
        )


def build_grid_graph(spec: GridSpec, conductance=1.0, max_vertices=DEFAULT_MAX_VERTICES):
    """Grid graph with stencil edges and an embedding.

    ``conductance`` is a float or a callable mapping the array of Euclidean
    edge lengths to conductances; its values are stored as given.
    """
    if spec.n_points > max_vertices:
        raise ResourceError(f"grid has {spec.n_points} vertices, cap is {max_vertices}")
    shape = np.array(spec.counts)
    idx = np.indices(spec.counts).reshape(spec.dim, -1).T
    flat = np.arange(spec.n_points)
    us, vs = [], []
    for off in stencil_offsets(spec.stencil, spec.dim):
        first = off[np.nonzero(off)[0][0]]
        if first < 0:
            continue
        tgt = idx + off
        ok = np.all((tgt >= 0) & (tgt < shape), axis=1)
        us.append(flat[ok])
        vs.append(np.ravel_multi_index(tuple(tgt[ok].T), spec.counts))
    edges = np.stack([np.concatenate(us), np.concatenate(vs)], axis=1) if us else np.zeros((0, 2), int)
    coords = spec.points()
    lengths = np.linalg.norm(coords[edges[:, 0]] - coords[edges[:, 1]], axis=1)
    c = conductance(lengths) if callable(conductance) else np.full(len(edges), float(conductance))
    return MetricGraph(spec.n_points, edges, c, coords, "euclidean-embedding", spec)


def grid_cell_measure(spec: GridSpec):
    """Uniform cell-volume weights, one cell per grid point."""
    return np.full(spec.n_points, float(np.prod(spec.spacing)))


# -- graph file format -------------------------------------------------------

def _num(x):
    return repr(float(x))


def format_graph(graph: MetricGraph, measure) -> str:
    lines = ["[edges]"]
    for (u, v), c in zip(graph.edges, graph.conductance):
        lines.append(f"{u} {v} {_num(c)}")
    lines.append("[measure]")
    for v, w in enumerate(np.asarray(measure, dtype=float)):
        lines.append(f"{v} {_num(w)}")
    if graph.coords is not None:
        lines.append("[coords]")
        for v, x in enumerate(graph.coords):
            lines.append(f"{v} " + " ".join(_num(t) for t in x))
    return "\n".join(lines) + "\n"


def save_graph(path, graph: MetricGraph, measure):
    Path(path).write_text(format_graph(graph, measure), encoding="utf-8")


def parse_graph(text: str):
    """Parse the edge-list format; returns ``(graph, measure)``."""
    section = None
    edges, cond, meas, coords = [], [], {}, {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("["):
            if line not in ("[edges]", "[measure]", "[coords]"):
                raise ParseError(f"unknown section {line}", lineno)
            section = line[1:-1]
            continue
        parts = line.split()
        try:
            if section == "edges":
                if len(parts) != 3:
                    raise ParseError("expected 'u v c'", lineno)
                u, v, c = int(parts[0]), int(parts[1]), float(parts[2])
                if c < 0:
                    raise ValidationError(f"line {lineno}: negative conductance")
                if u < 0 or v < 0:
                    raise ParseError("negative vertex index", lineno)
                if u == v:
                    raise ValidationError(f"line {lineno}: self-loop")
                edges.append((u, v))
                cond.append(c)
            elif section == "measure":
                if len(parts) != 2:
                    raise ParseError("expected 'v w'", lineno)
                v, w = int(parts[0]), float(parts[1])
                if w < 0:
                    raise ValidationError(f"line {lineno}: negative measure weight")
                if v < 0:
                    raise ParseError("negative vertex index", lineno)
                meas[v] = meas.get(v, 0.0) + w
            elif section == "coords":
                if len(parts) < 2:
                    raise ParseError("expected 'v x1 ... xn'", lineno)
                coords[int(parts[0])] = [float(t) for t in parts[1:]]
            else:
                raise ParseError("data line outside any section", lineno)
        except ValueError as exc:
            if isinstance(exc, ValidationError):
                raise
            raise ParseError(str(exc), lineno) from None
    indices = [i for e in edges for i in e] + list(meas) + list(coords)
    if not indices:
        raise ParseError("file defines no vertices")
    V = max(indices) + 1
    if any(c == 0 for c in cond):
        raise ValidationError("conductances must be strictly positive")
    measure = np.ones(V) if not meas else np.array([meas.get(v, 0.0) for v in range(V)])
    xyz = None
    if coords:
        if len(coords) != V:
            raise ValidationError("coords section must list every vertex")
        dims = {len(x) for x in coords.values()}
        if len(dims) != 1:
            raise ValidationError("coords have inconsistent dimension")
        xyz = np.array([coords[v] for v in range(V)])
    graph = MetricGraph(V, np.array(edges, dtype=np.int64).reshape(-1, 2), np.array(cond, dtype=float), xyz)
    return graph, measure


def load_graph(path):
    return parse_graph(Path(path).read_text(encoding="utf-8"))


# -- curves ------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Polyline:
    points: np.ndarray
    allow_degenerate: bool = False

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if len(pts) < 2 and not (self.allow_degenerate and len(pts) == 1):
            raise ValidationError("a polyline needs at least 2 points")
        object.__setattr__(self, "points", _frozen(pts))
        if not self.allow_degenerate and self.length <= 0:
            raise ValidationError("polyline has zero length")

    @cached_property
    def segment_lengths(self):
        return np.linalg.norm(np.diff(self.points, axis=0), axis=1)

    @cached_property
    def arclength(self):
        return np.concatenate([[0.0], np.cumsum(self.segment_lengths)])

    @property
    def length(self):
        return float(self.segment_lengths.sum())

    @property
    def start(self):
        return self.points[0]

    @property
    def end(self):
        return self.points[-1]

    def resample(self, step):
        """Subdivide every segment uniformly so no sub-step exceeds ``step``."""
        m = np.maximum(1, np.ceil(self.segment_lengths / step)).astype(np.int64)
        seg = np.repeat(np.arange(len(m)), m)
        # position j / m within each segment, j = 1..m
        j = np.arange(len(seg)) - np.repeat(np.cumsum(m) - m, m) + 1
        t = (j / m[seg])[:, None]
        a, b = self.points[:-1][seg], self.points[1:][seg]
        return Polyline(np.concatenate([self.points[:1], a + t * (b - a)]), self.allow_degenerate)

    def concat(self, other: "Polyline"):
        if not np.array_equal(self.end, other.start):
            raise ValidationError("curves do not join")
        return Polyline(np.concatenate([self.points, other.points[1:]]), self.allow_degenerate)


def line_integral(curve: Polyline, density: Callable[[np.ndarray], np.ndarray], h_quad=1e-3):
    """Integral of ``density`` along ``curve`` with respect to arclength.

    Composite trapezoid rule on each segment with uniform sub-steps of length
    at most ``h_quad``. ``density`` maps an ``(k, n)`` point array to ``k``
    nonnegative values.
    """
    total = 0.0
    for a, b, L in zip(curve.points[:-1], curve.points[1:], curve.segment_lengths):
        if L == 0:
            continue
        m = max(1, int(math.ceil(L / h_quad)))
        t = np.linspace(0.0, 1.0, m + 1)[:, None]
        vals = np.asarray(density(a + t * (b - a)), dtype=float).reshape(-1)
        if not np.all(np.isfinite(vals)):
            raise DomainError("density returned a non-finite value")
        if np.any(vals < 0):
            raise DomainError("density returned a negative value")
        total += (L / m) * (vals.sum() - 0.5 * (vals[0] + vals[-1]))
    return total


# -- binning -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BinnedMeasure:
    """Masses on half-open boxes ``origin + h*(index + [0,1)^n)``."""

    origin: np.ndarray
    h: float
    index: np.ndarray
    mass: np.ndarray

    def __post_init__(self):
        if not self.h > 0:
            raise ValidationError("box side must be positive")
        index = np.asarray(self.index, dtype=np.int64)
        mass = np.asarray(self.mass, dtype=float)
        if np.any(mass < 0):
            raise ValidationError("box masses must be nonnegative")
        object.__setattr__(self, "origin", _frozen(np.asarray(self.origin, dtype=float)))
        object.__setattr__(self, "index", _frozen(index.reshape(len(mass), len(self.origin))))
        object.__setattr__(self, "mass", _frozen(mass))

    @property
    def dim(self):
        return len(self.origin)

    @property
    def box_volume(self):
        return self.h ** self.dim

    def total(self):
        return math.fsum(self.mass)

    def as_dict(self):
        return {tuple(int(i) for i in k): float(m) for k, m in zip(self.index, self.mass)}

    def same_grid(self, other):
        return self.h == other.h and np.array_equal(self.origin, other.origin)

    def __len__(self):
        return len(self.mass)


def box_indices(points, h, origin=None):
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    origin = np.zeros(points.shape[1]) if origin is None else np.asarray(origin, dtype=float)
    return np.floor((points - origin) / h).astype(np.int64), origin


def bin_points(points, weights, h, origin=None) -> BinnedMeasure:
    """Accumulate weighted points into half-open boxes of side ``h``."""
    if not h > 0:
        raise ValidationError("box side must be positive")
    keys, origin = box_indices(points, h, origin)
    weights = np.asarray(weights, dtype=float).reshape(-1)
    if len(keys) == 0:
        return BinnedMeasure(origin, h, np.zeros((0, len(origin)), np.int64), np.zeros(0))
    uniq, inv = np.unique(keys, axis=0, return_inverse=True)
    mass = np.bincount(inv.reshape(-1), weights=weights, minlength=len(uniq))
    return BinnedMeasure(origin, h, uniq, mass)


def random_stencil_curves(spec: GridSpec, n_curves, n_steps, rng, stencil=None):
    """Random walks on the grid stencil, returned as polylines."""
    offs = stencil_offsets(stencil or spec.stencil, spec.dim)
    shape = np.array(spec.counts)
    out = []
    for _ in range(n_curves):
        pos = rng.integers(0, shape)
        path = [pos.copy()]
        for _ in range(n_steps):
            step = offs[rng.integers(len(offs))]
            nxt = pos + step
            if np.all((nxt >= 0) & (nxt < shape)):
                pos = nxt
                path.append(pos.copy())
        if len(path) < 2:
            continue
        pts = np.asarray(spec.lo) + np.array(path) * spec.spacing
        out.append(Polyline(pts))
    return out


def as_points(x: Sequence | np.ndarray):
    x = np.asarray(x, dtype=float)
    return x[:, None] if x.ndim == 1 else x


def random_graph(rng, n_vertices, edge_prob=0.3, conductance_range=(0.1, 2.0), connected=True):
    """Erdos-Renyi graph; a random spanning path is added when ``connected``."""
    V = int(n_vertices)
    iu, ju = np.triu_indices(V, 1)
    keep = rng.random(len(iu)) < edge_prob
    edges = [np.stack([iu[keep], ju[keep]], axis=1)]
    if connected and V > 1:
        perm = rng.permutation(V)
        edges.append(np.stack([perm[:-1], perm[1:]], axis=1))
    edges = np.concatenate(edges)
    edges = np.unique(np.sort(edges, axis=1), axis=0)
    c = rng.uniform(*conductance_range, size=len(edges))
    return MetricGraph(V, edges, c)
