"""Lipschitz approximation engines on grids.

Shortest-path relaxations of curve infima, the scalar sequence with
derivative 1 ^ (k dist(x, K)), max-min piecewise-linear approximants and
exact discrete inf-convolutions.
"""
from __future__ import annotations

import csv
import heapq
import io
import itertools
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import qmc

from .errors import ParseError, ValidationError
from .pushforward import distance_to_intervals, merge_intervals
from .space import GridSpec, stencil_anisotropy, stencil_offsets


@dataclass(frozen=True, eq=False)
class GridField:
    """Scalar values on the points of a grid, stored in C order."""

    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if v.shape != (self.spec.n_points,):
            raise ValidationError(f"expected {self.spec.n_points} values, got {v.size}")
        if not np.all(np.isfinite(v)):
            raise ValidationError("grid field values must be finite")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, spec, fn):
        return cls(spec, fn(spec.points()))

    @property
    def array(self):
        return self.values.reshape(self.spec.counts)

    def with_values(self, values):
        return GridField(self.spec, values)


def format_grid_field(field: GridField) -> str:
    s = field.spec
    head = [str(s.dim)] + [repr(float(x)) for x in s.lo] + [repr(float(x)) for x in s.hi] + [str(c) for c in s.counts]
    return " ".join(head) + "\n" + "".join(repr(float(v)) + "\n" for v in field.values)


def parse_grid_field(text: str, stencil="axis") -> GridField:
    lines = [(i, ln.strip()) for i, ln in enumerate(text.splitlines(), 1)]
    lines = [(i, ln) for i, ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise ParseError("missing header")
    lineno, head = lines[0]
    tok = head.split()
    try:
        n = int(tok[0])
        if len(tok) != 1 + 3 * n:
            raise ValueError
        lo = tuple(float(t) for t in tok[1:1 + n])
        hi = tuple(float(t) for t in tok[1 + n:1 + 2 * n])
        counts = tuple(int(t) for t in tok[1 + 2 * n:])
    except (ValueError, IndexError):
        raise ParseError("header must read 'n lo_1..lo_n hi_1..hi_n count_1..count_n'", lineno) from None
    spec = GridSpec(lo, hi, counts, stencil)
    vals = []
    for i, ln in lines[1:]:
        try:
            vals.append(float(ln))
        except ValueError:
            raise ParseError(f"not a number: {ln!r}", i) from None
    if len(vals) != spec.n_points:
        raise ParseError(f"expected {spec.n_points} values, found {len(vals)}")
    return GridField(spec, vals)


def save_grid_field(path, field: GridField):
    Path(path).write_text(format_grid_field(field), encoding="utf-8")


def load_grid_field(path, stencil="axis") -> GridField:
    return parse_grid_field(Path(path).read_text(encoding="utf-8"), stencil)


# -- asymptotic Lipschitz constant -------------------------------------------

def _shift(arr, off):
    """arr[x + off] where defined, with a validity mask."""
    out = np.zeros_like(arr)
    ok = np.zeros(arr.shape, dtype=bool)
    src, dst = [], []
    for o, n in zip(off, arr.shape):
        if abs(o) >= n:
            return out, ok
        src.append(slice(max(o, 0), n + min(o, 0)))
        dst.append(slice(max(-o, 0), n + min(-o, 0)))
    out[tuple(dst)] = arr[tuple(src)]
    ok[tuple(dst)] = True
    return out, ok


def asymptotic_lipschitz(field: GridField, r) -> GridField:
    """Lipschitz constant of f restricted to the grid points of B(x, r), at every x."""
    spec = field.spec
    h = np.asarray(spec.spacing)
    if r < h.max() * (1 - 1e-12):
        raise ValidationError(f"radius {r} is below the grid spacing {h.max()}")
    reach = [int(math.floor(r / hi + 1e-9)) for hi in h]
    offs = [np.array(o) for o in itertools.product(*[range(-k, k + 1) for k in reach])
            if np.linalg.norm(np.array(o) * h) <= r * (1 + 1e-12)]
    arr = field.array
    shifted = [_shift(arr, tuple(o)) for o in offs]
    out = np.zeros(arr.shape)
    for a, b in itertools.combinations(range(len(offs)), 2):
        d = np.linalg.norm((offs[a] - offs[b]) * h)
        (fa, oa), (fb, ob) = shifted[a], shifted[b]
        slope = np.where(oa & ob, np.abs(fa - fb) / d, 0.0)
        np.maximum(out, slope, out=out)
    return GridField(spec, out.reshape(-1))


# -- variational approximation -----------------------------------------------

def _stencil_neighbors(spec: GridSpec, stencil):
    """Flat neighbor indices and step lengths for every grid point."""
    offs = stencil_offsets(stencil, spec.dim)
    idx = np.indices(spec.counts).reshape(spec.dim, -1).T
    nbr = np.full((spec.n_points, len(offs)), -1, dtype=np.int64)
    for j, o in enumerate(offs):
        t = idx + o
        ok = np.all((t >= 0) & (t < np.array(spec.counts)), axis=1)
        nbr[ok, j] = np.ravel_multi_index(tuple(t[ok].T), spec.counts)
    lengths = np.linalg.norm(offs * np.asarray(spec.spacing), axis=1)
    return nbr, lengths


def multi_source_shortest_paths(spec: GridSpec, density, sources, potential, stencil=None):
    """min over sources s of potential(s) + cost of the cheapest stencil path s -> x.

    An edge (u, v) costs |u - v| (density(u) + density(v)) / 2.  Ties in the
    queue are broken by vertex index, so the output is reproducible.
    """
    stencil = stencil or spec.stencil
    nbr, lengths = _stencil_neighbors(spec, stencil)
    dens = np.asarray(density, dtype=float).reshape(-1)
    dist = np.full(spec.n_points, np.inf)
    src = np.asarray(sources, dtype=np.int64).reshape(-1)
    pot = np.asarray(potential, dtype=float).reshape(-1)
    np.minimum.at(dist, src, pot)
    nbr_l = nbr.tolist()
    dens_l = dens.tolist()
    len_l = lengths.tolist()
    dist_l = dist.tolist()
    done = bytearray(spec.n_points)
    heap = [(dist_l[s], s) for s in np.unique(src).tolist()]
    heapq.heapify(heap)
    pop, push = heapq.heappop, heapq.heappush
    while heap:
        d, u = pop(heap)
        if done[u]:
            continue
        done[u] = 1
        gu = dens_l[u]
        for v, ln in zip(nbr_l[u], len_l):
            if v < 0 or done[v]:
                continue
            nd = d + ln * (gu + dens_l[v]) * 0.5
            if nd < dist_l[v]:
                dist_l[v] = nd
                push(heap, (nd, v))
    return np.array(dist_l)


def variational_approx(f: GridField, g: GridField, R, center=None, stencil=None) -> GridField:
    """f_g(x) = min(f(x), inf over stencil paths gamma ending at x of f(gamma(0)) + int_gamma g).

    Paths start at grid points of the closed ball B(center, R).
    """
    if (f.spec.counts, f.spec.lo, f.spec.hi) != (g.spec.counts, g.spec.lo, g.spec.hi):
        raise ValidationError("f and g must live on the same grid")
    if np.any(g.values <= 0):
        raise ValidationError("the density g must be strictly positive")
    pts = f.spec.points()
    c = np.zeros(f.spec.dim) if center is None else np.asarray(center, dtype=float)
    src = np.flatnonzero(np.linalg.norm(pts - c, axis=1) <= R)
    if len(src) == 0:
        return f
    dist = multi_source_shortest_paths(f.spec, g.values, src, f.values[src], stencil)
    return f.with_values(np.minimum(f.values, dist))


def grid_lipschitz(field: GridField):
    """Largest difference quotient over all pairs of grid points (small grids only)."""
    pts = field.spec.points()
    v = field.values
    best = 0.0
    for i in range(len(v) - 1):
        d = np.linalg.norm(pts[i + 1:] - pts[i], axis=1)
        best = max(best, float(np.max(np.abs(v[i + 1:] - v[i]) / d)))
    return best


def edge_lipschitz_ratio(fi: GridField, g: GridField, stencil=None):
    """max over stencil edges of |f_i(u) - f_i(v)| / (|u - v| max(g(u), g(v)))."""
    nbr, lengths = _stencil_neighbors(fi.spec, stencil or fi.spec.stencil)
    worst = 0.0
    for j, ln in enumerate(lengths):
        ok = nbr[:, j] >= 0
        u, v = np.flatnonzero(ok), nbr[ok, j]
        cap = ln * np.maximum(g.values[u], g.values[v])
        worst = max(worst, float(np.max(np.abs(fi.values[u] - fi.values[v]) / cap, initial=0.0)))
    return worst


@dataclass
class ConvergenceLog:
    rows: list  # (i, sup_gap, lip_bound_slack)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["i", "sup_gap", "lip_bound_slack"])
        for i, gap, slack in self.rows:
            w.writerow([i, repr(gap), repr(slack)])
        return buf.getvalue()

    @property
    def gaps(self):
        return [r[1] for r in self.rows]

    def monotone(self):
        return all(b <= a for a, b in zip(self.gaps, self.gaps[1:]))


def convergence_ladder(f: GridField, ladder, R, center=None, stencil=None):
    """Run variational_approx along a pointwise nondecreasing ladder g_1 <= g_2 <= ...

    ``lip_bound_slack`` is the worst edge ratio of edge_lipschitz_ratio minus 1;
    it is nonpositive when every stencil edge respects the density bound.
    """
    ladder = list(ladder)
    for a, b in zip(ladder, ladder[1:]):
        if np.any(b.values < a.values):
            raise ValidationError("ladder must be pointwise nondecreasing")
    rows, outs = [], []
    for i, g in enumerate(ladder, 1):
        fi = variational_approx(f, g, R, center, stencil)
        rows.append((i, float(np.max(f.values - fi.values)), edge_lipschitz_ratio(fi, g, stencil) - 1.0))
        outs.append(fi)
    return ConvergenceLog(rows), outs


def anisotropy_slack(spec: GridSpec, stencil=None):
    return stencil_anisotropy(stencil or spec.stencil, spec.dim, spec.spacing)


# -- scalar sequence -----------------------------------------------------------

def scalar_eid_sequence(K, k, spec: GridSpec):
    """(g_k, g_k') on a 1D grid with g_k' = min(1, k dist(x, K)) and g_k(0) = 0.

    K is a finite union of closed intervals; overlaps are merged.
    """
    if spec.dim != 1:
        raise ValidationError("scalar sequence lives on a 1D grid")
    if k < 1:
        raise ValidationError("k must be at least 1")
    x = spec.axis_values(0)
    K = merge_intervals(np.asarray(K, dtype=float).reshape(-1, 2))
    if len(K) == 0:
        deriv = np.ones_like(x)
    else:
        deriv = np.minimum(1.0, k * distance_to_intervals(x, K))
    cum = np.concatenate([[0.0], np.cumsum(np.diff(x) * (deriv[1:] + deriv[:-1]) * 0.5)])
    # shift so that g_k(0) = 0, integrating the piecewise-linear derivative up to 0
    if x[0] <= 0 <= x[-1]:
        j = min(int(np.searchsorted(x, 0.0, side="right")) - 1, len(x) - 2)
        t = 0.0 - x[j]
        d0 = deriv[j] + (deriv[j + 1] - deriv[j]) * t / (x[j + 1] - x[j])
        zero = cum[j] + t * (deriv[j] + d0) * 0.5
    else:
        zero = 0.0 if len(K) == 0 else _outside_anchor(x, deriv, cum, K, k)
    return GridField(spec, cum - zero), GridField(spec, deriv)


def _outside_anchor(x, deriv, cum, K, k):
    # 0 lies outside the grid: integrate g' from 0 to x[0] exactly with a fine rule
    t = np.linspace(0.0, x[0], 20001)
    d = np.minimum(1.0, k * distance_to_intervals(t, K))
    return -float(np.sum(np.diff(t) * (d[1:] + d[:-1]) * 0.5))


def scalar_gap_oracle(K, k, lo=0.0, hi=1.0):
    """Exact value of int_lo^hi (1 - min(1, k dist(x, K))) dx for intervals K inside [lo, hi]."""
    K = merge_intervals(K)
    if len(K) == 0:
        return 0.0
    w = 1.0 / k
    parts = [K[:, 1] - K[:, 0]]
    gaps = K[1:, 0] - K[:-1, 1]
    # a gap of length l loses l - k l^2 / 4 when l < 2/k and 1/k otherwise
    parts.append(np.where(gaps >= 2 * w, w, gaps - k * gaps ** 2 / 4.0))
    for edge in (K[0, 0] - lo, hi - K[-1, 1]):
        # one-sided: distance grows from the interval end only
        parts.append(np.array([w / 2 if edge >= w else edge - k * edge ** 2 / 2.0]))
    return math.fsum(np.concatenate(parts))


# -- max-min approximants --------------------------------------------------------

class MaxMinApproximant:
    """g_k(x) = min_j g(s_j) + L h_k(x - s_j) with h_k(x) = max_{i<j} |<s_i - s_j, x>| / |s_i - s_j|.

    Built from the values g(s_j) and the Lipschitz constant L only.
    """

    def __init__(self, points, values, lip):
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if len(np.unique(pts, axis=0)) != len(pts):
            raise ValidationError("sample points must be distinct")
        self.points = pts
        self.values = np.asarray(values, dtype=float).reshape(-1)
        self.lip = float(lip)
        i, j = np.triu_indices(len(pts), 1)
        d = pts[i] - pts[j]
        self.directions = d / np.linalg.norm(d, axis=1, keepdims=True)

    def h(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if len(self.directions) == 0:
            return np.zeros(len(x))
        return np.max(np.abs(x @ self.directions.T), axis=1)

    def __call__(self, x, chunk=4096):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.points.shape[1] and self.points.shape[1] == 1:
            x = x.reshape(-1, 1)
        out = np.empty(len(x))
        for s in range(0, len(x), chunk):
            xs = x[s:s + chunk]
            best = np.full(len(xs), np.inf)
            for sj, gj in zip(self.points, self.values):
                np.minimum(best, gj + self.lip * self.h(xs - sj), out=best)
            out[s:s + chunk] = best
        return out


def dense_sequence(n, k, lo=-1.0, hi=1.0):
    """0 followed by the first k - 1 scaled Halton points that differ from 0."""
    pts = lo + (hi - lo) * qmc.Halton(d=n, scramble=False).random(k + 1)[1:]
    pts = pts[np.any(pts != 0, axis=1)][: k - 1]
    return np.concatenate([np.zeros((1, n)), pts])


def pl_maxmin_sequence(g, points, lip):
    """Max-min approximant of g through ``points`` (first point must be 0)."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if np.any(pts[0] != 0):
        raise ValidationError("the first sample point must be the origin")
    if len(np.unique(pts, axis=0)) != len(pts):
        raise ValidationError("sample points must be distinct")
    vals = np.asarray(g(pts), dtype=float).reshape(-1)
    return MaxMinApproximant(pts, vals, lip)


# -- inf-convolution -------------------------------------------------------------

def inf_convolution(g: GridField, k) -> GridField:
    """min over grid points y of g(y) + k |x - y|, exactly.

    Only points with g(y) below max g can beat g(x) itself, and such a y
    matters only within distance (max g - g(y)) / k, so each candidate
    updates a bounded window.
    """
    if not k > 0:
        raise ValidationError("k must be positive")
    spec = g.spec
    h = np.asarray(spec.spacing)
    arr = g.array
    out = arr.copy()
    top = float(arr.max())
    pts_axes = [spec.axis_values(a) for a in range(spec.dim)]
    cand = np.argwhere(arr < top)
    # cheapest candidates first; lets later windows shrink against the running minimum
    order = np.argsort(arr[tuple(cand.T)], kind="stable")
    for c in cand[order]:
        gy = arr[tuple(c)]
        rad = (top - gy) / k
        lo = [max(0, int(c[a] - math.floor(rad / h[a]) - 1)) for a in range(spec.dim)]
        hi = [min(spec.counts[a], int(c[a] + math.floor(rad / h[a]) + 2)) for a in range(spec.dim)]
        sl = tuple(slice(a, b) for a, b in zip(lo, hi))
        grids = np.meshgrid(*[pts_axes[a][lo[a]:hi[a]] - pts_axes[a][c[a]] for a in range(spec.dim)], indexing="ij")
        dist = np.sqrt(sum(gr * gr for gr in grids))
        np.minimum(out[sl], gy + k * dist, out=out[sl])
    return GridField(spec, out.reshape(-1))
