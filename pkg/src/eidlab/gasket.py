"""Sierpinski gasket approximations, harmonic functions and the Kusuoka measure.

Points are kept in integer lattice coordinates (a, b) at level m, standing for
(a p1 + b p2) / 2^m with corners p0 = (0, 0), p1 = (1, 0), p2 = (1/2, sqrt(3)/2).
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .energy import PEnergyForm, bilinear_energy, cdc_matrix, p_energy
from .errors import ResourceError, ValidationError
from .linalg import sym_eigvalsh
from .space import MetricGraph

DEFAULT_MAX_LEVEL = 9
RENORMALIZATION = 5.0 / 3.0
TAUS = (0.2, 0.1, 0.05, 0.01)
# edge (i, j) of a cell and the corner opposite to it
CELL_EDGES = ((0, 1), (0, 2), (1, 2))
HARMONIC_PAIR = (
    np.array([2.0, -1.0, -1.0]) / math.sqrt(6.0),
    np.array([0.0, 1.0, -1.0]) / math.sqrt(2.0),
)


def _refine(cells):
    """Split each cell (A, B, C) into (A, AB, AC), (AB, B, BC), (AC, BC, C)."""
    A, B, C = cells[:, 0], cells[:, 1], cells[:, 2]
    ab, ac, bc = (A + B) // 2, (A + C) // 2, (B + C) // 2
    out = np.stack([
        np.stack([A, ab, ac], 1),
        np.stack([ab, B, bc], 1),
        np.stack([ac, bc, C], 1),
    ], 1)
    return out.reshape(-1, 3, 2)


def lattice_cells(m):
    """Corner lattice coordinates of the 3^m level-m cells, in address order."""
    N = 2 ** m
    cells = np.array([[[0, 0], [N, 0], [0, N]]], dtype=np.int64)
    for _ in range(m):
        cells = _refine(cells)
    return cells


@dataclass(frozen=True, eq=False)
class GasketLevel:
    m: int
    graph: MetricGraph
    cells: np.ndarray  # (3^m, 3) vertex ids, cell corners in address order
    lattice: np.ndarray  # (V, 2) integer coordinates
    boundary: tuple  # vertex ids of p0, p1, p2

    @property
    def n_cells(self):
        return len(self.cells)

    @cached_property
    def rotation(self):
        """Vertex permutation of the order-3 rotation p0 -> p1 -> p2 -> p0."""
        N = 2 ** self.m
        a, b = self.lattice[:, 0], self.lattice[:, 1]
        rot = np.stack([N - a - b, a], 1)
        return _lookup(self.lattice, rot)

    @cached_property
    def cell_edge_index(self):
        """Index into graph.edges of each cell's three edges."""
        V = self.graph.n_vertices
        key = self.graph.edges[:, 0] * V + self.graph.edges[:, 1]
        out = np.empty((self.n_cells, 3), dtype=np.int64)
        for j, (p, q) in enumerate(CELL_EDGES):
            u = np.minimum(self.cells[:, p], self.cells[:, q])
            v = np.maximum(self.cells[:, p], self.cells[:, q])
            out[:, j] = np.searchsorted(key, u * V + v)
        return out


def _lookup(table, rows):
    """Row indices of ``rows`` inside the lexicographically sorted ``table``."""
    M = int(max(table.max(), rows.max())) + 1
    tk = table[:, 0] * M + table[:, 1]
    rk = rows[:, 0] * M + rows[:, 1]
    idx = np.searchsorted(tk, rk)
    if np.any(tk[np.clip(idx, 0, len(tk) - 1)] != rk):
        raise ValidationError("point not on the gasket lattice")
    return idx


def sg_graph(m, max_level=DEFAULT_MAX_LEVEL) -> GasketLevel:
    """Level-m approximation: 3^m triangles, conductance (5/3)^m on every edge."""
    if m < 0:
        raise ValidationError("level must be nonnegative")
    if m > max_level:
        raise ResourceError(f"gasket level {m} exceeds the cap {max_level}")
    lat_cells = lattice_cells(m)
    flat = lat_cells.reshape(-1, 2)
    lattice = np.unique(flat, axis=0)
    ids = _lookup(lattice, flat).reshape(-1, 3)
    edges = np.concatenate([ids[:, [p, q]] for p, q in CELL_EDGES])
    cond = np.full(len(edges), RENORMALIZATION ** m)
    N = 2 ** m
    unit = np.array([[1.0, 0.0], [0.5, math.sqrt(3) / 2]])
    coords = lattice @ unit / N
    graph = MetricGraph(len(lattice), edges, cond, coords)
    boundary = tuple(int(i) for i in _lookup(lattice, np.array([[0, 0], [N, 0], [0, N]])))
    return GasketLevel(m, graph, ids, lattice, boundary)


def harmonic_cell_values(m, boundary_values):
    """Corner values of the harmonic function on every level-m cell, shape (3^m, 3).

    Each refinement puts (2 x + 2 y + z) / 5 at the midpoint of the edge xy,
    z being the opposite corner.
    """
    vals = np.asarray(boundary_values, dtype=float).reshape(1, 3)
    for _ in range(m):
        a, b, c = vals[:, 0], vals[:, 1], vals[:, 2]
        ab = (2 * a + 2 * b + c) / 5
        ac = (2 * a + 2 * c + b) / 5
        bc = (2 * b + 2 * c + a) / 5
        vals = np.stack([
            np.stack([a, ab, ac], 1),
            np.stack([ab, b, bc], 1),
            np.stack([ac, bc, c], 1),
        ], 1).reshape(-1, 3)
    return vals


def harmonic_extension(level: GasketLevel, boundary_values):
    """Vertex values of the harmonic function with the given values at p0, p1, p2."""
    cv = harmonic_cell_values(level.m, boundary_values)
    out = np.empty(level.graph.n_vertices)
    out[level.cells.reshape(-1)] = cv.reshape(-1)
    return out


def piecewise_harmonic(level: GasketLevel, coarse_values_fn, j):
    """Function harmonic inside each level-j cell, with given values at level-j vertices.

    ``coarse_values_fn(lattice_points_at_level_j)`` supplies the coarse values.
    """
    if not 0 <= j <= level.m:
        raise ValidationError("coarse level must lie between 0 and m")
    coarse = lattice_cells(j)
    coarse_lat = np.unique(coarse.reshape(-1, 2), axis=0)
    cvals = np.asarray(coarse_values_fn(coarse_lat), dtype=float)
    corner = cvals[_lookup(coarse_lat, coarse.reshape(-1, 2))].reshape(-1, 3)
    sub = level.m - j
    # address order nests: the 3^sub fine cells of coarse cell w are contiguous
    fine = np.concatenate([harmonic_cell_values(sub, cv) for cv in corner])
    out = np.empty(level.graph.n_vertices)
    out[level.cells.reshape(-1)] = fine.reshape(-1)
    return out


def gasket_form(level: GasketLevel, measure=None) -> PEnergyForm:
    mu = np.ones(level.graph.n_vertices) if measure is None else measure
    return PEnergyForm(level.graph, mu, 2.0)


def cell_gram(level: GasketLevel, fs):
    """Per-cell energy matrices sum_edges c (df_i)(df_j), shape (3^m, n, n)."""
    F = np.column_stack([np.asarray(f, dtype=float) for f in fs])
    c = RENORMALIZATION ** level.m
    out = np.zeros((level.n_cells, F.shape[1], F.shape[1]))
    for p, q in CELL_EDGES:
        d = F[level.cells[:, p]] - F[level.cells[:, q]]
        out += c * d[:, :, None] * d[:, None, :]
    return out


def harmonic_pair(level: GasketLevel):
    """Energy-orthonormal, rotation-equivariant harmonic pair."""
    s = 1.0 / math.sqrt(3.0)  # both boundary vectors have level-0 energy 3
    return tuple(s * harmonic_extension(level, v) for v in HARMONIC_PAIR)


def kusuoka_measure(level: GasketLevel):
    """Vertex masses of Gamma<h1> + Gamma<h2> (edge energies split between endpoints)."""
    h1, h2 = harmonic_pair(level)
    g = level.graph
    e = g.conductance * ((g.incidence @ h1) ** 2 + (g.incidence @ h2) ** 2)
    return 0.5 * (g.endpoint_sum @ e)


def kusuoka_cell_mass(level: GasketLevel):
    G = cell_gram(level, harmonic_pair(level))
    return G[:, 0, 0] + G[:, 1, 1]


# -- eigenvalue ratios and rank --------------------------------------------------

@dataclass
class EigenratioProfile:
    m: int
    ratios: np.ndarray
    nu_mass: np.ndarray
    traces: np.ndarray
    fractions: dict = field(default_factory=dict)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["m", "tau", "mass_fraction_below_tau"])
        for tau, frac in self.fractions.items():
            w.writerow([self.m, repr(tau), repr(frac)])
        return buf.getvalue()

    def cells_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["m", "cell", "ratio", "nu_mass"])
        for i, (r, mass) in enumerate(zip(self.ratios, self.nu_mass)):
            w.writerow([self.m, i, repr(float(r)), repr(float(mass))])
        return buf.getvalue()


ATOMS = ("vertex", "cell")


def eigenratio_profile(level: GasketLevel, nu=None, taus=TAUS, atoms="vertex") -> EigenratioProfile:
    """Smaller / larger eigenvalue of gamma_nu(h1, h2) on each atom, and the
    nu-mass fraction of atoms whose ratio is below each tau.

    Atoms are vertices (nu defaults to the vertex Kusuoka measure) or cells
    (nu defaults to the cell Kusuoka mass).
    """
    if atoms not in ATOMS:
        raise ValidationError(f"unknown atom type {atoms!r}")
    hs = harmonic_pair(level)
    if atoms == "vertex":
        nu = kusuoka_measure(level) if nu is None else np.asarray(nu, dtype=float)
        gam = cdc_matrix(gasket_form(level), hs, nu).matrices
    else:
        nu = kusuoka_cell_mass(level) if nu is None else np.asarray(nu, dtype=float)
        gam = _cell_density(cell_gram(level, hs), nu)
    ev = sym_eigvalsh(gam)
    ratios = np.where(ev[:, 1] > 0, np.maximum(ev[:, 0], 0.0) / np.where(ev[:, 1] > 0, ev[:, 1], 1.0), 0.0)
    total = math.fsum(nu)
    fr = {float(t): math.fsum(nu[ratios < t]) / total for t in taus}
    return EigenratioProfile(level.m, ratios, nu, gam[:, 0, 0] + gam[:, 1, 1], fr)


def _cell_density(G, nu):
    pos = nu > 0
    out = np.zeros_like(G)
    out[pos] = G[pos] / nu[pos, None, None]
    return out


def thresholded_rank(matrices, threshold):
    """Number of eigenvalues above threshold times the largest one."""
    ev = sym_eigvalsh(matrices)
    top = ev[..., -1:]
    return np.sum((ev > threshold * top) & (top > 0), axis=-1)


def mass_quantile_rank(ranks, mass, q):
    """Smallest r with nu{rank <= r} >= q nu(total)."""
    mass = np.asarray(mass, dtype=float)
    total = math.fsum(mass)
    if total == 0:
        return 0
    for r in range(int(ranks.max()) + 1):
        if math.fsum(mass[ranks <= r]) >= q * total:
            return r
    return int(ranks.max())


@dataclass
class MdimEstimate:
    value: int
    esssup: int  # plain maximum over charged atoms
    per_tuple: list


def estimate_martingale_dimension(space, nu, tuples, threshold=0.05, quantile=0.99) -> MdimEstimate:
    """Max over tuples of the nu-mass quantile of the thresholded rank of gamma_nu.

    ``space`` is a GasketLevel (cells are the atoms, nu given per cell) or a
    PEnergyForm (vertices are the atoms, nu given per vertex).
    """
    nu = np.asarray(nu, dtype=float)
    per, ess = [], 0
    for fs in tuples:
        if isinstance(space, GasketLevel):
            mats = _cell_density(cell_gram(space, fs), nu)
        else:
            mats = cdc_matrix(space, fs, nu).matrices
        ranks = thresholded_rank(mats, threshold)
        charged = nu > 0
        per.append(mass_quantile_rank(ranks[charged], nu[charged], quantile))
        ess = max(ess, int(ranks[charged].max(initial=0)))
    return MdimEstimate(max(per, default=0), ess, per)


def energy_orthonormal_pair(level: GasketLevel, rng):
    """Two harmonic functions with random boundary data, Gram-Schmidt in energy,
    shifted to mean zero."""
    form = gasket_form(level)
    while True:
        a, b = (harmonic_extension(level, rng.normal(size=3)) for _ in range(2))
        ea = p_energy(form, a)
        if ea <= 0:
            continue
        a = a / math.sqrt(ea)
        b = b - bilinear_energy(form, a, b) * a
        eb = p_energy(form, b)
        # reject nearly collinear draws
        if eb > 1e-6:
            b = b / math.sqrt(eb)
            return a - a.mean(), b - b.mean()


def random_gasket_tuples(level: GasketLevel, rng, n_harmonic=200, n_random=50):
    """Energy-orthonormal harmonic pairs, and their images under random
    holomorphic maps z + a z^2 + b z^3 (z = h1 + i h2) whose derivative stays
    within 1/2 of 1, which are non-harmonic but locally conformal."""
    out = [energy_orthonormal_pair(level, rng) for _ in range(n_harmonic)]
    for _ in range(n_random):
        h1, h2 = energy_orthonormal_pair(level, rng)
        z = h1 + 1j * h2
        R = float(np.abs(z).max())
        a, b = rng.normal(size=2) + 1j * rng.normal(size=2)
        s = 0.5 / (abs(a) * 2 * R + abs(b) * 3 * R * R)
        w = z + s * (a * z ** 2 + b * z ** 3)
        out.append((w.real.copy(), w.imag.copy()))
    return out


@dataclass
class HolderReport:
    d_H: float
    alpha: float
    estimate: float
    bound: float
    passed: bool


def holder_bound_check(d_H, alpha, estimate) -> HolderReport:
    """estimate <= d_H / alpha."""
    if not 0 < alpha <= 1:
        raise ValidationError("alpha must lie in (0, 1]")
    if not d_H > 0:
        raise ValidationError("d_H must be positive")
    bound = d_H / alpha
    return HolderReport(float(d_H), float(alpha), float(estimate), bound, bool(estimate <= bound))


def concentration_fraction(level: GasketLevel, share=0.9):
    """Fraction of cells (uniform mass) needed to carry ``share`` of the Kusuoka mass."""
    nu = np.sort(kusuoka_cell_mass(level))[::-1]
    cum = np.cumsum(nu) / nu.sum()
    k = int(np.searchsorted(cum, share)) + 1
    return k / level.n_cells
