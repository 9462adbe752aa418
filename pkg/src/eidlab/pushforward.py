"""Pushforward measures under vertex maps and singular-mass diagnostics."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .energy import PEnergyForm, energy_measure
from .errors import ValidationError
from .independence import SphereSampler, independence_decomposition
from .space import BinnedMeasure, bin_points

VERDICTS = ("consistent-with-EID", "singular", "inconclusive", "not-independent")


def _tuple_points(phis):
    phis = [np.asarray(p, dtype=float).reshape(-1) for p in phis]
    if not phis:
        raise ValidationError("need at least one component")
    return np.column_stack(phis)


def pushforward(phis, w, A, h, origin=None) -> BinnedMeasure:
    """Bin the image points phi(x), x in A, with weights w(x)."""
    pts = _tuple_points(phis)
    w = np.asarray(w, dtype=float)
    A = np.ones(len(pts), dtype=bool) if A is None else np.asarray(A, dtype=bool)
    return bin_points(pts[A], w[A], h, origin)


def singular_mass(binned: BinnedMeasure, C):
    """Mass above the envelope C h^n, summed over boxes."""
    return math.fsum(np.maximum(0.0, binned.mass - C * binned.box_volume))


def singular_mass_profile(phis, w, A, ladder, C, origin=None):
    """[(h, s_C(h))] for a strictly decreasing ladder of box sides."""
    ladder = [float(h) for h in ladder]
    if any(not h > 0 for h in ladder):
        raise ValidationError("box sides must be positive")
    if any(b >= a for a, b in zip(ladder, ladder[1:])):
        raise ValidationError("resolution ladder must be strictly decreasing")
    if not C > 0:
        raise ValidationError("density cap must be positive")
    return [(h, singular_mass(pushforward(phis, w, A, h, origin), C)) for h in ladder]


# -- Cantor sets --------------------------------------------------------------

def cantor_intervals(level, lo=0.0, hi=1.0):
    """Closed intervals of the middle-thirds construction at ``level``."""
    iv = np.array([[lo, hi]])
    for _ in range(level):
        third = (iv[:, 1] - iv[:, 0]) / 3.0
        iv = np.concatenate([np.stack([iv[:, 0], iv[:, 0] + third], 1),
                             np.stack([iv[:, 1] - third, iv[:, 1]], 1)])
        iv = iv[np.argsort(iv[:, 0])]
    return iv


def merge_intervals(iv):
    """Sort and merge overlapping closed intervals."""
    iv = np.asarray(iv, dtype=float).reshape(-1, 2)
    if len(iv) == 0:
        return iv
    if np.any(iv[:, 1] < iv[:, 0]):
        raise ValidationError("interval endpoints out of order")
    iv = iv[np.argsort(iv[:, 0], kind="stable")]
    out = [list(iv[0])]
    for a, b in iv[1:]:
        if a <= out[-1][1]:
            out[-1][1] = max(out[-1][1], b)
        else:
            out.append([a, b])
    return np.array(out)


def neighborhood(iv, eps):
    """Closed eps-neighborhood of a union of intervals, as merged intervals."""
    iv = np.asarray(iv, dtype=float).reshape(-1, 2)
    return merge_intervals(np.stack([iv[:, 0] - eps, iv[:, 1] + eps], 1))


def union_length(iv):
    iv = merge_intervals(iv)
    return math.fsum(iv[:, 1] - iv[:, 0]) if len(iv) else 0.0


def distance_to_intervals(x, iv):
    """Distance from each x to a union of closed intervals (inf if empty)."""
    x = np.asarray(x, dtype=float)
    iv = merge_intervals(iv)
    if len(iv) == 0:
        return np.full(x.shape, np.inf)
    # nearest interval is the last one starting at or before x, or the next one
    j = np.searchsorted(iv[:, 0], x, side="right") - 1
    jl = np.clip(j, 0, len(iv) - 1)
    jr = np.clip(j + 1, 0, len(iv) - 1)
    dl = np.where(j >= 0, np.maximum(0.0, x - iv[jl, 1]), np.inf)
    dl = np.where((j >= 0) & (x <= iv[jl, 1]), 0.0, dl)
    dr = np.where(j + 1 < len(iv), np.maximum(0.0, iv[jr, 0] - x), np.inf)
    return np.minimum(dl, dr)


def interval_mass(points, weights, iv):
    """Total weight of the points lying in a union of closed intervals."""
    d = distance_to_intervals(points, iv)
    return math.fsum(np.asarray(weights, dtype=float)[d == 0.0])


# -- experiments --------------------------------------------------------------

@dataclass
class EidConfig:
    """Parameters of a refinement experiment.

    ``C`` is the density cap, ``match`` the factor in h = match * sqrt(mesh),
    ``floor`` the singular fraction below which the tuple counts as non
    singular and ``decrease`` the minimal relative drop per refinement step.
    """

    C: float
    match: float = 1.0
    floor: float = 0.5
    decrease: float = 0.4
    sampler: SphereSampler | None = None
    origin: np.ndarray | None = None


@dataclass
class EidLevel:
    form: PEnergyForm
    phis: list
    A: np.ndarray | None = None


@dataclass
class EidReport:
    rows: list = field(default_factory=list)  # (mesh, h, C, singular_mass, total_mass)
    verdict: str = "inconclusive"
    independent_mass: list = field(default_factory=list)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["graph_mesh", "h", "C", "singular_mass", "total_mass", "verdict"])
        for mesh, h, C, s, tot in self.rows:
            w.writerow([repr(mesh), repr(h), repr(C), repr(s), repr(tot), self.verdict])
        return buf.getvalue()

    @property
    def profile(self):
        return [r[3] for r in self.rows]


def _mesh(form):
    g = form.graph
    if g.grid is not None:
        return float(np.max(g.grid.spacing))
    return float(np.max(g.edge_lengths(), initial=0.0))


def _check_nested(levels):
    grids = [lv.form.graph.grid for lv in levels]
    meshes = [_mesh(lv.form) for lv in levels]
    if any(b >= a for a, b in zip(meshes, meshes[1:])):
        raise ValidationError("refinement sequence must have strictly decreasing mesh")
    if all(g is not None for g in grids):
        for a, b in zip(grids, grids[1:]):
            if a.dim != b.dim or a.lo != b.lo or a.hi != b.hi:
                raise ValidationError("refinement grids must share their extent")
            for na, nb in zip(a.counts, b.counts):
                if (nb - 1) % (na - 1):
                    raise ValidationError("refinement grids are not nested")
    return meshes


def eid_experiment(levels, config: EidConfig) -> EidReport:
    """Singular-mass trend of phi_*(1_{A and I_phi} Lambda_phi) under refinement.

    I_phi is the p-independence set from the sampled lattice infimum.  The
    verdict is ``consistent-with-EID`` when the singular mass at matched box
    sides drops by at least ``decrease`` each step, ``singular`` when it stays
    at or above ``floor`` times the pushed mass, ``not-independent`` when the
    tuple is degenerate on A but its image is not concentrated.
    """
    levels = [lv if isinstance(lv, EidLevel) else EidLevel(*lv) for lv in levels]
    if len(levels) < 2:
        raise ValidationError("need at least two refinement levels")
    meshes = _check_nested(levels)
    rep = EidReport()
    full, restricted, totals, rtotals = [], [], [], []
    for lv, mesh in zip(levels, meshes):
        form = lv.form
        n = len(lv.phis)
        V = form.graph.n_vertices
        A = np.ones(V, dtype=bool) if lv.A is None else np.asarray(lv.A, dtype=bool)
        lam = np.sum([energy_measure(form, p) for p in lv.phis], axis=0)
        sampler = config.sampler or SphereSampler(n, 720 if n <= 2 else 2000)
        if n == 1:
            I = lam > 0
        else:
            dec = independence_decomposition(form, lv.phis, A, sampler)
            I = dec.covered if dec.covered is not None else np.zeros(V, dtype=bool)
        h = config.match * math.sqrt(mesh)
        pts = _tuple_points(lv.phis)
        origin = np.zeros(n) if config.origin is None else config.origin
        b_all = bin_points(pts[A], lam[A], h, origin)
        b_ind = bin_points(pts[A & I], lam[A & I], h, origin)
        full.append(singular_mass(b_all, config.C))
        totals.append(b_all.total())
        restricted.append(singular_mass(b_ind, config.C))
        rtotals.append(b_ind.total())
        rep.rows.append((mesh, h, float(config.C), restricted[-1], rtotals[-1]))
    rep.independent_mass = rtotals
    if all(t == 0.0 for t in rtotals):
        # nothing to push: EID says nothing, but concentration is still reported
        rep.rows = [(r[0], r[1], r[2], s, t) for r, s, t in zip(rep.rows, full, totals)]
        sing = all(s >= config.floor * t and t > 0 for s, t in zip(full, totals))
        rep.verdict = "singular" if sing else "not-independent"
        return rep
    if all(b <= (1.0 - config.decrease) * a for a, b in zip(restricted, restricted[1:])):
        rep.verdict = "consistent-with-EID"
    elif all(s >= config.floor * t for s, t in zip(restricted, rtotals)):
        rep.verdict = "singular"
    else:
        rep.verdict = "inconclusive"
    return rep
