"""Lattice infima over unit directions and p-independence of function tuples."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.spatial import SphericalVoronoi
from scipy.stats import qmc

from .energy import PEnergyForm, cdc_matrix, edge_differences, energy_measure
from .errors import InconsistencyError, UnsupportedError, ValidationError

POSITIVITY_TOL = 1e-10
SCHEMES = ("low-discrepancy", "ladder")
GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


@dataclass(frozen=True)
class SphereSampler:
    """Deterministic unit vectors in R^n, always including +-e_i.

    ``low-discrepancy`` (n <= 3) takes a prefix of a fixed sequence (golden
    angle on the circle, scrambled-free Halton mapped by equal-area projection
    on the 2-sphere), so a larger count is always a superset.  ``ladder``
    normalizes the points of a cube-surface grid with 2^level cells per edge;
    raising the level also gives a superset.
    """

    n: int
    count: int = 720
    scheme: str = "low-discrepancy"

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError("dimension must be positive")
        if self.scheme not in SCHEMES:
            raise ValidationError(f"unknown sphere scheme {self.scheme!r}")
        if self.scheme == "low-discrepancy" and self.n > 3:
            raise UnsupportedError("low-discrepancy sampling is provided for n <= 3; use the ladder")
        if self.count < 1:
            raise ValidationError("sample count must be positive")

    @cached_property
    def points(self):
        n = self.n
        basis = np.concatenate([np.eye(n), -np.eye(n)])
        if n == 1:
            return basis
        if self.scheme == "ladder":
            pts = _cube_surface(n, self.ladder_level)
        elif n == 2:
            t = (np.arange(self.count) * GOLDEN_ANGLE) % (2 * math.pi)
            pts = np.stack([np.cos(t), np.sin(t)], axis=1)
        else:
            u = qmc.Halton(d=2, scramble=False).random(self.count + 1)[1:]
            z = 1.0 - 2.0 * u[:, 0]
            r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
            t = 2 * math.pi * u[:, 1]
            pts = np.stack([r * np.cos(t), r * np.sin(t), z], axis=1)
        pts = np.concatenate([basis, pts])
        pts /= np.linalg.norm(pts, axis=1, keepdims=True)
        _, keep = np.unique(np.round(pts, 14), axis=0, return_index=True)
        return pts[np.sort(keep)]

    @property
    def ladder_level(self):
        # smallest level whose cube-surface grid has at least ``count`` points
        level = 0
        while 2 * self.n * (2 ** level + 1) ** (self.n - 1) < self.count:
            level += 1
        return level

    @cached_property
    def covering_angle(self):
        """Upper bound on the angle from any unit vector to the nearest sample."""
        n, pts = self.n, self.points
        if n == 1:
            return 0.0
        if self.scheme == "ladder":
            s = 2.0 / 2 ** self.ladder_level
            return s * math.sqrt(n - 1) / 2.0
        if n == 2:
            t = np.sort(np.arctan2(pts[:, 1], pts[:, 0]))
            gaps = np.diff(np.concatenate([t, [t[0] + 2 * math.pi]]))
            return float(gaps.max() / 2.0)
        sv = SphericalVoronoi(pts, radius=1.0, threshold=1e-10)
        # Voronoi vertices are the points farthest from every generator
        v = sv.vertices / np.linalg.norm(sv.vertices, axis=1, keepdims=True)
        cosmax = np.max(v @ pts.T, axis=1)
        return float(np.max(np.arccos(np.clip(cosmax, -1.0, 1.0))))

    def resolution(self, p=2.0):
        """Largest possible overestimate of the lattice infimum due to sampling.

        Directional energies N(lambda) = Gamma_p<<lambda, phi>>^(1/p) form a
        seminorm with N(mu) <= c |mu| Lambda_phi^(1/p), c = n^max(0, 1/q - 1/2),
        and the nearest sample is within chord length covering_angle.
        """
        q = p / (p - 1.0)
        c = self.n ** max(0.0, 1.0 / q - 0.5)
        return (c * self.covering_angle) ** p


def _cube_surface(n, level):
    m = 2 ** level
    ticks = np.linspace(-1.0, 1.0, m + 1)
    out = []
    for axis in range(n):
        rest = np.stack(np.meshgrid(*([ticks] * (n - 1)), indexing="ij"), axis=-1).reshape(-1, n - 1)
        for sign in (1.0, -1.0):
            pts = np.insert(rest, axis, sign, axis=1)
            out.append(pts)
    return np.concatenate(out)


@dataclass(frozen=True)
class LatticeInfimum:
    values: np.ndarray  # NaN at excluded vertices
    excluded: np.ndarray  # vertices where Lambda_phi vanishes
    lambda_measure: np.ndarray


def _directional_energies(form, phis, dirs, chunk=64):
    """Gamma_p<<lambda, phi>>({x}) for every sampled lambda, shape (V, S)."""
    g = form.graph
    D = edge_differences(form, np.column_stack(phis)) if form.variant == "edgewise" else None
    out = np.empty((g.n_vertices, len(dirs)))
    for s in range(0, len(dirs), chunk):
        L = dirs[s:s + chunk]
        if D is not None:
            e = g.conductance[:, None] * np.abs(D @ L.T) ** form.p
            out[:, s:s + chunk] = 0.5 * (g.endpoint_sum @ e)
        else:
            Phi = np.column_stack(phis)
            for j, lam in enumerate(L):
                out[:, s + j] = energy_measure(form, Phi @ lam)
    return out


def lattice_infimum(form: PEnergyForm, phis, sampler: SphereSampler) -> LatticeInfimum:
    """Pointwise minimum over sampled lambda of dGamma_p<<lambda, phi>>/dLambda_phi."""
    phis = [np.asarray(p, dtype=float) for p in phis]
    if len(phis) != sampler.n:
        raise ValidationError("sampler dimension must match the tuple length")
    lam_meas = np.sum([energy_measure(form, p) for p in phis], axis=0)
    charged = lam_meas > 0
    vals = np.full(form.graph.n_vertices, np.nan)
    E = _directional_energies(form, phis, sampler.points)
    vals[charged] = E[charged].min(axis=1) / lam_meas[charged]
    return LatticeInfimum(vals, np.flatnonzero(~charged), lam_meas)


@dataclass
class Decomposition:
    parts: list  # (i, mask) with mask = {x in A : G(x) > 1/i}, nested increasing
    residual_mass: float
    lambda_mass: float

    @property
    def independent(self):
        return self.residual_mass == 0.0

    @property
    def covered(self):
        return self.parts[-1][1] if self.parts else None


def independence_decomposition(form: PEnergyForm, phis, A, sampler: SphereSampler, tol=POSITIVITY_TOL):
    """Split A into the level sets A_i = {G > 1/i} of the lattice infimum G.

    Only the levels at which A_i grows are listed.  Values at or below ``tol``
    count as zero, as do values within the sampler's resolution, since a
    sampled minimum that small is compatible with a vanishing infimum.
    """
    A = np.asarray(A, dtype=bool)
    li = lattice_infimum(form, phis, sampler)
    G = np.nan_to_num(li.values, nan=0.0)
    pos = A & (G > max(tol, sampler.resolution(form.p)))
    entry = np.zeros(len(G), dtype=np.int64)
    entry[pos] = np.floor(1.0 / G[pos]).astype(np.int64) + 1
    parts = [(int(i), pos & (entry <= i)) for i in np.unique(entry[pos])]
    lam = li.lambda_measure
    resid = math.fsum(lam[A & ~pos])
    return Decomposition(parts, resid, math.fsum(lam[A]))


@dataclass
class DetEquivalenceReport:
    vertices: np.ndarray
    trace: np.ndarray
    det: np.ndarray
    sigma1: np.ndarray
    lattice_inf: np.ndarray
    det_verdict: np.ndarray
    lattice_verdict: np.ndarray  # 1 positive, 0 not positive, -1 within resolution band
    band: float

    @property
    def agree(self):
        decided = self.lattice_verdict >= 0
        return bool(np.all(self.det_verdict[decided] == (self.lattice_verdict[decided] == 1)))

    @property
    def independent_set(self):
        return self.vertices[self.det_verdict]

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["vertex", "trace", "det", "sigma1", "lattice_inf", "verdict"])
        for k, v in enumerate(self.vertices):
            verdict = "independent" if self.det_verdict[k] else ("uncharged" if self.trace[k] == 0 else "degenerate")
            w.writerow([int(v), repr(float(self.trace[k])), repr(float(self.det[k])), repr(float(self.sigma1[k])),
                        repr(float(self.lattice_inf[k])), verdict])
        return buf.getvalue()


def det_equivalence_check(form: PEnergyForm, phis, nu, A, sampler: SphereSampler, tol=POSITIVITY_TOL):
    """Compare det(gamma_nu(phi)) > 0 with positivity of the sampled lattice infimum.

    The sampled infimum overestimates sigma_1/trace by at most the squared
    covering angle, so vertices whose sampled value falls inside that band
    are left undecided instead of being counted as disagreement.
    """
    form.require_quadratic()
    phis = [np.asarray(p, dtype=float) for p in phis]
    n = len(phis)
    A = np.asarray(A, dtype=bool)
    field = cdc_matrix(form, phis, nu)
    tr, det, s1 = field.trace(), field.det(), field.sigma1()
    in_T = A & (tr > 0)
    det_pos = in_T & (det > tol * tr ** n)

    li = lattice_infimum(form, phis, sampler)
    G = np.nan_to_num(li.values, nan=0.0)
    # det <= tol tr^n bounds sigma_1/tr by (n tol)^(1/(n-1)) when n >= 2
    det_slack = (n * tol) ** (1.0 / (n - 1)) if n > 1 else tol
    band = sampler.resolution(2.0) + det_slack
    lat = np.where(G > band, 1, np.where(G <= tol, 0, -1))

    # on the independent set, 1_I nu and 1_I Lambda_phi have the same null vertices
    nu = np.asarray(nu, dtype=float)
    if np.any((nu[det_pos] > 0) != (li.lambda_measure[det_pos] > 0)):
        raise InconsistencyError("nu and Lambda_phi have different null sets on the independent set")

    idx = np.flatnonzero(A)
    rep = DetEquivalenceReport(idx, tr[idx], det[idx], s1[idx], G[idx], det_pos[idx], lat[idx], band)
    if not rep.agree:
        bad = idx[(lat[idx] >= 0) & (det_pos[idx] != (lat[idx] == 1))]
        raise InconsistencyError(f"determinant and lattice-infimum verdicts disagree at vertex {int(bad[0])}")
    return rep
