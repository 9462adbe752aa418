"""Cones, cone-null sets, 1-currents built from energy measures, and the
determinant-defect sequence for measures with a cone-null piece."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import ndimage

from .approx import GridField, inf_convolution, variational_approx
from .energy import PEnergyForm, bilinear_energy, generator_apply, polarized_energy_measure
from .errors import InconsistencyError, UnsupportedError, ValidationError
from .space import BinnedMeasure, GridSpec, Polyline, box_indices, stencil_anisotropy

REL_TOL = 1e-12


@dataclass(frozen=True)
class Cone:
    """C(v, theta) = {w : <v, w> >= cos(theta) |w|}."""

    axis: tuple
    theta: float

    def __post_init__(self):
        v = np.asarray(self.axis, dtype=float).reshape(-1)
        nv = np.linalg.norm(v)
        if nv == 0:
            raise ValidationError("cone axis must be nonzero")
        if abs(nv - 1.0) > 1e-14:
            v = v / nv
        if not 0 < self.theta < math.pi / 2:
            raise ValidationError("cone half-angle must lie strictly between 0 and pi/2")
        object.__setattr__(self, "axis", tuple(float(x) for x in v))

    @property
    def v(self):
        return np.array(self.axis)

    @property
    def dim(self):
        return len(self.axis)


def cone_membership(w, cone: Cone, interior=False):
    """Closed (or open) cone membership for one vector or a batch ``(m, n)``.

    A relative tolerance of 1e-12 decides the boundary, so vectors at angle
    exactly theta are members of the closed cone and not of the interior.
    """
    w = np.asarray(w, dtype=float)
    single = w.ndim == 1
    w = np.atleast_2d(w)
    dot = w @ cone.v
    norm = np.linalg.norm(w, axis=1)
    c = math.cos(cone.theta)
    if interior:
        out = (dot > c * norm + REL_TOL * norm) & (norm > 0)
    else:
        out = dot >= c * norm - REL_TOL * norm
    return bool(out[0]) if single else out


def in_double_cone_interior(w, cone: Cone):
    return cone_membership(w, cone, interior=True) | cone_membership(-np.atleast_2d(w), cone, interior=True)


# -- certified cone-null sets ---------------------------------------------------

def in_cantor(x, depth=40, tol=1e-12):
    """Membership in the middle-thirds Cantor set on [0, 1], digit by digit."""
    x = np.atleast_1d(np.asarray(x, dtype=float)).copy()
    ok = (x >= -tol) & (x <= 1 + tol)
    x = np.clip(x, 0.0, 1.0)
    alive = ok.copy()
    for _ in range(depth):
        y = 3.0 * x
        d = np.floor(y + tol)
        r = y - d
        # a digit 1 survives only as the endpoint 0.1000... = 0.0222...
        bad = alive & (d == 1) & (r > tol)
        ok &= ~bad
        endpoint = alive & (d == 1) & (r <= tol)
        alive &= ~bad & ~endpoint
        x = np.clip(np.where(d >= 2, y - 2.0, np.where(d == 1, 0.0, y)), 0.0, 1.0)
        if not alive.any():
            break
    return ok


@dataclass(frozen=True)
class CertifiedConeNull:
    """A compact set with an analytic reason to be cone-null for ``cone``."""

    name: str
    contains: Callable
    cone: Cone
    certificate: str


def hyperplane_piece(normal, offset=0.0, radius=1.0, theta=math.pi / 3, tol=1e-12):
    v = np.asarray(normal, dtype=float)
    v = v / np.linalg.norm(v)

    def contains(pts):
        pts = np.atleast_2d(pts)
        return (np.abs(pts @ v - offset) <= tol) & (np.linalg.norm(pts - offset * v, axis=1) <= radius + tol)

    return CertifiedConeNull(
        "hyperplane", contains, Cone(tuple(v), theta),
        "every segment inside the hyperplane is orthogonal to the cone axis",
    )


def lipschitz_graph(psi, lip, lo=-1.0, hi=1.0, theta=math.pi / 3, tol=1e-12):
    """{(t, psi(t)) : lo <= t <= hi} with LIP[psi] < cot(theta), cone about e_2."""
    if not lip < 1.0 / math.tan(theta):
        raise ValidationError("graph Lipschitz constant must be below cot(theta)")

    def contains(pts):
        pts = np.atleast_2d(pts)
        t = pts[:, 0]
        return (t >= lo - tol) & (t <= hi + tol) & (np.abs(pts[:, 1] - psi(t)) <= tol)

    return CertifiedConeNull(
        "lipschitz-graph", contains, Cone((0.0, 1.0), theta),
        f"chords have slope at most {lip} < cot(theta), so their angle to e_2 exceeds theta",
    )


def cantor_fiber(a=0.0, theta=math.pi / 3, tol=1e-12):
    """{a} x C with C the middle-thirds set; cone about e_2."""

    def contains(pts):
        pts = np.atleast_2d(pts)
        return (np.abs(pts[:, 0] - a) <= tol) & in_cantor(pts[:, 1])

    return CertifiedConeNull(
        "cantor-fiber", contains, Cone((0.0, 1.0), theta),
        "a curve with velocity in the cone is a Lipschitz graph over e_2 and meets the set inside {a} x C, of length zero",
    )


def certified_corpus():
    return [
        hyperplane_piece((1.0, 0.0), 0.0, 1.0),
        lipschitz_graph(lambda t: 0.25 * np.sin(2 * t), 0.5),
        cantor_fiber(0.0),
    ]


def cone_null_violation(K, cone: Cone, curves, h=None):
    """Per-curve length of sub-steps lying in K with chord direction in C° or -C°.

    Curves are resampled at arclength step at most ``h``; a sub-step counts
    when both ends and its midpoint are in K.
    """
    contains = K.contains if isinstance(K, CertifiedConeNull) else K
    out = []
    for c in curves:
        if h is not None:
            c = c.resample(h)
        p = c.points
        a, b = p[:-1], p[1:]
        chord = b - a
        mid = 0.5 * (a + b)
        hit = contains(a) & contains(b) & contains(mid) & in_double_cone_interior(chord, cone)
        out.append(math.fsum(c.segment_lengths[hit]))
    return np.array(out)


# -- cone upper gradient ----------------------------------------------------------

def direction_set(n, count=None, cone: Cone | None = None):
    """Unit directions: uniform angles in 2D, a Fibonacci sphere in 3D.

    In 2D the boundary rays of the cone and its negative are added, which makes
    sup over the complement of the open double cone exact for linear functions.
    """
    if n == 2:
        count = count or 720
        t = 2 * math.pi * np.arange(count) / count
        dirs = np.stack([np.cos(t), np.sin(t)], 1)
        if cone is not None:
            base = math.atan2(cone.v[1], cone.v[0])
            extra = [base + s * cone.theta + m * math.pi for s in (-1, 1) for m in (0, 1)]
            dirs = np.concatenate([dirs, np.stack([np.cos(extra), np.sin(extra)], 1)])
        return dirs
    if n == 3:
        count = count or 10_000
        i = np.arange(count) + 0.5
        z = 1 - 2 * i / count
        r = np.sqrt(1 - z * z)
        t = math.pi * (3 - math.sqrt(5)) * i
        return np.stack([r * np.cos(t), r * np.sin(t), z], 1)
    raise UnsupportedError("direction sets are provided for n = 2, 3")


def direction_resolution(n, count=None):
    """Covering angle of direction_set(n, count)."""
    if n == 2:
        return math.pi / (count or 720)
    count = count or 10_000
    # Fibonacci sphere cells have area 4 pi / count; a generous covering radius
    return 2.0 * math.sqrt(4.0 / count)


def cone_upper_gradient(grad, points, K, cone: Cone, count=None):
    """|grad f| off K; on K the sup of |<grad f, w>| over directions w outside C° and -C°."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    G = np.atleast_2d(np.asarray(grad(pts), dtype=float))
    contains = K.contains if isinstance(K, CertifiedConeNull) else K
    inK = np.zeros(len(pts), dtype=bool) if contains is None else np.asarray(contains(pts), dtype=bool)
    out = np.linalg.norm(G, axis=1)
    if inK.any():
        dirs = direction_set(pts.shape[1], count, cone)
        dirs = dirs[~in_double_cone_interior(dirs, cone)]
        out[inK] = np.max(np.abs(G[inK] @ dirs.T), axis=1)
    return out


# -- currents ---------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Current1:
    """Atomic R^n-valued measure: vectors placed at locations."""

    locations: np.ndarray
    vectors: np.ndarray
    provenance: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        loc = np.atleast_2d(np.asarray(self.locations, dtype=float))
        vec = np.atleast_2d(np.asarray(self.vectors, dtype=float))
        if loc.shape != vec.shape:
            raise ValidationError("one vector per location required")
        object.__setattr__(self, "locations", loc)
        object.__setattr__(self, "vectors", vec)

    @property
    def dim(self):
        return self.locations.shape[1]

    @property
    def mass(self):
        return np.linalg.norm(self.vectors, axis=1)

    @property
    def direction(self):
        m = self.mass
        out = np.zeros_like(self.vectors)
        pos = m > 0
        out[pos] = self.vectors[pos] / m[pos, None]
        return out

    def total_mass(self):
        return math.fsum(self.mass)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        n = self.dim
        w.writerow([f"x{i + 1}" for i in range(n)] + [f"v{i + 1}" for i in range(n)])
        for x, v in zip(self.locations, self.vectors):
            w.writerow([repr(float(a)) for a in x] + [repr(float(a)) for a in v])
        return buf.getvalue()


def build_current(form: PEnergyForm, fs, g) -> Current1:
    """T_{f,g}: atom at f(x) with vector (Gamma(f_j, g)({x}))_j."""
    form.require_quadratic()
    fs = [np.asarray(f, dtype=float) for f in fs]
    g = np.asarray(g, dtype=float)
    vec = np.column_stack([polarized_energy_measure(form, f, g) for f in fs])
    return Current1(np.column_stack(fs), vec, (form, tuple(fs), g))


@dataclass
class BoundaryCheck:
    value: float
    chain_rule: float
    generator: float
    bound: float


def _close(a, b, tol, scale):
    return abs(a - b) <= tol * max(abs(a), abs(b), scale)


def current_boundary(T: Current1, phi, grad_phi, third_derivative_bound=0.0, tol=1e-8) -> BoundaryCheck:
    """dT(phi) = sum_x <grad phi(f(x)), vector(x)>, checked against E(phi o f, g)
    and -sum_x A g(x) phi(f(x)) mu(x).

    For nonlinear phi the first route differs from the energy by at most
    sum_edges c |dg| M3 |df|^3 / 12 (trapezoid error), where M3 bounds the third
    derivative of phi; the energy and generator routes agree exactly.
    """
    if T.provenance is None:
        raise UnsupportedError("boundary needs a current built from (form, f, g)")
    form, fs, g = T.provenance
    F = np.column_stack(fs)
    grads = np.atleast_2d(np.asarray(grad_phi(F), dtype=float))
    terms = np.sum(grads * T.vectors, axis=1)
    value = math.fsum(terms)
    pf = np.asarray(phi(F), dtype=float).reshape(-1)
    chain = bilinear_energy(form, pf, g)
    gen_terms = -generator_apply(form, g) * pf * form.measure
    gen = math.fsum(gen_terms)
    gr = form.graph
    dF = gr.incidence @ F
    dg = gr.incidence @ g
    bound = float(third_derivative_bound) * math.fsum(gr.conductance * np.abs(dg) * np.linalg.norm(dF, axis=1) ** 3 / 12.0)
    scale = max(math.fsum(np.abs(terms)), math.fsum(np.abs(gen_terms)), 1e-300)
    if not _close(chain, gen, tol, scale):
        raise InconsistencyError(f"energy route {chain!r} and generator route {gen!r} disagree")
    if abs(value - chain) > bound + tol * max(abs(value), abs(chain), scale):
        raise InconsistencyError(f"boundary {value!r} and energy route {chain!r} differ beyond {bound!r}")
    return BoundaryCheck(value, chain, gen, bound)


@dataclass
class DrReport:
    rows: list  # (bin index tuple, det, min_mass, pass)

    @property
    def passed(self):
        return all(r[3] for r in self.rows)

    def violations(self):
        return [r for r in self.rows if not r[3]]

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bin", "det", "min_mass", "pass"])
        for b, det, m, ok in self.rows:
            w.writerow([":".join(str(int(i)) for i in b), repr(det), repr(m), "pass" if ok else "fail"])
        return buf.getvalue()


def dr_hypothesis_check(currents, nu: BinnedMeasure, tol=1e-8) -> DrReport:
    """On every nu-charged box: each ||T_i|| charges it, and the box sums of
    the T_i vectors span R^n (|det| > tol times the product of column norms)."""
    currents = list(currents)
    n = nu.dim
    if any(T.dim != n for T in currents):
        raise ValidationError("currents and nu live in different dimensions")
    if len(currents) != n:
        raise ValidationError("need exactly n currents in R^n")
    charged = {tuple(k): m for k, m in zip(nu.index.tolist(), nu.mass) if m > 0}
    sums, masses = [], []
    for T in currents:
        keys, _ = box_indices(T.locations, nu.h, nu.origin)
        s, m = {}, {}
        for k, v, w in zip(map(tuple, keys.tolist()), T.vectors, T.mass):
            if k in charged:
                s[k] = s.get(k, 0.0) + v
                m[k] = m.get(k, 0.0) + w
        sums.append(s)
        masses.append(m)
    rows = []
    for k in sorted(charged):
        cols = np.column_stack([s.get(k, np.zeros(n)) for s in sums])
        mm = min(m.get(k, 0.0) for m in masses)
        det = float(np.linalg.det(cols))
        scale = float(np.prod(np.linalg.norm(cols, axis=0)))
        ok = mm > 0 and abs(det) > tol * scale
        rows.append((k, det, mm, ok))
    return DrReport(rows)


# -- determinant defect sequence -----------------------------------------------------

def mollifier_kernel(spec: GridSpec, delta):
    """Discrete (1 - |y/delta|^2)^2 bump on grid offsets, normalized to unit sum."""
    h = np.asarray(spec.spacing)
    if delta < 2 * h.max():
        raise ValidationError(f"mollifier width {delta} is below two grid cells")
    reach = [int(math.floor(delta / hi)) for hi in h]
    axes = [np.arange(-r, r + 1) * hi for r, hi in zip(reach, h)]
    mesh = np.meshgrid(*axes, indexing="ij")
    rr = sum(m * m for m in mesh) / delta ** 2
    w = np.where(rr < 1, (1 - rr) ** 2, 0.0)
    return w / w.sum()


@dataclass
class PreissStep:
    k: int
    delta: float
    integral: float
    total_mass: float
    max_d1_on_K: float
    max_lip: float
    pair_lip: float
    f_tilde: np.ndarray = field(repr=False)
    d1: np.ndarray = field(repr=False)


def preiss_sequence(spec: GridSpec, atoms, weights, K_mask, ks, R=None, delta=None, f=None):
    """Steps k of the construction g_k(y) = (f~_k(y), y_2, ..., y_n).

    f_k is the shortest-path approximation of f(y) = y_1 driven by the
    inf-convolution of g = 1/2 on K, 1 elsewhere; f~_k its mollification at
    width delta(k) (default 1 / (6k)); the integral is sum_atoms w d_1 f~_k.
    ``atoms`` are grid indices; ``K_mask`` marks K on the grid.
    """
    pts = spec.points()
    fvals = pts[:, 0] if f is None else np.asarray(f, dtype=float)
    fld = GridField(spec, fvals)
    K_mask = np.asarray(K_mask, dtype=bool)
    atoms = np.asarray(atoms, dtype=np.int64)
    weights = np.asarray(weights, dtype=float)
    total = math.fsum(weights)
    R = float(np.max(np.abs(np.asarray(spec.hi)))) * 0.9 if R is None else R
    h = np.asarray(spec.spacing)
    shape = spec.counts
    aniso = stencil_anisotropy(spec.stencil, spec.dim, spec.spacing)
    steps = []
    for k in ks:
        base = GridField(spec, np.where(K_mask, 0.5, 1.0))
        gk = inf_convolution(base, k) if K_mask.any() else base
        fk = variational_approx(fld, gk, R)
        d = 1.0 / (6.0 * k) if delta is None else delta(k)
        ker = mollifier_kernel(spec, d)
        ft = ndimage.correlate(fk.array, ker, mode="nearest")
        reach = (np.array(ker.shape) - 1) // 2
        # central differences, trusted only where the kernel window stays inside the grid
        inner = np.zeros(shape, dtype=bool)
        inner[tuple(slice(r + 1, n - r - 1) for r, n in zip(reach, shape))] = True
        grads = []
        for a in range(spec.dim):
            gsl = np.zeros(shape)
            fwd = [slice(None)] * spec.dim
            bwd = [slice(None)] * spec.dim
            mid = [slice(None)] * spec.dim
            fwd[a], bwd[a], mid[a] = slice(2, None), slice(None, -2), slice(1, -1)
            gsl[tuple(mid)] = (ft[tuple(fwd)] - ft[tuple(bwd)]) / (2 * h[a])
            grads.append(gsl)
        d1 = grads[0].reshape(-1)
        innerf = inner.reshape(-1)
        if not np.all(innerf[atoms]):
            raise ValidationError("atoms must lie at least one kernel width inside the grid")
        # operator norm of [[grad f~], [0, I]] per point
        J = np.zeros((int(innerf.sum()), spec.dim, spec.dim))
        for a in range(spec.dim):
            J[:, 0, a] = grads[a].reshape(-1)[innerf]
        for a in range(1, spec.dim):
            J[:, a, a] = 1.0
        lip = float(np.max(np.linalg.norm(J, ord=2, axis=(1, 2)), initial=0.0))
        integral = math.fsum(weights * d1[atoms])
        onK = innerf & K_mask
        max_d1 = float(np.max(np.abs(d1[onK]), initial=0.0))
        pl = _pair_lipschitz(pts[atoms], ft.reshape(-1)[atoms])
        steps.append(PreissStep(int(k), d, integral, total, max_d1, lip, pl, ft.reshape(-1), d1))
    return steps, aniso


def _pair_lipschitz(pts, ft, max_pairs=200_000):
    """Largest |g_k(y) - g_k(z)| / |y - z| over atom pairs."""
    m = len(pts)
    if m < 2:
        return 0.0
    G = np.column_stack([ft, pts[:, 1:]])
    i, j = np.triu_indices(m, 1)
    if len(i) > max_pairs:
        sel = np.linspace(0, len(i) - 1, max_pairs).astype(np.int64)
        i, j = i[sel], j[sel]
    num = np.linalg.norm(G[i] - G[j], axis=1)
    den = np.linalg.norm(pts[i] - pts[j], axis=1)
    return float(np.max(num / den))
