"""Discrete p-energies on metric graphs and the quantities derived from them."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import optimize, sparse
from scipy.sparse.linalg import spsolve

from .errors import DominationError, NumericError, UnsupportedError, ValidationError
from .linalg import sym_eigvalsh
from .space import MetricGraph

VARIANTS = ("edgewise", "grid-max-coordinate")


@dataclass(frozen=True, eq=False)
class PEnergyForm:
    """p-energy on a graph with a reference measure.

    ``edgewise``: E(f) = sum over edges of c_uv |f(u) - f(v)|^p.
    ``grid-max-coordinate``: E(f) = sum_x mu(x) (max_axis |forward difference| / h)^p,
    the l1-metric upper-gradient energy on a tensor grid.
    """

    graph: MetricGraph
    measure: np.ndarray
    p: float = 2.0
    variant: str = "edgewise"

    def __post_init__(self):
        if not self.p > 1:
            raise ValidationError(f"exponent must exceed 1, got {self.p}")
        if self.variant not in VARIANTS:
            raise ValidationError(f"unknown variant {self.variant!r}")
        mu = np.asarray(self.measure, dtype=float)
        if mu.shape != (self.graph.n_vertices,):
            raise ValidationError("measure must have one weight per vertex")
        if np.any(mu < 0) or not np.all(np.isfinite(mu)):
            raise ValidationError("measure weights must be finite and nonnegative")
        if self.variant == "grid-max-coordinate" and (self.graph.grid is None or self.graph.coords is None):
            raise ValidationError("grid-max-coordinate variant needs a grid graph")
        mu = mu.copy()
        mu.setflags(write=False)
        object.__setattr__(self, "measure", mu)
        object.__setattr__(self, "p", float(self.p))

    @cached_property
    def _forward(self):
        spec = self.graph.grid
        idx = np.indices(spec.counts).reshape(spec.dim, -1).T
        fwd = []
        for a in range(spec.dim):
            tgt = idx.copy()
            tgt[:, a] += 1
            ok = tgt[:, a] < spec.counts[a]
            j = np.full(spec.n_points, -1)
            j[ok] = np.ravel_multi_index(tuple(tgt[ok].T), spec.counts)
            fwd.append(j)
        return np.array(fwd), spec.spacing

    def require_quadratic(self):
        if self.p != 2 or self.variant != "edgewise":
            raise UnsupportedError("operation needs the bilinear (p = 2, edgewise) form")

    def with_p(self, p):
        return PEnergyForm(self.graph, self.measure, p, self.variant)


def _vec(f, V):
    f = np.asarray(f, dtype=float)
    if f.shape[0] != V:
        raise ValidationError(f"vertex function has length {f.shape[0]}, graph has {V} vertices")
    return f


def edge_differences(form: PEnergyForm, f):
    """f(u) - f(v) on every edge; accepts ``(V,)`` or ``(V, n)``."""
    return form.graph.incidence @ _vec(f, form.graph.n_vertices)


def _grid_slopes(form, f):
    fwd, h = form._forward
    f = _vec(f, form.graph.n_vertices)
    slopes = np.zeros((len(h),) + f.shape)
    for a in range(len(h)):
        ok = fwd[a] >= 0
        slopes[a][ok] = (f[fwd[a][ok]] - f[ok]) / h[a]
    return slopes


def energy_measure(form: PEnergyForm, f):
    """Vertex masses of the energy measure of ``f``.

    Edgewise, each edge term is split evenly between its endpoints.
    """
    if form.variant == "grid-max-coordinate":
        s = np.max(np.abs(_grid_slopes(form, f)), axis=0)
        return form.measure * s ** form.p
    g = form.graph
    e = g.conductance * np.abs(edge_differences(form, f)) ** form.p
    return 0.5 * (g.endpoint_sum @ e)


def p_energy(form: PEnergyForm, f):
    if form.variant == "grid-max-coordinate":
        return float(energy_measure(form, f).sum())
    g = form.graph
    return float(np.sum(g.conductance * np.abs(edge_differences(form, f)) ** form.p))


def energy_of_set(form, f, mask):
    return float(energy_measure(form, f)[np.asarray(mask, dtype=bool)].sum())


def bilinear_energy(form: PEnergyForm, f, g):
    form.require_quadratic()
    return float(np.sum(form.graph.conductance * edge_differences(form, f) * edge_differences(form, g)))


def polarized_energy_measure(form: PEnergyForm, f, g):
    """Signed vertex measure Gamma(f, g) of the p = 2 form."""
    form.require_quadratic()
    gr = form.graph
    e = gr.conductance * edge_differences(form, f) * edge_differences(form, g)
    return 0.5 * (gr.endpoint_sum @ e)


def generator_apply(form: PEnergyForm, g):
    """(A g)(x) = mu(x)^-1 sum_y c_xy (g(y) - g(x)); E(f, g) = -<A f, g>_mu."""
    form.require_quadratic()
    mu = form.measure
    zero = np.flatnonzero(mu == 0)
    if len(zero):
        raise ZeroDivisionError(f"reference measure vanishes at vertex {int(zero[0])}")
    W = form.graph.adjacency
    g = _vec(g, form.graph.n_vertices)
    deg = np.asarray(W.sum(axis=1)).reshape(-1)
    return (W @ g - deg * g) / mu


def lp_norm_p(form, f):
    return float(np.sum(form.measure * np.abs(f) ** form.p))


# -- capacity ----------------------------------------------------------------

def capacity(form: PEnergyForm, A, tol=1e-8, max_iter=20000, return_potential=False):
    """inf { ||f||_p^p + E_p(f) : f = 1 on A and its one-step neighbors }.

    p = 2 is solved exactly from the linear stationarity system; other p by
    bounded quasi-Newton minimization of the convex objective on [0, 1].
    """
    A = np.asarray(A, dtype=bool)
    if not A.any():
        raise ValidationError("capacity needs a nonempty set")
    g = form.graph
    fixed = g.closed_neighborhood(A)
    free = ~fixed
    f = np.ones(g.n_vertices)
    if free.any():
        if form.p == 2 and form.variant == "edgewise":
            L = sparse.diags(np.asarray(g.adjacency.sum(axis=1)).reshape(-1)) - g.adjacency
            M = (sparse.diags(form.measure) + L).tocsr()
            Mff = M[free][:, free]
            rhs = np.asarray(g.adjacency[free][:, fixed].sum(axis=1)).reshape(-1)
            x = spsolve(Mff.tocsc(), rhs) if Mff.shape[0] > 1 else np.array([rhs[0] / Mff[0, 0]])
            f[free] = np.atleast_1d(x)
        elif form.variant == "edgewise":
            f[free] = _capacity_minimize(form, free, tol, max_iter)
        else:
            f[free] = _capacity_minimize_epigraph(form, free, tol, max_iter)
    value = lp_norm_p(form, f) + p_energy(form, f)
    return (value, f) if return_potential else value


def _capacity_objective(form, free):
    p = form.p
    mu = form.measure
    base = np.ones(form.graph.n_vertices)

    def fun(x):
        f = base.copy()
        f[free] = x
        if form.variant == "edgewise":
            d = edge_differences(form, f)
            c = form.graph.conductance
            val = np.sum(mu * np.abs(f) ** p) + np.sum(c * np.abs(d) ** p)
            gd = form.graph.incidence.T @ (p * c * np.abs(d) ** (p - 1) * np.sign(d))
        else:
            val = np.sum(mu * np.abs(f) ** p) + p_energy(form, f)
            gd = _grid_energy_grad(form, f)
        grad = p * mu * np.abs(f) ** (p - 1) * np.sign(f) + gd
        return val, grad[free]

    return fun


def _grid_energy_grad(form, f):
    fwd, h = form._forward
    slopes = _grid_slopes(form, f)
    arg = np.argmax(np.abs(slopes), axis=0)
    V = len(f)
    s = np.abs(slopes[arg, np.arange(V)])
    sign = np.sign(slopes[arg, np.arange(V)])
    w = form.measure * form.p * s ** (form.p - 1) * sign
    grad = np.zeros(V)
    for a in range(len(h)):
        sel = (arg == a) & (fwd[a] >= 0)
        np.add.at(grad, fwd[a][sel], w[sel] / h[a])
        np.add.at(grad, np.flatnonzero(sel), -w[sel] / h[a])
    return grad


def _capacity_minimize(form, free, tol, max_iter):
    fun = _capacity_objective(form, free)
    n = int(free.sum())
    x0 = np.full(n, 0.5)
    res = optimize.minimize(
        fun, x0, jac=True, method="L-BFGS-B", bounds=[(0.0, 1.0)] * n,
        options={"maxiter": max_iter, "ftol": 0.0, "gtol": tol, "maxcor": 30},
    )
    x = res.x
    _, grad = fun(x)
    # projected gradient: components pushing against an active bound do not count
    pg = np.where(((x <= 0) & (grad > 0)) | ((x >= 1) & (grad < 0)), 0.0, grad)
    resid = float(np.max(np.abs(pg))) if n else 0.0
    scale = max(1.0, float(np.max(form.measure)), float(np.max(form.graph.conductance, initial=0.0)))
    if resid > tol * scale * 1e3:
        raise NumericError(f"capacity minimization did not converge (residual {resid:.3e})", residual=resid)
    return x


def _capacity_minimize_epigraph(form, free, tol, max_iter):
    # the max over axes is not differentiable; minimize over (f, t) with
    # t(x) >= |slope_a(x)| instead, where the objective is smooth
    fwd, h = form._forward
    V, p, mu = form.graph.n_vertices, form.p, form.measure
    fi = np.flatnonzero(free)
    pos = np.full(V, -1)
    pos[fi] = np.arange(len(fi))
    nf = len(fi)
    rows, cols, vals, rhs = [], [], [], []
    r = 0
    for a in range(len(h)):
        for x in np.flatnonzero(fwd[a] >= 0):
            y = fwd[a][x]
            for sgn in (1.0, -1.0):
                # t_x - sgn (f_y - f_x)/h >= 0
                const = 0.0
                for v, coef in ((y, -sgn / h[a]), (x, sgn / h[a])):
                    if pos[v] >= 0:
                        rows.append(r); cols.append(pos[v]); vals.append(coef)
                    else:
                        const += coef
                rows.append(r); cols.append(nf + x); vals.append(1.0)
                rhs.append(-const)
                r += 1
    Amat = sparse.csr_matrix((vals, (rows, cols)), shape=(r, nf + V)).toarray()
    rhs = np.array(rhs)

    def fun(z):
        x, t = z[:nf], z[nf:]
        val = np.sum(mu[fi] * x ** p) + np.sum(mu[~free]) + np.sum(mu * t ** p)
        grad = np.concatenate([p * mu[fi] * x ** (p - 1), p * mu * t ** (p - 1)])
        return val, grad

    z0 = np.concatenate([np.full(nf, 0.5), np.full(V, 1.0 / h.min())])
    cons = {"type": "ineq", "fun": lambda z: Amat @ z - rhs, "jac": lambda z: Amat}
    bounds = [(0.0, 1.0)] * nf + [(0.0, None)] * V
    res = optimize.minimize(fun, z0, jac=True, method="SLSQP", bounds=bounds, constraints=[cons],
                            options={"maxiter": max_iter, "ftol": 1e-12})
    viol = float(np.max(np.maximum(rhs - Amat @ res.x, 0.0), initial=0.0))
    if not res.success or viol > tol:
        raise NumericError(f"capacity minimization did not converge ({res.message})", residual=viol)
    return res.x[:nf]


# -- dominant measures and carre du champ ------------------------------------

def minimal_energy_dominant(form: PEnergyForm, basis):
    """nu = sum_k w_k Gamma<b_k> / (1 + E(b_k)) with w_k = 2^-k.

    Weights are floored at 2^-52 so long bases keep every term representable.
    """
    basis = [np.asarray(b, dtype=float) for b in basis]
    if not basis:
        raise ValidationError("basis must not be empty")
    nu = np.zeros(form.graph.n_vertices)
    for k, b in enumerate(basis, start=1):
        w = math.ldexp(1.0, -min(k, 52))
        nu += w * energy_measure(form, b) / (1.0 + p_energy(form, b))
    return nu


def indicator_basis(n_vertices):
    return list(np.eye(n_vertices))


def energy_gram(form: PEnergyForm, phis):
    """Vertex masses Gamma(phi_i, phi_j)({x}), shape ``(V, n, n)``."""
    form.require_quadratic()
    Phi = np.column_stack([np.asarray(p, dtype=float) for p in phis])
    D = form.graph.incidence @ Phi
    n = D.shape[1]
    outer = (form.graph.conductance[:, None, None] * D[:, :, None] * D[:, None, :]).reshape(len(D), n * n)
    G = 0.5 * (form.graph.endpoint_sum @ outer)
    return np.asarray(G).reshape(-1, n, n)


@dataclass(frozen=True, eq=False)
class CdcMatrixField:
    """Per-vertex symmetric matrices, densities against ``reference``."""

    matrices: np.ndarray
    reference: np.ndarray
    psd_tol: float = field(default=1e-10, repr=False)

    @property
    def n(self):
        return self.matrices.shape[-1]

    @property
    def charged(self):
        return self.reference > 0

    def trace(self):
        return np.trace(self.matrices, axis1=1, axis2=2)

    def det(self):
        return np.linalg.det(self.matrices) if self.n > 0 else np.ones(len(self.matrices))

    def eigvalsh(self):
        return sym_eigvalsh(self.matrices)

    def sigma1(self):
        return self.eigvalsh()[:, 0]

    def quadratic(self, lam):
        lam = np.asarray(lam, dtype=float)
        return np.einsum("i,vij,j->v", lam, self.matrices, lam)

    def is_psd(self):
        tr = self.trace()
        return bool(np.all(self.sigma1() >= -self.psd_tol * np.maximum(tr, 0.0) - 1e-300))

    def is_symmetric(self):
        return bool(np.array_equal(self.matrices, np.swapaxes(self.matrices, 1, 2)))


def cdc_matrix(form: PEnergyForm, phis, nu=None):
    """gamma_nu(phi)(x) = [Gamma(phi_i, phi_j)({x}) / nu({x})]; nu defaults to mu."""
    nu = form.measure if nu is None else np.asarray(nu, dtype=float)
    G = energy_gram(form, phis)
    G = 0.5 * (G + np.swapaxes(G, 1, 2))
    null = nu == 0
    bad = null & np.any(G != 0, axis=(1, 2))
    if bad.any():
        raise DominationError(f"reference measure vanishes at vertex {int(np.flatnonzero(bad)[0])} where energy does not")
    out = np.zeros_like(G)
    out[~null] = G[~null] / nu[~null, None, None]
    return CdcMatrixField(out, nu)


def lambda_measure(form, phis):
    """Lambda_phi = sum_i Gamma_p<phi_i>."""
    return np.sum([energy_measure(form, p) for p in phis], axis=0)


# -- axiom checks ------------------------------------------------------------

AXIOMS = (
    "metric_measure_space",
    "completeness",
    "homogeneity",
    "sublinearity",
    "chain_rule",
    "locality",
    "lower_semicontinuity",
)
EXTRA_CHECKS = (
    "total_mass",
    "local_subadditivity",
    "chain_rule_local",
    "linear_contraction",
    "multidim_contraction",
)


@dataclass
class AxiomRow:
    axiom: str
    trials: int = 0
    worst_slack: float = math.inf
    witness: object = None

    @property
    def passed(self):
        return self.worst_slack >= -AxiomReport.rel_tol

    def record(self, slack, witness=None):
        self.trials += 1
        if slack < self.worst_slack:
            self.worst_slack = float(slack)
            self.witness = witness


@dataclass
class AxiomReport:
    rows: dict = field(default_factory=dict)
    rel_tol = 1e-9

    def row(self, name):
        if name not in self.rows:
            self.rows[name] = AxiomRow(name)
        return self.rows[name]

    def merge(self, other: "AxiomReport"):
        for name, r in other.rows.items():
            mine = self.row(name)
            mine.trials += r.trials
            if r.worst_slack < mine.worst_slack:
                mine.worst_slack, mine.witness = r.worst_slack, r.witness
        return self

    @property
    def passed(self):
        return all(r.passed for r in self.rows.values())

    def failures(self):
        return [r for r in self.rows.values() if not r.passed]

    def csv_rows(self):
        return [(r.axiom, r.trials, repr(r.worst_slack), "pass" if r.passed else "fail") for r in self.rows.values()]

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["axiom", "trials", "worst_slack", "pass"])
        w.writerows(self.csv_rows())
        return buf.getvalue()


def _ineq(lhs, rhs):
    """Normalized margin of lhs <= rhs (negative means violated)."""
    scale = max(abs(lhs), abs(rhs), 1e-300)
    return (rhs - lhs) / scale


def _eq(lhs, rhs, scale=None):
    scale = max(abs(lhs), abs(rhs), 1e-300) if scale is None else max(scale, 1e-300)
    return -abs(lhs - rhs) / scale


def random_pl_scalar(rng, lo, hi, n_knots=None):
    """Random piecewise-linear g on R with g(0) = 0; returns (knots, values, lip)."""
    k = int(n_knots or rng.integers(1, 6))
    inner = np.sort(rng.uniform(lo, hi, size=k))
    knots = np.unique(np.concatenate([[lo - 1.0, 0.0, hi + 1.0], inner]))
    slopes = rng.uniform(-2.0, 2.0, size=len(knots) - 1)
    if rng.random() < 0.25:
        slopes = np.sign(knots[1:] + knots[:-1])  # |t| style kink at 0
    vals = np.concatenate([[0.0], np.cumsum(slopes * np.diff(knots))])
    vals -= np.interp(0.0, knots, vals)
    return knots, vals, float(np.max(np.abs(slopes)))


def _pl_eval(knots, vals, t):
    t = np.asarray(t, dtype=float)
    out = np.interp(t, knots, vals)
    # linear extension beyond the end knots
    s0 = (vals[1] - vals[0]) / (knots[1] - knots[0])
    s1 = (vals[-1] - vals[-2]) / (knots[-1] - knots[-2])
    out = np.where(t < knots[0], vals[0] + s0 * (t - knots[0]), out)
    return np.where(t > knots[-1], vals[-1] + s1 * (t - knots[-1]), out)


def _pl_local_lip(knots, vals, lo, hi):
    slopes = np.abs(np.diff(vals) / np.diff(knots))
    a, b = knots[:-1], knots[1:]
    hit = (a[None, :] <= hi[:, None]) & (b[None, :] >= lo[:, None])
    out = np.where(hit, slopes[None, :], 0.0).max(axis=1)
    # windows beyond the outer knots use the end slopes
    out = np.where(hi > knots[-1], np.maximum(out, slopes[-1]), out)
    return np.where(lo < knots[0], np.maximum(out, slopes[0]), out)


def random_pl_maxmin(rng, n, n_outer=None, n_inner=None):
    """Random g(x) = max_i min_j (a_ij + <l_ij, x>) - g(0); returns (g, lip bound)."""
    I = int(n_outer or rng.integers(1, 4))
    J = int(n_inner or rng.integers(1, 4))
    a = rng.normal(size=(I, J))
    l = rng.normal(size=(I, J, n))

    def g(x):
        x = np.atleast_2d(x)
        vals = a[None] + np.einsum("ijn,vn->vij", l, x)
        return vals.min(axis=2).max(axis=1)

    g0 = float(g(np.zeros((1, n)))[0])
    return (lambda x: g(x) - g0), float(np.max(np.linalg.norm(l, axis=2)))


def _random_set(rng, V, frac=None):
    frac = rng.uniform(0.1, 0.9) if frac is None else frac
    A = rng.random(V) < frac
    if not A.any():
        A[rng.integers(V)] = True
    return A


def check_axioms(form: PEnergyForm, trials, rng, n_values=(2, 3), report=None) -> AxiomReport:
    """Randomized checks of the p-Dirichlet space axioms on ``form``.

    Each row records the worst normalized margin over its trials; a row fails
    when some trial violates its inequality by more than 1e-9 relative.
    """
    if trials < 1:
        raise ValidationError("trials must be at least 1")
    report = report or AxiomReport()
    g = form.graph
    V, p, mu = g.n_vertices, form.p, form.measure
    Gam = lambda h: energy_measure(form, h)  # noqa: E731
    for t in range(trials):
        f = rng.normal(size=V) * rng.choice([1e-3, 1.0, 1e3])
        h = rng.normal(size=V)
        A = _random_set(rng, V)

        # (1) finite nonnegative measure, metric axioms on random triples
        ok = bool(np.all(mu >= 0) and np.isfinite(mu.sum()))
        if V >= 3 and t % 10 == 0:
            i, j, k = rng.choice(V, 3, replace=False)
            D = g.graph_distances([i, j])
            if np.all(np.isfinite([D[0, j], D[0, k], D[1, k]])):
                ok &= bool(D[0, j] <= (D[0, k] + D[1, k]) * (1 + 1e-12) and math.isclose(D[0, j], D[1, i], rel_tol=1e-12) and D[0, j] > 0)
        report.row("metric_measure_space").record(0.0 if ok else -1.0, None if ok else (t,))

        # (2) the F_p norm is a norm: triangle inequality
        norm = lambda u: (lp_norm_p(form, u) + p_energy(form, u)) ** (1 / p)  # noqa: E731
        report.row("completeness").record(_ineq(norm(f + h), norm(f) + norm(h)), (f, h))

        # (3) homogeneity, vertexwise
        lam = float(rng.choice([0.0, -1.0, 2.0, rng.normal() * 3.0]))
        lhs, rhs = Gam(lam * f), abs(lam) ** p * Gam(f)
        scale = max(float(np.max(rhs)), float(np.max(lhs)), 1e-300)
        report.row("homogeneity").record(-float(np.max(np.abs(lhs - rhs))) / scale, (lam, f))
        report.row("total_mass").record(_eq(float(Gam(f).sum()), p_energy(form, f)), f)

        # (4) sublinearity on a random set
        lhs = Gam(f + h)[A].sum() ** (1 / p)
        rhs = Gam(f)[A].sum() ** (1 / p) + Gam(h)[A].sum() ** (1 / p)
        report.row("sublinearity").record(_ineq(lhs, rhs), (f, h, A))

        # (5) chain rule with a random piecewise-linear g, g(0) = 0
        knots, vals, lip = random_pl_scalar(rng, float(f.min()), float(f.max()))
        gf = _pl_eval(knots, vals, f)
        lhs, rhs = Gam(gf), lip ** p * Gam(f)
        report.row("chain_rule").record(min(_ineq(a, b) for a, b in zip(lhs, rhs)), (knots, vals, f))
        if form.variant == "edgewise":
            nbr = g.adjacency.copy()
            nbr.data[:] = 1.0
            lo = np.minimum(f, _nbr_reduce(nbr, f, np.minimum))
            hi = np.maximum(f, _nbr_reduce(nbr, f, np.maximum))
            loc = _pl_local_lip(knots, vals, lo, hi)
            report.row("chain_rule_local").record(min(_ineq(a, b) for a, b in zip(lhs, loc ** p * Gam(f))), (knots, vals, f))

        # (6) locality on a neighborhood-constant set
        B = _random_set(rng, V, frac=0.2)
        fl = f.copy()
        fl[g.closed_neighborhood(B)] = rng.normal()
        report.row("locality").record(_eq(float(Gam(fl)[B].sum()), 0.0, scale=p_energy(form, f)), (fl, B))
        hl = fl + h
        c = rng.normal()
        hl2 = hl.copy()
        hl2[g.closed_neighborhood(B)] = fl[g.closed_neighborhood(B)] + c
        report.row("local_subadditivity").record(_eq(float(Gam(fl)[B].sum()), float(Gam(hl2)[B].sum()), scale=p_energy(form, fl) + p_energy(form, hl2)), (fl, hl2, B))

        # (7) along f_i = f + 2^-i r the set energies converge, so the liminf
        # inequality holds with equality; compared against the tail of the sequence
        r = rng.normal(size=V)
        tail = float(Gam(f + math.ldexp(1.0, -60) * r)[A].sum())
        target = float(Gam(f)[A].sum())
        report.row("lower_semicontinuity").record(_eq(target, tail, scale=p_energy(form, f)), (f, r, A))

        # linear and multidimensional contraction
        n = int(rng.choice(n_values))
        F = rng.normal(size=(n, V))
        lam = rng.normal(size=n)
        q = p / (p - 1)
        lhs = Gam(lam @ F)[A].sum()
        rhs = np.sum(np.abs(lam) ** q) ** (p / q) * sum(Gam(Fi)[A].sum() for Fi in F)
        report.row("linear_contraction").record(_ineq(lhs, rhs), (lam, F, A))
        gfun, lip = random_pl_maxmin(rng, n)
        lhs = Gam(gfun(F.T))
        rhs = max(1.0, n ** ((p - 2) / 2)) * lip ** p * np.sum([Gam(Fi) for Fi in F], axis=0)
        report.row("multidim_contraction").record(min(_ineq(a, b) for a, b in zip(lhs, rhs)), (F,))
    return report


def _nbr_reduce(pattern, f, op):
    """Reduce f over graph neighbors (vertices without neighbors keep f)."""
    out = f.copy()
    indptr, indices = pattern.indptr, pattern.indices
    for v in range(len(f)):
        nb = indices[indptr[v]:indptr[v + 1]]
        if len(nb):
            out[v] = op.reduce(f[nb])
    return out
