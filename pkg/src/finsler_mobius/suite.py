"""Named property checks, one group per documented invariant.

Every check is a pure function of a :class:`SuiteContext` and returns a list
of :class:`Check` records, so the suite can be fanned out to worker
processes and reassembled in catalog order without changing a byte of the
report.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp

from . import fields, jets, metrics
from .conformal import (ConformalChange, b_contraction_check, cartan_covariant_change_check,
                        conformal_christoffel_check, conformal_metric_check, conformal_spray_check,
                        vertical_action_on_x_functions)
from .config import DEFAULT_TOLERANCES, draw_samples
from .core import FinslerJets, connection_invariants, flag_curvature
from .curves import (frenet_curvatures, integrate_geodesic, integrate_geodesic_circle,
                     numeric_schwarzian, orthonormal_frame, projective_parameter_solve)
from .jets import TangentSample
from .schwarzian import (classic_schwarzian, cocycle_check, mobius_residual, riemannian_schwarzian,
                         schwarzian_1d, schwarzian_tensor)


@dataclass(frozen=True)
class Check:
    name: str
    residual: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.residual) and self.residual <= self.tol)

    def as_dict(self) -> dict:
        return {"name": self.name, "residual": float(self.residual), "tol": self.tol, "pass": self.passed}


@dataclass(frozen=True)
class SuiteContext:
    seed: int
    samples: int = 20
    curve_length: float = 5.0
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))

    def tol(self, name: str) -> float:
        return self.tolerances[name]

    def draw(self, n: int, stream: int, count: int | None = None, box=(-0.5, 0.5)) -> TangentSample:
        # each check owns a disjoint block of sample indices
        count = self.samples if count is None else count
        start = stream * 1_000_000
        return draw_samples(self.seed, n, range(start, start + count), box)


# catalog ----------------------------------------------------------------------

def catalog() -> dict[str, metrics.MetricSpec]:
    """One or more members of every metric kind, all strongly convex on [-0.5, 0.5]^n."""
    x1, x2 = fields.coords(2)
    a = ((1 + x1 * x1, 0.2 * x1 * x2), (0.2 * x1 * x2, 1 + x2 * x2))
    return {
        "euclidean": metrics.euclidean(2),
        "round_sphere": metrics.round_sphere(2),
        "riemannian": metrics.Riemannian(a),
        "minkowski_randers": metrics.minkowski_randers([0.5, 0.0]),
        "randers": metrics.randers(a, (-0.3 * x2, 0.3 * x1)),
        "conformal_randers": metrics.ConformalScale(metrics.randers("identity", (0.2 * x2, 0.1)),
                                                    0.3 * fields.sin(x1)),
    }


def phi_catalog() -> dict[str, fields.ScalarField]:
    x1, x2 = fields.coords(2)
    return {
        "const": fields.Const(0.7),
        "x1": x1,
        "sphere": -fields.log(1 + x1 * x1 + x2 * x2),
        "mixed": 0.3 * fields.sin(x1) * x2 + 0.1 * x2 * x2,
    }


def _rel(a, b) -> float:
    scale = max(float(np.max(np.abs(b))), 1e-300)
    return float(np.max(np.abs(a - b))) / scale


# deriv-engine -------------------------------------------------------------------

def _all_multi_indices(nvars: int, max_order: int):
    for alpha in itertools.product(range(max_order + 1), repeat=nvars):
        if sum(alpha) <= max_order:
            yield alpha


def check_jet_vs_oracle(ctx: SuiteContext) -> list[Check]:
    worst = 0.0
    count = max(2, ctx.samples // 4)
    for k, m in enumerate(catalog().values()):
        z = ctx.draw(m.dim, 10 + k, count)
        fj = FinslerJets(m, z, 2, 3)
        for i in range(count):
            zi = z[i]
            for alpha in _all_multi_indices(2 * m.dim, 3):
                if sum(alpha[:m.dim]) > 2:
                    continue
                est = jets.fd_oracle(m.F2, zi, alpha)
                exact = fj.F2.partial(alpha)[i]
                worst = max(worst, abs(exact - est) / max(1.0, abs(exact)))
    return [Check("engine.jet_vs_fd_oracle", worst, 1e-5)]


def check_euler(ctx: SuiteContext) -> list[Check]:
    worst = 0.0
    for k, m in enumerate(catalog().values()):
        z = ctx.draw(m.dim, 20 + k)
        F = jets.jet_eval(m.F, z, 0, 1)
        n = m.dim
        yF = sum(z.y[..., i] * F.partial([0] * n + [int(j == i) for j in range(n)]) for i in range(n))
        worst = max(worst, float(np.max(np.abs(yF - F.value) / F.value)))
    return [Check("engine.euler_homogeneity", worst, 1e-12)]


def check_mixed_partials(ctx: SuiteContext) -> list[Check]:
    worst = 0.0
    m = catalog()["randers"]
    F2 = jets.jet_eval(m.F2, ctx.draw(2, 30), 2, 3)
    for a, b in itertools.combinations(range(4), 2):
        ab = F2.d(a).d(b)
        ba = F2.d(b).d(a)
        common = ab.basis.meet(ba.basis)
        worst = max(worst, float(np.max(np.abs(ab.project(common).coef - ba.project(common).coef))))
    return [Check("engine.mixed_partial_symmetry", worst, 0.0)]


# finsler-core ---------------------------------------------------------------------

def check_connection(ctx: SuiteContext) -> list[Check]:
    worst: dict[str, float] = {}
    for k, m in enumerate(catalog().values()):
        for name, val in connection_invariants(m, ctx.draw(m.dim, 40 + k)).items():
            worst[name] = max(worst.get(name, 0.0), val)
    return [Check(f"core.connection.{name}", val, ctx.tol("connection")) for name, val in worst.items()]


def check_g_homogeneity(ctx: SuiteContext) -> list[Check]:
    worst = 0.0
    for k, m in enumerate(catalog().values()):
        z = ctx.draw(m.dim, 50 + k)
        g = FinslerJets(m, z, 0, 2).g.value
        for lam in (0.5, 2.0, 10.0):
            worst = max(worst, _rel(FinslerJets(m, z.scaled(lam), 0, 2).g.value, g))
    return [Check("core.g_degree0_homogeneity", worst, 1e-10)]


def check_riemannian(ctx: SuiteContext) -> list[Check]:
    cat = catalog()
    c_max = gam_max = flag_max = 0.0
    for k, name in enumerate(["round_sphere", "riemannian"]):
        m = cat[name]
        z = ctx.draw(2, 60 + k)
        fj = FinslerJets(m, z, 1, 3)
        c_max = max(c_max, float(np.max(np.abs(fj.C.value))))
        gam_max = max(gam_max, float(np.max(np.abs(fj.Gamma.value - fj.gamma.value))))
        # rotate y inside the plane spanned by y and a transverse u
        rng = np.random.default_rng([ctx.seed, 69, k])
        u = rng.standard_normal(z.y.shape)
        K0 = flag_curvature(m, z, u)
        for c, s in ((0.3, 0.8), (-1.0, 0.4), (0.5, -2.0)):
            K = flag_curvature(m, TangentSample(z.x, c * z.y + s * u), z.y)
            flag_max = max(flag_max, float(np.max(np.abs(K - K0))))
    return [Check("core.riemannian.cartan_vanishes", c_max, ctx.tol("riemannian")),
            Check("core.riemannian.Gamma_equals_gamma", gam_max, ctx.tol("riemannian")),
            Check("core.riemannian.flag_y_independent", flag_max, 1e-8)]


def check_R_homogeneity(ctx: SuiteContext) -> list[Check]:
    worst = 0.0
    for k, m in enumerate(catalog().values()):
        z = ctx.draw(m.dim, 70 + k)
        R = FinslerJets(m, z, 2, 4).R.value
        R2 = FinslerJets(m, z.scaled(2.0), 2, 4).R.value
        worst = max(worst, _rel(R2, 4.0 * R))
    return [Check("core.R_degree2_homogeneity", worst, 1e-9)]


def check_curvature_goldens(ctx: SuiteContext) -> list[Check]:
    from .core import einstein_residual, ricci

    cat = catalog()
    S, E = cat["round_sphere"], cat["euclidean"]
    z = ctx.draw(2, 80)
    rng = np.random.default_rng([ctx.seed, 81])
    u = rng.standard_normal(z.y.shape)
    K = flag_curvature(S, z, u)
    ric, _ = ricci(S, z)
    dirs = np.random.default_rng([ctx.seed, 82]).standard_normal((8, 2))
    K_hat, resid = einstein_residual(S, z.x[0], dirs)
    e_R = float(np.max(np.abs(FinslerJets(E, z, 2, 4).R.value)))
    return [Check("core.sphere_flag_curvature", float(np.max(np.abs(K - 1))), ctx.tol("curvature")),
            Check("core.sphere_ricci", float(np.max(np.abs(ric - 1))), ctx.tol("curvature")),
            Check("core.sphere_einstein_residual", resid, ctx.tol("curvature")),
            Check("core.sphere_einstein_K", abs(K_hat - 1.0), ctx.tol("curvature")),
            Check("core.euclidean_curvature_zero", e_R, 0.0)]


# conformal ----------------------------------------------------------------------------

def _changes():
    cat = catalog()
    for bname in ("euclidean", "riemannian", "randers", "minkowski_randers"):
        for pname, phi in phi_catalog().items():
            yield f"{bname}/{pname}", ConformalChange(cat[bname], phi)


def check_conformal(ctx: SuiteContext) -> list[Check]:
    worst = {"metric_g": 0.0, "metric_g_inv": 0.0, "metric_F": 0.0, "christoffel": 0.0, "spray": 0.0,
             "nonlinear_connection": 0.0, "cartan_horizontal": 0.0, "cartan_vertical": 0.0,
             "b_contraction": 0.0, "L_annihilates_e2phi": 0.0}
    for k, (_, ch) in enumerate(_changes()):
        z = ctx.draw(2, 100 + k)
        met = conformal_metric_check(ch, z)
        sp = conformal_spray_check(ch, z)
        cv = cartan_covariant_change_check(ch, z)
        vals = {"metric_g": met["g"], "metric_g_inv": met["g_inv"], "metric_F": met["F"],
                "christoffel": conformal_christoffel_check(ch, z), "spray": sp["spray"],
                "nonlinear_connection": sp["nonlinear_connection"], "cartan_horizontal": cv["horizontal"],
                "cartan_vertical": cv["vertical"], "b_contraction": b_contraction_check(ch, z),
                "L_annihilates_e2phi": vertical_action_on_x_functions(ch, z, fields.exp(2.0 * ch.phi))}
        for key, v in vals.items():
            worst[key] = max(worst[key], v)
    tols = {"metric_g": "metric_scaling", "metric_g_inv": "metric_scaling", "metric_F": "metric_scaling",
            "b_contraction": "riemannian"}
    out = []
    for key, v in worst.items():
        out.append(Check(f"conformal.{key}", v, ctx.tol(tols.get(key, "conformal"))))
    return out


# schwarzian ---------------------------------------------------------------------------

def check_schwarzian_structure(ctx: SuiteContext) -> list[Check]:
    sym = trace = 0.0
    for k, (m, phi) in enumerate(itertools.product(catalog().values(), phi_catalog().values())):
        z = ctx.draw(2, 200 + k, max(2, ctx.samples // 4))
        B = schwarzian_tensor(m, phi, z).B
        g = FinslerJets(m, z, 0, 2).g.value
        sym = max(sym, float(np.max(np.abs(B - np.swapaxes(B, -1, -2)))))
        trace = max(trace, float(np.max(np.abs(np.einsum("...ij,...ij->...", np.linalg.inv(g), B)))))
    return [Check("schwarzian.symmetric", sym, 0.0), Check("schwarzian.traceless", trace, ctx.tol("traceless"))]


def check_schwarzian_riemannian(ctx: SuiteContext) -> list[Check]:
    cat = catalog()
    os_max = y_max = 0.0
    for k, (name, phi) in enumerate(itertools.product(["round_sphere", "riemannian"], phi_catalog().values())):
        m = cat[name]
        z = ctx.draw(2, 300 + k)
        B = schwarzian_tensor(m, phi, z).B
        os_max = max(os_max, float(np.max(np.abs(B - riemannian_schwarzian(m, phi, z).B))))
        other = np.random.default_rng([ctx.seed, 399, k]).standard_normal(z.y.shape)
        B2 = schwarzian_tensor(m, phi, TangentSample(z.x, other)).B
        y_max = max(y_max, float(np.max(np.abs(B - B2))))
    return [Check("schwarzian.osgood_stowe_agreement", os_max, ctx.tol("riemannian")),
            Check("schwarzian.riemannian_y_independent", y_max, ctx.tol("riemannian"))]


def check_one_dim(ctx: SuiteContext) -> list[Check]:
    grid = np.linspace(0.5, 2.0, 25)
    worst = 0.0
    for f in (jets.exp, lambda t: t ** 3):
        worst = max(worst, float(np.max(np.abs(schwarzian_1d(f, grid) - classic_schwarzian(f, grid)))))
    return [Check("schwarzian.one_dim_reduction", worst, ctx.tol("one_dim"))]


def check_mobius_closure(ctx: SuiteContext) -> list[Check]:
    """phi Mobius for F and sigma Mobius for e^phi F imply phi + sigma Mobius for F."""
    x1, x2 = fields.coords(2)
    E = metrics.euclidean(2)
    phi = -fields.log(1 + x1 * x1 + x2 * x2)
    shifted = -fields.log(1 + (x1 - 0.3) ** 2 + (x2 + 0.2) ** 2)
    sigma = shifted - phi
    z = ctx.draw(2, 400)
    r_phi = mobius_residual(E, phi, z)
    r_sigma = mobius_residual(metrics.ConformalScale(E, phi), sigma, z)
    r_sum = mobius_residual(E, phi + sigma, z)
    premise = r_phi.is_mobius and r_sigma.is_mobius
    return [Check("schwarzian.mobius_closure.premise", max(r_phi.max_residual, r_sigma.max_residual),
                  ctx.tol("mobius")),
            Check("schwarzian.mobius_closure", r_sum.max_residual if premise else float("inf"), 1e-7)]


def check_cocycle(ctx: SuiteContext) -> list[Check]:
    cat = catalog()
    x1, x2 = fields.coords(2)
    sigma = fields.log(1 + x1 * x1 + x2 * x2)
    out = []
    for k, name in enumerate(["randers", "minkowski_randers", "riemannian"]):
        z = ctx.draw(2, 500 + k)
        out.append(Check(f"schwarzian.cocycle.{name}", cocycle_check(cat[name], x1, sigma, z), ctx.tol("cocycle")))
    return out


# curves ------------------------------------------------------------------------------

def _sphere_reference_circle(x0, X0, Y0, kappa: float, s_eval: np.ndarray) -> np.ndarray:
    """Levi-Civita Frenet system of e^{2 phi} delta, phi = log(2/(1+|x|^2)), by DOP853."""
    def rhs(_, u):
        x, X, Y = u[0:2], u[2:4], u[4:6]
        dphi = -2.0 * x / (1.0 + x @ x)

        def gam(a, b):
            # gamma^i_jk a^j b^k = a^i (dphi.b) + b^i (dphi.a) - (a.b) dphi
            return a * (dphi @ b) + b * (dphi @ a) - (a @ b) * dphi
        return np.concatenate([X, kappa * Y - gam(X, X), -kappa * X - gam(Y, X)])

    sol = solve_ivp(rhs, (0.0, float(s_eval[-1])), np.concatenate([x0, X0, Y0]), method="DOP853",
                    t_eval=s_eval, rtol=1e-13, atol=1e-14)
    return sol.y[:2].T


def check_curves(ctx: SuiteContext) -> list[Check]:
    cat = catalog()
    L = ctx.curve_length
    rng = np.random.default_rng([ctx.seed, 600])
    x0 = rng.uniform(-0.2, 0.2, 2)
    y0 = rng.standard_normal(2)
    geo = integrate_geodesic(cat["randers"], x0, y0, L)
    fr = frenet_curvatures(cat["randers"], geo.x, geo.s)
    S = cat["round_sphere"]
    X0, Y0 = orthonormal_frame(S, x0, y0, [-y0[1], y0[0]])
    circ = integrate_geodesic_circle(S, x0, X0, Y0, 1.0, L)
    fd = circ.frame_drift()
    ref = _sphere_reference_circle(x0, X0, Y0, 1.0, circ.s)
    return [Check("curves.unit_speed.geodesic", geo.speed_drift(), ctx.tol("unit_speed")),
            Check("curves.unit_speed.circle", circ.speed_drift(), ctx.tol("unit_speed")),
            Check("curves.circle_frame", max(fd["orthogonality"], fd["unit_normal"]), ctx.tol("frame")),
            Check("curves.geodesic_kappa1", float(np.max(fr.kappa1)), ctx.tol("geodesic_kappa")),
            Check("curves.riemannian_reference_integrator", float(np.max(np.abs(circ.x - ref))),
                  ctx.tol("reference_integrator"))]


def check_randers_circle(ctx: SuiteContext) -> list[Check]:
    m = catalog()["randers"]
    X0, Y0 = orthonormal_frame(m, [0.1, 0.0], [1.0, 0.3], [0.0, 1.0])
    circ = integrate_geodesic_circle(m, [0.1, 0.0], X0, Y0, 1.0, min(ctx.curve_length, 5.0))
    fr = frenet_curvatures(m, circ.x, circ.s)
    inner = slice(fr.margin, len(fr.kappa1) - fr.margin)
    return [Check("curves.frenet_round_trip.kappa1", float(np.max(np.abs(fr.kappa1[inner] - 1.0))), ctx.tol("frenet")),
            Check("curves.frenet_round_trip.kappa2", fr.kappa2_max, ctx.tol("frenet"))]


def check_projective(ctx: SuiteContext) -> list[Check]:
    h = 2e-3
    sol = projective_parameter_solve(2.0, 0.0, 1.0, 0.0, 1.0, h)
    S = numeric_schwarzian(sol.p, h)
    return [Check("curves.projective_recovers_q", float(np.max(np.abs(S - 2.0)[3:-3])), ctx.tol("projective_q"))]


CHECKS: dict[str, Callable[[SuiteContext], list[Check]]] = {
    "engine.jet_vs_fd_oracle": check_jet_vs_oracle,
    "engine.euler_homogeneity": check_euler,
    "engine.mixed_partial_symmetry": check_mixed_partials,
    "core.connection": check_connection,
    "core.g_homogeneity": check_g_homogeneity,
    "core.riemannian": check_riemannian,
    "core.R_homogeneity": check_R_homogeneity,
    "core.curvature_goldens": check_curvature_goldens,
    "conformal": check_conformal,
    "schwarzian.structure": check_schwarzian_structure,
    "schwarzian.riemannian": check_schwarzian_riemannian,
    "schwarzian.one_dim": check_one_dim,
    "schwarzian.mobius_closure": check_mobius_closure,
    "schwarzian.cocycle": check_cocycle,
    "curves": check_curves,
    "curves.randers_circle": check_randers_circle,
    "curves.projective": check_projective,
}


def run_group(args: tuple[str, SuiteContext]) -> list[Check]:
    name, ctx = args
    return CHECKS[name](ctx)
