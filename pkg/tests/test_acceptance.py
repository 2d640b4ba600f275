"""Acceptance criteria, one test each, at the documented tolerances.

Each test records a single PASS/FAIL line (shown in the pytest terminal
summary, or printed directly when this file is run as a script).
"""

import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from finsler_mobius import fields, jets, metrics
from finsler_mobius.config import draw_samples
from finsler_mobius.conformal import (ConformalChange, cartan_change_terms, cartan_covariant_change_check,
                                      conformal_metric_check, conformal_spray_check, predicted_christoffel)
from finsler_mobius.core import FinslerJets, einstein_residual, flag_curvature, formal_christoffel
from finsler_mobius.curves import (circle_preservation_experiment, geodesic_ricci_profile, integrate_geodesic,
                                   integrate_geodesic_circle, orthonormal_frame, projective_invariance_check,
                                   projective_parameter_solve)
from finsler_mobius.jets import TangentSample
from finsler_mobius.schwarzian import (classic_composition_check, classic_schwarzian, cocycle_check,
                                       schwarzian_1d, schwarzian_tensor)

SEED = 20240607
x1, x2 = fields.coords(2)
A = ((1 + x1 * x1, 0.2 * x1 * x2), (0.2 * x1 * x2, 1 + x2 * x2))
EUCLID = metrics.euclidean(2)
SPHERE = metrics.round_sphere(2)
RIEMANNIAN = metrics.Riemannian(A)
RANDERS = metrics.randers(A, (-0.3 * x2, 0.3 * x1))
MINK_RANDERS = metrics.minkowski_randers([0.5, 0.0])
CONF_RANDERS = metrics.ConformalScale(metrics.randers("identity", (0.2 * x2, 0.1)), 0.3 * fields.sin(x1))
ALL = [EUCLID, SPHERE, RIEMANNIAN, RANDERS, MINK_RANDERS, CONF_RANDERS]
PHIS = [fields.Const(0.7), x1, -fields.log(1 + x1 * x1 + x2 * x2), 0.3 * fields.sin(x1) * x2 + 0.1 * x2 * x2]


def samples(stream: int, count: int, n: int = 2) -> TangentSample:
    return draw_samples(SEED, n, range(stream * 10_000, stream * 10_000 + count))


def rel(a, b, floor=1.0):
    return float(np.max(np.abs(a - b)) / max(floor, float(np.max(np.abs(b)))))


def test_c01_fundamental_tensor_matches_oracle(criterion):
    # one member of each metric kind: Euclidean, Riemannian, conformally scaled, Randers
    kinds = {"euclidean": EUCLID, "riemannian": RIEMANNIAN, "conformal": SPHERE, "randers": RANDERS}
    worst = 0.0
    for k, m in enumerate(kinds.values()):
        z = samples(1 + k, 50)
        g = FinslerJets(m, z, 0, 2).g.value
        for i in range(50):
            for a, b in ((0, 0), (0, 1), (1, 1)):
                alpha = [0, 0, 0, 0]
                alpha[2 + a] += 1
                alpha[2 + b] += 1
                worst = max(worst, abs(g[i, a, b] - 0.5 * jets.fd_oracle(m.F2, z[i], alpha)))
    assert criterion(1, "g_ij jets vs fd oracle, 200 samples x 4 kinds", {"max_dev": worst, "tol": 1e-5},
                     worst <= 1e-5)


def test_c02_homogeneity_and_cartan_identities(criterion):
    res = {"g_homog": 0.0, "gyy_F2": 0.0, "Cy": 0.0, "Gamma_yy_2G": 0.0}
    per = -(-200 // len(ALL))
    for k, m in enumerate(ALL):
        z = samples(10 + k, per)
        fj = FinslerJets(m, z, 1, 3)
        g, C, G, Gamma, F2 = fj.g.value, fj.C.value, fj.G.value, fj.Gamma.value, fj.F2.value
        y = z.y
        for lam in (0.3, 2.0, 7.5):
            res["g_homog"] = max(res["g_homog"], rel(FinslerJets(m, z.scaled(lam), 0, 2).g.value, g))
        res["gyy_F2"] = max(res["gyy_F2"], float(np.max(np.abs(np.einsum("...ij,...i,...j->...", g, y, y) - F2) / F2)))
        Cy = np.einsum("...ijk,...k->...ij", C, y)
        scale = np.maximum(np.max(np.abs(C), axis=(-3, -2, -1)) * np.linalg.norm(y, axis=-1), 1e-300)
        res["Cy"] = max(res["Cy"], float(np.max(np.max(np.abs(Cy), axis=(-2, -1)) / np.maximum(scale, 1.0))))
        Gyy = np.einsum("...ijk,...j,...k->...i", Gamma, y, y)
        scale = np.maximum(np.max(np.abs(2 * G), axis=-1), F2)
        res["Gamma_yy_2G"] = max(res["Gamma_yy_2G"], float(np.max(np.abs(Gyy - 2 * G) / scale[:, None])))
    ok = all(v <= 1e-9 for v in res.values())
    assert criterion(2, "homogeneity and Cartan identities, 200 samples", {**res, "tol": 1e-9}, ok)


def test_c03_conformal_change_formulas(criterion):
    phis = {"const": fields.Const(0.7), "x1": x1, "sphere": -fields.log(1 + x1 * x1 + x2 * x2)}
    bases = {"euclidean": EUCLID, "randers": RANDERS, "minkowski_randers": MINK_RANDERS}
    worst = {"metric": 0.0, "spray": 0.0, "nonlinear": 0.0, "christoffel": 0.0, "cartan_h": 0.0}
    for k, (base, phi) in enumerate((b, p) for b in bases.values() for p in phis.values()):
        ch = ConformalChange(base, phi)
        z = samples(20 + k, 20)
        worst["metric"] = max(worst["metric"], max(conformal_metric_check(ch, z).values()))
        sp = conformal_spray_check(ch, z)
        worst["spray"] = max(worst["spray"], sp["spray"])
        worst["nonlinear"] = max(worst["nonlinear"], sp["nonlinear_connection"])
        worst["christoffel"] = max(worst["christoffel"], rel(predicted_christoffel(ch, z), formal_christoffel(ch.scaled, z)))
        worst["cartan_h"] = max(worst["cartan_h"], cartan_covariant_change_check(ch, z)["horizontal"])
    ok = all(v <= 1e-9 for v in worst.values())
    assert criterion(3, "conformal-change predictions vs recomputation", {**worst, "tol": 1e-9}, ok)


def test_c04_schwarzian_goldens(criterion):
    z = samples(30, 50)
    const = float(np.max(np.abs(schwarzian_tensor(EUCLID, fields.Const(2.0), z).B)))
    sphere = float(np.max(np.abs(schwarzian_tensor(EUCLID, PHIS[2], z).B)))
    lin = float(np.max(np.abs(schwarzian_tensor(EUCLID, x1, z).B - np.array([[-0.5, 0.0], [0.0, 0.5]]))))
    rng = np.random.default_rng([SEED, 4])
    trace = 0.0
    for t in range(100):
        m = ALL[rng.integers(len(ALL))]
        phi = PHIS[rng.integers(len(PHIS))]
        zt = samples(31, 100)[t:t + 1]
        B = schwarzian_tensor(m, phi, zt).B
        g_inv = FinslerJets(m, zt, 0, 2).g_inv.value
        trace = max(trace, float(np.max(np.abs(np.einsum("...ij,...ij->...", g_inv, B)))))
    ok = const == 0.0 and sphere <= 1e-9 and lin <= 1e-10 and trace <= 1e-9
    assert criterion(4, "Schwarzian goldens and tracelessness",
                     {"const": const, "sphere": sphere, "x1_dev": lin, "trace": trace}, ok)


def test_c05_cocycle(criterion):
    sigma = fields.log(1 + x1 * x1 + x2 * x2)
    phi = 0.2 * x1 - 0.1 * x2 * x2
    resid = cocycle_check(RANDERS, phi, sigma, samples(40, 50))
    a_riem = 0.0
    for k, m in enumerate([EUCLID, SPHERE, RIEMANNIAN]):
        A_raw = cartan_change_terms(ConformalChange(m, phi), samples(41 + k, 20), sigma, traceless=False)
        a_riem = max(a_riem, float(np.max(np.abs(A_raw))))
    ok = resid <= 1e-7 and a_riem == 0.0
    assert criterion(5, "cocycle on 50 Randers samples; A = 0 on Riemannian bases",
                     {"residual": resid, "A_riemannian": a_riem, "tol": 1e-7}, ok)


def test_c06_one_dimensional_reduction(criterion):
    rng = np.random.default_rng([SEED, 6])
    grid = np.linspace(-1.0, 1.0, 41)
    flm = 0.0
    for _ in range(10):
        a, b, c, d = rng.uniform(-2, 2, 4)
        while abs(a * d - b * c) < 0.2:
            a, b, c, d = rng.uniform(-2, 2, 4)
        xs = grid[np.abs(c * grid + d) > 0.1]
        flm = max(flm, float(np.max(np.abs(classic_schwarzian(lambda t: (a * t + b) / (c * t + d), xs)))))
    xs = np.linspace(0.5, 2.0, 31)
    comp = classic_composition_check(jets.exp, lambda t: t ** 3, xs)
    red = 0.0
    for f in (jets.exp, lambda t: t ** 3, lambda t: jets.tan(0.5 * t) + t):
        red = max(red, float(np.max(np.abs(schwarzian_1d(f, xs) - classic_schwarzian(f, xs)))))
    ok = flm <= 1e-10 and comp <= 1e-9 and red <= 1e-9
    assert criterion(6, "1-D reduction", {"S_frac_linear": flm, "composition": comp, "B_vs_S": red}, ok)


def test_c07_geodesic_and_circle_integrity(criterion):
    geo = integrate_geodesic(RANDERS, [0.1, 0.0], [1.0, 0.5], 10.0, 1e-3)
    drift = geo.speed_drift()
    circ = integrate_geodesic_circle(EUCLID, [0.0, 0.0], [1.0, 0.0], [0.0, 1.0], 2.0, np.pi)
    closure = float(np.max(np.abs(circ.x[-1] - circ.x[0])))
    X0, Y0 = orthonormal_frame(RANDERS, [0.1, 0.0], [1.0, 0.3], [0.0, 1.0])
    near = integrate_geodesic_circle(RANDERS, [0.1, 0.0], X0, Y0, 1e-9, 2.0)
    ref = integrate_geodesic(RANDERS, [0.1, 0.0], X0, 2.0)
    limit = float(np.max(np.abs(near.x - ref.x)))
    ok = drift <= 1e-6 and closure <= 1e-5 and limit <= 1e-6
    assert criterion(7, "unit speed over L=10 (Randers), circle closure, kappa->0 limit",
                     {"drift": drift, "closure": closure, "kappa0_dev": limit}, ok)


def test_c08_circles_preserved_by_mobius_changes(criterion):
    # three dimensions: in the plane the second curvature vanishes for every curve
    E3 = metrics.euclidean(3)
    y1, y2, y3 = fields.coords(3)
    args = ([0.3, -0.2, 0.1], [1.0, 0.0, 0.5], [0.0, 1.0, 0.0], 2.0, np.pi)
    good = circle_preservation_experiment(E3, -fields.log(1 + y1 * y1 + y2 * y2 + y3 * y3), *args)
    bad = circle_preservation_experiment(E3, y1 ** 3, *args)
    ok = good.kappa1_rel_std <= 1e-4 and good.kappa2_max <= 1e-4 and bad.kappa2_max > 1e-2
    assert criterion(8, "Mobius image of a circle is a circle; (x1)^3 control is not",
                     {"rel_std": good.kappa1_rel_std, "kappa2": good.kappa2_max, "control_kappa2": bad.kappa2_max}, ok)


def test_c09_curvature_goldens(criterion):
    z = samples(50, 20)
    u = np.random.default_rng([SEED, 9]).standard_normal(z.y.shape)
    K = float(np.max(np.abs(flag_curvature(SPHERE, z, u) - 1.0)))
    dirs = np.random.default_rng([SEED, 10]).standard_normal((10, 2))
    K_hat, resid = einstein_residual(SPHERE, z.x[0], dirs)
    flat = max(float(np.max(np.abs(flag_curvature(EUCLID, z, u)))),
               float(np.max(np.abs(FinslerJets(EUCLID, z, 2, 4).R.value))))
    ok = K <= 1e-6 and resid <= 1e-6 and abs(K_hat - 1) <= 1e-6 and flat == 0.0
    assert criterion(9, "sphere K=1, Einstein, Euclidean flat",
                     {"K_dev": K, "einstein": resid, "K_hat_dev": abs(K_hat - 1), "euclid": flat}, ok)


def test_c10_projective_parameter(criterion):
    sol = projective_parameter_solve(0.0, 0.0, 1.0, 2.0, 0.9)
    e0 = float(np.max(np.abs(sol.p - sol.s / (1 - sol.s))))
    sol = projective_parameter_solve(2.0, 0.0, 1.0, 0.0, 1.4)
    e2 = float(np.max(np.abs(sol.p - np.tan(sol.s))))
    # invariance on the unit interval with the finite-difference step 2e-3
    h = 2e-3
    p = projective_parameter_solve(2.0, 0.0, 1.0, 0.0, 1.0, h).p
    inv = projective_invariance_check(p, h, [2.0, 1.0, 1.0, 3.0])
    geo = integrate_geodesic(SPHERE, [0.2, -0.1], [0.3, 1.0], 1.0)
    q = float(np.max(np.abs(geodesic_ricci_profile(SPHERE, geo) - 2.0)))
    ok = e0 <= 1e-6 and e2 <= 1e-6 and inv <= 1e-6 and q <= 1e-5
    assert criterion(10, "projective parameter solve, invariance, sphere q=2",
                     {"s/(1-s)": e0, "tan": e2, "invariance": inv, "q_dev": q}, ok)


def test_c11_suite_deterministic(criterion, tmp_path):
    cfg = tmp_path / "suite.json"
    # reduced sample count and curve length keep three full runs inside the time budget
    cfg.write_text(json.dumps({"seed": 11, "suite": {"samples": 8, "curve_length": 1.0}}))
    texts, codes = [], []
    for i, jobs in enumerate(["1", "1", "4"]):
        out = tmp_path / f"run{i}"
        res = subprocess.run([sys.executable, "-m", "finsler_mobius.cli", "suite", "--config", str(cfg),
                              "--out", str(out), "--jobs", jobs], capture_output=True, text=True)
        codes.append(res.returncode)
        lines = (out / "report.json").read_text().splitlines()
        texts.append("\n".join(ln for ln in lines if '"wall_time"' not in ln))
    ok = texts[0] == texts[1] == texts[2] and codes == [0, 0, 0]
    assert criterion(11, "suite byte-identical across runs and --jobs 4",
                     {"exit_codes": codes, "identical": texts[0] == texts[1] == texts[2]}, ok)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
