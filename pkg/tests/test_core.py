import numpy as np
import pytest

from finsler_mobius import fields, metrics
from finsler_mobius.config import draw_samples
from finsler_mobius.core import (FinslerJets, berwald_residual, connection_bundle, connection_invariants,
                                 einstein_residual, finsler_gradient, flag_curvature, point_connection,
                                 ricci, scalar_curvature_residual, spray)
from finsler_mobius.errors import DegenerateFlag
from finsler_mobius.jets import TangentSample

x1, x2 = fields.coords(2)
A = ((1 + x1 * x1, 0.2 * x1 * x2), (0.2 * x1 * x2, 1 + x2 * x2))
METRICS = {
    "euclidean": metrics.euclidean(2),
    "sphere": metrics.round_sphere(2),
    "riemannian": metrics.Riemannian(A),
    "mink_randers": metrics.minkowski_randers([0.4, -0.2]),
    "randers": metrics.randers(A, (-0.3 * x2, 0.3 * x1)),
}
Z = draw_samples(11, 2, range(12))


def test_minkowski_randers_fundamental_tensor_closed_form():
    b = np.array([0.4, -0.2])
    g = connection_bundle(METRICS["mink_randers"], Z).g
    for i in range(len(Z.y)):
        y = Z.y[i]
        a = np.linalg.norm(y)
        F = a + b @ y
        u = y / a
        ref = (F / a) * (np.eye(2) - np.outer(u, u)) + np.outer(b + u, b + u)
        assert np.allclose(g[i], ref, atol=1e-13)


@pytest.mark.parametrize("name", list(METRICS))
def test_connection_identities(name):
    for key, val in connection_invariants(METRICS[name], Z).items():
        assert val <= 1e-9, key


def test_point_connection_matches_jets():
    m = METRICS["randers"]
    pc = point_connection(m, Z)
    fj = FinslerJets(m, Z, 1, 3)
    assert np.allclose(pc.g, fj.g.value, atol=1e-13)
    assert np.allclose(pc.G, fj.G.value, atol=1e-13)
    assert np.allclose(pc.C_mixed, fj.C_mixed.value, atol=1e-13)
    assert np.allclose(pc.Gamma, fj.Gamma.value, atol=1e-12)


def test_locally_minkowski_has_no_spray_or_curvature():
    m = METRICS["mink_randers"]
    G, N = spray(m, Z)
    assert np.max(np.abs(G)) == 0.0 and np.max(np.abs(N)) == 0.0
    assert np.max(np.abs(FinslerJets(m, Z, 2, 4).R.value)) == 0.0


def test_sphere_curvature_goldens():
    S = METRICS["sphere"]
    u = np.random.default_rng(2).standard_normal(Z.y.shape)
    assert np.allclose(flag_curvature(S, Z, u), 1.0, atol=1e-10)
    ric, ric_ij = ricci(S, Z)
    assert np.allclose(ric, 1.0, atol=1e-10)
    g = connection_bundle(S, Z).g
    assert np.allclose(ric_ij, g, atol=1e-9)
    assert np.max(scalar_curvature_residual(S, Z, 1.0)) < 1e-9
    K, resid = einstein_residual(S, Z.x[0], np.random.default_rng(3).standard_normal((6, 2)))
    assert K == pytest.approx(1.0, abs=1e-10) and resid < 1e-9


def test_three_sphere_ricci_scales_with_dimension():
    S3 = metrics.round_sphere(3)
    z = draw_samples(5, 3, range(4))
    ric, _ = ricci(S3, z)
    assert np.allclose(ric, 2.0, atol=1e-9)


def test_flag_needs_transverse_vector():
    with pytest.raises(DegenerateFlag):
        flag_curvature(METRICS["sphere"], Z[0:1], 2.0 * Z.y[0:1])


def test_berwald_detection():
    assert berwald_residual(METRICS["riemannian"], Z) < 1e-10
    assert berwald_residual(METRICS["mink_randers"], Z) < 1e-10
    assert berwald_residual(METRICS["randers"], Z) > 1e-3


def test_gradient_euclidean_and_randers():
    phi = x1 * x1 + 0.5 * x2
    x = np.array([0.3, 0.1])
    assert np.allclose(finsler_gradient(METRICS["euclidean"], phi, x), [0.6, 0.5], atol=1e-12)
    m = METRICS["mink_randers"]
    v = finsler_gradient(m, phi, x)
    # defining property: g(x, v) v = df
    g = connection_bundle(m, TangentSample(x, v)).g
    assert np.allclose(g @ v, [0.6, 0.5], atol=1e-10)
