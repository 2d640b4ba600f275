import numpy as np
import pytest

from finsler_mobius import fields, metrics
from finsler_mobius.config import draw_samples
from finsler_mobius.conformal import (ConformalChange, b_contraction_check, cartan_change_terms,
                                      cartan_covariant_change_check, conformal_christoffel_check,
                                      conformal_deltas, conformal_metric_check, conformal_spray_check,
                                      torsion_terms, vertical_action_on_x_functions)
from finsler_mobius.core import connection_bundle

x1, x2 = fields.coords(2)
BASES = {
    "euclidean": metrics.euclidean(2),
    "riemannian": metrics.Riemannian(((1 + x1 * x1, 0.2 * x1 * x2), (0.2 * x1 * x2, 1 + x2 * x2))),
    "randers": metrics.randers("identity", (-0.3 * x2, 0.3 * x1)),
}
PHIS = {"const": fields.Const(0.4), "x1": x1, "sphere": -fields.log(1 + x1 * x1 + x2 * x2),
        "mixed": 0.3 * fields.sin(x1) * x2}
Z = draw_samples(21, 2, range(10))
CASES = [(b, p) for b in BASES for p in PHIS]


@pytest.mark.parametrize("base,phi", CASES)
def test_predictions_match_recomputation(base, phi):
    ch = ConformalChange(BASES[base], PHIS[phi])
    assert max(conformal_metric_check(ch, Z).values()) < 1e-12
    sp = conformal_spray_check(ch, Z)
    assert sp["spray"] < 1e-10 and sp["nonlinear_connection"] < 1e-10
    assert conformal_christoffel_check(ch, Z) < 1e-10
    cv = cartan_covariant_change_check(ch, Z)
    assert cv["horizontal"] < 1e-10 and cv["vertical"] < 1e-10
    assert b_contraction_check(ch, Z) < 1e-10
    assert vertical_action_on_x_functions(ch, Z, fields.exp(2.0 * ch.phi)) < 1e-12


def test_homothety_leaves_connection_alone():
    ch = ConformalChange(BASES["randers"], PHIS["const"])
    d = conformal_deltas(ch, Z)
    base = connection_bundle(ch.base, Z)
    assert np.array_equal(d.G_bar, base.G)
    assert np.array_equal(d.N_bar, base.N)
    assert np.max(np.abs(torsion_terms(ch, Z))) == 0.0


def test_euclidean_spray_shift_closed_form():
    # for F = |y|, G-bar = (phi_k y^k) y - |y|^2 grad(phi) / 2
    ch = ConformalChange(BASES["euclidean"], PHIS["sphere"])
    d = conformal_deltas(ch, Z)
    _, dphi, _ = PHIS["sphere"].derivatives(Z.x)
    yy = np.sum(Z.y ** 2, axis=-1)
    ref = np.sum(dphi * Z.y, axis=-1)[:, None] * Z.y - 0.5 * yy[:, None] * dphi
    assert np.allclose(d.G_bar, ref, atol=1e-14)


def test_riemannian_torsion_vanishes():
    ch = ConformalChange(BASES["riemannian"], PHIS["mixed"])
    assert np.max(np.abs(torsion_terms(ch, Z))) == 0.0
    assert np.max(np.abs(cartan_change_terms(ch, Z, x2, traceless=False))) == 0.0


def test_correction_is_symmetric_and_traceless():
    ch = ConformalChange(BASES["randers"], PHIS["x1"])
    A_raw = cartan_change_terms(ch, Z, x2, traceless=False)
    A = cartan_change_terms(ch, Z, x2)
    g_inv = connection_bundle(ch.base, Z).g_inv
    assert np.max(np.abs(A_raw - np.swapaxes(A_raw, -1, -2))) < 1e-14
    assert np.max(np.abs(np.einsum("...ij,...ij->...", g_inv, A))) < 1e-14
    # the raw torsion contraction genuinely carries a trace in the non-Riemannian case
    assert np.max(np.abs(np.einsum("...ij,...ij->...", g_inv, A_raw))) > 1e-3
