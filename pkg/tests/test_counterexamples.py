import math

import numpy as np
import pytest

from approxcv import counterexamples as cx


def test_sign_atoms_solve_their_constraints():
    a, b = cx.sign_atoms()
    assert a > b > 0
    assert a * a + b * b == pytest.approx(2.0, abs=1e-14)
    assert a + b == pytest.approx(2 * math.sqrt(2 / math.pi), abs=1e-14)


def test_moment_matched_points_hit_moments_exactly():
    mean = np.array([0.3, -0.1, 2.0])
    Z = cx.moment_matched(50, mean, seed=3)
    assert np.allclose(Z.mean(axis=0), mean, atol=1e-14)
    C = (Z - mean).T @ (Z - mean) / 50
    assert np.allclose(C, np.eye(3), atol=1e-13)


def test_four_atom_instance_requires_multiple_of_four():
    with pytest.raises(ValueError):
        cx.build("prop5", 10)


@pytest.mark.parametrize("n", [20, 100, 400])
def test_sign_instance_gap_matches_exact_closed_form(n):
    res = cx.run_case("prop5", n)
    assert res["abs_diff_exact"] <= 1e-12
    assert res["zbar_is_argmin"]


def test_exact_gap_differs_from_printed_formula():
    # the printed closed form is positive while the exact gap is negative
    for n in (20, 100, 400):
        assert cx.prop5_exact_gap(n) < 0 < cx.reference_gap("prop5", n)


@pytest.mark.parametrize("n", [16, 64, 256])
def test_two_atom_instance_estimator_gap(n):
    res = cx.run_case("prop7", n)
    assert res["beta_abs_diff"] <= 1e-12
    # the proximal approximation is exact for quadratic loss, so it tracks exact CV
    assert res["pipeline_gap"] == pytest.approx(res["cv_gap"], abs=1e-12)


def test_patched_lasso_fit_sits_at_the_kink():
    inst = cx.build("prop6", 400, 0.05)
    from approxcv.solver import fit_erm
    fit = fit_erm(inst.model, inst.data, inst.data.full_weights(), 0.05)
    assert abs(abs(fit.beta[0]) - 0.05) <= 1e-9


def test_l1_multimodal_instance_has_two_minima():
    res = cx.run_case("fig1b", 25)
    assert res["local_minima"] >= 2


def test_count_local_minima():
    assert cx.count_local_minima([3, 1, 2, 0, 5]) == 2
    assert cx.count_local_minima([1, 1, 1]) == 0


def test_unknown_case():
    with pytest.raises(ValueError):
        cx.build("prop9", 8)
