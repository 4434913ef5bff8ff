"""Builtin Lagrangians, transformation families, and the registry lookups."""

import numpy as np
import pytest

from logmeasure import family_generator, family_velocity, make_lattice
from logmeasure.library import (
    free_lagrangian,
    harmonic_lagrangian,
    list_builtins_data,
    make_family,
    make_lagrangian,
    pointwise_family,
    polynomial_pairs,
    quartic_lagrangian,
    rotation_family,
    scaling_family,
    shear_family,
    sine_flow_family,
    translation_family,
)


def test_free_lagrangian_has_zero_eta_and_scaled_kinetic():
    lag = free_lagrangian(2, kinetic_scale=2.0)
    q = np.array([[1.0, 2.0]])
    assert lag.eta(q, q)[0] == 0.0
    np.testing.assert_array_equal(lag.kinetic_matrix, 2.0 * np.eye(2))
    assert lag.quadratic_eta is not None


def test_harmonic_lagrangian_values_and_gradient():
    lag = harmonic_lagrangian(2, omega=2.0)
    q = np.array([[1.0, -1.0]])
    assert lag.eta(q, np.zeros_like(q))[0] == pytest.approx(0.5 * 4.0 * 2.0)
    np.testing.assert_allclose(lag.eta_d1(q, np.zeros_like(q)), 4.0 * q)
    np.testing.assert_array_equal(lag.quadratic_eta.matrix, 4.0 * np.eye(2))


def test_quartic_lagrangian_has_no_gaussian_certificate():
    lag = quartic_lagrangian(1, coupling=0.3)
    q = np.array([[2.0]])
    assert lag.eta(q, q)[0] == pytest.approx(0.3 * 16.0)
    np.testing.assert_allclose(lag.eta_d1(q, q), [[0.3 * 32.0]])
    assert lag.quadratic_eta is None


def test_translation_family_default_direction_is_unit():
    fam = translation_family(4)
    h = family_generator(fam)
    k = h.eval_at(np.zeros(4))
    assert np.linalg.norm(k) == pytest.approx(1.0, rel=1e-12)
    x = np.array([1.0, 2.0, 3.0, 4.0])
    np.testing.assert_allclose(fam.apply(0.5, x), x - 0.5 * k)


def test_scaling_family_is_exponential():
    fam = scaling_family(2)
    x = np.array([1.0, -2.0])
    np.testing.assert_allclose(fam.apply(0.3, x), np.exp(0.3) * x, rtol=1e-14)


def test_rotation_family_preserves_norms_and_plane_parameter():
    fam = rotation_family(3, plane=(0, 2))
    x = np.array([1.0, 0.5, -1.0])
    y = fam.apply(0.7, x)
    assert np.linalg.norm(y) == pytest.approx(np.linalg.norm(x), rel=1e-12)
    assert y[1] == x[1]
    gen = family_generator(fam).jacobian_at(x)
    np.testing.assert_allclose(gen, -gen.T, atol=1e-12)
    assert np.trace(gen) == 0.0


def test_shear_family_is_affine_with_zero_divergence():
    fam = shear_family(3, strength=0.5)
    x = np.array([1.0, 2.0, 3.0])
    y = fam.apply(0.4, x)
    # the shear adds alpha * strength times the next coordinate
    np.testing.assert_allclose(y, x + 0.4 * 0.5 * np.array([2.0, 3.0, 0.0]))
    vel = family_velocity(fam)
    assert vel.divergence_at(x) == 0.0


def test_sine_flow_satisfies_the_group_property():
    fam = sine_flow_family(2, amplitude=0.2, wavenumber=1.5)
    x = np.array([0.4, -0.8])
    composed = fam.apply(0.1, fam.apply(0.15, x))
    direct = fam.apply(0.25, x)
    np.testing.assert_allclose(composed, direct, atol=1e-10)


def test_sine_flow_generator_matches_velocity_sign():
    fam = sine_flow_family(1, amplitude=0.3, wavenumber=2.0)
    x = np.array([0.5])
    gen = family_generator(fam).eval_at(x)
    np.testing.assert_allclose(gen, -0.3 * np.sin(2.0 * x), rtol=1e-12)


def test_pointwise_family_acts_slotwise():
    lat = make_lattice(3, 1.0, 1)
    fam = pointwise_family(scaling_family(1), lat)
    assert fam.dim == 3
    flat = np.array([1.0, -2.0, 0.5])
    np.testing.assert_allclose(fam.apply(0.2, flat), np.exp(0.2) * flat, rtol=1e-14)
    vel = family_velocity(fam)
    assert vel.divergence_at(flat) == pytest.approx(3.0)
    jac = vel.jacobian_at(flat)
    np.testing.assert_allclose(jac, np.eye(3), atol=1e-12)


def test_pointwise_family_requires_matching_base_dimension():
    lat = make_lattice(3, 1.0, 2)
    with pytest.raises(ValueError):
        pointwise_family(scaling_family(1), lat)


def test_polynomial_pairs_count_and_determinism():
    a = polynomial_pairs(2, count=5, seed=3)
    b = polynomial_pairs(2, count=5, seed=3)
    assert len(a) == 5
    x = np.random.default_rng(0).normal(size=(4, 2))
    for (phi1, h1), (phi2, h2) in zip(a, b):
        np.testing.assert_array_equal(phi1.evaluator(x), phi2.evaluator(x))
        np.testing.assert_array_equal(h1.eval(x), h2.eval(x))
    c = polynomial_pairs(2, count=2, seed=4)
    assert not np.array_equal(a[0][0].evaluator(x), c[0][0].evaluator(x))


def test_registries_build_named_objects():
    lag = make_lagrangian("harmonic", 2, {"omega": 1.5})
    assert lag.dim_q == 2
    fam = make_family("rotation", 3, {"plane": [0, 2]})
    assert fam.dim == 3
    fam2 = make_family("translation", 2, {"direction": [1.0, 0.0]})
    np.testing.assert_allclose(fam2.apply(1.0, np.zeros(2)), [-1.0, 0.0])


def test_registries_reject_unknown_names():
    with pytest.raises(ValueError):
        make_lagrangian("cubic", 1)
    with pytest.raises(ValueError):
        make_family("spiral", 2)


def test_list_builtins_data_is_complete_and_stable():
    data = list_builtins_data()
    lag_names = {entry["name"] for entry in data["lagrangians"]}
    fam_names = {entry["name"] for entry in data["families"]}
    assert {"free", "harmonic", "quartic"} <= lag_names
    assert {"translation", "scaling", "rotation", "shear", "sine_flow"} <= fam_names
    assert data == list_builtins_data()
