from __future__ import annotations

import numpy as np
import pytest

from sdeflow.coefficients import (
    Composite,
    ConstantField,
    CustomField,
    DiagonalAffineField,
    LinearDrift,
    TrigonometricField,
    audit_lipschitz,
    composite,
    ito_drift,
    make_field,
)
from sdeflow.errors import MissingDerivative
from sdeflow.geometry import Interval1D, UnitBall


def identity_1d() -> DiagonalAffineField:
    return DiagonalAffineField([0.0], [1.0])


def sine_1d() -> TrigonometricField:
    return TrigonometricField(1, amplitude=1.0, offset=0.0)


FIELDS = [
    ConstantField(np.array([[1.0, 0.3], [0.0, 2.0]]), LinearDrift.scaled_identity(2, -0.5)),
    DiagonalAffineField([1.0, 0.5], [0.2, -0.4], LinearDrift.scaled_identity(2, 0.3)),
    TrigonometricField(2, drift=LinearDrift.scaled_identity(2, -0.5)),
    TrigonometricField(3, amplitude=0.7, offset=1.5, frequency=2.0),
    sine_1d(),
]


# --- ito_drift ---------------------------------------------------------------------

def test_ito_drift_constant_sigma_is_b():
    f = FIELDS[0]
    x = np.array([0.2, -0.7])
    np.testing.assert_array_equal(ito_drift(f, x), f.b(x))


def test_ito_drift_identity_sigma():
    assert ito_drift(identity_1d(), [0.4])[0] == pytest.approx(0.2, abs=1e-15)


def test_ito_drift_sine():
    # oracle: 0.5*sin(0.5)*cos(0.5) evaluated independently = 0.21036774620197413
    assert ito_drift(sine_1d(), [0.5])[0] == pytest.approx(0.21036774620197413, abs=1e-15)


@pytest.mark.parametrize("f", FIELDS)
def test_ito_drift_minus_b_is_half_composite(f):
    x = UnitBall(f.dim).sample_uniform(np.random.default_rng(0), 200) if f.dim > 1 else np.linspace(-1, 1, 201)[:, None]
    half = 0.5 * composite(f, Composite.GRAD_SIGMA_SIGMA, x)
    # btilde is assembled as b + half, so subtracting b back loses at most one rounding of b
    np.testing.assert_allclose(ito_drift(f, x) - f.b(x), half, rtol=0, atol=4 * np.finfo(float).eps)
    np.testing.assert_array_equal(ito_drift(f, x), f.b(x) + half)


# --- composites --------------------------------------------------------------------

def test_composite_examples():
    zero = composite(FIELDS[0], Composite.GRAD_SIGMA_SIGMA, [0.1, 0.2])
    np.testing.assert_array_equal(zero, np.zeros(2))
    assert composite(identity_1d(), Composite.GRAD_SIGMA_SIGMA, [0.7])[0] == pytest.approx(0.7, abs=1e-15)
    # oracle: cos(0.3)**2 * sin(0.3) = 0.2697117790722057; the finite-difference product gives 0.26971177906
    v = composite(sine_1d(), Composite.GRAD_SIGMA_GRAD_SIGMA_SIGMA, [0.3])
    assert v.shape == (1, 1)
    assert v[0, 0] == pytest.approx(0.2697117790722057, abs=1e-15)


def test_composite_tensor_contracts_to_vector():
    f = FIELDS[2]
    x = np.array([0.3, -0.2])
    t = composite(f, Composite.GRAD_SIGMA_SIGMA_TENSOR, x)
    assert t.shape == (2, 2, 2)
    np.testing.assert_allclose(np.einsum("ijj->i", t), composite(f, Composite.GRAD_SIGMA_SIGMA, x), atol=1e-15)


def test_missing_hessian_raises():
    f = CustomField(1, lambda x: x[..., None], lambda x: np.ones(x.shape[:-1] + (1, 1, 1)))
    np.testing.assert_allclose(composite(f, Composite.GRAD_SIGMA_SIGMA, [0.7]), [0.7])
    with pytest.raises(MissingDerivative):
        composite(f, Composite.SIGMA_HESS_SIGMA_SIGMA, [0.7])


def test_sigma_hess_sigma_sigma_sine():
    # d^2 sin = -sin, so the composite is -sin(x) * sin(x)^2
    v = composite(sine_1d(), Composite.SIGMA_HESS_SIGMA_SIGMA, [0.4])
    assert v[0, 0] == pytest.approx(-np.sin(0.4) ** 3, abs=1e-15)


# --- derivatives vs finite differences ---------------------------------------------

@pytest.mark.parametrize("f", FIELDS)
def test_grad_sigma_matches_finite_differences(f):
    rng = np.random.default_rng(7)
    x = rng.uniform(-1, 1, size=(1000, f.dim))
    h = 1e-6
    g = f.grad_sigma(x)
    H = f.hess_sigma(x)
    for k in range(f.dim):
        e = np.zeros(f.dim)
        e[k] = h
        fd = (f.sigma(x + e) - f.sigma(x - e)) / (2 * h)
        scale = np.max(np.abs(g)) + 1.0
        assert np.max(np.abs(fd - g[..., k])) / scale < 1e-6
        fd2 = (f.grad_sigma(x + e) - f.grad_sigma(x - e)) / (2 * h)
        assert np.max(np.abs(fd2 - H[..., k])) / (np.max(np.abs(H)) + 1.0) < 1e-6


# --- Lipschitz audit ---------------------------------------------------------------

def test_audit_constant_field_is_zero():
    f = ConstantField(np.eye(2), LinearDrift(np.zeros((2, 2)), np.array([1.0, -1.0])))
    rep = audit_lipschitz(f, UnitBall(2), 200)
    assert all(v == 0.0 for v in rep.estimates.values())
    assert rep.flagged == []


def test_audit_identity_sigma_on_interval():
    rep = audit_lipschitz(identity_1d(), Interval1D(-1.0, 1.0), 500)
    assert rep.estimates["sigma"] == pytest.approx(1.0, rel=0.05)


def test_audit_trigonometric_finite_and_stable():
    f = make_field("trigonometric", 2, LinearDrift.scaled_identity(2, -0.5))
    rep = audit_lipschitz(f, UnitBall(2), 400)
    assert set(rep.estimates) == set(rep.doubled)
    assert all(np.isfinite(v) for v in rep.doubled.values())
    assert rep.flagged == []
    # analytic bounds for 0.5*diag(sin x1 + 2, cos x2 + 2): sigma and each derivative are 0.5-Lipschitz per entry
    assert rep.doubled["sigma"] <= 0.5 + 1e-12


def test_audit_monotone_in_samples():
    f = FIELDS[3]
    a = audit_lipschitz(f, UnitBall(3), 100, seed=3)
    for name in a.estimates:
        assert a.doubled[name] >= a.estimates[name]


def test_audit_needs_two_samples():
    with pytest.raises(ValueError):
        audit_lipschitz(FIELDS[0], UnitBall(2), 1)


def test_make_field_families():
    assert make_field("constant", 2, matrix=np.eye(2)).is_constant
    assert make_field("diagonal-affine", 2, intercept=1.0, slope=0.5).dim == 2
    f = make_field("trigonometric", 2)
    np.testing.assert_allclose(f.sigma(np.zeros(2)), 0.5 * np.diag([2.0, 3.0]))
    with pytest.raises(ValueError):
        make_field("wavelet", 2)
