import math

import numpy as np
import pytest

from irrsio.kernels import (
    ConstantMatrix,
    EllipticKernel,
    MatrixField,
    cz_estimate_check,
    frozen_kernel,
    fundamental_solution_const,
    grad1_fundamental_const,
    symmetrization_check,
    weak_form_check,
)


def test_fundamental_solution_values():
    eye = ConstantMatrix.identity(3)
    assert fundamental_solution_const(eye, [1.0, 0, 0]) == pytest.approx(1 / (4 * math.pi))
    assert fundamental_solution_const(eye, [2.0, 0, 0]) == pytest.approx(0.5 / (4 * math.pi))
    E = ConstantMatrix(np.diag([4.0, 1.0, 1.0]))
    a = fundamental_solution_const(E, [2.0, 0, 0])
    b = fundamental_solution_const(E, [0, 1.0, 0])
    assert a == pytest.approx(b, rel=1e-15)
    with pytest.raises(ValueError):
        fundamental_solution_const(eye, [0, 0, 0])


def test_gradient_odd_and_matches_difference():
    E = ConstantMatrix.random_spd(3, 4.0, seed=2)
    x = np.array([0.3, -0.2, 0.5])
    assert np.array_equal(grad1_fundamental_const(E, -x), -grad1_fundamental_const(E, x))
    h = 1e-6
    num = [(fundamental_solution_const(E, x + h * e) - fundamental_solution_const(E, x - h * e))
           / (2 * h) for e in np.eye(3)]
    assert np.allclose(num, grad1_fundamental_const(E, x), rtol=1e-6)


def test_constant_kernel_antisymmetric():
    kern = EllipticKernel(MatrixField(3))
    x, y = np.array([0.1, 0.2, 0.3]), np.array([-0.4, 0.0, 0.2])
    assert np.array_equal(frozen_kernel(kern, x, y), -frozen_kernel(kern, y, x))
    z = x - y
    assert np.allclose(frozen_kernel(kern, x, y), -z / (4 * math.pi * np.linalg.norm(z) ** 3))


def test_frozen_modes_agree_to_leading_order():
    field = MatrixField.from_spec({"type": "sin_perturbation", "alpha": 1.0}, 2)
    src, tgt = EllipticKernel(field, "source"), EllipticKernel(field, "target")
    y = np.array([0.1, 0.2])
    gaps = []
    for h in (1e-2, 1e-3, 1e-4):
        x = y + h * np.array([0.6, 0.8])
        gaps.append(np.linalg.norm(src.pairs(x, y) - tgt.pairs(x, y)) * h)
    # |K| ~ 1/h, the mode gap is O(h^alpha / h) = O(1)
    assert gaps[-1] < gaps[0]


def test_weak_form():
    for E in (ConstantMatrix.identity(3), ConstantMatrix(np.diag([2.0, 1.0, 1.0]))):
        assert weak_form_check(E) < 1e-2
    assert weak_form_check(ConstantMatrix.identity(2), bump_scale=0.0) == 0.0
    with pytest.raises(ValueError):
        weak_form_check(ConstantMatrix.identity(2), cells=8)


def test_cz_slopes():
    assert cz_estimate_check(EllipticKernel(MatrixField(3)))["slope"] == pytest.approx(-2, abs=1e-3)
    field = MatrixField.from_spec({"type": "sin_perturbation", "alpha": 1.0}, 2)
    assert cz_estimate_check(EllipticKernel(field))["slope"] == pytest.approx(-1, abs=0.1)


def test_symmetrization():
    f3 = MatrixField.from_spec({"type": "sin_perturbation", "alpha": 1.0}, 3)
    assert symmetrization_check(EllipticKernel(f3))["slope"] == pytest.approx(-1, abs=0.15)
    f_half = MatrixField.from_spec({"type": "sin_perturbation", "alpha": 0.5}, 3)
    assert symmetrization_check(EllipticKernel(f_half))["slope"] == pytest.approx(-1.5, abs=0.2)
    with pytest.raises(ValueError):
        symmetrization_check(EllipticKernel(MatrixField(3)))


def test_field_spec_round_trip():
    for spec in ({"type": "identity"}, {"type": "diag", "entries": [2.0, 1.0]},
                 {"type": "sin_perturbation", "alpha": 0.5, "epsilon": 0.1}):
        f = MatrixField.from_spec(spec, 2)
        assert MatrixField.from_spec(f.spec(), 2).spec() == f.spec()


def test_field_ellipticity():
    f = MatrixField.from_spec({"type": "sin_perturbation", "alpha": 1.0, "epsilon": 0.3}, 2)
    x = np.random.default_rng(0).uniform(-2, 2, (200, 2))
    ev = np.linalg.eigvalsh(f(x))
    assert ev.min() > 0
