import math

import numpy as np
import pytest

from rhd.losses import LossSpec, loss_constants, loss_derivative, loss_inverse, loss_value

from helpers import central_difference

XENT = LossSpec("cross_entropy")
HINGE = LossSpec("hinge")


def sig(sigma):
    return LossSpec("sigmoidal", sigma=sigma)


class TestSpecValidation:
    def test_sigma_required(self):
        with pytest.raises(ValueError):
            LossSpec("sigmoidal")
        with pytest.raises(ValueError):
            LossSpec("sigmoidal", sigma=0.0)

    def test_sigma_rejected_elsewhere(self):
        with pytest.raises(ValueError):
            LossSpec("hinge", sigma=1.0)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            LossSpec("ramp")

    def test_dict_round_trip(self):
        for spec in (XENT, HINGE, sig(0.25)):
            assert LossSpec.from_dict(spec.to_dict()) == spec


class TestValues:
    def test_xent_at_zero(self):
        assert loss_value(XENT, 0.0) == pytest.approx(math.log(2.0), rel=1e-15)

    def test_sigmoidal_continuous_at_zero(self):
        assert loss_value(sig(0.5), 0.0) == 1.0
        assert loss_value(sig(0.5), 1e-300) == pytest.approx(1.0, abs=1e-12)

    def test_hinge_pieces(self):
        assert loss_value(HINGE, 2.0) == 0.0
        assert loss_value(HINGE, -1.0) == 2.0

    def test_xent_extreme_z_stable(self):
        assert loss_value(XENT, 800.0) == 0.0
        assert loss_value(XENT, -800.0) == pytest.approx(800.0, rel=1e-15)

    def test_vectorized(self):
        z = np.array([-1.0, 0.0, 1.0])
        out = loss_value(XENT, z)
        assert out.shape == (3,)
        assert out[1] == pytest.approx(math.log(2.0))


class TestDerivatives:
    def test_xent_at_zero(self):
        assert loss_derivative(XENT, 0.0) == -0.5

    def test_sigmoidal_at_zero(self):
        assert loss_derivative(sig(0.25), 0.0) == -4.0
        fd = central_difference(lambda z: loss_value(sig(0.25), z), 1e-6)
        assert loss_derivative(sig(0.25), 1e-6) == pytest.approx(fd, rel=1e-6)

    def test_hinge_linear_region_and_kink(self):
        assert loss_derivative(HINGE, 0.0) == -1.0
        assert loss_derivative(HINGE, 1.0) == -1.0  # left subgradient at the kink
        assert loss_derivative(HINGE, 1.0 + 1e-12) == 0.0

    @pytest.mark.parametrize("spec", [XENT, HINGE, sig(0.25), sig(0.7)])
    def test_finite_difference_1000_points(self, spec):
        rng = np.random.default_rng(23)
        # sample at the loss's own scale: in the sigmoidal's saturated tail the
        # central difference itself collapses to ulp noise around the value 2
        span = 8.0 * spec.sigma if spec.kind == "sigmoidal" else 10.0
        z = rng.uniform(-span, span, 1000)
        if spec.kind == "hinge":
            z = z[np.abs(z - 1.0) >= 1e-3]
        if spec.kind == "sigmoidal":
            z = z[np.abs(z) >= 1e-3]
        fd = central_difference(lambda t: loss_value(spec, t), z)
        got = loss_derivative(spec, z)
        # hinge is identically zero past the kink; guard the 0/0 there
        rel = np.abs(got - fd) / np.maximum(np.abs(fd), 1e-12)
        assert np.max(rel) < 1e-6

    @pytest.mark.parametrize("spec", [XENT, HINGE, sig(0.3)])
    def test_nonpositive(self, spec):
        z = np.linspace(-30, 30, 1001)
        assert np.all(loss_derivative(spec, z) <= 0.0)


class TestConstants:
    def test_xent(self):
        c = loss_constants(XENT)
        assert (c.lipschitz, c.smoothness) == (1.0, 0.25)
        assert c.value_at_zero == pytest.approx(math.log(2.0))
        assert c.derivative_at_zero == -0.5

    def test_xent_smoothness_is_the_sup_of_second_derivative(self):
        z = np.linspace(-10, 10, 20001)
        second = central_difference(lambda t: loss_derivative(XENT, t), z, h=1e-5)
        assert second.max() == pytest.approx(0.25, abs=1e-4)
        assert np.all(second <= 0.25 + 1e-6)

    def test_hinge(self):
        c = loss_constants(HINGE)
        assert c.lipschitz == 1.0 and c.smoothness is None
        assert (c.value_at_zero, c.derivative_at_zero) == (1.0, -1.0)

    def test_sigmoidal(self):
        c = loss_constants(sig(0.1))
        assert c.lipschitz == pytest.approx(10.0)
        assert c.smoothness is None
        assert (c.value_at_zero, c.derivative_at_zero) == (1.0, pytest.approx(-10.0))

    def test_lipschitz_is_sup_of_derivative_magnitude(self):
        z = np.linspace(-50, 50, 100001)
        for spec in (XENT, HINGE, sig(0.1)):
            sup = np.abs(loss_derivative(spec, z)).max()
            assert sup == pytest.approx(loss_constants(spec).lipschitz, rel=1e-9)


class TestInverse:
    def test_xent_at_log2(self):
        assert loss_inverse(XENT, math.log(2.0)) == pytest.approx(0.0, abs=1e-12)

    def test_hinge_linear(self):
        assert loss_inverse(HINGE, 0.5) == 0.5

    def test_xent_large(self):
        z = loss_inverse(XENT, 10.0)
        assert z == pytest.approx(-math.log(math.expm1(10.0)), rel=1e-12)
        assert loss_value(XENT, z) == pytest.approx(10.0, abs=1e-9)

    @pytest.mark.parametrize(
        "spec,us",
        [
            (XENT, np.geomspace(1e-6, 30.0, 200)),
            (HINGE, np.linspace(0.0, 5.0, 200)),
            (sig(0.4), np.linspace(1e-6, 2.0 - 1e-6, 200)),
        ],
    )
    def test_round_trip(self, spec, us):
        z = loss_inverse(spec, us)
        back = loss_value(spec, z)
        assert np.max(np.abs(back - us)) < 1e-9

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            loss_inverse(XENT, 0.0)
        with pytest.raises(ValueError):
            loss_inverse(HINGE, -0.1)
        with pytest.raises(ValueError):
            loss_inverse(sig(0.4), 2.0)


class TestShapeProperties:
    @pytest.mark.parametrize("spec", [XENT, HINGE, sig(0.25)])
    def test_monotone_decreasing(self, spec):
        z = np.linspace(-40, 40, 4001)
        v = loss_value(spec, z)
        assert np.all(v[1:] <= v[:-1] + 1e-15)
        assert np.all(v >= 0.0)

    def test_smoothness_witness_xent(self):
        # [ell'(z)]^2 <= 4 M ell(z): an M-smooth loss bounds its squared slope by its value
        z = np.linspace(-60, 60, 10001)
        lhs = loss_derivative(XENT, z) ** 2
        rhs = 4.0 * 0.25 * loss_value(XENT, z)
        assert np.all(lhs <= rhs * (1.0 + 1e-12) + 1e-300)

    def test_sigmoidal_bounds_and_limits(self):
        s = sig(0.3)
        # strict 0 < v < 2 where 2 - e^(z/sigma) is still representable below 2
        z = np.linspace(-30 * 0.3, 30 * 0.3, 2001)
        v = loss_value(s, z)
        assert np.all((v > 0.0) & (v < 2.0))
        # beyond that, underflow clamps to the closed interval [0, 2]
        zz = np.linspace(-1000, 1000, 999)
        vv = loss_value(s, zz)
        assert np.all((vv >= 0.0) & (vv <= 2.0))
        assert loss_value(s, 50 * 0.3) < 1e-20
        assert loss_value(s, -50 * 0.3) >= 2.0 - 1e-20
