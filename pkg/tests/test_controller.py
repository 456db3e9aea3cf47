import math

import numpy as np
import pytest

from platoonsim.controller import (
    ControllerParams,
    SafetyEnvelope,
    SamplingBox,
    TsTrcParams,
    additive_input,
    beta_upper_bound,
    ts_trc_input,
    validate_controller_conditions,
    virtual_speed,
)
from platoonsim.errors import DomainError

PAPER_GAINS = ControllerParams(beta=0.0642, gamma=1.0011)


class TestAdditiveInput:
    def test_zero_at_zero_relative_speed(self):
        assert additive_input(50.0, 0.0, PAPER_GAINS) == 0.0

    def test_direct_evaluation(self):
        u = additive_input(50.0, 1.0, PAPER_GAINS)
        assert u == pytest.approx(0.0642 * math.atan(50.055), rel=1e-12)
        assert u == pytest.approx(0.09957, abs=5e-5)

    def test_odd_symmetry(self):
        u_pos = additive_input(50.0, 1.0, PAPER_GAINS)
        u_neg = additive_input(50.0, -1.0, PAPER_GAINS)
        assert u_neg == -u_pos

    @pytest.mark.parametrize("s", [1.0, 20.0, 300.0])
    @pytest.mark.parametrize("dv", [-8.0, -0.3, 0.7, 15.0])
    def test_bounded_and_signed(self, s, dv):
        u = additive_input(s, dv, PAPER_GAINS)
        assert abs(u) < PAPER_GAINS.beta * math.pi / 2
        assert u * dv > 0

    def test_alternate_kernels(self):
        # tanh/erf saturate to 1.0 in floating point at large arguments
        for kernel, sup in (("tanh", 1.0), ("erf", 1.0)):
            u = additive_input(100.0, 5.0, PAPER_GAINS, kernel=kernel)
            assert 0 < u <= PAPER_GAINS.beta * sup

    def test_rejects_bad_inputs(self):
        with pytest.raises(DomainError):
            additive_input(-1.0, 0.5, PAPER_GAINS)
        with pytest.raises(DomainError):
            additive_input(math.inf, 0.5, PAPER_GAINS)
        with pytest.raises(DomainError):
            ControllerParams(beta=-0.1, gamma=1.0)


class TestVirtualSpeed:
    def test_equals_predecessor_when_matched(self):
        assert virtual_speed(21.0, 57.42, 0.0, PAPER_GAINS) == 21.0

    def test_offset_by_control(self):
        v = virtual_speed(18.0, 50.0, 1.0, PAPER_GAINS)
        assert v == pytest.approx(18.0 + 0.0642 * math.atan(50.055), rel=1e-12)
        assert v == pytest.approx(18.09957, abs=5e-5)

    def test_zero_beta_disables_control(self):
        p = ControllerParams(beta=0.0, gamma=1.0)
        assert virtual_speed(21.0, 50.0, -2.0, p) == 21.0


class TestBetaUpperBound:
    def test_paper_value(self):
        assert beta_upper_bound(52.42, 2.0, 500.0) == pytest.approx(0.0642, abs=5e-5)

    def test_zero_slack(self):
        assert beta_upper_bound(30.0, 30.0, 100.0) == 0.0

    def test_ovrv_equilibrium_spacing(self):
        assert beta_upper_bound(57.42, 2.0, 500.0) == pytest.approx(0.07056, abs=1e-5)

    def test_rejects_negative_slack(self):
        with pytest.raises(DomainError):
            beta_upper_bound(1.0, 2.0, 500.0)
        with pytest.raises(DomainError):
            beta_upper_bound(52.42, 2.0, 0.0)


class TestSafetyEnvelope:
    def test_bound_gives_exact_envelope(self):
        beta_max = beta_upper_bound(52.42, 2.0, 500.0)
        env = SafetyEnvelope.for_controller(
            ControllerParams(beta_max, 1.0), 52.42, 2.0, 500.0
        )
        assert env.alpha == pytest.approx((52.42 - 2.0) / 500.0, rel=1e-12)

    def test_rejects_excess_alpha(self):
        with pytest.raises(DomainError):
            SafetyEnvelope(s0_av=52.42, min_safe_spacing=2.0, horizon=500.0, alpha=0.2)

    def test_worst_case_drain_stays_safe(self):
        # sustained control at the supremum drains spacing linearly; any
        # beta below the bound keeps the worst case above the safe minimum
        s0, s_min, t_f = 52.42, 2.0, 500.0
        beta_max = beta_upper_bound(s0, s_min, t_f)
        for frac in (0.25, 0.6, 1.0):
            alpha = frac * beta_max * math.pi / 2
            t = np.linspace(0.0, t_f, 2001)
            worst_spacing = s0 - alpha * t
            assert worst_spacing.min() >= s_min - 1e-9


class TestTsTrc:
    def test_inactive_at_equilibrium(self):
        p = TsTrcParams(phi1=1.0, phi2=0.1, phi3=0.01, v_star=21.0)
        assert ts_trc_input(40.0, 0.0, 21.0, p) == 0.0

    def test_scenario1_config(self):
        p = TsTrcParams(phi1=1.0, phi2=0.1, phi3=0.01, v_star=21.0)
        u = ts_trc_input(50.0, 0.0, 18.0, p)
        assert u == pytest.approx(0.1 * math.atan(1.5), rel=1e-12)
        assert u == pytest.approx(0.09828, abs=5e-5)

    def test_scenario2_config(self):
        p = TsTrcParams(phi1=1.0, phi2=0.04, phi3=0.01, v_star=21.0)
        assert ts_trc_input(50.0, 0.0, 18.0, p) == pytest.approx(0.03931, abs=5e-5)

    def test_rejects_bad_params(self):
        with pytest.raises(DomainError):
            TsTrcParams(phi1=-1.0, phi2=0.1, phi3=0.01, v_star=21.0)
        with pytest.raises(DomainError):
            TsTrcParams(phi1=1.0, phi2=0.1, phi3=0.01, v_star=0.0)


def arctan_controller(beta, gamma):
    return lambda s, dv: beta * np.arctan(gamma * s * dv)


class TestConditionSuite:
    def test_arctan_passes_all(self):
        beta = 0.0642
        report = validate_controller_conditions(
            arctan_controller(beta, 1.0), alpha_claim=beta * math.pi / 2
        )
        assert report.all_passed, report

    def test_constant_fails_sign(self):
        report = validate_controller_conditions(
            lambda s, dv: np.full_like(np.asarray(s, dtype=float), 0.1),
            alpha_claim=0.2,
        )
        assert not report.sign.passed
        assert report.boundedness.passed

    def test_too_small_bound_fails_boundedness(self):
        beta = 0.0642
        report = validate_controller_conditions(
            arctan_controller(beta, 1.0), alpha_claim=beta
        )
        assert not report.boundedness.passed
        assert report.sign.passed

    def test_decreasing_controller_fails_monotonicity(self):
        report = validate_controller_conditions(
            lambda s, dv: -0.01 * np.asarray(dv, dtype=float), alpha_claim=10.0
        )
        assert not report.monotonicity.passed

    def test_discontinuous_controller_fails_smoothness(self):
        report = validate_controller_conditions(
            lambda s, dv: 0.1 * np.sign(dv), alpha_claim=0.1
        )
        assert not report.smoothness.passed

    def test_custom_box(self):
        box = SamplingBox(s=(5.0, 80.0, 20), dv=(-3.0, 3.0, 21))
        report = validate_controller_conditions(
            arctan_controller(0.05, 2.0), alpha_claim=0.05 * math.pi / 2, box=box
        )
        assert report.all_passed
