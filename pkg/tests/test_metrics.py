import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from strider.errors import ContractError, DegenerateInputError
from strider.metrics import (
    angle_update,
    angle_update_report,
    angle_update_table,
    paired_t_test,
    regularized_incomplete_beta,
    t_two_tailed_p,
)
from strider.skeleton import default_skeleton, quat_from_axis_angle


def _track(quats_per_frame):
    return np.stack(quats_per_frame)


def test_constant_rotations_zero():
    q = quat_from_axis_angle((0, 1, 0), 0.4)
    rot = _track([np.tile(q, (5, 1))] * 10)
    assert angle_update(rot, range(5), 60.0) == 0.0


def test_sign_flips_change_nothing():
    q = quat_from_axis_angle((1, 0, 0), 0.8)
    frames = [np.tile(q, (3, 1)), np.tile(-q, (3, 1)), np.tile(q, (3, 1))]
    assert angle_update(_track(frames), range(3), 60.0) < 1e-12


def test_ninety_degrees_per_frame_at_60fps():
    # axis-angle oracle: 90 deg/frame = pi/2 rad/frame -> 5400 deg/s
    frames = [
        np.tile(quat_from_axis_angle((0, 0, 1), i * math.pi / 2.0), (4, 1))
        for i in range(6)
    ]
    value = angle_update(_track(frames), range(4), 60.0)
    assert abs(value - 5400.0) < 1e-6


def test_scales_linearly_with_fps():
    rng = np.random.default_rng(0)
    frames = [
        np.array([quat_from_axis_angle((1, 0, 0), a) for a in rng.normal(size=4)])
        for _ in range(8)
    ]
    v60 = angle_update(_track(frames), range(4), 60.0)
    v30 = angle_update(_track(frames), range(4), 30.0)
    assert abs(v60 - 2.0 * v30) < 1e-9


def test_reversal_invariance():
    rng = np.random.default_rng(1)
    frames = [
        np.array([quat_from_axis_angle((0, 1, 0), a) for a in rng.normal(size=3)])
        for _ in range(9)
    ]
    rot = _track(frames)
    assert abs(angle_update(rot, range(3), 60.0) - angle_update(rot[::-1], range(3), 60.0)) < 1e-12


def test_empty_subset_rejected():
    rot = np.tile([1.0, 0, 0, 0], (4, 2, 1))
    with pytest.raises(ContractError):
        angle_update(rot, [], 60.0)


def test_report_has_all_subsets():
    skel = default_skeleton()
    rng = np.random.default_rng(2)
    frames = [
        np.array([quat_from_axis_angle((1, 0, 0), a) for a in rng.normal(0, 0.1, 31)])
        for _ in range(12)
    ]
    rep = angle_update_report(_track(frames), skel, 60.0, scenario="flat")
    assert rep.full > 0 and rep.arm > 0 and rep.leg > 0
    table = angle_update_table([rep], label="m")
    assert "Flat" in table and "Full" in table


# t-test


def test_identical_samples():
    with pytest.raises(DegenerateInputError):
        paired_t_test([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])


def test_hand_computed_example():
    # d = [-1, -2, -3]: mean -2, sd 1, t = -2*sqrt(3) = -3.4641, df 2
    rep = paired_t_test([1.0, 2.0, 3.0], [2.0, 4.0, 6.0])
    assert abs(rep.t_statistic + 2.0 * math.sqrt(3.0)) < 1e-9
    assert rep.degrees_of_freedom == 2
    # closed form: p = 1 - sqrt(6/7)
    assert abs(rep.p_value - (1.0 - math.sqrt(6.0 / 7.0))) < 1e-9
    assert abs(rep.p_value - 0.0742) < 1e-3


def test_constant_differences_rejected():
    with pytest.raises(DegenerateInputError):
        paired_t_test([1.0, 2.0, 3.0], [0.0, 1.0, 2.0])


def test_unequal_lengths_rejected():
    with pytest.raises(ContractError):
        paired_t_test([1.0, 2.0], [1.0, 2.0, 3.0])


@given(st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_t_test_antisymmetric(seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=6)
    b = a + rng.normal(size=6)
    if np.std(a - b, ddof=1) < 1e-9:
        return
    fwd = paired_t_test(a, b)
    rev = paired_t_test(b, a)
    assert abs(fwd.t_statistic + rev.t_statistic) < 1e-9
    assert abs(fwd.p_value - rev.p_value) < 1e-12


# published two-tailed critical values: P(|T| >= t) = alpha
T_TABLE = [
    (1, 12.70620, 0.05),
    (2, 4.30265, 0.05),
    (5, 2.57058, 0.05),
    (10, 2.22814, 0.05),
    (30, 2.04227, 0.05),
    (10, 3.16927, 0.01),
    (20, 1.72472, 0.10),
]


@pytest.mark.parametrize("df,t,alpha", T_TABLE)
def test_p_values_match_published_tables(df, t, alpha):
    assert abs(t_two_tailed_p(t, df) - alpha) < 5e-5


def test_incomplete_beta_reference_points():
    # I_x(1, b) = 1 - (1-x)^b and I_x(a, 1) = x^a, plus symmetry midpoint
    assert abs(regularized_incomplete_beta(1.0, 0.5, 1.0 / 7.0) - (1 - math.sqrt(6.0 / 7.0))) < 1e-12
    assert abs(regularized_incomplete_beta(3.0, 1.0, 0.4) - 0.4 ** 3) < 1e-12
    assert abs(regularized_incomplete_beta(2.5, 2.5, 0.5) - 0.5) < 1e-12
    assert regularized_incomplete_beta(2.0, 3.0, 0.0) == 0.0
    assert regularized_incomplete_beta(2.0, 3.0, 1.0) == 1.0
