import numpy as np
import pytest

from plugpull.errors import GimbalLock
from plugpull.spatial import (euler_from_rotation, euler_rate_inverse, euler_rate_matrix,
                              euler_to_rotation, skew, vee)


def test_skew_zero_and_basis():
    assert np.array_equal(skew(np.zeros(3)), np.zeros((3, 3)))
    assert np.allclose(skew([1.0, 0, 0]) @ np.array([0, 1.0, 0]), [0, 0, 1.0])


def test_skew_matches_componentwise_cross():
    rng = np.random.default_rng(1)
    for _ in range(100):
        v, w = rng.normal(size=3), rng.normal(size=3)
        cross = np.array([v[1] * w[2] - v[2] * w[1], v[2] * w[0] - v[0] * w[2],
                          v[0] * w[1] - v[1] * w[0]])
        assert np.max(np.abs(skew(v) @ w - cross)) < 1e-12
        assert np.allclose(vee(skew(v)), v)


def test_rotation_identity_and_pitch_quarter_turn():
    assert np.allclose(euler_to_rotation(np.zeros(3)), np.eye(3))
    R = euler_to_rotation([0.0, np.pi / 2, 0.0])
    assert np.allclose(R @ [1.0, 0, 0], [0, 0, -1.0])


def test_rotation_orthogonal_and_invertible():
    rng = np.random.default_rng(2)
    for _ in range(100):
        eta = rng.uniform([-np.pi, -1.4, -np.pi], [np.pi, 1.4, np.pi])
        R = euler_to_rotation(eta)
        assert np.linalg.norm(R.T @ R - np.eye(3)) < 1e-12
        assert np.allclose(euler_from_rotation(R), eta)


def test_rate_matrix_identity_at_hover():
    assert np.allclose(euler_rate_matrix(np.zeros(3)), np.eye(3))


def test_rate_matrix_against_finite_difference_kinematics():
    rng = np.random.default_rng(3)
    h = 1e-6
    for _ in range(50):
        eta = rng.uniform([-1, -1.2, -np.pi], [1, 1.2, np.pi])
        eta_dot = rng.normal(size=3)
        R_dot = (euler_to_rotation(eta + h * eta_dot) - euler_to_rotation(eta - h * eta_dot)) / (2 * h)
        W = euler_to_rotation(eta).T @ R_dot
        assert np.max(np.abs(skew(euler_rate_matrix(eta) @ eta_dot) - W)) < 1e-6


def test_rate_matrix_derivative_and_inverse():
    rng = np.random.default_rng(4)
    h = 1e-6
    for _ in range(20):
        eta = rng.uniform(-1, 1, 3)
        eta_dot = rng.normal(size=3)
        Q, Q_dot = euler_rate_matrix(eta, eta_dot)
        fd = (euler_rate_matrix(eta + h * eta_dot) - euler_rate_matrix(eta - h * eta_dot)) / (2 * h)
        assert np.allclose(Q_dot, fd, atol=1e-8)
        assert np.allclose(euler_rate_inverse(eta) @ Q, np.eye(3), atol=1e-12)


def test_gimbal_lock_raised_near_quarter_turn():
    conds = [np.linalg.cond(euler_rate_matrix([0, np.pi / 2 - d, 0])) for d in (1e-1, 1e-2)]
    assert conds[1] > 5 * conds[0]
    with pytest.raises(GimbalLock):
        euler_rate_matrix([0.0, np.pi / 2 - 1e-4, 0.0])
    with pytest.raises(GimbalLock):
        euler_rate_inverse([0.0, -np.pi / 2, 0.0])
