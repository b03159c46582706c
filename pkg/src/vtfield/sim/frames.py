"""Rigid transforms as 4x4 homogeneous matrices and the SE(2) in-hand pose.

The in-hand pose ``xi = (x, z, theta)`` places the object frame in the EE
frame as ``Trans(x, 0, z) @ Ry(theta)``; ``xi = 0`` is the nominal grasp.
"""
from __future__ import annotations

import numpy as np


def rot_x(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])


def rot_y(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])


def rot_z(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])


def make_pose(R=np.eye(3), t=np.zeros(3)):
    X = np.eye(4)
    X[:3, :3] = R
    X[:3, 3] = t
    return X


def invert(X):
    R, t = X[:3, :3], X[:3, 3]
    return make_pose(R.T, -R.T @ t)


def apply(X, pts):
    pts = np.asarray(pts, dtype=np.float64)
    return pts @ X[:3, :3].T + X[:3, 3]


def rotate(X, vecs):
    return np.asarray(vecs, dtype=np.float64) @ X[:3, :3].T


def se2_pose(xi):
    x, z, theta = (float(v) for v in xi)
    return make_pose(rot_y(theta), np.array([x, 0.0, z]))


def twist_angle_y(R):
    """Angle of the twist about +y in the swing-twist split of ``R``.

    With unit quaternion (w, qx, qy, qz) the twist angle is ``2 atan2(qy, w)``;
    substituting ``4 w^2 = 1 + tr R`` and ``4 w qy = R02 - R20`` gives this
    closed form on the matrix.
    """
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    theta = 2.0 * np.arctan2(R[0, 2] - R[2, 0], 1.0 + tr)
    return float((theta + np.pi) % (2 * np.pi) - np.pi)


def project_se2(X_rel):
    """Project a relative SE(3) pose (object in EE frame) to ``(x, z, theta)``:
    the y translation is dropped and the rotation reduced to its y twist."""
    return np.array([X_rel[0, 3], X_rel[2, 3], twist_angle_y(X_rel[:3, :3])])


def pose_to_row12(X):
    return np.asarray(X[:3, :4], dtype=np.float64).reshape(12)


def row12_to_pose(v):
    X = np.eye(4)
    X[:3, :4] = np.asarray(v, dtype=np.float64).reshape(3, 4)
    return X
