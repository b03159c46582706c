import numpy as np
from scipy.spatial import cKDTree


def chamfer_distance(a, b):
    """Symmetric squared Chamfer distance:
    mean_a min_b |a-b|^2 + mean_b min_a |a-b|^2."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 3)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 3)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("chamfer_distance needs two nonempty point sets")
    d_ab, _ = cKDTree(b).query(a)
    d_ba, _ = cKDTree(a).query(b)
    return float(np.mean(d_ab ** 2) + np.mean(d_ba ** 2))
