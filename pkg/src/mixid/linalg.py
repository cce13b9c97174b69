"""Small dense linear-algebra helpers shared by several modules."""
import numpy as np

EIG_FLOOR = 1e-12


def symmetrize(a):
    a = np.asarray(a, dtype=float)
    return 0.5 * (a + a.T)


def psd_sqrt(a, floor=EIG_FLOOR):
    """Symmetric PSD square root via eigendecomposition, eigenvalues floored."""
    w, v = np.linalg.eigh(symmetrize(a))
    w = np.maximum(w, floor)
    return (v * np.sqrt(w)) @ v.T


def psd_inv_sqrt(a, floor=EIG_FLOOR):
    w, v = np.linalg.eigh(symmetrize(a))
    w = np.maximum(w, floor)
    return (v / np.sqrt(w)) @ v.T


def condition_number(a):
    s = np.linalg.svd(np.atleast_2d(a), compute_uv=False)
    if s[-1] == 0.0:
        return np.inf
    return float(s[0] / s[-1])
