# Reductions over the state axis are written as explicit coordinate loops so
# the result for one row never depends on the shape of the surrounding batch.
import numpy as np


def dot(a, b):
    out = a[..., 0] * b[..., 0]
    for i in range(1, a.shape[-1]):
        out = out + a[..., i] * b[..., i]
    return out


def sqnorm(v):
    return dot(v, v)


def norm(v):
    return np.sqrt(sqnorm(v))


def hs_sqnorm(m):
    """Squared Hilbert-Schmidt norm of (..., d, d) matrices."""
    d0, d1 = m.shape[-2:]
    out = m[..., 0, 0] * m[..., 0, 0]
    for i in range(d0):
        for j in range(d1):
            if i or j:
                out = out + m[..., i, j] * m[..., i, j]
    return out


def matvec(m, v):
    out = m[..., :, 0] * v[..., None, 0]
    for j in range(1, m.shape[-1]):
        out = out + m[..., :, j] * v[..., None, j]
    return out


def as_states(x, dim=None):
    """Coerce a scalar, vector or array into shape (..., d)."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1)
    if dim is not None and x.shape[-1] != dim:
        if dim == 1:
            x = x[..., None]
        else:
            raise ValueError("expected states of dimension %d, got shape %s" % (dim, x.shape))
    return x
