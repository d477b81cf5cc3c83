import numpy as np

from .errors import NumericalDifferentiationError


def central_jacobian(f, x, h=1e-6):
    """Central-difference Jacobian with column steps ``h * (1 + |x_j|)``."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise NumericalDifferentiationError("non-finite expansion point")
    cols = []
    for j in range(x.size):
        step = h * (1.0 + abs(x[j]))
        xp = x.copy()
        xm = x.copy()
        xp[j] += step
        xm[j] -= step
        if xp[j] == xm[j]:
            raise NumericalDifferentiationError(f"step underflow in column {j}")
        col = (np.asarray(f(xp)) - np.asarray(f(xm))) / (xp[j] - xm[j])
        if not np.all(np.isfinite(col)):
            raise NumericalDifferentiationError(f"non-finite difference in column {j}")
        cols.append(col)
    return np.column_stack(cols)
