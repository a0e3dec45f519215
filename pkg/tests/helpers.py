import numpy as np

from noisytele.core import Protocol
from noisytele.qlinalg import params_from_unitary


def protocol_with_corrections(X):
    """Protocol with ``U_a = 1`` and ``V_a`` equal to ``X_a`` up to phase."""
    X = np.asarray(X)
    d = X.shape[-1]
    bob = np.stack([params_from_unitary(x) for x in X])
    return Protocol(d, np.zeros_like(bob), bob)
