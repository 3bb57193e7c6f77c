"""Input checks shared by the estimators."""

import numpy as np


def check_feature_matrix(X, n_features=2):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != n_features:
        raise ValueError(f"feature matrix must be N x {n_features}, got shape {X.shape}")
    if X.shape[0] < 1:
        raise ValueError("feature matrix needs at least one node")
    if not np.all(np.isfinite(X)):
        raise ValueError("feature matrix contains non-finite values")
    return X


def check_adjacency(A, n_nodes=None):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"adjacency must be square, got shape {A.shape}")
    if n_nodes is not None and A.shape[0] != n_nodes:
        raise ValueError(f"adjacency is {A.shape[0]}x{A.shape[0]}, expected {n_nodes} nodes")
    if not np.all((A == 0) | (A == 1)):
        raise ValueError("adjacency must be binary")
    if not np.array_equal(A, A.T):
        raise ValueError("adjacency must be symmetric")
    if not np.all(np.diag(A) == 1):
        raise ValueError("adjacency must have a unit diagonal")
    return A


def check_state(X, A):
    X = check_feature_matrix(X)
    return X, check_adjacency(A, X.shape[0])
