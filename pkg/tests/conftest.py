import numpy as np
import pytest


def gd_ridge(X, Y, alpha, tol=1e-13, max_iter=2_000_000):
    """Accelerated gradient descent on ||XW - Y||_F^2 + alpha ||W||_F^2.

    Independent of the normal-equation solver: only uses the gradient
    ``2 X^T (XW - Y) + 2 alpha W`` and a step of ``1/L``.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    eig = np.linalg.eigvalsh(X.T @ X)
    L = 2 * (eig[-1] + alpha)
    mu = 2 * (max(eig[0], 0.0) + alpha)
    q = mu / L
    momentum = (1 - np.sqrt(q)) / (1 + np.sqrt(q))
    W = np.zeros((X.shape[1], Y.shape[1]))
    V = W.copy()
    for _ in range(max_iter):
        grad = 2 * X.T @ (X @ V - Y) + 2 * alpha * V
        W_next = V - grad / L
        V = W_next + momentum * (W_next - W)
        if np.max(np.abs(W_next - W)) < tol:
            return W_next
        W = W_next
    return W


def central_difference(f, params, eps=1e-6):
    """Finite-difference gradient of scalar ``f()`` w.r.t. each array in ``params`` (mutated in place)."""
    grads = []
    for p in params:
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            old = p[idx]
            p[idx] = old + eps
            up = f()
            p[idx] = old - eps
            down = f()
            p[idx] = old
            g[idx] = (up - down) / (2 * eps)
        grads.append(g)
    return grads


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
