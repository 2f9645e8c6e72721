"""Independent reference computations shared by unit and acceptance tests."""
import itertools

import numpy as np

from pgst.filters import FilterKernel, bank_from_kernels
from pgst.graph import GraphShift


def random_orthogonal(n, rng):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def random_instance(rng, n_max=16, j_max=4):
    """Random spectrum, basis, tabulated kernel responses and parent signal."""
    n = int(rng.integers(2, n_max + 1))
    J = int(rng.integers(1, j_max + 1))
    lam = np.sort(rng.uniform(-2, 2, n))
    V = random_orthogonal(n, rng)
    H = rng.uniform(0, 1.5, (J, n)) * (rng.random((J, n)) < 0.8)
    z = rng.standard_normal(n)
    return lam, V, H, z


def enumerate_alignment(lam, V, H, z, tau):
    """Argmax over all 2^J assignments of sum_j f_j alpha_j, alpha_j = sum_n (h_j(l_n)^2 - tau) zhat_n^2."""
    zhat = V.T @ z
    alpha = ((H**2 - tau) * zhat**2).sum(axis=1)
    best, best_f = -np.inf, None
    for f in itertools.product([0, 1], repeat=H.shape[0]):
        val = float(np.dot(f, alpha))
        if val > best:
            best, best_f = val, np.array(f, dtype=bool)
    return best_f, alpha


def children_dense(V, H, z):
    """|V diag(h_j) V^T z| for each j, by explicit dense products."""
    return np.array([np.abs(V @ np.diag(h) @ V.T @ z) for h in H])


def tabulated_bank(lam, H, interval=None):
    """A bank whose kernels interpolate the tabulated responses H at the eigenvalues ``lam``."""
    kernels = []
    for j, h in enumerate(H):
        kernels.append(FilterKernel("custom", j + 1, "table", {"x": list(map(float, lam)), "y": list(map(float, h))}))
    lo, hi = interval or (float(lam[0]), float(lam[-1]))
    return bank_from_kernels(kernels, (lo, hi if hi > lo else lo + 1.0))


def shift_from_spectrum(lam, V):
    dense = (V * lam) @ V.T
    return GraphShift.from_matrix(0.5 * (dense + dense.T), kind="adjacency", check=False)


def dense_scattering(S_dense, kernels, x, L):
    """Full scattering coefficients via explicit dense filter matrices, path -> mean(z)."""
    lam, V = np.linalg.eigh(S_dense)
    mats = [V @ np.diag(k(lam)) @ V.T for k in kernels]
    out = {(): float(np.mean(x))}
    frontier = {(): x}
    for _ in range(L - 1):
        nxt = {}
        for p, z in frontier.items():
            for j, m in enumerate(mats, start=1):
                c = np.abs(m @ z)
                nxt[p + (j,)] = c
                out[p + (j,)] = float(np.mean(c))
        frontier = nxt
    return out
