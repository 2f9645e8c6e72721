"""Graph shift operators, spectra, the graph Fourier transform and graph filtering.

Two filtering backends are provided. The spectral backend applies
``V diag(h(lambda)) V^T`` exactly from a dense eigendecomposition; the
polynomial backend fits a Chebyshev expansion of the kernel on the spectral
interval and evaluates it with sparse mat-vec products only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from numpy.polynomial import chebyshev as cheb

KINDS = ("adjacency", "laplacian", "normalized_adjacency", "normalized_laplacian")

#: Default Chebyshev order and relative padding of the fitting interval.
CHEB_ORDER = 30
CHEB_PAD = 0.01

Kernel = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class GraphShift:
    """Sparse symmetric graph shift matrix ``S``.

    Attributes
    ----------
    n : int
        Number of nodes.
    matrix : scipy.sparse.csr_matrix
        The ``n x n`` shift matrix.
    kind : str
        One of :data:`KINDS`. Perturbed shifts keep the kind of the shift
        they were derived from.
    """

    n: int
    matrix: sp.csr_matrix = field(repr=False)
    kind: str = "adjacency"

    @classmethod
    def from_matrix(cls, matrix, kind: str = "adjacency", check: bool = True) -> "GraphShift":
        if kind not in KINDS:
            raise ValueError(f"unknown shift kind {kind!r}")
        m = sp.csr_matrix(matrix, dtype=float)
        if m.shape[0] != m.shape[1]:
            raise ValueError(f"shift must be square, got {m.shape}")
        if m.shape[0] == 0:
            raise ValueError("shift must have at least one node")
        if not np.all(np.isfinite(m.data)):
            raise ValueError("shift has non-finite entries")
        if check:
            asym = abs(m - m.T)
            if asym.nnz and asym.max() > 1e-12 * max(1.0, abs(m).max()):
                raise ValueError("shift matrix is not symmetric")
        m.eliminate_zeros()
        m.sort_indices()
        return cls(n=m.shape[0], matrix=m, kind=kind)

    @property
    def n_edges(self) -> int:
        """Number of undirected stored entries (self-loops count once)."""
        upper = sp.triu(self.matrix, k=0)
        upper.eliminate_zeros()
        return int(upper.nnz)

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def permuted(self, perm: Sequence[int]) -> "GraphShift":
        """Return ``P^T S P`` where node ``i`` of the result is node ``perm[i]`` here."""
        perm = np.asarray(perm)
        m = self.matrix[perm][:, perm]
        return GraphShift(n=self.n, matrix=sp.csr_matrix(m), kind=self.kind)


def _accumulate(edges: Iterable, n: int) -> sp.csr_matrix:
    weights: dict[tuple[int, int], float] = {}
    for item in edges:
        if len(item) == 2:
            u, v = item
            w = 1.0
        else:
            u, v, w = item
        u, v, w = int(u), int(v), float(w)
        if not (0 <= u < n and 0 <= v < n):
            raise ValueError(f"edge ({u}, {v}) out of range for n={n}")
        if not np.isfinite(w):
            raise ValueError(f"edge ({u}, {v}) has non-finite weight {w}")
        key = (min(u, v), max(u, v))
        if key in weights and weights[key] != w:
            raise ValueError(f"conflicting weights for edge {key}: {weights[key]} vs {w}")
        weights[key] = w
    if not weights:
        return sp.csr_matrix((n, n))
    rows, cols, vals = [], [], []
    for (u, v), w in weights.items():
        rows.append(u)
        cols.append(v)
        vals.append(w)
        if u != v:
            rows.append(v)
            cols.append(u)
            vals.append(w)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def build_shift(edges: Iterable, n: int, kind: str = "adjacency") -> GraphShift:
    """Build a symmetric shift matrix from an undirected edge list.

    Each unordered pair is stored once, so listing both ``(u, v)`` and
    ``(v, u)`` gives the same matrix as listing the edge once. Edges may be
    ``(u, v)`` (unit weight) or ``(u, v, w)``.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown shift kind {kind!r}")
    if n <= 0:
        raise ValueError("n must be positive")
    adj = _accumulate(edges, n)
    if kind != "adjacency" and adj.nnz and adj.data.min() < 0:
        raise ValueError(f"negative edge weight not allowed for kind {kind!r}")
    if kind == "adjacency":
        s = adj
    else:
        deg = np.asarray(adj.sum(axis=1)).ravel()
        if kind == "laplacian":
            s = sp.diags(deg) - adj
        else:
            inv = np.zeros_like(deg)
            nz = deg > 0
            inv[nz] = 1.0 / np.sqrt(deg[nz])
            norm_adj = sp.diags(inv) @ adj @ sp.diags(inv)
            s = norm_adj if kind == "normalized_adjacency" else sp.identity(n) - norm_adj
    return GraphShift.from_matrix(s, kind=kind, check=False)


@dataclass(frozen=True)
class Spectrum:
    """Eigenpairs of a symmetric shift: ``S = V diag(lambda) V^T``."""

    basis: np.ndarray = field(repr=False)
    eigenvalues: np.ndarray

    @property
    def n(self) -> int:
        return len(self.eigenvalues)

    @property
    def interval(self) -> tuple[float, float]:
        return float(self.eigenvalues[0]), float(self.eigenvalues[-1])

    def reconstruct(self) -> np.ndarray:
        return (self.basis * self.eigenvalues) @ self.basis.T


def eigendecompose(shift: GraphShift | np.ndarray) -> Spectrum:
    """Dense eigendecomposition with ascending eigenvalues.

    Each eigenvector is flipped so that its first entry of non-negligible
    magnitude is positive, which makes the basis reproducible across runs.
    """
    dense = shift.toarray() if isinstance(shift, GraphShift) else np.asarray(shift, dtype=float)
    if not np.all(np.isfinite(dense)):
        raise ValueError("shift has non-finite entries")
    lam, vec = np.linalg.eigh(dense)
    tol = 1e-10 * np.abs(vec).max(axis=0)
    first = np.argmax(np.abs(vec) > tol, axis=0)
    signs = np.sign(vec[first, np.arange(vec.shape[1])])
    signs[signs == 0] = 1.0
    vec = vec * signs
    return Spectrum(basis=vec, eigenvalues=lam)


def _check_len(spectrum: Spectrum, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[0] != spectrum.n:
        raise ValueError(f"signal length {x.shape[0]} does not match graph size {spectrum.n}")
    return x


def gft(spectrum: Spectrum, x) -> np.ndarray:
    """Graph Fourier transform ``V^T x`` (works column-wise on matrices)."""
    return spectrum.basis.T @ _check_len(spectrum, x)


def igft(spectrum: Spectrum, x_hat) -> np.ndarray:
    """Inverse graph Fourier transform ``V x_hat``."""
    return spectrum.basis @ _check_len(spectrum, x_hat)


def padded_interval(lo: float, hi: float, pad: float = CHEB_PAD) -> tuple[float, float]:
    width = hi - lo
    if width <= 0:
        width = max(abs(lo), 1.0)
    return lo - pad * width, hi + pad * width


class ChebyshevFilter:
    """Chebyshev expansion of one or more spectral kernels on an interval.

    ``coefs`` has shape ``(n_kernels, order + 1)``. :meth:`apply` runs the
    three-term recurrence once and mixes all kernels from the same iterates,
    so a bank of ``J`` kernels costs ``order`` sparse mat-vecs per signal.
    """

    def __init__(self, kernels: Sequence[Kernel], interval: tuple[float, float],
                 order: int = CHEB_ORDER, pad: float = CHEB_PAD):
        if order < 1:
            raise ValueError("Chebyshev order must be >= 1")
        self.order = int(order)
        self.domain = padded_interval(*interval, pad=pad)
        self.coefs = np.array([
            cheb.Chebyshev.interpolate(lambda t, k=k: np.asarray(k(t), dtype=float) * np.ones_like(t),
                                       self.order, domain=self.domain).coef
            for k in kernels
        ])

    def evaluate(self, lam) -> np.ndarray:
        """Polynomial approximation of each kernel at ``lam``; shape ``(n_kernels, len(lam))``."""
        lo, hi = self.domain
        t = (2.0 * np.asarray(lam, dtype=float) - (lo + hi)) / (hi - lo)
        return np.array([cheb.chebval(t, c) for c in self.coefs])

    def apply(self, matrix, x: np.ndarray) -> np.ndarray:
        """Return ``sum_k c_k T_k(S~) x`` for every kernel, stacked on axis 0."""
        lo, hi = self.domain
        centre = 0.5 * (hi + lo)
        half = 0.5 * (hi - lo)
        x = np.asarray(x, dtype=float)
        t_prev = x
        t_cur = (matrix @ x - centre * x) / half
        out = np.multiply.outer(self.coefs[:, 0], t_prev) + np.multiply.outer(self.coefs[:, 1], t_cur)
        for k in range(2, self.order + 1):
            t_next = 2.0 * (matrix @ t_cur - centre * t_cur) / half - t_prev
            out += np.multiply.outer(self.coefs[:, k], t_next)
            t_prev, t_cur = t_cur, t_next
        return out


def apply_filter(graph: GraphShift | Spectrum, kernel: Kernel, x, backend: str = "spectral",
                 order: int = CHEB_ORDER, interval: tuple[float, float] | None = None) -> np.ndarray:
    """Filter ``x`` with the graph filter whose frequency response is ``kernel``.

    Parameters
    ----------
    graph : GraphShift or Spectrum
        The spectral backend needs eigenpairs and computes them when given a
        shift. The polynomial backend needs the shift matrix (a spectrum is
        turned back into a dense matrix) and a spectral interval.
    backend : {"spectral", "polynomial"}
    order : int
        Chebyshev order ``K`` of the polynomial backend.
    interval : (float, float), optional
        Spectral interval for the Chebyshev fit. Taken from the spectrum when
        one is passed; required otherwise.
    """
    x = np.asarray(x, dtype=float)
    if backend == "spectral":
        spectrum = graph if isinstance(graph, Spectrum) else eigendecompose(graph)
        x_hat = gft(spectrum, x)
        response = np.asarray(kernel(spectrum.eigenvalues), dtype=float) * np.ones(spectrum.n)
        if x_hat.ndim == 2:
            response = response[:, None]
        return igft(spectrum, response * x_hat)
    if backend in ("polynomial", "poly"):
        if isinstance(graph, Spectrum):
            matrix = graph.reconstruct()
            interval = interval or graph.interval
        else:
            matrix = graph.matrix
        if interval is None:
            raise ValueError("polynomial backend needs a known spectral interval")
        if x.shape[0] != matrix.shape[0]:
            raise ValueError(f"signal length {x.shape[0]} does not match graph size {matrix.shape[0]}")
        return ChebyshevFilter([kernel], interval, order=order).apply(matrix, x)[0]
    raise ValueError(f"unknown backend {backend!r}")
