"""Wavelet filter banks for graph scattering.

Three families are available:

``diffusion``
    Dyadic powers of the lazy diffusion operator ``T = (I + A_norm) / 2``:
    a high-pass ``1 - t``, band-pass kernels ``t^s (1 - t^s)`` for
    ``s = 1, 2, 4, ...`` and a closing low-pass ``t^s``. The kernels sum to one.
``monic_cubic``
    The spectral graph wavelet mother kernel (``x^2`` / monic cubic spline /
    ``4 / x^2``) at ``J - 1`` log-spaced scales plus a ``exp(-x^4)`` scaling
    kernel.
``tight_hann``
    ``J`` half-cosine windows with 50% overlap, flattened at both ends, whose
    squares sum to exactly one; optionally laid out on a spectrum-adapted
    (CDF-warped) axis.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .graph import CHEB_ORDER, ChebyshevFilter, GraphShift, Spectrum, eigendecompose

FAMILIES = ("diffusion", "monic_cubic", "tight_hann")
FAMILY_ALIASES = {"ds": "diffusion", "mcs": "monic_cubic", "ths": "tight_hann"}

GRID_POINTS = 1024
LIPSCHITZ_POINTS = 4096

# Spectral graph wavelet defaults: x1 = 1, x2 = 2, alpha = beta = 2, lpfactor 20.
MC_X1, MC_X2 = 1.0, 2.0
MC_LPFACTOR = 20.0


def monic_cubic_mother(x) -> np.ndarray:
    """Mother wavelet ``g``: ``x^2`` below 1, monic cubic on [1, 2], ``4/x^2`` above 2."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    lo = x < MC_X1
    hi = x > MC_X2
    mid = ~(lo | hi)
    out[lo] = x[lo] ** 2
    xm = x[mid]
    out[mid] = -5.0 + 11.0 * xm - 6.0 * xm**2 + xm**3
    out[hi] = 4.0 / x[hi] ** 2
    return out


@dataclass(frozen=True)
class FilterKernel:
    """One spectral kernel ``lambda -> h(lambda)``.

    ``kind`` and ``params`` fully determine the kernel, so a kernel can be
    rebuilt from its JSON descriptor. Besides the family kernels, ``constant``,
    ``identity`` and ``table`` (piecewise-linear through ``params["x"]``,
    ``params["y"]``) are available for custom banks.
    """

    family: str
    scale_id: int
    kind: str
    params: dict = field(default_factory=dict)

    def __call__(self, lam) -> np.ndarray:
        lam = np.asarray(lam, dtype=float)
        p = self.params
        if self.kind == "constant":
            return np.full_like(lam, p["value"])
        if self.kind == "identity":
            return lam.copy()
        if self.kind == "table":
            return np.interp(lam, p["x"], p["y"])
        if self.kind.startswith("diffusion_"):
            t = p["t0"] + p["t1"] * lam
            if self.kind == "diffusion_highpass":
                return 1.0 - t
            ts = t ** p["power"]
            return ts * (1.0 - ts) if self.kind == "diffusion_band" else ts
        if self.kind == "mc_wavelet":
            u = np.maximum(lam - p["origin"], 0.0)
            return monic_cubic_mother(p["scale"] * u)
        if self.kind == "mc_scaling":
            u = np.maximum(lam - p["origin"], 0.0)
            return p["gamma"] * np.exp(-((u / (0.6 * p["u_min"])) ** 4))
        if self.kind == "hann":
            w = _warp(lam, p)
            d = (w - p["centre"]) / p["width"]
            out = np.where(np.abs(d) < 1.0, np.cos(0.5 * np.pi * d), 0.0)
            if p.get("flat_left"):
                out = np.where(d <= 0.0, 1.0, out)
            if p.get("flat_right"):
                out = np.where(d >= 0.0, 1.0, out)
            return out
        raise ValueError(f"unknown kernel kind {self.kind!r}")

    def to_dict(self) -> dict:
        return {"family": self.family, "scale_id": self.scale_id, "kind": self.kind,
                "params": dict(self.params)}

    @classmethod
    def from_dict(cls, d: dict) -> "FilterKernel":
        return cls(family=d["family"], scale_id=int(d["scale_id"]), kind=d["kind"],
                   params=dict(d["params"]))


def _warp(lam: np.ndarray, p: dict) -> np.ndarray:
    knots = p.get("warp_knots")
    if not knots:
        return lam
    xs, ys = np.asarray(knots[0]), np.asarray(knots[1])
    # linear continuation outside the knots keeps the warp monotone everywhere
    out = np.interp(lam, xs, ys)
    left, right = lam < xs[0], lam > xs[-1]
    out[left] = ys[0] + (lam[left] - xs[0])
    out[right] = ys[-1] + (lam[right] - xs[-1])
    return out


@dataclass(frozen=True)
class FilterBank:
    kernels: tuple[FilterKernel, ...]
    interval: tuple[float, float]
    frame_bounds: tuple[float, float]
    lipschitz: float
    family: str = "custom"

    @property
    def J(self) -> int:
        return len(self.kernels)

    @property
    def A(self) -> float:
        return self.frame_bounds[0]

    @property
    def B(self) -> float:
        return self.frame_bounds[1]

    def evaluate(self, lam) -> np.ndarray:
        """Kernel responses, shape ``(J, len(lam))``."""
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
        return np.array([np.broadcast_to(k(lam), lam.shape) for k in self.kernels])

    def operator(self, graph, backend: str = "spectral", order: int = CHEB_ORDER) -> "BankOperator":
        return BankOperator(graph, self, backend=backend, order=order)

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "J": self.J,
            "interval": list(self.interval),
            "kernels": [k.to_dict() for k in self.kernels],
            "A": self.A,
            "B": self.B,
            "C0": self.lipschitz,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FilterBank":
        return cls(
            kernels=tuple(FilterKernel.from_dict(k) for k in d["kernels"]),
            interval=(float(d["interval"][0]), float(d["interval"][1])),
            frame_bounds=(float(d["A"]), float(d["B"])),
            lipschitz=float(d["C0"]),
            family=d.get("family", "custom"),
        )


def _diffusion_map(lo: float, hi: float, shift_kind: str | None, tol: float = 1e-9) -> tuple[float, float]:
    """Affine map ``lambda -> t`` onto the lazy diffusion spectrum [0, 1]."""
    if shift_kind is None:
        if lo >= -tol and hi <= 2.0 + tol:
            shift_kind = "normalized_laplacian"
        elif lo >= -1.0 - tol and hi <= 1.0 + tol:
            shift_kind = "normalized_adjacency"
    if shift_kind == "normalized_adjacency" and lo >= -1.0 - tol and hi <= 1.0 + tol:
        return 0.5, 0.5
    if shift_kind == "normalized_laplacian" and lo >= -tol and hi <= 2.0 + tol:
        return 1.0, -0.5
    raise ValueError(
        f"diffusion wavelets need a normalized shift: interval [{lo}, {hi}] is not inside "
        "[-1, 1] (normalized adjacency) or [0, 2] (normalized Laplacian)"
    )


def _diffusion_kernels(lo, hi, J, shift_kind):
    t0, t1 = _diffusion_map(lo, hi, shift_kind)
    base = {"t0": t0, "t1": t1}
    kernels = [FilterKernel("diffusion", 1, "diffusion_highpass", dict(base))]
    for j in range(1, J - 1):
        kernels.append(FilterKernel("diffusion", j + 1, "diffusion_band", {**base, "power": 2 ** (j - 1)}))
    kernels.append(FilterKernel("diffusion", J, "diffusion_lowpass", {**base, "power": 2 ** (J - 2)}))
    return kernels


def _monic_cubic_kernels(lo, hi, J):
    u_max = hi - lo
    u_min = u_max / MC_LPFACTOR
    scales = np.exp(np.linspace(np.log(MC_X2 / u_min), np.log(MC_X1 / u_max), J - 1))
    xs = np.linspace(0.0, 2.0 * MC_X2, 20001)
    gamma = float(monic_cubic_mother(xs).max())
    kernels = [FilterKernel("monic_cubic", 1, "mc_scaling",
                            {"origin": lo, "u_min": u_min, "gamma": gamma})]
    for j, s in enumerate(scales, start=2):
        kernels.append(FilterKernel("monic_cubic", j, "mc_wavelet", {"origin": lo, "scale": float(s)}))
    return kernels


def _tight_hann_kernels(lo, hi, J, warp_eigenvalues):
    params = {}
    if warp_eigenvalues is not None:
        lam = np.unique(np.clip(np.asarray(warp_eigenvalues, dtype=float), lo, hi))
        # empirical CDF, pinned to the interval ends
        xs = np.concatenate([[lo], lam, [hi]])
        cdf = np.concatenate([[0.0], np.arange(1, len(lam) + 1) / len(lam), [1.0]])
        xs, idx = np.unique(xs, return_index=True)
        ys = lo + (hi - lo) * np.maximum.accumulate(cdf[idx])
        params["warp_knots"] = [xs.tolist(), ys.tolist()]
    width = (hi - lo) / (J - 1)
    kernels = []
    for j in range(J):
        p = {**params, "centre": lo + j * width, "width": width,
             "flat_left": j == 0, "flat_right": j == J - 1}
        kernels.append(FilterKernel("tight_hann", j + 1, "hann", p))
    return kernels


def make_bank(interval: Sequence[float], family: str, J: int, shift_kind: str | None = None,
              warp_eigenvalues=None) -> FilterBank:
    """Build a ``J``-kernel wavelet bank of ``family`` on ``interval``.

    Parameters
    ----------
    interval : (float, float)
        Spectral interval ``[lambda_min, lambda_max]`` the bank must cover.
    family : str
        ``diffusion``, ``monic_cubic`` or ``tight_hann`` (``ds``/``mcs``/``ths``
        are accepted too).
    J : int
        Number of kernels, at least 2.
    shift_kind : str, optional
        Only used by ``diffusion`` to pick the map from eigenvalues to the
        diffusion spectrum; inferred from the interval when omitted.
    warp_eigenvalues : array-like, optional
        Only used by ``tight_hann``: lay the windows out on the empirical CDF
        of these eigenvalues instead of a uniform axis.
    """
    family = FAMILY_ALIASES.get(family, family)
    lo, hi = float(interval[0]), float(interval[1])
    if not lo < hi:
        raise ValueError(f"empty spectral interval [{lo}, {hi}]")
    if J < 2:
        raise ValueError("a wavelet bank needs J >= 2")
    if family == "diffusion":
        kernels = _diffusion_kernels(lo, hi, J, shift_kind)
    elif family == "monic_cubic":
        kernels = _monic_cubic_kernels(lo, hi, J)
    elif family == "tight_hann":
        kernels = _tight_hann_kernels(lo, hi, J, warp_eigenvalues)
    else:
        raise ValueError(f"unknown wavelet family {family!r}")
    return bank_from_kernels(kernels, (lo, hi), family=family)


def bank_from_kernels(kernels: Sequence[FilterKernel], interval, family: str = "custom") -> FilterBank:
    """Wrap arbitrary kernels, certifying frame bounds and C0 on ``interval``."""
    lo, hi = float(interval[0]), float(interval[1])
    grid = np.linspace(lo, hi, GRID_POINTS)
    proto = FilterBank(tuple(kernels), (lo, hi), (0.0, 0.0), 0.0, family)
    a, b = frame_bounds(proto, grid)
    c0 = max(integral_lipschitz(k, (lo, hi)) for k in kernels)
    return FilterBank(tuple(kernels), (lo, hi), (a, b), c0, family)


def frame_bounds(bank: FilterBank, grid) -> tuple[float, float]:
    """Frame bounds ``(A, B)`` from the min/max of ``sum_j h_j(lambda)^2`` over ``grid``.

    Exact for any graph whose eigenvalues all lie on ``grid``; pass the
    eigenvalues themselves to get the bounds of a specific graph.
    """
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if grid.size == 0:
        raise ValueError("empty grid")
    energy = np.sum(bank.evaluate(grid) ** 2, axis=0)
    a2, b2 = float(energy.min()), float(energy.max())
    if a2 <= 0.0:
        warnings.warn("degenerate frame: lower frame bound is zero", RuntimeWarning, stacklevel=2)
    return math.sqrt(max(a2, 0.0)), math.sqrt(b2)


def integral_lipschitz(kernel, interval, points: int = LIPSCHITZ_POINTS) -> float:
    """``C0 = max |lambda h'(lambda)|`` on a uniform grid, ``h'`` by central differences."""
    lo, hi = float(interval[0]), float(interval[1])
    grid = np.linspace(lo, hi, points)
    values = np.asarray(kernel(grid), dtype=float) * np.ones_like(grid)
    deriv = np.gradient(values, grid[1] - grid[0])
    if not np.all(np.isfinite(deriv)):
        raise ValueError("non-finite derivative estimate")
    return float(np.max(np.abs(grid * deriv)))


class BankOperator:
    """Applies every filter of a bank on one graph: ``z -> [h_j(S) z]_j``.

    With the spectral backend the ``J`` filter matrices ``V diag(h_j) V^T``
    are formed once up front, so applying the bank to a node feature is a
    single dense mat-vec and no per-node GFT is needed. The polynomial
    backend shares one Chebyshev recurrence across the bank and only uses
    sparse mat-vecs with ``S``.

    ``applications`` counts single-filter applications (``J`` per call).
    """

    def __init__(self, graph, bank: FilterBank, backend: str = "spectral", order: int = CHEB_ORDER):
        self.bank = bank
        self.backend = "polynomial" if backend == "poly" else backend
        self.applications = 0
        self.spectrum: Spectrum | None = None
        if self.backend == "spectral":
            self.spectrum = graph if isinstance(graph, Spectrum) else eigendecompose(graph)
            v = self.spectrum.basis
            resp = bank.evaluate(self.spectrum.eigenvalues)
            self.n = self.spectrum.n
            self._stacked = np.concatenate([(v * r) @ v.T for r in resp], axis=0)
        elif self.backend == "polynomial":
            if isinstance(graph, Spectrum):
                self._matrix = graph.reconstruct()
                self.spectrum = graph
            else:
                self._matrix = graph.matrix if isinstance(graph, GraphShift) else np.asarray(graph)
            self.n = self._matrix.shape[0]
            self._cheb = ChebyshevFilter(bank.kernels, bank.interval, order=order)
        else:
            raise ValueError(f"unknown backend {backend!r}")

    @property
    def J(self) -> int:
        return self.bank.J

    def apply(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if z.shape != (self.n,):
            raise ValueError(f"expected a length-{self.n} vector, got shape {z.shape}")
        self.applications += self.J
        if self.backend == "spectral":
            return (self._stacked @ z).reshape(self.J, self.n)
        return self._cheb.apply(self._matrix, z)

    def frame_bounds(self) -> tuple[float, float]:
        """Frame bounds of the bank restricted to this graph's eigenvalues."""
        if self.spectrum is None:
            self.spectrum = eigendecompose(GraphShift.from_matrix(self._matrix, check=False))
        return frame_bounds(self.bank, self.spectrum.eigenvalues)
