"""Perturbation generators, stability/sensitivity bounds and tree-invariance checks."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .graph import GraphShift, Spectrum
from .scattering import ROOT, Path, ScatteringTree, path_str, propagate

BOUND_SLACK = 1e-9


# --------------------------------------------------------------------------
# signal perturbations
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SignalPerturbation:
    delta: np.ndarray = field(repr=False)
    spectral: np.ndarray = field(repr=False)
    kind: str
    energy: float
    index: int | None = None


def snr_to_energy(x, snr_db: float) -> float:
    """Noise energy giving ``snr_db`` against signal ``x``: ``||x||^2 10^(-snr/10)``."""
    power = float(np.dot(x, x))
    if power == 0.0:
        raise ValueError("SNR is undefined for a zero signal")
    if math.isinf(snr_db) and snr_db > 0:
        return 0.0
    return power * 10.0 ** (-snr_db / 10.0)


def perturb_random(spectrum: Spectrum, eps: float, seed=None) -> SignalPerturbation:
    """Noise spread evenly over the spectrum: every ``[delta_hat]_n = +-sqrt(eps/N)``."""
    if eps < 0:
        raise ValueError("energy must be non-negative")
    rng = np.random.default_rng(seed)
    n = spectrum.n
    spec = rng.choice([-1.0, 1.0], size=n) * math.sqrt(eps / n)
    return SignalPerturbation(spectrum.basis @ spec, spec, "random", float(eps))


def perturb_localized(spectrum: Spectrum, eps: float, n: int, seed=None) -> SignalPerturbation:
    """Noise on the single graph frequency ``n``: ``delta_hat = +-sqrt(eps) e_n``."""
    if eps < 0:
        raise ValueError("energy must be non-negative")
    if not 0 <= n < spectrum.n:
        raise ValueError(f"spectral index {n} out of range [0, {spectrum.n})")
    rng = np.random.default_rng(seed)
    spec = np.zeros(spectrum.n)
    spec[n] = rng.choice([-1.0, 1.0]) * math.sqrt(eps)
    return SignalPerturbation(spectrum.basis @ spec, spec, "localized", float(eps), index=n)


# --------------------------------------------------------------------------
# structural perturbations
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class StructuralPerturbation:
    """A perturbed shift ``S~`` plus what is known about how it was obtained.

    For the relative model ``S~ = S + Delta^T S + S Delta`` the record carries
    ``||Delta||`` (which is ``d(S, S~)`` with the identity permutation),
    ``d_max`` and ``||Delta / d_max - I||``.
    """

    kind: str
    shifted: GraphShift = field(repr=False)
    magnitude: float
    mode: str | None = None
    delta: np.ndarray | None = field(default=None, repr=False)
    delta_norm: float | None = None
    d_max: float | None = None
    eig_deviation: float | None = None

    def eligible(self, eps: float) -> bool:
        """Whether the relative model meets ``||Delta|| <= eps/2`` and ``||Delta/d_max - I|| <= eps``."""
        if self.kind != "relative" or self.eig_deviation is None or not math.isfinite(self.eig_deviation):
            return False
        return self.delta_norm <= eps / 2 + 1e-15 and self.eig_deviation <= eps + 1e-15


def perturb_structure_eigen(shift: GraphShift, spectrum: Spectrum, snr_db: float,
                            mode: str = "random", seed=None) -> StructuralPerturbation:
    """Add noise ``eta`` to the eigenvalues: ``S~ = V (Lambda + diag(eta)) V^T``.

    ``||eta||^2`` is set so that ``||S~ - S||_F^2 / ||S||_F^2 = 10^(-snr/10)``.
    ``random`` spreads the noise energy evenly over all eigenvalues;
    ``localized`` puts all of it on ``ceil(N/20)`` randomly chosen ones.
    """
    rng = np.random.default_rng(seed)
    n = spectrum.n
    s_energy = float(np.sum(spectrum.eigenvalues**2))
    noise = math.sqrt(s_energy * 10.0 ** (-snr_db / 10.0)) if math.isfinite(snr_db) else 0.0
    eta = np.zeros(n)
    if mode == "random":
        eta = rng.choice([-1.0, 1.0], size=n) * noise / math.sqrt(n)
    elif mode == "localized":
        m = math.ceil(n / 20)
        idx = rng.choice(n, size=m, replace=False)
        eta[idx] = rng.choice([-1.0, 1.0], size=m) * noise / math.sqrt(m)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    v = spectrum.basis
    dense = (v * (spectrum.eigenvalues + eta)) @ v.T
    dense = 0.5 * (dense + dense.T)
    shifted = GraphShift.from_matrix(dense, kind=shift.kind, check=False)
    return StructuralPerturbation("eigenvalue_noise", shifted, snr_db, mode=mode)


def perturb_structure_relative(shift: GraphShift, delta) -> StructuralPerturbation:
    """Relative perturbation ``S~ = S + Delta^T S + S Delta``."""
    delta = np.asarray(delta, dtype=float)
    n = shift.n
    if delta.shape != (n, n):
        raise ValueError(f"Delta must be {n}x{n}, got {delta.shape}")
    s = shift.toarray()
    dense = s + delta.T @ s + s @ delta
    shifted = GraphShift.from_matrix(0.5 * (dense + dense.T), kind=shift.kind, check=False)
    norm = float(np.linalg.norm(delta, 2))
    if np.allclose(delta, delta.T, atol=1e-14):
        d = np.linalg.eigvalsh(0.5 * (delta + delta.T))
        d_max = float(d[np.argmax(np.abs(d))])
    else:
        d = np.linalg.eigvals(delta)
        d_max = float(np.real(d[np.argmax(np.abs(d))]))
    if d_max != 0.0:
        deviation = float(np.linalg.norm(delta / d_max - np.eye(n), 2))
    else:
        # Delta = 0 needs no eigenvalue condition; a nonzero Delta with d_max = 0 is ineligible
        deviation = 0.0 if norm == 0.0 else math.inf
    return StructuralPerturbation("relative", shifted, norm, delta=delta, delta_norm=norm,
                                  d_max=d_max, eig_deviation=deviation)


def random_relative_delta(n: int, eps: float, seed=None) -> np.ndarray:
    """A random symmetric ``Delta = d (I + E)`` meeting the eligibility conditions for ``eps``.

    ``||E|| = eps/3`` keeps ``||Delta/d_max - I|| <= 2(eps/3)/(1 - eps/3) < eps``;
    ``|d|`` is drawn so that ``||Delta|| <= eps/2``.
    """
    rng = np.random.default_rng(seed)
    e = rng.standard_normal((n, n))
    e = 0.5 * (e + e.T)
    e *= (eps / 3) / np.linalg.norm(e, 2)
    d_cap = eps / (2 * (1 + eps / 3))
    d = rng.choice([-1.0, 1.0]) * rng.uniform(0.1, 1.0) * d_cap
    return d * (np.eye(n) + e)


# --------------------------------------------------------------------------
# bounds
# --------------------------------------------------------------------------

@dataclass
class BoundReport:
    measured: float
    bound: float
    inputs: dict = field(default_factory=dict)

    @property
    def holds(self) -> bool:
        return self.measured <= self.bound + BOUND_SLACK

    def to_dict(self) -> dict:
        return {"measured": float(self.measured), "bound": float(self.bound), "holds": self.holds, **self.inputs}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @staticmethod
    def to_csv(reports: Sequence["BoundReport"]) -> str:
        rows = [r.to_dict() for r in reports]
        cols = list(dict.fromkeys(k for r in rows for k in r))
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(v) for k, v in r.items()})
        return buf.getvalue()


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (list, tuple)):
        return " ".join(map(str, v))
    return v


def bound_gst_signal(B: float, J: int, L: int, delta_norm: float) -> float:
    """Normalized GST stability bound ``sqrt(sum (B^2 J)^l / sum J^l) ||delta||`` over layers ``0..L-1``."""
    if B <= 0 or J < 1 or L < 1:
        raise ValueError("need B > 0, J >= 1, L >= 1")
    num = sum((B * B * J) ** l for l in range(L))
    den = sum(J**l for l in range(L))
    return math.sqrt(num / den) * delta_norm


def bound_pgst_signal(B: float, f_counts: Sequence[int], delta_norm: float) -> float:
    """Normalized pGST stability bound ``sqrt(sum F_l B^(2l) / sum F_l) ||delta||``."""
    f = np.asarray(f_counts, dtype=float)
    if f.sum() <= 0:
        raise ValueError("layer counts are all zero")
    w = B ** (2.0 * np.arange(len(f)))
    return math.sqrt(float(f @ w) / f.sum()) * delta_norm


def bound_pgst_structural(eps: float, c0: float, B: float, f_counts: Sequence[int], x_norm: float) -> float:
    """Structural pGST bound ``eps C0 sqrt(sum F_l l^2 B^(2l) / sum F_l) ||x||``."""
    if eps < 0 or c0 < 0:
        raise ValueError("eps and C0 must be non-negative")
    f = np.asarray(f_counts, dtype=float)
    if f.sum() <= 0:
        raise ValueError("layer counts are all zero")
    l = np.arange(len(f))
    return eps * c0 * math.sqrt(float(f @ (l**2 * B ** (2.0 * l))) / f.sum()) * x_norm


def sensitivity_bounds(eps: float, B: float, f_counts_random: Sequence[int],
                       f_counts_localized: Sequence[int], n_nodes: int, L: int) -> tuple[float, float]:
    """Sensitivity bounds for evenly spread and single-frequency input noise.

    Returns ``(sqrt((sum_{l>=1} F_l B^(2l) / N + 1) eps), sqrt((sum_{l>=2} F'_l B^(2l) + 2) eps))``.
    Both assume the ideal bank of ``J = N`` one-hot spectral kernels.
    """
    if n_nodes < 2:
        raise ValueError("sensitivity bounds need N >= 2 (one-hot bank with J = N filters)")
    fr = np.asarray(f_counts_random, dtype=float)[:L]
    fl = np.asarray(f_counts_localized, dtype=float)[:L]
    rand = sum(fr[l] * B ** (2 * l) for l in range(1, len(fr))) / n_nodes + 1.0
    loc = sum(fl[l] * B ** (2 * l) for l in range(2, len(fl))) + 2.0
    return math.sqrt(rand * eps), math.sqrt(loc * eps)


class ProjectionOperator:
    """Ideal bank of ``J = N`` one-hot spectral kernels: ``h_j(S) = v_j v_j^T``."""

    def __init__(self, spectrum: Spectrum):
        self.spectrum = spectrum
        self.n = spectrum.n
        self.applications = 0
        self.bank = None

    @property
    def J(self) -> int:
        return self.n

    def apply(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        self.applications += self.J
        v = self.spectrum.basis
        return (v * (v.T @ z)).T

    def frame_bounds(self) -> tuple[float, float]:
        return 1.0, 1.0


# --------------------------------------------------------------------------
# tree-invariance conditions
# --------------------------------------------------------------------------

@dataclass
class BranchCheck:
    """Per-branch outcome of a tree-invariance condition at one node."""

    path: Path
    flags: np.ndarray
    margin: np.ndarray
    threshold: np.ndarray
    extra: dict = field(default_factory=dict)

    @property
    def holds(self) -> bool:
        return bool(np.all(self.flags))

    @property
    def holds_sound(self) -> bool:
        """All cross-term-aware flags hold (see :func:`check_lemma2`)."""
        return bool(np.all(self.extra.get("sound_flags", self.flags)))


def _branch_energies(op, z) -> np.ndarray:
    out = op.apply(z)
    return np.einsum("jn,jn->j", out, out)


def check_lemma2(z_p, z_tilde_p, op, tau: float, path: Path = ROOT) -> BranchCheck:
    """Signal-perturbation tree-invariance condition at one node.

    Branch ``j`` passes iff
    ``| ||h_j z||^2 - tau ||z||^2 | > ||h_j delta||^2 + tau | ||z||^2 - ||z~||^2 |``
    with ``delta = z - z~``. Also reports ``g(z)`` and ``g(delta)`` where
    ``g(y) = ||h_j y||^2 - tau ||y||^2``.

    This condition does not account for the cross term ``2 <h_j z, h_j delta>``
    in ``||h_j z||^2 - ||h_j z~||^2`` and can hold while the decision flips.
    ``extra["sound_flags"]`` uses ``||h_j delta|| (2 ||h_j z|| + ||h_j delta||)``
    in place of ``||h_j delta||^2``, which does bound that difference, so when
    every sound flag holds along the tree the two trees are equal.
    """
    z_p = np.asarray(z_p, dtype=float)
    z_tilde_p = np.asarray(z_tilde_p, dtype=float)
    delta = z_p - z_tilde_p
    zz, zt, dd = float(z_p @ z_p), float(z_tilde_p @ z_tilde_p), float(delta @ delta)
    hz = _branch_energies(op, z_p)
    hd = _branch_energies(op, delta)
    g_z = hz - tau * zz
    g_d = hd - tau * dd
    margin = np.abs(g_z)
    threshold = hd + tau * abs(zz - zt)
    sound = np.sqrt(hd) * (2 * np.sqrt(hz) + np.sqrt(hd)) + tau * abs(zz - zt)
    return BranchCheck(path, margin > threshold, margin, threshold,
                       {"g_z": g_z, "g_delta": g_d, "sound_threshold": sound, "sound_flags": margin > sound})


def check_lemma3(z_p, z_tilde_p, layer: int, op, eps: float, c0: float, B: float,
                 x_norm: float, tau: float, perturbation: StructuralPerturbation | None = None,
                 path: Path = ROOT) -> BranchCheck:
    """Structural-perturbation tree-invariance condition at one node of layer ``l``.

    Branch ``j`` passes iff
    ``| ||h_j(S) z||^2 - tau ||z||^2 | > (l eps C0 B^(l-1) ||x||)^2 + tau ||delta||^2``.
    The layer deviation ``||z~ - z||`` is also compared with its bound
    ``l eps C0 B^(l-1) ||x||`` (``extra["deviation_ok"]``).

    As with :func:`check_lemma2` the squared deviation bound ignores a
    first-order cross term. ``extra["sound_flags"]`` instead uses
    ``D (2 ||h_j(S) z|| + D) + tau | ||z||^2 - ||z~||^2 |`` with
    ``D = (l+1) eps C0 B^l ||x||``, the deviation bound of the children,
    which settles the decision whenever that layer deviation bound holds.
    """
    if perturbation is not None and not perturbation.eligible(eps):
        raise ValueError("perturbation does not meet ||Delta|| <= eps/2 and ||Delta/d_max - I|| <= eps")
    z_p = np.asarray(z_p, dtype=float)
    delta = z_p - np.asarray(z_tilde_p, dtype=float)
    dev_bound = layer_deviation_bound(layer, eps, c0, B, x_norm)
    hz = _branch_energies(op, z_p)
    margin = np.abs(hz - tau * float(z_p @ z_p))
    threshold = np.full(len(hz), dev_bound**2 + tau * float(delta @ delta))
    deviation = float(np.linalg.norm(delta))
    d_next = layer_deviation_bound(layer + 1, eps, c0, B, x_norm)
    zz, zt = float(z_p @ z_p), float(np.dot(z_tilde_p, z_tilde_p))
    sound = d_next * (2 * np.sqrt(hz) + d_next) + tau * abs(zz - zt)
    return BranchCheck(path, margin > threshold, margin, threshold,
                       {"deviation": deviation, "deviation_bound": dev_bound,
                        "deviation_ok": deviation <= dev_bound + BOUND_SLACK,
                        "sound_threshold": sound, "sound_flags": margin > sound})


def layer_deviation_bound(layer: int, eps: float, c0: float, B: float, x_norm: float) -> float:
    if layer == 0:
        return 0.0
    return layer * eps * c0 * B ** (layer - 1) * x_norm


def _expanded(tree: ScatteringTree) -> list[Path]:
    return [p for p in tree.active_paths if len(p) < tree.L - 1]


def lemma2_checks(op, x, x_tilde, tree: ScatteringTree, tau: float) -> list[BranchCheck]:
    """Evaluate the signal condition at every expanded node of the unperturbed tree."""
    z = propagate(op, x, tree)
    zt = propagate(op, x_tilde, tree)
    return [check_lemma2(z[p], zt[p], op, tau, path=p) for p in _expanded(tree)]


def lemma3_checks(op, op_tilde, x, tree: ScatteringTree, eps: float, c0: float, B: float,
                  tau: float, perturbation: StructuralPerturbation | None = None) -> list[BranchCheck]:
    """Evaluate the structural condition at every active node of the unperturbed tree.

    Leaves carry no branch flags (their children are never evaluated) but
    still report the layer deviation.
    """
    z = propagate(op, x, tree)
    zt = propagate(op_tilde, x, tree)
    x_norm = float(np.linalg.norm(x))
    expanded = set(_expanded(tree))
    out = []
    for p in tree.active_paths:
        chk = check_lemma3(z[p], zt[p], len(p), op, eps, c0, B, x_norm, tau, perturbation, path=p)
        if p not in expanded:
            chk.flags = np.ones(0, dtype=bool)
            chk.extra["sound_flags"] = chk.flags
        out.append(chk)
    return out


# --------------------------------------------------------------------------
# tree comparison
# --------------------------------------------------------------------------

def tree_diff(t1: ScatteringTree, t2: ScatteringTree) -> tuple[list[Path], list[Path], int]:
    """Active paths added in ``t2``, removed from ``t1``, and their total count."""
    if t1.J != t2.J or t1.L != t2.L:
        raise ValueError(f"cannot compare trees with (J, L) = ({t1.J}, {t1.L}) and ({t2.J}, {t2.L})")
    a, b = set(t1.active_paths), set(t2.active_paths)
    key = lambda p: (len(p), p)
    added = sorted(b - a, key=key)
    removed = sorted(a - b, key=key)
    return added, removed, len(added) + len(removed)


def describe_diff(diff) -> str:
    added, removed, count = diff
    return (f"{count} differing nodes; added: {', '.join(map(path_str, added)) or '-'}; "
            f"removed: {', '.join(map(path_str, removed)) or '-'}")
