"""Trial runners shared by the command line and the acceptance suite.

Each runner is a pure function of its inputs and seed. Feature distances
are normalized by the square root of the number of coefficients, matching
the normalization of the stability bounds.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .filters import FilterBank, make_bank
from .graph import GraphShift, Spectrum, build_shift, eigendecompose
from .io import make_er, make_sbm, sbm_labels
from .perturbation import (
    BoundReport,
    bound_gst_signal,
    bound_pgst_signal,
    bound_pgst_structural,
    lemma2_checks,
    lemma3_checks,
    perturb_localized,
    perturb_random,
    perturb_structure_eigen,
    perturb_structure_relative,
    random_relative_delta,
    snr_to_energy,
    tree_diff,
)
from .scattering import ScatteringTree, feature_distance, gst, pgst, transform_with_tree


@dataclass
class Setup:
    """A graph with its spectrum, filter bank and prebuilt bank operator."""

    shift: GraphShift
    spectrum: Spectrum
    bank: FilterBank
    op: object
    backend: str = "spectral"

    @property
    def B(self) -> float:
        """Upper frame bound valid both on the kernel grid and on this graph's eigenvalues."""
        return max(self.bank.B, self.op.frame_bounds()[1])

    @property
    def C0(self) -> float:
        return self.bank.lipschitz


def make_setup(shift: GraphShift, family: str = "tight_hann", J: int = 5,
               backend: str = "spectral", order: int = 30) -> Setup:
    spectrum = eigendecompose(shift)
    bank = make_bank(spectrum.interval, family, J, shift_kind=shift.kind)
    op = bank.operator(spectrum if backend == "spectral" else shift, backend=backend, order=order)
    return Setup(shift, spectrum, bank, op, backend)


def er_shift(n: int = 234, p: float = 0.05, seed: int = 0, kind: str = "normalized_laplacian") -> GraphShift:
    edges, n = make_er(n, p, seed)
    return build_shift(edges, n, kind)


def sbm_shift(blocks=(40, 40, 40), p_in: float = 0.3, p_out: float = 0.02, seed: int = 1,
              kind: str = "normalized_laplacian") -> GraphShift:
    edges, n = make_sbm(blocks, p_in, p_out, seed)
    return build_shift(edges, n, kind)


# --------------------------------------------------------------------------
# signal stability
# --------------------------------------------------------------------------

def draw_signal_perturbation(spectrum: Spectrum, x, snr_db: float, mode: str, seed):
    eps = snr_to_energy(x, snr_db)
    if mode == "random":
        return perturb_random(spectrum, eps, seed)
    if mode == "localized":
        rng = np.random.default_rng(seed)
        return perturb_localized(spectrum, eps, int(rng.integers(spectrum.n)), rng)
    raise ValueError(f"unknown perturbation mode {mode!r}")


def signal_trial(setup: Setup, x, depth: int, tau: float | None, snr_db: float,
                 mode: str = "random", seed=None, trial: int = 0) -> BoundReport:
    """One signal-perturbation trial against the GST (``tau=None``) or pGST bound.

    For the pruned transform the perturbed coefficients are read on the
    unperturbed tree's paths, and ``tree_diff`` reports how far the perturbed
    signal's own tree moved. ``invariance_flags`` is True when every
    invariance flag holds along the unperturbed tree; ``invariance_flags_sound``
    is the same for the flags that include the first-order cross term.
    """
    x = np.asarray(x, dtype=float)
    pert = draw_signal_perturbation(setup.spectrum, x, snr_db, mode, seed)
    x_tilde = x + pert.delta
    d_norm = float(np.linalg.norm(pert.delta))
    B = setup.B
    inputs = {"trial": trial, "snr_db": snr_db, "mode": mode, "B": B, "J": setup.bank.J,
              "L": depth, "delta_norm": d_norm}
    if tau is None:
        phi, _ = gst(setup.op, x, None, depth)
        phi_t, _ = gst(setup.op, x_tilde, None, depth)
        measured = feature_distance(phi, phi_t)
        bound = bound_gst_signal(B, setup.bank.J, depth, d_norm)
        inputs.update({"transform": "gst", "F": [setup.bank.J**l for l in range(depth)], "tree_diff": 0})
        return BoundReport(measured, bound, inputs)
    psi, tree = pgst(setup.op, x, None, depth, tau)
    psi_t = transform_with_tree(setup.op, x_tilde, None, tree)
    _, tree_t = pgst(setup.op, x_tilde, None, depth, tau)
    measured = feature_distance(psi, psi_t)
    bound = bound_pgst_signal(B, tree.layer_counts, d_norm)
    checks = lemma2_checks(setup.op, x, x_tilde, tree, tau)
    inputs.update({"transform": "pgst", "tau": tau, "F": tree.layer_counts,
                   "tree_diff": tree_diff(tree, tree_t)[2],
                   "invariance_flags": all(c.holds for c in checks),
                   "invariance_flags_sound": all(c.holds_sound for c in checks)})
    return BoundReport(measured, bound, inputs)


# --------------------------------------------------------------------------
# structural stability
# --------------------------------------------------------------------------

@dataclass
class StructuralOutcome:
    report: BoundReport
    flags_hold: bool
    deviation_ok: bool
    worst_deviation_ratio: float
    tree_diff: int


def structural_trial(setup: Setup, x, depth: int, tau: float, eps: float, seed=None,
                     trial: int = 0) -> StructuralOutcome:
    """Eligible relative perturbation of the shift, compared with the structural bound."""
    x = np.asarray(x, dtype=float)
    pert = perturb_structure_relative(setup.shift, random_relative_delta(setup.shift.n, eps, seed))
    if not pert.eligible(eps):
        raise RuntimeError("generated perturbation is not eligible")
    op_t = setup.bank.operator(pert.shifted, backend=setup.backend)
    psi, tree = pgst(setup.op, x, None, depth, tau)
    psi_t = transform_with_tree(op_t, x, None, tree)
    _, tree_t = pgst(op_t, x, None, depth, tau)
    B, C0 = setup.B, setup.C0
    x_norm = float(np.linalg.norm(x))
    checks = lemma3_checks(setup.op, op_t, x, tree, eps, C0, B, tau, pert)
    ratios = [c.extra["deviation"] / c.extra["deviation_bound"] for c in checks
              if c.extra["deviation_bound"] > 0]
    report = BoundReport(feature_distance(psi, psi_t), bound_pgst_structural(eps, C0, B, tree.layer_counts, x_norm),
                         {"trial": trial, "kind": "relative", "eps": eps, "C0": C0, "B": B,
                          "F": tree.layer_counts, "x_norm": x_norm, "delta_norm": pert.delta_norm})
    diff = tree_diff(tree, tree_t)[2]
    report.inputs["tree_diff"] = diff
    return StructuralOutcome(
        report,
        flags_hold=all(c.holds for c in checks),
        deviation_ok=all(c.extra["deviation_ok"] for c in checks),
        worst_deviation_ratio=max(ratios, default=0.0),
        tree_diff=diff,
    )


def eigen_noise_trial(setup: Setup, x, depth: int, tau: float, snr_db: float, mode: str,
                      seed=None, trial: int = 0) -> BoundReport:
    """Eigenvalue-noise perturbation of the shift. No bound applies, so ``bound`` is NaN."""
    pert = perturb_structure_eigen(setup.shift, setup.spectrum, snr_db, mode, seed)
    op_t = setup.bank.operator(pert.shifted, backend=setup.backend)
    psi, tree = pgst(setup.op, x, None, depth, tau)
    psi_t = transform_with_tree(op_t, x, None, tree)
    _, tree_t = pgst(op_t, x, None, depth, tau)
    return BoundReport(feature_distance(psi, psi_t), math.nan,
                       {"trial": trial, "kind": "eigenvalue_noise", "mode": mode, "snr_db": snr_db,
                        "F": tree.layer_counts, "tree_diff": tree_diff(tree, tree_t)[2]})


# --------------------------------------------------------------------------
# sensitivity
# --------------------------------------------------------------------------

@dataclass
class SensitivityPair:
    snr_db: float
    energy: float
    localized_index: int
    tree: ScatteringTree
    tree_random: ScatteringTree
    tree_localized: ScatteringTree

    @property
    def diff_random(self) -> int:
        return tree_diff(self.tree, self.tree_random)[2]

    @property
    def diff_localized(self) -> int:
        return tree_diff(self.tree, self.tree_localized)[2]


def sensitivity_pair(setup: Setup, x, depth: int, tau: float, snr_db: float, seed=None) -> SensitivityPair:
    """Random and localized input noise of the same energy, with the resulting trees."""
    x = np.asarray(x, dtype=float)
    rng = np.random.default_rng(seed)
    eps = snr_to_energy(x, snr_db)
    d_rand = perturb_random(setup.spectrum, eps, rng)
    d_loc = perturb_localized(setup.spectrum, eps, int(rng.integers(setup.spectrum.n)), rng)
    _, tree = pgst(setup.op, x, None, depth, tau)
    _, t_rand = pgst(setup.op, x + d_rand.delta, None, depth, tau)
    _, t_loc = pgst(setup.op, x + d_loc.delta, None, depth, tau)
    return SensitivityPair(snr_db, eps, d_loc.index, tree, t_rand, t_loc)


# --------------------------------------------------------------------------
# runtime
# --------------------------------------------------------------------------

def time_transforms(setup: Setup, x, depth: int, tau: float, repeats: int = 5,
                    topk: int | None = None) -> dict:
    """Best-of-``repeats`` wall times of the full and pruned transforms on one signal."""
    def best(fn):
        times = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            out = fn()
            times.append(time.perf_counter() - t0)
        return min(times), out

    setup.op.applications = 0
    t_gst, (_, full) = best(lambda: gst(setup.op, x, None, depth))
    apps_gst = setup.op.applications // repeats
    setup.op.applications = 0
    t_pgst, (_, tree) = best(lambda: pgst(setup.op, x, None, depth, tau, topk=topk))
    apps_pgst = setup.op.applications // repeats
    return {"tau": tau, "L": depth, "J": setup.bank.J, "gst_seconds": t_gst, "pgst_seconds": t_pgst,
            "speedup": t_gst / t_pgst if t_pgst > 0 else math.inf,
            "gst_nodes": len(full), "pgst_nodes": len(tree), "F": tree.layer_counts,
            "gst_filter_applications": apps_gst, "pgst_filter_applications": apps_pgst}


# --------------------------------------------------------------------------
# source localization
# --------------------------------------------------------------------------

@dataclass
class SourceTask:
    shift: GraphShift
    signals: np.ndarray  # (n_samples, N)
    labels: np.ndarray
    sources: np.ndarray


def source_localization(blocks=(30, 90), p_in: float = 0.3, p_out: float = 0.02, n_samples: int = 200,
                        steps: int = 3, snr_db: float = 20.0, seed: int = 0,
                        kind: str = "normalized_laplacian") -> SourceTask:
    """Diffused single-node sources on an SBM; the label is the block of the source.

    Each sample is ``T^steps e_s`` with the lazy diffusion ``T = (I + A_norm) / 2``
    plus white noise at ``snr_db``.
    """
    rng = np.random.default_rng(seed)
    edges, n = make_sbm(blocks, p_in, p_out, rng)
    adj = build_shift(edges, n, "normalized_adjacency").matrix
    node_block = sbm_labels(blocks)
    sources = rng.integers(n, size=n_samples)
    signals = np.zeros((n_samples, n))
    for i, s in enumerate(sources):
        z = np.zeros(n)
        z[s] = 1.0
        for _ in range(steps):
            z = 0.5 * (z + adj @ z)
        noise = rng.standard_normal(n)
        noise *= math.sqrt(snr_to_energy(z, snr_db)) / np.linalg.norm(noise)
        signals[i] = z + noise
    return SourceTask(build_shift(edges, n, kind), signals, node_block[sources], sources)


def nearest_centroid(train_x, train_y, test_x) -> np.ndarray:
    """Predict the class whose training centroid is closest (ties go to the first class in sorted order)."""
    train_x = np.asarray(train_x, dtype=float)
    test_x = np.asarray(test_x, dtype=float)
    train_y = np.asarray(train_y)
    if train_x.shape[0] != len(train_y):
        raise ValueError(f"{train_x.shape[0]} training rows but {len(train_y)} labels")
    if train_x.ndim != 2 or test_x.ndim != 2 or train_x.shape[1] != test_x.shape[1]:
        raise ValueError("train and test feature dimensions differ")
    classes = np.unique(train_y)
    centroids = np.array([train_x[train_y == c].mean(axis=0) for c in classes])
    d = ((test_x[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return classes[np.argmin(d, axis=1)]


def accuracy(pred, truth) -> float:
    pred, truth = np.asarray(pred), np.asarray(truth)
    if len(pred) != len(truth):
        raise ValueError("prediction/label length mismatch")
    return float(np.mean(pred == truth))
