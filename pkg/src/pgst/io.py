"""Text-format I/O (TSV edge lists, CSV signals and features, JSON/DOT trees)
and synthetic graph generators."""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path as FsPath
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .filters import FilterBank
from .graph import GraphShift, build_shift
from .scattering import FeatureMap, ScatteringNode, ScatteringTree, parse_path, path_key, path_str

EDGE_FORMATS = ("tsv_uvw", "tsv_uv")


class DataError(ValueError):
    """Malformed input file; the message carries ``path:line``."""


def fmt_float(v: float) -> str:
    return format(float(v), ".17g")


# --------------------------------------------------------------------------
# edge lists and signals
# --------------------------------------------------------------------------

def load_edge_list(path, fmt: str = "tsv_uvw", n: int | None = None) -> tuple[list[tuple[int, int, float]], int]:
    """Read ``u<TAB>v[<TAB>w]`` lines; ``#`` lines and blank lines are skipped.

    Returns the edge tuples and ``n`` (``1 + max index`` unless given).
    With ``tsv_uv`` every edge has weight 1; with ``tsv_uvw`` the weight
    column is optional and defaults to 1.
    """
    if fmt not in EDGE_FORMATS:
        raise ValueError(f"unknown edge-list format {fmt!r}")
    edges = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = text.split("\t") if "\t" in text else text.split()
            want = (2,) if fmt == "tsv_uv" else (2, 3)
            if len(parts) not in want:
                raise DataError(f"{path}:{lineno}: expected {' or '.join(map(str, want))} fields, got {len(parts)}")
            try:
                u, v = int(parts[0]), int(parts[1])
                w = float(parts[2]) if len(parts) == 3 else 1.0
            except ValueError:
                raise DataError(f"{path}:{lineno}: cannot parse {text!r}") from None
            if u < 0 or v < 0:
                raise DataError(f"{path}:{lineno}: negative node index")
            if not math.isfinite(w):
                raise DataError(f"{path}:{lineno}: non-finite weight")
            edges.append((u, v, w))
    if not edges:
        raise DataError(f"{path}: no edges")
    inferred = 1 + max(max(u, v) for u, v, _ in edges)
    if n is None:
        n = inferred
    elif n < inferred:
        raise DataError(f"{path}: node index {inferred - 1} out of range for n={n}")
    return edges, n


def save_edge_list(path, edges: Sequence, fmt: str = "tsv_uvw") -> None:
    with open(path, "w") as fh:
        for e in edges:
            u, v = int(e[0]), int(e[1])
            if fmt == "tsv_uv":
                fh.write(f"{u}\t{v}\n")
            else:
                w = float(e[2]) if len(e) > 2 else 1.0
                fh.write(f"{u}\t{v}\t{fmt_float(w)}\n")


def load_signals(path, n: int | None = None) -> np.ndarray:
    """Read an ``N x F`` numeric CSV (no header); column ``f`` is signal ``x_f``."""
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            try:
                vals = []
                for cell in row:
                    if not cell.strip():
                        raise DataError(f"{path}:{lineno}: empty cell")
                    vals.append(float(cell))
            except ValueError as exc:
                if isinstance(exc, DataError):
                    raise
                raise DataError(f"{path}:{lineno}: non-numeric cell in {row!r}") from None
            if rows and len(vals) != len(rows[0]):
                raise DataError(f"{path}:{lineno}: expected {len(rows[0])} columns, got {len(vals)}")
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no rows")
    x = np.array(rows, dtype=float)
    if n is not None and x.shape[0] != n:
        raise DataError(f"{path}: {x.shape[0]} rows but the graph has {n} nodes")
    if not np.all(np.isfinite(x)):
        raise DataError(f"{path}: non-finite values")
    return x


def save_signals(path, x) -> None:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    with open(path, "w") as fh:
        for row in x:
            fh.write(",".join(fmt_float(v) for v in row) + "\n")


# --------------------------------------------------------------------------
# generators
# --------------------------------------------------------------------------

def knn_graph(points, k: int) -> tuple[list[tuple[int, int, float]], int]:
    """Undirected k-nearest-neighbour graph (union symmetrization, unit weights).

    Distance ties are broken by the smaller node index.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2:
        raise ValueError("points must be an M x D array")
    m = pts.shape[0]
    if not 1 <= k < m:
        raise ValueError(f"need 1 <= k < M, got k={k}, M={m}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("non-finite coordinates")
    dist = cdist(pts, pts)
    idx = np.arange(m)
    edges = set()
    for u in range(m):
        d = dist[u].copy()
        d[u] = np.inf
        order = np.lexsort((idx, d))[:k]
        for v in order:
            edges.add((min(u, int(v)), max(u, int(v))))
    return [(u, v, 1.0) for u, v in sorted(edges)], m


def _sample_upper(prob: np.ndarray, rng) -> list[tuple[int, int, float]]:
    n = prob.shape[0]
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(len(iu)) < prob[iu, ju]
    return [(int(u), int(v), 1.0) for u, v in zip(iu[keep], ju[keep])]


def make_sbm(blocks: Sequence[int], p_in: float, p_out: float, seed=None) -> tuple[list, int]:
    """Stochastic block model with per-block sizes ``blocks``."""
    if not (0 <= p_in <= 1 and 0 <= p_out <= 1):
        raise ValueError("probabilities must lie in [0, 1]")
    labels = sbm_labels(blocks)
    prob = np.where(labels[:, None] == labels[None, :], p_in, p_out)
    return _sample_upper(prob, np.random.default_rng(seed)), len(labels)


def sbm_labels(blocks: Sequence[int]) -> np.ndarray:
    return np.repeat(np.arange(len(blocks)), blocks)


def make_er(n: int, p: float, seed=None) -> tuple[list, int]:
    """Erdos-Renyi graph ``G(n, p)``."""
    if not 0 <= p <= 1:
        raise ValueError("p must lie in [0, 1]")
    return _sample_upper(np.full((n, n), p), np.random.default_rng(seed)), n


# --------------------------------------------------------------------------
# feature maps
# --------------------------------------------------------------------------

def save_feature_map(fmap: FeatureMap, path) -> None:
    """Long format: header ``path,coefficient``, one row per tree node."""
    with open(path, "w") as fh:
        fh.write("path,coefficient\n")
        for p, v in zip(fmap.paths, fmap.values):
            fh.write(f"{path_str(p)},{fmt_float(v)}\n")


def load_feature_map(path) -> FeatureMap:
    coeffs = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["path", "coefficient"]:
            raise DataError(f"{path}:1: expected header 'path,coefficient'")
        for lineno, row in enumerate(reader, start=2):
            try:
                coeffs[parse_path(row[0])] = float(row[1])
            except (ValueError, IndexError):
                raise DataError(f"{path}:{lineno}: malformed row {row!r}") from None
    return FeatureMap.from_dict(coeffs)


def save_feature_matrix(maps: Sequence[FeatureMap], path) -> None:
    """Wide format: header of path strings, one row per signal (all maps share paths)."""
    if not maps:
        raise ValueError("no feature maps")
    paths = maps[0].paths
    for m in maps:
        if m.paths != paths:
            raise ValueError("feature maps have different paths; use a fixed tree")
    with open(path, "w") as fh:
        fh.write(",".join(path_str(p) for p in paths) + "\n")
        for m in maps:
            fh.write(",".join(fmt_float(v) for v in m.values) + "\n")


def load_feature_matrix(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise DataError(f"{path}: empty file")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} columns, got {len(row)}")
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric cell") from None
    return header, np.array(rows, dtype=float).reshape(len(rows), len(header))


def load_labels(path) -> list[str]:
    with open(path) as fh:
        return [line.strip() for line in fh if line.strip() and not line.startswith("#")]


# --------------------------------------------------------------------------
# trees and banks
# --------------------------------------------------------------------------

def _num(v):
    return None if v is None or (isinstance(v, float) and not math.isfinite(v)) else float(v)


def tree_to_dict(tree: ScatteringTree) -> dict:
    paths = sorted(tree.nodes, key=path_key)
    return {
        "paths": [list(p) for p in paths],
        "flags": [int(tree.nodes[p].active) for p in paths],
        "ratios": [_num(tree.nodes[p].energy_ratio) for p in paths],
        "layer_counts": tree.layer_counts,
        "tau": _num(tree.tau),
        "J": tree.J,
        "L": tree.L,
    }


def tree_from_dict(d: dict) -> ScatteringTree:
    try:
        nodes = {}
        for p, f, r in zip(d["paths"], d["flags"], d["ratios"]):
            p = tuple(int(i) for i in p)
            nodes[p] = ScatteringNode(p, float("nan") if r is None else float(r), bool(f))
        tree = ScatteringTree(nodes, int(d["J"]), int(d["L"]), None if d["tau"] is None else float(d["tau"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed tree JSON: {exc}") from None
    if not tree.is_prefix_closed():
        raise DataError("tree JSON is not prefix-closed")
    return tree


def tree_to_dot(tree: ScatteringTree, name: str = "pgst") -> str:
    """Graphviz digraph; pruned branches and their nodes are drawn dashed."""
    lines = [f"digraph {name} {{", "  node [shape=circle, fontsize=10];"]
    paths = sorted(tree.nodes, key=path_key)
    for p in paths:
        node = tree.nodes[p]
        style = "solid" if node.active else "dashed"
        lines.append(f'  "{path_str(p)}" [label="{path_str(p)}", style={style}];')
    for p in paths:
        if p:
            style = "solid" if tree.nodes[p].active else "dashed"
            lines.append(f'  "{path_str(p[:-1])}" -> "{path_str(p)}" [style={style}];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def save_tree(tree: ScatteringTree, path, format: str = "json") -> None:
    if format == "json":
        text = json.dumps(tree_to_dict(tree), indent=1) + "\n"
    elif format == "dot":
        text = tree_to_dot(tree)
    elif format == "csv":
        text = "path,flag,ratio\n" + "".join(
            f"{path_str(p)},{int(tree.nodes[p].active)},{fmt_float(tree.nodes[p].energy_ratio)}\n"
            for p in sorted(tree.nodes, key=path_key))
    else:
        raise ValueError(f"unknown tree format {format!r}")
    with open(path, "w") as fh:
        fh.write(text)


def load_tree(path) -> ScatteringTree:
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{exc.lineno}: {exc.msg}") from None
    return tree_from_dict(d)


def save_bank(bank: FilterBank, path) -> None:
    with open(path, "w") as fh:
        json.dump(bank.to_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_bank(path) -> FilterBank:
    with open(path) as fh:
        return FilterBank.from_dict(json.load(fh))


# --------------------------------------------------------------------------
# datasets
# --------------------------------------------------------------------------

@dataclass
class Dataset:
    """Graphs with node signals and optional labels.

    On disk a dataset is a directory holding ``<name>.edges.tsv`` and
    ``<name>.signal.csv`` per item, plus an optional ``labels.csv`` with
    ``name,label`` rows.
    """

    names: list[str]
    shifts: list[GraphShift]
    signals: list[np.ndarray]
    labels: list[str] | None = None
    provenance: str = ""
    extra: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.names)

    def items(self):
        return list(zip(self.shifts, self.signals))


def load_dataset(directory, kind: str = "normalized_laplacian", column: int = 0) -> Dataset:
    directory = FsPath(directory)
    if not directory.is_dir():
        raise DataError(f"{directory}: not a directory")
    names = sorted(p.name[: -len(".edges.tsv")] for p in directory.glob("*.edges.tsv"))
    if not names:
        raise DataError(f"{directory}: no *.edges.tsv files")
    shifts, signals = [], []
    for name in names:
        sig_path = directory / f"{name}.signal.csv"
        if not sig_path.exists():
            raise DataError(f"{sig_path}: missing signal file")
        x = load_signals(sig_path)
        edges, n = load_edge_list(directory / f"{name}.edges.tsv", n=x.shape[0])
        shifts.append(build_shift(edges, n, kind))
        signals.append(x[:, column])
    labels = None
    lab_path = directory / "labels.csv"
    if lab_path.exists():
        table = {}
        with open(lab_path, newline="") as fh:
            for lineno, row in enumerate(csv.reader(fh), start=1):
                if len(row) != 2:
                    raise DataError(f"{lab_path}:{lineno}: expected 'name,label'")
                table[row[0]] = row[1]
        missing = [n for n in names if n not in table]
        if missing:
            raise DataError(f"{lab_path}: no label for {missing[0]}")
        labels = [table[n] for n in names]
    return Dataset(names, shifts, signals, labels, provenance=os.fspath(directory))


def save_dataset(directory, names: Sequence[str], edge_lists: Sequence, signals: Sequence,
                 labels: Sequence | None = None) -> None:
    directory = FsPath(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, edges, x in zip(names, edge_lists, signals):
        save_edge_list(directory / f"{name}.edges.tsv", edges)
        save_signals(directory / f"{name}.signal.csv", x)
    if labels is not None:
        with open(directory / "labels.csv", "w") as fh:
            for name, lab in zip(names, labels):
                fh.write(f"{name},{lab}\n")
