"""Graph scattering transforms, full and pruned.

A node of the scattering tree is identified by its path, the tuple of
branch indices ``(j1, ..., jl)`` (1-based) of the filters applied on the way
down from the root; the root is the empty path. Layers are numbered
``0 .. L-1``, so a full tree of depth ``L`` has ``sum_{l<L} J^l`` nodes.

The pruned transform expands a child ``(p, j)`` only if its energy ratio
``||z_(p,j)||^2 / ||z_p||^2`` is strictly above ``tau``. This decision is the
maximiser of the per-node spectral alignment objective and needs only vector
norms, never a graph Fourier transform.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .filters import BankOperator, FilterBank
from .graph import CHEB_ORDER

Path = tuple[int, ...]

ROOT: Path = ()
NODE_BUDGET = 1_000_000
RULES = ("mean_ratio", "union", "majority")


class BudgetExceeded(RuntimeError):
    """The transform would create more tree nodes than the configured budget."""


def path_key(path: Path) -> tuple:
    """Sort key giving breadth-first, then lexicographic order."""
    return (len(path), path)


def path_str(path: Path) -> str:
    return "-".join(map(str, path)) if path else "0"


def parse_path(text: str) -> Path:
    text = text.strip()
    if text in ("0", ""):
        return ROOT
    return tuple(int(t) for t in text.split("-"))


@dataclass(frozen=True)
class ScatteringNode:
    path: Path
    energy_ratio: float
    active: bool
    phi: float | None = None
    z: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def layer(self) -> int:
        return len(self.path)


@dataclass
class ScatteringTree:
    """Evaluated nodes of a (pruned) scattering tree.

    ``nodes`` holds every node whose pruning decision was taken: active nodes
    and the pruned children of active non-leaf nodes. ``tau`` is ``None`` for
    a full GST tree.
    """

    nodes: dict[Path, ScatteringNode]
    J: int
    L: int
    tau: float | None = None

    @property
    def active_paths(self) -> list[Path]:
        return sorted((p for p, n in self.nodes.items() if n.active), key=path_key)

    @property
    def layer_counts(self) -> list[int]:
        counts = [0] * self.L
        for p, n in self.nodes.items():
            if n.active:
                counts[len(p)] += 1
        return counts

    def __len__(self) -> int:
        return sum(1 for n in self.nodes.values() if n.active)

    def is_active(self, path: Path) -> bool:
        node = self.nodes.get(path)
        return node is not None and node.active

    def is_prefix_closed(self) -> bool:
        return all(self.is_active(p[:-1]) for p in self.active_paths if p)

    def structure(self) -> "ScatteringTree":
        """Copy without per-signal features."""
        nodes = {p: replace(n, z=None, phi=None) for p, n in self.nodes.items()}
        return ScatteringTree(nodes, self.J, self.L, self.tau)

    def same_structure(self, other: "ScatteringTree") -> bool:
        return set(self.active_paths) == set(other.active_paths)


@dataclass(frozen=True)
class FeatureMap:
    """Scattering coefficients in breadth-first, lexicographic path order."""

    paths: tuple[Path, ...]
    values: np.ndarray

    def __len__(self) -> int:
        return len(self.paths)

    def as_dict(self) -> dict[Path, float]:
        return dict(zip(self.paths, self.values.tolist()))

    @classmethod
    def from_dict(cls, coeffs: dict[Path, float]) -> "FeatureMap":
        paths = tuple(sorted(coeffs, key=path_key))
        return cls(paths, np.array([coeffs[p] for p in paths], dtype=float))


def _operator(graph, bank: FilterBank | None, backend: str, order: int) -> BankOperator:
    # anything with .apply(z) -> (J, N), .J and .n acts as a prebuilt operator
    if isinstance(graph, BankOperator) or hasattr(graph, "apply"):
        if bank is not None and bank.J != graph.J:
            raise ValueError(f"operator has J={graph.J} but bank has J={bank.J}")
        return graph
    if bank is None:
        raise ValueError("a filter bank is needed unless an operator is passed")
    return bank.operator(graph, backend=backend, order=order)


def _signal(op: BankOperator, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (op.n,):
        raise ValueError(f"signal must be a length-{op.n} vector, got shape {x.shape}")
    return x


def scatter_node(graph, bank: FilterBank | None, z_parent, backend: str = "spectral") -> np.ndarray:
    """Children ``|h_j(S) z_parent|`` for ``j = 1..J``, stacked as a ``(J, N)`` array."""
    op = _operator(graph, bank, backend, CHEB_ORDER)
    return np.abs(op.apply(_signal(op, z_parent)))


def aggregate(z) -> float:
    """Mean pooling ``U(z) = (1/N) sum_n z_n``."""
    z = np.asarray(z, dtype=float)
    if z.size == 0:
        raise ValueError("cannot aggregate an empty vector")
    return float(z.mean())


def energy_ratios(z_parent, children) -> np.ndarray:
    parent = float(np.dot(z_parent, z_parent))
    children = np.asarray(children, dtype=float)
    if parent == 0.0:
        return np.zeros(len(children))
    return np.einsum("jn,jn->j", children, children) / parent


def prune_decide(z_parent, children, tau: float) -> np.ndarray:
    """Activity flags: child ``j`` survives iff its energy ratio is strictly above ``tau``."""
    if tau < 0:
        raise ValueError("tau must be non-negative")
    if not np.any(np.asarray(z_parent)):
        raise ValueError("cannot take pruning decisions below a zero-energy node")
    return energy_ratios(z_parent, children) > tau


def topk_prune(z_parent, children, k: int) -> np.ndarray:
    """Keep the ``k`` children with the largest energy ratios (ties go to the smaller index)."""
    ratios = energy_ratios(z_parent, children)
    if not 1 <= k <= len(ratios):
        raise ValueError(f"k must be in [1, {len(ratios)}]")
    flags = np.zeros(len(ratios), dtype=bool)
    flags[np.argsort(-ratios, kind="stable")[:k]] = True
    return flags


def full_size(J: int, L: int) -> int:
    """Node count ``sum_{l<L} J^l`` of a full tree."""
    return sum(J**l for l in range(L))


def gst(graph, x, bank: FilterBank | None, depth: int, backend: str = "spectral",
        order: int = CHEB_ORDER, node_budget: int = NODE_BUDGET) -> tuple[FeatureMap, ScatteringTree]:
    """Full scattering transform with layers ``0 .. depth-1``.

    Raises :class:`BudgetExceeded` when the deepest layer would have more
    than ``node_budget`` nodes (``J^(depth-1)``).
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    op = _operator(graph, bank, backend, order)
    x = _signal(op, x)
    J = op.J
    if J ** (depth - 1) > node_budget:
        raise BudgetExceeded(f"full tree with J={J}, L={depth} has {J ** (depth - 1)} leaves "
                             f"(budget {node_budget})")
    nodes = {ROOT: ScatteringNode(ROOT, 1.0, True, aggregate(x), x)}
    frontier = [(ROOT, x)]
    for _ in range(depth - 1):
        nxt = []
        for path, z in frontier:
            children = np.abs(op.apply(z))
            ratios = energy_ratios(z, children)
            for j in range(J):
                child = path + (j + 1,)
                nodes[child] = ScatteringNode(child, float(ratios[j]), True, aggregate(children[j]), children[j])
                nxt.append((child, children[j]))
        frontier = nxt
    tree = ScatteringTree(nodes, J, depth, None)
    paths = tuple(sorted(nodes, key=path_key))
    return FeatureMap(paths, np.array([nodes[p].phi for p in paths])), tree


def pgst(graph, x, bank: FilterBank | None, depth: int, tau: float, topk: int | None = None,
         backend: str = "spectral", order: int = CHEB_ORDER,
         node_budget: int = NODE_BUDGET) -> tuple[FeatureMap, ScatteringTree]:
    """Pruned scattering transform.

    Nodes are expanded depth-first and only while active. With ``topk`` set,
    a child must also be among the ``topk`` largest ratios of its siblings.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    op = _operator(graph, bank, backend, order)
    x = _signal(op, x)
    if not np.any(x):
        raise ValueError("pruned transform needs a nonzero input signal")
    J = op.J
    nodes = {ROOT: ScatteringNode(ROOT, 1.0, True, aggregate(x), x)}
    n_active = 1
    stack = [(ROOT, x)]
    while stack:
        path, z = stack.pop()
        if len(path) == depth - 1:
            continue
        children = np.abs(op.apply(z))
        ratios = energy_ratios(z, children)
        flags = ratios > tau
        if topk is not None:
            flags &= topk_prune(z, children, topk)
        for j in range(J):
            child = path + (j + 1,)
            if flags[j]:
                nodes[child] = ScatteringNode(child, float(ratios[j]), True, aggregate(children[j]), children[j])
                n_active += 1
            else:
                nodes[child] = ScatteringNode(child, float(ratios[j]), False)
        if n_active > node_budget:
            raise BudgetExceeded(f"pruned tree exceeded the node budget ({node_budget})")
        # reversed so branch 1 is expanded first
        for j in reversed(range(J)):
            if flags[j]:
                stack.append((path + (j + 1,), children[j]))
    tree = ScatteringTree(nodes, J, depth, tau)
    paths = tuple(tree.active_paths)
    return FeatureMap(paths, np.array([nodes[p].phi for p in paths])), tree


def propagate(graph, x, tree: ScatteringTree, bank: FilterBank | None = None,
              backend: str = "spectral", order: int = CHEB_ORDER) -> dict[Path, np.ndarray]:
    """Node features ``z_p`` along the active paths of a fixed tree."""
    op = _operator(graph, bank, backend, order)
    if tree.J != op.J:
        raise ValueError(f"tree has J={tree.J} but the filter bank has J={op.J}")
    x = _signal(op, x)
    feats = {ROOT: x}
    children: dict[Path, np.ndarray] = {}
    for path in tree.active_paths:
        if not path:
            continue
        parent = path[:-1]
        if parent not in feats:
            raise ValueError(f"tree is not prefix-closed at {path_str(path)}")
        if parent not in children:
            children[parent] = np.abs(op.apply(feats[parent]))
        feats[path] = children[parent][path[-1] - 1]
    return feats


def transform_with_tree(graph, x, bank: FilterBank | None, tree: ScatteringTree,
                        depth: int | None = None, backend: str = "spectral",
                        order: int = CHEB_ORDER) -> FeatureMap:
    """Coefficients on a fixed tree's active paths; no pruning decisions are taken."""
    if depth is not None and depth != tree.L:
        raise ValueError(f"tree has L={tree.L} but depth={depth} was requested")
    feats = propagate(graph, x, tree, bank, backend, order)
    paths = tuple(tree.active_paths)
    return FeatureMap(paths, np.array([aggregate(feats[p]) for p in paths]))


def fit_tree(items: Sequence[tuple], bank: FilterBank | None, depth: int, tau: float,
             rule: str = "mean_ratio", backend: str = "spectral", order: int = CHEB_ORDER,
             node_budget: int = NODE_BUDGET) -> ScatteringTree:
    """Consensus pruned-tree structure over a training set of ``(graph, x)`` pairs.

    Decisions are taken layer by layer, so a node is only considered when its
    parent is already in the consensus tree:

    ``mean_ratio``
        active iff the energy ratio averaged over the training set exceeds ``tau``;
    ``union``
        active iff it exceeds ``tau`` for at least one example;
    ``majority``
        active iff it exceeds ``tau`` for more than half of the examples.

    The stored ``energy_ratio`` of a node is the training-set mean.
    """
    if rule not in RULES:
        raise ValueError(f"unknown consensus rule {rule!r}")
    if not items:
        raise ValueError("empty training set")
    ops, signals = [], []
    for graph, x in items:
        op = _operator(graph, bank, backend, order)
        x = _signal(op, x)
        if not np.any(x):
            raise ValueError("training signals must be nonzero")
        ops.append(op)
        signals.append(x)
    J = ops[0].J
    m = len(items)
    nodes = {ROOT: ScatteringNode(ROOT, 1.0, True)}
    frontier = {ROOT: signals}
    for _ in range(depth - 1):
        nxt = {}
        for path in sorted(frontier, key=path_key):
            feats = frontier[path]
            kids = [np.abs(op.apply(z)) for op, z in zip(ops, feats)]
            ratios = np.array([energy_ratios(z, c) for z, c in zip(feats, kids)])  # (m, J)
            above = ratios > tau
            if rule == "mean_ratio":
                flags = ratios.mean(axis=0) > tau
            elif rule == "union":
                flags = above.any(axis=0)
            else:
                flags = above.sum(axis=0) > m / 2
            mean = ratios.mean(axis=0)
            for j in range(J):
                child = path + (j + 1,)
                nodes[child] = ScatteringNode(child, float(mean[j]), bool(flags[j]))
                if flags[j]:
                    nxt[child] = [c[j] for c in kids]
        if sum(n.active for n in nodes.values()) > node_budget:
            raise BudgetExceeded(f"consensus tree exceeded the node budget ({node_budget})")
        frontier = nxt
    return ScatteringTree(nodes, J, depth, tau)


def feature_distance(a: FeatureMap, b: FeatureMap, normalize: bool = True) -> float:
    """``||a - b|| / sqrt(|a|)`` over the paths of ``a`` (paths missing from ``b`` count as 0)."""
    other = b.as_dict()
    diff = np.array([v - other.get(p, 0.0) for p, v in zip(a.paths, a.values)])
    dist = float(np.linalg.norm(diff))
    return float(dist / np.sqrt(len(a))) if normalize else dist


def tree_from_paths(active: Iterable[Path], J: int, L: int, tau: float | None = None) -> ScatteringTree:
    """Structure-only tree with the given active paths (root implied)."""
    active = set(map(tuple, active)) | {ROOT}
    nodes = {}
    for p in active:
        nodes[p] = ScatteringNode(p, float("nan"), True)
    for p in list(active):
        if len(p) < L - 1:
            for j in range(1, J + 1):
                c = p + (j,)
                if c not in active:
                    nodes[c] = ScatteringNode(c, float("nan"), False)
    tree = ScatteringTree(nodes, J, L, tau)
    if not tree.is_prefix_closed():
        raise ValueError("active paths are not prefix-closed")
    return tree
