"""Command-line interface: ``pgst <command> [options]``.

Commands: transform, fit, stability, sensitivity, bench, classify, generate.
Options can also come from a ``key = value`` config file (``--config``);
explicit flags override file values. Every run writes ``manifest.json`` with
the resolved configuration into ``--out``.

Exit codes: 0 success, 2 input error, 3 node budget exceeded.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from pathlib import Path as FsPath

import numpy as np

from . import __version__
from .experiments import (
    accuracy,
    eigen_noise_trial,
    make_setup,
    nearest_centroid,
    sensitivity_pair,
    signal_trial,
    source_localization,
    structural_trial,
    time_transforms,
)
from .filters import FAMILY_ALIASES
from .graph import KINDS, build_shift
from .io import (
    DataError,
    load_dataset,
    load_edge_list,
    load_feature_matrix,
    load_labels,
    load_signals,
    load_tree,
    make_er,
    make_sbm,
    save_bank,
    save_edge_list,
    save_feature_map,
    save_feature_matrix,
    save_signals,
    save_tree,
)
from .perturbation import BoundReport
from .scattering import BudgetExceeded, fit_tree, gst, path_str, pgst, transform_with_tree

EXIT_OK, EXIT_INPUT, EXIT_BUDGET = 0, 2, 3


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _float_list(text) -> list[float]:
    if isinstance(text, list):
        return text
    return [float(t) for t in str(text).replace(" ", "").split(",") if t]


def _int_list(text) -> list[int]:
    return [int(v) for v in _float_list(text)]


def _wavelet(text) -> str:
    t = str(text).strip()
    return FAMILY_ALIASES.get(t, t)


# name -> (type, default, help); shared by every command and by config files
OPTIONS = {
    "wavelet": (_wavelet, "tight_hann", "wavelet family: ds, mcs or ths"),
    "J": (int, 5, "number of filters"),
    "L": (int, 5, "number of layers (0 .. L-1)"),
    "tau": (float, 0.01, "pruning threshold"),
    "topk": (int, None, "keep at most this many children per node"),
    "full": (_bool, False, "run the full (unpruned) transform"),
    "backend": (str, "spectral", "filtering backend: spectral or poly"),
    "cheb_order": (int, 30, "Chebyshev order of the poly backend"),
    "kind": (str, "normalized_laplacian", "graph shift kind"),
    "seed": (int, 0, "random seed"),
    "snr": (_float_list, [20.0], "comma-separated SNR list in dB (inf allowed)"),
    "trials": (int, 10, "trials per SNR"),
    "mode": (str, "random", "noise mode: random or localized"),
    "perturb": (str, "signal", "perturbation: signal, relative or eigen"),
    "eps": (float, 0.01, "relative perturbation size"),
    "column": (int, 0, "signal column to use"),
    "rule": (str, "mean_ratio", "consensus rule for fit"),
    "repeats": (int, 5, "timing repeats (best of)"),
    "ablate": (str, None, "bench sweep: tau, L or J"),
    "values": (_float_list, None, "sweep values for --ablate"),
    "node_budget": (int, 1_000_000, "maximum tree size"),
}

CHOICES = {
    "wavelet": ("diffusion", "monic_cubic", "tight_hann"),
    "backend": ("spectral", "poly", "polynomial"),
    "kind": KINDS,
    "mode": ("random", "localized"),
    "perturb": ("signal", "relative", "eigen"),
    "rule": ("mean_ratio", "union", "majority"),
    "ablate": ("tau", "L", "J", None),
}


def read_config(path) -> dict:
    """Parse ``key = value`` lines (``#`` comments) into typed option values."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise DataError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in text.split("=", 1))
            key = key.replace("-", "_")
            if key not in OPTIONS:
                raise DataError(f"{path}:{lineno}: unknown option {key!r}")
            try:
                out[key] = OPTIONS[key][0](value)
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    return out


def resolve(args: argparse.Namespace) -> dict:
    """Defaults, then config file, then explicit flags."""
    cfg = {k: v[1] for k, v in OPTIONS.items()}
    if getattr(args, "config", None):
        cfg.update(read_config(args.config))
    for k in OPTIONS:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    for k, allowed in CHOICES.items():
        if cfg[k] not in allowed:
            raise DataError(f"invalid {k} {cfg[k]!r}; choose from {', '.join(a for a in allowed if a)}")
    if cfg["backend"] == "polynomial":
        cfg["backend"] = "poly"
    if cfg["J"] < 2 or cfg["L"] < 1:
        raise DataError("need J >= 2 and L >= 1")
    return cfg


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------

def _out(args) -> FsPath:
    out = FsPath(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out: FsPath, command: str, cfg: dict, inputs: dict, results: dict, timings: dict) -> None:
    manifest = {"command": command, "version": __version__, "config": cfg, "inputs": inputs,
                "results": results, "timings": timings}
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _load_graph(args, cfg, n=None):
    edges, n = load_edge_list(args.graph, n=n)
    return build_shift(edges, n, cfg["kind"])


def _load_graph_and_signals(args, cfg):
    x = load_signals(args.signals)
    shift = _load_graph(args, cfg, n=x.shape[0])
    return shift, x


def _column(x: np.ndarray, cfg) -> np.ndarray:
    c = cfg["column"]
    if not 0 <= c < x.shape[1]:
        raise DataError(f"column {c} out of range; the signal file has {x.shape[1]} columns")
    return x[:, c]


def _setup(shift, cfg):
    return make_setup(shift, cfg["wavelet"], cfg["J"], backend=cfg["backend"], order=cfg["cheb_order"])


def _transform(setup, x, cfg, tree=None):
    if tree is not None:
        return transform_with_tree(setup.op, x, None, tree), tree
    if cfg["full"]:
        return gst(setup.op, x, None, cfg["L"], node_budget=cfg["node_budget"])
    return pgst(setup.op, x, None, cfg["L"], cfg["tau"], topk=cfg["topk"], node_budget=cfg["node_budget"])


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_transform(args, cfg) -> int:
    out = _out(args)
    t0 = time.perf_counter()
    shift, x = _load_graph_and_signals(args, cfg)
    setup = _setup(shift, cfg)
    t1 = time.perf_counter()
    tree = load_tree(args.tree) if args.tree else None
    if tree is not None and (tree.J != cfg["J"] or tree.L != cfg["L"]):
        raise DataError(f"tree has (J, L) = ({tree.J}, {tree.L}) but the run uses ({cfg['J']}, {cfg['L']})")
    if args.batch:
        if tree is None and not cfg["full"]:
            raise DataError("--batch needs a fixed tree (--tree) or --full so all rows share paths")
        maps = []
        for f in range(x.shape[1]):
            fmap, t = _transform(setup, x[:, f], cfg, tree)
            maps.append(fmap)
        save_feature_matrix(maps, out / "features.csv")
        tree = t
        n_rows = len(maps)
    else:
        fmap, tree = _transform(setup, _column(x, cfg), cfg, tree)
        save_feature_map(fmap, out / "features.csv")
        n_rows = 1
    t2 = time.perf_counter()
    save_tree(tree.structure(), out / "tree.json", "json")
    save_tree(tree, out / "tree.dot", "dot")
    save_bank(setup.bank, out / "bank.json")
    results = {"tree_size": len(tree), "F": tree.layer_counts, "n_features": len(tree), "n_signals": n_rows,
               "frame_bounds": list(setup.bank.frame_bounds), "C0": setup.C0}
    _write_manifest(out, "transform", cfg, {"graph": args.graph, "signals": args.signals, "tree": args.tree},
                    results, {"setup_seconds": t1 - t0, "transform_seconds": t2 - t1})
    print(f"{len(tree)} coefficients per signal, F = {tree.layer_counts}; wrote {out / 'features.csv'}")
    return EXIT_OK


def cmd_fit(args, cfg) -> int:
    out = _out(args)
    t0 = time.perf_counter()
    if args.dataset:
        ds = load_dataset(args.dataset, kind=cfg["kind"], column=cfg["column"])
        items = [(_setup(s, cfg).op, x) for s, x in ds.items()]
        source = {"dataset": args.dataset, "items": len(ds)}
    elif args.graph and args.signals:
        shift, x = _load_graph_and_signals(args, cfg)
        op = _setup(shift, cfg).op
        items = [(op, x[:, f]) for f in range(x.shape[1])]
        source = {"graph": args.graph, "signals": args.signals, "items": len(items)}
    else:
        raise DataError("fit needs --dataset DIR or --graph and --signals")
    tree = fit_tree(items, None, cfg["L"], cfg["tau"], rule=cfg["rule"], node_budget=cfg["node_budget"])
    save_tree(tree, out / "tree.json", "json")
    save_tree(tree, out / "tree.dot", "dot")
    _write_manifest(out, "fit", cfg, source, {"tree_size": len(tree), "F": tree.layer_counts},
                    {"fit_seconds": time.perf_counter() - t0})
    print(f"consensus tree with {len(tree)} nodes, F = {tree.layer_counts}; wrote {out / 'tree.json'}")
    return EXIT_OK


def cmd_stability(args, cfg) -> int:
    out = _out(args)
    t0 = time.perf_counter()
    shift, x = _load_graph_and_signals(args, cfg)
    x = _column(x, cfg)
    setup = _setup(shift, cfg)
    reports = []
    trial = 0
    for snr in cfg["snr"]:
        for _ in range(cfg["trials"]):
            seed = (cfg["seed"], trial)
            if cfg["perturb"] == "signal":
                tau = None if cfg["full"] else cfg["tau"]
                r = signal_trial(setup, x, cfg["L"], tau, snr, cfg["mode"], seed, trial)
            elif cfg["perturb"] == "relative":
                r = structural_trial(setup, x, cfg["L"], cfg["tau"], cfg["eps"], seed, trial).report
            else:
                r = eigen_noise_trial(setup, x, cfg["L"], cfg["tau"], snr, cfg["mode"], seed, trial)
            reports.append(r)
            trial += 1
    columns = ["trial", "measured", "bound", "holds", "tree_diff"]
    text = BoundReport.to_csv(reports)
    with open(out / "stability.csv", "w") as fh:
        fh.write(_reorder_csv(text, columns))
    finite = [r for r in reports if math.isfinite(r.bound)]
    results = {"trials": len(reports), "violations": sum(not r.holds for r in finite),
               "max_tree_diff": max((r.inputs.get("tree_diff", 0) for r in reports), default=0)}
    _write_manifest(out, "stability", cfg, {"graph": args.graph, "signals": args.signals}, results,
                    {"total_seconds": time.perf_counter() - t0})
    print(f"{len(reports)} trials, {results['violations']} bound violations; wrote {out / 'stability.csv'}")
    return EXIT_OK


def _reorder_csv(text: str, first: list[str]) -> str:
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows:
        return text
    cols = first + [c for c in rows[0] if c not in first]
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def cmd_sensitivity(args, cfg) -> int:
    out = _out(args)
    t0 = time.perf_counter()
    shift, x = _load_graph_and_signals(args, cfg)
    x = _column(x, cfg)
    setup = _setup(shift, cfg)
    lines = ["trial,snr_db,energy,localized_index,diff_random,diff_localized"]
    summary = {}
    first = None
    trial = 0
    for snr in cfg["snr"]:
        diffs_r, diffs_l = [], []
        for _ in range(cfg["trials"]):
            pair = sensitivity_pair(setup, x, cfg["L"], cfg["tau"], snr, seed=(cfg["seed"], trial))
            first = first or pair
            diffs_r.append(pair.diff_random)
            diffs_l.append(pair.diff_localized)
            lines.append(f"{trial},{snr!r},{pair.energy!r},{pair.localized_index},"
                         f"{pair.diff_random},{pair.diff_localized}")
            trial += 1
        summary[repr(snr)] = {"median_random": float(np.median(diffs_r)),
                              "median_localized": float(np.median(diffs_l))}
    with open(out / "sensitivity.csv", "w") as fh:
        fh.write("\n".join(lines) + "\n")
    save_tree(first.tree, out / "tree.dot", "dot")
    save_tree(first.tree_random, out / "tree_random.dot", "dot")
    save_tree(first.tree_localized, out / "tree_localized.dot", "dot")
    _write_manifest(out, "sensitivity", cfg, {"graph": args.graph, "signals": args.signals}, summary,
                    {"total_seconds": time.perf_counter() - t0})
    for snr, s in summary.items():
        print(f"SNR {snr} dB: median tree diff random {s['median_random']:g}, localized {s['median_localized']:g}")
    return EXIT_OK


def cmd_bench(args, cfg) -> int:
    out = _out(args)
    t0 = time.perf_counter()
    shift, x = _load_graph_and_signals(args, cfg)
    x = _column(x, cfg)
    sweep = cfg["ablate"]
    if sweep is None:
        points = [cfg["tau"]]
        sweep = "tau"
    elif cfg["values"]:
        points = cfg["values"]
    else:
        points = {"tau": list(np.logspace(-4, 0, 9)), "L": [1, 2, 3, 4, 5, 6], "J": [2, 3, 4, 5, 6, 7, 8]}[sweep]
    rows = []
    setup = _setup(shift, cfg) if sweep != "J" else None
    for v in points:
        c = dict(cfg)
        c[sweep] = int(v) if sweep in ("L", "J") else float(v)
        s = setup or _setup(shift, c)
        if c["J"] ** (c["L"] - 1) > c["node_budget"]:
            raise BudgetExceeded(f"full tree with J={c['J']}, L={c['L']} exceeds the node budget")
        rows.append(time_transforms(s, x, c["L"], c["tau"], repeats=cfg["repeats"], topk=c["topk"]))
    cols = ["tau", "L", "J", "gst_nodes", "pgst_nodes", "gst_filter_applications", "pgst_filter_applications",
            "gst_seconds", "pgst_seconds", "speedup"]
    with open(out / "bench.csv", "w") as fh:
        fh.write(",".join(cols) + ",F\n")
        for r in rows:
            fh.write(",".join(repr(r[c]) for c in cols) + "," + " ".join(map(str, r["F"])) + "\n")
    _write_manifest(out, "bench", cfg, {"graph": args.graph, "signals": args.signals},
                    {"rows": len(rows), "sweep": sweep}, {"total_seconds": time.perf_counter() - t0})
    for r in rows:
        print(f"tau={r['tau']:.3g} L={r['L']} J={r['J']}: GST {r['gst_nodes']} nodes {r['gst_seconds']*1e3:.2f} ms, "
              f"pGST {r['pgst_nodes']} nodes {r['pgst_seconds']*1e3:.2f} ms, speedup {r['speedup']:.2f}")
    return EXIT_OK


def cmd_classify(args, cfg) -> int:
    out = _out(args)
    h_train, x_train = load_feature_matrix(args.train)
    h_test, x_test = load_feature_matrix(args.test)
    if h_train != h_test:
        raise DataError("train and test feature files have different columns")
    y_train, y_test = load_labels(args.train_labels), load_labels(args.test_labels)
    if len(y_train) != len(x_train):
        raise DataError(f"{args.train_labels}: {len(y_train)} labels for {len(x_train)} rows")
    if len(y_test) != len(x_test):
        raise DataError(f"{args.test_labels}: {len(y_test)} labels for {len(x_test)} rows")
    pred = nearest_centroid(x_train, y_train, x_test)
    acc = accuracy(pred, y_test)
    with open(out / "predictions.csv", "w") as fh:
        fh.write("row,predicted,label\n")
        for i, (p, y) in enumerate(zip(pred, y_test)):
            fh.write(f"{i},{p},{y}\n")
    _write_manifest(out, "classify", cfg, {"train": args.train, "test": args.test},
                    {"accuracy": acc, "n_train": len(y_train), "n_test": len(y_test)}, {})
    print(f"accuracy {acc:.4f} on {len(y_test)} test rows")
    return EXIT_OK


def cmd_generate(args, cfg) -> int:
    out = _out(args)
    rng = np.random.default_rng(cfg["seed"])
    written = []
    if args.model == "source":
        blocks = _int_list(args.blocks or "30,90")
        task = source_localization(blocks, args.p_in, args.p_out, n_samples=2 * args.samples,
                                   snr_db=cfg["snr"][0], seed=cfg["seed"])
        save_edge_list(out / "graph.tsv", _edges_of(task.shift))
        half = args.samples
        save_signals(out / "train_signals.csv", task.signals[:half].T)
        save_signals(out / "test_signals.csv", task.signals[half:].T)
        for name, lab in (("train_labels.txt", task.labels[:half]), ("test_labels.txt", task.labels[half:])):
            with open(out / name, "w") as fh:
                fh.write("".join(f"{v}\n" for v in lab))
        written = ["graph.tsv", "train_signals.csv", "test_signals.csv", "train_labels.txt", "test_labels.txt"]
    else:
        if args.model == "er":
            edges, n = make_er(args.n, args.p, rng)
        else:
            edges, n = make_sbm(_int_list(args.blocks or "40,40,40"), args.p_in, args.p_out, rng)
        save_edge_list(out / "graph.tsv", edges)
        save_signals(out / "signals.csv", rng.standard_normal((n, args.signals_count)))
        written = ["graph.tsv", "signals.csv"]
    _write_manifest(out, "generate", cfg, {"model": args.model}, {"files": written}, {})
    print(f"wrote {', '.join(written)} to {out}")
    return EXIT_OK


def _edges_of(shift):
    # recover the unit-weight adjacency pattern from the off-diagonal entries
    m = shift.matrix.tocoo()
    return [(int(u), int(v), 1.0) for u, v in zip(m.row, m.col) if u < v]


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def _add_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--out", default=".", help="output directory")
    for name, (typ, default, help_) in OPTIONS.items():
        flags = [f"--{name.replace('_', '-')}"]
        if name == "full":
            p.add_argument(*flags, dest=name, action="store_const", const=True, default=None, help=help_)
            continue
        shown = f" (default {default})" if default is not None else ""
        p.add_argument(*flags, dest=name, type=typ, default=None, help=help_ + shown)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pgst", description="Graph scattering transforms, full and pruned.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, help_, graph=True):
        p = sub.add_parser(name, help=help_)
        if graph:
            p.add_argument("--graph", required=name != "fit", help="edge list (TSV)")
            p.add_argument("--signals", required=name != "fit", help="N x F signal CSV")
        _add_options(p)
        return p

    p = command("transform", "scattering features of one signal (or every column with --batch)")
    p.add_argument("--tree", help="fixed tree JSON to transform with")
    p.add_argument("--batch", action="store_true", help="transform every signal column")
    p.set_defaults(func=cmd_transform)

    p = command("fit", "consensus tree over training signals")
    p.add_argument("--dataset", help="dataset directory (*.edges.tsv + *.signal.csv)")
    p.set_defaults(func=cmd_fit)

    command("stability", "perturbation trials against the stability bounds").set_defaults(func=cmd_stability)
    command("sensitivity", "tree changes under random vs localized noise").set_defaults(func=cmd_sensitivity)
    command("bench", "GST vs pGST timing, optionally sweeping tau, L or J").set_defaults(func=cmd_bench)

    p = command("classify", "nearest-centroid accuracy on feature matrices", graph=False)
    p.add_argument("--train", required=True)
    p.add_argument("--train-labels", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--test-labels", required=True)
    p.set_defaults(func=cmd_classify)

    p = command("generate", "write a synthetic graph and signals", graph=False)
    p.add_argument("model", choices=("er", "sbm", "source"))
    p.add_argument("--n", type=int, default=234)
    p.add_argument("--p", type=float, default=0.05)
    p.add_argument("--blocks", help="comma-separated block sizes")
    p.add_argument("--p-in", type=float, default=0.3)
    p.add_argument("--p-out", type=float, default=0.02)
    p.add_argument("--signals-count", type=int, default=1, help="signal columns (er/sbm)")
    p.add_argument("--samples", type=int, default=100, help="train and test samples each (source)")
    p.set_defaults(func=cmd_generate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve(args)
        return args.func(args, cfg)
    except BudgetExceeded as exc:
        print(f"pgst: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (DataError, ValueError, OSError) as exc:
        print(f"pgst: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
