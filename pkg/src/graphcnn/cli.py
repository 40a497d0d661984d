"""Command line entry point: ``graphcnn <subcommand> ...``.

Exit codes: 0 success, 1 gradient check failed, 2 bad input (architecture,
data or flags), 3 training hit a non-finite loss. Data goes to stdout or files,
diagnostics to stderr.
"""
from __future__ import annotations

import csv
import io as _io
import json
import sys
from contextlib import nullcontext
from pathlib import Path

import click
import numpy as np

from . import archspec
from .errors import GraphCNNError, NonFiniteLoss
from .graph import GraphSample, adjacency_from_edges
from .grid import image_to_graph
from .io import (
    load_graph_dataset,
    load_vertex_task,
    read_raw_images,
    save_graph_dataset,
    save_vertex_task,
)
from .network import instantiate
from .synth import gen_community_graph, gen_grid_dataset, gen_motif_dataset, images_to_float
from .training import TrainConfig, evaluate, grad_check, kfold_split, train

CSV_HEADER = ["epoch", "fold", "train_loss", "train_acc", "eval_acc"]
GRADCHECK_TOL = 1e-5


def _fail(message, code=2):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _single_thread(enabled):
    if not enabled:
        return nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(1)


def _dataset_shape(samples):
    c = {s.n_features for s in samples}
    l = {s.adjacency.L for s in samples}
    if len(c) != 1 or len(l) != 1:
        raise GraphCNNError("all graphs must share feature and slice counts")
    n = {s.n_vertices for s in samples}
    g = {s.grid for s in samples}
    return c.pop(), l.pop(), (n.pop() if len(n) == 1 else None), (g.pop() if len(g) == 1 else None)


@click.group()
def main():
    """Graph-CNN: vertex-domain graph convolution, embed pooling and training."""


@main.command("train")
@click.option("--arch", required=True, help="Architecture string, e.g. 2x16F-Pool8-FC32.")
@click.option("--data", "data_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--task", type=click.Choice(["graph", "vertex"]), default="graph", show_default=True)
@click.option("--folds", type=int, default=5, show_default=True,
              help="Cross-validation folds; 1 trains once (vertex task: on the file's mask).")
@click.option("--epochs", type=int, default=10, show_default=True)
@click.option("--opt", type=click.Choice(["sgd", "adam"]), default="sgd", show_default=True)
@click.option("--lr", type=float, default=0.01, show_default=True)
@click.option("--batch-size", type=int, default=32, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--deterministic", is_flag=True, help="Single-threaded BLAS and ordered accumulation.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def cmd_train(arch, data_path, task, folds, epochs, opt, lr, batch_size, seed, deterministic, out_dir):
    """Run k-fold training and write metrics.csv, summary.txt and per-fold parameters."""
    try:
        plan = archspec.parse_arch(arch)
        config = TrainConfig(optimizer=opt, learning_rate=lr, epochs=epochs, batch_size=batch_size,
                             folds=folds, seed=seed, deterministic=deterministic)
        if task == "graph":
            samples = load_graph_dataset(data_path)
        else:
            samples = [load_vertex_task(data_path)]
        if not samples:
            raise GraphCNNError("dataset is empty")
        c, l, n, grid = _dataset_shape(samples)
        if task == "graph":
            n_classes = max(2, max(int(s.label) for s in samples) + 1)
        else:
            n_classes = max(2, int(samples[0].vertex_labels.max()) + 1)
        runs = _fold_runs(samples, task, folds, seed)
    except (GraphCNNError, ValueError) as exc:
        _fail(exc)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    finals = []
    with _single_thread(deterministic):
        for fold, (train_set, eval_set) in enumerate(runs):
            try:
                net = instantiate(plan, c, l, n_classes, seed=seed + fold, n_vertices=n, grid=grid, task=task)
                metrics = train(net, train_set, config, eval_set=eval_set)
            except NonFiniteLoss as exc:
                _fail(f"fold {fold}: {exc}", code=3)
            except GraphCNNError as exc:
                _fail(exc)
            for e in range(epochs):
                writer.writerow([e, fold, repr(metrics.train_loss[e]), repr(metrics.train_acc[e]),
                                 repr(metrics.eval_acc[e])])
            finals.append(metrics.final_eval_acc)
            _save_params(out / f"fold{fold}.npz", net, plan, c, l, n, grid, n_classes, task)
    (out / "metrics.csv").write_text(buf.getvalue(), encoding="utf-8")
    accs = np.array(finals) * 100 if finals else np.array([np.nan])
    line = f"eval_acc {accs.mean():.2f} ± {accs.std():.2f} % ({len(finals)} fold{'s' if len(finals) != 1 else ''})"
    (out / "summary.txt").write_text(line + "\n", encoding="utf-8")
    click.echo(line)


def _fold_runs(samples, task, folds, seed):
    if task == "graph":
        if folds == 1:
            return [(samples, samples)]
        return [([samples[i] for i in tr], [samples[i] for i in te])
                for tr, te in kfold_split(len(samples), folds, seed)]
    g = samples[0]
    if folds == 1:
        return [(g, g)]
    runs = []
    for tr, te in kfold_split(g.n_vertices, folds, seed):
        mask = np.zeros(g.n_vertices, dtype=np.int64)
        mask[tr] = 1
        fold_graph = GraphSample(g.vertices, g.adjacency, vertex_labels=g.vertex_labels, mask=mask)
        runs.append((fold_graph, fold_graph))
    return runs


def _save_params(path, net, plan, c, l, n, grid, n_classes, task):
    meta = {"arch": archspec.render_arch(plan), "n_features": c, "n_slices": l, "n_vertices": n,
            "grid": None if grid is None else [grid.height, grid.width, grid.mode],
            "n_classes": n_classes, "task": task}
    np.savez(path, __meta__=np.array(json.dumps(meta)), **net.state_dict())


@main.command("eval")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Parameter file written by 'train' (foldK.npz).")
@click.option("--data", "data_path", required=True, type=click.Path(exists=True, dir_okay=False))
def cmd_eval(model_path, data_path):
    """Print the accuracy of saved parameters on a dataset (vertex task: masked-out vertices)."""
    try:
        blob = np.load(model_path)
        meta = json.loads(str(blob["__meta__"]))
        grid = meta["grid"]
        net = instantiate(meta["arch"], meta["n_features"], meta["n_slices"], meta["n_classes"],
                          n_vertices=meta["n_vertices"], grid=None if grid is None else tuple(grid),
                          task=meta["task"])
        net.load_state_dict({k: blob[k] for k in blob.files if k != "__meta__"})
        data = load_graph_dataset(data_path) if meta["task"] == "graph" else load_vertex_task(data_path)
        acc = evaluate(net, data)
    except (GraphCNNError, ValueError, KeyError) as exc:
        _fail(exc)
    click.echo(f"accuracy {acc!r}")


def _random_graph(rng, n, c, l, label):
    edges = [(s, i, j, float(rng.normal())) for s in range(1, l) for i in range(n) for j in range(n)
             if rng.random() < 0.3]
    if l > 1 and not any(e[0] == l - 1 for e in edges):
        edges.append((l - 1, 0, n - 1, 1.0))
    return GraphSample(rng.normal(size=(n, c)), adjacency_from_edges(n, edges), label=label)


@main.command("gradcheck")
@click.option("--arch", required=True)
@click.option("--n", "n_vertices", type=int, default=5, show_default=True)
@click.option("--c", "n_features", type=int, default=2, show_default=True)
@click.option("--l", "n_slices", type=int, default=2, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--epsilon", type=float, default=1e-5, show_default=True)
def cmd_gradcheck(arch, n_vertices, n_features, n_slices, seed, epsilon):
    """Finite-difference check on a batch of three random graphs; exit 0 iff all blocks pass."""
    rng = np.random.default_rng(seed)
    try:
        if min(n_vertices, n_features, n_slices) < 1:
            raise GraphCNNError("--n, --c and --l must be >= 1")
        samples = [_random_graph(rng, n_vertices, n_features, n_slices, k % 2) for k in range(3)]
        net = instantiate(arch, n_features, n_slices, 2, seed=seed, n_vertices=n_vertices)
        report = grad_check(net, samples, epsilon=epsilon)
    except GraphCNNError as exc:
        _fail(exc)
    for name, err in report.errors.items():
        click.echo(f"{name}\t{err:.3e}")
    for name, err in report.inert.items():
        click.echo(f"{name}\t{err:.3e}\t(abs; gradient below finite-difference resolution)")
    ok = report.passed(GRADCHECK_TOL)
    click.echo(f"max_rel_err {report.max_error:.3e} {'PASS' if ok else 'FAIL'}")
    sys.exit(0 if ok else 1)


@main.command("convert-image")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--mode", type=click.Choice(["isotropic", "directional"]), default="directional",
              show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def cmd_convert_image(in_path, mode, out_path):
    """Convert a raw image file into a graph dataset (pixel values scaled to [0, 1])."""
    try:
        labels, images = read_raw_images(in_path)
    except GraphCNNError as exc:
        _fail(exc)
    samples = [image_to_graph(img, mode, int(y)) for y, img in zip(labels, images_to_float(images))]
    save_graph_dataset(samples, out_path)
    click.echo(f"wrote {len(samples)} graphs to {out_path}", err=True)


@main.command("gen-synth")
@click.option("--kind", type=click.Choice(["motif", "grid", "community"]), required=True)
@click.option("--count", type=int, required=True,
              help="Samples (motif, grid) or vertices (community).")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--height", type=int, default=8, show_default=True)
@click.option("--width", type=int, default=8, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def cmd_gen_synth(kind, count, seed, height, width, out_path):
    """Write a synthetic dataset: motif graphs, bar images (raw) or a community vertex task."""
    try:
        if kind == "motif":
            save_graph_dataset(gen_motif_dataset(count, seed), out_path)
        elif kind == "grid":
            Path(out_path).write_bytes(gen_grid_dataset(count, height, width, seed))
        else:
            save_vertex_task(gen_community_graph(n=count, seed=seed), out_path)
    except ValueError as exc:
        _fail(exc)


@main.command("parse-arch")
@click.option("--arch", required=True)
@click.option("--c", "n_features", type=int, default=1, show_default=True)
@click.option("--l", "n_slices", type=int, default=2, show_default=True)
@click.option("--n", "n_vertices", type=int, default=None, help="Fixed vertex count, if any.")
@click.option("--grid", nargs=2, type=int, default=None, help="HEIGHT WIDTH for image graphs.")
def cmd_parse_arch(arch, n_features, n_slices, n_vertices, grid):
    """Print the expanded plan with per-layer parameter counts."""
    try:
        plan = archspec.parse_arch(arch)
    except GraphCNNError as exc:
        _fail(exc)
    counts = archspec.param_counts(plan, n_features, n_slices, n_vertices, grid or None)
    click.echo(archspec.render_arch(plan))
    for k, (spec, count) in enumerate(zip(plan.layers, counts), start=1):
        click.echo(f"{k}\t{type(spec).__name__}\t{spec.render()}\t{'?' if count is None else count}")
    click.echo(f"layers {len(plan)}")


if __name__ == "__main__":
    main()
