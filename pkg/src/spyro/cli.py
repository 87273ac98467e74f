"""Command-line entry points.

Five subcommands share one config-file format: grid-stats, infer, train,
plot, bench. Exit code 0 on success, 2 for config problems (parse errors,
missing sections, bad paths), 3 for numeric failures during evaluation.
"""

import argparse
import sys
import time

import numpy as np

from . import config as cfgmod
from . import inference, so3_grid, training, viz
from .errors import ConfigError, NumericError
from .pyramid import SE3Pyramid


def _build_parser():
    p = argparse.ArgumentParser(prog="spyro", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in [
        ("grid-stats", "print cell counts and volumes per recursion"),
        ("infer", "run sparse inference and write a belief file"),
        ("train", "fit density heads and write weights plus a report CSV"),
        ("plot", "render a rotation marginal from a belief file"),
        ("bench", "compare sparse against dense evaluation cost"),
    ]:
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", required=True, help="path to a run config file")
        s.add_argument("--seed", type=int, default=None, help="override the config seed")
        s.add_argument("--out", default=None, help="override the primary output path")
    return p


def _load(args):
    cfg = cfgmod.load(args.config)
    if args.seed is not None:
        cfg = cfgmod.replace_seed(cfg, args.seed)
    return cfgmod.validate(cfg, args.config)


def _truth_pose(cfg, grid):
    t = cfg.truth
    if t.rotation is None:
        return None, None
    q = np.asarray(t.rotation, dtype=float)
    q = q / np.linalg.norm(q)
    pos = None
    if isinstance(grid, SE3Pyramid):
        if t.position is None:
            raise ConfigError("truth.position is required for an se3 grid")
        pos = np.asarray(t.position, dtype=float)
    return q, pos


def cmd_grid_stats(args):
    cfg = _load(args)
    grid = cfgmod.build_grid(cfg)
    lines = [f"space={cfg.grid.space} depth={cfg.grid.depth}"]
    for r in range(cfg.grid.depth + 1):
        lines.append(
            f"r={r} cells={grid.n_cells(r)} cell_volume={grid.cell_volume(r):.9e}"
        )
    lines.append(f"total_volume={grid.total_volume:.9e}")
    _emit(lines, args.out)
    return 0


def cmd_infer(args):
    cfg = _load(args)
    grid = cfgmod.build_grid(cfg)
    model = cfgmod.build_model(cfg, args.config)
    depth = cfgmod.inference_depth(cfg)
    k = cfg.inference.top_k
    belief = inference.sparse_infer(model, grid, depth, k)
    expected = inference.eval_count(k, depth, grid.width0, grid.branching)
    out = args.out or cfg.io.belief
    if out is None:
        raise ConfigError("io.belief (or --out) is required for infer")
    inference.save_belief(out, belief)
    lines = [
        f"evaluations={belief.n_scored} expected={expected}",
        f"leaf_mass={belief.total_mass():.12f}",
        f"entropy_nats={belief.entropy():.6f}",
    ]
    q, pos = _truth_pose(cfg, grid)
    if q is not None:
        ll, inside = inference.continuous_log_likelihood(
            belief, q[None], None if pos is None else pos[None]
        )
        lines.append(f"truth_log_likelihood={ll[0]:.6f} inside={bool(inside[0])}")
    lines.append(f"belief={out}")
    _emit(lines, None)
    return 0


def cmd_train(args):
    cfg = _load(args)
    grid = cfgmod.build_grid(cfg)
    target = cfgmod.build_target(cfg)
    extractor = cfgmod.build_extractor(cfg, target, args.config)
    weights_out = args.out or cfg.io.weights
    if weights_out is None:
        raise ConfigError("io.weights (or --out) is required for train")
    from .heads import KeypointHead

    tc = cfgmod.build_train_config(cfg)
    head = KeypointHead(extractor.dim, tc.depth, dropout=tc.dropout)
    report = training.train(extractor, head, grid, target, tc)
    head.save(weights_out)
    lines = [f"weights={weights_out}"]
    if cfg.io.report is not None:
        report.write_csv(cfg.io.report)
        lines.append(f"report={cfg.io.report}")
    for level in range(tc.depth + 1):
        series = report.level_series(level)
        lines.append(f"final_ll r={level} {series[-1][1]:.6f}")
    lines.append(f"skipped_outside={report.skipped_outside}/{report.n_positives}")
    _emit(lines, None)
    return 0


def cmd_plot(args):
    cfg = _load(args)
    if cfg.io.belief is None:
        raise ConfigError("io.belief is required for plot")
    try:
        version, recs, indices, probs = inference.load_belief(cfg.io.belief)
    except (OSError, ValueError) as e:
        raise ConfigError(f"cannot read belief file: {e}") from e
    se3 = version == inference.BELIEF_VERSION_SE3
    r = cfg.viz.recursion
    cells, mass = inference.marginal_so3_records(
        recs, indices.astype(np.int64), probs, r, se3
    )
    buf = viz.render_marginal(
        cells,
        mass,
        r,
        axis=cfg.viz.axis,
        width=cfg.viz.image_width,
        grayscale=cfg.viz.grayscale,
    )
    if cfg.truth.rotation is not None:
        q = np.asarray(cfg.truth.rotation, dtype=float)
        viz.draw_truth(buf, q / np.linalg.norm(q), axis=cfg.viz.axis)
    out = args.out or cfg.io.image
    if out is None:
        raise ConfigError("io.image (or --out) is required for plot")
    try:
        viz.write_image(out, buf)
    except ValueError as e:
        raise ConfigError(str(e)) from e
    _emit([f"cells={cells.size} mass={mass.sum():.9f}", f"image={out}"], None)
    return 0


def cmd_bench(args):
    cfg = _load(args)
    grid = cfgmod.build_grid(cfg)
    model = cfgmod.build_model(cfg, args.config)
    depth = cfgmod.inference_depth(cfg)
    k = cfg.inference.top_k
    dense_cap = 1 if isinstance(grid, SE3Pyramid) else 3

    lines = [f"space={cfg.grid.space} depth={depth} top_k={k}"]
    t0 = time.perf_counter()
    belief = inference.sparse_infer(model, grid, depth, k)
    sparse_s = time.perf_counter() - t0
    expected = inference.eval_count(k, depth, grid.width0, grid.branching)
    lines.append(
        f"sparse evaluations={belief.n_scored} expected={expected} time_s={sparse_s:.4f}"
    )
    for r in range(depth + 1):
        dense = grid.n_cells(r)
        row = f"r={r} dense_cells={dense}"
        if r <= dense_cap:
            qc, tc = grid.centers(r, np.arange(dense, dtype=np.int64))
            t0 = time.perf_counter()
            scores = model.score_poses(qc, tc, r)
            dense_s = time.perf_counter() - t0
            if not np.all(np.isfinite(scores)):
                raise NumericError(f"dense scores are not finite at recursion {r}")
            row += f" dense_time_s={dense_s:.4f}"
        else:
            row += " dense_time_s=skipped"
        lines.append(row)
    lines.append(f"evaluation_ratio={grid.n_cells(depth) / belief.n_scored:.1f}")
    _emit(lines, args.out)
    return 0


def _emit(lines, out):
    text = "\n".join(lines) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w") as f:
            f.write(text)


_COMMANDS = {
    "grid-stats": cmd_grid_stats,
    "infer": cmd_infer,
    "train": cmd_train,
    "plot": cmd_plot,
    "bench": cmd_bench,
}


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
