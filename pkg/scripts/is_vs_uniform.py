"""Paired comparison of negative-sampling strategies for head training.

Trains the same synthetic scene twice per seed, once with ancestral
importance-sampled negatives and once with uniform negatives at equal
per-step budget, then reports held-out true-cell log-likelihood per
level. The interesting read-out is the deepest level, where uniform
negatives almost never land inside the concentrated target's support.

    python scripts/is_vs_uniform.py --seeds 3 --steps 500
"""

import argparse
import csv
import sys
import time

import numpy as np

from spyro import keypoints, quat, targets, training
from spyro.heads import KeypointHead
from spyro.models import KeypointModel
from spyro.pyramid import SO3Pyramid


def make_scene(seed, n_modes, kappa):
    rng = np.random.default_rng((seed, 77))
    cam = keypoints.Camera(fx=320.0, fy=320.0, cx=64.0, cy=64.0, width=128, height=128)
    kp = keypoints.cube_keypoints(0.3)
    t_obj = np.array([0.0, 0.0, 1.0])
    mode_qs = quat.random_rotations(rng, n_modes)
    target = targets.AnalyticPoseTarget(
        [targets.Mode(rotation=q, kappa=kappa) for q in mode_qs]
    )
    fmap = keypoints.scene_feature_map(
        cam, kp, [(q, t_obj) for q in mode_qs], [1.0] * n_modes, 6, (2.5, 6.0), rng
    )
    ex = keypoints.FeatureExtractor(cam, kp, fmap, sentinel_seed=1)
    return ex, SO3Pyramid(t_est=t_obj), target


def run(seed, use_is, args):
    ex, grid, target = make_scene(seed, args.modes, args.kappa)
    head = KeypointHead(dim=ex.dim, depth=args.depth, dropout=0.0)
    cfg = training.TrainConfig(
        depth=args.depth,
        steps=args.steps,
        batch_size=args.batch,
        learning_rate=0.1,
        use_importance_sampling=use_is,
        n_trajectories=args.budget // grid.branching,
        n_uniform_negatives=args.budget,
        jitter=True,
        eval_every=0,
        seed=seed,
    )
    t0 = time.time()
    training.train(ex, head, grid, target, cfg)
    levels, _, _ = training.evaluate(
        KeypointModel(ex, head),
        grid,
        target,
        args.depth,
        512,
        1024,
        np.random.default_rng((seed, 5)),
    )
    return levels, time.time() - t0


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, default=3, help="number of paired seeds")
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--depth", type=int, default=4)
    p.add_argument("--modes", type=int, default=3)
    p.add_argument("--kappa", type=float, default=150.0)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--budget", type=int, default=1024,
                   help="negative evaluations per step at the deepest level")
    p.add_argument("--csv", default=None, help="write per-seed results here")
    args = p.parse_args(argv)

    rows = []
    wins = 0
    for seed in range(args.seeds):
        is_lv, is_t = run(seed, True, args)
        un_lv, un_t = run(seed, False, args)
        wins += is_lv[-1] > un_lv[-1]
        rows.append((seed, *is_lv, *un_lv))
        print(f"seed {seed} ({is_t:.0f}s + {un_t:.0f}s):")
        for r, (a, b) in enumerate(zip(is_lv, un_lv)):
            marker = "  <-- deepest" if r == args.depth else ""
            print(f"  r={r}  IS {a:8.3f}   uniform {b:8.3f}{marker}")
    print(f"\nIS higher at r={args.depth} on {wins}/{args.seeds} seeds")

    if args.csv:
        with open(args.csv, "w", newline="") as f:
            w = csv.writer(f)
            levels = list(range(args.depth + 1))
            w.writerow(["seed"] + [f"is_r{r}" for r in levels] + [f"uniform_r{r}" for r in levels])
            w.writerows(rows)
        print(f"wrote {args.csv}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
