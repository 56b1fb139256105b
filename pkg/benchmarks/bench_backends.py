"""Compiled kernels vs the numpy fallback.

Times the three things the attacks spend their time on: one MLP
loss-and-gradient call, one signed projected step, and a complete MLFF-MI run
on the first examples of the default test split. Also reports the largest
disagreement between the two backends so a speedup never hides a wrong answer.

Usage::

    python3 benchmarks/bench_backends.py [--examples 40] [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from lffattack import _backend, config, harness
from lffattack.oracles import LossMode


def best_of(fn, number, repeat):
    """Best per-call time in microseconds."""
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number * 1e6


def world(examples):
    cfg = config.loads(config.bundled("default"))
    ds = harness.generate_dataset(cfg.dataset, (cfg.seed, cfg.dataset_seed))
    trained = {k: v.model for k, v in harness.train_models(cfg, ds).items()}
    models = harness.assemble_models(cfg, trained)
    return cfg, ds.limited(examples), models[cfg.surrogate]


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--examples", type=int, default=40)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)

    if "compiled" not in _backend.available():
        print("compiled extension not built; nothing to compare")
        return 1
    cfg, ds, mlp = world(args.examples)
    attack = cfg.attack("mlff_mi")
    rng = np.random.default_rng(0)
    x, d = rng.uniform(0, 1, 20), rng.normal(size=20)
    lo, hi = np.clip(x - 0.15, 0, 1), np.clip(x + 0.15, 0, 1)
    mode = LossMode.untargeted(0)

    rows, outputs = [], {}
    for name in ("python", "compiled"):
        with _backend.using(name):
            k = _backend.kernels
            grad_us = best_of(lambda: mlp.loss_and_grad(x, mode), 2000, args.repeat)
            step_us = best_of(lambda: k.signed_step(x, d, 0.015, lo, hi), 20000, args.repeat)
            attack_s = min(timeit.repeat(
                lambda: harness.run_attack(attack, mlp, ds.test_x, ds.test_y, seed=(0, 1)),
                number=1, repeat=max(1, args.repeat // 2)))
            run = harness.run_attack(attack, mlp, ds.test_x, ds.test_y, seed=(0, 1))
            outputs[name] = (mlp.loss_and_grad(x, mode), run.adversarial())
            rows.append((name, grad_us, step_us, attack_s))

    print(f"{'backend':<10}{'mlp grad (us)':>15}{'signed step (us)':>18}"
          f"{'mlff_mi x' + str(len(ds.test_y)) + ' (s)':>20}")
    for name, g, s, a in rows:
        print(f"{name:<10}{g:>15.2f}{s:>18.2f}{a:>20.3f}")
    py, cc = rows
    print(f"{'speedup':<10}{py[1] / cc[1]:>14.1f}x{py[2] / cc[2]:>17.1f}x{py[3] / cc[3]:>19.1f}x")

    (lp, gp), adv_p = outputs["python"]
    (lc, gc), adv_c = outputs["compiled"]
    print(f"max |loss| gap {abs(lp - lc):.1e}, max |grad| gap {np.abs(gp - gc).max():.1e}, "
          f"adversarial examples identical: {np.array_equal(adv_p, adv_c)}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
