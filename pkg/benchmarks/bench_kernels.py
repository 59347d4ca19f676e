"""Compare the numba and pure-numpy kernels: forest growth, forest prediction, greedy matching.

Each backend runs in its own interpreter (the flag is read at import time).
Prints wall-clock timings and checks that both backends give identical output.

    python benchmarks/bench_kernels.py [--n 5000] [--trees 50] [--repeat 3]
"""
import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import hashlib, json, sys, time
import numpy as np
from emula._accel import backend
from emula.nuisance.forest import fit_forest
from emula.estimators import psm

n, trees, repeat = map(int, sys.argv[1:4])
rng = np.random.default_rng(0)
x = rng.standard_normal((n, 10))
y = x[:, 0] + np.sin(x[:, 1]) + rng.standard_normal(n)
e = 1 / (1 + np.exp(-x[:, 0]))
a = (rng.random(n) < e).astype(int)

def best(f):
    f()  # warm-up (includes jit compilation or cache load)
    ts = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = f()
        ts.append(time.perf_counter() - t)
    return min(ts), out

t_fit, model = best(lambda: fit_forest(x, y, n_trees=trees, max_depth=10, seed=1))
t_pred, pred = best(lambda: model.predict(x))
t_match, m = best(lambda: psm(e, a, y))
digest = hashlib.sha256(model.threshold.tobytes() + pred.tobytes()
                        + m.control_idx.tobytes()).hexdigest()
print(json.dumps({"backend": backend(), "fit": t_fit, "predict": t_pred,
                  "match": t_match, "digest": digest}))
"""


def run(flag, args):
    env = dict(os.environ, EMULA_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", WORKER, str(args.n), str(args.trees), str(args.repeat)],
                         env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=5000)
    p.add_argument("--trees", type=int, default=50)
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args()
    res = [run("1", args), run("0", args)]
    print(f"n={args.n} trees={args.trees} (best of {args.repeat})")
    print(f"{'kernel':<10}{'numba [s]':>12}{'numpy [s]':>12}{'speed-up':>10}")
    for k in ("fit", "predict", "match"):
        nb, np_ = res[0][k], res[1][k]
        print(f"{k:<10}{nb:>12.4f}{np_:>12.4f}{np_ / nb:>9.1f}x")
    same = res[0]["digest"] == res[1]["digest"]
    print("outputs identical:", same)
    return 0 if same else 1


if __name__ == "__main__":
    sys.exit(main())
