"""The numba kernels and their numpy fallbacks must agree bit for bit."""
import json
import os
import subprocess
import sys

import pytest

WORKER = r"""
import hashlib, json
import numpy as np
from emula._accel import backend
from emula.estimators import psm
from emula.nuisance import fit_forest

r = np.random.default_rng(3)
x = r.standard_normal((400, 5))
y = x[:, 0] - x[:, 1] ** 2 + r.standard_normal(400)
a = (r.random(400) < 1 / (1 + np.exp(-x[:, 0]))).astype(int)
f = fit_forest(x, y, n_trees=8, max_depth=6, seed=2)
g = fit_forest(x, (y > 0).astype(float), n_trees=8, max_depth=6, seed=2, classifier=True)
m = psm(1 / (1 + np.exp(-x[:, 0])), a, y)
h = hashlib.sha256()
for arr in (f.threshold, f.feature, f.value, f.predict(x), g.predict(x), m.treated_idx, m.control_idx):
    h.update(np.ascontiguousarray(arr).tobytes())
print(json.dumps({"backend": backend(), "digest": h.hexdigest(), "psm": m.point}))
"""


def _run(flag):
    env = dict(os.environ, EMULA_NUMBA=flag)
    r = subprocess.run([sys.executable, "-c", WORKER], env=env, capture_output=True, text=True, timeout=600)
    assert r.returncode == 0, r.stderr
    return json.loads(r.stdout.strip().splitlines()[-1])


def test_numba_and_numpy_agree():
    fast, slow = _run("1"), _run("0")
    assert slow["backend"] == "numpy"
    if fast["backend"] != "numba":
        pytest.skip("numba is not importable here")
    assert fast["digest"] == slow["digest"] and fast["psm"] == slow["psm"]
