"""Smoke test for the dyntree_py extension.

Builds the extension with cargo if needed, imports it from a temporary
directory and exercises the main entry points.

    python3 python/smoke_test.py
"""

import math
import os
import random
import shutil
import subprocess
import sys
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def load_module():
    subprocess.run(["cargo", "build", "--release", "-p", "dyntree-py"], cwd=ROOT, check=True)
    lib = os.path.join(ROOT, "target", "release", "libdyntree_py.so")
    if not os.path.exists(lib):
        lib = lib[:-3] + ".dylib"
    tmp = tempfile.mkdtemp()
    shutil.copy(lib, os.path.join(tmp, "dyntree_py.so"))
    sys.path.insert(0, tmp)
    import dyntree_py

    return dyntree_py, tmp


def main():
    dt, tmp = load_module()
    rng = random.Random(1)
    x = [[rng.random(), rng.random(), rng.random()] for _ in range(200)]
    y = [(3.0 if r[0] > 0.5 else 0.0) + 0.1 * rng.gauss(0, 1) for r in x]

    cloud = dt.Cloud.fit(x, y, particles=100, seed=7, prefix=20)
    assert len(cloud) == 100 and cloud.t == 200
    assert math.isfinite(cloud.log_marginal)
    assert cloud.predict_mean([0.9, 0.5, 0.5]) > 2.0
    assert cloud.predict_mean([0.1, 0.5, 0.5]) < 1.0

    rel = dt.relevance_probabilities([cloud])
    assert rel[0] > 0.9, rel

    s, t = dt.sensitivity([cloud], [(0.0, 1.0)] * 3, m=300, seed=3)
    assert s[0] > 0.7 and max(s[1], s[2]) < 0.2, (s, t)

    lin = dt.Cloud.fit(x, y, leaf="linear", particles=50, seed=7, prefix=20)
    assert math.isfinite(dt.log_bayes_factor(cloud, lin))

    ei = dt.expected_improvement(cloud, [[0.1, 0.5, 0.5], [0.9, 0.5, 0.5]], 0.0)
    assert all(v >= 0.0 for v in ei) and ei[0] > ei[1], ei

    idx = dt.maxmin_subsample([[0.0], [0.1], [0.5], [1.0]], 3)
    assert idx == [0, 3, 2], idx

    path = os.path.join(tmp, "cloud.json")
    cloud.save(path)
    again = dt.Cloud.load(path)
    a = cloud.update([0.7, 0.2, 0.4], 3.05)
    b = again.update([0.7, 0.2, 0.4], 3.05)
    assert a == b and cloud.trace == again.trace

    summary = dt.run_workflow("priorsim", os.path.join(tmp, "out"), config="[priorsim]\nsizes = [50]\nreps = 100\n")
    assert "p_any_largest" in summary

    try:
        dt.Cloud.fit(x, y, leaf="cubic")
    except ValueError:
        pass
    else:
        raise AssertionError("bad leaf model accepted")

    print("python smoke test passed")


if __name__ == "__main__":
    main()
