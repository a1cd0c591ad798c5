"""Smoke test for the qelm_py extension module.

Build and run from the repository root:

    cargo build --release -p qelm-py
    python python/smoke_test.py
"""

import cmath
import math
import os
import shutil
import sys
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def load_module():
    try:
        import qelm_py
        return qelm_py
    except ImportError:
        pass
    for profile in ("release", "debug"):
        lib = os.path.join(ROOT, "target", profile, "libqelm_py.so")
        if os.path.exists(lib):
            tmp = tempfile.mkdtemp()
            shutil.copy(lib, os.path.join(tmp, "qelm_py.so"))
            sys.path.insert(0, tmp)
            import qelm_py
            return qelm_py
    sys.exit("qelm_py not found; run `cargo build --release -p qelm-py` first")


def close(a, b, tol=1e-9):
    return abs(a - b) < tol


def main():
    q = load_module()

    # |01> on two qubits is basis index 2
    psi = q.encode([0.0, 0.0, math.pi, 0.0])
    assert close(abs(psi[2]), 1.0)

    chain = q.XXChain(2, 0.5, "open")
    t = 0.3
    out = chain.evolve(psi, t)
    assert close(out[2].real, math.cos(t)) and close(out[1].imag, -math.sin(t))
    assert close(q.entropy(chain.evolve(psi, math.pi / 4), [0]), math.log(2))

    probs = q.probabilities(q.encode([1.0, 0.5, 2.0, 1.5, 0.3, 0.2]))
    assert close(sum(probs), 1.0)

    u = q.haar_unitary(4, 7)
    for i in range(4):
        for j in range(4):
            dot = sum(u[k][i].conjugate() * u[k][j] for k in range(4))
            assert abs(dot - (1.0 if i == j else 0.0)) < 1e-10

    deep = q.brickwork(q.encode([0.4] * 8), 3, 1, "dense_brick")
    assert close(sum(abs(a) ** 2 for a in deep), 1.0)

    assert close(q.bessel_j(1, 2.0), 0.5767248078, 1e-9)
    assert close(q.adjusted_rand_index([0, 0, 1, 1], [0, 1, 0, 1]), -0.5)
    labels, inertia = q.kmeans([[0.0], [0.1], [5.0], [5.1]], 2)
    assert labels[0] == labels[1] != labels[2] == labels[3]
    assert close(inertia, 0.01)

    xs = [[float(i % 2), float(i % 3)] for i in range(60)]
    ys = [i % 2 for i in range(60)]
    onn = q.Onn.fit(xs, ys, epochs=200, learning_rate=0.05)
    assert onn.accuracy(xs, ys) == 1.0
    assert close(sum(onn.predict_proba(xs[0])), 1.0)

    out_dir = tempfile.mkdtemp()
    config = f"""
seed = 1
output_dir = "{out_dir}/lr"
[analysis]
entropy = false
clusters = false
eigenbasis = false
mub = false
plots = false
"""
    record = q.run("analyze", config)
    assert record["summary"]["lr_cone_violation"] == 0.0
    same = q.repro(os.path.join(out_dir, "lr", "run.json"), os.path.join(out_dir, "lr-again"))
    assert all(same.values()), same

    print("qelm_py smoke test passed")


if __name__ == "__main__":
    main()
