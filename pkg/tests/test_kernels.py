import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from romforge import kernels
from romforge.dynsys import make_vk_beam


def loop_reference(rows, coef, idx, U, n_rows):
    out = np.zeros((n_rows, U.shape[1]))
    for e in range(rows.size):
        term = coef[e] * np.ones(U.shape[1])
        for col in idx:
            term = term * U[col[e]]
        out[rows[e]] += term
    return out


def random_terms(rng, n_terms, n_rows, n_state, order):
    rows = np.sort(rng.integers(0, n_rows, n_terms)).astype(np.int64)
    idx = [rng.integers(0, n_state, n_terms).astype(np.int64) for _ in range(order)]
    return rows, rng.normal(size=n_terms), idx


BACKENDS = [kernels.numpy_kernels, kernels]


@pytest.mark.parametrize("impl", BACKENDS, ids=["numpy", "active"])
@settings(max_examples=30, deadline=None)
@given(st.integers(0, 60), st.integers(1, 8), st.integers(1, 9), st.integers(0, 2**31 - 1))
def test_scatter_kernels_match_loops(impl, n_terms, n_rows, n_cols, seed):
    rng = np.random.default_rng(seed)
    U = rng.normal(size=(7, n_cols))
    for order, fn in ((1, impl.scatter_lin), (2, impl.scatter_quad), (3, impl.scatter_cubic)):
        rows, coef, idx = random_terms(rng, n_terms, n_rows, 7, order)
        out = np.zeros((n_rows, n_cols))
        fn(rows, coef, *idx, U, out)
        assert np.allclose(out, loop_reference(rows, coef, idx, U, n_rows), rtol=1e-13, atol=1e-13)


def test_kernels_accumulate_into_existing_output(rng):
    rows, coef, (a,) = random_terms(rng, 20, 4, 5, 1)
    U = rng.normal(size=(5, 3))
    out = np.ones((4, 3))
    kernels.scatter_lin(rows, coef, a, U, out)
    assert np.allclose(out, 1 + loop_reference(rows, coef, [a], U, 4))


def test_backend_name():
    assert kernels.BACKEND in ("cython", "numpy")


def test_pure_python_fallback_gives_same_force(tmp_path):
    script = (
        "import numpy as np, sys\n"
        "from romforge import kernels\n"
        "from romforge.dynsys import make_vk_beam\n"
        "b = make_vk_beam(10)\n"
        "u = np.random.default_rng(0).normal(size=(b.n_dof, 5)) * 1e-6\n"
        "np.save(sys.argv[1], b.internal_force(u))\n"
        "print(kernels.BACKEND)\n"
    )
    env = dict(os.environ, ROMFORGE_PURE_PYTHON="1")
    res = subprocess.run([sys.executable, "-c", script, str(tmp_path / "f.npy")], env=env,
                         capture_output=True, text=True, check=True)
    assert res.stdout.strip() == "numpy"
    b = make_vk_beam(10)
    u = np.random.default_rng(0).normal(size=(b.n_dof, 5)) * 1e-6
    ref = b.internal_force(u)
    assert np.allclose(np.load(tmp_path / "f.npy"), ref, rtol=1e-12, atol=1e-12 * np.abs(ref).max())
