"""Compare the compiled and numpy scatter kernels on beam-sized workloads.

Run ``python3 benchmarks/bench_kernels.py [n_elem ...]``. For every mesh the
beam's cubic/quadratic monomials are evaluated on an ``N_t = 56`` sample block
(the harmonic-balance AFT size for ``H = 7``) and timed with both backends.
"""

import sys
import timeit

import numpy as np

from romforge import kernels
from romforge.dynsys import make_vk_beam


def workload(sys_, n_cols=56, seed=0):
    U = np.random.default_rng(seed).normal(size=(sys_.n_dof, n_cols)) * 1e-6
    g, h = sys_.G_idx, sys_.H_idx
    G = (g[:, 0].copy(), sys_.G_val, g[:, 1].copy(), g[:, 2].copy())
    H = (h[:, 0].copy(), sys_.H_val, h[:, 1].copy(), h[:, 2].copy(), h[:, 3].copy())
    return U, G, H


def run(impl, U, G, H, n_rows):
    out = np.zeros((n_rows, U.shape[1]))
    impl.scatter_quad(*G, U, out)
    impl.scatter_cubic(*H, U, out)
    return out


def main(argv):
    meshes = [int(a) for a in argv] or [16, 64, 128]
    print(f"active backend: {kernels.BACKEND}")
    print(f"{'n_elem':>7} {'terms':>8} {'numpy [ms]':>11} {'active [ms]':>12} {'speedup':>8}")
    for n_elem in meshes:
        b = make_vk_beam(n_elem)
        U, G, H = workload(b)
        ref = run(kernels.numpy_kernels, U, G, H, b.n_dof)
        got = run(kernels, U, G, H, b.n_dof)
        assert np.allclose(ref, got, rtol=1e-12, atol=1e-12 * np.abs(ref).max())
        t_np = min(timeit.repeat(lambda: run(kernels.numpy_kernels, U, G, H, b.n_dof), number=20, repeat=5)) / 20
        t_ac = min(timeit.repeat(lambda: run(kernels, U, G, H, b.n_dof), number=20, repeat=5)) / 20
        print(f"{n_elem:>7} {G[1].size + H[1].size:>8} {1e3 * t_np:>11.3f} {1e3 * t_ac:>12.3f} "
              f"{t_np / t_ac:>8.2f}")


if __name__ == "__main__":
    main(sys.argv[1:])
