"""End-to-end harmonic-balance timing with the compiled and the numpy backend.

Each backend runs in a fresh interpreter (the backend is chosen at import);
``ROMFORGE_PURE_PYTHON=1`` selects the numpy fallback. The workload is a phase
sweep of the clamped-clamped beam at ``beta = 0.5``.

Usage: ``python3 benchmarks/bench_solver.py [n_elem] [n_phases]``
"""

import json
import os
import subprocess
import sys

CHILD = r"""
import json, sys, time
import numpy as np
from romforge import kernels
from romforge.dynsys import make_vk_beam
from romforge.hb import phase_sweep

n_elem, n_phases = int(sys.argv[1]), int(sys.argv[2])
beam = make_vk_beam(n_elem)
phases = np.linspace(0.3, 2.8, n_phases)
t0 = time.perf_counter()
orbits = phase_sweep(beam, 0.5, phases, dof=beam.meta["monitor_dof"])
dt = time.perf_counter() - t0
print(json.dumps({"backend": kernels.BACKEND, "seconds": dt,
                  "omega_sum": float(sum(o.omega for o in orbits))}))
"""


def measure(n_elem, n_phases, pure):
    env = dict(os.environ, ROMFORGE_PURE_PYTHON="1" if pure else "0")
    res = subprocess.run([sys.executable, "-c", CHILD, str(n_elem), str(n_phases)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(res.stdout)


def main(argv):
    n_elem = int(argv[0]) if argv else 64
    n_phases = int(argv[1]) if len(argv) > 1 else 10
    fast = measure(n_elem, n_phases, pure=False)
    slow = measure(n_elem, n_phases, pure=True)
    rel = abs(fast["omega_sum"] - slow["omega_sum"]) / abs(slow["omega_sum"])
    print(f"beam n_elem={n_elem}, {n_phases} phases")
    for r in (fast, slow):
        print(f"  {r['backend']:>7}: {r['seconds']:.3f} s")
    print(f"  speedup {slow['seconds'] / fast['seconds']:.2f}x, frequency agreement {rel:.1e}")


if __name__ == "__main__":
    main(sys.argv[1:])
