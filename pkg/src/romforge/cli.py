"""Command-line pipeline.

Subcommands run one stage each and exchange files inside ``--out``::

    fom-frf    full-order FRFs and phase-sampled snapshots
    pod-build  POD basis and Galerkin-reduced system
    rom-frf    reduced FRFs and the (tau, beta, phi) training set
    train      surrogate and phase-map networks -> model bundle
    predict    FRF / envelope tables from the surrogate
    error      instantaneous relative error against reference orbits
    bench      FOM / POD / DL timing table
    verify     quick invariant self-checks

Every command writes ``manifest_<command>.json``; its hash covers the
command, tool version, configuration, seed and input file contents, and is
recorded in each CSV (``# manifest_sha256=...`` first line) and JSON output.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from romforge import __version__
from romforge.dynsys import REFERENCE_BEAM, MaterialGeometry, load_system, make_duffing, make_vk_beam
from romforge.errors import (
    ConfigError,
    ContractError,
    NonConvergence,
    PhaseUndefined,
    RankDeficient,
    StepCollapse,
    TrainingDiverged,
)
from romforge.hb import (
    ContinuationConfig,
    continue_frf,
    extract_phase,
    load_orbits,
    orbit_amplitude,
    phase_sweep,
    sample_orbit,
    save_orbits,
)
from romforge.io import atomic_write_text
from romforge.pod import (
    SnapshotSet,
    build_snapshots,
    compute_pod,
    load_basis,
    load_reduced,
    load_snapshots,
    project_system,
    reconstruct,
    save_basis,
    save_reduced,
    save_snapshots,
)

log = logging.getLogger("romforge")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_TRAINING = 4

SOURCES = ("FOM", "POD", "DL")

DEFAULT_CONFIG = {
    "system": {"kind": "duffing", "omega0": 1.0, "xi": 0.05, "k3": 0.5, "eps": 1.0},
    "hb": {"H": 7},
    "frf": {"betas": [0.2], "omega_range": [0.5, 2.0], "relative": True},
    "snapshots": {"beta": 0.2, "phases": {"start": 0.1714, "stop": 3.1344, "count": 10},
                  "N_t": 50},
    "pod": {"N": None, "rank_tol": 1e-7},
    "rom": {"betas": [0.1, 0.15, 0.2, 0.25, 0.3],
            "phases": {"start": 0.1714, "stop": 3.1344, "count": 62}, "N_t": 32},
    "train": {},
    "phase_map": {},
    "predict": {"betas": None, "phases": {"start": 0.3, "stop": 2.8, "count": 300}, "N_t": 64},
    "error": {"reference": "fom_snapshots", "source": "DL", "N_t": 64},
    "bench": {"counts": [10, 100], "repeats": 5, "betas": None, "phase_start": 0.3,
              "phase_step": 0.01, "N_t": 64},
    "paths": {},
}

DEFAULT_PATHS = {
    "snapshots": "fom_snapshots.snap",
    "basis": "pod_basis.podb",
    "reduced": "reduced_system.json",
    "dataset": "rom_snapshots.snap",
    "phase_pairs": "phase_pairs.csv",
    "model": "model",
}


class SolverFailure(Exception):
    """Wraps a numerical failure with pipeline context (exit code 3)."""


# -- configuration ------------------------------------------------------------------


def _merge(base, over):
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path=None):
    """Defaults merged with the JSON file at ``path`` (if any)."""
    cfg = json.loads(json.dumps(DEFAULT_CONFIG))
    if path:
        try:
            with open(path) as fh:
                user = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        if not isinstance(user, dict):
            raise ConfigError("config root must be a JSON object")
        unknown = set(user) - set(DEFAULT_CONFIG)
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        cfg = _merge(cfg, user)
        if "system" in user:
            # system parameters depend on the kind, so the section is replaced, not merged
            cfg["system"] = user["system"]
    return cfg


def _phase_grid(spec):
    try:
        if isinstance(spec, list):
            return np.asarray(spec, dtype=float)
        return np.linspace(float(spec["start"]), float(spec["stop"]), int(spec["count"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad phase grid {spec!r}: {exc}") from None


def build_system(cfg):
    """Full-order system described by ``cfg['system']``."""
    s = dict(cfg["system"])
    kind = s.pop("kind", None)
    monitor = s.pop("monitor_dof", None)
    try:
        if kind == "duffing":
            sys_ = make_duffing(**s)
        elif kind == "vk_beam":
            geo = {k: s.pop(k) for k in list(s) if k in MaterialGeometry.__dataclass_fields__}
            sys_ = make_vk_beam(mg=MaterialGeometry(**{**asdict(REFERENCE_BEAM), **geo}), **s)
        elif kind == "file":
            sys_ = load_system(s["path"])
        else:
            raise ConfigError(f"unknown system kind {kind!r}")
    except (TypeError, KeyError, ContractError) as exc:
        raise ConfigError(f"invalid system config: {exc}") from None
    if monitor is not None:
        if not 0 <= int(monitor) < sys_.n_dof:
            raise ConfigError("monitor_dof out of range")
        sys_.meta["monitor_dof"] = int(monitor)
    return sys_


def _omega_range(cfg, sys_):
    lo, hi = cfg["frf"]["omega_range"]
    if cfg["frf"].get("relative", True):
        ref = sys_.meta.get("omega_ref")
        if ref is None:
            raise ConfigError("relative omega_range needs a system with omega_ref")
        lo, hi = lo * ref, hi * ref
    if not 0 < lo < hi:
        raise ConfigError("omega_range must satisfy 0 < lo < hi")
    return float(lo), float(hi)


def _cont_cfg(cfg):
    try:
        return ContinuationConfig(**cfg["hb"])
    except (TypeError, ContractError) as exc:
        raise ConfigError(f"invalid hb config: {exc}") from None


# -- run context ----------------------------------------------------------------------


def _sha256_path(path):
    h = hashlib.sha256()
    if os.path.isdir(path):
        for name in sorted(os.listdir(path)):
            h.update(name.encode())
            h.update(_sha256_path(os.path.join(path, name)).encode())
        return h.hexdigest()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Run:
    """Per-command context: configuration, seed, thread count and output bookkeeping."""

    def __init__(self, command, cfg, seed, out, threads):
        self.command = command
        self.cfg = cfg
        self.seed = seed
        self.out = out
        self.threads = threads
        self.inputs = {}
        self.outputs = {}
        os.makedirs(out, exist_ok=True)

    def path(self, key):
        p = self.cfg["paths"].get(key, DEFAULT_PATHS[key])
        return p if os.path.isabs(p) else os.path.join(self.out, p)

    def use_input(self, name, path):
        if not os.path.exists(path):
            raise ConfigError(f"missing input {name}: {path}")
        self.inputs[name] = _sha256_path(path)
        return path

    @property
    def manifest(self):
        return {"command": self.command, "tool_version": __version__, "config": self.cfg,
                "seed": self.seed, "inputs": dict(sorted(self.inputs.items()))}

    @property
    def manifest_hash(self):
        blob = json.dumps(self.manifest, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()

    def out_path(self, name):
        return os.path.join(self.out, name)

    def record(self, name):
        self.outputs[name] = _sha256_path(self.out_path(name))

    def write_csv(self, name, header, rows):
        buf = io.StringIO()
        buf.write(f"# manifest_sha256={self.manifest_hash}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
        atomic_write_text(self.out_path(name), buf.getvalue())
        self.record(name)

    def write_json(self, name, doc):
        doc = dict(doc, manifest_sha256=self.manifest_hash)
        atomic_write_text(self.out_path(name), json.dumps(doc, indent=1, sort_keys=True))
        self.record(name)

    def finish(self):
        doc = dict(self.manifest, manifest_sha256=self.manifest_hash,
                   outputs=dict(sorted(self.outputs.items())))
        atomic_write_text(self.out_path(f"manifest_{self.command}.json"),
                          json.dumps(doc, indent=1, sort_keys=True))

    def pmap(self, fn, items):
        """Ordered parallel map over independent work items."""
        items = list(items)
        if self.threads <= 1 or len(items) <= 1:
            return [fn(x) for x in items]
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            return list(pool.map(fn, items))


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def read_csv(path):
    """Rows of a CSV written by this tool (comment lines skipped) as dicts."""
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


# -- FRF points ---------------------------------------------------------------------------


@dataclass
class FrfPoint:
    beta: float
    omega: float
    phi: float
    amplitude: float
    source: str

    def __post_init__(self):
        if self.amplitude < 0 or not 0 <= self.phi <= np.pi or self.source not in SOURCES:
            raise ContractError(f"invalid FRF point {self}")

    def row(self, index):
        return [index, self.source, self.beta, self.omega, self.phi, self.amplitude]


FRF_HEADER = ["index", "source", "beta", "omega", "phi", "amplitude"]


def frf_point(orbit, beta, source, dof=None, weights=None):
    try:
        phi = extract_phase(orbit, dof, weights)
    except PhaseUndefined:
        phi = 0.0
    return FrfPoint(float(beta), float(orbit.omega), phi,
                    orbit_amplitude(orbit, dof, weights), source)


def read_frf(path):
    return [FrfPoint(float(r["beta"]), float(r["omega"]), float(r["phi"]),
                     float(r["amplitude"]), r["source"]) for r in read_csv(path)]


# -- commands ----------------------------------------------------------------------------


def _solver_context(label, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except (NonConvergence, StepCollapse) as exc:
        raise SolverFailure(f"{label}: {exc}") from exc


def cmd_fom_frf(run):
    """Full-order FRFs per load multiplier plus phase-sampled POD snapshots."""
    cfg = run.cfg
    fom = build_system(cfg)
    mon = fom.meta.get("monitor_dof", 0)
    lo, hi = _omega_range(cfg, fom)
    ccfg = _cont_cfg(cfg)
    betas = [float(b) for b in cfg["frf"]["betas"]]

    def branch(beta):
        return _solver_context(f"FOM branch beta={beta}", continue_frf, fom, beta, lo, hi, ccfg)

    branches = run.pmap(branch, betas)
    orbits, points = [], []
    for beta, br in zip(betas, branches):
        for o in br:
            orbits.append(o)
            points.append(frf_point(o, beta, "FOM", mon))
    save_orbits(run.out_path("fom_frf.forb"), orbits)
    run.record("fom_frf.forb")
    run.write_csv("fom_frf.csv", FRF_HEADER, [p.row(i) for i, p in enumerate(points)])

    sc = cfg["snapshots"]
    phases = _phase_grid(sc["phases"])
    if phases.size:
        sb = float(sc["beta"])
        start = None
        if sb in betas:
            start = branches[betas.index(sb)][0]
        snaps = _solver_context(f"FOM snapshots beta={sb}", phase_sweep, fom, sb, phases,
                                start=start, dof=mon, H=ccfg.H)
        save_orbits(run.out_path("fom_snapshots.forb"), snaps)
        run.record("fom_snapshots.forb")
        pts = [frf_point(o, sb, "FOM", mon) for o in snaps]
        run.write_csv("fom_snapshots.csv", FRF_HEADER, [p.row(i) for i, p in enumerate(pts)])
        save_snapshots(run.out_path("fom_snapshots.snap"),
                       build_snapshots([(o, sb) for o in snaps], int(sc["N_t"]), dof=mon))
        run.record("fom_snapshots.snap")
    log.info("fom-frf: %d FRF points, %d snapshots", len(points), phases.size)
    return EXIT_OK


def galerkin_self_test(fom, basis, rom, n_trials=10, seed=0):
    """Max relative mismatch of ``V^T f(V q)`` against the reduced force."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_trials):
        q = rng.normal(size=basis.N)
        full = basis.V.T @ fom.internal_force(basis.V @ q)
        red = rom.internal_force(q)
        worst = max(worst, np.linalg.norm(full - red) / max(np.linalg.norm(full), 1e-300))
    return worst


def cmd_pod_build(run):
    """POD basis from the snapshot file and the Galerkin-reduced system."""
    cfg = run.cfg
    fom = build_system(cfg)
    snap = load_snapshots(run.use_input("snapshots", run.path("snapshots")))
    if snap.S_u.shape[0] != fom.n_dof:
        raise ConfigError("snapshot rows do not match the configured system")
    N = cfg["pod"].get("N") or min(4, fom.n_dof, snap.n_snapshots)
    try:
        basis = compute_pod(snap, int(N), float(cfg["pod"].get("rank_tol", 1e-7)))
    except RankDeficient as exc:
        raise SolverFailure(f"pod-build: {exc}") from exc
    rom = project_system(fom, basis)
    worst = galerkin_self_test(fom, basis, rom, seed=run.seed)
    if worst > 1e-10:
        raise SolverFailure(f"pod-build: projection self-test failed (rel. error {worst:.2e})")
    s = basis.singular_values
    energy = np.cumsum(s**2) / np.sum(s**2)
    print(f"{'mode':>4} {'sigma':>14} {'cum. energy':>12}")
    for i in range(min(len(s), max(10, basis.N))):
        print(f"{i + 1:>4} {s[i]:>14.6e} {energy[i]:>12.8f}" + ("  *" if i < basis.N else ""))
    save_basis(run.out_path("pod_basis.podb"), basis)
    run.record("pod_basis.podb")
    save_reduced(run.out_path("reduced_system.json"), rom)
    run.record("reduced_system.json")
    run.write_csv("pod_singular_values.csv", ["mode", "sigma", "cumulative_energy"],
                  [[i + 1, s[i], energy[i]] for i in range(len(s))])
    return EXIT_OK


def _monitor_weights(rom):
    return np.asarray(rom.meta["monitor_weights"], dtype=float)


def cmd_rom_frf(run):
    """Reduced FRFs by continuation and the phase-sampled training set."""
    cfg = run.cfg
    rom = load_reduced(run.use_input("reduced", run.path("reduced")))
    rp = rom.to_poly_system()
    wts = _monitor_weights(rom)
    rc = cfg["rom"]
    betas = [float(b) for b in rc["betas"]]
    N_t = int(rc["N_t"])
    ccfg = _cont_cfg(cfg)
    phases = _phase_grid(rc["phases"])
    inside = (phases > 0) & (phases < np.pi)
    if not inside.all():
        log.warning("rom-frf: %d phase targets outside (0, pi) skipped", int((~inside).sum()))
        phases = phases[inside]

    def sweep(beta):
        try:
            return phase_sweep(rp, beta, phases, weights=wts, H=ccfg.H)
        except (NonConvergence, StepCollapse) as exc:
            log.warning("rom-frf: beta=%g dropped (%s)", beta, exc)
            return None

    sweeps = run.pmap(sweep, betas)
    orbits, pts, cols, params, pairs = [], [], [], [], []
    tau = 2 * np.pi * np.arange(N_t) / N_t
    for beta, orbs in zip(betas, sweeps):
        if orbs is None:
            continue
        for o in orbs:
            p = frf_point(o, beta, "POD", weights=wts)
            orbits.append(o)
            pts.append(p)
            cols.append(sample_orbit(o, N_t))
            params.append(np.vstack([tau, np.full(N_t, beta), np.full(N_t, p.phi)]))
            pairs.append((p.phi, beta, o.omega))
    if not orbits:
        raise SolverFailure("rom-frf: no branch could be computed")
    save_orbits(run.out_path("rom_orbits.forb"), orbits)
    run.record("rom_orbits.forb")
    save_snapshots(run.out_path("rom_snapshots.snap"),
                   SnapshotSet(np.hstack(cols), np.hstack(params), N_t))
    run.record("rom_snapshots.snap")
    run.write_csv("phase_pairs.csv", ["phi", "beta", "omega"], pairs)
    run.write_csv("rom_dataset.csv", FRF_HEADER, [p.row(i) for i, p in enumerate(pts)])

    if cfg["frf"].get("omega_range"):
        lo, hi = _omega_range(cfg, rp)

        def branch(beta):
            try:
                return continue_frf(rp, beta, lo, hi, ccfg)
            except (NonConvergence, StepCollapse) as exc:
                log.warning("rom-frf: continuation at beta=%g failed (%s)", beta, exc)
                return []

        rows = []
        for beta, br in zip(betas, run.pmap(branch, betas)):
            rows.extend(frf_point(o, beta, "POD", weights=wts) for o in br)
        run.write_csv("rom_frf.csv", FRF_HEADER, [p.row(i) for i, p in enumerate(rows)])
    log.info("rom-frf: %d instances (%d columns)", len(orbits), len(orbits) * N_t)
    return EXIT_OK


def _train_configs(run):
    from romforge.dlrom import TrainConfig

    try:
        tcfg = TrainConfig.from_dict({**run.cfg["train"], "seed": run.seed})
        pm_doc = {k: v for k, v in run.cfg["phase_map"].items() if k != "phase_window"}
        pcfg = TrainConfig.phase_map_defaults(**{**pm_doc, "seed": run.seed})
    except (TypeError, ContractError) as exc:
        raise ConfigError(f"invalid training config: {exc}") from None
    return tcfg, pcfg


def _phase_window(window):
    try:
        lo, hi = (float(v) for v in window)
    except (TypeError, ValueError):
        raise ConfigError(f"phase_map.phase_window must be [lo, hi], got {window!r}") from None
    if not 0 <= lo < hi <= np.pi:
        raise ConfigError("phase_map.phase_window must satisfy 0 <= lo < hi <= pi")
    return lo, hi


def cmd_train(run):
    """Train the surrogate and the phase map; write the model bundle."""
    from romforge.dlrom import save_model, train_dlrom, train_phase_map

    tcfg, pcfg = _train_configs(run)
    snap = load_snapshots(run.use_input("dataset", run.path("dataset")))
    rows = read_csv(run.use_input("phase_pairs", run.path("phase_pairs")))
    pairs = np.array([[float(r["phi"]), float(r["beta"]), float(r["omega"])] for r in rows])
    window = run.cfg["phase_map"].get("phase_window")
    if window is not None:
        lo, hi = _phase_window(window)
        pairs = pairs[(pairs[:, 0] >= lo) & (pairs[:, 0] <= hi)]
        if len(pairs) < 2:
            raise ConfigError("phase_map.phase_window keeps fewer than two phase pairs")
    t0 = time.perf_counter()
    model = train_dlrom(snap, tcfg)
    pm = train_phase_map(pairs, pcfg)
    log.info("train: %d + %d epochs in %.1f s", len(model.history), len(pm.history),
             time.perf_counter() - t0)
    target = run.path("model")
    save_model(target, model, pm, extra={"run_manifest_sha256": run.manifest_hash})
    run.outputs[os.path.relpath(target, run.out)] = _sha256_path(target)
    return EXIT_OK


def _full_monitor(rom):
    mon = rom.meta.get("full_monitor_dof")
    return 0 if mon is None else int(mon)


def cmd_predict(run):
    """Sweep a (beta, phi) grid with the surrogate; write FRF and envelope tables."""
    from romforge.dlrom import eval_phase_map, load_model, predict_uN

    cfg = run.cfg
    model, pm, _ = load_model(run.use_input("model", run.path("model")))
    if pm is None:
        raise ConfigError("model bundle has no phase map")
    basis = load_basis(run.use_input("basis", run.path("basis")))
    rom = load_reduced(run.use_input("reduced", run.path("reduced")))
    mon = _full_monitor(rom)
    pc = cfg["predict"]
    betas = [float(b) for b in (pc.get("betas") or cfg["rom"]["betas"])]
    phases = _phase_grid(pc["phases"])
    N_t = int(pc["N_t"])
    tau = 2 * np.pi * np.arange(N_t) / N_t
    B, P = np.meshgrid(betas, phases, indexing="ij")
    B, P = B.ravel(), P.ravel()
    omega = np.atleast_1d(eval_phase_map(pm, P, B))
    U, info = predict_uN(model, np.tile(tau, B.size), np.repeat(B, N_t), np.repeat(P, N_t),
                         return_info=True)
    mid = reconstruct(basis, U)[mon].reshape(B.size, N_t)
    amp = np.max(np.abs(mid), axis=1)
    pts = [FrfPoint(B[i], omega[i], float(np.clip(P[i], 0, np.pi)), amp[i], "DL")
           for i in range(B.size)]
    order = sorted(range(len(pts)), key=lambda i: (pts[i].beta, pts[i].omega, pts[i].phi))
    run.write_csv("dl_frf.csv", FRF_HEADER, [pts[i].row(k) for k, i in enumerate(order)])
    run.write_csv("envelope.csv", ["beta", "phi", "omega", "amplitude"],
                  [[p.beta, p.phi, p.omega, p.amplitude] for p in pts])
    flagged = info["extrapolated"].reshape(B.size, N_t).any(axis=1)
    pm_out = ((B < pm.beta_range[0]) | (B > pm.beta_range[1])
              | (P < pm.phi_range[0]) | (P > pm.phi_range[1]))
    run.write_json("predict_meta.json", {
        "n_points": len(pts),
        "n_extrapolated": int((flagged | pm_out).sum()),
        "extrapolated": [[B[i], P[i]] for i in np.flatnonzero(flagged | pm_out)],
    })
    log.info("predict: %d FRF points", len(pts))
    return EXIT_OK


def cmd_error(run):
    """Tabulate the instantaneous relative error of a source against reference orbits."""
    from romforge.dlrom import relative_error

    cfg = run.cfg
    ec = cfg["error"]
    ref = ec["reference"]
    ref = ref if os.path.isabs(ref) else os.path.join(run.out, ref)
    points = read_frf(run.use_input("reference_csv", ref + ".csv"))
    orbits = load_orbits(run.use_input("reference_orbits", ref + ".forb"))
    if len(points) != len(orbits):
        raise ContractError("reference CSV and orbit file have different lengths")
    for p, o in zip(points, orbits):
        if p.omega != o.omega:
            raise ContractError("reference CSV does not round-trip the orbit frequencies")
    N_t = int(ec.get("N_t", 64))
    source = str(ec.get("source", "DL")).upper()
    if source not in SOURCES:
        raise ConfigError(f"error.source must be one of {SOURCES}")
    tau = 2 * np.pi * np.arange(N_t) / N_t
    U_ref = [sample_orbit(o, N_t) for o in orbits]
    if source == "FOM":
        U_src = U_ref
    else:
        basis = load_basis(run.use_input("basis", run.path("basis")))
        if basis.N_h != orbits[0].n_dof:
            raise ContractError("basis and reference orbits have different dimensions")
        if source == "DL":
            from romforge.dlrom import load_model, predict_uN

            model, _, _ = load_model(run.use_input("model", run.path("model")))
            U_src = [reconstruct(basis, predict_uN(model, tau, p.beta, p.phi)) for p in points]
        else:
            rom = load_reduced(run.use_input("reduced", run.path("reduced")))
            rp, wts = rom.to_poly_system(), _monitor_weights(rom)
            U_src = [None] * len(points)
            for beta in sorted({p.beta for p in points}):
                idx = [i for i, p in enumerate(points) if p.beta == beta]
                orbs = _solver_context(f"error: ROM phase sweep beta={beta}", phase_sweep, rp,
                                       beta, [points[i].phi for i in idx], weights=wts,
                                       H=orbits[0].H)
                for i, o in zip(idx, orbs):
                    U_src[i] = reconstruct(basis, sample_orbit(o, N_t))
    rows, worst = [], []
    for i, (a, b) in enumerate(zip(U_ref, U_src)):
        eps = relative_error(a, b)
        worst.append(eps.max())
        rows.extend([i, tau[k], eps[k]] for k in range(N_t))
    run.write_csv("error.csv", ["instance", "tau", "eps"], rows)
    print(f"{'instance':>8} {'beta':>10} {'phi':>8} {'max eps':>12}")
    for i, p in enumerate(points):
        print(f"{i:>8} {p.beta:>10.4g} {p.phi:>8.4f} {worst[i]:>12.4e}")
    return EXIT_OK


def _median_time(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def bench_instances(betas, n, phase_start, phase_step):
    """``n`` (beta, phi) instances: consecutive phases per beta, betas taken round-robin."""
    per = [[] for _ in betas]
    for k in range(n):
        per[k % len(betas)].append(phase_start + phase_step * (len(per[k % len(betas)]) + 1))
    return [(b, np.array(p)) for b, p in zip(betas, per) if p]


def cmd_bench(run):
    """Median wall time of FOM solves, POD-G solves and surrogate predictions."""
    from romforge.dlrom import eval_phase_map, load_model, predict_uN

    cfg = run.cfg
    bc = cfg["bench"]
    fom = build_system(cfg)
    rom = load_reduced(run.use_input("reduced", run.path("reduced")))
    rp, wts = rom.to_poly_system(), _monitor_weights(rom)
    model, pm, _ = load_model(run.use_input("model", run.path("model")))
    mon = fom.meta.get("monitor_dof", 0)
    betas = [float(b) for b in (bc.get("betas") or cfg["rom"]["betas"])]
    counts = [int(c) for c in bc["counts"]]
    repeats = int(bc.get("repeats", 5))
    N_t = int(bc.get("N_t", 64))
    H = _cont_cfg(cfg).H
    phi0, dphi = float(bc["phase_start"]), float(bc["phase_step"])
    if phi0 + dphi * (max(counts) // len(betas) + 1) >= np.pi:
        raise ConfigError("bench phase range exceeds (0, pi); lower counts or phase_step")

    # warm starts at phi0 are prepared outside the timed region
    starts = {}
    for beta in betas:
        starts[("FOM", beta)] = _solver_context("bench FOM start", phase_sweep, fom, beta,
                                                [phi0], dof=mon, H=H)[0]
        starts[("POD", beta)] = _solver_context("bench POD start", phase_sweep, rp, beta,
                                                [phi0], weights=wts, H=H)[0]
    tau = 2 * np.pi * np.arange(N_t) / N_t

    def solve(method, inst):
        sys_, kw = (fom, {"dof": mon}) if method == "FOM" else (rp, {"weights": wts})
        for beta, phis in inst:
            phase_sweep(sys_, beta, phis, start=starts[(method, beta)], max_dphi=dphi, **kw)

    def predict(inst):
        for beta, phis in inst:
            for phi in phis:
                eval_phase_map(pm, phi, beta)
                predict_uN(model, tau, beta, phi)

    rows = []
    for n in counts:
        inst = bench_instances(betas, n, phi0, dphi)
        for method in SOURCES:
            fn = (lambda: predict(inst)) if method == "DL" else (lambda m=method: solve(m, inst))
            try:
                sec = _median_time(fn, repeats)
            except (NonConvergence, StepCollapse) as exc:
                raise SolverFailure(f"bench {method} n={n}: {exc}") from exc
            rows.append([method, n, sec])
            log.info("bench: %s n=%d %.4f s", method, n, sec)
    run.write_csv("bench.csv", ["method", "n_instances", "seconds"], rows)
    t = {(m, n): s for m, n, s in rows}
    summary = {
        str(n): {"T_FOM": t[("FOM", n)], "T_POD": t[("POD", n)], "T_DL": t[("DL", n)],
                 "FOM_over_DL": t[("FOM", n)] / t[("DL", n)],
                 "POD_over_DL": t[("POD", n)] / t[("DL", n)],
                 "FOM_over_POD": t[("FOM", n)] / t[("POD", n)]}
        for n in counts
    }
    atomic_write_text(run.out_path("bench_summary.json"),
                      json.dumps({"timings": summary, "repeats": repeats}, indent=1,
                                 sort_keys=True))
    print(f"{'n':>6} {'T_FOM':>10} {'T_POD':>10} {'T_DL':>10} {'FOM/DL':>10} {'POD/DL':>10}")
    for n in counts:
        s = summary[str(n)]
        print(f"{n:>6} {s['T_FOM']:>10.4f} {s['T_POD']:>10.4f} {s['T_DL']:>10.4f} "
              f"{s['FOM_over_DL']:>10.1f} {s['POD_over_DL']:>10.1f}")
    return EXIT_OK


def verify_checks(seed=0):
    """Fast invariant checks; yields ``(name, passed, detail)``."""
    from romforge import dlrom, kernels, nn
    from romforge.hb import hb_solve

    rng = np.random.default_rng(seed)

    lin = make_duffing(k3=0.0)
    worst = 0.0
    for w in np.linspace(0.5, 1.5, 11):
        amp = hb_solve(lin, w, 0.2).harmonic_amplitude(1, 0)
        exact = 0.2 / np.hypot(1 - w * w, 2 * 0.05 * w)
        worst = max(worst, abs(amp / exact - 1))
    yield "linear HB amplitude", worst < 1e-9, f"{worst:.2e}"

    beam = make_vk_beam(8)
    V = np.linalg.qr(rng.normal(size=(beam.n_dof, 4)))[0]
    from romforge.pod import PodBasis

    basis = PodBasis(V, np.ones(4))
    err = galerkin_self_test(beam, basis, project_system(beam, basis), seed=seed)
    yield "Galerkin projection identity", err < 1e-10, f"{err:.2e}"

    x = rng.normal(size=(2, 6, 6, 2))
    W = rng.normal(size=(5, 5, 2, 3))
    y = rng.normal(size=nn.conv2d(x, W, 2).shape)
    lhs, rhs = np.vdot(nn.conv2d(x, W, 2), y), np.vdot(x, nn.conv2d_transpose(y, W, 2)[:, :6, :6])
    adj = abs(lhs - rhs) / abs(lhs)
    yield "conv / transposed-conv adjoint", adj < 1e-10, f"{adj:.2e}"

    net = nn.Network([nn.LayerSpec("dense", units=5, activation="elu"),
                      nn.LayerSpec("dense", units=3, activation="tanh")], (4,), seed=seed)
    xb = rng.normal(size=(3, 4))
    out, cache = net.forward(xb)
    grads, _ = net.backward(cache, out)
    ga = nn.flatten_grads(grads)
    p0 = net.flat_params()
    fd = np.empty_like(p0)

    def half_sq(p):
        net.set_flat_params(p)
        return 0.5 * np.sum(net(xb) ** 2)

    for i in range(p0.size):
        e = np.zeros_like(p0)
        e[i] = 1e-6
        fd[i] = (half_sq(p0 + e) - half_sq(p0 - e)) / 2e-6
    net.set_flat_params(p0)
    gerr = np.max(np.abs(fd - ga)) / np.max(np.abs(ga))
    yield "network gradient vs finite differences", gerr < 1e-5, f"{gerr:.2e}"

    L = rng.normal(size=(3, 20))
    Ln, _, st = dlrom.normalize(L)
    back, _ = dlrom.denormalize(st, Ln)
    rt = np.max(np.abs(back - L))
    yield "normalisation round trip", rt < 1e-14, f"{rt:.2e}"

    rows = np.repeat(np.arange(5), 4).astype(np.int64)
    a = rng.integers(0, 6, rows.size).astype(np.int64)
    coef = rng.normal(size=rows.size)
    U = rng.normal(size=(6, 7))
    o1, o2 = np.zeros((5, 7)), np.zeros((5, 7))
    kernels.scatter_lin(rows, coef, a, U, o1)
    kernels.numpy_kernels.scatter_lin(rows, coef, a, U, o2)
    kerr = np.max(np.abs(o1 - o2))
    yield f"kernel backend ({kernels.BACKEND}) vs numpy", kerr < 1e-12, f"{kerr:.2e}"


def cmd_verify(run):
    ok = True
    for name, passed, detail in verify_checks(run.seed):
        print(f"{'PASS' if passed else 'FAIL'}  {name}  ({detail})")
        ok &= bool(passed)
    return EXIT_OK if ok else EXIT_FAILURE


COMMANDS = {
    "fom-frf": cmd_fom_frf,
    "pod-build": cmd_pod_build,
    "rom-frf": cmd_rom_frf,
    "train": cmd_train,
    "predict": cmd_predict,
    "error": cmd_error,
    "bench": cmd_bench,
    "verify": cmd_verify,
}


def resolve_threads(cli_value):
    env = os.environ.get("ROMFORGE_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"ROMFORGE_THREADS must be an integer, got {env!r}") from None
    else:
        n = cli_value if cli_value is not None else 1
    if n < 1:
        raise ConfigError("thread count must be >= 1")
    return n


def build_parser():
    p = argparse.ArgumentParser(prog="romforge", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"romforge {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sp = sub.add_parser(name, help=(fn.__doc__ or "").strip().splitlines()[0] if fn.__doc__ else None)
        sp.add_argument("--config", help="JSON configuration file")
        sp.add_argument("--seed", type=int, default=0, help="random seed (u64)")
        sp.add_argument("--out", default=".", help="working/output directory")
        sp.add_argument("--threads", type=int, default=None, help="worker threads")
        sp.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        threads = resolve_threads(args.threads)
        cfg = load_config(args.config)
        run = Run(args.command, cfg, args.seed, args.out, threads)
        with threadpool_limits(limits=threads):
            code = COMMANDS[args.command](run)
        if code == EXIT_OK:
            run.finish()
        return code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (NonConvergence, StepCollapse, RankDeficient) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    except ContractError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
