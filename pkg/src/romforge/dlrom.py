"""Deep-learning surrogate of the reduced dynamics and the phase-to-frequency map.

The surrogate has three networks: an encoder ``u_N -> u_n``, a decoder
``u_n -> u_N`` and a feed-forward network ``(tau, beta, phi) -> u_n``. They
are trained jointly on the two-term loss

    w/2 |u_N - D(F(x))|^2 + (1 - w)/2 |E(u_N) - F(x)|^2,

averaged over the mini-batch. At prediction time only ``D(F(x))`` is used.
"""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from romforge import nn
from romforge.errors import ContractError, DegenerateFeature, DegenerateReference, TrainingDiverged
from romforge.io import atomic_write_text

__all__ = [
    "TrainConfig",
    "NormStats",
    "DlromModel",
    "PhaseMapModel",
    "normalize",
    "denormalize",
    "reshape_latent_input",
    "flatten_latent_image",
    "build_autoencoder",
    "loss_and_grads",
    "loss_per_example",
    "train_dlrom",
    "predict_uN",
    "train_phase_map",
    "eval_phase_map",
    "relative_error",
    "split_instances",
    "save_model",
    "load_model",
]


@dataclass
class TrainConfig:
    """Optimiser and early-stopping settings.

    The defaults are the surrogate recipe; :meth:`phase_map_defaults` gives the
    recipe for the phase-to-frequency network.
    """

    learning_rate: float = 1e-4
    batch_size: int = 40
    max_epochs: int = 10000
    patience_epochs: int = 500
    split_ratio: float = 0.8
    seed: int = 0
    omega_h: float = 0.5
    latent_dim: int = 3
    dfnn_depth: int = 12
    dfnn_width: int = 50
    lr_decay: float = 1.0
    min_learning_rate: float = 0.0

    def __post_init__(self):
        if not 0 < self.split_ratio < 1:
            raise ContractError("split_ratio must lie in (0, 1)")
        if self.patience_epochs > self.max_epochs:
            raise ContractError("patience_epochs cannot exceed max_epochs")
        if self.batch_size < 1 or self.max_epochs < 1 or self.learning_rate <= 0:
            raise ContractError("batch_size, max_epochs and learning_rate must be positive")
        if not 0 <= self.omega_h <= 1:
            raise ContractError("omega_h must lie in [0, 1]")
        if not 0 < self.lr_decay <= 1:
            raise ContractError("lr_decay must lie in (0, 1]")
        if self.dfnn_depth < 1 or self.dfnn_width < 1 or self.latent_dim < 1:
            raise ContractError("network sizes must be positive")

    @classmethod
    def phase_map_defaults(cls, **overrides):
        base = dict(learning_rate=1e-3, batch_size=20, max_epochs=2000, patience_epochs=50,
                    split_ratio=0.5, dfnn_depth=10, dfnn_width=64)
        base.update(overrides)
        return cls(**base)

    @classmethod
    def from_dict(cls, doc):
        known = {k: v for k, v in doc.items() if k in cls.__dataclass_fields__}
        return cls(**known)


# -- normalisation --------------------------------------------------------------------


@dataclass
class NormStats:
    """Per-feature extrema of the parameter rows and one global pair for the states."""

    L_min: np.ndarray
    L_max: np.ndarray
    S_min: float = 0.0
    S_max: float = 1.0

    def __post_init__(self):
        self.L_min = np.asarray(self.L_min, dtype=float).ravel()
        self.L_max = np.asarray(self.L_max, dtype=float).ravel()

    @property
    def L_scale(self):
        span = self.L_max - self.L_min
        return np.where(span > 0, span, 1.0)

    @property
    def S_scale(self):
        span = self.S_max - self.S_min
        return span if span > 0 else 1.0

    def to_dict(self):
        return {"L_min": self.L_min.tolist(), "L_max": self.L_max.tolist(),
                "S_min": float(self.S_min), "S_max": float(self.S_max)}

    @classmethod
    def from_dict(cls, doc):
        return cls(doc["L_min"], doc["L_max"], doc["S_min"], doc["S_max"])


def _stats_from(L, S, allow_degenerate):
    L_min, L_max = L.min(axis=1), L.max(axis=1)
    bad = np.flatnonzero(L_max == L_min)
    if S is not None:
        S_min, S_max = float(S.min()), float(S.max())
    else:
        S_min, S_max = 0.0, 1.0
    if not allow_degenerate:
        if bad.size:
            raise DegenerateFeature(f"parameter feature(s) {bad.tolist()} are constant")
        if S is not None and S_max == S_min:
            raise DegenerateFeature("snapshot matrix is constant")
    return NormStats(L_min, L_max, S_min, S_max)


def normalize(L, S_uN=None, stats=None, allow_degenerate=False):
    """Affine map to ``[0, 1]`` using training extrema; values are never clipped.

    Parameters
    ----------
    L : (n_features, m) array
        Parameter rows, one column per sample.
    S_uN : (N, m) array, optional
        States, scaled by a single global ``(min, max)`` pair.
    stats : NormStats, optional
        Reuse existing statistics (validation/test data). When omitted they are
        computed from the arguments.
    allow_degenerate : bool
        Constant features raise :class:`DegenerateFeature` unless this is set,
        in which case they are shifted to zero with unit scale.

    Returns
    -------
    L_n, S_n, stats
    """
    L = np.atleast_2d(np.asarray(L, dtype=float))
    S = None if S_uN is None else np.atleast_2d(np.asarray(S_uN, dtype=float))
    if stats is None:
        stats = _stats_from(L, S, allow_degenerate)
    if L.shape[0] != stats.L_min.size:
        raise ContractError("parameter feature count does not match the statistics")
    L_n = (L - stats.L_min[:, None]) / stats.L_scale[:, None]
    S_n = None if S is None else (S - stats.S_min) / stats.S_scale
    return L_n, S_n, stats


def denormalize(stats, L_n=None, S_n=None):
    """Inverse of :func:`normalize`; returns ``(L, S)`` (``None`` where not given)."""
    L = None if L_n is None else np.asarray(L_n) * stats.L_scale[:, None] + stats.L_min[:, None]
    S = None if S_n is None else np.asarray(S_n) * stats.S_scale + stats.S_min
    return L, S


# -- architecture ------------------------------------------------------------------------


def image_side(N):
    return int(np.ceil(np.sqrt(N) - 1e-12)) if N > 0 else 0


def reshape_latent_input(u_N):
    """Zero-pad a vector (or a batch of rows) to ``s^2`` and reshape to ``(s, s, 1)``."""
    u = np.asarray(u_N, dtype=float)
    single = u.ndim == 1
    u = np.atleast_2d(u)
    N = u.shape[1]
    if N < 1:
        raise ContractError("need at least one entry")
    s = image_side(N)
    img = np.zeros((u.shape[0], s * s))
    img[:, :N] = u
    img = img.reshape(u.shape[0], s, s, 1)
    return img[0] if single else img


def flatten_latent_image(img, N):
    """Inverse of :func:`reshape_latent_input`: row-major flatten and drop the padding."""
    img = np.asarray(img, dtype=float)
    if img.ndim == 3:
        return img.reshape(-1)[:N]
    return img.reshape(img.shape[0], -1)[:, :N]


CONV_MIN_SIDE = 8


def _conv_side(s):
    # three stride-2 stages need a side divisible by 8 to be restored exactly
    return 8 * -(-s // 8)


def build_autoencoder(N, n, seed_seq):
    """Encoder and decoder for reduced dimension ``N`` and latent dimension ``n``.

    Convolutional (5x5 kernels, 8/16/32/64 filters, strides 1/2/2/2) when the
    padded image side is at least 8, otherwise dense ``N -> 64 -> n`` and
    ``n -> 64 -> N``. Hidden layers use ELU; outputs are linear.
    """
    r_enc, r_dec = (np.random.default_rng(s) for s in seed_seq.spawn(2))
    s = image_side(N)
    if s < CONV_MIN_SIDE:
        enc = nn.Network([nn.LayerSpec("dense", units=64, activation="elu"),
                          nn.LayerSpec("dense", units=n)], (N,), rng=r_enc)
        dec = nn.Network([nn.LayerSpec("dense", units=64, activation="elu"),
                          nn.LayerSpec("dense", units=N)], (n,), rng=r_dec)
        return enc, dec, "dense"
    S = _conv_side(s)
    enc = nn.Network([
        nn.LayerSpec("reshape", shape=(s, s, 1)),
        nn.LayerSpec("conv2d", kernel=5, filters=8, stride=1, activation="elu"),
        nn.LayerSpec("conv2d", kernel=5, filters=16, stride=2, activation="elu"),
        nn.LayerSpec("conv2d", kernel=5, filters=32, stride=2, activation="elu"),
        nn.LayerSpec("conv2d", kernel=5, filters=64, stride=2, activation="elu"),
        nn.LayerSpec("reshape", shape=(_conv_side(s) ** 2 // 64 * 64,)),
        nn.LayerSpec("dense", units=n),
    ], (s * s,), rng=r_enc)
    q = S // 8
    dec = nn.Network([
        nn.LayerSpec("dense", units=q * q * 64, activation="elu"),
        nn.LayerSpec("reshape", shape=(q, q, 64)),
        nn.LayerSpec("conv2d_transpose", kernel=5, filters=32, stride=2, activation="elu"),
        nn.LayerSpec("conv2d_transpose", kernel=5, filters=16, stride=2, activation="elu"),
        nn.LayerSpec("conv2d_transpose", kernel=5, filters=8, stride=2, activation="elu"),
        nn.LayerSpec("conv2d_transpose", kernel=5, filters=1, stride=1),
        nn.LayerSpec("reshape", shape=(S * S,)),
    ], (n,), rng=r_dec)
    return enc, dec, "conv"


def build_dfnn(n_in, n_out, depth, width, rng, activation="elu", init="he_uniform"):
    specs = [nn.LayerSpec("dense", units=width, activation=activation) for _ in range(depth - 1)]
    specs.append(nn.LayerSpec("dense", units=n_out))
    return nn.Network(specs, (n_in,), init=init, rng=rng)


@dataclass
class DlromModel:
    encoder: nn.Network
    decoder: nn.Network
    dfnn: nn.Network
    N: int
    n: int
    norm_stats: NormStats
    omega_h: float = 0.5
    kind: str = "dense"
    config: dict = field(default_factory=dict)
    history: list = field(default_factory=list)

    def __post_init__(self):
        if self.n > self.N:
            raise ContractError("latent dimension cannot exceed the reduced dimension")
        if self.dfnn.output_shape != (self.n,) or self.decoder.input_shape != (self.n,):
            raise ContractError("latent dimensions of dfnn/decoder disagree")

    # -- encoder/decoder adapters between u_N rows and network tensors --
    def encoder_input(self, U):
        if self.kind == "dense":
            return U
        s = image_side(self.N)
        X = np.zeros((U.shape[0], s * s))
        X[:, : self.N] = U
        return X

    def decoder_output(self, Y):
        if self.kind == "dense":
            return Y
        s, S = image_side(self.N), _conv_side(image_side(self.N))
        return Y.reshape(-1, S, S)[:, :s, :s].reshape(-1, s * s)[:, : self.N]

    def decoder_output_grad(self, G):
        if self.kind == "dense":
            return G
        s, S = image_side(self.N), _conv_side(image_side(self.N))
        full = np.zeros((G.shape[0], s * s))
        full[:, : self.N] = G
        out = np.zeros((G.shape[0], S, S))
        out[:, :s, :s] = full.reshape(-1, s, s)
        return out.reshape(-1, S * S)


@dataclass
class PhaseMapModel:
    net: nn.Network
    norm_stats: NormStats
    beta_range: tuple
    phi_range: tuple
    config: dict = field(default_factory=dict)
    history: list = field(default_factory=list)

    def __post_init__(self):
        if self.net.input_shape != (3,) or self.net.output_shape != (1,):
            raise ContractError("phase map must be (sin phi, cos phi, beta) -> omega")


# -- loss -------------------------------------------------------------------------------


def loss_and_grads(model, U, X, need_grads=True):
    """Mean two-term loss over a batch and the parameter gradients of all three networks.

    ``U`` holds normalised states as rows, ``X`` normalised ``(tau, beta, phi)`` rows.
    Returns ``(loss, per_example, grads)`` with ``grads = (g_enc, g_dec, g_dfnn)``.
    """
    U = np.atleast_2d(U)
    X = np.atleast_2d(X)
    if U.shape[1] != model.N or X.shape[1] != model.dfnn.input_shape[0] or U.shape[0] != X.shape[0]:
        raise ContractError("batch dimensions do not match the model")
    B = U.shape[0]
    w = model.omega_h
    z, c_f = nn.forward(model.dfnn, X)
    y, c_d = nn.forward(model.decoder, z)
    r1 = model.decoder_output(y) - U
    e, c_e = nn.forward(model.encoder, model.encoder_input(U))
    r2 = e - z
    per = 0.5 * w * np.sum(r1 * r1, axis=1) + 0.5 * (1 - w) * np.sum(r2 * r2, axis=1)
    loss = float(per.mean())
    if not need_grads:
        return loss, per, None
    g_dec, dz = nn.backward(model.decoder, c_d, model.decoder_output_grad(w * r1 / B))
    g_enc, _ = nn.backward(model.encoder, c_e, (1 - w) * r2 / B)
    g_f, _ = nn.backward(model.dfnn, c_f, dz - (1 - w) * r2 / B)
    return loss, per, (g_enc, g_dec, g_f)


def loss_per_example(model, u_N, x):
    """Loss and gradients for one normalised example ``(u_N, (tau, beta, phi))``."""
    loss, _, grads = loss_and_grads(model, np.atleast_2d(u_N), np.atleast_2d(x))
    return loss, grads


# -- training ----------------------------------------------------------------------------


def split_instances(n_instances, ratio, rng):
    """Seeded split of instance ids into (train, validation).

    With a single instance both sets are that instance.
    """
    if n_instances < 1:
        raise ContractError("no instances to split")
    if n_instances == 1:
        return np.array([0]), np.array([0])
    perm = rng.permutation(n_instances)
    n_train = min(max(int(round(ratio * n_instances)), 1), n_instances - 1)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def _columns(n_t, instances):
    return np.concatenate([np.arange(i * n_t, (i + 1) * n_t) for i in instances])


def _fit(networks, batch_fn, val_fn, n_train, cfg, rng):
    """Generic Adam/early-stopping loop shared by both trainers."""
    theta = nn.share_flat_buffer(networks)
    params = [[theta]]
    state = nn.AdamState.for_params(params, lr=cfg.learning_rate)
    best = (np.inf, -1, [net.copy_params() for net in networks])
    history = []
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(n_train)
        tot = 0.0
        for start in range(0, n_train, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss, grads = batch_fn(idx)
            if not np.isfinite(loss):
                raise TrainingDiverged(f"non-finite training loss at epoch {epoch}")
            nn.adam_step(state, params, [[nn.flatten_grads(grads)]])
            tot += loss * idx.size
        val = val_fn()
        if not np.isfinite(val):
            raise TrainingDiverged(f"non-finite validation loss at epoch {epoch}")
        history.append((epoch, tot / n_train, val))
        if val < best[0]:
            best = (val, epoch, [net.copy_params() for net in networks])
        elif epoch - best[1] >= cfg.patience_epochs:
            break
        state.lr = max(state.lr * cfg.lr_decay, cfg.min_learning_rate)
    for net, p in zip(networks, best[2]):
        net.load_params(p)
    return history


def train_dlrom(snap, cfg=None, N_latent=None):
    """Train encoder, decoder and dfnn on reduced snapshots.

    Parameters
    ----------
    snap : SnapshotSet
        Columns of reduced states ``u_N`` with parameter rows ``(tau, beta, phi)``.
    cfg : TrainConfig
    N_latent : int, optional
        Overrides ``cfg.latent_dim``; capped at ``N``.

    Returns
    -------
    DlromModel
        Parameters restored to the best validation epoch.
    """
    cfg = cfg or TrainConfig()
    if snap.n_snapshots < cfg.batch_size:
        raise ContractError("fewer snapshots than the batch size")
    N = snap.S_u.shape[0]
    n = min(N_latent or cfg.latent_dim, N)
    ss = np.random.SeedSequence(cfg.seed)
    s_split, s_ae, s_dfnn, s_shuffle = ss.spawn(4)
    tr, va = split_instances(snap.n_instances, cfg.split_ratio, np.random.default_rng(s_split))
    ctr, cva = _columns(snap.n_t, tr), _columns(snap.n_t, va)
    # statistics from the training split only
    L_tr, S_tr, stats = normalize(snap.L[:, ctr], snap.S_u[:, ctr], allow_degenerate=True)
    L_va, S_va, _ = normalize(snap.L[:, cva], snap.S_u[:, cva], stats=stats)
    U_tr, X_tr = np.ascontiguousarray(S_tr.T), np.ascontiguousarray(L_tr.T)
    U_va, X_va = np.ascontiguousarray(S_va.T), np.ascontiguousarray(L_va.T)
    enc, dec, kind = build_autoencoder(N, n, s_ae)
    dfnn = build_dfnn(snap.L.shape[0], n, cfg.dfnn_depth, cfg.dfnn_width,
                      np.random.default_rng(s_dfnn))
    model = DlromModel(enc, dec, dfnn, N, n, stats, cfg.omega_h, kind, asdict(cfg))

    def batch(idx):
        loss, _, (ge, gd, gf) = loss_and_grads(model, U_tr[idx], X_tr[idx])
        return loss, ge + gd + gf

    def val():
        return loss_and_grads(model, U_va, X_va, need_grads=False)[0]

    model.history = _fit([enc, dec, dfnn], batch, val, U_tr.shape[0], cfg,
                         np.random.default_rng(s_shuffle))
    return model


def predict_uN(model, tau, beta, phi, return_info=False):
    """Reduced states ``D(F(tau, beta, phi))`` in physical scale, one column per query.

    Inputs broadcast against each other. Only the dfnn and decoder are evaluated.
    With ``return_info`` a dict flags queries outside the training box.
    """
    tau, beta, phi = np.broadcast_arrays(*(np.atleast_1d(np.asarray(a, dtype=float))
                                           for a in (tau, beta, phi)))
    L = np.vstack([tau.ravel(), beta.ravel(), phi.ravel()])
    L_n, _, _ = normalize(L, stats=model.norm_stats)
    z = nn.forward(model.dfnn, L_n.T)[0]
    y = model.decoder_output(nn.forward(model.decoder, z)[0])
    _, U = denormalize(model.norm_stats, S_n=y.T)
    if not return_info:
        return U
    tol = 1e-12
    outside = ((L < model.norm_stats.L_min[:, None] - tol) | (L > model.norm_stats.L_max[:, None] + tol)).any(axis=0)
    return U, {"extrapolated": outside, "any_extrapolated": bool(outside.any())}


# -- phase-to-frequency map ---------------------------------------------------------------


def _phase_features(phi, beta):
    phi = np.asarray(phi, dtype=float).ravel()
    beta = np.broadcast_to(np.asarray(beta, dtype=float), phi.shape).ravel()
    return np.vstack([np.sin(phi), np.cos(phi), beta])


def train_phase_map(pairs, cfg=None):
    """Fit ``(sin phi, cos phi, beta) -> omega`` from ``(phi, beta, omega)`` triples.

    The network has ``cfg.dfnn_depth - 1`` tanh hidden layers of ``cfg.dfnn_width``
    units and a linear scalar output, Glorot-normal initialised. Inputs and
    target are scaled per feature with training extrema.
    """
    cfg = cfg or TrainConfig.phase_map_defaults()
    P = np.asarray(pairs, dtype=float)
    if P.ndim != 2 or P.shape[1] != 3 or P.shape[0] < 2:
        raise ContractError("pairs must be an (m >= 2, 3) array of (phi, beta, omega)")
    ss = np.random.SeedSequence(cfg.seed)
    s_split, s_init, s_shuffle = ss.spawn(3)
    tr, va = split_instances(P.shape[0], cfg.split_ratio, np.random.default_rng(s_split))
    F = _phase_features(P[:, 0], P[:, 1])
    F_tr, W_tr, stats = normalize(F[:, tr], P[tr, 2][None, :], allow_degenerate=True)
    F_va, W_va, _ = normalize(F[:, va], P[va, 2][None, :], stats=stats)
    X_tr, Y_tr = F_tr.T.copy(), W_tr.T.copy()
    X_va, Y_va = F_va.T.copy(), W_va.T.copy()
    net = build_dfnn(3, 1, cfg.dfnn_depth, cfg.dfnn_width, np.random.default_rng(s_init),
                     activation="tanh", init="glorot_normal")

    def batch(idx):
        y, cache = nn.forward(net, X_tr[idx])
        r = y - Y_tr[idx]
        g, _ = nn.backward(net, cache, r / idx.size)
        return 0.5 * float(np.mean(np.sum(r * r, axis=1))), g

    def val():
        r = net(X_va) - Y_va
        return 0.5 * float(np.mean(np.sum(r * r, axis=1)))

    history = _fit([net], batch, val, X_tr.shape[0], cfg, np.random.default_rng(s_shuffle))
    return PhaseMapModel(net, stats, (float(P[:, 1].min()), float(P[:, 1].max())),
                         (float(P[:, 0].min()), float(P[:, 0].max())), asdict(cfg), history)


def eval_phase_map(model, phi, beta):
    """Predicted excitation frequency for phase(s) ``phi`` at load(s) ``beta``."""
    phi_arr = np.asarray(phi, dtype=float)
    shape = np.broadcast(phi_arr, np.asarray(beta)).shape
    F = _phase_features(np.broadcast_to(phi_arr, shape), np.broadcast_to(beta, shape))
    F_n, _, _ = normalize(F, stats=model.norm_stats)
    _, W = denormalize(model.norm_stats, S_n=model.net(F_n.T).T)
    W = W.ravel()
    return float(W[0]) if shape == () else W.reshape(shape)


# -- error measure ----------------------------------------------------------------------


def relative_error(U_ref, U_approx):
    """Instantaneous error normalised by the RMS reference norm over the period.

    ``eps(t_k) = |u(t_k) - u~(t_k)| / sqrt(mean_j |u(t_j)|^2)``; columns are time samples.
    """
    U_ref = np.atleast_2d(np.asarray(U_ref, dtype=float))
    U_approx = np.atleast_2d(np.asarray(U_approx, dtype=float))
    if U_ref.shape != U_approx.shape or U_ref.shape[1] < 1:
        raise ContractError("reference and approximation shapes differ")
    denom = np.sqrt(np.mean(np.sum(U_ref**2, axis=0)))
    if denom == 0:
        raise DegenerateReference("reference trajectory is identically zero")
    return np.linalg.norm(U_ref - U_approx, axis=0) / denom


# -- persistence ------------------------------------------------------------------------


def _history_csv(history):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "train_loss", "val_loss"])
    for e, t, v in history:
        w.writerow([e, repr(float(t)), repr(float(v))])
    return buf.getvalue()


def save_model(directory, model, phase_map=None, extra=None):
    """Write a model bundle directory: NNCK checkpoints, manifest and loss histories."""
    os.makedirs(directory, exist_ok=True)
    nn.save_network(os.path.join(directory, "encoder.nnck"), model.encoder)
    nn.save_network(os.path.join(directory, "decoder.nnck"), model.decoder)
    nn.save_network(os.path.join(directory, "dfnn.nnck"), model.dfnn)
    atomic_write_text(os.path.join(directory, "history.csv"), _history_csv(model.history))
    manifest = {
        "format": "romforge.dlrom",
        "version": 1,
        "N": model.N,
        "n": model.n,
        "omega_h": model.omega_h,
        "kind": model.kind,
        "norm_stats": model.norm_stats.to_dict(),
        "config": model.config,
        "best_epoch": int(np.argmin([h[2] for h in model.history])) if model.history else None,
    }
    if phase_map is not None:
        nn.save_network(os.path.join(directory, "phasemap.nnck"), phase_map.net)
        atomic_write_text(os.path.join(directory, "phasemap_history.csv"),
                          _history_csv(phase_map.history))
        manifest["phase_map"] = {
            "norm_stats": phase_map.norm_stats.to_dict(),
            "beta_range": list(phase_map.beta_range),
            "phi_range": list(phase_map.phi_range),
            "config": phase_map.config,
        }
    if extra:
        manifest.update(extra)
    atomic_write_text(os.path.join(directory, "manifest.json"),
                      json.dumps(manifest, indent=1, sort_keys=True))
    return manifest


def _read_history(path):
    if not os.path.exists(path):
        return []
    with open(path) as fh:
        rows = list(csv.reader(fh))[1:]
    return [(int(r[0]), float(r[1]), float(r[2])) for r in rows]


def load_model(directory):
    """Load ``(DlromModel, PhaseMapModel or None, manifest)`` from a bundle directory."""
    path = os.path.join(directory, "manifest.json")
    if not os.path.isfile(path):
        raise ContractError(f"{directory} is not a model bundle (no manifest.json)")
    with open(path) as fh:
        man = json.load(fh)
    if man.get("format") != "romforge.dlrom":
        raise ContractError(f"{directory} is not a model bundle")
    model = DlromModel(
        nn.load_network(os.path.join(directory, "encoder.nnck")),
        nn.load_network(os.path.join(directory, "decoder.nnck")),
        nn.load_network(os.path.join(directory, "dfnn.nnck")),
        man["N"], man["n"], NormStats.from_dict(man["norm_stats"]), man["omega_h"], man["kind"],
        man.get("config", {}), _read_history(os.path.join(directory, "history.csv")),
    )
    pm = None
    if "phase_map" in man:
        p = man["phase_map"]
        pm = PhaseMapModel(nn.load_network(os.path.join(directory, "phasemap.nnck")),
                           NormStats.from_dict(p["norm_stats"]), tuple(p["beta_range"]),
                           tuple(p["phi_range"]), p.get("config", {}),
                           _read_history(os.path.join(directory, "phasemap_history.csv")))
    return model, pm, man
