"""Ranking model: per-stock multi-frequency fusion, inter-stock attention,
MLP scorer.

Per stock, the high-frequency bars pass through two 1-D convolutions
(kernel 3, stride 1, ReLU between) and a linear projection into (T', D);
the low-frequency vector projects to a single (1, D) row.  A single-head
cross-attention with the lf row as the only query fuses them into one
embedding o_i.  Stacking the N embeddings, a single-head self-attention
models inter-stock structure, and a 2-layer MLP maps each row to a scalar
score.  There are no residual connections, layer norms, multiple heads,
or positional encodings; the same parameters serve any cross-section size.

Two equivalent forward implementations exist: `fuse_stock` and friends
walk one stock at a time and mirror the defining equations directly, while
`forward`/`forward_tape` run the whole cross-section through block-batched
tape ops (windows never cross per-stock block boundaries).  Tests assert
the two paths agree; training uses the batched one.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, asdict

import numpy as np

from . import autodiff as ad


@dataclass
class ModelConfig:
    dim: int = 16
    conv_kernel: int = 3
    conv_channels: int | None = None   # defaults to dim
    mlp_hidden: int | None = None      # defaults to 2*dim
    n_hf_fields: int = 6
    n_lf_fields: int = 4
    init_seed: int = 0

    @property
    def channels(self) -> int:
        return self.dim if self.conv_channels is None else self.conv_channels

    @property
    def hidden(self) -> int:
        return 2 * self.dim if self.mlp_hidden is None else self.mlp_hidden

    def validate(self) -> None:
        if self.dim < 1 or self.channels < 1 or self.hidden < 1:
            raise ValueError("dim, conv_channels, mlp_hidden must be positive")
        if self.conv_kernel < 1:
            raise ValueError("conv_kernel must be positive")
        if self.n_hf_fields < 1 or self.n_lf_fields < 1:
            raise ValueError("field counts must be positive")

    def min_bars(self) -> int:
        return 2 * (self.conv_kernel - 1) + 1


def _glorot(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class ModelParams:
    """All learnable arrays, keyed by name, plus the config that shaped them."""

    def __init__(self, config: ModelConfig, tensors: dict):
        self.config = config
        self.tensors = tensors

    @classmethod
    def init(cls, config: ModelConfig) -> "ModelParams":
        config.validate()
        rng = np.random.default_rng(config.init_seed)
        k, a, b = config.conv_kernel, config.n_hf_fields, config.n_lf_fields
        c, d, h = config.channels, config.dim, config.hidden
        t = {}
        t["conv1_w"] = _glorot(rng, (k, a, c), k * a, k * c)
        t["conv1_b"] = np.zeros(c)
        t["conv2_w"] = _glorot(rng, (k, c, c), k * c, k * c)
        t["conv2_b"] = np.zeros(c)
        t["hf_w"] = _glorot(rng, (c, d), c, d)
        t["hf_b"] = np.zeros(d)
        t["lf_w"] = _glorot(rng, (b, d), b, d)
        t["lf_b"] = np.zeros(d)
        for name in ("fuse_q", "fuse_k", "fuse_v", "stock_q", "stock_k", "stock_v"):
            t[name] = _glorot(rng, (d, d), d, d)
        t["mlp1_w"] = _glorot(rng, (d, h), d, h)
        t["mlp1_b"] = np.zeros(h)
        t["mlp2_w"] = _glorot(rng, (h, 1), h, 1)
        t["mlp2_b"] = np.zeros(1)
        return cls(config, t)

    @property
    def n_params(self) -> int:
        return sum(v.size for v in self.tensors.values())

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, {k: v.copy() for k, v in self.tensors.items()})


# ---------------------------------------------------------------------------
# reference per-stock path


def _as_tensors(params: ModelParams, tape: ad.Tape | None) -> dict:
    if tape is None:
        return {k: ad.constant(v) for k, v in params.tensors.items()}
    return {k: tape.leaf(v, k) for k, v in params.tensors.items()}


def fuse_stock(params: ModelParams, hf: np.ndarray, lf: np.ndarray) -> np.ndarray:
    """Fusion embedding o_i (1, D) for one stock, computed stock-at-a-time."""
    p = _as_tensors(params, None)
    return _fuse_one(p, params.config, np.asarray(hf, float),
                     np.asarray(lf, float)).data


def _fuse_one(p: dict, cfg: ModelConfig, hf: np.ndarray, lf: np.ndarray):
    if hf.ndim != 2 or hf.shape[1] != cfg.n_hf_fields:
        raise ad.ShapeError(f"hf shape {hf.shape} incompatible with "
                            f"{cfg.n_hf_fields} fields")
    if lf.shape != (cfg.n_lf_fields,):
        raise ad.ShapeError(f"lf shape {lf.shape} != ({cfg.n_lf_fields},)")
    if hf.shape[0] < cfg.min_bars():
        raise ad.ShapeError(f"need at least {cfg.min_bars()} bars, got {hf.shape[0]}")
    x = ad.constant(hf)
    h1 = ad.relu(ad.conv1d_bias(x, p["conv1_w"], p["conv1_b"]))
    h2 = ad.conv1d_bias(h1, p["conv2_w"], p["conv2_b"])
    e_hf = ad.linear(h2, p["hf_w"], p["hf_b"])                    # (T', D)
    e_lf = ad.linear(ad.constant(lf.reshape(1, -1)), p["lf_w"], p["lf_b"])
    q = ad.matmul(e_lf, p["fuse_q"])                              # (1, D)
    kk = ad.matmul(e_hf, p["fuse_k"])
    vv = ad.matmul(e_hf, p["fuse_v"])
    att = ad.softmax_rows(ad.scale(ad.matmul(q, ad.transpose(kk)),
                                   1.0 / np.sqrt(cfg.dim)))       # (1, T')
    return ad.matmul(att, vv)                                     # (1, D)


def interstock_forward(params: ModelParams, O: np.ndarray) -> np.ndarray:
    """Self-attention over stacked fusion embeddings: (N, D) -> (N, D)."""
    p = _as_tensors(params, None)
    return _interstock(p, params.config, ad.constant(np.asarray(O, float))).data


def _interstock(p: dict, cfg: ModelConfig, O):
    q = ad.matmul(O, p["stock_q"])
    k = ad.matmul(O, p["stock_k"])
    v = ad.matmul(O, p["stock_v"])
    att = ad.softmax_rows(ad.scale(ad.matmul(q, ad.transpose(k)),
                                   1.0 / np.sqrt(cfg.dim)))
    return ad.matmul(att, v)


def score(params: ModelParams, R: np.ndarray) -> np.ndarray:
    """Row-wise MLP scores: (N, D) -> (N,)."""
    p = _as_tensors(params, None)
    return _score(p, ad.constant(np.asarray(R, float))).data.reshape(-1)


def _score(p: dict, R):
    h = ad.relu(ad.linear(R, p["mlp1_w"], p["mlp1_b"]))
    return ad.linear(h, p["mlp2_w"], p["mlp2_b"])                 # (N, 1)


def forward_perstock(params: ModelParams, cs) -> np.ndarray:
    """Reference composition walking the cross-section one stock at a time."""
    p = _as_tensors(params, None)
    cfg = params.config
    rows = [_fuse_one(p, cfg, pan.hf, pan.lf) for pan in cs.panels]
    return _score(p, _interstock(p, cfg, ad.concat_rows(rows))).data.reshape(-1)


# ---------------------------------------------------------------------------
# batched path


def _stack_inputs(params: ModelParams, cs) -> tuple:
    cfg = params.config
    shapes = {pan.hf.shape for pan in cs.panels}
    if len(shapes) != 1:
        raise ad.ShapeError(f"{cs.date}: panels have mixed hf shapes {shapes}")
    (T, a), = shapes
    if a != cfg.n_hf_fields:
        raise ad.ShapeError(f"hf field count {a} != configured {cfg.n_hf_fields}")
    if T < cfg.min_bars():
        raise ad.ShapeError(f"need at least {cfg.min_bars()} bars, got {T}")
    hf = np.stack([pan.hf for pan in cs.panels])                  # (N, T, a)
    lf = np.stack([pan.lf for pan in cs.panels])                  # (N, b)
    if lf.shape[1] != cfg.n_lf_fields:
        raise ad.ShapeError(f"lf field count {lf.shape[1]} != configured "
                            f"{cfg.n_lf_fields}")
    return hf, lf


def _im2col_const(stacked: np.ndarray, k: int, block_len: int) -> np.ndarray:
    total, c = stacked.shape
    n_blocks = total // block_len
    t_out = block_len - k + 1
    base = (np.arange(n_blocks)[:, None] * block_len
            + np.arange(t_out)[None, :]).reshape(-1, 1)
    return stacked[base + np.arange(k)[None, :]].reshape(n_blocks * t_out, k * c)


def _forward_graph(p: dict, cfg: ModelConfig, hf: np.ndarray, lf: np.ndarray):
    N, T, a = hf.shape
    k, c, d = cfg.conv_kernel, cfg.channels, cfg.dim
    t1 = T - k + 1
    t2 = t1 - k + 1
    cols1 = ad.constant(_im2col_const(hf.reshape(N * T, a), k, T))
    h1 = ad.relu(ad.add_rowvec(ad.matmul(cols1, ad.reshape(p["conv1_w"], k * a, c)),
                               p["conv1_b"]))                     # (N*t1, c)
    cols2 = ad.im2col_blocks(h1, k, t1)
    h2 = ad.add_rowvec(ad.matmul(cols2, ad.reshape(p["conv2_w"], k * c, c)),
                       p["conv2_b"])                              # (N*t2, c)
    e_hf = ad.linear(h2, p["hf_w"], p["hf_b"])                    # (N*t2, D)
    e_lf = ad.linear(ad.constant(lf), p["lf_w"], p["lf_b"])       # (N, D)
    q = ad.matmul(e_lf, p["fuse_q"])
    kk = ad.matmul(e_hf, p["fuse_k"])
    vv = ad.matmul(e_hf, p["fuse_v"])
    logits = ad.reshape(ad.sum_rows(ad.mul(kk, ad.repeat_rows(q, t2))), N, t2)
    att = ad.softmax_rows(ad.scale(logits, 1.0 / np.sqrt(d)))     # (N, t2)
    o = ad.blocksum_rows(ad.mul_colvec(vv, ad.reshape(att, N * t2, 1)), t2)
    return _score(p, _interstock(p, cfg, o))                      # (N, 1)


def forward(params: ModelParams, cs) -> np.ndarray:
    """Scores for a normalized, filtered cross-section; deterministic."""
    hf, lf = _stack_inputs(params, cs)
    p = _as_tensors(params, None)
    return _forward_graph(p, params.config, hf, lf).data.reshape(-1)


def forward_tape(params: ModelParams, cs) -> tuple:
    """(tape, score column tensor, parameter leaf map) for training."""
    hf, lf = _stack_inputs(params, cs)
    tape = ad.Tape()
    leaves = _as_tensors(params, tape)
    scores = _forward_graph(leaves, params.config, hf, lf)
    return tape, scores, leaves


# ---------------------------------------------------------------------------
# checkpoints


CHECKPOINT_VERSION = 1


def config_hash(config: ModelConfig) -> str:
    blob = json.dumps(asdict(config), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def _tensor_checksum(tensors: dict) -> str:
    h = hashlib.sha256()
    for name in sorted(tensors):
        h.update(name.encode())
        arr = np.ascontiguousarray(tensors[name])
        h.update(str(arr.shape).encode())
        h.update(arr.tobytes())
    return h.hexdigest()


def save_checkpoint(path: str, params: ModelParams, step: int,
                    val_rankic: float | None, extra: dict | None = None) -> None:
    """Atomic write (temp file then rename) of params plus metadata."""
    meta = {
        "version": CHECKPOINT_VERSION,
        "model_config": asdict(params.config),
        "config_hash": config_hash(params.config),
        "step": int(step),
        "val_rankic": None if val_rankic is None else float(val_rankic),
        "checksum": _tensor_checksum(params.tensors),
    }
    if extra:
        meta["extra"] = extra
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(meta)), **params.tensors)
    os.replace(tmp, path)


def load_checkpoint(path: str) -> tuple:
    """Read (ModelParams, meta dict); verifies the content checksum."""
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["__meta__"]))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version "
                             f"{meta.get('version')}")
        tensors = {k: z[k] for k in z.files if k != "__meta__"}
    if _tensor_checksum(tensors) != meta["checksum"]:
        raise ValueError(f"{path}: checksum mismatch, file corrupt")
    config = ModelConfig(**meta["model_config"])
    return ModelParams(config, tensors), meta
