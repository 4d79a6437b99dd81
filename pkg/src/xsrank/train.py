"""Training loop: AdamW with decoupled decay, Noam schedule, global-norm
clipping, per-epoch validation RankIC, checkpoint selection.

An epoch is ceil(train_days / m) iterations; sub-sampling has no natural
epoch boundary, so epochs are an accounting unit only.  Validation uses
full (not sub-sampled) cross-sections, matching inference conditions.
Checkpoint selection defaults to the best validation RankIC; the
second-best rule is available via `checkpoint_policy`.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from . import losses
from . import metrics
from . import model as model_mod
from .autodiff import NonFiniteError
from .sampler import MinibatchSampler, SubSampleSpec

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    k: int = 1000                 # stocks per sub-sampled cross-section
    m: int = 6                    # days per mini-batch
    epochs: int = 80
    base_lr: float = 1e-5         # peak rate when `scale` is left unset
    betas: tuple = (0.9, 0.98)
    eps: float = 1e-9
    clip_norm: float = 0.5
    weight_decay: float = 0.01
    warmup_steps: int = 4000
    scale: float | None = None    # Noam scale; derived from base_lr if None
    seed: int = 0
    loss: str = "monlr"           # or "mse" (regression ablation baseline)
    checkpoint_policy: str = "best"   # or "second_best"
    on_small_day: str = "error"

    def validate(self) -> None:
        if min(self.k, self.m, self.epochs, self.warmup_steps) < 1:
            raise ValueError("k, m, epochs, warmup_steps must be positive")
        if self.base_lr <= 0 or self.eps <= 0 or self.clip_norm <= 0:
            raise ValueError("base_lr, eps, clip_norm must be positive")
        if not all(0.0 < b < 1.0 for b in self.betas):
            raise ValueError(f"betas must lie in (0, 1), got {self.betas}")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if self.scale is not None and self.scale <= 0:
            raise ValueError("scale must be positive when given")
        if self.loss not in ("monlr", "mse"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.checkpoint_policy not in ("best", "second_best"):
            raise ValueError(f"unknown checkpoint_policy {self.checkpoint_policy!r}")


def noam_lr(step: int, warmup_steps: int, model_size: int, scale: float) -> float:
    """scale * model_size^-0.5 * min(step^-0.5, step * warmup^-1.5)."""
    if step < 1:
        raise ValueError(f"step must be >= 1, got {step}")
    return scale * model_size ** -0.5 * min(step ** -0.5,
                                            step * warmup_steps ** -1.5)


def resolve_scale(config: TrainConfig, model_size: int) -> float:
    """Unset scale is derived so the peak rate (at step = warmup) is base_lr."""
    if config.scale is not None:
        return config.scale
    return config.base_lr * math.sqrt(model_size * config.warmup_steps)


def adamw_step(tensors: dict, grads: dict, state: dict, lr: float,
               betas=(0.9, 0.98), eps: float = 1e-9,
               weight_decay: float = 0.0) -> bool:
    """One AdamW update in place; returns False (step rejected) on
    non-finite gradients.  Decay is decoupled: it scales the parameter
    directly and never enters the moment estimates."""
    for name in tensors:
        if not np.all(np.isfinite(grads[name])):
            log.warning("adamw: non-finite gradient in %s, step rejected", name)
            return False
    b1, b2 = betas
    state["t"] += 1
    t = state["t"]
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, p in tensors.items():
        g = grads[name]
        m = state["m"][name]
        v = state["v"][name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * ((m / c1) / (np.sqrt(v / c2) + eps) + weight_decay * p)
    return True


def init_adamw_state(tensors: dict) -> dict:
    return {"t": 0,
            "m": {k: np.zeros_like(v) for k, v in tensors.items()},
            "v": {k: np.zeros_like(v) for k, v in tensors.items()}}


def clip_global_norm(grads: dict, max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most max_norm."""
    total = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if total > max_norm:
        factor = max_norm / total
        for g in grads.values():
            g *= factor
    return total


@dataclass
class TrainResult:
    params: model_mod.ModelParams     # selected checkpoint
    step: int
    val_rankic: float | None
    history: list = field(default_factory=list)   # dicts: step, lr, loss, val_rankic
    rejected_steps: int = 0
    final_params: model_mod.ModelParams | None = None


def _loss_fn(name: str):
    return losses.pairwise_rank_loss if name == "monlr" else losses.mse_loss


def validation_rank_ic(params: model_mod.ModelParams, val_data: list) -> float | None:
    ics = []
    for cs in val_data:
        ic = metrics.spearman(model_mod.forward(params, cs), cs.returns)
        if ic is not None:
            ics.append(ic)
    return float(np.mean(ics)) if ics else None


def train(params: model_mod.ModelParams, train_data: list, val_data: list,
          config: TrainConfig, log_path: str | None = None) -> TrainResult:
    """Optimize `params` in place and return the selected checkpoint.

    Raises RuntimeError with the offending batch's identity if a forward
    pass produces non-finite values.
    """
    config.validate()
    if not train_data:
        raise ValueError("empty training data")
    sampler = MinibatchSampler(SubSampleSpec(config.m, config.k, config.seed,
                                             config.on_small_day))
    loss_fn = _loss_fn(config.loss)
    scale = resolve_scale(config, params.n_params)
    opt_state = init_adamw_state(params.tensors)
    steps_per_epoch = math.ceil(len(train_data) / config.m)
    history = []
    checkpoints = []          # (val_rankic, step, params copy), best first
    rejected = 0
    step = 0
    for epoch in range(config.epochs):
        for _ in range(steps_per_epoch):
            step += 1
            batch = sampler.draw(train_data)
            grads = {k: np.zeros_like(v) for k, v in params.tensors.items()}
            batch_loss = 0.0
            for cs in batch:
                try:
                    tape, scores, leaves = model_mod.forward_tape(params, cs)
                    loss = loss_fn(scores, cs.returns)
                    tape.backward(loss)
                except NonFiniteError as exc:
                    raise RuntimeError(
                        f"non-finite forward values at step {step} "
                        f"(epoch {epoch}, draw {sampler.draws}, date {cs.date}, "
                        f"sampler seed {config.seed}): {exc}") from exc
                batch_loss += float(loss.data)
                for name, leaf in leaves.items():
                    grads[name] += leaf.grad_or_zeros()
                tape.release()
            batch_loss /= len(batch)
            if not math.isfinite(batch_loss):
                raise RuntimeError(
                    f"non-finite loss at step {step} (epoch {epoch}, draw "
                    f"{sampler.draws}, dates {[cs.date for cs in batch]}, "
                    f"sampler seed {config.seed})")
            for g in grads.values():
                g /= len(batch)
            clip_global_norm(grads, config.clip_norm)
            lr = noam_lr(step, config.warmup_steps, params.n_params, scale)
            if not adamw_step(params.tensors, grads, opt_state, lr,
                              config.betas, config.eps, config.weight_decay):
                rejected += 1
            history.append({"step": step, "lr": lr, "loss": batch_loss,
                            "val_rankic": None})
        if val_data:
            val_ic = validation_rank_ic(params, val_data)
            history[-1]["val_rankic"] = val_ic
            if val_ic is not None:
                checkpoints.append((val_ic, step, params.copy()))
                checkpoints.sort(key=lambda c: (-c[0], c[1]))
                del checkpoints[2:]

    if checkpoints:
        pick = 1 if (config.checkpoint_policy == "second_best"
                     and len(checkpoints) > 1) else 0
        val_ic, best_step, best_params = checkpoints[pick]
        result = TrainResult(best_params, best_step, val_ic, history,
                             rejected, final_params=params)
    else:
        result = TrainResult(params, step, None, history, rejected,
                             final_params=params)
    if log_path is not None:
        write_train_log(log_path, history)
    return result


def write_train_log(path: str, history: list) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(("step", "lr", "loss", "val_rankic"))
        for row in history:
            val = row["val_rankic"]
            wr.writerow((row["step"], repr(row["lr"]), repr(row["loss"]),
                         "" if val is None else repr(val)))
