"""Three-phase training: dense, sparse with selective weight decay, re-dense.

Each phase runs momentum SGD at its own learning rate (defaults 0.1, 0.01,
0.001) with a shared momentum of 0.9. The sparse phase recomputes the
magnitude mask every epoch along a linear sparsity ramp, re-applies the mask
after every optimizer step, and adds the selective penalty a*TWD on the
sub-threshold survivor subset. The re-dense phase lifts the mask so pruned
weights resume training from zero.

Reported train loss per epoch decomposes as err + wd + a_twd (batch means).
Validation loss is plain BCE. Early stopping watches validation AUC and
restores the best epoch's weights; it is off by default in the sparse phase
so the ramp always reaches its final sparsity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data_pipeline import DatasetSplit
from .errors import ConfigError, NonFiniteLoss, SingleClassInput
from .lstm_net import (NetworkParams, backward, bce_loss, forward_batch,
                       init_params, is_weight_name)
from .metrics import roc_curve
from .optimizer import ParamTree, SgdmState, l2_term, sgdm_step
from .pruning import (SparsityMask, SparsitySchedule, SwdConfig, apply_masks,
                      compute_masks, schedule_a, schedule_sparsity,
                      select_swd_subset, total_weight_decay)

PHASE_DENSE = "dense"
PHASE_SPARSE = "sparse"
PHASE_REDENSE = "redense"


@dataclass(frozen=True)
class PhaseConfig:
    learning_rate: float
    epochs: int
    batch_size: int = 256

    def __post_init__(self):
        if self.learning_rate < 0.0:
            raise ConfigError(f"learning rate must be >= 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass(frozen=True)
class EarlyStopPolicy:
    """Patience on validation AUC; per-phase enable flags."""

    patience: int = 5
    dense: bool = True
    sparse: bool = False
    redense: bool = True

    def __post_init__(self):
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")

    def enabled(self, phase: str) -> bool:
        return {PHASE_DENSE: self.dense, PHASE_SPARSE: self.sparse,
                PHASE_REDENSE: self.redense}[phase]


@dataclass(frozen=True)
class ArchConfig:
    n_layers: int = 3
    hidden_size: int = 32
    dropout_rate: float = 0.1
    tied_output_gate: bool = False
    seq_len: int = 1

    def __post_init__(self):
        if self.n_layers < 1 or self.hidden_size < 1 or self.seq_len < 1:
            raise ConfigError("layers, hidden size and sequence length must be >= 1")


@dataclass(frozen=True)
class TrainerConfig:
    arch: ArchConfig = ArchConfig()
    dense: PhaseConfig = PhaseConfig(learning_rate=0.1, epochs=30)
    sparse: PhaseConfig = PhaseConfig(learning_rate=0.01, epochs=30)
    redense: PhaseConfig = PhaseConfig(learning_rate=0.001, epochs=30)
    momentum: float = 0.9
    swd: SwdConfig = SwdConfig()
    sparsity_initial: float = 0.25
    sparsity_final: float = 0.8
    early_stop: EarlyStopPolicy = EarlyStopPolicy()
    grad_clip_norm: float | None = 5.0

    def __post_init__(self):
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.grad_clip_norm is not None and self.grad_clip_norm <= 0.0:
            raise ConfigError("grad_clip_norm must be positive or None")

    def sparsity_schedule(self) -> SparsitySchedule:
        return SparsitySchedule(initial=self.sparsity_initial,
                                final=self.sparsity_final, epochs=self.sparse.epochs)


@dataclass
class EpochRecord:
    epoch: int
    phase: str
    train_loss: float
    err: float
    wd: float
    a_twd: float
    val_loss: float
    val_auc: float
    sparsity: float
    a: float


@dataclass
class TrainRun:
    records: list[EpochRecord] = field(default_factory=list)
    final_params: NetworkParams | None = None
    final_mask: SparsityMask | None = None
    dense_params: NetworkParams | None = None
    sparse_params: NetworkParams | None = None
    mask_violations: int = 0

    def csv(self) -> str:
        lines = ["epoch,phase,train_loss,err,wd,a_twd,val_loss,val_auc,sparsity,a"]
        for r in self.records:
            lines.append(f"{r.epoch},{r.phase},{r.train_loss!r},{r.err!r},{r.wd!r},"
                         f"{r.a_twd!r},{r.val_loss!r},{r.val_auc!r},{r.sparsity!r},{r.a!r}")
        return "\n".join(lines) + "\n"


@dataclass
class TrainContext:
    """Shared per-run state: PRNG streams, validation data, recording."""

    momentum: float = 0.9
    weight_decay_mu: float = 1e-4
    grad_clip_norm: float | None = 5.0
    patience: int = 5
    seq_len: int = 1
    val: DatasetSplit | None = None
    dropout_rng: np.random.Generator | None = None
    shuffle_rng: np.random.Generator | None = None
    records: list[EpochRecord] = field(default_factory=list)
    next_epoch: int = 0
    mask_violations: int = 0

    @classmethod
    def create(cls, seed: int = 0, **kwargs) -> "TrainContext":
        drop_ss, shuf_ss = np.random.SeedSequence(seed).spawn(2)
        return cls(dropout_rng=np.random.default_rng(drop_ss),
                   shuffle_rng=np.random.default_rng(shuf_ss), **kwargs)


def to_sequences(features: np.ndarray, seq_len: int) -> np.ndarray:
    """Reshape (n, F) feature rows into (n, T, F/T) sequences."""
    n, f = features.shape
    if f % seq_len != 0:
        raise ConfigError(f"{f} features not divisible by sequence length {seq_len}")
    return features.reshape(n, seq_len, f // seq_len)


def _clip_global_norm(grads: ParamTree, clip: float) -> ParamTree:
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total <= clip or total == 0.0:
        return grads
    scale = clip / total
    return {k: g * scale for k, g in grads.items()}


def _validate(net: NetworkParams, ctx: TrainContext) -> tuple[float, float]:
    if ctx.val is None or len(ctx.val) == 0:
        return float("nan"), float("nan")
    x = to_sequences(ctx.val.features, ctx.seq_len)
    p, _ = forward_batch(net, x, mode="eval")
    loss = float(np.mean(bce_loss(p, ctx.val.labels.astype(np.float64))))
    try:
        auc = roc_curve(p, ctx.val.labels).auc
    except SingleClassInput:
        auc = float("nan")
    return loss, auc


def _run_phase(net: NetworkParams, data: DatasetSplit, cfg: PhaseConfig,
               ctx: TrainContext, phase: str, early_enabled: bool,
               swd: SwdConfig | None = None, sched: SparsitySchedule | None = None,
               frozen_mask: SparsityMask | None = None):
    """Shared epoch loop. Returns (theta tree, mask or None)."""
    theta = {k: v.copy() for k, v in net.tensors().items()}
    state = SgdmState.init(theta, alpha=ctx.momentum, eta=cfg.learning_rate)
    weight_names = [n for n in theta if is_weight_name(n)]
    x_seq = to_sequences(data.features, ctx.seq_len)
    y = data.labels.astype(np.float64)
    n = len(y)

    best_metric = -np.inf
    best_theta = None
    best_mask = None
    stall = 0
    cur_mask: SparsityMask | None = None

    for e in range(cfg.epochs):
        a = 0.0
        if phase == PHASE_SPARSE:
            sparsity = schedule_sparsity(min(e, sched.epochs - 1), sched)
            cur_mask = compute_masks({k: theta[k] for k in weight_names}, sparsity)
            theta = apply_masks(theta, cur_mask)
            a = schedule_a(e, swd)
            report_sparsity = sparsity
        elif phase == PHASE_REDENSE:
            report_sparsity = frozen_mask.zero_fraction() if frozen_mask else 0.0
        else:
            report_sparsity = 0.0

        order = ctx.shuffle_rng.permutation(n)
        err_sum = wd_sum = twd_sum = 0.0
        n_batches = 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            cur_net = net.with_tensors(theta)
            p, cache = forward_batch(cur_net, x_seq[idx], mode="train", rng=ctx.dropout_rng)
            err = float(np.mean(bce_loss(p, y[idx])))
            grads = backward(cur_net, cache, y[idx])

            wd_pen = 0.0
            for wn in weight_names:
                pen, g = l2_term(theta[wn], ctx.weight_decay_mu)
                wd_pen += pen
                grads[wn] = grads[wn] + g

            twd_pen = 0.0
            if phase == PHASE_SPARSE and a > 0.0:
                for wn in weight_names:
                    sel, vals = select_swd_subset(theta[wn], cur_mask.masks[wn],
                                                  a, swd.target_threshold)
                    twd, gvals = total_weight_decay(vals, swd.mu)
                    twd_pen += twd
                    if vals.size:
                        scatter = np.zeros_like(theta[wn])
                        scatter[sel] = gvals
                        grads[wn] = grads[wn] + a * scatter

            loss = err + wd_pen + a * twd_pen
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"{phase} phase diverged at epoch {e} (loss={loss})")

            if ctx.grad_clip_norm is not None:
                grads = _clip_global_norm(grads, ctx.grad_clip_norm)
            theta, state = sgdm_step(theta, grads, state)
            if phase == PHASE_SPARSE:
                theta = apply_masks(theta, cur_mask)
                for wn in weight_names:
                    pruned = ~cur_mask.masks[wn].astype(bool)
                    if np.any(theta[wn][pruned] != 0.0):
                        ctx.mask_violations += 1

            err_sum += err
            wd_sum += wd_pen
            twd_sum += a * twd_pen
            n_batches += 1

        val_loss, val_auc = _validate(net.with_tensors(theta), ctx)
        err_m, wd_m, twd_m = err_sum / n_batches, wd_sum / n_batches, twd_sum / n_batches
        ctx.records.append(EpochRecord(
            epoch=ctx.next_epoch, phase=phase, train_loss=err_m + wd_m + twd_m,
            err=err_m, wd=wd_m, a_twd=twd_m, val_loss=val_loss, val_auc=val_auc,
            sparsity=report_sparsity, a=a))
        ctx.next_epoch += 1

        if early_enabled and ctx.val is not None:
            metric = val_auc if np.isfinite(val_auc) else -np.inf
            if metric > best_metric:
                best_metric = metric
                best_theta = {k: v.copy() for k, v in theta.items()}
                best_mask = cur_mask
                stall = 0
            else:
                stall += 1
                if stall >= ctx.patience:
                    theta, cur_mask = best_theta, best_mask
                    break

    if early_enabled and best_theta is not None and best_metric > -np.inf:
        theta, cur_mask = best_theta, best_mask
    return theta, cur_mask


def run_dense_phase(net: NetworkParams, data: DatasetSplit, cfg: PhaseConfig,
                    ctx: TrainContext | None = None) -> NetworkParams:
    """Momentum SGD with the base weight-decay penalty; no masks."""
    ctx = ctx or TrainContext.create()
    theta, _ = _run_phase(net, data, cfg, ctx, PHASE_DENSE, early_enabled=False)
    return net.with_tensors(theta)


def run_sparse_phase(net: NetworkParams, data: DatasetSplit, cfg: PhaseConfig,
                     swd: SwdConfig, sched: SparsitySchedule,
                     ctx: TrainContext | None = None) -> tuple[NetworkParams, SparsityMask]:
    """Masked training along the sparsity ramp with the a*TWD penalty."""
    ctx = ctx or TrainContext.create()
    theta, mask = _run_phase(net, data, cfg, ctx, PHASE_SPARSE,
                             early_enabled=False, swd=swd, sched=sched)
    return net.with_tensors(theta), mask


def run_redense_phase(net: NetworkParams, mask: SparsityMask, data: DatasetSplit,
                      cfg: PhaseConfig, ctx: TrainContext | None = None) -> NetworkParams:
    """Masks lifted: formerly pruned weights resume training from zero."""
    ctx = ctx or TrainContext.create()
    theta, _ = _run_phase(net, data, cfg, ctx, PHASE_REDENSE,
                          early_enabled=False, frozen_mask=mask)
    return net.with_tensors(theta)


def train_dsd(cfg: TrainerConfig, train_split: DatasetSplit, val_split: DatasetSplit,
              seed: int) -> tuple[NetworkParams, TrainRun]:
    """Run all three phases in order; fully deterministic given the seed."""
    if len(train_split) == 0 or len(val_split) == 0:
        raise ConfigError("train and validation splits must be non-empty")
    n_features = train_split.features.shape[1]
    if n_features % cfg.arch.seq_len != 0:
        raise ConfigError(f"{n_features} features not divisible by seq_len {cfg.arch.seq_len}")
    input_dim = n_features // cfg.arch.seq_len

    root = np.random.SeedSequence(seed)
    init_ss, drop_ss, shuf_ss = root.spawn(3)
    layer_sizes = [input_dim] + [cfg.arch.hidden_size] * cfg.arch.n_layers
    net = init_params(layer_sizes, seed=int(init_ss.generate_state(1)[0]),
                      dropout_rate=cfg.arch.dropout_rate,
                      tied_output_gate=cfg.arch.tied_output_gate)

    ctx = TrainContext(momentum=cfg.momentum, weight_decay_mu=cfg.swd.mu,
                       grad_clip_norm=cfg.grad_clip_norm,
                       patience=cfg.early_stop.patience, seq_len=cfg.arch.seq_len,
                       val=val_split, dropout_rng=np.random.default_rng(drop_ss),
                       shuffle_rng=np.random.default_rng(shuf_ss))

    run = TrainRun()

    theta, _ = _run_phase(net, train_split, cfg.dense, ctx, PHASE_DENSE,
                          early_enabled=cfg.early_stop.enabled(PHASE_DENSE))
    net = net.with_tensors(theta)
    run.dense_params = net.copy()

    theta, mask = _run_phase(net, train_split, cfg.sparse, ctx, PHASE_SPARSE,
                             early_enabled=cfg.early_stop.enabled(PHASE_SPARSE),
                             swd=cfg.swd, sched=cfg.sparsity_schedule())
    net = net.with_tensors(theta)
    run.sparse_params = net.copy()
    run.final_mask = mask

    theta, _ = _run_phase(net, train_split, cfg.redense, ctx, PHASE_REDENSE,
                          early_enabled=cfg.early_stop.enabled(PHASE_REDENSE),
                          frozen_mask=mask)
    net = net.with_tensors(theta)

    run.records = ctx.records
    run.final_params = net
    run.mask_violations = ctx.mask_violations
    return net, run
