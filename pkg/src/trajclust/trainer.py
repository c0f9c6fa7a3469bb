"""Training schedules over the memory bank.

Three schedules share one engine:

  IR      instance recognition only.
  LA      instance-recognition warm-up, then local aggregation with close
          neighbors re-clustered from the evolving bank every epoch.
  LA_IDT  warm-up, then local aggregation whose close neighbors come from a
          fixed clustering of externally supplied prior points (sketched
          Fisher vectors); the run finishes with a few epochs whose neighbors
          are re-clustered in the joint space [bank row, prior vector].

Stage two of LA_IDT ends early once the relative loss improvement over a
trailing window falls below a tolerance. Every epoch ends with a checkpoint;
resuming from one reproduces the uninterrupted run bit for bit, because all
per-epoch randomness is derived from (seed, purpose, epoch) and the only
stateful generator (the bank's negative sampler) is serialized.
"""

from __future__ import annotations

import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import bank as bank_mod
from . import clustering, encoder
from .corpus import DescriptorBag, RawVideoFeature, feature_matrix, label_arrays
from .errors import CompatibilityError, ConfigError, FormatError, TrainingError
from .evaluate import clustering_metrics
from .objectives import IrConfig, ir_loss_and_grad, la_loss_and_grad
from .util import atomic_write_bytes, config_hash, derive_seed, rng

_SHUFFLE_STREAM = 51
_CLUSTER_STREAM = 52
_PRIOR_STREAM = 53
_JOINT_STREAM = 54
_METRICS_STREAM = 55
_FINAL_STREAM = 56
_ENCODER_STREAM = 57
_BANK_STREAM = 58

SCHEDULES = ("IR", "LA", "LA_IDT")

_CHECKPOINT_VERSION = "trajclust-checkpoint-1"


@dataclass(frozen=True)
class TrainConfig:
    schedule: str = "LA_IDT"
    epochs: int = 30
    ir_pretrain_epochs: int = 6
    learning_rate: float = 0.03
    momentum: float = 0.9
    lr_drops: tuple[tuple[int, float], ...] = ((24, 0.1), (28, 0.1))
    batch_size: int = 64
    temperature: float = 0.07
    num_negatives: int = 128
    exact_denominator: bool = True
    num_clusters: int = 16
    num_clusterings: int = 3
    background_k: int | None = None  # default: min(N // 8, 512)
    bank_momentum: float = 0.5
    joint_finetune_epochs: int = 5
    hidden_width: int = 64  # 0 means a single affine layer
    embedding_dim: int = 32
    seed: int = 0
    convergence_tol: float = 1e-4
    convergence_window: int = 3

    def validate(self) -> None:
        if self.schedule not in SCHEDULES:
            raise ConfigError(f"schedule must be one of {SCHEDULES}")
        if self.epochs < 1 or self.batch_size < 1 or self.embedding_dim < 1:
            raise ConfigError("epochs, batch_size, embedding_dim must be positive")
        if self.hidden_width < 0:
            raise ConfigError("hidden_width must be non-negative")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be strictly positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must lie in [0, 1)")
        for drop_epoch, mult in self.lr_drops:
            if not 0 <= drop_epoch < self.epochs:
                raise ConfigError("drop epochs must fall inside the run")
            if not 0.0 < mult <= 1.0:
                raise ConfigError("drop multipliers must lie in (0, 1]")
        if not self.temperature > 0:
            raise ConfigError("temperature must be strictly positive")
        if self.num_negatives < 1 or self.num_clusters < 1 or self.num_clusterings < 1:
            raise ConfigError("counts must be positive")
        if self.background_k is not None and self.background_k < 1:
            raise ConfigError("background_k must be positive when given")
        if not 0.0 <= self.bank_momentum <= 1.0:
            raise ConfigError("bank_momentum must lie in [0, 1]")
        if self.joint_finetune_epochs < 0:
            raise ConfigError("joint_finetune_epochs must be non-negative")
        if self.schedule != "IR":
            if not 0 <= self.ir_pretrain_epochs < self.epochs:
                raise ConfigError("ir_pretrain_epochs must be less than epochs")
        if self.schedule == "LA_IDT":
            if self.ir_pretrain_epochs + self.joint_finetune_epochs >= self.epochs:
                raise ConfigError(
                    "LA_IDT needs at least one epoch between warm-up and finetune"
                )
        if self.convergence_window < 1 or self.convergence_tol < 0:
            raise ConfigError("bad convergence settings")
        if not 0 <= self.seed < 2**63:
            raise ConfigError("seed must be a non-negative 63-bit integer")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lr_drops"] = [list(pair) for pair in self.lr_drops]
        return d

    @staticmethod
    def from_dict(d: dict) -> "TrainConfig":
        known = {f for f in TrainConfig.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
        kwargs = dict(d)
        if "lr_drops" in kwargs:
            kwargs["lr_drops"] = tuple(
                (int(e), float(m)) for e, m in kwargs["lr_drops"]
            )
        return TrainConfig(**kwargs)


@dataclass
class TrainingData:
    features: np.ndarray  # (N, F) float64 pooled features
    appearance_labels: np.ndarray
    motion_labels: np.ndarray


def training_data_from_corpus(
    bags: list[DescriptorBag], raws: list[RawVideoFeature]
) -> TrainingData:
    app, mot = label_arrays(bags)
    return TrainingData(feature_matrix(raws), app, mot)


@dataclass
class RunState:
    params: encoder.EncoderParams
    opt: encoder.OptimizerState
    bank: bank_mod.EmbeddingBank
    epoch: int  # next epoch to run
    stage2_done_at: int | None
    metrics: list[dict] = field(default_factory=list)


@dataclass
class RunArtifacts:
    params: encoder.EncoderParams
    optimizer: encoder.OptimizerState
    bank: bank_mod.EmbeddingBank
    metrics: list[dict]
    final_clusters: clustering.ClusterModel
    config: TrainConfig
    completed: bool


def initial_state(data: TrainingData, cfg: TrainConfig) -> RunState:
    cfg.validate()
    n, fdim = data.features.shape
    hidden = [cfg.hidden_width] if cfg.hidden_width > 0 else []
    params = encoder.init_encoder(
        fdim, hidden, cfg.embedding_dim, seed=derive_seed(cfg.seed, _ENCODER_STREAM)
    )
    opt = encoder.init_optimizer(
        params, cfg.learning_rate, cfg.momentum, cfg.lr_drops
    )
    bank = bank_mod.init_bank(
        n, cfg.embedding_dim, cfg.bank_momentum, seed=derive_seed(cfg.seed, _BANK_STREAM)
    )
    return RunState(params, opt, bank, 0, None)


def _stage2_boundary(cfg: TrainConfig, stage2_done_at: int | None) -> int:
    budget_end = cfg.epochs - cfg.joint_finetune_epochs
    return budget_end if stage2_done_at is None else stage2_done_at


def _stage_for_epoch(cfg: TrainConfig, epoch: int, stage2_done_at: int | None) -> str:
    if cfg.schedule == "IR":
        return "ir"
    if epoch < cfg.ir_pretrain_epochs:
        return "ir"
    if cfg.schedule == "LA":
        return "la"
    if epoch < _stage2_boundary(cfg, stage2_done_at):
        return "la_prior"
    return "la_joint"


def _run_end(cfg: TrainConfig, stage2_done_at: int | None) -> int:
    if cfg.schedule != "LA_IDT":
        return cfg.epochs
    return _stage2_boundary(cfg, stage2_done_at) + cfg.joint_finetune_epochs


def run_training(
    data: TrainingData,
    cfg: TrainConfig,
    prior_points: np.ndarray | None = None,
    checkpoint_dir: str | None = None,
    resume: RunState | None = None,
    stop_after: int | None = None,
) -> RunArtifacts:
    """Run (or continue) one training schedule.

    ``stop_after`` halts the run once that many epochs have completed; the
    returned artifacts then carry ``completed=False`` and the checkpoint (if a
    directory was given) can be resumed later.
    """
    cfg.validate()
    n = data.features.shape[0]
    prior = None
    if cfg.schedule == "LA_IDT":
        if prior_points is None:
            raise ConfigError("LA_IDT needs prior_points (encoded descriptor vectors)")
        prior = np.asarray(prior_points, dtype=np.float64)
        if prior.ndim != 2 or prior.shape[0] != n:
            raise CompatibilityError(
                "prior_points must hold one row per corpus video"
            )

    state = resume if resume is not None else initial_state(data, cfg)
    ircfg = IrConfig(cfg.temperature, cfg.num_negatives, cfg.exact_denominator)
    k_eff = min(cfg.num_clusters, n)
    bk = cfg.background_k if cfg.background_k is not None else min(n // 8, 512)
    bk = max(1, min(bk, n - 1))

    prior_model = None
    if cfg.schedule == "LA_IDT":
        prior_model = clustering.build_cluster_model(
            prior, k_eff, cfg.num_clusterings, derive_seed(cfg.seed, _PRIOR_STREAM)
        )

    params, opt, bank = state.params, state.opt, state.bank
    while True:
        epoch = state.epoch
        if epoch >= _run_end(cfg, state.stage2_done_at):
            completed = True
            break
        if stop_after is not None and epoch >= stop_after:
            completed = False
            break
        stage = _stage_for_epoch(cfg, epoch, state.stage2_done_at)

        neighbors = None
        if stage == "la":
            model = clustering.build_cluster_model(
                bank.entries,
                k_eff,
                cfg.num_clusterings,
                derive_seed(cfg.seed, _CLUSTER_STREAM, epoch),
            )
            neighbors = clustering.neighbor_sets(model, bank.entries, bk)
        elif stage == "la_prior":
            neighbors = clustering.neighbor_sets(prior_model, bank.entries, bk)
        elif stage == "la_joint":
            joint = np.hstack([bank.entries, prior])
            model = clustering.build_cluster_model(
                joint,
                k_eff,
                cfg.num_clusterings,
                derive_seed(cfg.seed, _JOINT_STREAM, epoch),
            )
            neighbors = clustering.neighbor_sets(model, bank.entries, bk)

        bank_before = bank.entries.copy()
        order = rng(cfg.seed, _SHUFFLE_STREAM, epoch).permutation(n)
        total_loss = 0.0
        for lo in range(0, n, cfg.batch_size):
            batch = order[lo : lo + cfg.batch_size]
            x = data.features[batch]
            d = encoder.forward(params, x)
            if stage == "ir":
                loss, grad_d = ir_loss_and_grad(batch, d, bank, ircfg)
            else:
                loss, grad_d = la_loss_and_grad(batch, d, neighbors, bank, ircfg)
            grads = encoder.backward(params, x, grad_d)
            params, opt = encoder.sgd_step(params, grads, opt, epoch)
            for j, i in enumerate(batch):
                bank_mod.update(bank, int(i), d[j])
            total_loss += loss * batch.size
        epoch_loss = total_loss / n
        if not np.isfinite(epoch_loss):
            raise TrainingError(
                f"epoch {epoch}: non-finite loss; last good checkpoint is epoch {epoch - 1}"
            )

        drift = float(
            np.linalg.norm(bank.entries - bank_before, axis=1).mean()
        )
        probe_clusters = clustering.kmeans(
            bank.entries, k_eff, seed=derive_seed(cfg.seed, _METRICS_STREAM, epoch)
        )
        nmi_motion, _ = clustering_metrics(probe_clusters.assignment, data.motion_labels)
        nmi_appearance, _ = clustering_metrics(
            probe_clusters.assignment, data.appearance_labels
        )
        state.metrics.append(
            {
                "epoch": epoch,
                "stage": stage,
                "loss": float(epoch_loss),
                "nmi_motion": nmi_motion,
                "nmi_appearance": nmi_appearance,
                "lr": opt.lr_at(epoch),
                "bank_drift": drift,
            }
        )

        if stage == "la_prior" and state.stage2_done_at is None:
            s2 = [m["loss"] for m in state.metrics if m["stage"] == "la_prior"]
            w = cfg.convergence_window
            if len(s2) >= w + 1:
                first, last = s2[-w - 1], s2[-1]
                if first - last < cfg.convergence_tol * max(abs(first), 1e-12):
                    state.stage2_done_at = epoch + 1

        state.params, state.opt, state.bank = params, opt, bank
        state.epoch = epoch + 1
        if checkpoint_dir is not None:
            save_checkpoint(f"{checkpoint_dir}/checkpoint.npz", state, cfg)

    final_clusters = clustering.build_cluster_model(
        bank.entries, k_eff, cfg.num_clusterings, derive_seed(cfg.seed, _FINAL_STREAM)
    )
    return RunArtifacts(
        params, opt, bank, state.metrics, final_clusters, cfg, completed
    )


def train_ir(data: TrainingData, cfg: TrainConfig, **kwargs) -> RunArtifacts:
    if cfg.schedule != "IR":
        raise ConfigError("train_ir requires schedule == 'IR'")
    return run_training(data, cfg, **kwargs)


def train_la(
    data: TrainingData,
    cfg: TrainConfig,
    prior_points: np.ndarray | None = None,
    **kwargs,
) -> RunArtifacts:
    if cfg.schedule not in ("LA", "LA_IDT"):
        raise ConfigError("train_la requires schedule 'LA' or 'LA_IDT'")
    return run_training(data, cfg, prior_points=prior_points, **kwargs)


# ---------------------------------------------------------------- checkpoints


def save_checkpoint(path: str, state: RunState, cfg: TrainConfig) -> None:
    arrays: dict[str, np.ndarray] = {}
    for i, (w, b) in enumerate(zip(state.params.weights, state.params.biases)):
        arrays[f"enc.w{i}"] = w
        arrays[f"enc.b{i}"] = b
    for i, (vw, vb) in enumerate(zip(state.opt.velocity_w, state.opt.velocity_b)):
        arrays[f"vel.w{i}"] = vw
        arrays[f"vel.b{i}"] = vb
    arrays["bank.entries"] = state.bank.entries
    meta = {
        "version": _CHECKPOINT_VERSION,
        "epoch": state.epoch,
        "stage2_done_at": state.stage2_done_at,
        "metrics": state.metrics,
        "config": cfg.to_dict(),
        "config_hash": config_hash(cfg.to_dict()),
        "num_layers": len(state.params.weights),
        "bank_momentum": state.bank.update_momentum,
        "bank_sampler": bank_mod.sampler_state(state.bank),
    }
    arrays["meta"] = np.frombuffer(
        json.dumps(meta).encode("utf-8"), dtype=np.uint8
    )
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    atomic_write_bytes(path, buf.getvalue())


def load_checkpoint(path: str) -> tuple[RunState, TrainConfig]:
    try:
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(bytes(data["meta"]).decode("utf-8"))
            if meta.get("version") != _CHECKPOINT_VERSION:
                raise FormatError(f"{path}: unknown checkpoint version")
            cfg = TrainConfig.from_dict(meta["config"])
            if config_hash(cfg.to_dict()) != meta["config_hash"]:
                raise CompatibilityError(f"{path}: config hash mismatch")
            layers = int(meta["num_layers"])
            params = encoder.EncoderParams(
                [data[f"enc.w{i}"].copy() for i in range(layers)],
                [data[f"enc.b{i}"].copy() for i in range(layers)],
            )
            opt = encoder.init_optimizer(
                params, cfg.learning_rate, cfg.momentum, cfg.lr_drops
            )
            opt.velocity_w = [data[f"vel.w{i}"].copy() for i in range(layers)]
            opt.velocity_b = [data[f"vel.b{i}"].copy() for i in range(layers)]
            entries = data["bank.entries"].copy()
            bank = bank_mod.EmbeddingBank(
                entries, float(meta["bank_momentum"]), np.random.default_rng()
            )
            bank_mod.restore_sampler(bank, meta["bank_sampler"])
            state = RunState(
                params,
                opt,
                bank,
                int(meta["epoch"]),
                meta["stage2_done_at"],
                meta["metrics"],
            )
            return state, cfg
    except (KeyError, ValueError, OSError) as exc:
        raise FormatError(f"{path}: not a checkpoint file") from exc


def resume_training(
    data: TrainingData,
    cfg: TrainConfig,
    checkpoint_path: str,
    prior_points: np.ndarray | None = None,
    checkpoint_dir: str | None = None,
    stop_after: int | None = None,
) -> RunArtifacts:
    """Continue a run from a saved checkpoint; configs must match exactly."""
    state, saved_cfg = load_checkpoint(checkpoint_path)
    if config_hash(saved_cfg.to_dict()) != config_hash(cfg.to_dict()):
        raise CompatibilityError(
            "checkpoint was produced under a different configuration"
        )
    return run_training(
        data,
        cfg,
        prior_points=prior_points,
        checkpoint_dir=checkpoint_dir,
        resume=state,
        stop_after=stop_after,
    )
