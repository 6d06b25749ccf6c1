"""Training orchestration, checkpointing, and whole-sequence feature extraction."""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .errors import ConfigError, DataError, SeqMasksError
from .index import DatasetIndex, SequenceRecord
from .losses import LossBreakdown, LossWeights, total_loss
from .models import FusionNetwork, build_backbone
from .sampling import gait_tensors, pk_sample, _candidate_frames
from .transforms import eval_pair, normalize_frames

log = logging.getLogger(__name__)

SPEC_VERSION = 1
REGIMES = ("end2end", "finetune")

APPEARANCE_COMPONENTS = ("backbone", "global_bottleneck", "fg_bottleneck")
GAIT_COMPONENTS = ("gait_main", "gait_mgp", "gait_heads")


@dataclass
class TrainConfig:
    """Everything one training run needs; serialized into every checkpoint."""

    regime: str = "end2end"
    p: int = 8
    kseq: int = 4
    t_frames: int = 8
    k_sils: int = 8
    epochs: int = 1
    steps_per_epoch: int = 100
    lr_heads: float = 3e-4
    lr_backbone: float = 3e-5
    decay_milestones: tuple[float, ...] = (0.6, 0.8)
    decay_gamma: float = 0.1
    weights: LossWeights = field(default_factory=LossWeights)
    seed: int = 0
    backbone: str = "small"
    backbone_weights: str | None = None
    backbone_channels: int = 128
    variant: str | None = None
    use_foreground: bool = True
    use_gait: bool = True
    use_ffm: bool = True
    embed_dim: int = 512
    bottleneck_hidden: int = 256
    bottleneck_norm: str = "batch"
    data_root: str | None = None
    dataset: str = "mars"
    min_effective: int = 8
    fg_threshold: float = 0.15
    checkpoint_dir: str = "runs/default"
    log_every: int = 10
    deterministic: bool = True
    shared_frames: bool = False
    augment: bool = True
    appearance_checkpoint: str | None = None
    gait_checkpoint: str | None = None

    def __post_init__(self) -> None:
        if isinstance(self.weights, dict):
            self.weights = LossWeights(**self.weights)
        self.decay_milestones = tuple(self.decay_milestones)

    def validate(self) -> None:
        if self.regime not in REGIMES:
            raise ConfigError(f"regime must be one of {REGIMES}, got {self.regime!r}")
        if self.p < 2:
            raise ConfigError(f"p must be >= 2 (triplets need 2 classes), got {self.p}")
        if self.p * self.kseq < 4:
            raise ConfigError("p * kseq must be >= 4 for triplet mining")
        if self.epochs < 1 or self.steps_per_epoch < 1:
            raise ConfigError("epochs and steps_per_epoch must be >= 1")
        if self.dataset not in ("mars", "casia"):
            raise ConfigError(f"dataset must be 'mars' or 'casia', got {self.dataset!r}")
        if self.regime == "finetune" and not (self.appearance_checkpoint and self.gait_checkpoint):
            raise ConfigError("finetune regime needs appearance_checkpoint and gait_checkpoint")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["decay_milestones"] = list(self.decay_milestones)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown training config keys: {sorted(unknown)}")
        return cls(**d)


def config_hash(config: TrainConfig) -> str:
    return hashlib.sha256(json.dumps(config.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


def build_model(config: TrainConfig, num_classes: int) -> FusionNetwork:
    backbone = build_backbone(
        config.backbone, weights_path=config.backbone_weights, out_channels=config.backbone_channels
    )
    common = dict(
        embed_dim=config.embed_dim,
        bottleneck_hidden=config.bottleneck_hidden,
        norm=config.bottleneck_norm,
    )
    if config.variant:
        return FusionNetwork.from_variant(config.variant, backbone, num_classes, **common)
    return FusionNetwork(
        backbone,
        num_classes,
        use_foreground=config.use_foreground,
        use_gait=config.use_gait,
        use_ffm=config.use_ffm,
        **common,
    )


def save_checkpoint(
    path: Path | str,
    model: FusionNetwork,
    config: TrainConfig,
    epoch: int,
    metrics: dict | None = None,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    components = model.component_state_dicts()
    manifest = {
        "spec_version": SPEC_VERSION,
        "config_hash": config_hash(config),
        "epoch": epoch,
        "regime": config.regime,
        "components": sorted(components),
        "dims": {
            "embed": config.embed_dim,
            "descriptor": model.descriptor_dim,
            "num_classes": model.num_classes,
        },
        "metrics": metrics or {},
    }
    torch.save(
        {"manifest": manifest, "components": components, "config": config.to_dict()}, path
    )
    return path


def read_checkpoint(path: Path | str) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"checkpoint not found: {path}")
    ckpt = torch.load(path, map_location="cpu", weights_only=False)
    for key in ("manifest", "components", "config"):
        if key not in ckpt:
            raise ConfigError(f"not a valid checkpoint (missing '{key}'): {path}")
    if ckpt["manifest"]["spec_version"] != SPEC_VERSION:
        raise ConfigError(
            f"checkpoint spec_version {ckpt['manifest']['spec_version']} != {SPEC_VERSION}"
        )
    return ckpt


def load_model(path: Path | str) -> tuple[FusionNetwork, TrainConfig, dict]:
    """Rebuild the model a checkpoint describes and restore every component."""
    ckpt = read_checkpoint(path)
    config = TrainConfig.from_dict(ckpt["config"])
    model = build_model(config, ckpt["manifest"]["dims"]["num_classes"])
    model.load_component_state_dicts(ckpt["components"])
    model.eval()
    return model, config, ckpt["manifest"]


@dataclass
class TrainResult:
    checkpoints: list[Path]
    log_path: Path
    final_breakdown: LossBreakdown


def compute_loss(bundle, labels: torch.Tensor, config: TrainConfig) -> tuple[torch.Tensor, LossBreakdown]:
    gait = bundle.gait
    return total_loss(
        labels,
        config.weights,
        global_emb=bundle.global_emb,
        global_logits=bundle.logits["global"],
        fg_emb=bundle.fg_emb,
        fg_logits=bundle.logits.get("foreground"),
        gait_main_emb=None if gait is None else gait.main_256,
        gait_main_logits=bundle.logits.get("gait_main"),
        gait_mgp_emb=None if gait is None else gait.mgp_256,
        gait_mgp_logits=bundle.logits.get("gait_mgp"),
        fused_emb=bundle.fused,
        use_foreground=bundle.fg_emb is not None,
        use_gait=gait is not None,
    )


def train(config: TrainConfig, index: DatasetIndex, resume: Path | str | None = None) -> TrainResult:
    """Optimize the model on the train split, logging every loss term per step.

    Writes one checkpoint per epoch. A non-finite loss aborts with a JSON dump
    naming the offending batch's sequences.
    """
    config.validate()
    for line in index.training_warnings():
        log.warning(line)
    label_map = index.train_label_map()
    if len(label_map) < 2:
        raise DataError(f"train split has {len(label_map)} identities; need at least 2")
    if len(label_map) < config.p:
        raise ConfigError(f"p={config.p} but train split has only {len(label_map)} identities")

    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    model = build_model(config, num_classes=len(label_map))
    if config.regime == "finetune":
        _restore_components(model, config.appearance_checkpoint, APPEARANCE_COMPONENTS)
        _restore_components(model, config.gait_checkpoint, GAIT_COMPONENTS)
    if resume is not None:
        ckpt = read_checkpoint(resume)
        model.load_component_state_dicts(ckpt["components"])
        log.info("resumed all components from %s", resume)

    backbone_params = list(model.appearance.backbone.parameters())
    backbone_ids = {id(p) for p in backbone_params}
    head_params = [p for p in model.parameters() if id(p) not in backbone_ids]
    optimizer = torch.optim.Adam(
        [
            {"params": head_params, "lr": config.lr_heads},
            {"params": backbone_params, "lr": config.lr_backbone},
        ]
    )
    milestones = sorted({max(1, int(frac * config.epochs)) for frac in config.decay_milestones})
    scheduler = torch.optim.lr_scheduler.MultiStepLR(optimizer, milestones, gamma=config.decay_gamma)

    out_dir = Path(config.checkpoint_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / "train_log.csv"
    checkpoints: list[Path] = []
    breakdown = LossBreakdown()
    model.train()
    step = 0
    with open(log_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "epoch"] + LossBreakdown.csv_columns() + ["lr", "wall_time"])
        t0 = time.monotonic()
        for epoch in range(1, config.epochs + 1):
            for _ in range(config.steps_per_epoch):
                step += 1
                batch = pk_sample(
                    index, config.p, config.kseq, config.t_frames, config.k_sils,
                    rng, augment=config.augment, shared_frames=config.shared_frames,
                    label_map=label_map,
                )
                bundle = model(
                    batch.frames, batch.frame_masks,
                    batch.gait_sils if model.use_gait else None,
                    mode="train",
                )
                total, breakdown = compute_loss(bundle, batch.labels, config)
                if not torch.isfinite(total):
                    dump = out_dir / "nan_dump.json"
                    dump.write_text(json.dumps({
                        "step": step,
                        "sequences": list(batch.sequence_keys),
                        "labels": batch.labels.tolist(),
                        "breakdown": dataclasses.asdict(breakdown),
                    }, indent=2))
                    raise SeqMasksError(f"non-finite loss at step {step}; batch dumped to {dump}")
                optimizer.zero_grad()
                total.backward()
                optimizer.step()
                writer.writerow(
                    [step, epoch] + breakdown.csv_row()
                    + [optimizer.param_groups[0]["lr"], round(time.monotonic() - t0, 3)]
                )
                if step % config.log_every == 0 or step == 1:
                    print(
                        f"step {step} epoch {epoch} loss {breakdown.loss_total:.4f} "
                        f"(app {breakdown.loss_appearance:.4f} gait {breakdown.loss_gait:.4f} "
                        f"fusion {breakdown.loss_fusion:.4f})",
                        file=sys.stderr,
                    )
            scheduler.step()
            ckpt_path = save_checkpoint(
                out_dir / f"epoch_{epoch:03d}.pt", model, config, epoch,
                metrics={"loss_total": breakdown.loss_total},
            )
            checkpoints.append(ckpt_path)
    return TrainResult(checkpoints=checkpoints, log_path=log_path, final_breakdown=breakdown)


def _restore_components(model: FusionNetwork, path: str | Path, names: tuple[str, ...]) -> None:
    ckpt = read_checkpoint(path)
    present = [n for n in names if n in ckpt["components"]]
    if not present:
        raise ConfigError(f"checkpoint {path} has none of the components {names}")
    model.load_component_state_dicts(ckpt["components"], names=present)
    log.info("restored %s from %s", present, path)


@dataclass
class FeatureStore:
    """Extracted descriptors plus the metadata the evaluator filters on."""

    embeddings: np.ndarray
    identities: np.ndarray
    cameras: np.ndarray
    views: np.ndarray  # -1 when absent
    conditions: np.ndarray  # '' when absent
    split: str
    skipped: list[dict] = field(default_factory=list)

    def save(self, path: Path | str) -> None:
        np.savez(
            path,
            embeddings=self.embeddings,
            identities=self.identities,
            cameras=self.cameras,
            views=self.views,
            conditions=self.conditions,
            split=np.asarray(self.split),
            skipped=np.asarray(json.dumps(self.skipped)),
        )

    @classmethod
    def load(cls, path: Path | str) -> "FeatureStore":
        with np.load(path, allow_pickle=False) as z:
            return cls(
                embeddings=z["embeddings"],
                identities=z["identities"],
                cameras=z["cameras"],
                views=z["views"],
                conditions=z["conditions"],
                split=str(z["split"]),
                skipped=json.loads(str(z["skipped"])),
            )


def extract_features(
    model: FusionNetwork,
    index: DatasetIndex,
    split: str,
    chunk_size: int = 32,
    max_gait_frames: int = 64,
) -> FeatureStore:
    """Eval-mode fused descriptor per sequence.

    Appearance frames run in fixed-size chunks whose pooled vectors are
    merged by a length-weighted temporal mean; gait uses up to
    `max_gait_frames` silhouettes sampled evenly over the usable frames.
    """
    model.eval()
    emb, idents, cams, views, conds = [], [], [], [], []
    skipped: list[dict] = []
    with torch.no_grad():
        for rec in index.entries_in(split):
            try:
                emb.append(_sequence_descriptor(model, rec, chunk_size, max_gait_frames))
            except (OSError, DataError, SeqMasksError) as exc:
                skipped.append({"sequence": rec.key(), "error": str(exc)})
                continue
            idents.append(rec.identity)
            cams.append(rec.camera or "")
            views.append(-1 if rec.view_angle is None else int(rec.view_angle))
            conds.append(rec.condition or "")
    if skipped:
        log.warning("extraction skipped %d sequence(s) in split %s", len(skipped), split)
    dim = model.descriptor_dim
    return FeatureStore(
        embeddings=np.stack(emb) if emb else np.zeros((0, dim), dtype=np.float32),
        identities=np.asarray(idents, dtype=str),
        cameras=np.asarray(cams, dtype=str),
        views=np.asarray(views, dtype=np.int64),
        conditions=np.asarray(conds, dtype=str),
        split=split,
        skipped=skipped,
    )


def _sequence_descriptor(
    model: FusionNetwork, rec: SequenceRecord, chunk_size: int, max_gait_frames: int
) -> np.ndarray:
    n = len(rec)
    global_sum = fg_sum = None
    for start in range(0, n, chunk_size):
        idx = np.arange(start, min(start + chunk_size, n))
        frames = np.stack([rec.load_frame(int(i)) for i in idx])
        masks = np.stack([rec.load_mask(int(i)) for i in idx])
        f, m = eval_pair(frames, masks)
        g_vec, f_vec = model.appearance.frame_vectors(
            normalize_frames(f).unsqueeze(0), m.unsqueeze(0) if model.use_foreground else None
        )
        g_part = g_vec.sum(dim=1)
        global_sum = g_part if global_sum is None else global_sum + g_part
        if model.use_foreground:
            f_part = f_vec.sum(dim=1)
            fg_sum = f_part if fg_sum is None else fg_sum + f_part
    parts = [model.appearance.global_bottleneck(global_sum / n)]
    if model.use_foreground:
        parts.append(model.appearance.fg_bottleneck(fg_sum / n))
    if model.use_gait:
        cand = _candidate_frames(rec)
        usable = [i for i in cand if rec.load_mask(int(i)).any()]
        if not usable:
            raise DataError(f"{rec.key()}: no non-empty masks for the gait branch")
        take = min(max_gait_frames, len(usable))
        pick = np.asarray(usable)[np.round(np.linspace(0, len(usable) - 1, take)).astype(int)]
        sils = gait_tensors(rec, pick).unsqueeze(0)
        parts.append(model.gait(sils).inference_512)
    concat = torch.cat(parts, dim=1)
    fused = model.ffm(concat) if model.use_ffm else concat
    return fused[0].numpy().astype(np.float32)
