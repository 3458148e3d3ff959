"""Scenario-conditioned training loop for the joint diffusion denoiser.

Each batch item draws a conditioning scenario (classes pinned, classes+sizes
pinned, or nothing pinned; optionally a random half of the components fully
pinned), corrupts the unconditioned attributes with the two forward chains,
injects conditioned attributes clean, and applies the combined loss with the
conditioned and padded parts masked out.

Ablation switches (each changes only the documented behavior):

* ``edit-only``      train purely unconditioned; conditioning happens only at
                     inference by overriding noise with pins.
* ``no-cond-embed``  scenarios and pins as usual, but the condition flags fed
                     to the model are forced off.
* ``class-first``    the unconditioned scenario is replaced by one that pins
                     all boxes at zero and only reverses the class chain.
* ``boxes-first``    the unconditioned scenario is replaced by a pair: boxes
                     reversed with every class fixed at the mask token, and
                     classes reversed with boxes pinned clean.

The half-component trick is disabled for the two sequential regimes, which
train strictly one chain per sample.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np
import torch

from .checkpoint import load_checkpoint, save_checkpoint
from .continuous import box_loss, q_sample
from .core import ConditionSpec, DatasetSchema, Layout, signal_matrix
from .denoiser import Denoiser, DenoiserConfig, DenoiserInput, build_denoiser
from .discrete import class_loss, q_sample_discrete
from .ingest import stats
from .schedule import DiffusionSchedule, build_cosine_schedule

SCENARIOS = ("category", "category-size", "unconditioned")
ABLATIONS = ("none", "edit-only", "no-cond-embed", "class-first", "boxes-first")


@dataclass
class TrainConfig:
    total_steps: int = 2000
    batch_size: int = 64
    lr: float = 1e-4
    lr_final: float = 1e-5
    warmup_steps: int = 0
    lambda_box: float = 5.0
    lambda_cls: float = 1.0
    p_half: float = 0.5
    scenario_weights: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    seed: int = 0
    ablation: str = "none"
    val_every: int = 200
    checkpoint_every: int = 0  # 0 = only at the end
    log_path: str | None = None

    def __post_init__(self) -> None:
        if self.lambda_box <= 0 or self.lambda_cls < 0:
            raise ValueError("loss weights must be positive")
        if self.ablation not in ABLATIONS:
            raise ValueError(f"ablation must be one of {ABLATIONS}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["scenario_weights"] = list(self.scenario_weights)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "scenario_weights" in d:
            d["scenario_weights"] = tuple(d["scenario_weights"])
        return cls(**d)


def sample_scenario(layout: Layout, rng: np.random.Generator, cfg: TrainConfig) -> ConditionSpec:
    """Draw one conditioning scenario for one training layout."""
    return sample_scenario_regime(layout, rng, cfg)[0]


def sample_scenario_regime(
    layout: Layout, rng: np.random.Generator, cfg: TrainConfig
) -> tuple[ConditionSpec, str]:
    """Scenario plus the corruption regime ("standard" or "mask-classes").

    The mask-classes regime trains the continuous chain with every class
    input held at the mask token; it only occurs in the boxes-first ablation.
    """
    n = layout.n
    if cfg.ablation == "edit-only":
        return ConditionSpec.empty(n), "standard"

    names = list(SCENARIOS)
    if cfg.ablation == "class-first":
        names[2] = "zero-boxes"
    pick = names[rng.choice(3, p=np.asarray(cfg.scenario_weights) / sum(cfg.scenario_weights))]
    if cfg.ablation == "boxes-first" and pick == "unconditioned":
        pick = "boxes-given-mask" if rng.random() < 0.5 else "classes-given-boxes"

    if pick == "category":
        spec = ConditionSpec.from_layout(layout, cls_flags=True)
    elif pick == "category-size":
        spec = ConditionSpec.from_layout(layout, cls_flags=True, size_flags=True)
    elif pick == "unconditioned":
        spec = ConditionSpec.empty(n)
    elif pick == "zero-boxes":
        # all geometry pinned at the signal-space origin (fraction 0.5)
        return (
            ConditionSpec(
                n_components=n,
                cond_pos=[True] * n,
                cond_size=[True] * n,
                pin_pos=[(0.5, 0.5)] * n,
                pin_size=[(0.5, 0.5)] * n,
            ),
            "standard",
        )
    elif pick == "boxes-given-mask":
        return ConditionSpec.empty(n), "mask-classes"
    else:  # classes-given-boxes
        return ConditionSpec.from_layout(layout, pos_flags=True, size_flags=True), "standard"

    if cfg.ablation in ("class-first", "boxes-first"):
        return spec, "standard"

    if n >= 2 and rng.random() < cfg.p_half:
        extra = rng.choice(n, size=n // 2, replace=False)
        for i in extra:
            i = int(i)
            comp = layout.components[i]
            spec.cond_cls[i] = True
            spec.pin_cls[i] = comp.cls.index
            spec.cond_pos[i] = True
            spec.pin_pos[i] = (comp.box.cx, comp.box.cy)
            spec.cond_size[i] = True
            spec.pin_size[i] = (comp.box.w, comp.box.h)
    return spec, "standard"


@dataclass
class CorruptedItem:
    x_t: np.ndarray
    y_t: np.ndarray
    cond_pos: np.ndarray
    cond_size: np.ndarray
    cond_cls: np.ndarray
    t: int
    pad: np.ndarray
    x0: np.ndarray
    y0: np.ndarray
    box_mask: np.ndarray  # (N, 4) True = excluded from the box loss
    cls_mask: np.ndarray  # (N,)  True = excluded from the class loss


def pin_arrays(
    spec: ConditionSpec, N: int, scale: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Condition flags padded to N slots plus pinned signal-space coordinates."""
    n = spec.n_components
    cond_pos = np.zeros(N, dtype=bool)
    cond_size = np.zeros(N, dtype=bool)
    cond_cls = np.zeros(N, dtype=bool)
    cond_pos[:n] = spec.cond_pos
    cond_size[:n] = spec.cond_size
    cond_cls[:n] = spec.cond_cls
    pin_xy = np.zeros((N, 2))
    pin_wh = np.zeros((N, 2))
    pin_k = np.zeros(N, dtype=np.int64)
    for i in range(n):
        if spec.cond_pos[i]:
            pin_xy[i] = (2.0 * np.asarray(spec.pin_pos[i]) - 1.0) * scale
        if spec.cond_size[i]:
            pin_wh[i] = (2.0 * np.asarray(spec.pin_size[i]) - 1.0) * scale
        if spec.cond_cls[i]:
            pin_k[i] = spec.pin_cls[i]
    return cond_pos, cond_size, cond_cls, pin_xy, pin_wh, pin_k


def corrupt_layout(
    layout: Layout,
    spec: ConditionSpec,
    t: int,
    rng: np.random.Generator,
    schedule: DiffusionSchedule,
    schema: DatasetSchema,
    scale: float,
    regime: str = "standard",
) -> CorruptedItem:
    """Noise the unconditioned attributes of one layout at continuous step t."""
    n, N, K = layout.n, schema.n_max, schema.K
    s = t // 10

    x0 = np.zeros((N, 4))
    x0[:n] = signal_matrix(layout, scale)
    y0 = np.full(N, K, dtype=np.int64)
    y0[:n] = layout.class_indices()
    pad = np.arange(N) >= n

    cond_pos, cond_size, cond_cls, pin_xy, pin_wh, pin_k = pin_arrays(spec, N, scale)

    x_t = q_sample(x0, t, rng, schedule).x_t
    y_t = np.full(N, K, dtype=np.int64)
    if n:
        y_t[:n] = q_sample_discrete(y0[:n], s, rng, schedule, K).y

    # conditioned attributes ride along clean (at their pinned values) for
    # the whole trajectory
    x_t[cond_pos, 0:2] = pin_xy[cond_pos]
    x_t[cond_size, 2:4] = pin_wh[cond_size]
    y_t[cond_cls] = pin_k[cond_cls]
    x_t[pad] = 0.0

    box_mask = np.zeros((N, 4), dtype=bool)
    box_mask[cond_pos, 0:2] = True
    box_mask[cond_size, 2:4] = True
    box_mask[pad] = True
    cls_mask = cond_cls | pad

    if regime == "mask-classes":
        # continuous-only sample: classes fixed at the mask token and flagged
        # as given; the class head learns nothing from it
        y_t[:n] = K
        cond_cls[:n] = True
        cls_mask[:] = True
    elif regime != "standard":
        raise ValueError(f"unknown corruption regime {regime!r}")

    return CorruptedItem(
        x_t=x_t, y_t=y_t,
        cond_pos=cond_pos, cond_size=cond_size, cond_cls=cond_cls,
        t=t, pad=pad, x0=x0, y0=y0, box_mask=box_mask, cls_mask=cls_mask,
    )


def assemble_batch(items: list[CorruptedItem], suppress_flags: bool) -> tuple[DenoiserInput, dict]:
    flags = dict(
        cond_pos=np.stack([it.cond_pos for it in items]),
        cond_size=np.stack([it.cond_size for it in items]),
        cond_cls=np.stack([it.cond_cls for it in items]),
    )
    if suppress_flags:
        flags = {k: np.zeros_like(v) for k, v in flags.items()}
    inp = DenoiserInput(
        x_t=torch.as_tensor(np.stack([it.x_t for it in items]), dtype=torch.float32),
        y_t=torch.as_tensor(np.stack([it.y_t for it in items])),
        cond_pos=torch.as_tensor(flags["cond_pos"]),
        cond_size=torch.as_tensor(flags["cond_size"]),
        cond_cls=torch.as_tensor(flags["cond_cls"]),
        t=torch.as_tensor(np.array([it.t for it in items])),
        pad_mask=torch.as_tensor(np.stack([it.pad for it in items])),
    )
    targets = dict(
        x0=torch.as_tensor(np.stack([it.x0 for it in items]), dtype=torch.float32),
        y0=torch.as_tensor(np.stack([it.y0 for it in items])),
        box_mask=torch.as_tensor(np.stack([it.box_mask for it in items])),
        cls_mask=torch.as_tensor(np.stack([it.cls_mask for it in items])),
    )
    return inp, targets


def batch_losses(
    model: Denoiser, inp: DenoiserInput, targets: dict, cfg: TrainConfig
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    x0_hat, logits = model(inp)
    l_box = box_loss(x0_hat, targets["x0"], targets["box_mask"])
    l_cls = class_loss(logits, targets["y0"], targets["cls_mask"])
    total = cfg.lambda_box * l_box + cfg.lambda_cls * l_cls
    return total, l_box, l_cls


def make_batch(
    layouts: list[Layout],
    rng: np.random.Generator,
    cfg: TrainConfig,
    schedule: DiffusionSchedule,
    schema: DatasetSchema,
    scale: float,
) -> tuple[DenoiserInput, dict]:
    items = []
    for layout in layouts:
        spec, regime = sample_scenario_regime(layout, rng, cfg)
        t = int(rng.integers(1, schedule.T + 1))
        items.append(corrupt_layout(layout, spec, t, rng, schedule, schema, scale, regime))
    return assemble_batch(items, suppress_flags=cfg.ablation == "no-cond-embed")


def train_step(
    batch: list[Layout],
    model: Denoiser,
    optimizer: torch.optim.Optimizer,
    cfg: TrainConfig,
    rng: np.random.Generator,
    schedule: DiffusionSchedule,
    schema: DatasetSchema,
) -> dict[str, float]:
    """One optimizer update on a batch of clean layouts."""
    if not batch:
        raise ValueError("empty batch")
    inp, targets = make_batch(batch, rng, cfg, schedule, schema, model.config.signal_scale)
    model.train()
    optimizer.zero_grad()
    total, l_box, l_cls = batch_losses(model, inp, targets, cfg)
    total.backward()
    optimizer.step()
    return {
        "l_box": l_box.detach().item(),
        "l_cls": l_cls.detach().item(),
        "l_total": total.detach().item(),
    }


def _lr_at(step: int, cfg: TrainConfig) -> float:
    if cfg.warmup_steps and step <= cfg.warmup_steps:
        return cfg.lr * step / cfg.warmup_steps
    span = max(cfg.total_steps - cfg.warmup_steps, 1)
    frac = min((step - cfg.warmup_steps) / span, 1.0)
    return cfg.lr_final + 0.5 * (cfg.lr - cfg.lr_final) * (1 + math.cos(math.pi * frac))


def validation_loss(
    model: Denoiser,
    layouts: list[Layout],
    cfg: TrainConfig,
    schedule: DiffusionSchedule,
    schema: DatasetSchema,
    seed: int,
) -> float:
    """Loss on a fixed corruption of the validation layouts (own rng stream)."""
    if not layouts:
        return float("nan")
    rng = np.random.default_rng([seed, 7741])
    model.eval()
    with torch.no_grad():
        inp, targets = make_batch(
            layouts, rng, cfg, schedule, schema, model.config.signal_scale
        )
        total, _, _ = batch_losses(model, inp, targets, cfg)
    return float(total)


def train(
    train_layouts: list[Layout],
    schema: DatasetSchema,
    model_config: DenoiserConfig,
    cfg: TrainConfig,
    out_path: str | Path,
    val_layouts: list[Layout] | None = None,
    resume: str | Path | None = None,
    stop_step: int | None = None,
) -> Path:
    """Run the loop, log CSV metrics, write a self-describing checkpoint."""
    if not train_layouts:
        raise ValueError("empty training set")
    for layout in train_layouts:
        layout.validate(schema)
    if model_config.K != schema.K or model_config.n_max != schema.n_max:
        raise ValueError(
            f"model config (K={model_config.K}, n_max={model_config.n_max}) does not "
            f"match schema (K={schema.K}, n_max={schema.n_max})"
        )

    out_path = Path(out_path)
    schedule = build_cosine_schedule(model_config.T)
    start_step = 0

    if resume is not None:
        ckpt = load_checkpoint(resume)
        model = ckpt.build_model()
        state = torch.load(str(resume) + ".trainstate", weights_only=False)
        torch.random.set_rng_state(state["torch_rng"])
        rng = np.random.default_rng()
        rng.bit_generator.state = state["np_rng"]
        optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr)
        optimizer.load_state_dict(state["optimizer"])
        start_step = int(state["step"])
    else:
        torch.manual_seed(cfg.seed)
        model = build_denoiser(model_config, seed=cfg.seed)
        rng = np.random.default_rng(cfg.seed)
        optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr)

    count_hist = stats(train_layouts).count_hist
    canvas_votes: dict[tuple[int, int], int] = {}
    for layout in train_layouts:
        key = (layout.canvas_w, layout.canvas_h)
        canvas_votes[key] = canvas_votes.get(key, 0) + 1
    canvas = max(canvas_votes, key=canvas_votes.get)

    log_path = Path(cfg.log_path) if cfg.log_path else out_path.with_suffix(".log.csv")
    write_header = start_step == 0 or not log_path.exists()
    log_fh = open(log_path, "a" if start_step else "w", newline="")
    writer = csv.DictWriter(log_fh, fieldnames=["step", "l_box", "l_cls", "l_total", "val_total"])
    if write_header:
        writer.writeheader()

    def save(step: int) -> None:
        save_checkpoint(
            out_path,
            model,
            schedule,
            schema,
            meta={
                "step": step,
                "train_config": cfg.to_dict(),
                "count_hist": {str(k): v for k, v in count_hist.items()},
                "canvas": list(canvas),
                "ablation": cfg.ablation,
            },
        )
        torch.save(
            {
                "optimizer": optimizer.state_dict(),
                "torch_rng": torch.random.get_rng_state(),
                "np_rng": rng.bit_generator.state,
                "step": step,
            },
            str(out_path) + ".trainstate",
        )

    n = len(train_layouts)
    last_step = min(stop_step, cfg.total_steps) if stop_step else cfg.total_steps
    try:
        for step in range(start_step + 1, last_step + 1):
            for group in optimizer.param_groups:
                group["lr"] = _lr_at(step, cfg)
            idx = rng.choice(n, size=min(cfg.batch_size, n), replace=n < cfg.batch_size)
            batch = [train_layouts[int(i)] for i in idx]
            losses = train_step(batch, model, optimizer, cfg, rng, schedule, schema)
            row = {"step": step, **{k: f"{v:.6f}" for k, v in losses.items()}, "val_total": ""}
            if val_layouts and (step % cfg.val_every == 0 or step == cfg.total_steps):
                v = validation_loss(model, val_layouts, cfg, schedule, schema, cfg.seed)
                row["val_total"] = f"{v:.6f}"
            writer.writerow(row)
            if cfg.checkpoint_every and step % cfg.checkpoint_every == 0:
                save(step)
        save(last_step)
    finally:
        log_fh.close()
    return out_path
