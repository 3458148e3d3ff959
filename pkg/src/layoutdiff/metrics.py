"""Layout quality metrics: overlap, rasterized pIOU, alignment, DocSim, FID.

Reference definitions frozen for this artifact:

* overlap   — sum of pairwise intersection areas over the sum of component
              areas (0 for fewer than two components).
* pIOU      — rasterized: pixels covered at least twice over pixels covered
              at least once.
* alignment — mean over components of the smallest gap, across the six axis
              features (left, x-center, right, top, y-center, bottom), to
              the nearest other component.
* DocSim    — max-weight bipartite matching of same-class boxes with weight
              sqrt(min area) * 2 ** (-center_dist - 2 * size_dist),
              normalized by the larger component count.
* FID       — Frechet distance between Gaussian fits of critic features;
              the critic is a small transformer trained to tell real layouts
              from noise-injected copies, and its pooled penultimate features
              embed a layout.  Covariances are always shrunk by 1e-6 * I and
              the matrix square root uses an eigendecomposition of the
              symmetrized product.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, asdict

import numpy as np
import torch
from scipy.optimize import linear_sum_assignment
from torch import nn

from .core import DatasetSchema, Layout

log = logging.getLogger(__name__)

DOCSIM_SIZE_WEIGHT = 2.0
FID_SHRINKAGE = 1e-6
CRITIC_MIN_LAYOUTS = 64
CRITIC_RECOMMENDED = 1000


def overlap(layout: Layout) -> float:
    """Total pairwise intersection area over total component area."""
    n = layout.n
    if n < 2:
        return 0.0
    corners = np.array([c.box.corners() for c in layout.components])
    areas = np.array([c.box.area for c in layout.components])
    total = areas.sum()
    if total <= 0:
        return 0.0
    inter = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            w = min(corners[i, 2], corners[j, 2]) - max(corners[i, 0], corners[j, 0])
            h = min(corners[i, 3], corners[j, 3]) - max(corners[i, 1], corners[j, 1])
            if w > 0 and h > 0:
                inter += w * h
    return float(inter / total)


def piou(layout: Layout, raster: int = 256) -> float:
    """Multiply-covered pixels over union pixels at raster x raster resolution."""
    if raster < 64:
        raise ValueError(f"raster={raster} too coarse (need >= 64)")
    if layout.n == 0:
        return 0.0
    counts = np.zeros((raster, raster), dtype=np.int16)
    for comp in layout.components:
        x0, y0, x1, y1 = comp.box.corners()
        c0 = max(int(round(x0 * raster)), 0)
        c1 = min(int(round(x1 * raster)), raster)
        r0 = max(int(round(y0 * raster)), 0)
        r1 = min(int(round(y1 * raster)), raster)
        if c1 > c0 and r1 > r0:
            counts[r0:r1, c0:c1] += 1
    union = int((counts >= 1).sum())
    if union == 0:
        return 0.0
    return float((counts >= 2).sum() / union)


def _axis_features(layout: Layout) -> np.ndarray:
    feats = []
    for c in layout.components:
        x0, y0, x1, y1 = c.box.corners()
        feats.append([x0, c.box.cx, x1, y0, c.box.cy, y1])
    return np.array(feats)


def alignment(layout: Layout) -> float:
    """Mean over components of the nearest axis-feature gap to any other."""
    n = layout.n
    if n < 2:
        return 0.0
    f = _axis_features(layout)
    best = np.full(n, np.inf)
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            best[i] = min(best[i], np.min(np.abs(f[i] - f[j])))
    return float(best.mean())


def docsim_weights(gen: Layout, ref: Layout) -> np.ndarray:
    """Pair weights; zero for class mismatches."""
    W = np.zeros((gen.n, ref.n))
    for i, a in enumerate(gen.components):
        for j, b in enumerate(ref.components):
            if a.cls.name != b.cls.name:
                continue
            alpha = np.sqrt(min(a.box.area, b.box.area))
            dc = np.hypot(a.box.cx - b.box.cx, a.box.cy - b.box.cy)
            ds = abs(a.box.w - b.box.w) + abs(a.box.h - b.box.h)
            W[i, j] = alpha * 2.0 ** (-dc - DOCSIM_SIZE_WEIGHT * ds)
    return W


def docsim(gen: Layout, ref: Layout) -> float:
    """Max-weight matching total over max(n_gen, n_ref)."""
    if gen.n == 0 or ref.n == 0:
        return 0.0
    W = docsim_weights(gen, ref)
    m = max(gen.n, ref.n)
    padded = np.zeros((m, m))
    padded[: gen.n, : ref.n] = W
    rows, cols = linear_sum_assignment(padded, maximize=True)
    return float(padded[rows, cols].sum() / m)


# --- FID critic ---------------------------------------------------------------


@dataclass(frozen=True)
class CriticConfig:
    K: int
    n_max: int = 10
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    noise_sigma: float = 0.05
    class_resample_p: float = 0.1
    steps: int = 800
    batch_size: int = 64
    lr: float = 3e-4  # post-norm encoder destabilizes at 1e-3

    def to_dict(self) -> dict:
        return asdict(self)


class LayoutCritic(nn.Module):
    """Binary real-vs-noised classifier whose pooled features embed a layout."""

    def __init__(self, config: CriticConfig):
        super().__init__()
        self.config = config
        c = config
        half = c.d_model // 2
        self.box_lin = nn.Linear(4, half)
        self.cls_embed = nn.Embedding(c.K + 1, c.d_model - half)
        layer = nn.TransformerEncoderLayer(
            d_model=c.d_model, nhead=c.n_heads, dim_feedforward=4 * c.d_model,
            dropout=0.0, batch_first=True, norm_first=False,
        )
        self.encoder = nn.TransformerEncoder(layer, num_layers=c.n_layers, enable_nested_tensor=False)
        self.head = nn.Linear(c.d_model, 1)

    def features(self, boxes: torch.Tensor, classes: torch.Tensor, pad: torch.Tensor) -> torch.Tensor:
        tok = torch.cat([self.box_lin(boxes), self.cls_embed(classes)], dim=-1)
        hidden = self.encoder(tok, src_key_padding_mask=pad)
        keep = (~pad).unsqueeze(-1).to(hidden.dtype)
        pooled = (hidden * keep).sum(dim=1) / keep.sum(dim=1).clamp(min=1.0)
        return pooled

    def forward(self, boxes, classes, pad):
        return self.head(self.features(boxes, classes, pad)).squeeze(-1)


def layouts_to_arrays(layouts: list[Layout], schema: DatasetSchema):
    N = schema.n_max
    B = len(layouts)
    boxes = np.zeros((B, N, 4), dtype=np.float32)
    classes = np.full((B, N), schema.K, dtype=np.int64)
    pad = np.ones((B, N), dtype=bool)
    for i, layout in enumerate(layouts):
        n = layout.n
        if n:
            boxes[i, :n] = layout.boxes()
            classes[i, :n] = layout.class_indices()
            pad[i, :n] = False
    return boxes, classes, pad


def _noise_negatives(boxes, classes, pad, cfg: CriticConfig, rng: np.random.Generator):
    noisy = boxes + rng.normal(0.0, cfg.noise_sigma, size=boxes.shape).astype(np.float32)
    noisy[..., 0:2] = np.clip(noisy[..., 0:2], 0.0, 1.0)
    noisy[..., 2:4] = np.clip(noisy[..., 2:4], 1e-3, 1.0)
    resample = (rng.random(classes.shape) < cfg.class_resample_p) & ~pad
    new_classes = rng.integers(0, cfg.K, size=classes.shape)
    return noisy, np.where(resample, new_classes, classes)


@dataclass
class CriticBundle:
    model: LayoutCritic
    schema: DatasetSchema

    def layout_features(self, layouts: list[Layout]) -> np.ndarray:
        boxes, classes, pad = layouts_to_arrays(layouts, self.schema)
        self.model.eval()
        with torch.no_grad():
            feats = self.model.features(
                torch.as_tensor(boxes), torch.as_tensor(classes), torch.as_tensor(pad)
            )
        return feats.numpy().astype(np.float64)

    def save(self, path) -> None:
        torch.save(
            {
                "config": self.model.config.to_dict(),
                "schema": self.schema.to_dict(),
                "state": self.model.state_dict(),
            },
            path,
        )

    @classmethod
    def load(cls, path) -> "CriticBundle":
        blob = torch.load(path, weights_only=False)
        model = LayoutCritic(CriticConfig(**blob["config"]))
        model.load_state_dict(blob["state"])
        model.eval()
        return cls(model=model, schema=DatasetSchema.from_dict(blob["schema"]))


def train_fid_critic(
    real_layouts: list[Layout],
    schema: DatasetSchema,
    cfg: CriticConfig | None = None,
    seed: int = 0,
) -> CriticBundle:
    """Train the real-vs-noised classifier used as the FID feature extractor."""
    if len(real_layouts) < CRITIC_MIN_LAYOUTS:
        raise ValueError(
            f"need >= {CRITIC_MIN_LAYOUTS} layouts to fit a critic, got {len(real_layouts)}"
        )
    if len(real_layouts) < CRITIC_RECOMMENDED:
        log.warning(
            "training FID critic on %d layouts; >= %d recommended",
            len(real_layouts), CRITIC_RECOMMENDED,
        )
    cfg = cfg or CriticConfig(K=schema.K, n_max=schema.n_max)
    rng = np.random.default_rng(seed)
    state = torch.random.get_rng_state()
    try:
        torch.manual_seed(seed)
        model = LayoutCritic(cfg)
    finally:
        torch.random.set_rng_state(state)

    boxes, classes, pad = layouts_to_arrays(real_layouts, schema)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    bce = nn.BCEWithLogitsLoss()
    n = len(real_layouts)
    model.train()
    for _ in range(cfg.steps):
        idx = rng.choice(n, size=min(cfg.batch_size, n), replace=n < cfg.batch_size)
        b, k, p = boxes[idx], classes[idx], pad[idx]
        nb, nk = _noise_negatives(b, k, p, cfg, rng)
        xb = torch.as_tensor(np.concatenate([b, nb]))
        xk = torch.as_tensor(np.concatenate([k, nk]))
        xp = torch.as_tensor(np.concatenate([p, p]))
        target = torch.cat([torch.ones(len(idx)), torch.zeros(len(idx))])
        opt.zero_grad()
        loss = bce(model(xb, xk, xp), target)
        loss.backward()
        opt.step()
    model.eval()
    return CriticBundle(model=model, schema=schema)


def critic_accuracy(
    bundle: CriticBundle, layouts: list[Layout], seed: int = 1
) -> float:
    """Held-out real-vs-noised accuracy of a trained critic."""
    rng = np.random.default_rng(seed)
    boxes, classes, pad = layouts_to_arrays(layouts, bundle.schema)
    nb, nk = _noise_negatives(boxes, classes, pad, bundle.model.config, rng)
    bundle.model.eval()
    with torch.no_grad():
        pos = bundle.model(torch.as_tensor(boxes), torch.as_tensor(classes), torch.as_tensor(pad))
        neg = bundle.model(torch.as_tensor(nb), torch.as_tensor(nk), torch.as_tensor(pad))
    hits = int((pos > 0).sum()) + int((neg <= 0).sum())
    return hits / (2 * len(layouts))


# --- Frechet distance ---------------------------------------------------------


def sqrtm_psd(M: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition."""
    sym = (M + M.T) / 2.0
    vals, vecs = np.linalg.eigh(sym)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def gaussian_fit(features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mu = features.mean(axis=0)
    sigma = np.cov(features, rowvar=False)
    sigma = np.atleast_2d(sigma) + FID_SHRINKAGE * np.eye(features.shape[1])
    return mu, sigma


def frechet_distance(mu1, sigma1, mu2, sigma2) -> float:
    diff = mu1 - mu2
    root1 = sqrtm_psd(sigma1)
    mid = sqrtm_psd(root1 @ sigma2 @ root1)
    val = float(diff @ diff + np.trace(sigma1) + np.trace(sigma2) - 2.0 * np.trace(mid))
    return max(val, 0.0)


def fid(gen_set: list[Layout], ref_set: list[Layout], critic: CriticBundle) -> float:
    """Frechet distance between Gaussian fits of critic features."""
    if not gen_set or not ref_set:
        raise ValueError("fid needs non-empty layout sets")
    f1 = critic.layout_features(gen_set)
    f2 = critic.layout_features(ref_set)
    want = max(f1.shape[1] + 1, 64)
    if len(gen_set) < want or len(ref_set) < want:
        log.warning(
            "fid sets of size %d/%d below the recommended %d; relying on covariance shrinkage",
            len(gen_set), len(ref_set), want,
        )
    return frechet_distance(*gaussian_fit(f1), *gaussian_fit(f2))


# --- aggregation ----------------------------------------------------------------


@dataclass
class MetricReport:
    overlap: float
    piou: float
    alignment: float
    docsim: float | None
    fid: float | None
    n_layouts: int

    def to_dict(self) -> dict:
        return asdict(self)

    def check(self) -> None:
        for name in ("overlap", "piou", "alignment"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name}={v} not a finite nonnegative value")
        if self.docsim is not None and not 0.0 <= self.docsim <= 1.0:
            raise ValueError(f"docsim={self.docsim} outside [0, 1]")
        if self.fid is not None and not np.isfinite(self.fid):
            raise ValueError(f"fid={self.fid} not finite")


def evaluate(
    gen_set: list[Layout],
    ref_set: list[Layout],
    critic: CriticBundle | None = None,
    pairing: list[int] | None = None,
    raster: int = 256,
) -> MetricReport:
    """Per-layout metrics averaged over the generated set, plus set-level FID.

    `pairing[i]` names the reference layout that conditioned `gen_set[i]`;
    DocSim is only computed when a pairing is supplied.
    """
    if not gen_set or not ref_set:
        raise ValueError("evaluate needs non-empty layout sets")
    report = MetricReport(
        overlap=float(np.mean([overlap(l) for l in gen_set])),
        piou=float(np.mean([piou(l, raster) for l in gen_set])),
        alignment=float(np.mean([alignment(l) for l in gen_set])),
        docsim=None,
        fid=None,
        n_layouts=len(gen_set),
    )
    if pairing is not None:
        if len(pairing) != len(gen_set):
            raise ValueError("pairing length must match the generated set")
        report.docsim = float(
            np.mean([docsim(g, ref_set[j]) for g, j in zip(gen_set, pairing)])
        )
    if critic is not None:
        report.fid = fid(gen_set, ref_set, critic)
    report.check()
    return report
