"""Trainable denoiser: transformer encoder over component tokens plus a time token.

Each component token is the concatenation of three sub-embeddings
(position, size, class).  A per-attribute trainable flag vector is added
to a sub-embedding when that attribute is pinned by the conditioning, so
the network can tell conditioning inputs apart from diffusion inputs.
There is no sequence-order positional encoding: a layout is a set, and
the forward pass is permutation equivariant over component slots.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import torch
from torch import nn


@dataclass(frozen=True)
class DenoiserConfig:
    K: int
    n_max: int = 10
    T: int = 100
    d_model: int = 512
    n_layers: int = 4
    n_heads: int = 8
    d_pos: int = 128
    d_size: int = 128
    d_cls: int = 256
    time_features: int = 128
    dropout: float = 0.1
    signal_scale: float = 2.0

    def __post_init__(self) -> None:
        if self.d_pos + self.d_size + self.d_cls != self.d_model:
            raise ValueError(
                f"sub-embedding widths {self.d_pos}+{self.d_size}+{self.d_cls} "
                f"must sum to d_model={self.d_model}"
            )
        if self.d_model % self.n_heads != 0:
            raise ValueError(f"d_model={self.d_model} not divisible by n_heads={self.n_heads}")

    @classmethod
    def desk(cls, K: int, n_max: int = 10, T: int = 100, **overrides) -> "DenoiserConfig":
        """Reduced profile used for tests and desk-scale runs."""
        base = dict(
            K=K, n_max=n_max, T=T,
            d_model=64, n_layers=2, n_heads=4,
            d_pos=16, d_size=16, d_cls=32,
            time_features=32, dropout=0.1,
        )
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DenoiserConfig":
        return cls(**d)


@dataclass
class DenoiserInput:
    """Batched model input.

    x_t: (B, N, 4) signal-space coordinates; conditioned attributes carry
    their pinned clean values.  y_t: (B, N) class indices, mask = K allowed.
    Flags are (B, N) booleans; pad_mask marks empty slots (excluded from
    attention and loss).  t: (B,) continuous step indices.
    """

    x_t: torch.Tensor
    y_t: torch.Tensor
    cond_pos: torch.Tensor
    cond_size: torch.Tensor
    cond_cls: torch.Tensor
    t: torch.Tensor
    pad_mask: torch.Tensor

    @classmethod
    def zeros(cls, B: int, N: int, K: int, dtype=torch.float32) -> "DenoiserInput":
        return cls(
            x_t=torch.zeros(B, N, 4, dtype=dtype),
            y_t=torch.full((B, N), K, dtype=torch.long),
            cond_pos=torch.zeros(B, N, dtype=torch.bool),
            cond_size=torch.zeros(B, N, dtype=torch.bool),
            cond_cls=torch.zeros(B, N, dtype=torch.bool),
            t=torch.zeros(B, dtype=torch.long),
            pad_mask=torch.zeros(B, N, dtype=torch.bool),
        )


def sinusoidal_features(t: torch.Tensor, dim: int, max_period: float = 10_000.0) -> torch.Tensor:
    """Classic sin/cos featurization of a scalar step index, shape (B, dim)."""
    half = dim // 2
    freqs = torch.exp(
        -math.log(max_period) * torch.arange(half, dtype=torch.float64) / half
    ).to(t.device)
    args = t[:, None].to(torch.float64) * freqs[None, :]
    feats = torch.cat([torch.sin(args), torch.cos(args)], dim=-1)
    if dim % 2 == 1:
        feats = torch.nn.functional.pad(feats, (0, 1))
    return feats


class Denoiser(nn.Module):
    """F(x_t, y_t, condition, t) -> (predicted clean boxes, class logits)."""

    def __init__(self, config: DenoiserConfig):
        super().__init__()
        self.config = config
        c = config
        self.pos_lin = nn.Linear(2, c.d_pos)
        self.size_lin = nn.Linear(2, c.d_size)
        self.cls_embed = nn.Embedding(c.K + 1, c.d_cls)
        # one off/on vector pair per attribute group
        self.cond_pos_embed = nn.Embedding(2, c.d_pos)
        self.cond_size_embed = nn.Embedding(2, c.d_size)
        self.cond_cls_embed = nn.Embedding(2, c.d_cls)
        self.time_mlp = nn.Sequential(
            nn.Linear(c.time_features, c.d_model),
            nn.SiLU(),
            nn.Linear(c.d_model, c.d_model),
        )
        layer = nn.TransformerEncoderLayer(
            d_model=c.d_model,
            nhead=c.n_heads,
            dim_feedforward=4 * c.d_model,
            dropout=c.dropout,
            activation="relu",
            batch_first=True,
            norm_first=False,
        )
        self.encoder = nn.TransformerEncoder(
            layer, num_layers=c.n_layers, enable_nested_tensor=False
        )
        self.box_head = nn.Linear(c.d_model, 4)
        self.class_head = nn.Linear(c.d_model, c.K)

    def embed(self, inp: DenoiserInput) -> tuple[torch.Tensor, torch.Tensor]:
        """Component tokens (B, N, d_model) and the time token (B, 1, d_model)."""
        dtype = self.pos_lin.weight.dtype
        x = inp.x_t.to(dtype)
        pos = self.pos_lin(x[..., :2]) + self.cond_pos_embed(inp.cond_pos.long())
        size = self.size_lin(x[..., 2:]) + self.cond_size_embed(inp.cond_size.long())
        cls = self.cls_embed(inp.y_t) + self.cond_cls_embed(inp.cond_cls.long())
        tokens = torch.cat([pos, size, cls], dim=-1)
        tfeat = sinusoidal_features(inp.t, self.config.time_features).to(dtype)
        time_token = self.time_mlp(tfeat)[:, None, :]
        return tokens, time_token

    def forward(self, inp: DenoiserInput) -> tuple[torch.Tensor, torch.Tensor]:
        tokens, time_token = self.embed(inp)
        seq = torch.cat([tokens, time_token], dim=1)
        B = seq.shape[0]
        pad = torch.cat(
            [inp.pad_mask, torch.zeros(B, 1, dtype=torch.bool, device=seq.device)], dim=1
        )
        hidden = self.encoder(seq, src_key_padding_mask=pad)
        comp = hidden[:, :-1, :]
        return self.box_head(comp), self.class_head(comp)

    def param_count(self) -> int:
        return sum(p.numel() for p in self.parameters())


def build_denoiser(config: DenoiserConfig, seed: int = 0) -> Denoiser:
    """Construct with deterministic parameter initialization."""
    gen_state = torch.random.get_rng_state()
    try:
        torch.manual_seed(seed)
        model = Denoiser(config)
    finally:
        torch.random.set_rng_state(gen_state)
    return model
