"""Reverse-diffusion generation under a ConditionSpec.

The loop runs the continuous chain for every step t = T..1 and fires a
discrete reverse step whenever floor(t/10) decrements, so the class chain
takes exactly T/10 steps.  Conditioned attributes are injected at their
pinned values (with their condition flags set) at every step and are copied
verbatim into the output, so pins are bit-exact regardless of seed.

Modes:

* ``joint``        both chains together (the default).
* ``class-first``  classes are generated with all boxes pinned at the
                   signal-space origin, then boxes are generated conditioned
                   on those classes.
* ``boxes-first``  boxes are generated with every class input fixed at the
                   mask token, then classes conditioned on those boxes.

``edit_only`` reproduces inference-only conditioning: pins still override
the state each step, but the condition flags fed to the model stay off
(for models trained without conditioning scenarios).
"""
from __future__ import annotations

import numpy as np
import torch

from .checkpoint import Checkpoint, load_checkpoint
from .continuous import posterior_sample
from .core import BBox, Component, ConditionSpec, Layout, from_signal
from .denoiser import DenoiserInput
from .discrete import reverse_posterior, sample_categorical
from .training import pin_arrays

MODES = ("joint", "class-first", "boxes-first")
DEFAULT_CANVAS = (1000, 1000)


class SamplerError(ValueError):
    """Condition or configuration incompatible with the checkpoint."""


def draw_component_count(rng: np.random.Generator, count_hist: dict) -> int:
    """Unconditioned slot-count policy: draw from the training histogram."""
    if not count_hist:
        raise SamplerError("checkpoint carries no component-count histogram")
    counts = sorted((int(k), int(v)) for k, v in count_hist.items())
    values = np.array([c[0] for c in counts])
    weights = np.array([c[1] for c in counts], dtype=np.float64)
    return int(rng.choice(values, p=weights / weights.sum()))


class Sampler:
    """A loaded checkpoint ready to generate; read-only and shareable."""

    def __init__(self, checkpoint: Checkpoint):
        self.checkpoint = checkpoint
        self.model = checkpoint.build_model()
        self.schedule = checkpoint.schedule
        self.schema = checkpoint.schema
        meta_canvas = checkpoint.meta.get("canvas")
        self.canvas = tuple(meta_canvas) if meta_canvas else DEFAULT_CANVAS

    @classmethod
    def from_path(cls, path) -> "Sampler":
        return cls(load_checkpoint(path))

    def generate(
        self,
        cond: ConditionSpec,
        seed: int,
        T_steps: int | None = None,
        edit_only: bool = False,
        mode: str = "joint",
    ) -> Layout:
        return self.generate_batch([cond], seed, T_steps, edit_only, mode)[0]

    def generate_batch(
        self,
        conds: list[ConditionSpec],
        seed: int,
        T_steps: int | None = None,
        edit_only: bool = False,
        mode: str = "joint",
    ) -> list[Layout]:
        """Vectorized generation; output order matches input order.

        Each item owns the rng stream seeded by (seed, position), so a batch
        of one reproduces single generation exactly.
        """
        if mode not in MODES:
            raise SamplerError(f"mode must be one of {MODES}")
        T = self.schedule.T
        if T_steps is not None and T_steps != T:
            raise SamplerError(
                f"T_steps={T_steps} does not match the checkpoint schedule (T={T})"
            )
        for cond in conds:
            cond.validate(self.schema)

        rngs = [np.random.default_rng([seed, i]) for i in range(len(conds))]
        if mode == "joint":
            x, y = self._run_joint(conds, rngs, edit_only)
        elif mode == "class-first":
            y = self._run_discrete_stage(conds, rngs, edit_only, zero_boxes=True)
            x, _ = self._run_continuous_stage(conds, rngs, edit_only, classes=y)
        else:  # boxes-first
            x, _ = self._run_continuous_stage(conds, rngs, edit_only, classes=None)
            y = self._run_discrete_stage(conds, rngs, edit_only, boxes=x)
        return self._assemble(conds, x, y)

    # --- state construction ------------------------------------------------

    def _init_state(self, conds, rngs, override_classes=None, override_boxes=None):
        N, K = self.schema.n_max, self.schema.K
        B = len(conds)
        scale = self.model.config.signal_scale
        x = np.zeros((B, N, 4))
        y = np.full((B, N), K, dtype=np.int64)
        pad = np.ones((B, N), dtype=bool)
        flags = {
            "cond_pos": np.zeros((B, N), dtype=bool),
            "cond_size": np.zeros((B, N), dtype=bool),
            "cond_cls": np.zeros((B, N), dtype=bool),
        }
        pins = []
        for i, cond in enumerate(conds):
            n = cond.n_components
            pad[i, :n] = False
            cp, cs, cc, pin_xy, pin_wh, pin_k = pin_arrays(cond, N, scale)
            pins.append((cp, cs, cc, pin_xy, pin_wh, pin_k))
            flags["cond_pos"][i] = cp
            flags["cond_size"][i] = cs
            flags["cond_cls"][i] = cc
            # fixed-shape draw: runtime and rng use do not depend on n
            x[i] = rngs[i].standard_normal((N, 4))
            if override_boxes is not None:
                x[i, :n] = override_boxes[i, :n]
        if override_classes is not None:
            y = override_classes.copy()
        return x, y, pad, flags, pins

    def _reimpose(self, x, y, pads, pins, conds):
        for i, (cp, cs, cc, pin_xy, pin_wh, pin_k) in enumerate(pins):
            x[i, cp, 0:2] = pin_xy[cp]
            x[i, cs, 2:4] = pin_wh[cs]
            y[i, cc] = pin_k[cc]
            x[i, pads[i]] = 0.0
            y[i, pads[i]] = self.schema.K

    def _forward(self, x, y, pads, flags, t, edit_only):
        B = x.shape[0]
        inp = DenoiserInput(
            x_t=torch.as_tensor(x, dtype=torch.float32),
            y_t=torch.as_tensor(y),
            cond_pos=torch.as_tensor(
                np.zeros_like(flags["cond_pos"]) if edit_only else flags["cond_pos"]
            ),
            cond_size=torch.as_tensor(
                np.zeros_like(flags["cond_size"]) if edit_only else flags["cond_size"]
            ),
            cond_cls=torch.as_tensor(
                np.zeros_like(flags["cond_cls"]) if edit_only else flags["cond_cls"]
            ),
            t=torch.full((B,), t, dtype=torch.long),
            pad_mask=torch.as_tensor(pads),
        )
        with torch.no_grad():
            x0_hat, logits = self.model(inp)
        p0 = torch.softmax(logits.double(), dim=-1).numpy()
        K1 = p0.shape[-1] + 1
        p0_ext = np.zeros((*p0.shape[:-1], K1))
        p0_ext[..., :-1] = p0
        return x0_hat.double().numpy(), p0_ext

    def _fire_discrete(self, y, p0_ext, conds, rngs, s):
        # full fixed-shape update; pad slots get resampled from their (valid)
        # softmax rows and are forced back to mask immediately afterwards
        beta = self.schedule.beta_disc
        for i in range(len(conds)):
            rows = reverse_posterior(y[i], p0_ext[i], s=s, beta_disc=beta)
            y[i] = sample_categorical(rows, rngs[i])

    # --- generation loops ----------------------------------------------------

    def _run_joint(self, conds, rngs, edit_only):
        x, y, pads, flags, pins = self._init_state(conds, rngs)
        self._reimpose(x, y, pads, pins, conds)
        T = self.schedule.T
        last_p0 = None
        for t in range(T, 0, -1):
            x0_hat, p0_ext = self._forward(x, y, pads, flags, t, edit_only)
            last_p0 = p0_ext
            for i in range(len(conds)):
                x[i] = posterior_sample(x[i], x0_hat[i], t, rngs[i], self.schedule)
            if (t - 1) // 10 < t // 10:
                self._fire_discrete(y, p0_ext, conds, rngs, s=t // 10)
            self._reimpose(x, y, pads, pins, conds)
        self._resolve_leftover_masks(y, last_p0, conds)
        return x, y

    def _run_discrete_stage(self, conds, rngs, edit_only, zero_boxes=False, boxes=None):
        """Only the class chain: forward passes at the firing steps t = 10s.

        Boxes are held fixed as conditioning input: at the signal-space
        origin for the class-first mode, or at the given stage-one output
        for the boxes-first mode.
        """
        x, y, pads, flags, pins = self._init_state(conds, rngs, override_boxes=boxes)
        flags = dict(flags)
        flags["cond_pos"] = ~pads
        flags["cond_size"] = ~pads
        self._reimpose(x, y, pads, pins, conds)
        if zero_boxes:
            x[:] = 0.0
        last_p0 = None
        for s in range(self.schedule.S_disc, 0, -1):
            _, p0_ext = self._forward(x, y, pads, flags, 10 * s, edit_only)
            last_p0 = p0_ext
            self._fire_discrete(y, p0_ext, conds, rngs, s=s)
            for i, (cp, cs, cc, pin_xy, pin_wh, pin_k) in enumerate(pins):
                y[i, cc] = pin_k[cc]
                y[i, pads[i]] = self.schema.K
        self._resolve_leftover_masks(y, last_p0, conds)
        return y

    def _run_continuous_stage(self, conds, rngs, edit_only, classes=None):
        """Only the box chain; classes fixed (given, or all-mask with flags on)."""
        x, y, pads, flags, pins = self._init_state(conds, rngs, override_classes=classes)
        flags = dict(flags)
        flags["cond_cls"] = ~pads
        self._reimpose(x, y, pads, pins, conds)
        if classes is None:
            for i, cond in enumerate(conds):
                mask_all = np.full(cond.n_components, self.schema.K)
                y[i, : cond.n_components] = mask_all
                # user-pinned classes still override the mask-token input
                cc = pins[i][2]
                y[i, cc] = pins[i][5][cc]
        T = self.schedule.T
        for t in range(T, 0, -1):
            x0_hat, _ = self._forward(x, y, pads, flags, t, edit_only)
            for i in range(len(conds)):
                x[i] = posterior_sample(x[i], x0_hat[i], t, rngs[i], self.schedule)
            self._reimpose(x, y, pads, pins, conds)
        return x, y

    def _resolve_leftover_masks(self, y, last_p0, conds):
        # the s=1 posterior has zero mask mass, so this is a pure safety net
        K = self.schema.K
        for i, cond in enumerate(conds):
            n = cond.n_components
            stuck = np.nonzero(y[i, :n] == K)[0]
            if stuck.size and last_p0 is not None:
                y[i, stuck] = np.argmax(last_p0[i, stuck, :K], axis=-1)

    # --- output ---------------------------------------------------------------

    def _assemble(self, conds, x, y) -> list[Layout]:
        scale = self.model.config.signal_scale
        W, H = self.canvas
        out = []
        for i, cond in enumerate(conds):
            comps = []
            for j in range(cond.n_components):
                gen_box = from_signal(x[i, j], scale)
                cx, cy = gen_box.cx, gen_box.cy
                w, h = gen_box.w, gen_box.h
                if cond.cond_pos[j]:
                    cx, cy = cond.pin_pos[j]
                if cond.cond_size[j]:
                    w, h = cond.pin_size[j]
                k = cond.pin_cls[j] if cond.cond_cls[j] else int(y[i, j])
                comps.append(Component(self.schema.label_of(int(k)), BBox(cx, cy, w, h)))
            layout = Layout(components=comps, canvas_w=W, canvas_h=H)
            layout.validate(self.schema)
            out.append(layout)
        return out
