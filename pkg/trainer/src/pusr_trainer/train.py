"""Toy-scale training loop: l1 objective, AdamW, halving schedule."""

from __future__ import annotations

import sys
from dataclasses import dataclass, field

import torch

from .data import PatchSampler
from .export import export_checkpoint
from .model import PlainSRNet, VARIANTS

# Published-recipe milestones sit at these fractions of the full run; toy
# budgets rescale them proportionally.
MILESTONE_FRACTIONS = (0.5, 0.8, 0.9, 0.95)


@dataclass
class TrainConfig:
    dataset_dir: str
    output_path: str
    variant: str = "U"
    scale: int = 2
    patch: int = 64
    batch_size: int = 8
    iterations: int = 5000
    lr: float = 5e-4
    seed: int = 0
    use_attention: bool = True
    log_every: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.patch % self.scale != 0:
            raise ValueError("patch size must be a multiple of the scale")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")

    def milestones(self) -> list[int]:
        steps = sorted({max(1, int(f * self.iterations))
                        for f in MILESTONE_FRACTIONS})
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise ValueError("milestones must be strictly increasing")
        return steps


@dataclass
class TrainResult:
    checkpoint_path: str
    losses: list[float] = field(default_factory=list)


def build_net(cfg: TrainConfig) -> PlainSRNet:
    torch.manual_seed(cfg.seed)
    return PlainSRNet.for_variant(cfg.variant, cfg.scale,
                                  use_attention=cfg.use_attention)


def train(cfg: TrainConfig) -> TrainResult:
    """Run the loop and write a training-form PUSR checkpoint; returns its
    path plus the per-iteration loss trace."""
    sampler = PatchSampler(cfg.dataset_dir, patch=cfg.patch, scale=cfg.scale,
                           seed=cfg.seed)
    net = build_net(cfg)
    net.train()
    opt = torch.optim.AdamW(net.parameters(), lr=cfg.lr, betas=(0.9, 0.99))
    sched = torch.optim.lr_scheduler.MultiStepLR(opt, cfg.milestones(), gamma=0.5)

    losses = []
    for it in range(cfg.iterations):
        lr_batch, hr_batch = sampler.batch(cfg.batch_size)
        opt.zero_grad(set_to_none=True)
        loss = torch.nn.functional.l1_loss(net(lr_batch), hr_batch)
        loss.backward()
        opt.step()
        sched.step()
        losses.append(float(loss.detach()))
        if cfg.log_every and (it + 1) % cfg.log_every == 0:
            print(f"iter {it + 1:>6}/{cfg.iterations}  l1 {losses[-1]:.5f}  "
                  f"lr {sched.get_last_lr()[0]:.2e}", file=sys.stderr)

    net.eval()
    export_checkpoint(net, cfg.output_path)
    return TrainResult(checkpoint_path=cfg.output_path, losses=losses)
