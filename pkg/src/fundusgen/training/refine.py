"""Per-image latent refinement.

For one target image, gradient descent on the perceptual distance with
respect to the latent inputs (style rows and base feature) only; the
network weights stay frozen. Returns the best-seen iterate, the loss
trace, and where the best occurred. Divergence (20 consecutive steps above
10x the initial loss) stops early and still returns the best iterate.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from ..encoder import FundusEncoder
from ..generator import StyleGenerator
from ..latent import LatentCode
from ..losses import PerceptualExtractor, lpips_loss


@dataclass
class RefineResult:
    f_hat: torch.Tensor
    w_hat: torch.Tensor
    trace: list[tuple[int, float]]
    best_step: int

    @property
    def best_value(self) -> float:
        return min(v for _, v in self.trace)

    @property
    def initial_value(self) -> float:
        return self.trace[0][1]


def refine(x: torch.Tensor, encoder: FundusEncoder, generator: StyleGenerator,
           perceptual: PerceptualExtractor, skip_count: int = 0,
           steps: int = 200, lr: float = 0.01) -> RefineResult:
    """Optimize (f, w_plus) from the encoder's starting point for one image."""
    encoder.eval()
    generator.eval()
    frozen = [p for p in generator.parameters() if p.requires_grad]
    for p in frozen:
        p.requires_grad_(False)
    try:
        with torch.no_grad():
            code = encoder.encode(x, skip_count)
        skips = [(r, s.detach()) for r, s in code.skips]
        f = code.f.detach().clone().requires_grad_(True)
        w = code.w_plus.detach().clone().requires_grad_(True)
        target = x.unsqueeze(0) if x.ndim == 3 else x

        def evaluate() -> torch.Tensor:
            return lpips_loss(target, generator.synthesize(LatentCode(w, f, skips)),
                              perceptual)

        with torch.no_grad():
            initial = float(evaluate())
        trace = [(0, initial)]
        best = (initial, f.detach().clone(), w.detach().clone(), 0)

        optimizer = torch.optim.Adam([f, w], lr=lr)
        bad_streak = 0
        for step in range(1, steps + 1):
            optimizer.zero_grad(set_to_none=True)
            loss = evaluate()
            loss.backward()
            optimizer.step()
            with torch.no_grad():
                value = float(evaluate())
            trace.append((step, value))
            if value < best[0]:
                best = (value, f.detach().clone(), w.detach().clone(), step)
            bad_streak = bad_streak + 1 if value > 10.0 * initial else 0
            if bad_streak >= 20:
                break
        return RefineResult(f_hat=best[1], w_hat=best[2], trace=trace,
                            best_step=best[3])
    finally:
        for p in frozen:
            p.requires_grad_(True)
