"""Central finite-difference gradients for checking autograd paths.

The analytic gradients under test come from float32 autograd; the
finite-difference baseline evaluates the function in float64 so the
oracle's own roundoff noise stays far below the comparison tolerance.
"""

import torch


def central_diff_grad(fn, x: torch.Tensor, step: float = 1e-3) -> torch.Tensor:
    """Elementwise central differences of a scalar function of x (float64)."""
    x = x.detach().to(torch.float64)
    grad = torch.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    with torch.no_grad():
        for i in range(flat.numel()):
            orig = flat[i].item()
            flat[i] = orig + step
            f_plus = float(fn(x))
            flat[i] = orig - step
            f_minus = float(fn(x))
            flat[i] = orig
            gflat[i] = (f_plus - f_minus) / (2.0 * step)
    return grad


def relative_error(approx: torch.Tensor, exact: torch.Tensor) -> float:
    approx = approx.detach().to(torch.float64)
    exact = exact.detach().to(torch.float64)
    denom = max(exact.norm().item(), 1e-12)
    return (approx - exact).norm().item() / denom
