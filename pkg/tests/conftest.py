"""Shared test helpers. Tiny models run faster single-threaded (no sync
overhead), and a fixed thread count keeps reductions bit-reproducible."""

import numpy as np
import torch

torch.set_num_threads(1)

from t2tlab.model import batch_loss, collate, loss_and_grads


def sample_coords(params: dict, n: int, rng: np.random.Generator) -> list[tuple[str, int]]:
    """n distinct (array name, flat index) coordinates across all parameters."""
    names = sorted(params)
    sizes = np.array([params[name].numel() for name in names])
    bounds = np.cumsum(sizes)
    flat = rng.choice(int(sizes.sum()), size=min(n, int(sizes.sum())), replace=False)
    out = []
    for f in flat:
        ai = int(np.searchsorted(bounds, f, side="right"))
        out.append((names[ai], int(f - (bounds[ai - 1] if ai else 0))))
    return out


def finite_difference_check(params, cfg, examples, partitions, n_coords, rng, h=1e-5):
    """Worst relative error of analytic vs central-difference gradients."""
    _, grads = loss_and_grads(params, cfg, examples, partitions)

    def loss_only():
        items = [(ex.input_ids, ex.target_ids, p) for ex, p in zip(examples, partitions)]
        return batch_loss(params, cfg, collate(cfg, items)).item()

    worst = 0.0
    for name, idx in sample_coords(params, n_coords, rng):
        flat = params[name].view(-1)
        orig = flat[idx].item()
        with torch.no_grad():
            flat[idx] = orig + h
        lp = loss_only()
        with torch.no_grad():
            flat[idx] = orig - h
        lm = loss_only()
        with torch.no_grad():
            flat[idx] = orig
        numeric = (lp - lm) / (2 * h)
        analytic = grads[name].view(-1)[idx].item()
        worst = max(worst, abs(numeric - analytic) / max(abs(numeric), abs(analytic), 1e-6))
    return worst
