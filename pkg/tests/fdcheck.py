"""Central finite-difference oracle for module parameter gradients (float64)."""
import torch


def fd_relative_errors(module, loss_fn, step=1e-4, max_coords=48, seed=0):
    """Relative error ||g_analytic - g_fd|| / ||g_fd|| per parameter tensor.

    At most ``max_coords`` randomly chosen coordinates per tensor are probed.
    """
    gen = torch.Generator().manual_seed(seed)
    module.zero_grad()
    loss_fn().backward()
    errors = {}
    for name, p in module.named_parameters():
        flat = p.data.view(-1)
        n = flat.numel()
        idx = torch.randperm(n, generator=gen)[:max_coords] if n > max_coords else torch.arange(n)
        analytic = p.grad.view(-1)[idx].clone()
        numeric = torch.empty_like(analytic)
        with torch.no_grad():
            for j, i in enumerate(idx.tolist()):
                orig = flat[i].item()
                flat[i] = orig + step
                up = loss_fn().item()
                flat[i] = orig - step
                down = loss_fn().item()
                flat[i] = orig
                numeric[j] = (up - down) / (2 * step)
        denom = max(numeric.norm().item(), analytic.norm().item(), 1e-12)
        errors[name] = (analytic - numeric).norm().item() / denom
    return errors
