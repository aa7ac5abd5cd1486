import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from torch import nn

from ufema.ema import EMACorruptionError, EMAState, ema_encoder_snapshot, ema_update
from ufema.encoder import EncoderConfig, init_encoder


class Scalar(nn.Module):
    def __init__(self, v):
        super().__init__()
        self.p = nn.Parameter(torch.tensor([v], dtype=torch.float64))


def test_alpha_zero_copies_model():
    enc = init_encoder(EncoderConfig(n_mels=8, channels=4, pool_channels=4, embed_dim=4), 0)
    state = EMAState(enc, alpha=0.0)
    with torch.no_grad():
        for p in enc.parameters():
            p.add_(1.0)
    ema_update(state)
    for (n, a), b in zip(enc.state_dict().items(), state.shadow.state_dict().values()):
        assert torch.equal(a, b), n


def test_closed_form_geometric_recursion():
    e0, c, alpha, k = 2.5, -1.25, 0.999, 10
    model = Scalar(e0)
    state = EMAState(model, alpha)
    with torch.no_grad():
        model.p.fill_(c)
    for _ in range(k):
        ema_update(state)
    expected = c + alpha ** k * (e0 - c)
    got = state.shadow.p.item()
    assert abs(got - expected) <= 1e-12 * abs(expected)
    assert state.step == k


def test_default_alpha():
    assert EMAState(Scalar(0.0)).alpha == 0.999


@settings(max_examples=30, deadline=None)
@given(alpha=st.floats(0.0, 0.9999), seed=st.integers(0, 10**6), steps=st.integers(1, 30))
def test_shadow_stays_in_convex_envelope(alpha, seed, steps):
    r = np.random.default_rng(seed)
    model = nn.Linear(3, 2).double()
    state = EMAState(model, alpha)
    seen = [torch.cat([p.detach().flatten() for p in state.shadow.parameters()])]
    for _ in range(steps):
        with torch.no_grad():
            for p in model.parameters():
                p.copy_(torch.from_numpy(r.standard_normal(p.shape)))
        seen.append(torch.cat([p.detach().flatten() for p in model.parameters()]))
        ema_update(state)
        s = torch.cat([p.detach().flatten() for p in state.shadow.parameters()])
        stack = torch.stack(seen)
        assert torch.all(s >= stack.min(0).values - 1e-12)
        assert torch.all(s <= stack.max(0).values + 1e-12)


def test_contraction_by_alpha_per_step():
    alpha = 0.9
    model = nn.Linear(4, 4).double()
    state = EMAState(model, alpha)
    with torch.no_grad():
        for p in model.parameters():
            p.add_(torch.randn_like(p))

    def dist():
        return torch.sqrt(sum(((a - b) ** 2).sum() for a, b in
                              zip(state.shadow.parameters(), model.parameters()))).item()

    d = dist()
    for _ in range(20):
        ema_update(state)
        d_new = dist()
        assert abs(d_new - alpha * d) <= 1e-12 * d
        d = d_new


def test_batchnorm_buffers_are_averaged():
    bn = nn.BatchNorm1d(3).double()
    state = EMAState(bn, alpha=0.5)
    bn.train()
    bn(torch.randn(8, 3, dtype=torch.float64) + 4.0)
    ema_update(state)
    expected = 0.5 * torch.zeros(3, dtype=torch.float64) + 0.5 * bn.running_mean
    assert torch.allclose(state.shadow.running_mean, expected, rtol=0, atol=1e-15)
    assert state.shadow.num_batches_tracked.item() == 1


def test_snapshot_semantics():
    model = nn.Linear(3, 3)
    state = EMAState(model, 0.9)
    s0 = ema_encoder_snapshot(state)
    for a, b in zip(s0.parameters(), model.parameters()):
        assert torch.equal(a, b)
    s1 = ema_encoder_snapshot(state)
    with torch.no_grad():
        model.weight.add_(1.0)
    ema_update(state)
    for a, b in zip(s0.parameters(), s1.parameters()):
        assert torch.equal(a, b)
    assert not torch.equal(s0.weight, state.shadow.weight)
    assert not s0.training and not s0.weight.requires_grad


def test_corruption_and_alpha_validation():
    state = EMAState(nn.Linear(3, 3), 0.9)
    state.shadow = nn.Linear(3, 4)
    with pytest.raises(EMACorruptionError):
        ema_update(state)
    with pytest.raises(ValueError):
        EMAState(nn.Linear(2, 2), 1.0)
