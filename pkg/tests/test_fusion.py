import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from fdcheck import fd_relative_errors
from ufema.checkpoint import array_hash, module_arrays
from ufema.errors import InvalidArgumentError
from ufema.features import MultiChannelFeature
from ufema.fusion import FusionUNet, UNetConfig, fuse, init_fusion

TOY = UNetConfig(in_channels=4, encoder_channels=(4, 8), decoder_out_channels=4)


def _phash(net):
    return array_hash(module_arrays(net))


def test_default_shape_contract():
    net = init_fusion(UNetConfig(), seed=0)
    z = MultiChannelFeature(np.random.default_rng(0).standard_normal((3, 198, 80)))
    out = fuse(net, z)
    assert out.values.shape == (198, 80)
    np.testing.assert_array_equal(out.values, fuse(net, z).values)


@settings(max_examples=25, deadline=None)
@given(t=st.integers(16, 512), f=st.sampled_from([40, 80]), c=st.integers(1, 4))
def test_shape_restored_for_any_size(t, f, c):
    net = init_fusion(UNetConfig(in_channels=c, encoder_channels=(4, 8, 8, 8), decoder_out_channels=4), 0)
    x = torch.randn(2, c, t, f)
    net.train()
    assert net(x).shape == (2, t, f)
    net.eval()
    y = net(x[:1])
    assert y.shape == (1, t, f) and torch.isfinite(y).all()


def test_seeded_init_hashes():
    assert _phash(init_fusion(TOY, 3)) == _phash(init_fusion(TOY, 3))
    assert _phash(init_fusion(TOY, 3)) != _phash(init_fusion(TOY, 4))


def test_init_is_close_to_channel_mean():
    net = init_fusion(UNetConfig(), seed=0).eval()
    x = torch.randn(4, 3, 198, 80)
    with torch.no_grad():
        y = net(x)
    rms = torch.sqrt(torch.mean((y - x.mean(dim=1)) ** 2)).item()
    assert rms <= 0.5


def test_finite_difference_gradients():
    torch.manual_seed(0)
    net = init_fusion(TOY, seed=1).double().train()
    x = torch.randn(2, 4, 16, 8, dtype=torch.float64)
    r = torch.randn(2, 16, 8, dtype=torch.float64)
    errors = fd_relative_errors(net, lambda: (net(x) * r).sum())
    worst = max(errors, key=errors.get)
    assert errors[worst] < 1e-3, (worst, errors[worst])


def test_every_parameter_receives_gradient():
    net = init_fusion(TOY, seed=2).train()
    (net(torch.randn(3, 4, 20, 8)) ** 2).mean().backward()
    for name, p in net.named_parameters():
        assert p.grad is not None and p.grad.abs().max() > 1e-6, name


def test_without_skips_same_shape_and_trains():
    cfg = UNetConfig(in_channels=3, encoder_channels=(4, 8), decoder_out_channels=4,
                     skip_connections=False)
    net = init_fusion(cfg, seed=0).train()
    x, target = torch.randn(4, 3, 24, 16), torch.randn(4, 24, 16)
    opt = torch.optim.Adam(net.parameters(), lr=1e-2)
    losses = []
    for _ in range(30):
        loss = ((net(x) - target) ** 2).mean()
        opt.zero_grad()
        loss.backward()
        opt.step()
        losses.append(loss.item())
    assert net(x).shape == (4, 24, 16)
    assert losses[-1] < losses[0]


def test_input_validation():
    net = FusionUNet(TOY).train()
    with pytest.raises(InvalidArgumentError, match="at least 2"):
        net(torch.randn(1, 4, 16, 8))
    with pytest.raises(InvalidArgumentError):
        net(torch.randn(2, 3, 16, 8))
    with pytest.raises(InvalidArgumentError):
        fuse(net, MultiChannelFeature(np.zeros((3, 16, 8))))
    with pytest.raises(InvalidArgumentError):
        UNetConfig(encoder_channels=())
