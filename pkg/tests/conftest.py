import numpy as np
import pytest
import torch

from codnet.backbone import BackboneConfig

SMALL = BackboneConfig(channel_schedule=(8, 16, 24, 32))


@pytest.fixture
def small_backbone():
    return BackboneConfig(channel_schedule=(8, 16, 24, 32))


@pytest.fixture(autouse=True)
def _seed():
    torch.manual_seed(0)
    np.random.seed(0)


def randomize_bn(module, seed=0):
    """Give every BatchNorm non-trivial running stats and affine params (for eval-mode checks)."""
    g = torch.Generator().manual_seed(seed)
    for m in module.modules():
        if isinstance(m, torch.nn.BatchNorm2d):
            n = m.num_features
            m.running_mean.copy_(torch.randn(n, generator=g) * 0.1)
            m.running_var.copy_(torch.rand(n, generator=g) * 0.5 + 0.75)
            m.weight.data.copy_(torch.rand(n, generator=g) * 0.5 + 0.75)
            m.bias.data.copy_(torch.randn(n, generator=g) * 0.1)
    return module


def finite_difference_grad(fn, x, coords, h=1e-6):
    """Central differences of scalar ``fn`` w.r.t. the flat entries ``coords`` of ``x``."""
    out = []
    flat = x.view(-1)
    for c in coords:
        orig = flat[c].item()
        flat[c] = orig + h
        fp = fn(x).item()
        flat[c] = orig - h
        fm = fn(x).item()
        flat[c] = orig
        out.append((fp - fm) / (2 * h))
    return torch.tensor(out, dtype=torch.float64)


def analytic_grad(fn, x, coords):
    x = x.detach().clone().requires_grad_(True)
    fn(x).backward()
    return x.grad.view(-1)[list(coords)].detach()


def grad_rel_error(fn, x, coords=None, h=1e-6):
    """max |analytic - numeric| / max |numeric| over the chosen coordinates."""
    x = x.detach().clone()
    if coords is None:
        coords = range(x.numel())
    coords = list(coords)
    a = analytic_grad(fn, x, coords)
    with torch.no_grad():
        n = finite_difference_grad(fn, x, coords, h)
    scale = n.abs().max().clamp_min(1e-12)
    return float((a - n).abs().max() / scale)


# --- acceptance reporting ----------------------------------------------------

ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
