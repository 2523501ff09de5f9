"""Shared oracle utilities for the test suite.

The gradient checker compares autograd gradients against central finite
differences in double precision; the metric oracles recompute AUC and EER
with plain Python loops over explicit threshold enumeration.
"""

import math

import torch
from torch.nn.utils import parameters_to_vector, vector_to_parameters


def finite_difference_check(make_loss, modules, n_dirs=60, h=1e-6, seed=0, rel_tol=1e-3):
    """Verify autograd of make_loss() against central differences.

    make_loss must rebuild the loss from the modules' current parameters.
    Checks n_dirs random unit directions; returns the worst relative error.
    """
    params = [p for m in modules for p in m.parameters()]
    for p in params:
        assert p.dtype == torch.float64, "gradient oracle requires float64 modules"
        p.grad = None
    loss = make_loss()
    loss.backward()
    grad = torch.cat([(p.grad if p.grad is not None else torch.zeros_like(p)).reshape(-1)
                      for p in params])
    theta0 = parameters_to_vector(params).detach().clone()

    gen = torch.Generator().manual_seed(seed)
    worst = 0.0
    with torch.no_grad():
        for _ in range(n_dirs):
            v = torch.randn(theta0.numel(), generator=gen, dtype=torch.float64)
            v /= v.norm()
            vector_to_parameters(theta0 + h * v, params)
            f_plus = float(make_loss())
            vector_to_parameters(theta0 - h * v, params)
            f_minus = float(make_loss())
            vector_to_parameters(theta0, params)
            fd = (f_plus - f_minus) / (2 * h)
            ad = float(grad @ v)
            err = abs(fd - ad) / max(abs(fd), abs(ad), 1e-8)
            worst = max(worst, err)
            assert err < rel_tol, f"directional derivative mismatch: fd={fd}, autograd={ad}"
    for p in params:
        p.grad = None
    return worst


def auc_oracle(genuine, impostor):
    """Brute-force threshold enumeration: P(genuine < impostor) + half ties."""
    less = 0
    ties = 0
    for g in genuine:
        for i in impostor:
            if g < i:
                less += 1
            elif g == i:
                ties += 1
    return (less + 0.5 * ties) / (len(genuine) * len(impostor))


def eer_oracle(genuine, impostor):
    """Brute-force EER: scan enumerated thresholds for the FNR/FPR crossing."""
    thresholds = sorted(set(list(genuine) + list(impostor)))
    points = [(1.0, 0.0)]  # below every score: all genuine rejected, none accepted
    for t in thresholds:
        fnr = sum(1 for g in genuine if g > t) / len(genuine)
        fpr = sum(1 for i in impostor if i <= t) / len(impostor)
        points.append((fnr, fpr))
    prev = points[0]
    for fnr, fpr in points[1:]:
        diff = fnr - fpr
        if diff <= 0.0:
            if diff == 0.0:
                return fpr
            d_a = prev[0] - prev[1]
            d_b = diff
            frac = d_a / (d_a - d_b)
            return prev[1] + frac * (fpr - prev[1])
        prev = (fnr, fpr)
    raise AssertionError("no crossing found")


def two_layer_extractor(n_in, d, seed=0):
    """Tiny double-precision feature net used by the gradient oracle."""
    torch.manual_seed(seed)
    net = torch.nn.Sequential(
        torch.nn.Flatten(),
        torch.nn.Linear(n_in, 16),
        torch.nn.LeakyReLU(0.2),
        torch.nn.Linear(16, d),
    ).double()
    return net
