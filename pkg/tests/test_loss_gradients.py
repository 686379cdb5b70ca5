"""Analytic gradients vs central finite differences for every loss term.

The finite-difference oracle evaluates each loss as a plain function of a
flattened double-precision input; no autograd machinery is shared with the
path under test.
"""

import numpy as np
import pytest
import torch

from evadapt.losses import (
    contrastive_alignment_loss,
    cross_entropy_cls,
    cycle_feature_loss,
    decoder_output_loss,
    orthogonal_regularizer,
    relativistic_avg_disc_loss,
    relativistic_avg_gen_loss,
    uncorrelated_conditioning_loss,
)

TRIALS = 20
REL_TOL = 1e-4
H = 1e-6


def central_difference(fn, x: np.ndarray) -> np.ndarray:
    """Gradient of scalar fn at x, one central difference per coordinate."""
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + H
        hi = fn(x)
        flat[i] = orig - H
        lo = fn(x)
        flat[i] = orig
        grad.reshape(-1)[i] = (hi - lo) / (2 * H)
    return grad


def check_gradient(make_loss, x0: np.ndarray):
    """Compare autograd against the finite-difference oracle at x0."""

    def value(x):
        return make_loss(torch.tensor(x, dtype=torch.float64)).item()

    numeric = central_difference(value, x0.copy())
    x = torch.tensor(x0, dtype=torch.float64, requires_grad=True)
    make_loss(x).backward()
    analytic = x.grad.numpy()
    denom = max(np.linalg.norm(numeric), 1e-8)
    rel = np.linalg.norm(analytic - numeric) / denom
    assert rel < REL_TOL, f"relative gradient error {rel:.2e}"


@pytest.mark.parametrize("trial", range(TRIALS))
def test_cross_entropy_grad(trial):
    rng = np.random.default_rng(100 + trial)
    logits = rng.normal(size=(4, 5))
    labels = torch.tensor(rng.integers(0, 5, size=4))
    check_gradient(lambda x: cross_entropy_cls(x, labels), logits)


@pytest.mark.parametrize("trial", range(TRIALS))
def test_cycle_loss_grad_both_sides(trial):
    rng = np.random.default_rng(200 + trial)
    a = rng.normal(size=(2, 3, 2, 2))
    b = rng.normal(size=(2, 3, 2, 2))
    # keep |a - b| away from the kink of |.|
    b = b + np.sign(a - b) * 0.05
    check_gradient(lambda x: cycle_feature_loss(x, torch.tensor(b)), a)
    check_gradient(lambda x: cycle_feature_loss(torch.tensor(a), x), b)


@pytest.mark.parametrize("trial", range(TRIALS))
def test_relativistic_disc_grad(trial):
    rng = np.random.default_rng(300 + trial)
    real = rng.normal(size=6)
    fake = rng.normal(size=5)
    check_gradient(lambda x: relativistic_avg_disc_loss(x, torch.tensor(fake)), real)
    check_gradient(lambda x: relativistic_avg_disc_loss(torch.tensor(real), x), fake)


@pytest.mark.parametrize("trial", range(TRIALS))
def test_relativistic_gen_grad(trial):
    rng = np.random.default_rng(400 + trial)
    real = rng.normal(size=5)
    fake = rng.normal(size=6)
    check_gradient(lambda x: relativistic_avg_gen_loss(x, torch.tensor(fake)), real)
    check_gradient(lambda x: relativistic_avg_gen_loss(torch.tensor(real), x), fake)


@pytest.mark.parametrize("trial", range(TRIALS))
def test_orthogonal_regularizer_grad(trial):
    rng = np.random.default_rng(500 + trial)
    w = rng.normal(size=(4, 3))
    check_gradient(lambda x: orthogonal_regularizer([x], 0.7), w)


@pytest.mark.parametrize("trial", range(TRIALS))
def test_contrastive_grad(trial):
    rng = np.random.default_rng(600 + trial)
    v = rng.normal(size=(3, 5)) + 0.1
    w = rng.normal(size=(3, 5)) + 0.1
    check_gradient(lambda x: contrastive_alignment_loss(x, torch.tensor(w)), v)
    check_gradient(lambda x: contrastive_alignment_loss(torch.tensor(v), x), w)


@pytest.mark.parametrize("trial", range(TRIALS))
def test_uncorrelated_grad(trial):
    rng = np.random.default_rng(700 + trial)
    v = rng.normal(size=(2, 6))
    w = rng.normal(size=(2, 6))
    # keep each row's cosine away from the |.| kink at zero
    for i in range(len(v)):
        if abs(np.dot(v[i], w[i])) < 0.3:
            v[i] += w[i] * 0.5
    check_gradient(lambda x: uncorrelated_conditioning_loss(x, torch.tensor(w)), v)
    check_gradient(lambda x: uncorrelated_conditioning_loss(torch.tensor(v), x), w)


@pytest.mark.parametrize("trial", range(TRIALS))
def test_decoder_loss_grad(trial):
    rng = np.random.default_rng(800 + trial)
    frame = torch.tensor(rng.uniform(size=(1, 3, 4, 4)))
    fake = rng.normal(size=(1, 2, 4, 4)) * 0.4 + 0.5
    dec_a = rng.normal(size=(1, 2, 4, 4))
    dec_b = dec_a + np.sign(rng.normal(size=dec_a.shape)) * 0.2

    check_gradient(
        lambda x: decoder_output_loss(x, frame, torch.tensor(dec_a), torch.tensor(dec_b)), fake
    )
    check_gradient(
        lambda x: decoder_output_loss(torch.tensor(fake), frame, x, torch.tensor(dec_b)), dec_a
    )
    check_gradient(
        lambda x: decoder_output_loss(torch.tensor(fake), frame, torch.tensor(dec_a), x), dec_b
    )
