"""Differentiable loss terms and the combined two-sided training objective.

Adversarial terms use the relativistic average formulation: each score is
compared against the mean score of the opposing batch, with
g(x) = log(sigmoid(x)) on correctly-ordered differences and
h(x) = log(1 - sigmoid(x)) on the swapped ones.  Both are exposed as
minimization objectives (the reward form negated) so a single optimizer-step
convention serves every term.
"""

import math
from dataclasses import dataclass, field, fields
from typing import Dict, Optional

import torch
import torch.nn.functional as F

from evadapt.errors import ConfigError, ContractError, ValidationError

_NORM_FLOOR = 1e-8


def cross_entropy_cls(logits, labels):
    """Mean negative log-softmax of the true class."""
    if logits.ndim != 2:
        raise ContractError(f"logits must be (N, K), got {tuple(logits.shape)}")
    labels = torch.as_tensor(labels, dtype=torch.long, device=logits.device)
    k = logits.shape[1]
    if labels.numel() and (labels.min() < 0 or labels.max() >= k):
        raise ValidationError(f"labels must lie in [0, {k}), got range "
                              f"[{int(labels.min())}, {int(labels.max())}]")
    return F.cross_entropy(logits, labels)


def cycle_feature_loss(a, b):
    """Mean absolute elementwise difference between two feature maps."""
    if a.shape != b.shape:
        raise ContractError(f"cycle loss needs equal shapes, got {tuple(a.shape)} vs {tuple(b.shape)}")
    return (a - b).abs().mean()


def _scores(x, name):
    x = x.reshape(-1) if isinstance(x, torch.Tensor) else torch.as_tensor(x, dtype=torch.float64)
    if x.numel() == 0:
        raise ValidationError(f"{name} score batch is empty")
    return x.reshape(-1)


def _g(x):
    return F.logsigmoid(x)


def _h(x):
    # log(1 - sigmoid(x)) == logsigmoid(-x), numerically stable
    return F.logsigmoid(-x)


def relativistic_avg_disc_loss(real_scores, fake_scores):
    """Discriminator side: reward real above the fake mean and vice versa."""
    real = _scores(real_scores, "real")
    fake = _scores(fake_scores, "fake")
    return -(_g(real - fake.mean()).mean() + _h(fake - real.mean()).mean())


def relativistic_avg_gen_loss(real_scores, fake_scores):
    """Generator side: the discriminator expression with g and h swapped."""
    real = _scores(real_scores, "real")
    fake = _scores(fake_scores, "fake")
    return -(_h(real - fake.mean()).mean() + _g(fake - real.mean()).mean())


def orthogonal_regularizer(weight_matrices, beta):
    """Sum of squared off-diagonal Gram entries over registered weights.

    Each weight is flattened to (out, in); the penalty is
    beta * || W^T W  (elementwise) (1 - I) ||_F^2, zero iff all columns are
    mutually orthogonal.
    """
    if isinstance(weight_matrices, torch.Tensor):
        weight_matrices = [weight_matrices]
    total = None
    for w in weight_matrices:
        w2 = w.reshape(w.shape[0], -1)
        gram = w2.t() @ w2
        off = gram - torch.diag_embed(torch.diagonal(gram))
        term = off.square().sum()
        total = term if total is None else total + term
    if total is None:
        return torch.zeros(())
    return beta * total


def _cosine_rows(v, w, op_name):
    if v.shape != w.shape:
        raise ContractError(f"{op_name} needs equal shapes, got {tuple(v.shape)} vs {tuple(w.shape)}")
    single = v.ndim == 1
    if single:
        v, w = v.unsqueeze(0), w.unsqueeze(0)
    if v.ndim != 2:
        raise ContractError(f"{op_name} expects vectors or (N, D) batches, got {tuple(v.shape)}")
    nv = v.norm(dim=1)
    nw = w.norm(dim=1)
    if bool((nv == 0).any()) or bool((nw == 0).any()):
        raise ValidationError(f"{op_name} received a zero-norm vector")
    cos = (v * w).sum(dim=1) / (nv.clamp_min(_NORM_FLOOR) * nw.clamp_min(_NORM_FLOOR))
    return cos.clamp(-1.0, 1.0)


def contrastive_alignment_loss(v, v_prime):
    """Negative cosine similarity between two views of the same sample.

    Minimizing drives the views parallel; ranges over [-1, 1].
    """
    return -_cosine_rows(v, v_prime, "contrastive_alignment_loss").mean()


def uncorrelated_conditioning_loss(v_attribute, v_content):
    """Absolute cosine between attribute and content vectors of one event.

    Zero means the two descriptions carry no linear correlation.
    """
    return _cosine_rows(v_attribute, v_content, "uncorrelated_conditioning_loss").abs().mean()


def pseudo_event_target(frame, out_channels, threshold=0.05):
    """Edge-strength proxy for what an event camera would see of a still frame.

    Gradient magnitude of the grayscale image, thresholded, scaled to unit
    max per sample, replicated across the event channels.
    """
    single = frame.ndim == 3
    if single:
        frame = frame.unsqueeze(0)
    with torch.no_grad():
        gray = frame.mean(dim=1)
        gy, gx = torch.gradient(gray, dim=(1, 2))
        mag = torch.sqrt(gx.square() + gy.square())
        mag = mag * (mag >= threshold)
        peak = mag.flatten(1).max(dim=1).values.clamp_min(_NORM_FLOOR)
        mag = mag / peak[:, None, None]
        target = mag.unsqueeze(1).expand(-1, out_channels, -1, -1).contiguous()
    return target.squeeze(0) if single else target


def decoder_output_loss(fake_refined, frame, cyc_fake_decoded, cyc_real_decoded, threshold=0.05):
    """Two mean-l1 terms: refined fake vs. the frame's pseudo-event target,
    and decoded(fake attribute) vs. decoded(real attribute)."""
    if cyc_fake_decoded.shape != cyc_real_decoded.shape:
        raise ContractError(
            f"decoded outputs differ in shape: {tuple(cyc_fake_decoded.shape)} vs "
            f"{tuple(cyc_real_decoded.shape)}"
        )
    target = pseudo_event_target(frame, fake_refined.shape[-3], threshold)
    if target.shape != fake_refined.shape:
        raise ContractError(
            f"refined fake shape {tuple(fake_refined.shape)} does not match frame-derived "
            f"target {tuple(target.shape)}"
        )
    term1 = (fake_refined - target).abs().mean()
    term2 = (cyc_fake_decoded - cyc_real_decoded).abs().mean()
    return term1 + term2


# ---------------------------------------------------------------------------
# Combined objective
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LossWeights:
    """Non-negative weights for every term of the combined objective."""

    w_cls_frame: float = 1.0
    w_cls_fake: float = 1.0
    w_decoder: float = 1.0
    w_cyc_cont: float = 1.0
    w_cyc_att: float = 1.0
    w_gan_cont: float = 1.0
    w_gan_event: float = 1.0
    lambda1: float = 1.0  # contrastive, event-attribute views
    lambda2: float = 1.0  # contrastive, event-content views
    lambda3: float = 1.0  # contrastive, frame-content views
    lambda4: float = 1.0  # uncorrelated conditioning
    beta_orth: float = 1e-4

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not math.isfinite(v) or v < 0:
                raise ConfigError(f"loss weight {f.name} must be finite and >= 0, got {v}")

    @classmethod
    def supervised_only(cls):
        """Plain source-domain classification; everything else off."""
        zeros = {f.name: 0.0 for f in fields(cls)}
        zeros["w_cls_frame"] = 1.0
        return cls(**zeros)


@dataclass(frozen=True)
class Toggles:
    """Ablation switches over the objective's optional structure."""

    contrastive: bool = True
    uncorrelated: bool = True
    attribute_encoder: bool = True

    @classmethod
    def baseline(cls):
        return cls(contrastive=False, uncorrelated=False)


@dataclass
class LossInputs:
    """Raw scalar tensors per term; leave a field None when its path is off."""

    cls_frame: Optional[torch.Tensor] = None
    cls_fake: Optional[torch.Tensor] = None
    decoder: Optional[torch.Tensor] = None
    cyc_cont: Optional[torch.Tensor] = None
    cyc_att: Optional[torch.Tensor] = None
    gan_cont_gen: Optional[torch.Tensor] = None
    gan_event_gen: Optional[torch.Tensor] = None
    contrastive_att: Optional[torch.Tensor] = None
    contrastive_event_content: Optional[torch.Tensor] = None
    contrastive_frame_content: Optional[torch.Tensor] = None
    uncorrelated: Optional[torch.Tensor] = None
    gan_cont_disc: Optional[torch.Tensor] = None
    gan_event_disc: Optional[torch.Tensor] = None
    orth: Optional[torch.Tensor] = None


@dataclass
class LossReport:
    """Per-step record: raw value and weight per enabled term, plus totals."""

    terms: Dict[str, float] = field(default_factory=dict)
    weights: Dict[str, float] = field(default_factory=dict)
    generator_total: float = 0.0
    discriminator_total: float = 0.0
    step: int = 0
    epoch: int = 0

    GENERATOR_TERMS = (
        "cls_frame",
        "cls_fake",
        "decoder",
        "cyc_cont",
        "cyc_att",
        "gan_cont_gen",
        "gan_event_gen",
        "contrastive_att",
        "contrastive_event_content",
        "contrastive_frame_content",
        "uncorrelated",
    )
    DISCRIMINATOR_TERMS = ("gan_cont_disc", "gan_event_disc", "orth")

    def weighted_sum(self, names):
        return sum(self.weights[n] * self.terms[n] for n in names if n in self.terms)

    def verify_totals(self, tol=1e-6):
        ok_gen = abs(self.weighted_sum(self.GENERATOR_TERMS) - self.generator_total) <= tol
        ok_disc = abs(self.weighted_sum(self.DISCRIMINATOR_TERMS) - self.discriminator_total) <= tol
        return ok_gen and ok_disc

    def to_line(self):
        parts = [f"step={self.step}", f"epoch={self.epoch}"]
        parts += [f"{k}={v:.6f}" for k, v in self.terms.items()]
        parts.append(f"gen_total={self.generator_total:.6f}")
        parts.append(f"disc_total={self.discriminator_total:.6f}")
        return " ".join(parts)


# maps report term -> (LossInputs field, weight attr, gating toggle attr or None)
_GEN_TERM_SPECS = (
    ("cls_frame", "w_cls_frame", None),
    ("cls_fake", "w_cls_fake", None),
    ("decoder", "w_decoder", None),
    ("cyc_cont", "w_cyc_cont", None),
    ("cyc_att", "w_cyc_att", "attribute_encoder"),
    ("gan_cont_gen", "w_gan_cont", None),
    ("gan_event_gen", "w_gan_event", None),
    ("contrastive_att", "lambda1", "contrastive"),
    ("contrastive_event_content", "lambda2", "contrastive"),
    ("contrastive_frame_content", "lambda3", "contrastive"),
    ("uncorrelated", "lambda4", "uncorrelated"),
)
_DISC_TERM_SPECS = (
    ("gan_cont_disc", "w_gan_cont", None),
    ("gan_event_disc", "w_gan_event", None),
    ("orth", None, None),  # beta already applied inside the regularizer
)


def term_enabled(name, weight_attr, toggle_attr, weights, toggles):
    if toggle_attr is not None and not getattr(toggles, toggle_attr):
        return False
    # both of these read the attribute encoder's features
    if name in ("contrastive_att", "uncorrelated") and not toggles.attribute_encoder:
        return False
    if weight_attr is not None and getattr(weights, weight_attr) == 0.0:
        return False
    if name == "orth":
        # the regularizer rides on the discriminator phase
        adversarial = weights.w_gan_cont > 0 or weights.w_gan_event > 0
        if weights.beta_orth == 0.0 or not adversarial:
            return False
    return True


def total_objective(inputs: LossInputs, weights: LossWeights, toggles: Toggles):
    """Weighted generator-side and discriminator-side totals plus the report."""
    report = LossReport()
    gen_total = None
    disc_total = None

    def accumulate(specs, running):
        nonlocal report
        for name, weight_attr, toggle_attr in specs:
            if not term_enabled(name, weight_attr, toggle_attr, weights, toggles):
                continue
            value = getattr(inputs, name)
            if value is None:
                raise ConfigError(f"loss term '{name}' is enabled but its input is missing")
            w = 1.0 if weight_attr is None else float(getattr(weights, weight_attr))
            report.terms[name] = float(value.detach() if isinstance(value, torch.Tensor) else value)
            report.weights[name] = w
            running = value * w if running is None else running + value * w
        return running

    gen_total = accumulate(_GEN_TERM_SPECS, gen_total)
    disc_total = accumulate(_DISC_TERM_SPECS, disc_total)

    zero = torch.zeros(())
    gen_total = zero if gen_total is None else gen_total
    disc_total = zero if disc_total is None else disc_total
    report.generator_total = float(gen_total.detach())
    report.discriminator_total = float(disc_total.detach())
    return gen_total, disc_total, report
