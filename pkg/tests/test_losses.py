"""Value oracles and algebraic properties of every loss term.

Derived expectations are computed with independent scalar oracles (math /
numpy expressions written against the published formulas) and then frozen as
literals; the torch implementations must match both to 1e-6 in double
precision.
"""

import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from evadapt.errors import ConfigError, ContractError, ValidationError
from evadapt.losses import (
    LossInputs,
    LossWeights,
    Toggles,
    contrastive_alignment_loss,
    cross_entropy_cls,
    cycle_feature_loss,
    decoder_output_loss,
    orthogonal_regularizer,
    pseudo_event_target,
    relativistic_avg_disc_loss,
    relativistic_avg_gen_loss,
    total_objective,
    uncorrelated_conditioning_loss,
)

TOL = 1e-6


def sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x))


class TestCrossEntropy:
    def test_uniform_logits_give_log_k(self):
        for k in (2, 10, 101):
            logits = torch.zeros(4, k, dtype=torch.float64)
            labels = torch.arange(4) % k
            assert abs(cross_entropy_cls(logits, labels).item() - math.log(k)) < TOL
        # frozen value from the K=10 case
        assert abs(math.log(10) - 2.302585092994046) < 1e-12

    def test_confident_logits_saturate_to_zero(self):
        logits = torch.full((3, 5), -50.0, dtype=torch.float64)
        logits[:, 2] = 50.0
        labels = torch.full((3,), 2)
        assert cross_entropy_cls(logits, labels).item() < 1e-12

    def test_two_class_margin(self):
        # oracle: -log softmax([2, 0])[0] = log(1 + e^-2)
        oracle = math.log(1.0 + math.exp(-2.0))
        assert abs(oracle - 0.126928011042972) < 1e-12
        logits = torch.tensor([[2.0, 0.0]], dtype=torch.float64)
        assert abs(cross_entropy_cls(logits, torch.tensor([0])).item() - oracle) < TOL

    def test_label_out_of_range(self):
        with pytest.raises(ValidationError):
            cross_entropy_cls(torch.zeros(2, 3), torch.tensor([0, 3]))

    def test_non_negative(self):
        rng = np.random.default_rng(0)
        for _ in range(25):
            logits = torch.tensor(rng.normal(size=(6, 4)))
            labels = torch.tensor(rng.integers(0, 4, 6))
            assert cross_entropy_cls(logits, labels).item() >= 0.0


class TestCycleFeatureLoss:
    def test_equal_maps_give_zero(self):
        a = torch.randn(2, 3, 4, 4, dtype=torch.float64)
        assert cycle_feature_loss(a, a.clone()).item() == 0.0

    def test_constant_offset(self):
        a = torch.randn(2, 3, 4, 4, dtype=torch.float64)
        assert abs(cycle_feature_loss(a, a + 1.0).item() - 1.0) < TOL

    def test_hand_value(self):
        # oracle: mean(|1-0|, |-1-1|) = (1 + 2) / 2
        a = torch.tensor([1.0, -1.0], dtype=torch.float64)
        b = torch.tensor([0.0, 1.0], dtype=torch.float64)
        assert abs(cycle_feature_loss(a, b).item() - 1.5) < TOL

    def test_shape_mismatch(self):
        with pytest.raises(ContractError):
            cycle_feature_loss(torch.zeros(2, 3), torch.zeros(3, 2))

    def test_zero_iff_equal(self):
        rng = np.random.default_rng(1)
        for _ in range(25):
            a = torch.tensor(rng.normal(size=8))
            b = torch.tensor(rng.normal(size=8))
            loss = cycle_feature_loss(a, b).item()
            assert (loss == 0.0) == bool(torch.equal(a, b))
            assert loss >= 0.0


class TestRelativisticLosses:
    def test_equal_constant_scores(self):
        # all relativistic arguments are 0: loss = -2 ln(1/2) = 2 ln 2
        expected = 2.0 * math.log(2.0)
        assert abs(expected - 1.3862943611198906) < 1e-12
        for c in (0.0, 3.7, -12.0):
            scores = torch.full((5,), c, dtype=torch.float64)
            d = relativistic_avg_disc_loss(scores, scores.clone()).item()
            g = relativistic_avg_gen_loss(scores, scores.clone()).item()
            assert abs(d - expected) < TOL
            assert abs(g - expected) < TOL

    def test_saturation_limit(self):
        real = torch.full((4,), 80.0, dtype=torch.float64)
        fake = torch.full((4,), -80.0, dtype=torch.float64)
        assert relativistic_avg_disc_loss(real, fake).item() < 1e-12

    def test_disc_hand_value(self):
        # oracle: -(ln s(1) + ln(1 - s(-1))) with s the logistic function
        oracle = -(math.log(sigmoid(1.0)) + math.log(1.0 - sigmoid(-1.0)))
        assert abs(oracle - 0.6265233750364456) < 1e-12
        real = torch.tensor([1.0, 1.0], dtype=torch.float64)
        fake = torch.tensor([0.0, 0.0], dtype=torch.float64)
        assert abs(relativistic_avg_disc_loss(real, fake).item() - oracle) < TOL

    def test_gen_hand_value(self):
        oracle = -(math.log(1.0 - sigmoid(1.0)) + math.log(sigmoid(-1.0)))
        assert abs(oracle - 2.6265233750364456) < 1e-12
        real = torch.tensor([1.0, 1.0], dtype=torch.float64)
        fake = torch.tensor([0.0, 0.0], dtype=torch.float64)
        assert abs(relativistic_avg_gen_loss(real, fake).item() - oracle) < TOL

    def test_role_swap_identity_exact(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            real = torch.tensor(rng.normal(size=rng.integers(1, 9)))
            fake = torch.tensor(rng.normal(size=rng.integers(1, 9)))
            gen = relativistic_avg_gen_loss(real, fake)
            disc = relativistic_avg_disc_loss(fake, real)
            assert gen.item() == disc.item()

    @given(
        st.lists(st.floats(-5, 5), min_size=1, max_size=8),
        st.lists(st.floats(-5, 5), min_size=1, max_size=8),
        st.floats(-100, 100),
    )
    @settings(max_examples=150, deadline=None)
    def test_shift_invariance(self, real, fake, shift):
        real = torch.tensor(real, dtype=torch.float64)
        fake = torch.tensor(fake, dtype=torch.float64)
        base_d = relativistic_avg_disc_loss(real, fake).item()
        base_g = relativistic_avg_gen_loss(real, fake).item()
        shifted_d = relativistic_avg_disc_loss(real + shift, fake + shift).item()
        shifted_g = relativistic_avg_gen_loss(real + shift, fake + shift).item()
        assert abs(base_d - shifted_d) < TOL
        assert abs(base_g - shifted_g) < TOL

    def test_empty_batch_rejected(self):
        with pytest.raises(ValidationError):
            relativistic_avg_disc_loss(torch.zeros(0), torch.zeros(3))
        with pytest.raises(ValidationError):
            relativistic_avg_gen_loss(torch.zeros(3), torch.zeros(0))


class TestOrthogonalRegularizer:
    def test_identity_weight_is_zero(self):
        w = torch.eye(4, dtype=torch.float64)
        assert orthogonal_regularizer([w], 1.0).item() == 0.0

    def test_all_ones_hand_value(self):
        # oracle: W^T W = [[2, 2], [2, 2]]; off-diagonal squares sum to 8
        w = torch.ones(2, 2, dtype=torch.float64)
        gram = w.numpy().T @ w.numpy()
        oracle = float((gram**2).sum() - (np.diag(gram) ** 2).sum())
        assert oracle == 8.0
        assert abs(orthogonal_regularizer([w], 1.0).item() - 8.0) < TOL
        for beta in (0.5, 1e-4):
            assert abs(orthogonal_regularizer([w], beta).item() - 8.0 * beta) < TOL

    def test_orthogonal_columns_give_zero(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            q, _ = np.linalg.qr(rng.normal(size=(8, 5)))
            val = orthogonal_regularizer([torch.tensor(q)], 1.0).item()
            assert val < 1e-24

    def test_conv_weight_is_flattened(self):
        w = torch.randn(6, 3, 3, 3, dtype=torch.float64)
        flat = w.reshape(6, -1)
        assert (
            orthogonal_regularizer([w], 1.0).item()
            == orthogonal_regularizer([flat], 1.0).item()
        )

    def test_sums_over_matrices(self):
        a = torch.ones(2, 2, dtype=torch.float64)
        b = torch.ones(2, 2, dtype=torch.float64) * 2
        total = orthogonal_regularizer([a, b], 1.0).item()
        parts = orthogonal_regularizer([a], 1.0).item() + orthogonal_regularizer([b], 1.0).item()
        assert abs(total - parts) < TOL


class TestCosineLosses:
    def test_parallel_views(self):
        v = torch.tensor([0.3, -2.0, 1.0], dtype=torch.float64)
        assert abs(contrastive_alignment_loss(v, v.clone()).item() + 1.0) < TOL

    def test_orthogonal_views(self):
        v = torch.tensor([1.0, 0.0], dtype=torch.float64)
        w = torch.tensor([0.0, 5.0], dtype=torch.float64)
        assert abs(contrastive_alignment_loss(v, w).item()) < TOL
        assert abs(uncorrelated_conditioning_loss(v, w).item()) < TOL

    def test_hand_values(self):
        # oracle: cos([1,0],[1,1]) = 1/sqrt(2)
        oracle = 1.0 / math.sqrt(2.0)
        assert abs(oracle - 0.7071067811865476) < 1e-12
        v = torch.tensor([1.0, 0.0], dtype=torch.float64)
        w = torch.tensor([1.0, 1.0], dtype=torch.float64)
        assert abs(contrastive_alignment_loss(v, w).item() + oracle) < TOL
        assert abs(uncorrelated_conditioning_loss(w, v).item() - oracle) < TOL

    def test_identical_vectors_fully_correlated(self):
        v = torch.tensor([2.0, -1.0, 0.5], dtype=torch.float64)
        assert abs(uncorrelated_conditioning_loss(v, v.clone()).item() - 1.0) < TOL

    @given(
        st.lists(st.floats(-3, 3), min_size=2, max_size=16),
        st.floats(0.01, 100.0),
        st.floats(0.01, 100.0),
    )
    @settings(max_examples=150, deadline=None)
    def test_scale_invariance(self, values, a, b):
        v = torch.tensor(values, dtype=torch.float64)
        w = torch.roll(v, 1) + 0.5
        if v.norm() == 0 or w.norm() == 0:
            return
        base = contrastive_alignment_loss(v, w).item()
        scaled = contrastive_alignment_loss(a * v, b * w).item()
        assert abs(base - scaled) < TOL
        base_u = uncorrelated_conditioning_loss(v, w).item()
        scaled_u = uncorrelated_conditioning_loss(a * v, b * w).item()
        assert abs(base_u - scaled_u) < TOL

    def test_bounds(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            v = torch.tensor(rng.normal(size=6))
            w = torch.tensor(rng.normal(size=6))
            c = contrastive_alignment_loss(v, w).item()
            u = uncorrelated_conditioning_loss(v, w).item()
            assert -1.0 - TOL <= c <= 1.0 + TOL
            assert -TOL <= u <= 1.0 + TOL

    def test_zero_norm_guard(self):
        v = torch.zeros(3)
        w = torch.ones(3)
        with pytest.raises(ValidationError):
            contrastive_alignment_loss(v, w)
        with pytest.raises(ValidationError):
            uncorrelated_conditioning_loss(w, v)

    def test_batched_mean(self):
        v = torch.tensor([[1.0, 0.0], [1.0, 0.0]], dtype=torch.float64)
        w = torch.tensor([[1.0, 0.0], [0.0, 1.0]], dtype=torch.float64)
        # mean of cos values (1 and 0)
        assert abs(contrastive_alignment_loss(v, w).item() + 0.5) < TOL


class TestDecoderOutputLoss:
    def test_zero_when_everything_matches(self):
        frame = torch.zeros(1, 3, 8, 8, dtype=torch.float64)
        fake = torch.zeros(1, 4, 8, 8, dtype=torch.float64)
        dec = torch.rand(1, 4, 8, 8, dtype=torch.float64)
        loss = decoder_output_loss(fake, frame, dec, dec.clone())
        assert loss.item() == 0.0

    def test_constant_offset_in_term2(self):
        frame = torch.zeros(1, 3, 8, 8, dtype=torch.float64)
        fake = torch.zeros(1, 4, 8, 8, dtype=torch.float64)
        dec = torch.rand(1, 4, 8, 8, dtype=torch.float64)
        loss = decoder_output_loss(fake, frame, dec, dec + 1.0)
        assert abs(loss.item() - 1.0) < TOL

    def test_flat_frame_gives_zero_target(self):
        # oracle: a gradient-free image has an all-zero pseudo-event target,
        # so term1 collapses to mean |fake|
        frame = torch.zeros(2, 3, 8, 8, dtype=torch.float64)
        target = pseudo_event_target(frame, 4)
        assert target.abs().sum().item() == 0.0
        fake = torch.randn(2, 4, 8, 8, dtype=torch.float64)
        dec = torch.zeros(2, 4, 8, 8, dtype=torch.float64)
        loss = decoder_output_loss(fake, frame, dec, dec.clone())
        assert abs(loss.item() - fake.abs().mean().item()) < TOL

    def test_target_unit_max_and_channels(self):
        rng = np.random.default_rng(5)
        frame = torch.tensor(rng.uniform(size=(2, 3, 16, 16)))
        target = pseudo_event_target(frame, 6, threshold=0.01)
        assert target.shape == (2, 6, 16, 16)
        assert abs(target.flatten(1).max(dim=1).values[0].item() - 1.0) < TOL
        # all event channels hold the same replicated edge map
        assert torch.equal(target[:, 0], target[:, 5])


class TestTotalObjective:
    def test_single_term_reduction(self):
        weights = LossWeights.supervised_only()
        ce = torch.tensor(0.7)
        gen, disc, report = total_objective(
            LossInputs(cls_frame=ce), weights, Toggles()
        )
        assert abs(gen.item() - 0.7 * weights.w_cls_frame) < TOL
        assert disc.item() == 0.0
        assert set(report.terms) == {"cls_frame"}

    def test_lambda_defaults_are_one(self):
        w = LossWeights()
        assert (w.lambda1, w.lambda2, w.lambda3, w.lambda4) == (1.0, 1.0, 1.0, 1.0)

    def test_summation_oracle(self):
        rng = np.random.default_rng(6)
        inputs = LossInputs(
            **{
                name: torch.tensor(rng.uniform(0.1, 2.0))
                for name in (
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
                    "gan_cont_disc",
                    "gan_event_disc",
                    "orth",
                )
            }
        )
        weights = LossWeights(
            w_cls_frame=0.5, w_cls_fake=2.0, w_decoder=1.5, lambda1=0.7, lambda4=3.0
        )
        gen, disc, report = total_objective(inputs, weights, Toggles())
        assert report.verify_totals(tol=TOL)
        assert abs(report.weighted_sum(report.GENERATOR_TERMS) - gen.item()) < TOL
        assert abs(report.weighted_sum(report.DISCRIMINATOR_TERMS) - disc.item()) < TOL

    def test_missing_enabled_input_is_config_error(self):
        with pytest.raises(ConfigError):
            total_objective(LossInputs(), LossWeights(), Toggles())

    def test_attribute_toggle_removes_terms(self):
        inputs = LossInputs(
            cls_frame=torch.tensor(1.0),
            cls_fake=torch.tensor(1.0),
            decoder=torch.tensor(1.0),
            cyc_cont=torch.tensor(1.0),
            gan_cont_gen=torch.tensor(1.0),
            gan_event_gen=torch.tensor(1.0),
            contrastive_event_content=torch.tensor(1.0),
            contrastive_frame_content=torch.tensor(1.0),
            gan_cont_disc=torch.tensor(1.0),
            gan_event_disc=torch.tensor(1.0),
            orth=torch.tensor(0.1),
        )
        toggles = Toggles(attribute_encoder=False)
        _, _, report = total_objective(inputs, LossWeights(), toggles)
        assert "cyc_att" not in report.terms
        assert "uncorrelated" not in report.terms
        assert "contrastive_att" not in report.terms

    def test_report_line_format(self):
        gen, disc, report = total_objective(
            LossInputs(cls_frame=torch.tensor(0.5)),
            LossWeights.supervised_only(),
            Toggles(),
        )
        report.step = 12
        line = report.to_line()
        assert line.startswith("step=12 ")
        assert "cls_frame=0.500000" in line
        assert "gen_total=" in line and "disc_total=" in line

    def test_negative_weight_rejected(self):
        with pytest.raises(ConfigError):
            LossWeights(w_cls_frame=-0.1)
