"""Alternating adversarial training loop.

Each step runs two phases: phase A updates the two discriminators on the
relativistic losses plus the orthogonality regularizer (generator outputs
detached); phase B re-scores the live tensors through the just-updated
discriminators and updates encoders, decoder, refiner, classifier and
projection heads on the combined generator objective.  All randomness
derives from (seed, epoch, step) so fixed-seed replays and checkpoint
resume are exact.
"""

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from evadapt.augment import apply_augment
from evadapt.config import TrainConfig, config_from_dict, config_to_dict, save_config
from evadapt.data.loaders import LoadedDataset, load_dataset
from evadapt.errors import ConfigError, ContractError, NonFiniteLossError
from evadapt.losses import (
    LossInputs,
    LossReport,
    contrastive_alignment_loss,
    cross_entropy_cls,
    cycle_feature_loss,
    decoder_output_loss,
    orthogonal_regularizer,
    relativistic_avg_disc_loss,
    relativistic_avg_gen_loss,
    total_objective,
    uncorrelated_conditioning_loss,
)
from evadapt.networks import AdaptationModel
from evadapt.seeding import derive_seed, rng_for


@dataclass
class ModelState:
    """Everything a checkpoint restores: nets, optimizers, schedulers, counters."""

    model: AdaptationModel
    gen_opt: torch.optim.Optimizer
    disc_opt: torch.optim.Optimizer
    gen_sched: torch.optim.lr_scheduler.ExponentialLR
    disc_sched: torch.optim.lr_scheduler.ExponentialLR
    step: int = 0
    epoch: int = 0

    def current_lr(self):
        return self.gen_opt.param_groups[0]["lr"]


def build_state(cfg: TrainConfig, num_classes: int) -> ModelState:
    torch.manual_seed(derive_seed(cfg.seed, "init"))
    model = AdaptationModel(
        num_classes=num_classes,
        event_channels=cfg.event_channels,
        resolution=cfg.resolution,
        stem_kernel=cfg.stem_kernel,
        stem_stride=cfg.stem_stride,
        projection=cfg.projection,
        with_attribute=cfg.toggles.attribute_encoder,
    )
    if cfg.init_checkpoint:
        payload = torch.load(cfg.init_checkpoint, map_location="cpu", weights_only=False)
        model.load_state_dict(payload["model"], strict=False)
    opt = cfg.optimizer
    gen_opt = torch.optim.RAdam(
        list(model.generator_parameters()), lr=opt.lr, betas=(opt.beta1, opt.beta2), eps=opt.eps
    )
    disc_opt = torch.optim.RAdam(
        list(model.discriminator_parameters()), lr=opt.lr, betas=(opt.beta1, opt.beta2), eps=opt.eps
    )
    gen_sched = torch.optim.lr_scheduler.ExponentialLR(gen_opt, gamma=opt.lr_decay)
    disc_sched = torch.optim.lr_scheduler.ExponentialLR(disc_opt, gamma=opt.lr_decay)
    return ModelState(model, gen_opt, disc_opt, gen_sched, disc_sched)


# ---------------------------------------------------------------------------
# single step
# ---------------------------------------------------------------------------


def _augment_batch(batch: np.ndarray, cfg, seed_root, step, domain):
    """Two independently augmented copies of every sample in a batch."""
    v1, v2 = [], []
    for i, sample in enumerate(batch):
        seed = derive_seed(seed_root, "two-view", domain, step, i)
        v1.append(apply_augment(sample, cfg, derive_seed(seed, "view1")))
        v2.append(apply_augment(sample, cfg, derive_seed(seed, "view2")))
    return (
        torch.from_numpy(np.stack(v1)),
        torch.from_numpy(np.stack(v2)),
    )


def _check_finite(name, value):
    if not torch.isfinite(value).all():
        raise NonFiniteLossError(name, float(value))
    return value


@dataclass
class StepContext:
    """Shared forward state between the two phases of one step."""

    frame_batch: np.ndarray
    event_batch: np.ndarray
    xf: torch.Tensor
    labels: torch.Tensor
    xe: torch.Tensor
    z_f: Optional[torch.Tensor] = None
    z_ec: Optional[torch.Tensor] = None
    z_ea: Optional[torch.Tensor] = None
    pair: Optional[torch.Tensor] = None
    fake_raw: Optional[torch.Tensor] = None
    fake: Optional[torch.Tensor] = None


def _plan(cfg: TrainConfig):
    w, toggles = cfg.weights, cfg.toggles
    use_attr = toggles.attribute_encoder
    adv_cont = w.w_gan_cont > 0
    adv_event = w.w_gan_event > 0
    need_fake = (
        w.w_cls_fake > 0 or w.w_decoder > 0 or w.w_cyc_cont > 0 or adv_event
        or (use_attr and w.w_cyc_att > 0)
    )
    contrastive_on = toggles.contrastive and (w.lambda1 > 0 or w.lambda2 > 0 or w.lambda3 > 0)
    uncorrelated_on = use_attr and toggles.uncorrelated and w.lambda4 > 0
    return use_attr, adv_cont, adv_event, need_fake, contrastive_on, uncorrelated_on


def forward_step_context(frame_batch, frame_labels, event_batch, model, cfg) -> StepContext:
    """Run the generator-side forward pass shared by both phases."""
    xf = torch.as_tensor(frame_batch, dtype=torch.float32)
    labels = torch.as_tensor(frame_labels, dtype=torch.long)
    xe = torch.as_tensor(event_batch, dtype=torch.float32)
    if xf.shape[0] == 0 or xe.shape[0] == 0:
        raise ConfigError("train_step needs non-empty frame and event batches")
    ctx = StepContext(np.asarray(frame_batch), np.asarray(event_batch), xf, labels, xe)

    w = cfg.weights
    use_attr, adv_cont, adv_event, need_fake, contrastive_on, uncorrelated_on = _plan(cfg)
    need_zf = w.w_cls_frame > 0 or need_fake or adv_cont
    need_zec = adv_cont or uncorrelated_on
    need_zea = use_attr and (need_fake or uncorrelated_on)

    if need_zf:
        ctx.z_f = model.frame_encoder(xf)
    if need_zec:
        ctx.z_ec = model.event_content_encoder(xe)
    if need_zea:
        ctx.z_ea = model.event_attribute_encoder(xe)
    if need_fake:
        # unpaired batches: frame i borrows the attribute of event i mod N_e
        ctx.pair = torch.arange(xf.shape[0]) % xe.shape[0]
        if use_attr:
            ctx.fake_raw = model.decoder(ctx.z_f, ctx.z_ea[ctx.pair])
        else:
            ctx.fake_raw = model.decoder(ctx.z_f)
        ctx.fake = model.refiner(ctx.fake_raw, xf)
    return ctx


def discriminator_phase(ctx: StepContext, state: ModelState, cfg: TrainConfig, inputs: LossInputs):
    """Phase A: update both discriminators on detached generator outputs."""
    model = state.model
    w = cfg.weights
    _, adv_cont, adv_event, _, _, _ = _plan(cfg)
    if not (adv_cont or adv_event):
        return
    state.disc_opt.zero_grad(set_to_none=True)
    disc_total = torch.zeros(())
    if adv_cont:
        real_scores = model.content_discriminator(ctx.z_f.detach())
        fake_scores = model.content_discriminator(ctx.z_ec.detach())
        inputs.gan_cont_disc = _check_finite(
            "gan_cont_disc", relativistic_avg_disc_loss(real_scores, fake_scores)
        )
        disc_total = disc_total + w.w_gan_cont * inputs.gan_cont_disc
    if adv_event:
        real_scores = model.event_discriminator(ctx.xe)
        fake_scores = model.event_discriminator(ctx.fake.detach())
        inputs.gan_event_disc = _check_finite(
            "gan_event_disc", relativistic_avg_disc_loss(real_scores, fake_scores)
        )
        disc_total = disc_total + w.w_gan_event * inputs.gan_event_disc
    if w.beta_orth > 0:
        mats = (
            model.content_discriminator.orthogonal_weight_matrices()
            + model.event_discriminator.orthogonal_weight_matrices()
        )
        inputs.orth = _check_finite("orth", orthogonal_regularizer(mats, w.beta_orth))
        disc_total = disc_total + inputs.orth
    disc_total.backward()
    if cfg.grad_clip > 0:
        torch.nn.utils.clip_grad_norm_(model.discriminator_parameters(), cfg.grad_clip)
    state.disc_opt.step()


def generator_phase(ctx: StepContext, state: ModelState, cfg: TrainConfig, inputs: LossInputs):
    """Phase B: every encoder/decoder/classifier loss, scored through the
    just-updated discriminators; returns the step's LossReport."""
    model = state.model
    w, toggles = cfg.weights, cfg.toggles
    use_attr, adv_cont, adv_event, need_fake, contrastive_on, uncorrelated_on = _plan(cfg)

    state.gen_opt.zero_grad(set_to_none=True)

    if w.w_cls_frame > 0:
        inputs.cls_frame = cross_entropy_cls(model.classifier(ctx.z_f), ctx.labels)

    z_fake_c = None
    if need_fake and (w.w_cls_fake > 0 or w.w_cyc_cont > 0):
        z_fake_c = model.event_content_encoder(ctx.fake)
        if w.w_cls_fake > 0:
            inputs.cls_fake = cross_entropy_cls(model.classifier(z_fake_c), ctx.labels)
        if w.w_cyc_cont > 0:
            inputs.cyc_cont = cycle_feature_loss(ctx.z_f, z_fake_c)

    z_fake_a = None
    if use_attr and need_fake and (w.w_cyc_att > 0 or w.w_decoder > 0):
        z_fake_a = model.event_attribute_encoder(ctx.fake)
        if w.w_cyc_att > 0:
            inputs.cyc_att = cycle_feature_loss(ctx.z_ea[ctx.pair], z_fake_a)

    if need_fake and w.w_decoder > 0:
        # without an attribute branch the re-decoded output IS fake_raw
        cyc_fake_decoded = model.decoder(ctx.z_f, z_fake_a) if use_attr else ctx.fake_raw
        inputs.decoder = decoder_output_loss(
            ctx.fake, ctx.xf, cyc_fake_decoded, ctx.fake_raw, cfg.decoder_edge_threshold
        )

    if adv_cont:
        inputs.gan_cont_gen = relativistic_avg_gen_loss(
            model.content_discriminator(ctx.z_f), model.content_discriminator(ctx.z_ec)
        )
    if adv_event:
        inputs.gan_event_gen = relativistic_avg_gen_loss(
            model.event_discriminator(ctx.xe), model.event_discriminator(ctx.fake)
        )

    if contrastive_on:
        if w.lambda3 > 0:
            vf1, vf2 = _augment_batch(ctx.frame_batch, cfg.frame_aug, cfg.seed, state.step, "frame")
            p1 = model.projection.pool(model.frame_encoder(vf1), "content")
            with torch.set_grad_enabled(model.ema_encoders is None):
                enc2 = model.view_encoder("frame_encoder")
                p2 = model.view_projection().pool(enc2(vf2), "content")
            inputs.contrastive_frame_content = contrastive_alignment_loss(p1, p2)
        if w.lambda1 > 0 or w.lambda2 > 0:
            ve1, ve2 = _augment_batch(ctx.event_batch, cfg.event_aug, cfg.seed, state.step, "event")
            if w.lambda2 > 0:
                p1 = model.projection.pool(model.event_content_encoder(ve1), "content")
                with torch.set_grad_enabled(model.ema_encoders is None):
                    enc2 = model.view_encoder("event_content_encoder")
                    p2 = model.view_projection().pool(enc2(ve2), "content")
                inputs.contrastive_event_content = contrastive_alignment_loss(p1, p2)
            if use_attr and w.lambda1 > 0:
                p1 = model.projection.pool(model.event_attribute_encoder(ve1), "attribute")
                with torch.set_grad_enabled(model.ema_encoders is None):
                    enc2 = model.view_encoder("event_attribute_encoder")
                    p2 = model.view_projection().pool(enc2(ve2), "attribute")
                inputs.contrastive_att = contrastive_alignment_loss(p1, p2)

    if uncorrelated_on:
        v_att = model.projection.pool(ctx.z_ea, "attribute")
        v_cont = model.projection.pool(ctx.z_ec, "content")
        inputs.uncorrelated = uncorrelated_conditioning_loss(v_att, v_cont)

    gen_total, _, report = total_objective(inputs, w, toggles)
    for name, value in report.terms.items():
        if not math.isfinite(value):
            raise NonFiniteLossError(name, value)

    if isinstance(gen_total, torch.Tensor) and gen_total.requires_grad:
        gen_total.backward()
        if cfg.grad_clip > 0:
            torch.nn.utils.clip_grad_norm_(model.generator_parameters(), cfg.grad_clip)
        state.gen_opt.step()
        model.update_shadows()
    return report


def train_step(frame_batch, frame_labels, event_batch, state: ModelState, cfg: TrainConfig):
    """One discriminator phase followed by one generator phase."""
    state.model.train()
    ctx = forward_step_context(frame_batch, frame_labels, event_batch, state.model, cfg)
    inputs = LossInputs()
    discriminator_phase(ctx, state, cfg, inputs)
    report = generator_phase(ctx, state, cfg, inputs)
    state.step += 1
    report.step = state.step
    report.epoch = state.epoch
    return report


# ---------------------------------------------------------------------------
# batching
# ---------------------------------------------------------------------------


def epoch_batches(dataset: LoadedDataset, cfg: TrainConfig, epoch: int):
    """Frame batches drive the step count; event order cycles independently."""
    n_f = len(dataset.frames_train)
    n_e = len(dataset.events_train)
    frame_order = rng_for(cfg.seed, "order", "frames", epoch).permutation(n_f)
    event_order = rng_for(cfg.seed, "order", "events", epoch).permutation(n_e)
    steps = math.ceil(n_f / cfg.frame_batch)
    for s in range(steps):
        fi = frame_order[s * cfg.frame_batch : (s + 1) * cfg.frame_batch]
        ei = event_order[(s * cfg.event_batch + np.arange(cfg.event_batch)) % n_e]
        yield (
            dataset.frames_train.data[fi],
            dataset.frames_train.labels[fi],
            dataset.events_train.data[ei],
        )


# ---------------------------------------------------------------------------
# checkpointing
# ---------------------------------------------------------------------------


def save_checkpoint(state: ModelState, cfg: TrainConfig, num_classes, class_names, path):
    path = Path(path)
    manifest = state.model.manifest(state.step, state.epoch)
    payload = {
        "manifest": manifest,
        "model": state.model.state_dict(),
        "gen_opt": state.gen_opt.state_dict(),
        "disc_opt": state.disc_opt.state_dict(),
        "gen_sched": state.gen_sched.state_dict(),
        "disc_sched": state.disc_sched.state_dict(),
        "step": state.step,
        "epoch": state.epoch,
        "torch_rng": torch.get_rng_state(),
        "config": config_to_dict(cfg),
        "num_classes": num_classes,
        "class_names": list(class_names),
    }
    torch.save(payload, path)
    path.with_suffix(path.suffix + ".manifest.json").write_text(json.dumps(manifest, indent=1))
    return path


def load_checkpoint(path, override_config: Optional[TrainConfig] = None):
    """Rebuild a ModelState, validating the manifest before loading weights."""
    payload = torch.load(path, map_location="cpu", weights_only=False)
    cfg = override_config or config_from_dict(payload["config"])
    state = build_state(cfg, payload["num_classes"])
    expected = state.model.manifest()["groups"]
    stored = payload["manifest"]["groups"]
    if set(expected) != set(stored):
        raise ContractError(
            f"checkpoint groups {sorted(stored)} do not match model groups {sorted(expected)}"
        )
    for group, params in expected.items():
        if params != stored[group]:
            raise ContractError(f"parameter shapes of group '{group}' do not match checkpoint")
    state.model.load_state_dict(payload["model"])
    state.gen_opt.load_state_dict(payload["gen_opt"])
    state.disc_opt.load_state_dict(payload["disc_opt"])
    state.gen_sched.load_state_dict(payload["gen_sched"])
    state.disc_sched.load_state_dict(payload["disc_sched"])
    state.step = payload["step"]
    state.epoch = payload["epoch"]
    torch.set_rng_state(payload["torch_rng"])
    return state, cfg, payload["class_names"]


# ---------------------------------------------------------------------------
# full run
# ---------------------------------------------------------------------------


def train(cfg: TrainConfig, resume_from=None, dataset: Optional[LoadedDataset] = None):
    """Run the configured number of epochs; returns the final checkpoint path.

    Learning rates decay by ``optimizer.lr_decay`` after every epoch; a
    checkpoint and a per-epoch summary are written at each epoch boundary, so
    an interrupted run restarts from the last completed epoch via
    ``resume_from``.
    """
    from evadapt.evaluate import evaluate_accuracy  # local import, avoids a cycle

    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_config(cfg, out_dir / "config.json")

    if dataset is None:
        dataset = load_dataset(cfg.data, cfg.event_bins, cfg.event_normalization)
    if len(dataset.frames_train) == 0 or len(dataset.events_train) == 0:
        raise ConfigError("training requires non-empty frame and event sets")

    history = {"epoch": [], "lr": [], "val_acc": [], "mean_gen_total": []}
    if resume_from:
        state, cfg_ckpt, _ = load_checkpoint(resume_from, override_config=cfg)
        state_hist = out_dir / "history.json"
        if state_hist.exists():
            history = json.loads(state_hist.read_text())
        state_start = state.epoch
    else:
        state = build_state(cfg, dataset.num_classes)
        state_start = 0

    metrics_path = out_dir / "metrics.log"
    checkpoint_path = None
    with metrics_path.open("a") as metrics:
        for epoch in range(state_start, cfg.epochs):
            state.epoch = epoch
            gen_totals = []
            for frames, labels, events in epoch_batches(dataset, cfg, epoch):
                report = train_step(frames, labels, events, state, cfg)
                metrics.write(report.to_line() + "\n")
                gen_totals.append(report.generator_total)
            metrics.flush()

            with warnings.catch_warnings():
                # configs that disable a phase never step its optimizer;
                # the lr bookkeeping must still advance for resume parity
                warnings.filterwarnings("ignore", message=".*lr_scheduler.step().*")
                state.gen_sched.step()
                state.disc_sched.step()
            state.epoch = epoch + 1

            val_acc = None
            if cfg.eval_every and (epoch + 1) % cfg.eval_every == 0 and len(dataset.events_val):
                val_acc, _ = evaluate_accuracy(state.model, dataset.events_val)
            history["epoch"].append(epoch)
            history["lr"].append(state.current_lr())
            history["val_acc"].append(val_acc)
            history["mean_gen_total"].append(float(np.mean(gen_totals)) if gen_totals else None)
            (out_dir / "history.json").write_text(json.dumps(history, indent=1))

            if cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0:
                checkpoint_path = save_checkpoint(
                    state,
                    cfg,
                    dataset.num_classes,
                    dataset.class_names,
                    out_dir / f"checkpoint_epoch{epoch + 1:04d}.pt",
                )

    if checkpoint_path is None:
        checkpoint_path = save_checkpoint(
            state, cfg, dataset.num_classes, dataset.class_names, out_dir / "checkpoint_final.pt"
        )
    return checkpoint_path
