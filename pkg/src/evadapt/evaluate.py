"""Target-domain evaluation, exports, and the ablation harness.

Deployment-path inference is deliberately thin: an event sample goes through
the event content encoder and the shared classifier, nothing else, with no
test-time augmentation.
"""

import json
from dataclasses import replace
from pathlib import Path
from typing import Optional

import numpy as np
import torch
from PIL import Image

from evadapt.config import TrainConfig
from evadapt.data.loaders import LabeledSet, LoadedDataset, load_dataset
from evadapt.errors import ExportError, ValidationError
from evadapt.losses import Toggles
from evadapt.networks import AdaptationModel
from evadapt.seeding import rng_for

_EVAL_BATCH = 64


@torch.no_grad()
def _event_logits(model: AdaptationModel, data: np.ndarray) -> torch.Tensor:
    model.eval()
    chunks = []
    for start in range(0, len(data), _EVAL_BATCH):
        x = torch.as_tensor(data[start : start + _EVAL_BATCH], dtype=torch.float32)
        chunks.append(model.classifier(model.event_content_encoder(x)))
    return torch.cat(chunks)


def evaluate_accuracy(model: AdaptationModel, events_test: LabeledSet):
    """Fraction of test events whose argmax prediction matches the label,
    plus a per-class breakdown."""
    if len(events_test) == 0:
        raise ValidationError("cannot evaluate on an empty test set")
    predictions = _event_logits(model, events_test.data).argmax(dim=1).numpy()
    labels = events_test.labels
    accuracy = float((predictions == labels).mean())
    per_class = {}
    for cls in np.unique(labels):
        mask = labels == cls
        per_class[int(cls)] = float((predictions[mask] == cls).mean())
    return accuracy, per_class


@torch.no_grad()
def export_embeddings(model: AdaptationModel, frames_test: LabeledSet, events_test: LabeledSet, path):
    """One row per sample: domain tag, label, pooled pre-logit representation."""
    model.eval()
    rows = []
    for domain, dataset, encoder in (
        ("frame", frames_test, model.frame_encoder),
        ("event", events_test, model.event_content_encoder),
    ):
        for start in range(0, len(dataset), _EVAL_BATCH):
            x = torch.as_tensor(dataset.data[start : start + _EVAL_BATCH], dtype=torch.float32)
            feats = model.classifier.features(encoder(x)).numpy()
            labels = dataset.labels[start : start + _EVAL_BATCH]
            for label, vec in zip(labels, feats):
                rows.append((domain, int(label), vec))
    try:
        with Path(path).open("w") as fh:
            for domain, label, vec in rows:
                fh.write("\t".join([domain, str(label)] + [f"{v:.6g}" for v in vec]) + "\n")
    except OSError as exc:
        raise ExportError(f"cannot write embeddings to {path}: {exc}") from exc
    return Path(path)


def _render_event_image(tensor: np.ndarray) -> np.ndarray:
    """Positive channels minus negative, normalized into 8-bit gray."""
    bins = tensor.shape[0] // 2
    signed = tensor[:bins].sum(axis=0) - tensor[bins:].sum(axis=0)
    peak = np.abs(signed).max()
    if peak > 0:
        signed = signed / peak
    return np.round((signed + 1.0) * 127.5).astype(np.uint8)


@torch.no_grad()
def export_fake_events(model: AdaptationModel, frames: LabeledSet, events, out_dir, seed=0):
    """Render each frame next to its synthesized event view.

    Every frame is paired with a randomly drawn (seeded) event whose
    attribute conditions the decoder.
    """
    model.eval()
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ExportError(f"cannot create export directory {out_dir}: {exc}") from exc
    rng = rng_for(seed, "fake-export")
    paths = []
    event_data = events.data
    for i in range(len(frames)):
        xf = torch.as_tensor(frames.data[i : i + 1], dtype=torch.float32)
        content = model.frame_encoder(xf)
        if model.with_attribute:
            j = int(rng.integers(0, len(event_data)))
            xe = torch.as_tensor(event_data[j : j + 1], dtype=torch.float32)
            attribute = model.event_attribute_encoder(xe)
            fake = model.refiner(model.decoder(content, attribute), xf)
        else:
            fake = model.refiner(model.decoder(content), xf)
        fake_img = _render_event_image(fake[0].numpy())
        frame_img = np.round(frames.data[i].transpose(1, 2, 0) * 255).astype(np.uint8)
        fake_rgb = np.repeat(fake_img[:, :, None], 3, axis=2)
        panel = np.concatenate([frame_img, fake_rgb], axis=1)
        path = out_dir / f"fake_{i:04d}.png"
        try:
            Image.fromarray(panel).save(path)
        except OSError as exc:
            raise ExportError(f"cannot write {path}: {exc}") from exc
        paths.append(path)
    return paths


# ---------------------------------------------------------------------------
# ablation harness
# ---------------------------------------------------------------------------

ABLATION_CELLS = {
    "no_attribute": Toggles(contrastive=False, uncorrelated=False, attribute_encoder=False),
    "baseline": Toggles(contrastive=False, uncorrelated=False),
    "contrastive": Toggles(contrastive=True, uncorrelated=False),
    "uncorrelated": Toggles(contrastive=False, uncorrelated=True),
    "both": Toggles(contrastive=True, uncorrelated=True),
}


def run_ablation(
    cfg_base: TrainConfig,
    matrix,
    seeds,
    out_path,
    dataset: Optional[LoadedDataset] = None,
):
    """Train one fresh model per (cell, seed); report best-epoch validation
    accuracy and final-epoch test accuracy per cell.

    ``matrix`` maps cell names to Toggles (or names from ABLATION_CELLS).
    Cell failures are recorded and the remaining cells proceed.
    """
    from evadapt.trainer import load_checkpoint, train

    if isinstance(matrix, (list, tuple)):
        matrix = {name: ABLATION_CELLS[name] for name in matrix}

    if dataset is None and matrix:
        dataset = load_dataset(cfg_base.data, cfg_base.event_bins, cfg_base.event_normalization)

    results = []
    for cell_name, toggles in matrix.items():
        for seed in seeds:
            run_dir = Path(cfg_base.out_dir) / f"ablation_{cell_name}_seed{seed}"
            cfg = replace(cfg_base, toggles=toggles, seed=seed, out_dir=str(run_dir))
            row = {"cell": cell_name, "seed": seed, "val_acc": None, "test_acc": None, "error": ""}
            try:
                ckpt = train(cfg, dataset=dataset)
                state, _, _ = load_checkpoint(ckpt)
                history = json.loads((run_dir / "history.json").read_text())
                vals = [v for v in history["val_acc"] if v is not None]
                row["val_acc"] = max(vals) if vals else None
                if len(dataset.events_test):
                    row["test_acc"], _ = evaluate_accuracy(state.model, dataset.events_test)
            except Exception as exc:  # noqa: BLE001 - cell isolation is the contract
                row["error"] = f"{type(exc).__name__}: {exc}"
            results.append(row)

    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with out_path.open("w") as fh:
        fh.write("cell\tseed\tval_acc\ttest_acc\terror\n")
        for row in results:
            fh.write(
                "\t".join(
                    [
                        row["cell"],
                        str(row["seed"]),
                        "" if row["val_acc"] is None else f"{row['val_acc']:.4f}",
                        "" if row["test_acc"] is None else f"{row['test_acc']:.4f}",
                        row["error"],
                    ]
                )
                + "\n"
            )
    return results
