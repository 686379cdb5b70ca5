"""The trainable networks: encoders, classifier, decoder, refiner, discriminators.

Encoders are the first half of a ResNet-18 (stem + residual stages 1-2, max
pooling removed, stem kernel/stride configurable for small inputs); the
classifier is the second half (stages 3-4 + global pool + linear head), so
frame-content and event-content features live in one shared space and feed
one shared classifier.  Decoder and refinement networks synthesize event-shaped
tensors from (content, attribute) pairs; two small strided CNNs discriminate
content origin and event realism.
"""

import copy
import math
from dataclasses import dataclass
from typing import Optional

import torch
import torch.nn.functional as F
from torch import nn

from evadapt.errors import ConfigError, ContractError

CONTENT_CHANNELS = 128
CLASSIFIER_FEATURES = 512


class BasicBlock(nn.Module):
    def __init__(self, in_ch, out_ch, stride=1):
        super().__init__()
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, stride, 1, bias=False)
        self.bn1 = nn.BatchNorm2d(out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, 1, 1, bias=False)
        self.bn2 = nn.BatchNorm2d(out_ch)
        self.relu = nn.ReLU(inplace=True)
        if stride != 1 or in_ch != out_ch:
            self.downsample = nn.Sequential(
                nn.Conv2d(in_ch, out_ch, 1, stride, bias=False), nn.BatchNorm2d(out_ch)
            )
        else:
            self.downsample = None

    def forward(self, x):
        identity = x if self.downsample is None else self.downsample(x)
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return self.relu(out + identity)


def _stage(in_ch, out_ch, stride):
    return nn.Sequential(BasicBlock(in_ch, out_ch, stride), BasicBlock(out_ch, out_ch))


class ContentEncoder(nn.Module):
    """ResNet-18 front half mapping images or event grids to content maps."""

    def __init__(self, in_channels, stem_kernel=3, stem_stride=1):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = CONTENT_CHANNELS
        self.spatial_factor = stem_stride * 2  # stem stride x stage-2 stride
        self.stem = nn.Sequential(
            nn.Conv2d(in_channels, 64, stem_kernel, stem_stride, stem_kernel // 2, bias=False),
            nn.BatchNorm2d(64),
            nn.ReLU(inplace=True),
        )
        self.layer1 = _stage(64, 64, 1)
        self.layer2 = _stage(64, CONTENT_CHANNELS, 2)

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ContractError(
                f"encoder expects (N, {self.in_channels}, H, W), got {tuple(x.shape)}"
            )
        return self.layer2(self.layer1(self.stem(x)))


class StageClassifier(nn.Module):
    """ResNet-18 back half: stages 3-4, global pooling, linear head."""

    def __init__(self, num_classes):
        super().__init__()
        self.num_classes = num_classes
        self.layer3 = _stage(CONTENT_CHANNELS, 256, 2)
        self.layer4 = _stage(256, CLASSIFIER_FEATURES, 2)
        self.fc = nn.Linear(CLASSIFIER_FEATURES, num_classes)

    def features(self, z):
        if z.ndim != 4 or z.shape[1] != CONTENT_CHANNELS:
            raise ContractError(
                f"classifier expects content maps (N, {CONTENT_CHANNELS}, h, w), got {tuple(z.shape)}"
            )
        out = self.layer4(self.layer3(z))
        return F.adaptive_avg_pool2d(out, 1).flatten(1)

    def forward(self, z):
        return self.fc(self.features(z))


class EventDecoder(nn.Module):
    """Upsampling conv stack from (content, attribute) maps to an event grid."""

    N_BLOCKS = 4

    def __init__(self, content_channels, attribute_channels, out_channels, upsample_factor):
        super().__init__()
        self.content_channels = content_channels
        self.attribute_channels = attribute_channels
        self.out_channels = out_channels
        n_up = max(0, int(round(math.log2(upsample_factor))))
        widths = [content_channels + attribute_channels, 128, 64, 32, 32]
        blocks = []
        for i in range(self.N_BLOCKS):
            layers = []
            if i < n_up:
                layers.append(nn.Upsample(scale_factor=2, mode="nearest"))
            layers += [
                nn.Conv2d(widths[i], widths[i + 1], 3, 1, 1, bias=False),
                nn.BatchNorm2d(widths[i + 1]),
                nn.ReLU(inplace=True),
            ]
            blocks.append(nn.Sequential(*layers))
        self.blocks = nn.Sequential(*blocks)
        self.head = nn.Conv2d(widths[-1], out_channels, 1)
        self.extra_upsample = upsample_factor / (2**n_up)

    def forward(self, content, attribute=None):
        if content.shape[1] != self.content_channels:
            raise ContractError(
                f"decoder expects {self.content_channels} content channels, got {content.shape[1]}"
            )
        if self.attribute_channels:
            if attribute is None:
                raise ContractError("decoder built with an attribute branch needs an attribute map")
            if attribute.shape[0] != content.shape[0]:
                raise ContractError(
                    f"content batch {content.shape[0]} != attribute batch {attribute.shape[0]}"
                )
            x = torch.cat([content, attribute], dim=1)
        else:
            x = content
        x = self.blocks(x)
        if self.extra_upsample != 1:
            x = F.interpolate(x, scale_factor=self.extra_upsample, mode="nearest")
        return torch.sigmoid(self.head(x))


class RefinementNet(nn.Module):
    """Three-level encoder-decoder with skips; upgrades a raw fake event."""

    def __init__(self, event_channels, frame_channels=3, base=32):
        super().__init__()
        self.event_channels = event_channels
        in_ch = event_channels + frame_channels

        def block(i, o, stride=1):
            return nn.Sequential(
                nn.Conv2d(i, o, 3, stride, 1, bias=False),
                nn.BatchNorm2d(o),
                nn.ReLU(inplace=True),
            )

        self.enc1 = block(in_ch, base)
        self.enc2 = block(base, base * 2, stride=2)
        self.enc3 = block(base * 2, base * 4, stride=2)
        self.up2 = block(base * 4 + base * 2, base * 2)
        self.up1 = block(base * 2 + base, base)
        self.head = nn.Conv2d(base, event_channels, 1)

    def forward(self, fake, frame):
        if fake.shape[1] != self.event_channels:
            raise ContractError(
                f"refiner expects {self.event_channels} event channels, got {fake.shape[1]}"
            )
        if fake.shape[0] != frame.shape[0]:
            raise ContractError(f"fake batch {fake.shape[0]} != frame batch {frame.shape[0]}")
        if frame.shape[-2:] != fake.shape[-2:]:
            frame = F.interpolate(frame, size=fake.shape[-2:], mode="bilinear", align_corners=False)
        x1 = self.enc1(torch.cat([fake, frame], dim=1))
        x2 = self.enc2(x1)
        x3 = self.enc3(x2)
        y2 = self.up2(torch.cat([F.interpolate(x3, size=x2.shape[-2:], mode="nearest"), x2], dim=1))
        y1 = self.up1(torch.cat([F.interpolate(y2, size=x1.shape[-2:], mode="nearest"), x1], dim=1))
        return torch.sigmoid(self.head(y1))


class ConvDiscriminator(nn.Module):
    """Four strided conv layers and a linear head producing one logit per sample."""

    def __init__(self, in_channels, base=64):
        super().__init__()
        self.in_channels = in_channels
        self.features = nn.Sequential(
            nn.Conv2d(in_channels, base, 3, 2, 1),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(base, base * 2, 3, 2, 1),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(base * 2, base * 4, 3, 2, 1),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(base * 4, base * 4, 3, 1, 1),
            nn.LeakyReLU(0.2, inplace=True),
        )
        self.fc = nn.Linear(base * 4, 1)

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ContractError(
                f"discriminator expects (N, {self.in_channels}, H, W), got {tuple(x.shape)}"
            )
        h = self.features(x)
        h = F.adaptive_avg_pool2d(h, 1).flatten(1)
        return self.fc(h).squeeze(1)

    def orthogonal_weight_matrices(self):
        """All weight matrices, flattened to (out, in), for the Gram regularizer."""
        mats = []
        for m in self.modules():
            if isinstance(m, (nn.Conv2d, nn.Linear)):
                w = m.weight
                mats.append(w.reshape(w.shape[0], -1))
        return mats


# ---------------------------------------------------------------------------
# Feature pooling / projection
# ---------------------------------------------------------------------------

POOL_HEADS = ("none", "avg_pool", "mlp")


@dataclass(frozen=True)
class ProjectionConfig:
    """How feature maps are reduced to vectors for the similarity losses."""

    head: str = "avg_pool"
    momentum_encoder: bool = False
    momentum_mlp: bool = False
    shared_mlp: bool = False
    ema_decay: Optional[float] = None
    mlp_hidden: int = 256
    mlp_out: int = 128

    def __post_init__(self):
        if self.head not in POOL_HEADS:
            raise ConfigError(f"projection head must be one of {POOL_HEADS}, got '{self.head}'")
        if (self.momentum_encoder or self.momentum_mlp) and self.ema_decay is None:
            raise ConfigError("momentum options require ema_decay")
        if self.ema_decay is not None and not (0.0 < self.ema_decay < 1.0):
            raise ConfigError(f"ema_decay must lie in (0, 1), got {self.ema_decay}")
        if self.momentum_mlp and self.head != "mlp":
            raise ConfigError("momentum_mlp requires the mlp head")


class ProjectionMLP(nn.Module):
    def __init__(self, in_dim, hidden, out_dim):
        super().__init__()
        self.net = nn.Sequential(nn.Linear(in_dim, hidden), nn.ReLU(inplace=True), nn.Linear(hidden, out_dim))

    def forward(self, v):
        return self.net(v)


class ProjectionHeads(nn.Module):
    """Optional MLPs applied after pooling; content heads may be shared."""

    def __init__(self, cfg: ProjectionConfig, feature_channels=CONTENT_CHANNELS):
        super().__init__()
        self.cfg = cfg
        if cfg.head == "mlp":
            content = ProjectionMLP(feature_channels, cfg.mlp_hidden, cfg.mlp_out)
            self.content_mlp = content
            # one MLP serves event content and frame content; the attribute
            # stream gets its own unless sharing is forced
            self.attribute_mlp = content if cfg.shared_mlp else ProjectionMLP(
                feature_channels, cfg.mlp_hidden, cfg.mlp_out
            )

    def mlp_for(self, kind):
        return self.attribute_mlp if kind == "attribute" else self.content_mlp

    def pool(self, z, kind="content"):
        mlp = self.mlp_for(kind) if self.cfg.head == "mlp" else None
        return pool_features(z, self.cfg, mlp)


def pool_features(z, proj: ProjectionConfig, mlp=None):
    """Reduce a feature map (C, H, W) or batch (N, C, H, W) to vector(s)."""
    single = z.ndim == 3
    if single:
        z = z.unsqueeze(0)
    if z.ndim != 4:
        raise ContractError(f"pool_features expects a 3-D or 4-D map, got {tuple(z.shape)}")
    if proj.head == "none":
        v = z.flatten(1)
    else:
        v = z.mean(dim=(-2, -1))
        if proj.head == "mlp":
            if mlp is None:
                raise ContractError("mlp head requires a projection module")
            v = mlp(v)
    return v.squeeze(0) if single else v


def ema_update(shadow, live, decay):
    """In-place shadow <- decay * shadow + (1 - decay) * live.

    Accepts tensor pairs, iterables of tensors, or nn.Module pairs (module
    buffers are copied verbatim).  Returns the shadow.
    """
    if not 0.0 <= decay <= 1.0:
        raise ConfigError(f"ema decay must lie in [0, 1], got {decay}")
    if isinstance(shadow, nn.Module):
        with torch.no_grad():
            ema_update(list(shadow.parameters()), list(live.parameters()), decay)
            for sb, lb in zip(shadow.buffers(), live.buffers()):
                sb.copy_(lb)
        return shadow
    if isinstance(shadow, torch.Tensor):
        shadow, live = [shadow], [live]
        single = True
    else:
        shadow, live = list(shadow), list(live)
        single = False
    if len(shadow) != len(live):
        raise ContractError(f"shadow has {len(shadow)} tensors but live has {len(live)}")
    with torch.no_grad():
        for s, l in zip(shadow, live):
            if s.shape != l.shape:
                raise ContractError(f"shape mismatch {tuple(s.shape)} vs {tuple(l.shape)}")
            s.mul_(decay).add_(l, alpha=1.0 - decay)
    return shadow[0] if single else shadow


# ---------------------------------------------------------------------------
# Full model container
# ---------------------------------------------------------------------------

GENERATOR_NETS = (
    "frame_encoder",
    "event_content_encoder",
    "event_attribute_encoder",
    "classifier",
    "decoder",
    "refiner",
    "projection",
)
DISCRIMINATOR_NETS = ("content_discriminator", "event_discriminator")


class AdaptationModel(nn.Module):
    """All networks of the adaptation architecture plus optional EMA shadows.

    At test time only ``event_content_encoder`` and ``classifier`` are used.
    """

    def __init__(
        self,
        num_classes,
        event_channels,
        resolution,
        stem_kernel=3,
        stem_stride=1,
        projection: ProjectionConfig = ProjectionConfig(),
        with_attribute=True,
    ):
        super().__init__()
        self.num_classes = num_classes
        self.event_channels = event_channels
        self.resolution = resolution
        self.with_attribute = with_attribute
        self.projection_cfg = projection

        self.frame_encoder = ContentEncoder(3, stem_kernel, stem_stride)
        self.event_content_encoder = ContentEncoder(event_channels, stem_kernel, stem_stride)
        self.event_attribute_encoder = (
            ContentEncoder(event_channels, stem_kernel, stem_stride) if with_attribute else None
        )
        self.classifier = StageClassifier(num_classes)

        factor = self.frame_encoder.spatial_factor
        if resolution % factor:
            raise ConfigError(f"resolution {resolution} not divisible by encoder factor {factor}")
        attribute_channels = CONTENT_CHANNELS if with_attribute else 0
        self.decoder = EventDecoder(CONTENT_CHANNELS, attribute_channels, event_channels, factor)
        self.refiner = RefinementNet(event_channels)
        self.content_discriminator = ConvDiscriminator(CONTENT_CHANNELS)
        self.event_discriminator = ConvDiscriminator(event_channels)
        self.projection = ProjectionHeads(projection)

        self.ema_encoders = None
        self.ema_projection = None
        if projection.momentum_encoder:
            self.ema_encoders = nn.ModuleDict(
                {
                    name: _frozen_copy(net)
                    for name, net in (
                        ("frame_encoder", self.frame_encoder),
                        ("event_content_encoder", self.event_content_encoder),
                        ("event_attribute_encoder", self.event_attribute_encoder),
                    )
                    if net is not None
                }
            )
        if projection.momentum_mlp:
            self.ema_projection = _frozen_copy(self.projection)

    # --- parameter groups -------------------------------------------------

    def named_networks(self):
        nets = {}
        for name in GENERATOR_NETS + DISCRIMINATOR_NETS:
            net = getattr(self, name)
            if net is not None and any(True for _ in net.parameters()):
                nets[name] = net
        return nets

    def generator_parameters(self):
        for name in GENERATOR_NETS:
            net = getattr(self, name)
            if net is not None:
                yield from net.parameters()

    def discriminator_parameters(self):
        for name in DISCRIMINATOR_NETS:
            yield from getattr(self, name).parameters()

    def update_shadows(self):
        decay = self.projection_cfg.ema_decay
        if self.ema_encoders is not None:
            for name, shadow in self.ema_encoders.items():
                ema_update(shadow, getattr(self, name), decay)
        if self.ema_projection is not None:
            ema_update(self.ema_projection, self.projection, decay)

    def view_encoder(self, name):
        """Encoder used for the second contrastive view (EMA copy if enabled)."""
        if self.ema_encoders is not None and name in self.ema_encoders:
            return self.ema_encoders[name]
        return getattr(self, name)

    def view_projection(self):
        return self.ema_projection if self.ema_projection is not None else self.projection

    def manifest(self, step=0, epoch=0):
        groups = {}
        for name, net in self.named_networks().items():
            groups[name] = {pn: list(p.shape) for pn, p in net.named_parameters()}
        return {
            "format": 1,
            "step": int(step),
            "epoch": int(epoch),
            "num_classes": self.num_classes,
            "event_channels": self.event_channels,
            "resolution": self.resolution,
            "with_attribute": self.with_attribute,
            "groups": groups,
        }


def _frozen_copy(module):
    shadow = copy.deepcopy(module)
    for p in shadow.parameters():
        p.requires_grad_(False)
    return shadow
