"""Residual CNN bases, classifier heads, and branch-merged networks.

A base is a stack of unit residual blocks (separable convolutions in
the main path, a strided 1x1 convolution in the shortcut, batch norm
throughout) ending in global average pooling, so its output is a flat
feature vector of length equal to the final filter count.  A classifier
is a stack of dense layers with a softmax tail.  Merged networks join
several frozen bases: each branch gets a trainable dense layer whose
width controls how strongly that branch's features are represented in
the concatenation feeding a shared classifier.  Merging is pairwise
composable, so an already merged (and then frozen) network can serve as
one branch of the next merge.

The serialized model format is magic ``MSTH``, a little-endian uint32
format version, a JSON header carrying the architecture plus a tensor
manifest (name, dtype, shape, trainable flag, byte offset), then raw
little-endian float64 tensor payloads.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass

import numpy as np

from . import ops
from .tensor import Parameter, ShapeError, Tensor

__all__ = [
    "ResidualBlockSpec",
    "CnnBaseSpec",
    "ClassifierSpec",
    "CnnBase",
    "Classifier",
    "FullNetwork",
    "MergedNetwork",
    "ModelFormatError",
    "build_base",
    "attach_classifier",
    "strip_classifier",
    "freeze_network",
    "freeze_base",
    "is_fully_frozen",
    "merge_combined",
    "merge_pair",
    "count_parameters",
    "tensor_hashes",
    "allocate_widths",
    "serialize_network",
    "deserialize_network",
    "save_network",
    "load_network",
    "DEFAULT_BRANCH_WIDTHS",
    "DEFAULT_PAIR_WIDTHS",
    "default_1d_spec",
    "default_2d_spec",
]

MAGIC = b"MSTH"
FORMAT_VERSION = 1

# Branch dense widths for a four-branch combined merge: wider branches
# carry the representations that score better when trained individually.
DEFAULT_BRANCH_WIDTHS = {"identity": 96, "scattering": 64, "recurrence": 48, "gaf": 32}
# (previous, incoming) widths for one pairwise merge stage.
DEFAULT_PAIR_WIDTHS = (144, 112)


class ModelFormatError(ValueError):
    """A serialized model payload is malformed."""


# ---------------------------------------------------------------------------
# initialization


def _lecun_uniform(rng: np.random.Generator, shape: tuple, fan_in: int) -> np.ndarray:
    limit = np.sqrt(3.0 / max(fan_in, 1))
    return rng.uniform(-limit, limit, size=shape)


# ---------------------------------------------------------------------------
# specs


@dataclass(frozen=True)
class ResidualBlockSpec:
    """One unit residual block: two parallel paths summed.

    Main path: separable conv (stride s) -> BN -> relu -> separable conv
    (stride 1) -> BN.  Shortcut: 1x1 conv (stride s) -> BN.  Both paths
    produce ``filters`` channels at the strided spatial size.
    """

    kernel_size: int
    filters: int
    stride: int = 1
    dims: int = 1

    def __post_init__(self):
        if self.dims not in (1, 2):
            raise ValueError(f"dims must be 1 or 2, got {self.dims}")
        if self.kernel_size < 1 or self.filters < 1 or self.stride < 1:
            raise ValueError(f"invalid block spec {self}")


@dataclass(frozen=True)
class CnnBaseSpec:
    """Ordered residual blocks over a declared input shape, with a GAP tail."""

    input_shape: tuple
    blocks: tuple

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(v) for v in self.input_shape))
        object.__setattr__(self, "blocks", tuple(self.blocks))
        if len(self.input_shape) not in (2, 3):
            raise ValueError(
                f"input_shape must be [C, L] or [C, H, W], got {self.input_shape}"
            )
        dims = len(self.input_shape) - 1
        if not self.blocks:
            raise ValueError("a base needs at least one block")
        for i, block in enumerate(self.blocks):
            if block.dims != dims:
                raise ShapeError(
                    f"block {i}: {block.dims}D block in a {dims}D base"
                )

    @property
    def dims(self) -> int:
        return len(self.input_shape) - 1

    @property
    def feature_dim(self) -> int:
        return self.blocks[-1].filters


@dataclass(frozen=True)
class ClassifierSpec:
    """Dense layer widths; the last width is the class count."""

    widths: tuple

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if not self.widths or any(w < 1 for w in self.widths):
            raise ValueError(f"classifier widths must be positive, got {self.widths}")

    @property
    def n_classes(self) -> int:
        return self.widths[-1]


def default_1d_spec(in_channels: int, length: int,
                    filters=(64, 128, 256, 256, 256), kernel_size: int = 5,
                    stride: int = 2) -> CnnBaseSpec:
    """Default 1D base: five strided residual blocks ending at 256 features."""
    blocks = tuple(
        ResidualBlockSpec(kernel_size=kernel_size, filters=f, stride=stride, dims=1)
        for f in filters
    )
    return CnnBaseSpec(input_shape=(in_channels, length), blocks=blocks)


def default_2d_spec(in_channels: int, side: int,
                    filters=(64, 128, 256, 512), kernel_size: int = 3,
                    stride: int = 2) -> CnnBaseSpec:
    """Default 2D base: four strided 3x3 residual blocks ending at 512 features."""
    blocks = tuple(
        ResidualBlockSpec(kernel_size=kernel_size, filters=f, stride=stride, dims=2)
        for f in filters
    )
    return CnnBaseSpec(input_shape=(in_channels, side, side), blocks=blocks)


# ---------------------------------------------------------------------------
# layers


class BatchNorm:
    """Per-channel batch norm with warmed-up running statistics.

    The effective momentum ramps as min(momentum, t / (t + 1)), i.e. a
    cumulative average over the first updates that decays into the
    configured momentum.  Without the ramp the (0, 1)-initialized
    running stats need hundreds of updates before inference mode is
    usable, which starves early stopping at desk scale.
    """

    def __init__(self, channels: int, momentum: float = 0.99, eps: float = 1e-5):
        self.gamma = Parameter(np.ones(channels))
        self.beta = Parameter(np.zeros(channels))
        self.running_mean = Parameter(np.zeros(channels), trainable=False)
        self.running_var = Parameter(np.ones(channels), trainable=False)
        self.steps = Parameter(np.zeros(1), trainable=False)
        self.momentum = momentum
        self.eps = eps

    def forward(self, x, tape, mode):
        momentum = self.momentum
        if mode == "train":
            t = self.steps.data[0]
            momentum = min(self.momentum, t / (t + 1.0))
            self.steps.data[0] = t + 1.0
        return ops.batch_norm(
            x, self.gamma, self.beta, self.running_mean.data, self.running_var.data,
            mode=mode, momentum=momentum, eps=self.eps, tape=tape,
        )

    def named_parameters(self, prefix="bn"):
        yield f"{prefix}.gamma", self.gamma
        yield f"{prefix}.beta", self.beta
        yield f"{prefix}.running_mean", self.running_mean
        yield f"{prefix}.running_var", self.running_var
        yield f"{prefix}.steps", self.steps


class SeparableConv:
    def __init__(self, dims, in_channels, out_channels, kernel_size, stride, rng):
        kshape = (kernel_size,) if dims == 1 else (kernel_size, kernel_size)
        taps = int(np.prod(kshape))
        self.dims = dims
        self.stride = stride
        self.depthwise = Parameter(_lecun_uniform(rng, (in_channels, *kshape), taps))
        self.pointwise = Parameter(
            _lecun_uniform(rng, (out_channels, in_channels), in_channels)
        )

    def forward(self, x, tape, mode):
        fn = ops.separable_conv1d if self.dims == 1 else ops.separable_conv2d
        return fn(x, self.depthwise, self.pointwise,
                  stride=self.stride, padding="same", tape=tape)

    def named_parameters(self, prefix="sepconv"):
        yield f"{prefix}.depthwise", self.depthwise
        yield f"{prefix}.pointwise", self.pointwise


class PointConv:
    """Plain 1x1 convolution used by the residual shortcut."""

    def __init__(self, dims, in_channels, out_channels, stride, rng):
        kshape = (1,) if dims == 1 else (1, 1)
        self.dims = dims
        self.stride = stride
        self.kernels = Parameter(
            _lecun_uniform(rng, (out_channels, in_channels, *kshape), in_channels)
        )

    def forward(self, x, tape, mode):
        fn = ops.conv1d if self.dims == 1 else ops.conv2d
        return fn(x, self.kernels, stride=self.stride, padding="same", tape=tape)

    def named_parameters(self, prefix="conv"):
        yield f"{prefix}.kernels", self.kernels


class Dense:
    def __init__(self, in_features, out_features, rng):
        self.weight = Parameter(_lecun_uniform(rng, (in_features, out_features), in_features))
        self.bias = Parameter(np.zeros(out_features))

    @property
    def in_features(self):
        return self.weight.shape[0]

    @property
    def out_features(self):
        return self.weight.shape[1]

    def forward(self, x, tape, mode):
        return ops.dense(x, self.weight, self.bias, tape=tape)

    def named_parameters(self, prefix="dense"):
        yield f"{prefix}.weight", self.weight
        yield f"{prefix}.bias", self.bias


class ResidualBlock:
    def __init__(self, spec: ResidualBlockSpec, in_channels: int, rng):
        d, f, k, s = spec.dims, spec.filters, spec.kernel_size, spec.stride
        self.spec = spec
        self.conv_a = SeparableConv(d, in_channels, f, k, s, rng)
        self.bn_a = BatchNorm(f)
        self.conv_b = SeparableConv(d, f, f, k, 1, rng)
        self.bn_b = BatchNorm(f)
        self.shortcut = PointConv(d, in_channels, f, s, rng)
        self.bn_shortcut = BatchNorm(f)

    def forward(self, x, tape, mode):
        h = ops.relu(self.bn_a.forward(self.conv_a.forward(x, tape, mode), tape, mode), tape)
        h = self.bn_b.forward(self.conv_b.forward(h, tape, mode), tape, mode)
        s = self.bn_shortcut.forward(self.shortcut.forward(x, tape, mode), tape, mode)
        return ops.relu(ops.residual_add(h, s, tape), tape)

    def named_parameters(self, prefix="block"):
        for name, sub in (("conv_a", self.conv_a), ("bn_a", self.bn_a),
                          ("conv_b", self.conv_b), ("bn_b", self.bn_b),
                          ("shortcut", self.shortcut), ("bn_shortcut", self.bn_shortcut)):
            yield from sub.named_parameters(f"{prefix}.{name}")


# ---------------------------------------------------------------------------
# networks


class CnnBase:
    """Residual trunk ending in global average pooling."""

    def __init__(self, spec: CnnBaseSpec, rng):
        self.spec = spec
        self.blocks = []
        channels = spec.input_shape[0]
        lengths = list(spec.input_shape[1:])
        for i, block_spec in enumerate(spec.blocks):
            lengths = [-(-L // block_spec.stride) for L in lengths]
            if any(L < 1 for L in lengths):
                raise ShapeError(
                    f"block {i}: stride {block_spec.stride} collapses spatial size to zero"
                )
            self.blocks.append(ResidualBlock(block_spec, channels, rng))
            channels = block_spec.filters

    @property
    def feature_dim(self) -> int:
        return self.spec.feature_dim

    def forward(self, x, tape=None, mode="infer"):
        if not isinstance(x, Tensor):
            x = Tensor(x)
        if x.shape[1] != self.spec.input_shape[0]:
            raise ShapeError(
                f"base expects {self.spec.input_shape[0]} input channels, got {x.shape[1]}"
            )
        for block in self.blocks:
            x = block.forward(x, tape, mode)
        return ops.global_avg_pool(x, tape)

    def named_parameters(self, prefix="base"):
        for i, block in enumerate(self.blocks):
            yield from block.named_parameters(f"{prefix}.block{i}")

    def config(self):
        return {
            "type": "cnn_base",
            "input_shape": list(self.spec.input_shape),
            "blocks": [
                {"kernel_size": b.kernel_size, "filters": b.filters,
                 "stride": b.stride, "dims": b.dims}
                for b in self.spec.blocks
            ],
        }


class Classifier:
    """Dense stack with relu between layers and a softmax tail."""

    def __init__(self, in_features: int, spec: ClassifierSpec, rng):
        self.spec = spec
        self.in_features = in_features
        self.layers = []
        fan_in = in_features
        for width in spec.widths:
            self.layers.append(Dense(fan_in, width, rng))
            fan_in = width

    def forward(self, x, tape=None, mode="infer"):
        for layer in self.layers[:-1]:
            x = ops.relu(layer.forward(x, tape, mode), tape)
        return ops.softmax(self.layers[-1].forward(x, tape, mode), tape)

    def named_parameters(self, prefix="classifier"):
        for i, layer in enumerate(self.layers):
            yield from layer.named_parameters(f"{prefix}.dense{i}")

    def config(self):
        return {
            "type": "classifier",
            "in_features": self.in_features,
            "widths": list(self.spec.widths),
        }


class FullNetwork:
    """A base plus its own classifier (the individually trained unit)."""

    def __init__(self, base: CnnBase, classifier: Classifier):
        self.base = base
        self.classifier = classifier

    def forward(self, x, tape=None, mode="infer"):
        return self.classifier.forward(self.base.forward(x, tape, mode), tape, mode)

    def named_parameters(self, prefix=""):
        head = f"{prefix}." if prefix else ""
        yield from self.base.named_parameters(f"{head}base")
        yield from self.classifier.named_parameters(f"{head}classifier")

    def config(self):
        return {"type": "full", "base": self.base.config(),
                "classifier": self.classifier.config()}


class _TransformBranch:
    """Branch input backed by one transform's base network."""

    def __init__(self, kind: str, base: CnnBase):
        self.kind = kind
        self.base = base

    @property
    def feature_dim(self):
        return self.base.feature_dim

    def features(self, inputs: dict, tape, mode, precomputed: bool):
        if precomputed:
            return Tensor(inputs[self.kind])
        return self.base.forward(inputs[self.kind], tape, mode)

    def named_parameters(self, prefix="branch"):
        yield from self.base.named_parameters(f"{prefix}.base")

    def config(self):
        return {"type": "transform_branch", "kind": self.kind, "base": self.base.config()}


class _GroupBranch:
    """Branch input backed by an earlier merge's feature extractor."""

    def __init__(self, group: "BranchGroup"):
        self.group = group

    @property
    def feature_dim(self):
        return self.group.feature_dim

    def features(self, inputs, tape, mode, precomputed):
        return self.group.features(inputs, tape, mode, precomputed)

    def named_parameters(self, prefix="branch"):
        yield from self.group.named_parameters(f"{prefix}.group")

    def config(self):
        return {"type": "group_branch", "group": self.group.config()}


class BranchGroup:
    """Width-weighted branches concatenated into one feature vector."""

    def __init__(self, branches):
        self.branches = list(branches)  # (input, Dense) pairs

    @property
    def feature_dim(self):
        return sum(dense.out_features for _, dense in self.branches)

    def features(self, inputs, tape=None, mode="infer", precomputed=False):
        outputs = [
            dense.forward(source.features(inputs, tape, mode, precomputed), tape, mode)
            for source, dense in self.branches
        ]
        return ops.concat(outputs, axis=1, tape=tape)

    def named_parameters(self, prefix="group"):
        for i, (source, dense) in enumerate(self.branches):
            yield from source.named_parameters(f"{prefix}.branch{i}")
            yield from dense.named_parameters(f"{prefix}.branch{i}.dense")

    def config(self):
        return {
            "type": "branch_group",
            "branches": [
                {"input": source.config(),
                 "in_features": dense.in_features, "width": dense.out_features}
                for source, dense in self.branches
            ],
        }


class MergedNetwork:
    """Frozen branch extractors, trainable branch denses, shared classifier.

    ``forward`` takes a dict mapping transform kind to a batch of
    transformed tensors.  With ``precomputed=True`` the dict maps kind
    to already extracted base feature vectors, which lets training skip
    the frozen trunks entirely.
    """

    def __init__(self, group: BranchGroup, classifier: Classifier):
        self.group = group
        self.classifier = classifier

    def forward(self, inputs: dict, tape=None, mode="infer", precomputed=False):
        feats = self.group.features(inputs, tape, mode, precomputed)
        return self.classifier.forward(feats, tape, mode)

    def named_parameters(self, prefix=""):
        head = f"{prefix}." if prefix else ""
        yield from self.group.named_parameters(f"{head}group")
        yield from self.classifier.named_parameters(f"{head}classifier")

    def config(self):
        return {"type": "merged", "group": self.group.config(),
                "classifier": self.classifier.config()}

    def branch_kinds(self) -> list:
        kinds = []

        def walk(group):
            for source, _ in group.branches:
                if isinstance(source, _TransformBranch):
                    kinds.append(source.kind)
                else:
                    walk(source.group)

        walk(self.group)
        return kinds


# ---------------------------------------------------------------------------
# construction operations


def build_base(spec: CnnBaseSpec, rng: np.random.Generator) -> CnnBase:
    """Fresh trainable base; two builds with the same seed are bit-identical."""
    return CnnBase(spec, rng)


def attach_classifier(base: CnnBase, spec: ClassifierSpec,
                      rng: np.random.Generator) -> FullNetwork:
    return FullNetwork(base, Classifier(base.feature_dim, spec, rng))


def strip_classifier(network: FullNetwork) -> CnnBase:
    """Remove the classifier, returning the base with its weights intact."""
    if not isinstance(network, FullNetwork):
        raise TypeError(
            f"strip_classifier expects a network with a classifier attached, "
            f"got {type(network).__name__}"
        )
    return network.base


def freeze_network(module) -> object:
    """Mark every parameter non-trainable (there is no unfreeze)."""
    for _, p in module.named_parameters():
        p.trainable = False
    return module


freeze_base = freeze_network


def is_fully_frozen(module) -> bool:
    return all(not p.trainable for _, p in module.named_parameters())


def _require_frozen(what: str, module):
    if not is_fully_frozen(module):
        raise ValueError(f"{what} must be fully frozen before merging")


def _branch_seeds(rng: np.random.Generator, kinds) -> dict:
    # drawn in sorted-kind order so branch initialization is independent
    # of the order branches are listed in
    return {kind: int(rng.integers(2**63)) for kind in sorted(kinds)}


def merge_combined(bases, widths: dict, classifier_spec: ClassifierSpec,
                   rng: np.random.Generator) -> MergedNetwork:
    """Join >= 2 frozen bases in one step (the two-stage scheme's merge).

    ``bases`` is a list of (kind, base) pairs; each branch receives a
    fresh trainable dense layer of its table width, outputs are
    concatenated in the given order, and a fresh classifier is attached.
    """
    bases = list(bases)
    if len(bases) < 2:
        raise ValueError(f"merge_combined needs at least 2 bases, got {len(bases)}")
    for kind, base in bases:
        _require_frozen(f"base for {kind!r}", base)
        if kind not in widths:
            raise KeyError(f"no branch width for transform kind {kind!r}")
    seeds = _branch_seeds(rng, [kind for kind, _ in bases])
    branches = []
    for kind, base in bases:
        branch_rng = np.random.default_rng(seeds[kind])
        branches.append(
            (_TransformBranch(kind, base), Dense(base.feature_dim, widths[kind], branch_rng))
        )
    group = BranchGroup(branches)
    classifier = Classifier(group.feature_dim, classifier_spec,
                            np.random.default_rng(int(rng.integers(2**63))))
    return MergedNetwork(group, classifier)


def merge_pair(previous, incoming, width_previous: int, width_incoming: int,
               classifier_spec: ClassifierSpec, rng: np.random.Generator) -> MergedNetwork:
    """One sequential merge stage: previous extractor plus one new base.

    ``previous`` is either a (kind, base) pair (first merge) or the
    MergedNetwork from the prior stage, whose classifier is discarded
    and whose branch denses must already be frozen.  Exactly two fresh
    trainable denses plus a fresh classifier result.
    """
    new_kind, new_base = incoming
    _require_frozen(f"base for {new_kind!r}", new_base)

    if isinstance(previous, MergedNetwork):
        _require_frozen("the previous merged network", previous)
        prev_source = _GroupBranch(previous.group)
        prev_kind_hint = "+".join(previous.branch_kinds())
    else:
        prev_kind, prev_base = previous
        _require_frozen(f"base for {prev_kind!r}", prev_base)
        prev_source = _TransformBranch(prev_kind, prev_base)
        prev_kind_hint = prev_kind

    seeds = _branch_seeds(rng, [f"prev:{prev_kind_hint}", f"new:{new_kind}"])
    prev_dense = Dense(prev_source.feature_dim, width_previous,
                       np.random.default_rng(seeds[f"prev:{prev_kind_hint}"]))
    new_dense = Dense(new_base.feature_dim, width_incoming,
                      np.random.default_rng(seeds[f"new:{new_kind}"]))
    group = BranchGroup([
        (prev_source, prev_dense),
        (_TransformBranch(new_kind, new_base), new_dense),
    ])
    classifier = Classifier(group.feature_dim, classifier_spec,
                            np.random.default_rng(int(rng.integers(2**63))))
    return MergedNetwork(group, classifier)


# ---------------------------------------------------------------------------
# accounting


def count_parameters(module) -> tuple:
    """(trainable, total) element counts; batch-norm running stats count
    as non-trainable."""
    trainable = total = 0
    for _, p in module.named_parameters():
        total += p.size
        if p.trainable:
            trainable += p.size
    return trainable, total


def tensor_hashes(module) -> dict:
    """SHA-256 of every named tensor's raw bytes."""
    return {
        name: hashlib.sha256(np.ascontiguousarray(p.data).tobytes()).hexdigest()
        for name, p in module.named_parameters()
    }


def allocate_widths(scores: dict, total: int, multiple: int = 16,
                    floor: int = 16) -> dict:
    """Split a width budget across branches proportionally to their scores.

    Widths are rounded to the given multiple and floored, then nudged on
    the largest/smallest branches until they sum to the budget exactly.
    """
    if not scores:
        raise ValueError("allocate_widths needs at least one score")
    if total % multiple != 0 or floor % multiple != 0:
        raise ValueError("total and floor must be multiples of the rounding multiple")
    if total < floor * len(scores):
        raise ValueError(
            f"budget {total} cannot give {len(scores)} branches at least {floor} each"
        )
    mass = sum(max(s, 0.0) for s in scores.values())
    kinds = sorted(scores)
    if mass == 0:
        raw = {k: total / len(kinds) for k in kinds}
    else:
        raw = {k: total * max(scores[k], 0.0) / mass for k in kinds}
    widths = {k: max(floor, int(round(raw[k] / multiple)) * multiple) for k in kinds}

    def by_width(reverse):
        return sorted(kinds, key=lambda k: (widths[k], k), reverse=reverse)

    while sum(widths.values()) > total:
        for k in by_width(reverse=True):
            if widths[k] - multiple >= floor:
                widths[k] -= multiple
                break
    while sum(widths.values()) < total:
        widths[by_width(reverse=True)[0]] += multiple
    return widths


# ---------------------------------------------------------------------------
# serialization


_BUILDERS = {}


def _builder(name):
    def register(fn):
        _BUILDERS[name] = fn
        return fn

    return register


def _zero_rng():
    return np.random.default_rng(0)


@_builder("cnn_base")
def _build_cnn_base(cfg):
    spec = CnnBaseSpec(
        input_shape=tuple(cfg["input_shape"]),
        blocks=tuple(ResidualBlockSpec(**b) for b in cfg["blocks"]),
    )
    return CnnBase(spec, _zero_rng())


@_builder("classifier")
def _build_classifier(cfg):
    return Classifier(cfg["in_features"], ClassifierSpec(tuple(cfg["widths"])), _zero_rng())


@_builder("full")
def _build_full(cfg):
    return FullNetwork(_build_cnn_base(cfg["base"]), _build_classifier(cfg["classifier"]))


@_builder("transform_branch")
def _build_transform_branch(cfg):
    return _TransformBranch(cfg["kind"], _build_cnn_base(cfg["base"]))


@_builder("group_branch")
def _build_group_branch(cfg):
    return _GroupBranch(_build_branch_group(cfg["group"]))


@_builder("branch_group")
def _build_branch_group(cfg):
    branches = []
    for entry in cfg["branches"]:
        source = _BUILDERS[entry["input"]["type"]](entry["input"])
        branches.append((source, Dense(entry["in_features"], entry["width"], _zero_rng())))
    return BranchGroup(branches)


@_builder("merged")
def _build_merged(cfg):
    return MergedNetwork(_build_branch_group(cfg["group"]), _build_classifier(cfg["classifier"]))


def serialize_network(network, extra: dict | None = None) -> bytes:
    """Byte-exact snapshot: architecture, tensor manifest, raw payloads."""
    named = sorted(network.named_parameters(), key=lambda item: item[0])
    manifest = []
    payload = bytearray()
    for name, p in named:
        raw = np.ascontiguousarray(p.data, dtype="<f8").tobytes()
        manifest.append({
            "name": name,
            "dtype": "<f8",
            "shape": list(p.data.shape),
            "trainable": bool(p.trainable),
            "offset": len(payload),
        })
        payload.extend(raw)
    header = {"architecture": network.config(), "tensors": manifest}
    if extra is not None:
        header["extra"] = extra
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    return b"".join([
        MAGIC,
        struct.pack("<I", FORMAT_VERSION),
        struct.pack("<Q", len(header_bytes)),
        header_bytes,
        bytes(payload),
    ])


def deserialize_network(blob: bytes):
    """Rebuild a network from bytes; returns (network, extra_header)."""
    if len(blob) < 16 or blob[:4] != MAGIC:
        raise ModelFormatError(f"bad magic: expected {MAGIC!r}")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported format version {version}")
    (header_len,) = struct.unpack_from("<Q", blob, 8)
    header_end = 16 + header_len
    if len(blob) < header_end:
        raise ModelFormatError("truncated header")
    try:
        header = json.loads(blob[16:header_end])
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"corrupt header: {exc}") from None

    arch = header["architecture"]
    if arch["type"] not in _BUILDERS:
        raise ModelFormatError(f"unknown architecture type {arch['type']!r}")
    network = _BUILDERS[arch["type"]](arch)
    by_name = dict(network.named_parameters())
    payload = blob[header_end:]
    for entry in header["tensors"]:
        name = entry["name"]
        if name not in by_name:
            raise ModelFormatError(f"tensor {name!r} not present in architecture")
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start, stop = entry["offset"], entry["offset"] + 8 * count
        if stop > len(payload):
            raise ModelFormatError(f"truncated payload for tensor {name!r}")
        p = by_name[name]
        p.data = np.frombuffer(payload[start:stop], dtype="<f8").reshape(shape).copy()
        p.grad = np.zeros_like(p.data)
        p.trainable = bool(entry["trainable"])
    return network, header.get("extra")


def save_network(path, network, extra: dict | None = None):
    with open(path, "wb") as fh:
        fh.write(serialize_network(network, extra))


def load_network(path):
    with open(path, "rb") as fh:
        return deserialize_network(fh.read())
