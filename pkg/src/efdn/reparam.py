"""Branch algebra of the edge-enhanced diverse branch block (EDBB).

The block trains as a sum of parallel branches (a 3x3 conv, a 1x1 conv, an
identity shortcut, an expand-and-squeeze pair, and three scaled fixed-filter
paths) and deploys as a single 3x3 convolution with identical output.

Sequential branches declare their zero padding on the *first*, pointwise
convolution. Padding the input before the 1x1 conv leaves the one-pixel ring
of the intermediate equal to the first bias, and that is exactly the
assumption under which the merged 3x3 convolution reproduces the two-pass
forward at every pixel, borders included.
"""

from dataclasses import dataclass
from functools import reduce

import numpy as np

from . import tensor as tops
from .errors import ConfigError, DimensionError, UsageError
from .filters import get_filter
from .tensor import ConvParams

CANONICAL_BRANCHES = (
    "conv3x3",
    "conv1x1",
    "identity",
    "expand_squeeze",
    "scaled_sobel_x",
    "scaled_sobel_y",
    "scaled_laplacian",
)


@dataclass(frozen=True)
class ConvBranch:
    """A plain convolution branch; 3x3 (same padding) or 1x1 (no padding)."""

    conv: ConvParams

    @property
    def kind(self):
        return "conv3x3" if self.conv.kh == 3 else "conv1x1"


@dataclass(frozen=True)
class IdentityBranch:
    """Parameter-free shortcut; valid only when in/out channel counts match."""

    kind = "identity"


@dataclass(frozen=True)
class ExpandSqueezeBranch:
    """1x1 channel expansion followed by a 3x3 squeeze back down."""

    expand: ConvParams   # (D, C, 1, 1), padding (1, 1)
    squeeze: ConvParams  # (O, D, 3, 3), padding (0, 0)

    kind = "expand_squeeze"


@dataclass(frozen=True)
class ScaledFilterBranch:
    """1x1 conv followed by a fixed 3x3 filter with per-channel scale and bias."""

    pre: ConvParams      # (O, C, 1, 1), padding (1, 1)
    filter_name: str
    scale: object        # (O,)
    bias: object         # (O,)

    @property
    def kind(self):
        return f"scaled_{self.filter_name}"


@dataclass(frozen=True)
class EdbbParams:
    """Trainable state of one block: channel counts plus the branch list."""

    in_ch: int
    out_ch: int
    branches: tuple

    def __post_init__(self):
        object.__setattr__(self, "branches", tuple(self.branches))
        for br in self.branches:
            self._check_branch(br)

    def _check_branch(self, br):
        c, o = self.in_ch, self.out_ch
        if isinstance(br, IdentityBranch):
            if c != o:
                raise ConfigError("identity branch requires equal in/out channels")
        elif isinstance(br, ConvBranch):
            if (br.conv.in_ch, br.conv.out_ch) != (c, o):
                raise DimensionError(f"{br.kind} branch maps {br.conv.in_ch}->{br.conv.out_ch}, expected {c}->{o}")
            if br.conv.kh not in (1, 3) or br.conv.kh != br.conv.kw:
                raise ConfigError(f"conv branch kernel must be 1x1 or 3x3, got {br.conv.kh}x{br.conv.kw}")
        elif isinstance(br, ExpandSqueezeBranch):
            if br.expand.in_ch != c or br.squeeze.out_ch != o:
                raise DimensionError("expand/squeeze channel counts do not match block")
            if br.expand.out_ch != br.squeeze.in_ch:
                raise DimensionError("expand output must feed squeeze input")
            if (br.expand.kh, br.expand.kw) != (1, 1) or (br.squeeze.kh, br.squeeze.kw) != (3, 3):
                raise ConfigError("expand must be 1x1 and squeeze 3x3")
        elif isinstance(br, ScaledFilterBranch):
            get_filter(br.filter_name)
            if (br.pre.in_ch, br.pre.out_ch) != (c, o):
                raise DimensionError(f"scaled-filter pre-conv maps {br.pre.in_ch}->{br.pre.out_ch}, expected {c}->{o}")
            if (br.pre.kh, br.pre.kw) != (1, 1):
                raise ConfigError("scaled-filter pre-conv must be 1x1")
        else:
            raise ConfigError(f"unknown branch object {type(br).__name__}")

    def kinds(self):
        return [br.kind for br in self.branches]


# ---------------------------------------------------------------------------
# merge operations
# ---------------------------------------------------------------------------

def embed_kernel(src: ConvParams, target_size) -> ConvParams:
    """Zero-extend a small odd kernel to ``target_size``, centred; keep the bias.

    The result uses same-style padding for its (odd) target size.
    """
    th, tw = int(target_size[0]), int(target_size[1])
    if th % 2 == 0 or tw % 2 == 0:
        raise ConfigError(f"target kernel sides must be odd, got {th}x{tw}")
    if src.kh > th or src.kw > tw:
        raise DimensionError(f"cannot embed {src.kh}x{src.kw} kernel into {th}x{tw}")
    w = np.zeros((src.out_ch, src.in_ch, th, tw), dtype=np.float32)
    oy, ox = (th - src.kh) // 2, (tw - src.kw) // 2
    w[:, :, oy:oy + src.kh, ox:ox + src.kw] = src.weight
    return ConvParams(w, np.array(src.bias, dtype=np.float32, copy=True), (th // 2, tw // 2))


def identity_as_conv(channels: int) -> ConvParams:
    """The shortcut expressed as a pointwise conv with an identity channel map."""
    if channels < 1:
        raise ConfigError("channel count must be >= 1")
    w = np.eye(channels, dtype=np.float32).reshape(channels, channels, 1, 1)
    return ConvParams(w, np.zeros(channels, dtype=np.float32), (0, 0))


def merge_sequential(first: ConvParams, second: ConvParams) -> ConvParams:
    """Fold a pointwise conv followed by a KxK conv into one KxK conv.

    The merged kernel contracts the second weight with the pointwise channel
    map; the merged bias routes the first bias through every tap of the second
    kernel. Arithmetic runs in float64 and is rounded back to float32.
    """
    if (first.kh, first.kw) != (1, 1):
        raise UsageError("only pointwise-first sequences can be merged")
    if second.in_ch != first.out_ch:
        raise DimensionError(f"second conv expects {second.in_ch} channels, first produces {first.out_ch}")
    w1 = np.asarray(first.weight, dtype=np.float64)[:, :, 0, 0]      # (D, C)
    b1 = np.asarray(first.bias, dtype=np.float64)
    w2 = np.asarray(second.weight, dtype=np.float64)                 # (O, D, kh, kw)
    b2 = np.asarray(second.bias, dtype=np.float64)
    wm = np.einsum("odij,dc->ocij", w2, w1)
    bm = np.einsum("odij,d->o", w2, b1) + b2
    return ConvParams(wm.astype(np.float32), bm.astype(np.float32), (second.kh // 2, second.kw // 2))


def merge_scaled_filter(pre: ConvParams, filter_kind: str, scale, bias2) -> ConvParams:
    """Fold a pointwise conv plus a scaled fixed depthwise filter into one conv.

    The depthwise filter is materialised as a full (O,O,3,3) kernel whose
    diagonal slots hold scale[o] * F, then merged like any sequence.
    """
    base = get_filter(filter_kind)
    scale = np.asarray(scale, dtype=np.float32)
    bias2 = np.asarray(bias2, dtype=np.float32)
    if scale.shape != (pre.out_ch,) or bias2.shape != (pre.out_ch,):
        raise DimensionError(f"scale/bias must have shape ({pre.out_ch},)")
    fixed = ConvParams(tops.diag_filter(scale, base), bias2, (0, 0))
    return merge_sequential(pre, fixed)


def merge_branch(br, in_ch: int, out_ch: int) -> ConvParams:
    """Reparameterize one branch into an equivalent 3x3 same-padding conv."""
    if isinstance(br, ConvBranch):
        return embed_kernel(br.conv, (3, 3))
    if isinstance(br, IdentityBranch):
        return embed_kernel(identity_as_conv(in_ch), (3, 3))
    if isinstance(br, ExpandSqueezeBranch):
        return merge_sequential(br.expand, br.squeeze)
    if isinstance(br, ScaledFilterBranch):
        return merge_scaled_filter(br.pre, br.filter_name, br.scale, br.bias)
    raise ConfigError(f"unknown branch object {type(br).__name__}")


def merge_edbb(p: EdbbParams) -> ConvParams:
    """Sum all reparameterized branches into the single deployment conv."""
    if not p.branches:
        raise ConfigError("block has no branches")
    w = np.zeros((p.out_ch, p.in_ch, 3, 3), dtype=np.float64)
    b = np.zeros(p.out_ch, dtype=np.float64)
    for br in p.branches:
        merged = merge_branch(br, p.in_ch, p.out_ch)
        w += merged.weight
        b += merged.bias
    return ConvParams(w.astype(np.float32), b.astype(np.float32), (1, 1))


# ---------------------------------------------------------------------------
# training-form forward
# ---------------------------------------------------------------------------

def edbb_forward(x, p: EdbbParams, ops=tops):
    """Sum-of-branches forward; `ops` selects eager tensors or taped nodes."""
    parts = []
    for br in p.branches:
        if isinstance(br, ConvBranch):
            parts.append(ops.conv2d(x, br.conv))
        elif isinstance(br, IdentityBranch):
            parts.append(x)
        elif isinstance(br, ExpandSqueezeBranch):
            parts.append(ops.conv2d(ops.conv2d(x, br.expand), br.squeeze))
        elif isinstance(br, ScaledFilterBranch):
            inner = ops.conv2d(x, br.pre)
            fixed = ConvParams(ops.diag_filter(br.scale, get_filter(br.filter_name)), br.bias, (0, 0))
            parts.append(ops.conv2d(inner, fixed))
        else:
            raise ConfigError(f"unknown branch object {type(br).__name__}")
    return reduce(ops.add, parts)


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------

def init_conv(rng, out_ch, in_ch, k, padding=None) -> ConvParams:
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero bias."""
    bound = 1.0 / np.sqrt(in_ch * k * k)
    w = rng.uniform(-bound, bound, size=(out_ch, in_ch, k, k)).astype(np.float32)
    if padding is None:
        padding = (k // 2, k // 2)
    return ConvParams(w, np.zeros(out_ch, dtype=np.float32), padding)


def make_branch(kind: str, in_ch: int, out_ch: int, rng) -> object:
    if kind == "conv3x3":
        return ConvBranch(init_conv(rng, out_ch, in_ch, 3))
    if kind == "conv1x1":
        return ConvBranch(init_conv(rng, out_ch, in_ch, 1, (0, 0)))
    if kind == "identity":
        return IdentityBranch()
    if kind == "expand_squeeze":
        mid = 2 * in_ch
        return ExpandSqueezeBranch(
            expand=init_conv(rng, mid, in_ch, 1, (1, 1)),
            squeeze=init_conv(rng, out_ch, mid, 3, (0, 0)),
        )
    if kind.startswith("scaled_"):
        name = kind[len("scaled_"):]
        get_filter(name)
        return ScaledFilterBranch(
            pre=init_conv(rng, out_ch, in_ch, 1, (1, 1)),
            filter_name=name,
            scale=np.ones(out_ch, dtype=np.float32),
            bias=np.zeros(out_ch, dtype=np.float32),
        )
    raise ConfigError(f"unknown branch kind {kind!r}")


def make_edbb(in_ch: int, out_ch: int, rng, kinds=CANONICAL_BRANCHES) -> EdbbParams:
    """Build a block with the given branch set; identity dropped when C != O."""
    chosen = [k for k in kinds if not (k == "identity" and in_ch != out_ch)]
    return EdbbParams(in_ch, out_ch, tuple(make_branch(k, in_ch, out_ch, rng) for k in chosen))


# ---------------------------------------------------------------------------
# named-tensor flattening (weights files, optimizer state)
# ---------------------------------------------------------------------------

def edbb_tensor_items(prefix: str, p: EdbbParams):
    """Yield (name, leaf) pairs for every trainable array in the block."""
    for i, br in enumerate(p.branches):
        tag = f"{prefix}.b{i}_{br.kind}"
        if isinstance(br, ConvBranch):
            yield f"{tag}.weight", br.conv.weight
            yield f"{tag}.bias", br.conv.bias
        elif isinstance(br, ExpandSqueezeBranch):
            yield f"{tag}.expand.weight", br.expand.weight
            yield f"{tag}.expand.bias", br.expand.bias
            yield f"{tag}.squeeze.weight", br.squeeze.weight
            yield f"{tag}.squeeze.bias", br.squeeze.bias
        elif isinstance(br, ScaledFilterBranch):
            yield f"{tag}.pre.weight", br.pre.weight
            yield f"{tag}.pre.bias", br.pre.bias
            yield f"{tag}.scale", br.scale
            yield f"{tag}.bias2", br.bias
        # identity holds no parameters


def edbb_from_tensors(prefix: str, in_ch: int, out_ch: int, kinds, get) -> EdbbParams:
    """Rebuild a block from leaves fetched by name via ``get``."""
    branches = []
    for kind in kinds:
        if kind == "identity" and in_ch != out_ch:
            continue
        tag = f"{prefix}.b{len(branches)}_{kind}"
        if kind in ("conv3x3", "conv1x1"):
            pad = (1, 1) if kind == "conv3x3" else (0, 0)
            branches.append(ConvBranch(ConvParams(get(f"{tag}.weight"), get(f"{tag}.bias"), pad)))
        elif kind == "identity":
            branches.append(IdentityBranch())
        elif kind == "expand_squeeze":
            branches.append(ExpandSqueezeBranch(
                expand=ConvParams(get(f"{tag}.expand.weight"), get(f"{tag}.expand.bias"), (1, 1)),
                squeeze=ConvParams(get(f"{tag}.squeeze.weight"), get(f"{tag}.squeeze.bias"), (0, 0)),
            ))
        elif kind.startswith("scaled_"):
            branches.append(ScaledFilterBranch(
                pre=ConvParams(get(f"{tag}.pre.weight"), get(f"{tag}.pre.bias"), (1, 1)),
                filter_name=kind[len("scaled_"):],
                scale=get(f"{tag}.scale"),
                bias=get(f"{tag}.bias2"),
            ))
        else:
            raise ConfigError(f"unknown branch kind {kind!r}")
    return EdbbParams(in_ch, out_ch, tuple(branches))


def scaled_filter_scales(p: EdbbParams) -> dict:
    """Per-filter scale vectors of the block's scaled branches, keyed by filter name."""
    return {br.filter_name: np.asarray(br.scale) for br in p.branches
            if isinstance(br, ScaledFilterBranch)}
