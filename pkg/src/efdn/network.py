"""The four-block feature-distillation super-resolution network, its merged
deployment form, small plain toy stacks for ablations, and complexity counters.

One forward wiring serves both execution styles: every function takes an `ops`
namespace, either the eager tensor module or the taped autodiff module, so the
topology is written exactly once.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import tensor as tops
from .errors import ConfigError, DimensionError, UsageError
from .reparam import (
    CANONICAL_BRANCHES,
    EdbbParams,
    edbb_forward,
    edbb_from_tensors,
    edbb_tensor_items,
    init_conv,
    make_edbb,
    merge_edbb,
)
from .tensor import ConvParams

ACT_SLOPE = 0.05

ARCHS = ("efdn", "plain_fsrcnn_like", "plain_vdsr_like")
BLOCK_KINDS = ("edbb", "baseline_conv")
MODES = ("train", "deploy")


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture hyperparameters; everything needed to rebuild a network
    from a flat name->array mapping."""

    arch: str = "efdn"
    scale: int = 4
    width: int = 48
    blocks: int = 4
    distill: int = 0          # 0 means width // 2
    colors: int = 3
    block: str = "edbb"
    branches: tuple = CANONICAL_BRANCHES

    def __post_init__(self):
        object.__setattr__(self, "branches", tuple(self.branches))
        if self.arch not in ARCHS:
            raise ConfigError(f"unknown architecture {self.arch!r}")
        if self.block not in BLOCK_KINDS:
            raise ConfigError(f"unknown block kind {self.block!r}")
        if self.scale < 1:
            raise ConfigError("scale must be >= 1")
        if self.colors < 1 or self.width < 2 or self.blocks < 1:
            raise ConfigError("channel/block counts must be positive")
        if self.arch == "efdn":
            if self.blocks != 4:
                raise ConfigError("the distillation network topology is fixed at 4 blocks")
            if self.distill == 0 and self.width % 2:
                raise ConfigError("width must be even so the distilled width is half of it")

    @property
    def distill_ch(self):
        return self.distill if self.distill else self.width // 2


@dataclass(frozen=True)
class EfdbParams:
    """One distillation block: three 1x1 distill taps with residual refine
    stages, a final distilling stage, and a 1x1 fusion."""

    distill: tuple   # 3 pointwise convs, C -> dc
    refine: tuple    # 3 sites, C -> C (EdbbParams in train form, ConvParams merged)
    final: object    # site, C -> dc
    fuse: ConvParams  # pointwise, 4*dc -> C


@dataclass(frozen=True)
class NetworkParams:
    """A network in either form. For the distillation arch, ``blocks`` holds
    EfdbParams; for the plain toy archs it holds bare sites."""

    spec: NetworkSpec
    mode: str
    head: ConvParams
    blocks: tuple
    fusions: tuple
    tail: ConvParams

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")


def _site_forward(x, site, ops):
    if isinstance(site, EdbbParams):
        return edbb_forward(x, site, ops)
    return ops.conv2d(x, site)


def efdb_forward(x, p: EfdbParams, ops=tops):
    """Three distill/refine stages, one final distill, concat, 1x1 fuse, and a
    block-level residual. Activations never sit inside a mergeable site."""
    taps = []
    cur = x
    for dconv, rsite in zip(p.distill, p.refine):
        taps.append(ops.leaky_relu(ops.conv2d(cur, dconv), ACT_SLOPE))
        cur = ops.leaky_relu(ops.add(_site_forward(cur, rsite, ops), cur), ACT_SLOPE)
    taps.append(ops.leaky_relu(_site_forward(cur, p.final, ops), ACT_SLOPE))
    fused = ops.conv2d(ops.concat_channels(taps), p.fuse)
    return ops.add(fused, x)


def efdn_forward(lr, p: NetworkParams, ops=tops):
    """The fixed four-block wiring with three pairwise fusions and a global
    skip from the shallow features into the upsampler."""
    f0 = ops.conv2d(lr, p.head)
    f1 = efdb_forward(f0, p.blocks[0], ops)
    f2 = efdb_forward(f1, p.blocks[1], ops)
    g1 = ops.conv2d(ops.concat_channels([f1, f2]), p.fusions[0])
    f3 = efdb_forward(g1, p.blocks[2], ops)
    g2 = ops.conv2d(ops.concat_channels([f2, f3]), p.fusions[1])
    h4 = efdb_forward(g2, p.blocks[3], ops)
    g3 = ops.conv2d(ops.concat_channels([f2, h4]), p.fusions[2])
    f4 = ops.add(g3, f0)
    return ops.pixel_shuffle(ops.conv2d(f4, p.tail), p.spec.scale)


def toy_forward(x, p: NetworkParams, ops=tops):
    """Plain stacks: activated head, activated body sites, conv + shuffle tail.
    The vdsr-like variant adds a residual from the head features around the body."""
    f = ops.leaky_relu(ops.conv2d(x, p.head), ACT_SLOPE)
    cur = f
    for site in p.blocks:
        cur = ops.leaky_relu(_site_forward(cur, site, ops), ACT_SLOPE)
    if p.spec.arch == "plain_vdsr_like":
        cur = ops.add(cur, f)
    return ops.pixel_shuffle(ops.conv2d(cur, p.tail), p.spec.scale)


def network_forward(x, p: NetworkParams, ops=tops):
    if p.spec.arch == "efdn":
        return efdn_forward(x, p, ops)
    return toy_forward(x, p, ops)


# ---------------------------------------------------------------------------
# construction and merging
# ---------------------------------------------------------------------------

def _make_site(spec, in_ch, out_ch, rng):
    if spec.block == "edbb":
        return make_edbb(in_ch, out_ch, rng, spec.branches)
    return init_conv(rng, out_ch, in_ch, 3)


def init_network(spec: NetworkSpec, rng) -> NetworkParams:
    """Fresh train-form parameters; construction order fixes the RNG stream."""
    c, dc, cl, r = spec.width, spec.distill_ch, spec.colors, spec.scale
    head = init_conv(rng, c, cl, 3)
    if spec.arch == "efdn":
        blocks = []
        for _ in range(spec.blocks):
            blocks.append(EfdbParams(
                distill=tuple(init_conv(rng, dc, c, 1, (0, 0)) for _ in range(3)),
                refine=tuple(_make_site(spec, c, c, rng) for _ in range(3)),
                final=_make_site(spec, c, dc, rng),
                fuse=init_conv(rng, c, 4 * dc, 1, (0, 0)),
            ))
        fusions = tuple(init_conv(rng, c, 2 * c, 1, (0, 0)) for _ in range(3))
    else:
        blocks = [_make_site(spec, c, c, rng) for _ in range(spec.blocks)]
        fusions = ()
    tail = init_conv(rng, cl * r * r, c, 3)
    return NetworkParams(spec, "train", head, tuple(blocks), fusions, tail)


def _merge_site(site):
    return merge_edbb(site) if isinstance(site, EdbbParams) else site


def merge_network(p: NetworkParams) -> NetworkParams:
    """Collapse every branched site into its single 3x3 conv."""
    if p.mode == "deploy":
        raise UsageError("already merged: network is in deployment form")
    if p.spec.arch == "efdn":
        blocks = tuple(replace(b, refine=tuple(_merge_site(s) for s in b.refine),
                               final=_merge_site(b.final))
                       for b in p.blocks)
    else:
        blocks = tuple(_merge_site(s) for s in p.blocks)
    return replace(p, mode="deploy", blocks=blocks)


# ---------------------------------------------------------------------------
# complexity counters
# ---------------------------------------------------------------------------

def conv_param_count(p: ConvParams) -> int:
    return p.out_ch * p.in_ch * p.kh * p.kw + p.out_ch


def conv_madds(p: ConvParams, out_h: int, out_w: int) -> int:
    return p.out_ch * p.in_ch * p.kh * p.kw * out_h * out_w


def _deploy_convs(p: NetworkParams):
    yield p.head
    for blk in p.blocks:
        if isinstance(blk, EfdbParams):
            yield from blk.distill
            yield from blk.refine
            yield blk.final
            yield blk.fuse
        else:
            yield blk
    yield from p.fusions
    yield p.tail


def count_params(p: NetworkParams) -> int:
    """Deployment parameter count: O*I*kh*kw + O summed over all convs."""
    if p.mode != "deploy":
        raise UsageError("parameter counting is defined on the merged deployment form")
    return sum(conv_param_count(c) for c in _deploy_convs(p))


def count_madds(p: NetworkParams, out_h: int = 720, out_w: int = 1280) -> int:
    """Multiply-add count for a given output size. Every conv in these
    architectures runs at the low-resolution grid (out / scale) and preserves
    spatial dims, so each contributes O*I*kh*kw * (low-res area)."""
    if p.mode != "deploy":
        raise UsageError("multiply-add counting is defined on the merged deployment form")
    r = p.spec.scale
    if out_h % r or out_w % r:
        raise ConfigError(f"output size {out_w}x{out_h} is not divisible by scale {r}")
    lh, lw = out_h // r, out_w // r
    return sum(conv_madds(c, lh, lw) for c in _deploy_convs(p))


# ---------------------------------------------------------------------------
# toy builders
# ---------------------------------------------------------------------------

def build_toy_net(kind: str, block: str, rng, scale: int = 2, width: int = 0) -> NetworkParams:
    """Small plain stacks for desk-scale ablations: a handful of conv sites
    between an activated head and a shuffling tail."""
    if kind == "plain_fsrcnn_like":
        spec = NetworkSpec(arch=kind, scale=scale, width=width or 16, blocks=4, block=block)
    elif kind == "plain_vdsr_like":
        spec = NetworkSpec(arch=kind, scale=scale, width=width or 32, blocks=6, block=block)
    else:
        raise ConfigError(f"unknown toy network kind {kind!r}")
    return init_network(spec, rng)


# ---------------------------------------------------------------------------
# named-tensor flattening
# ---------------------------------------------------------------------------

def _site_items(prefix, site):
    if isinstance(site, EdbbParams):
        yield from edbb_tensor_items(prefix, site)
    else:
        yield f"{prefix}.weight", site.weight
        yield f"{prefix}.bias", site.bias


def network_tensor_items(p: NetworkParams):
    """Yield (name, array) for every leaf, in a fixed deterministic order."""
    yield "head.weight", p.head.weight
    yield "head.bias", p.head.bias
    for i, blk in enumerate(p.blocks):
        if isinstance(blk, EfdbParams):
            for j, d in enumerate(blk.distill):
                yield f"block{i}.distill{j}.weight", d.weight
                yield f"block{i}.distill{j}.bias", d.bias
            for j, s in enumerate(blk.refine):
                yield from _site_items(f"block{i}.refine{j}", s)
            yield from _site_items(f"block{i}.final", blk.final)
            yield f"block{i}.fuse.weight", blk.fuse.weight
            yield f"block{i}.fuse.bias", blk.fuse.bias
        else:
            yield from _site_items(f"block{i}", blk)
    for k, f in enumerate(p.fusions):
        yield f"fusion{k}.weight", f.weight
        yield f"fusion{k}.bias", f.bias
    yield "tail.weight", p.tail.weight
    yield "tail.bias", p.tail.bias


def _site_from(prefix, in_ch, out_ch, spec, mode, get):
    if mode == "train" and spec.block == "edbb":
        return edbb_from_tensors(prefix, in_ch, out_ch, spec.branches, get)
    return ConvParams(get(f"{prefix}.weight"), get(f"{prefix}.bias"), (1, 1))


def network_from_tensors(spec: NetworkSpec, mode: str, get) -> NetworkParams:
    """Rebuild a network from leaves fetched by name; inverse of
    network_tensor_items for a given spec and mode."""
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}")
    c, dc, cl, r = spec.width, spec.distill_ch, spec.colors, spec.scale
    head = ConvParams(get("head.weight"), get("head.bias"), (1, 1))
    if spec.arch == "efdn":
        blocks = []
        for i in range(spec.blocks):
            blocks.append(EfdbParams(
                distill=tuple(ConvParams(get(f"block{i}.distill{j}.weight"),
                                         get(f"block{i}.distill{j}.bias"), (0, 0))
                              for j in range(3)),
                refine=tuple(_site_from(f"block{i}.refine{j}", c, c, spec, mode, get)
                             for j in range(3)),
                final=_site_from(f"block{i}.final", c, dc, spec, mode, get),
                fuse=ConvParams(get(f"block{i}.fuse.weight"), get(f"block{i}.fuse.bias"), (0, 0)),
            ))
        fusions = tuple(ConvParams(get(f"fusion{k}.weight"), get(f"fusion{k}.bias"), (0, 0))
                        for k in range(3))
    else:
        blocks = [_site_from(f"block{i}", c, c, spec, mode, get) for i in range(spec.blocks)]
        fusions = ()
    tail = ConvParams(get("tail.weight"), get("tail.bias"), (1, 1))
    return NetworkParams(spec, mode, head, tuple(blocks), fusions, tail)


def last_block_scales(p: NetworkParams) -> dict:
    """Scale vectors of the deepest branched site, keyed by filter name; used
    to derive edge-loss weights from a trained model. Empty if no such site."""
    from .reparam import scaled_filter_scales
    sites = []
    for blk in p.blocks:
        if isinstance(blk, EfdbParams):
            sites.extend(s for s in (*blk.refine, blk.final) if isinstance(s, EdbbParams))
        elif isinstance(blk, EdbbParams):
            sites.append(blk)
    return scaled_filter_scales(sites[-1]) if sites else {}
