"""Transformer encoders, reconstruction decoder, and the joint-embedding heads.

Everything here is sized for desk scale: a shared width for the image and
text branches (the grounding map multiplies image tokens by the text [cls]
vector, which requires matching widths), two pre-norm blocks per encoder and
a single-block decoder by default.
"""

from __future__ import annotations

import math

import numpy as np

from . import tensor as T
from .errors import DimensionError, InputError
from .patching import MaskPlan
from .tensor import Tensor

ATTN_MASK_VALUE = -1e30


def truncated_normal(rng: np.random.Generator, shape, std: float = 0.02) -> np.ndarray:
    """Normal(0, std) with resampling outside +-2 std."""
    x = rng.normal(0.0, std, size=shape)
    bad = np.abs(x) > 2.0 * std
    while bad.any():
        x[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(x) > 2.0 * std
    return x


def sinusoidal_table(n_positions: int, dim: int) -> np.ndarray:
    """Fixed sin/cos positional table, one row per position."""
    pos = np.arange(n_positions)[:, None]
    i = np.arange(dim // 2)[None, :]
    angle = pos / np.power(10000.0, 2.0 * i / dim)
    table = np.zeros((n_positions, dim))
    table[:, 0::2] = np.sin(angle)
    table[:, 1::2] = np.cos(angle)
    return table


class Linear:
    def __init__(self, name: str, in_dim: int, out_dim: int, rng, bias: bool = True):
        self.name = name
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.weight = Tensor(truncated_normal(rng, (in_dim, out_dim)), requires_grad=True)
        self.bias = Tensor(np.zeros(out_dim), requires_grad=True) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        lead = x.shape[:-1]
        if x.shape[-1] != self.in_dim:
            raise DimensionError(f"{self.name}: expected width {self.in_dim}, got {x.shape}")
        flat = T.reshape(x, (-1, self.in_dim)) if x.ndim != 2 else x
        out = T.matmul(flat, self.weight)
        if self.bias is not None:
            out = T.add(out, self.bias)
        if x.ndim != 2:
            out = T.reshape(out, (*lead, self.out_dim))
        return out

    def parameters(self):
        yield f"{self.name}.weight", self.weight
        if self.bias is not None:
            yield f"{self.name}.bias", self.bias


class LayerNorm:
    def __init__(self, name: str, dim: int):
        self.name = name
        self.gamma = Tensor(np.ones(dim), requires_grad=True)
        self.beta = Tensor(np.zeros(dim), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.gamma, self.beta)

    def parameters(self):
        yield f"{self.name}.gamma", self.gamma
        yield f"{self.name}.beta", self.beta


class MultiHeadAttention:
    def __init__(self, name: str, width: int, heads: int, rng):
        if width % heads != 0:
            raise DimensionError(f"{name}: width {width} not divisible by {heads} heads")
        self.heads = heads
        self.head_dim = width // heads
        self.width = width
        self.q = Linear(f"{name}.q", width, width, rng)
        self.k = Linear(f"{name}.k", width, width, rng)
        self.v = Linear(f"{name}.v", width, width, rng)
        self.o = Linear(f"{name}.o", width, width, rng)

    def __call__(self, x: Tensor, additive_mask: np.ndarray | None = None) -> Tensor:
        b, t, c = x.shape

        def split(h: Tensor) -> Tensor:
            return T.transpose(T.reshape(h, (b, t, self.heads, self.head_dim)), (0, 2, 1, 3))

        q, k, v = split(self.q(x)), split(self.k(x)), split(self.v(x))
        scores = T.mul(T.matmul(q, T.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(self.head_dim))
        if additive_mask is not None:
            scores = T.add(scores, Tensor(additive_mask))
        attn = T.softmax(scores, axis=-1)
        out = T.matmul(attn, v)
        out = T.reshape(T.transpose(out, (0, 2, 1, 3)), (b, t, c))
        return self.o(out)

    def parameters(self):
        for sub in (self.q, self.k, self.v, self.o):
            yield from sub.parameters()


class TransformerBlock:
    """Pre-norm block: x + attn(ln(x)), then x + mlp(ln(x)) with GELU."""

    def __init__(self, name: str, width: int, heads: int, rng, mlp_ratio: int = 4):
        self.ln1 = LayerNorm(f"{name}.ln1", width)
        self.attn = MultiHeadAttention(f"{name}.attn", width, heads, rng)
        self.ln2 = LayerNorm(f"{name}.ln2", width)
        self.fc1 = Linear(f"{name}.fc1", width, mlp_ratio * width, rng)
        self.fc2 = Linear(f"{name}.fc2", mlp_ratio * width, width, rng)

    def __call__(self, x: Tensor, additive_mask: np.ndarray | None = None) -> Tensor:
        x = T.add(x, self.attn(self.ln1(x), additive_mask))
        return T.add(x, self.fc2(T.gelu(self.fc1(self.ln2(x)))))

    def parameters(self):
        for sub in (self.ln1, self.attn, self.ln2, self.fc1, self.fc2):
            yield from sub.parameters()


class _PositionTable:
    """Sinusoidal (fixed) or learned positional embeddings."""

    def __init__(self, name: str, n_positions: int, dim: int, rng, learned: bool):
        self.name = name
        self.learned = learned
        if learned:
            self.table = Tensor(truncated_normal(rng, (n_positions, dim)), requires_grad=True)
        else:
            self.table = Tensor(sinusoidal_table(n_positions, dim))

    def rows(self, positions: np.ndarray) -> Tensor:
        if self.learned:
            return T.embedding(self.table, positions)
        return Tensor(self.table.data[positions])

    def parameters(self):
        if self.learned:
            yield f"{self.name}.table", self.table


class ImageEncoder:
    """Patch embedding + positional embedding + transformer blocks."""

    def __init__(
        self,
        patch_dim: int,
        width: int,
        depth: int,
        heads: int,
        max_patches: int,
        rng,
        learned_positions: bool = False,
        name: str = "image_encoder",
    ):
        self.patch_dim = patch_dim
        self.width = width
        self.embed = Linear(f"{name}.embed", patch_dim, width, rng)
        self.positions = _PositionTable(f"{name}.pos", max_patches, width, rng, learned_positions)
        self.blocks = [TransformerBlock(f"{name}.block{i}", width, heads, rng) for i in range(depth)]
        self.final_ln = LayerNorm(f"{name}.final_ln", width)

    def __call__(self, patches: np.ndarray, positions: np.ndarray) -> Tensor:
        patches = np.asarray(patches, dtype=np.float64)
        if patches.ndim != 3 or patches.shape[-1] != self.patch_dim:
            raise DimensionError(
                f"image encoder expects (B, T, {self.patch_dim}) patches, got {patches.shape}"
            )
        x = T.add(self.embed(Tensor(patches)), self.positions.rows(positions))
        for block in self.blocks:
            x = block(x)
        return self.final_ln(x)

    def parameters(self):
        yield from self.embed.parameters()
        yield from self.positions.parameters()
        for b in self.blocks:
            yield from b.parameters()
        yield from self.final_ln.parameters()


class ReconstructionDecoder:
    """Scatter encoded tokens to their slots, fill the rest with a mask token,
    and decode every slot to a high-resolution patch vector."""

    def __init__(
        self,
        width: int,
        depth: int,
        heads: int,
        n_total: int,
        out_dim: int,
        rng,
        learned_positions: bool = False,
        name: str = "decoder",
    ):
        self.width = width
        self.n_total = n_total
        self.mask_token = Tensor(truncated_normal(rng, (1, 1, width)), requires_grad=True)
        self.positions = _PositionTable(f"{name}.pos", n_total, width, rng, learned_positions)
        self.blocks = [TransformerBlock(f"{name}.block{i}", width, heads, rng) for i in range(depth)]
        self.final_ln = LayerNorm(f"{name}.final_ln", width)
        self.out_proj = Linear(f"{name}.out", width, out_dim, rng)
        self._name = name

    def __call__(self, tokens: Tensor, plans: list[MaskPlan]) -> Tensor:
        b, n_sampled, c = tokens.shape
        if len(plans) != b:
            raise DimensionError(f"decoder got {b} token rows but {len(plans)} mask plans")
        # slot i of instance b reads token j if plan.sampled[j] == i, else the mask token
        idx = np.full((b, self.n_total), n_sampled, dtype=np.int64)
        for row, plan in enumerate(plans):
            if plan.n_sampled != n_sampled or plan.n_total != self.n_total:
                raise DimensionError(
                    f"mask plan ({plan.n_sampled}/{plan.n_total}) does not match decoder "
                    f"({n_sampled}/{self.n_total})"
                )
            idx[row, plan.sampled] = np.arange(n_sampled)
        bank = T.concat([tokens, T.broadcast_to(self.mask_token, (b, 1, c))], axis=1)
        x = T.gather_axis1(bank, idx)
        pos = self.positions.rows(np.arange(self.n_total))
        x = T.add(x, T.reshape(pos, (1, self.n_total, c)))
        for block in self.blocks:
            x = block(x)
        return self.out_proj(self.final_ln(x))

    def parameters(self):
        yield f"{self._name}.mask_token", self.mask_token
        yield from self.positions.parameters()
        for b in self.blocks:
            yield from b.parameters()
        yield from self.final_ln.parameters()
        yield from self.out_proj.parameters()


class TextEncoder:
    """Token + positional embedding and transformer blocks with pad masking."""

    def __init__(
        self,
        vocab_size: int,
        width: int,
        depth: int,
        heads: int,
        max_len: int,
        pad_id: int,
        rng,
        learned_positions: bool = False,
        name: str = "text_encoder",
    ):
        self.vocab_size = vocab_size
        self.pad_id = pad_id
        self.max_len = max_len
        self._name = name
        self.token_table = Tensor(truncated_normal(rng, (vocab_size, width)), requires_grad=True)
        self.positions = _PositionTable(f"{name}.pos", max_len, width, rng, learned_positions)
        self.blocks = [TransformerBlock(f"{name}.block{i}", width, heads, rng) for i in range(depth)]
        self.final_ln = LayerNorm(f"{name}.final_ln", width)

    def __call__(self, ids: np.ndarray) -> Tensor:
        ids = np.asarray(ids, dtype=np.int64)
        if ids.ndim != 2:
            raise InputError(f"text encoder expects (B, L) ids, got shape {ids.shape}")
        if ids.min() < 0 or ids.max() >= self.vocab_size:
            raise InputError(
                f"token id out of range [0, {self.vocab_size}): min {ids.min()}, max {ids.max()}"
            )
        b, length = ids.shape
        pad = ids == self.pad_id
        additive = np.where(pad, ATTN_MASK_VALUE, 0.0)[:, None, None, :]
        pos = np.broadcast_to(np.arange(length), (b, length))
        x = T.add(T.embedding(self.token_table, ids), self.positions.rows(pos))
        for block in self.blocks:
            x = block(x, additive_mask=additive)
        return self.final_ln(x)

    def parameters(self):
        yield f"{self._name}.token_table", self.token_table
        yield from self.positions.parameters()
        for b in self.blocks:
            yield from b.parameters()
        yield from self.final_ln.parameters()


class ImportanceHead:
    """One learnable weight per patch position, scoring masked position maps.

    Zero-initialized so a fresh model scores every sampling pattern equally
    (and its grounding weight map starts uniform).  No bias: a bias would be
    absorbed by the softplus rescale and muddy the weight-map readout.
    """

    def __init__(self, n_positions: int, name: str = "importance"):
        self.n_positions = n_positions
        self._name = name
        self.weight = Tensor(np.zeros(n_positions), requires_grad=True)

    def scores(self, position_maps: np.ndarray) -> Tensor:
        maps = np.asarray(position_maps, dtype=np.float64)
        if maps.ndim != 2 or maps.shape[1] != self.n_positions:
            raise DimensionError(
                f"importance head of length {self.n_positions} got maps of shape {maps.shape}"
            )
        w = T.reshape(self.weight, (self.n_positions, 1))
        return T.reshape(T.matmul(Tensor(maps), w), (maps.shape[0],))

    def parameters(self):
        yield f"{self._name}.weight", self.weight


class MacoModel:
    """All learnable state: encoders, decoder, projections, importance head, tau."""

    def __init__(self, cfg, vocab_size: int, pad_id: int, seed: int):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xE0C0DE]))
        lr_patch_dim = (cfg.patch_size // cfg.downsample_ratio) ** 2
        hr_patch_dim = cfg.patch_size**2
        self.n_patches = cfg.n_patches
        self.image_encoder = ImageEncoder(
            lr_patch_dim, cfg.width, cfg.image_depth, cfg.heads, cfg.n_patches, rng,
            learned_positions=cfg.learned_positions,
        )
        self.decoder = ReconstructionDecoder(
            cfg.width, cfg.decoder_depth, cfg.heads, cfg.n_patches, hr_patch_dim, rng,
            learned_positions=cfg.learned_positions,
        )
        self.text_encoder = TextEncoder(
            vocab_size, cfg.width, cfg.text_depth, cfg.heads, cfg.max_text_len, pad_id, rng,
            learned_positions=cfg.learned_positions,
        )
        self.proj_image = Linear("proj_image", cfg.width, cfg.proj_dim, rng, bias=cfg.projection_bias)
        self.proj_text = Linear("proj_text", cfg.width, cfg.proj_dim, rng, bias=cfg.projection_bias)
        self.importance = ImportanceHead(cfg.n_patches)
        self.log_tau = Tensor(np.array(math.log(cfg.tau_init)), requires_grad=True)
        self.image_pooling = cfg.image_pooling

    def pool_image(self, image_tokens: Tensor) -> Tensor:
        if self.image_pooling == "max":
            return T.tmax(image_tokens, axis=1)
        return T.tmean(image_tokens, axis=1)

    def pool_text(self, text_tokens: Tensor) -> Tensor:
        return T.index_axis(text_tokens, 1, 0)  # the [cls] row

    def pool_and_project(self, image_tokens: Tensor, text_tokens: Tensor) -> tuple[Tensor, Tensor]:
        v = T.l2_normalize(self.proj_image(self.pool_image(image_tokens)))
        t = T.l2_normalize(self.proj_text(self.pool_text(text_tokens)))
        return v, t

    def tau(self) -> Tensor:
        return T.exp(self.log_tau)

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        params: list[tuple[str, Tensor]] = []
        for group in (self.image_encoder, self.decoder, self.text_encoder,
                      self.proj_image, self.proj_text, self.importance):
            params.extend(group.parameters())
        params.append(("log_tau", self.log_tau))
        return params

    def zero_grad(self) -> None:
        for _, p in self.named_parameters():
            p.zero_grad()
