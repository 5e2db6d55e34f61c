"""Central finite-difference verification of tape gradients.

``finite_diff_check`` perturbs every coordinate of the input by ±h and
compares (f(x+h) - f(x-h)) / 2h against the gradient the tape produces.  The
module also keeps a registry of representative probes, one per differentiable
operation, so the whole op set can be swept in one call (``run_gradient_suite``).
"""

from __future__ import annotations

import zlib
from typing import Callable, Iterable

import numpy as np

from . import tensor as T
from .errors import OracleError
from .tensor import Tensor

DEFAULT_STEP = 1e-4
DEFAULT_TOLERANCE = 1e-5


def finite_diff_check(f: Callable[[Tensor], Tensor], x: Tensor, h: float = DEFAULT_STEP) -> float:
    """Max relative error between the tape gradient of ``f`` and central differences.

    The error is ``max_i |g_tape_i - g_fd_i|`` scaled by the largest gradient
    magnitude, so coordinates whose true derivative is zero do not divide by
    zero.  ``f`` must map a tensor to a scalar tensor and be deterministic.
    """
    x = Tensor(np.array(x.data, copy=True), requires_grad=True)
    out = f(x)
    if out.size != 1:
        raise OracleError(f"finite_diff_check needs a scalar function, got shape {out.shape}")
    if not np.isfinite(out.data).all():
        raise OracleError("finite_diff_check: function value is not finite")
    out.backward()
    tape_grad = x.grad.copy() if x.grad is not None else np.zeros_like(x.data)

    fd_grad = np.zeros_like(x.data)
    flat = x.data.reshape(-1)
    fd_flat = fd_grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        hi = float(f(Tensor(x.data)).data)
        flat[i] = orig - h
        lo = float(f(Tensor(x.data)).data)
        flat[i] = orig
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise OracleError(f"finite_diff_check: non-finite value at coordinate {i}")
        fd_flat[i] = (hi - lo) / (2.0 * h)

    scale = max(np.abs(fd_grad).max(), np.abs(tape_grad).max(), 1e-12)
    return float(np.abs(tape_grad - fd_grad).max() / scale)


def check_parameters(
    loss_fn: Callable[[], Tensor],
    params: Iterable[tuple[str, Tensor]],
    h: float = DEFAULT_STEP,
    max_coords: int | None = None,
    rng: np.random.Generator | None = None,
) -> dict[str, float]:
    """Finite-difference check of a closure's gradient w.r.t. named parameters.

    Checks every coordinate by default; ``max_coords`` subsamples per
    parameter (seeded) when the parameter is large.  Returns the max relative
    error per parameter name.
    """
    params = list(params)
    for _, p in params:
        # perturbation below mutates p.data through a flat view
        p.data = np.asarray(p.data, dtype=np.float64)
    out = loss_fn()
    if out.size != 1:
        raise OracleError(f"check_parameters needs a scalar loss, got shape {out.shape}")
    for _, p in params:
        p.zero_grad()
    out.backward()
    tape = {name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data)) for name, p in params}

    errors: dict[str, float] = {}
    for name, p in params:
        flat = p.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            gen = rng if rng is not None else np.random.default_rng(0)
            coords = gen.choice(flat.size, size=max_coords, replace=False)
        fd = np.zeros(len(coords))
        for j, i in enumerate(coords):
            orig = flat[i]
            flat[i] = orig + h
            hi = float(loss_fn().data)
            flat[i] = orig - h
            lo = float(loss_fn().data)
            flat[i] = orig
            if not (np.isfinite(hi) and np.isfinite(lo)):
                raise OracleError(f"check_parameters: non-finite loss perturbing {name}[{i}]")
            fd[j] = (hi - lo) / (2.0 * h)
        got = tape[name].reshape(-1)[coords]
        scale = max(np.abs(fd).max(), np.abs(got).max(), 1e-12)
        errors[name] = float(np.abs(got - fd).max() / scale)
    return errors


# -- probe registry -----------------------------------------------------------
#
# Each probe returns (fn, x): an op application and the tensor it is
# differentiated at.  Outputs are contracted to a scalar with a random
# weighting that is drawn once and frozen, so errors cannot cancel under a
# plain sum and repeated evaluations see the identical function.


def _probe(build):
    def make():
        rng = np.random.default_rng(zlib.crc32(build.__name__.encode()))
        fn, x = build(rng)
        out_shape = fn(Tensor(x.data)).shape
        w = Tensor(rng.standard_normal(out_shape))
        return (lambda t: T.tsum(T.mul(fn(t), w))), x

    return make


def op_probes() -> dict[str, Callable[[], tuple[Callable[[Tensor], Tensor], Tensor]]]:
    """One finite-difference probe per registered differentiable op."""
    probes: dict[str, Callable] = {}

    def register(name):
        def deco(build):
            probes[name] = _probe(build)
            build.__name__ = name
            return build

        return deco

    @register("add_broadcast")
    def _(rng):
        x = Tensor(rng.standard_normal((3, 1, 4)))
        other = Tensor(rng.standard_normal((3, 5, 4)))
        return lambda t: T.add(t, other), x

    @register("sub")
    def _(rng):
        x = Tensor(rng.standard_normal((4, 3)))
        other = Tensor(rng.standard_normal((4, 3)))
        return lambda t: T.sub(other, t), x

    @register("mul_broadcast")
    def _(rng):
        x = Tensor(rng.standard_normal((2, 5)))
        other = Tensor(rng.standard_normal((3, 2, 5)))
        return lambda t: T.mul(t, other), x

    @register("div")
    def _(rng):
        x = Tensor(rng.standard_normal((3, 4)))
        denom = Tensor(rng.uniform(0.5, 2.0, (3, 4)))
        return lambda t: T.div(t, denom), x

    @register("div_denominator")
    def _(rng):
        x = Tensor(rng.uniform(0.5, 2.0, (3, 4)))
        numer = Tensor(rng.standard_normal((3, 4)))
        return lambda t: T.div(numer, t), x

    @register("power")
    def _(rng):
        x = Tensor(rng.uniform(0.5, 2.0, (6,)))
        return lambda t: T.power(t, 1.7), x

    @register("exp")
    def _(rng):
        x = Tensor(rng.standard_normal((3, 3)))
        return lambda t: T.exp(t), x

    @register("log")
    def _(rng):
        x = Tensor(rng.uniform(0.2, 3.0, (3, 3)))
        return lambda t: T.log(t), x

    @register("softplus")
    def _(rng):
        x = Tensor(rng.standard_normal((8,)) * 3.0)
        return lambda t: T.softplus(t), x

    @register("gelu")
    def _(rng):
        x = Tensor(rng.standard_normal((8,)) * 2.0)
        return lambda t: T.gelu(t), x

    @register("matmul_left")
    def _(rng):
        x = Tensor(rng.standard_normal((3, 4)))
        other = Tensor(rng.standard_normal((4, 2)))
        return lambda t: T.matmul(t, other), x

    @register("matmul_right")
    def _(rng):
        x = Tensor(rng.standard_normal((4, 2)))
        other = Tensor(rng.standard_normal((3, 4)))
        return lambda t: T.matmul(other, t), x

    @register("matmul_batched")
    def _(rng):
        x = Tensor(rng.standard_normal((2, 3, 4)))
        other = Tensor(rng.standard_normal((2, 4, 3)))
        return lambda t: T.matmul(t, other), x

    @register("transpose")
    def _(rng):
        x = Tensor(rng.standard_normal((2, 3, 4)))
        return lambda t: T.transpose(t, (2, 0, 1)), x

    @register("reshape")
    def _(rng):
        x = Tensor(rng.standard_normal((3, 4)))
        return lambda t: T.reshape(t, (2, 6)), x

    @register("broadcast_to")
    def _(rng):
        x = Tensor(rng.standard_normal((1, 4)))
        return lambda t: T.broadcast_to(t, (3, 4)), x

    @register("concat")
    def _(rng):
        x = Tensor(rng.standard_normal((2, 3)))
        other = Tensor(rng.standard_normal((2, 2)))
        return lambda t: T.concat([t, other], axis=1), x

    @register("sum_axis")
    def _(rng):
        x = Tensor(rng.standard_normal((3, 4, 2)))
        return lambda t: T.tsum(t, axis=1), x

    @register("mean_axis")
    def _(rng):
        x = Tensor(rng.standard_normal((3, 4, 2)))
        return lambda t: T.tmean(t, axis=1, keepdims=True), x

    @register("max_axis")
    def _(rng):
        # well-separated values keep the argmax stable under ±h perturbation
        x = Tensor(np.linspace(-2.0, 2.0, 12).reshape(3, 4) * rng.uniform(0.9, 1.1))
        return lambda t: T.tmax(t, axis=1), x

    @register("index_axis")
    def _(rng):
        x = Tensor(rng.standard_normal((3, 4, 2)))
        return lambda t: T.index_axis(t, 1, 2), x

    @register("embedding")
    def _(rng):
        x = Tensor(rng.standard_normal((5, 3)))
        ids = np.array([[0, 2, 2], [4, 1, 0]])
        return lambda t: T.embedding(t, ids), x

    @register("gather_axis1")
    def _(rng):
        x = Tensor(rng.standard_normal((2, 5, 3)))
        idx = np.array([[0, 4, 4, 1], [2, 2, 3, 0]])
        return lambda t: T.gather_axis1(t, idx), x

    @register("softmax")
    def _(rng):
        x = Tensor(rng.standard_normal((3, 5)) * 2.0)
        return lambda t: T.softmax(t, temperature=0.7), x

    @register("log_softmax")
    def _(rng):
        x = Tensor(rng.standard_normal((3, 5)) * 2.0)
        return lambda t: T.log_softmax(t, temperature=1.3), x

    @register("layer_norm_input")
    def _(rng):
        x = Tensor(rng.standard_normal((4, 6)))
        gamma = Tensor(rng.uniform(0.5, 1.5, (6,)))
        beta = Tensor(rng.standard_normal((6,)))
        return lambda t: T.layer_norm(t, gamma, beta), x

    @register("layer_norm_gain")
    def _(rng):
        x = Tensor(rng.standard_normal((4, 6)))
        gamma = Tensor(rng.uniform(0.5, 1.5, (6,)))
        beta = Tensor(rng.standard_normal((6,)))
        return lambda t: T.layer_norm(x, t, beta), gamma

    @register("l2_normalize")
    def _(rng):
        x = Tensor(rng.standard_normal((3, 6)))
        return lambda t: T.l2_normalize(t), x

    @register("bilinear_upsample")
    def _(rng):
        x = Tensor(rng.standard_normal((3, 3)))
        return lambda t: T.bilinear_upsample(t, 7, 5), x

    @register("softmax_cross_entropy")
    def _(rng):
        x = Tensor(rng.standard_normal((4, 6)) * 2.0)
        targets = rng.integers(0, 6, size=4)
        onehot = np.zeros((4, 6))
        onehot[np.arange(4), targets] = 1.0
        hot = Tensor(onehot)

        def f(t):
            return T.mul(T.tmean(T.tsum(T.mul(T.log_softmax(t), hot), axis=-1)), -1.0)

        return f, x

    return probes


def run_gradient_suite(h: float = DEFAULT_STEP) -> dict[str, float]:
    """Run every registered probe; returns max relative error per op name."""
    return {name: finite_diff_check(*make(), h=h) for name, make in op_probes().items()}


def build_toy_objective(batch: int = 2, seed: int = 7):
    """A 2-instance end-to-end objective on a miniature model.

    Returns (loss_fn, named_parameters): the loss closure re-runs the full
    forward pass (reconstruction + weighted contrastive) on a fixed batch, so
    its gradient can be finite-difference checked parameter by parameter.
    """
    from .config import RunConfig
    from .datagen import SceneSpec, build_vocabulary, generate_corpus
    from .model import MacoModel
    from .train import build_batch, compute_losses

    cfg = RunConfig(
        image_side=16,
        patch_size=4,
        width=8,
        image_depth=1,
        text_depth=1,
        decoder_depth=1,
        heads=2,
        proj_dim=8,
        max_text_len=8,
        mask_ratio=0.5,
        batch_size=batch,
        seed=seed,
    ).validate()
    vocab = build_vocabulary()
    model = MacoModel(cfg, vocab_size=len(vocab), pad_id=vocab.pad_id, seed=seed)
    rng = np.random.default_rng(seed)
    # jitter away from the symmetric init (zero importance head, near-uniform
    # attention) where several true gradients vanish and the relative error
    # of a finite difference is meaningless
    for _, p in model.named_parameters():
        # np.array keeps 0-d parameters as mutable ndarrays
        p.data = np.array(p.data + rng.normal(0.0, 0.05, size=p.data.shape))
    # toy scenes are too small for the shape grammar; synthesize raw pairs
    side = cfg.image_side
    images = rng.uniform(0.0, 1.0, size=(batch, side, side))
    reports = ["There is a disc in the upper left region.",
               "There is a cross in the lower right region."][:batch]

    class _Raw:
        def __init__(self, image, report):
            self.image = image
            self.report = report

    samples = [_Raw(images[i], reports[i]) for i in range(batch)]
    inputs = build_batch(cfg, samples, np.random.default_rng(seed + 1), vocab)

    # the detached weighting of the second contrastive term is a constant of
    # the objective; pin it so finite differences check the gradient the
    # objective actually defines
    position_maps = inputs[4]
    raw = position_maps @ model.importance.weight.data
    frozen = np.logaddexp(0.0, raw)

    def loss_fn():
        return compute_losses(cfg, model, *inputs, frozen_detached=frozen)[0]

    return loss_fn, model.named_parameters()


def full_objective_check(
    h: float = DEFAULT_STEP, max_coords: int = 12, seed: int = 7
) -> float:
    """Finite-difference check of the combined objective on the toy model.

    Every parameter group is checked at up to ``max_coords`` seeded
    coordinates; returns the max relative error across groups.
    """
    loss_fn, params = build_toy_objective(seed=seed)
    errors = check_parameters(
        loss_fn, params, h=h, max_coords=max_coords, rng=np.random.default_rng(seed)
    )
    return max(errors.values())
