"""Autoregressive stacked-LSTM decoder with a mixture-density head.

Each step consumes the previous command tuple, the class one-hot and the
style vector z, and emits logits over the 4 command kinds plus a k-component
diagonal-Gaussian mixture over the 6 argument slots.  Argument slots that a
command kind does not use are masked out of the loss and zeroed in samples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, he_init, lstm_cell, no_grad
from .codec import (
    ACTIVE_ARG_SLOTS,
    ARG_WIDTH,
    MAX_LEN,
    ONEHOT_WIDTH,
    TUPLE_WIDTH,
    SequenceTensor,
    decode_glyph,
)
from .raster import default_viewbox, glyph_points, render
from .svgpath import CommandKind, Glyph, to_absolute
from .vae import BadShape

HALF_LOG_TWO_PI = 0.5 * np.log(2.0 * np.pi)
LOG_SCALE_CLAMP = 7.0

# (kind, arg_slot) -> active, the codec convention in table form
ARG_MASK_TABLE = np.zeros((ONEHOT_WIDTH, ARG_WIDTH), dtype=np.float64)
for _kind, _slots in ACTIVE_ARG_SLOTS.items():
    for _s in _slots:
        ARG_MASK_TABLE[int(_kind), _s] = 1.0


class NonFinite(ValueError):
    pass


class AllSamplesInvalid(RuntimeError):
    pass


@dataclass(frozen=True)
class DecoderConfig:
    num_layers: int = 4
    hidden_dim: int = 1024
    mixture_count: int = 4
    keep_prob: float = 0.7
    ce_scale: float = 10.0
    max_len: int = MAX_LEN
    num_classes: int = 62
    z_dim: int = 32

    def __post_init__(self) -> None:
        if self.mixture_count < 1:
            raise ValueError(f"mixture_count must be >= 1, got {self.mixture_count}")
        if self.hidden_dim < 1:
            raise ValueError(f"hidden_dim must be >= 1, got {self.hidden_dim}")
        if not 0.0 < self.keep_prob <= 1.0:
            raise ValueError(f"keep_prob must be in (0, 1], got {self.keep_prob}")

    @property
    def input_dim(self) -> int:
        return TUPLE_WIDTH + self.num_classes + self.z_dim

    @property
    def head_dim(self) -> int:
        # command logits + mixture logits + per-component means and log scales
        return ONEHOT_WIDTH + self.mixture_count * (1 + 2 * ARG_WIDTH)

    @classmethod
    def small(cls) -> "DecoderConfig":
        return cls(num_layers=1, hidden_dim=128, mixture_count=3, z_dim=8)


@dataclass(frozen=True)
class MdnParams:
    """One step's distribution parameters, batched along the first axis."""

    command_logits: Tensor  # (N, 4)
    mixture_logits: Tensor  # (N, k)
    means: Tensor  # (N, k, 6)
    log_scales: Tensor  # (N, k, 6), clamped to [-7, 7]

    @property
    def weights(self) -> np.ndarray:
        e = np.exp(self.mixture_logits.data - self.mixture_logits.data.max(axis=-1, keepdims=True))
        return e / e.sum(axis=-1, keepdims=True)


class SvgDecoder:
    def __init__(self, config: DecoderConfig, rng: np.random.Generator) -> None:
        self.config = config
        self.params: dict[str, Tensor] = {}
        h = config.hidden_dim
        for layer in range(config.num_layers):
            for part in ("h", "c"):
                self.params[f"init/{part}{layer}/w"] = he_init((config.z_dim, h), config.z_dim, rng)
                self.params[f"init/{part}{layer}/b"] = Tensor(
                    np.zeros(h, dtype=np.float32), requires_grad=True
                )
            in_dim = config.input_dim if layer == 0 else h
            self.params[f"lstm{layer}/w"] = he_init((in_dim + h, 4 * h), in_dim + h, rng)
            self.params[f"lstm{layer}/b"] = Tensor(
                np.zeros(4 * h, dtype=np.float32), requires_grad=True
            )
        self.params["head/w"] = he_init((h, config.head_dim), h, rng)
        self.params["head/b"] = Tensor(np.zeros(config.head_dim, dtype=np.float32), requires_grad=True)

    def param_count(self, prefix: str = "") -> int:
        return sum(int(np.prod(p.shape)) for n, p in self.params.items() if n.startswith(prefix))

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.params.items()}

    def load_state_dict(self, tensors: dict[str, np.ndarray]) -> None:
        missing = set(self.params) - set(tensors)
        extra = set(tensors) - set(self.params)
        if missing or extra:
            raise KeyError(f"state mismatch: missing {sorted(missing)}, extra {sorted(extra)}")
        for name, arr in tensors.items():
            if self.params[name].shape != arr.shape:
                raise BadShape(f"{name}: {self.params[name].shape} vs {arr.shape}")
            self.params[name].data = arr.astype(np.float32)

    # -- graph forwards ------------------------------------------------------

    def init_state(self, z) -> list[tuple[Tensor, Tensor]]:
        """Map z to each layer's (h0, c0) through a learned tanh affine."""
        z = z if isinstance(z, Tensor) else Tensor(np.asarray(z))
        if z.ndim != 2 or z.shape[1] != self.config.z_dim:
            raise BadShape(f"expected (N, {self.config.z_dim}), got {z.shape}")
        state = []
        for layer in range(self.config.num_layers):
            h0 = ad.tanh(ad.add(ad.matmul(z, self.params[f"init/h{layer}/w"]),
                                self.params[f"init/h{layer}/b"]))
            c0 = ad.tanh(ad.add(ad.matmul(z, self.params[f"init/c{layer}/w"]),
                                self.params[f"init/c{layer}/b"]))
            state.append((h0, c0))
        return state

    def step(
        self,
        state: list[tuple[Tensor, Tensor]],
        step_input: Tensor,
        drop_masks: dict[str, np.ndarray] | None = None,
    ) -> tuple[list[tuple[Tensor, Tensor]], MdnParams]:
        """One autoregressive step; step_input is (N, input_dim)."""
        cfg = self.config
        if step_input.ndim != 2 or step_input.shape[1] != cfg.input_dim:
            raise BadShape(f"expected (N, {cfg.input_dim}), got {step_input.shape}")
        if len(state) != cfg.num_layers:
            raise BadShape(f"expected {cfg.num_layers} layer states, got {len(state)}")
        new_state = []
        x = step_input
        for layer in range(cfg.num_layers):
            h_prev, c_prev = state[layer]
            h_rec = h_prev
            if drop_masks is not None:
                h_rec = ad.dropout(h_prev, cfg.keep_prob, drop_masks[f"rec{layer}"])
            h_new, c_new = lstm_cell(
                x, h_rec, c_prev, self.params[f"lstm{layer}/w"], self.params[f"lstm{layer}/b"]
            )
            new_state.append((h_new, c_new))
            x = h_new
            if drop_masks is not None:
                x = ad.dropout(x, cfg.keep_prob, drop_masks[f"ff{layer}"])
        out = ad.add(ad.matmul(x, self.params["head/w"]), self.params["head/b"])
        n = out.shape[0]
        k = cfg.mixture_count
        logits = ad.slice_(out, (slice(None), slice(0, ONEHOT_WIDTH)))
        mix = ad.slice_(out, (slice(None), slice(ONEHOT_WIDTH, ONEHOT_WIDTH + k)))
        means = ad.reshape(
            ad.slice_(out, (slice(None), slice(ONEHOT_WIDTH + k, ONEHOT_WIDTH + k + k * ARG_WIDTH))),
            (n, k, ARG_WIDTH),
        )
        log_scales = ad.clip(
            ad.reshape(
                ad.slice_(out, (slice(None), slice(ONEHOT_WIDTH + k + k * ARG_WIDTH, cfg.head_dim))),
                (n, k, ARG_WIDTH),
            ),
            -LOG_SCALE_CLAMP,
            LOG_SCALE_CLAMP,
        )
        return new_state, MdnParams(logits, mix, means, log_scales)

    def make_drop_masks(self, rng: np.random.Generator, batch: int) -> dict[str, np.ndarray] | None:
        """Per-sequence dropout masks, shared across time steps."""
        cfg = self.config
        if cfg.keep_prob >= 1.0:
            return None
        masks = {}
        for layer in range(cfg.num_layers):
            for part in ("rec", "ff"):
                masks[f"{part}{layer}"] = ad.make_dropout_mask(
                    rng, (batch, cfg.hidden_dim), cfg.keep_prob
                )
        return masks


def step_input(prev_tuple, labels: np.ndarray, z, num_classes: int) -> Tensor:
    """Concatenate [prev command tuple | class one-hot | z] along axis 1."""
    prev = prev_tuple if isinstance(prev_tuple, Tensor) else Tensor(np.asarray(prev_tuple))
    zz = z if isinstance(z, Tensor) else Tensor(np.asarray(z))
    onehot = np.zeros((prev.shape[0], num_classes), dtype=prev.data.dtype)
    onehot[np.arange(prev.shape[0]), np.asarray(labels, dtype=np.int64)] = 1.0
    return ad.concat([prev, Tensor(onehot), zz], axis=1)


def mdn_nll(params: MdnParams, target_args, active_mask) -> Tensor:
    """Per-row negative log-likelihood of the active argument slots.

    target_args: (N, 6); active_mask: (N, 6) booleans.  All-false rows (Eos)
    contribute exactly 0 because the mixture weights sum to one.
    """
    t = np.asarray(target_args, dtype=np.float64)
    if t.ndim == 1:
        t = t[None, :]
    if not np.all(np.isfinite(t)):
        raise NonFinite("target_args contain non-finite values")
    mask = np.asarray(active_mask, dtype=params.means.data.dtype)
    if mask.ndim == 1:
        mask = mask[None, :]
    n, k = params.mixture_logits.shape
    target = Tensor(np.broadcast_to(t.astype(params.means.data.dtype)[:, None, :], (n, k, ARG_WIDTH)).copy())
    log_w = ad.sub(
        params.mixture_logits, ad.logsumexp(params.mixture_logits, axis=1, keepdims=True)
    )
    diff = ad.sub(target, params.means)
    inv_scale = ad.exp(ad.neg(params.log_scales))
    quad = ad.mul(ad.mul(ad.mul(diff, inv_scale), ad.mul(diff, inv_scale)), -0.5)
    log_norm = ad.sub(ad.sub(quad, params.log_scales), HALF_LOG_TWO_PI)
    masked = ad.mul(log_norm, Tensor(mask[:, None, :]))
    comp = ad.add(log_w, ad.reduce_sum(masked, axis=2))
    # all-inactive rows (Eos) are identically 0; mask away the fp round-off
    row_active = (mask.sum(axis=1) > 0).astype(mask.dtype)
    return ad.mul(ad.neg(ad.logsumexp(comp, axis=1)), Tensor(row_active))


def _command_ce(logits: Tensor, target_onehot: np.ndarray) -> Tensor:
    log_sm = ad.sub(logits, ad.logsumexp(logits, axis=1, keepdims=True))
    picked = ad.mul(log_sm, Tensor(target_onehot.astype(logits.data.dtype)))
    return ad.neg(ad.reduce_sum(picked, axis=1))


def _as_batch(target_seq) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(target_seq, SequenceTensor):
        return target_seq.data[None, :, :], target_seq.mask[None, :]
    data, mask = target_seq
    return np.asarray(data), np.asarray(mask)


def sequence_loss(
    model: SvgDecoder,
    z,
    labels,
    target_seq,
    rng: np.random.Generator | None = None,
    mode: str = "test",
) -> tuple[Tensor, dict[str, float]]:
    """Teacher-forced loss, mask-normalized over real steps.

    target_seq is a SequenceTensor or a (data (N,T,10), mask (N,T)) pair.
    Per step: ce_scale * cross-entropy over command kinds + MDN NLL over the
    active argument slots.  Step 0 feeds an all-zero previous tuple.
    """
    data, mask = _as_batch(target_seq)
    zz = z if isinstance(z, Tensor) else Tensor(np.asarray(z))
    if zz.ndim == 1:
        zz = ad.reshape(zz, (1, zz.shape[0]))
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    n, steps, _ = data.shape
    if zz.shape[0] != n or labels.shape[0] != n:
        raise BadShape(f"batch mismatch: data {data.shape}, z {zz.shape}, labels {labels.shape}")
    dtype = zz.data.dtype
    state = model.init_state(zz)
    drop_masks = model.make_drop_masks(rng, n) if (mode == "train" and rng is not None) else None
    kinds = np.argmax(data[:, :, :ONEHOT_WIDTH], axis=2)
    arg_masks = ARG_MASK_TABLE[kinds]  # (N, T, 6)
    total = None
    ce_sum = 0.0
    mdn_sum = 0.0
    for t in range(steps):
        if not mask[:, t].any():
            break
        prev = np.zeros((n, TUPLE_WIDTH), dtype=dtype) if t == 0 else data[:, t - 1].astype(dtype)
        inp = step_input(Tensor(prev), labels, zz, model.config.num_classes)
        state, mdn = model.step(state, inp, drop_masks)
        ce = _command_ce(mdn.command_logits, data[:, t, :ONEHOT_WIDTH])
        nll = mdn_nll(mdn, data[:, t, ONEHOT_WIDTH:], arg_masks[:, t])
        step_mask = Tensor(mask[:, t].astype(dtype))
        weighted = ad.mul(ad.add(ad.mul(ce, model.config.ce_scale), nll), step_mask)
        contrib = ad.reduce_sum(weighted)
        total = contrib if total is None else ad.add(total, contrib)
        ce_sum += float((ce.data * mask[:, t]).sum())
        mdn_sum += float((nll.data * mask[:, t]).sum())
    denom = float(mask.sum())
    loss = ad.mul(total, 1.0 / denom)
    parts = {
        "ce_per_step": ce_sum / denom,
        "mdn_per_step": mdn_sum / denom,
        "total_per_step": float(loss.data),
    }
    return loss, parts


def sequence_log_likelihood(model: SvgDecoder, z, label, seq: SequenceTensor) -> float:
    """Unscaled log p(sequence | z, label) under the model."""
    with no_grad():
        data, mask = seq.data[None], seq.mask[None]
        zz = np.asarray(z, dtype=np.float32)[None, :]
        state = model.init_state(zz)
        kinds = np.argmax(data[:, :, :ONEHOT_WIDTH], axis=2)
        arg_masks = ARG_MASK_TABLE[kinds]
        total = 0.0
        for t in range(seq.length):
            prev = np.zeros((1, TUPLE_WIDTH), dtype=np.float32) if t == 0 else data[:, t - 1]
            inp = step_input(Tensor(prev), [label], Tensor(zz), model.config.num_classes)
            state, mdn = model.step(state, inp)
            ce = _command_ce(mdn.command_logits, data[:, t, :ONEHOT_WIDTH])
            nll = mdn_nll(mdn, data[:, t, ONEHOT_WIDTH:], arg_masks[:, t])
            total -= float(ce.data[0]) + float(nll.data[0])
        return total


def _sample_categorical(rng: np.random.Generator, logits: np.ndarray, temperature: float) -> np.ndarray:
    scaled = logits.astype(np.float64) / temperature
    scaled -= scaled.max(axis=-1, keepdims=True)
    probs = np.exp(scaled)
    probs /= probs.sum(axis=-1, keepdims=True)
    cum = np.cumsum(probs, axis=-1)
    u = rng.random(logits.shape[:-1] + (1,))
    return np.minimum((u > cum).sum(axis=-1), logits.shape[-1] - 1)


def sample_batch(
    model: SvgDecoder,
    z: np.ndarray,
    labels: np.ndarray,
    rng: np.random.Generator,
    temperature: float = 1.0,
) -> list[SequenceTensor]:
    """Roll out one sequence per batch row; every row ends in Eos."""
    if temperature <= 0.0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    cfg = model.config
    z = np.asarray(z, dtype=np.float32)
    labels = np.asarray(labels, dtype=np.int64)
    n = z.shape[0]
    sqrt_t = np.sqrt(temperature)
    with no_grad():
        state = model.init_state(z)
        prev = np.zeros((n, TUPLE_WIDTH), dtype=np.float32)
        rows = np.zeros((n, cfg.max_len, TUPLE_WIDTH), dtype=np.float32)
        lengths = np.zeros(n, dtype=np.int64)
        done = np.zeros(n, dtype=bool)
        for t in range(cfg.max_len):
            inp = step_input(Tensor(prev), labels, Tensor(z), cfg.num_classes)
            state, mdn = model.step(state, inp)
            if t == cfg.max_len - 1:
                kinds = np.full(n, int(CommandKind.EOS))
            else:
                kinds = _sample_categorical(rng, mdn.command_logits.data, temperature)
            comps = _sample_categorical(rng, mdn.mixture_logits.data, temperature)
            noise = rng.standard_normal((n, ARG_WIDTH))
            means = mdn.means.data[np.arange(n), comps]
            scales = np.exp(mdn.log_scales.data[np.arange(n), comps])
            args = means + scales * sqrt_t * noise
            step_rows = np.zeros((n, TUPLE_WIDTH), dtype=np.float32)
            step_rows[np.arange(n), kinds] = 1.0
            step_rows[:, ONEHOT_WIDTH:] = args * ARG_MASK_TABLE[kinds]
            active = ~done
            rows[active, t] = step_rows[active]
            lengths[active] = t + 1
            done |= kinds == int(CommandKind.EOS)
            prev = step_rows
            if done.all():
                break
        out = []
        for i in range(n):
            mask = np.zeros(cfg.max_len, dtype=bool)
            mask[: lengths[i]] = True
            out.append(SequenceTensor(rows[i], int(lengths[i]), mask))
        return out


def sample_sequence(
    model: SvgDecoder,
    z,
    label: int,
    rng: np.random.Generator,
    temperature: float = 1.0,
) -> SequenceTensor:
    z = np.asarray(z, dtype=np.float32)
    return sample_batch(model, z[None, :], np.array([label]), rng, temperature)[0]


def rank_candidates(glyphs: list[Glyph], target: np.ndarray, viewbox=None) -> tuple[int, list[float]]:
    """Index of the glyph whose rendering is L2-closest to target (64x64).

    Glyphs that fail to render get distance inf; returns -1 if none render.
    """
    distances = []
    for glyph in glyphs:
        try:
            absolute = to_absolute(glyph)
            vb = viewbox if viewbox is not None else default_viewbox(glyph_points(absolute))
            pixels = render(absolute, vb).pixels
            distances.append(float(np.linalg.norm(pixels - target)))
        except (ValueError, ArithmeticError):
            distances.append(float("inf"))
    best = int(np.argmin(distances)) if distances else -1
    if distances and not np.isfinite(distances[best]):
        best = -1
    return best, distances


def best_of_n(
    model: SvgDecoder,
    vae,
    z,
    label: int,
    n: int = 10,
    rng: np.random.Generator | None = None,
    temperature: float = 1.0,
    viewbox=None,
) -> Glyph:
    """Draw n samples and keep the one closest to the image decoder's output.

    Falls back to the highest model log-likelihood when no sample renders.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = rng if rng is not None else np.random.default_rng(0)
    z = np.asarray(z, dtype=np.float32)
    seqs = sample_batch(model, np.tile(z, (n, 1)), np.full(n, label), rng, temperature)
    decoded: list[tuple[Glyph, SequenceTensor]] = []
    for seq in seqs:
        try:
            decoded.append((decode_glyph(seq, label), seq))
        except ValueError:
            continue
    if not decoded:
        raise AllSamplesInvalid(f"none of the {n} samples decoded to a glyph")
    target = vae.decode_image(z, label)
    best, _ = rank_candidates([g for g, _ in decoded], target, viewbox)
    if best >= 0:
        return decoded[best][0]
    scores = [sequence_log_likelihood(model, z, label, seq) for _, seq in decoded]
    return decoded[int(np.argmax(scores))][0]
