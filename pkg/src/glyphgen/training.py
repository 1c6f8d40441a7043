"""Training loops for both models and the quantitative evaluations.

Runs are deterministic under a fixed seed: data order, dropout masks and
reparameterization noise all come from one generator seeded per run.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Adam, Tensor, no_grad, zero_grads
from .checkpoint import save_config, save_tensors
from .codec import ONEHOT_WIDTH, stack_sequences
from .dataset import Corpus
from .raster import EmptyCorpus
from .svg_decoder import DecoderConfig, SvgDecoder, sequence_loss
from .svgpath import LABEL_CHARS
from .vae import ConvVae, VaeConfig, vae_loss_graph


class NonFiniteLoss(RuntimeError):
    def __init__(self, step: int, value: float) -> None:
        super().__init__(f"non-finite loss {value!r} at step {step}")
        self.step = step


class MissingClass(KeyError):
    pass


@dataclass(frozen=True)
class TrainRunConfig:
    epochs: int = 3
    vae_batch: int = 64
    decoder_batch: int = 128
    lr: float = 1e-3
    seed: int = 0
    precision: str = "float32"
    checkpoint_interval: int = 500
    adam_eps: float = 1e-6
    max_steps: int | None = None

    def __post_init__(self) -> None:
        for name in ("epochs", "vae_batch", "decoder_batch", "checkpoint_interval"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.lr <= 0.0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.precision not in ("float32", "float64"):
            raise ValueError(f"precision must be float32 or float64, got {self.precision!r}")
        if self.max_steps is not None and self.max_steps < 1:
            raise ValueError(f"max_steps must be >= 1, got {self.max_steps}")


def _apply_precision(params: dict[str, Tensor], precision: str) -> None:
    dtype = np.float64 if precision == "float64" else np.float32
    for p in params.values():
        p.data = p.data.astype(dtype)


def _batches(rng: np.random.Generator, count: int, batch: int, epochs: int):
    for _ in range(epochs):
        order = rng.permutation(count)
        for start in range(0, count, batch):
            yield order[start : start + batch]


def _write_csv(path: str, header: list[str], rows: list[tuple]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)


def train_vae(
    corpus: Corpus,
    run: TrainRunConfig,
    vae_config: VaeConfig | None = None,
    out_dir: str | None = None,
) -> tuple[ConvVae, list[dict[str, float]]]:
    """Adam on recon + beta * free-bits KL over shuffled raster batches."""
    if len(corpus) == 0:
        raise EmptyCorpus("cannot train on an empty corpus")
    vae_config = vae_config or VaeConfig()
    rng = np.random.default_rng(run.seed)
    model = ConvVae(vae_config, rng)
    _apply_precision(model.params, run.precision)
    opt = Adam(lr=run.lr, eps=run.adam_eps)
    images = corpus.rasters()
    labels = corpus.labels()
    history: list[dict[str, float]] = []
    step = 0
    for idx in _batches(rng, len(corpus), run.vae_batch, run.epochs):
        loss, parts = vae_loss_graph(model, images[idx], labels[idx], rng, mode="train")
        if not np.isfinite(parts["total"]):
            raise NonFiniteLoss(step, parts["total"])
        zero_grads(model.params.values())
        ad.backward(loss)
        opt.step(model.params)
        history.append({"step": step, **parts})
        if out_dir and (step + 1) % run.checkpoint_interval == 0:
            _save_vae(model, vae_config, run, out_dir)
        step += 1
        if run.max_steps is not None and step >= run.max_steps:
            break
    if out_dir:
        _save_vae(model, vae_config, run, out_dir)
        _write_csv(
            os.path.join(out_dir, "losses.csv"),
            ["step", "total", "recon", "kl_term", "bce_per_pixel"],
            [(h["step"], h["total"], h["recon"], h["kl_term"], h["bce_per_pixel"]) for h in history],
        )
    return model, history


def _save_vae(model: ConvVae, cfg: VaeConfig, run: TrainRunConfig, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    save_tensors(os.path.join(out_dir, "vae.ckpt"), model.state_dict())
    save_config(os.path.join(out_dir, "vae.cfg"), cfg)
    save_config(os.path.join(out_dir, "run.cfg"), run)


def encode_corpus_mu(vae: ConvVae, corpus: Corpus, batch: int = 256) -> np.ndarray:
    """Frozen-encoder mu for every entry, (N, z_dim) float32."""
    images = corpus.rasters()
    labels = corpus.labels()
    out = np.zeros((len(corpus), vae.config.z_dim), dtype=np.float32)
    with no_grad():
        for start in range(0, len(corpus), batch):
            sl = slice(start, start + batch)
            mu, _ = vae.encode_graph(Tensor(images[sl].astype(np.float32)), labels[sl])
            out[sl] = mu.data.astype(np.float32)
    return out


def train_decoder(
    corpus: Corpus,
    vae: ConvVae,
    run: TrainRunConfig,
    decoder_config: DecoderConfig | None = None,
    out_dir: str | None = None,
) -> tuple[SvgDecoder, list[dict[str, float]]]:
    """Teacher-forced sequence loss against frozen-encoder latents."""
    if len(corpus) == 0:
        raise EmptyCorpus("cannot train on an empty corpus")
    decoder_config = decoder_config or DecoderConfig(z_dim=vae.config.z_dim)
    if decoder_config.z_dim != vae.config.z_dim:
        raise ValueError(
            f"decoder z_dim {decoder_config.z_dim} != vae z_dim {vae.config.z_dim}"
        )
    rng = np.random.default_rng(run.seed)
    model = SvgDecoder(decoder_config, rng)
    _apply_precision(model.params, run.precision)
    opt = Adam(lr=run.lr, eps=run.adam_eps)
    z_all = encode_corpus_mu(vae, corpus)
    data, mask = stack_sequences([e.seq for e in corpus.entries])
    labels = corpus.labels()
    history: list[dict[str, float]] = []
    step = 0
    for idx in _batches(rng, len(corpus), run.decoder_batch, run.epochs):
        loss, parts = sequence_loss(
            model, z_all[idx], labels[idx], (data[idx], mask[idx]), rng=rng, mode="train"
        )
        if not np.isfinite(parts["total_per_step"]):
            raise NonFiniteLoss(step, parts["total_per_step"])
        zero_grads(model.params.values())
        ad.backward(loss)
        opt.step(model.params)
        history.append({"step": step, **parts})
        if out_dir and (step + 1) % run.checkpoint_interval == 0:
            _save_decoder(model, decoder_config, run, out_dir)
        step += 1
        if run.max_steps is not None and step >= run.max_steps:
            break
    if out_dir:
        _save_decoder(model, decoder_config, run, out_dir)
        _write_csv(
            os.path.join(out_dir, "losses.csv"),
            ["step", "total_per_step", "ce_per_step", "mdn_per_step"],
            [
                (h["step"], h["total_per_step"], h["ce_per_step"], h["mdn_per_step"])
                for h in history
            ],
        )
    return model, history


def _save_decoder(model: SvgDecoder, cfg: DecoderConfig, run: TrainRunConfig, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    save_tensors(os.path.join(out_dir, "decoder.ckpt"), model.state_dict())
    save_config(os.path.join(out_dir, "decoder.cfg"), cfg)


# -- evaluation -----------------------------------------------------------------


def command_accuracy(model: SvgDecoder, z: np.ndarray, labels, target) -> float:
    """Teacher-forced argmax accuracy over command kinds, masked steps only."""
    from .svg_decoder import step_input

    data, mask = target
    data = np.asarray(data)
    mask = np.asarray(mask)
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    z = np.asarray(z, dtype=np.float32)
    n, steps, _ = data.shape
    hits = 0
    total = 0
    with no_grad():
        state = model.init_state(Tensor(z))
        for t in range(steps):
            if not mask[:, t].any():
                break
            prev = np.zeros((n, data.shape[2]), dtype=np.float32) if t == 0 else data[:, t - 1].astype(np.float32)
            inp = step_input(Tensor(prev), labels, Tensor(z), model.config.num_classes)
            state, mdn = model.step(state, inp)
            pred = np.argmax(mdn.command_logits.data, axis=1)
            true = np.argmax(data[:, t, :ONEHOT_WIDTH], axis=1)
            hits += int(((pred == true) & mask[:, t]).sum())
            total += int(mask[:, t].sum())
    return hits / total


def per_example_nll(model: SvgDecoder, vae: ConvVae, corpus: Corpus) -> list[float]:
    """Teacher-forced per-step loss for each corpus entry, in entry order."""
    z_all = encode_corpus_mu(vae, corpus)
    out = []
    with no_grad():
        for i, entry in enumerate(corpus.entries):
            loss, _ = sequence_loss(model, z_all[i], entry.label, entry.seq)
            out.append(float(loss.data))
    return out


def nll_by_class(
    model: SvgDecoder, vae: ConvVae, corpus: Corpus, out_path: str | None = None
) -> dict[int, float]:
    """Per-class mean teacher-forced loss; absent classes are omitted."""
    losses = per_example_nll(model, vae, corpus)
    sums: dict[int, list[float]] = {}
    for entry, loss in zip(corpus.entries, losses):
        sums.setdefault(entry.label, []).append(loss)
    table = {label: float(np.mean(vals)) for label, vals in sorted(sums.items())}
    if out_path:
        _write_csv(
            out_path,
            ["label", "char", "mean_nll", "count"],
            [(lab, LABEL_CHARS[lab], nll, len(sums[lab])) for lab, nll in table.items()],
        )
    return table


def nll_vs_length(
    model: SvgDecoder, vae: ConvVae, corpus: Corpus, label: int, out_path: str | None = None
) -> list[tuple[int, float]]:
    """One (sequence length, per-step loss) point per test example of a class."""
    chosen = [(i, e) for i, e in enumerate(corpus.entries) if e.label == label]
    if not chosen:
        raise MissingClass(f"no examples with label {label} in corpus")
    losses = per_example_nll(model, vae, corpus)
    points = [(e.seq.length, losses[i]) for i, e in chosen]
    if out_path:
        _write_csv(out_path, ["length", "nll"], points)
    return points
