"""Class-conditioned convolutional VAE over 64x64 glyph rasters.

The encoder is a stack of Conv-CIN-ReLU blocks followed by a dense layer
whose 2*z_dim outputs split into [mu | log-variance].  The decoder mirrors it
with ConvT-CIN-ReLU blocks and a final Conv-Sigmoid.  Reconstruction is a
Bernoulli log-likelihood summed over pixels; the KL term applies a
per-dimension free-bits floor before the beta multiplier.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

IMAGE_SIZE = 64


class BadShape(ValueError):
    pass


@dataclass(frozen=True)
class LatentStyle:
    mu: np.ndarray  # (z_dim,)
    sigma: np.ndarray  # (z_dim,) positive

    def __post_init__(self) -> None:
        if self.mu.shape != self.sigma.shape:
            raise BadShape(f"mu {self.mu.shape} vs sigma {self.sigma.shape}")
        if np.any(self.sigma <= 0):
            raise ValueError("sigma must be positive")


@dataclass(frozen=True)
class VaeConfig:
    num_classes: int = 62
    z_dim: int = 32
    # (kernel, stride, out_channels) per encoder block; input is 64x64x1
    enc_blocks: tuple = ((5, 1, 32), (5, 2, 32), (5, 1, 64), (5, 2, 64), (4, 2, 64), (4, 2, 64))
    # (kernel, stride, out_channels) per decoder ConvT block, from the 4x4 seed
    dec_blocks: tuple = ((4, 2, 64), (4, 2, 64), (5, 1, 64), (5, 2, 64), (5, 1, 32), (5, 2, 32), (5, 1, 32))
    dec_out_kernel: int = 5
    kl_beta: float = 4.68
    free_bits_per_dim: float = 0.15
    logvar_clamp: float = 14.0

    def __post_init__(self) -> None:
        if self.z_dim < 1 or self.num_classes < 1:
            raise ValueError("z_dim and num_classes must be positive")

    @property
    def enc_spatial_out(self) -> int:
        n = IMAGE_SIZE
        for _, s, _ in self.enc_blocks:
            n = -(-n // s)
        return n

    @property
    def dec_spatial_in(self) -> int:
        n = IMAGE_SIZE
        for _, s, _ in self.dec_blocks:
            assert n % s == 0
            n //= s
        return n

    @classmethod
    def small(cls, z_dim: int = 8) -> "VaeConfig":
        return cls(
            z_dim=z_dim,
            enc_blocks=((5, 1, 8), (5, 2, 8), (5, 1, 16), (5, 2, 16), (4, 2, 16), (4, 2, 16)),
            dec_blocks=((4, 2, 16), (4, 2, 16), (5, 1, 16), (5, 2, 16), (5, 1, 8), (5, 2, 8), (5, 1, 8)),
        )


def _conv_block_params(name, k, cin, cout, num_classes, rng, params):
    params[f"{name}/kernel"] = ad.he_init((k, k, cin, cout), fan_in=k * k * cin, rng=rng)
    params[f"{name}/bias"] = Tensor(np.zeros(cout, dtype=np.float32), requires_grad=True)
    params[f"{name}/cin_scale"] = Tensor(np.ones((num_classes, cout), dtype=np.float32), requires_grad=True)
    params[f"{name}/cin_shift"] = Tensor(np.zeros((num_classes, cout), dtype=np.float32), requires_grad=True)


class ConvVae:
    """Encoder + decoder parameter container with graph-building forwards."""

    def __init__(self, config: VaeConfig, rng: np.random.Generator):
        self.config = config
        self.params: dict[str, Tensor] = {}
        c = 1
        for i, (k, _, cout) in enumerate(config.enc_blocks):
            _conv_block_params(f"enc/conv{i}", k, c, cout, config.num_classes, rng, self.params)
            c = cout
        flat = config.enc_spatial_out**2 * c
        self.params["enc/dense/w"] = ad.he_init((flat, 2 * config.z_dim), fan_in=flat, rng=rng)
        self.params["enc/dense/b"] = Tensor(np.zeros(2 * config.z_dim, dtype=np.float32), requires_grad=True)

        seed_h = config.dec_spatial_in
        # seed depth matches the first ConvT block's width (4x4x64 at the default config)
        seed_c = config.dec_blocks[0][2]
        self._seed_shape = (seed_h, seed_h, seed_c)
        flat_dec = seed_h * seed_h * seed_c
        self.params["dec/dense/w"] = ad.he_init((config.z_dim, flat_dec), fan_in=config.z_dim, rng=rng)
        self.params["dec/dense/b"] = Tensor(np.zeros(flat_dec, dtype=np.float32), requires_grad=True)
        c = seed_c
        for i, (k, _, cout) in enumerate(config.dec_blocks):
            # ConvT kernels are stored (kh, kw, c_out, c_in)
            self.params[f"dec/convt{i}/kernel"] = ad.he_init(
                (k, k, cout, c), fan_in=k * k * c, rng=rng
            )
            self.params[f"dec/convt{i}/bias"] = Tensor(np.zeros(cout, dtype=np.float32), requires_grad=True)
            self.params[f"dec/convt{i}/cin_scale"] = Tensor(
                np.ones((config.num_classes, cout), dtype=np.float32), requires_grad=True
            )
            self.params[f"dec/convt{i}/cin_shift"] = Tensor(
                np.zeros((config.num_classes, cout), dtype=np.float32), requires_grad=True
            )
            c = cout
        self.params["dec/out/kernel"] = ad.he_init(
            (config.dec_out_kernel, config.dec_out_kernel, c, 1),
            fan_in=config.dec_out_kernel**2 * c,
            rng=rng,
        )
        self.params["dec/out/bias"] = Tensor(np.zeros(1, dtype=np.float32), requires_grad=True)

    # -- parameter bookkeeping ----------------------------------------------

    def param_count(self, prefix: str = "") -> int:
        return sum(p.size for name, p in self.params.items() if name.startswith(prefix))

    def encoder_param_count(self) -> int:
        return self.param_count("enc/")

    def decoder_param_count(self) -> int:
        return self.param_count("dec/")

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

    def encode_graph(self, x: Tensor, labels: np.ndarray) -> tuple[Tensor, Tensor]:
        """x: (N, 64, 64, 1) in [0,1] -> (mu, logvar), each (N, z_dim)."""
        if x.ndim != 4 or x.shape[1] != IMAGE_SIZE or x.shape[2] != IMAGE_SIZE or x.shape[3] != 1:
            raise BadShape(f"expected (N, {IMAGE_SIZE}, {IMAGE_SIZE}, 1), got {x.shape}")
        h = x
        for i, (k, s, _) in enumerate(self.config.enc_blocks):
            name = f"enc/conv{i}"
            h = ad.conv2d(h, self.params[f"{name}/kernel"], stride=s)
            h = ad.add(h, self.params[f"{name}/bias"])
            h = ad.cond_instance_norm(
                h, labels, self.params[f"{name}/cin_scale"], self.params[f"{name}/cin_shift"]
            )
            h = ad.relu(h)
        h = ad.reshape(h, (h.shape[0], -1))
        out = ad.add(ad.matmul(h, self.params["enc/dense/w"]), self.params["enc/dense/b"])
        z = self.config.z_dim
        mu = out[:, :z]
        logvar = ad.clip(out[:, z:], -self.config.logvar_clamp, self.config.logvar_clamp)
        return mu, logvar

    def decode_graph(self, z: Tensor, labels: np.ndarray) -> Tensor:
        """z: (N, z_dim) -> Bernoulli means (N, 64, 64, 1)."""
        if z.ndim != 2 or z.shape[1] != self.config.z_dim:
            raise BadShape(f"expected (N, {self.config.z_dim}), got {z.shape}")
        h = ad.add(ad.matmul(z, self.params["dec/dense/w"]), self.params["dec/dense/b"])
        sh, sw, sc = self._seed_shape
        h = ad.reshape(h, (z.shape[0], sh, sw, sc))
        for i, (k, s, _) in enumerate(self.config.dec_blocks):
            name = f"dec/convt{i}"
            h = ad.conv_transpose2d(h, self.params[f"{name}/kernel"], stride=s)
            h = ad.add(h, self.params[f"{name}/bias"])
            h = ad.cond_instance_norm(
                h, labels, self.params[f"{name}/cin_scale"], self.params[f"{name}/cin_shift"]
            )
            h = ad.relu(h)
        h = ad.conv2d(h, self.params["dec/out/kernel"], stride=1)
        h = ad.add(h, self.params["dec/out/bias"])
        return ad.sigmoid(h)

    # -- numpy conveniences ---------------------------------------------------

    def encode(self, raster: np.ndarray, label: int) -> LatentStyle:
        x = np.asarray(raster, dtype=np.float32)
        if x.shape != (IMAGE_SIZE, IMAGE_SIZE):
            raise BadShape(f"expected ({IMAGE_SIZE}, {IMAGE_SIZE}) raster, got {x.shape}")
        with ad.no_grad():
            mu, logvar = self.encode_graph(
                Tensor(x[None, :, :, None]), np.array([label], dtype=np.int64)
            )
        sigma = np.exp(0.5 * logvar.data[0]).astype(np.float64)
        return LatentStyle(mu.data[0].astype(np.float64), sigma)

    def encode_batch(self, rasters: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        with ad.no_grad():
            mu, logvar = self.encode_graph(
                Tensor(np.asarray(rasters, dtype=np.float32)[..., None]
                       if np.asarray(rasters).ndim == 3 else np.asarray(rasters, dtype=np.float32)),
                np.asarray(labels, dtype=np.int64),
            )
        return mu.data.copy(), np.exp(0.5 * logvar.data)

    def decode_image(self, z: np.ndarray, label: int) -> np.ndarray:
        zz = np.asarray(z, dtype=np.float32)
        if zz.shape != (self.config.z_dim,):
            raise BadShape(f"expected ({self.config.z_dim},) z, got {zz.shape}")
        with ad.no_grad():
            p = self.decode_graph(Tensor(zz[None, :]), np.array([label], dtype=np.int64))
        return p.data[0, :, :, 0].copy()


def reparam_sample(latent: LatentStyle, rng: np.random.Generator | None = None, mode: str = "test") -> np.ndarray:
    if mode == "test":
        return latent.mu.copy()
    if mode != "train":
        raise ValueError(f"mode must be 'train' or 'test', got {mode!r}")
    if rng is None:
        raise ValueError("train mode needs an rng")
    return latent.mu + latent.sigma * rng.standard_normal(latent.mu.shape)


def recon_loss(pred: Tensor, target: np.ndarray) -> Tensor:
    """Negative Bernoulli log-likelihood, summed over pixels, mean over batch."""
    t = np.asarray(target, dtype=pred.data.dtype)
    if t.shape != pred.shape:
        raise BadShape(f"pred {pred.shape} vs target {t.shape}")
    p = ad.clip(pred, 1e-6, 1.0 - 1e-6)
    ll = ad.add(ad.mul(Tensor(t), ad.log(p)), ad.mul(Tensor(1.0 - t), ad.log(ad.sub(1.0, p))))
    per_example = ad.reduce_sum(ll, axis=tuple(range(1, pred.ndim)))
    return ad.neg(ad.reduce_mean(per_example))


def kl_per_dim_graph(mu: Tensor, logvar: Tensor) -> Tensor:
    """Batch-mean KL(N(mu, sigma) || N(0, 1)) per latent dimension."""
    kl = ad.mul(
        ad.sub(ad.add(ad.mul(mu, mu), ad.exp(logvar)), ad.add(1.0, logvar)),
        0.5,
    )
    return ad.reduce_mean(kl, axis=0)


def kl_free_bits_graph(mu: Tensor, logvar: Tensor, config: VaeConfig) -> Tensor:
    kl = kl_per_dim_graph(mu, logvar)
    return ad.reduce_sum(ad.maximum(kl, config.free_bits_per_dim))


def kl_free_bits(latent: LatentStyle, config: VaeConfig) -> float:
    """Free-bits KL term for one latent (numpy, float64)."""
    mu = latent.mu.astype(np.float64)
    s2 = latent.sigma.astype(np.float64) ** 2
    kl = 0.5 * (mu * mu + s2 - 1.0 - np.log(s2))
    return float(np.sum(np.maximum(config.free_bits_per_dim, kl)))


def vae_loss_graph(
    model: ConvVae,
    images: np.ndarray,
    labels: np.ndarray,
    rng: np.random.Generator | None,
    mode: str = "train",
) -> tuple[Tensor, dict[str, float]]:
    """Build the full loss graph for one batch; images (N, 64, 64, 1)."""
    dtype = model.params["enc/dense/w"].data.dtype
    x = Tensor(np.asarray(images, dtype=dtype))
    mu, logvar = model.encode_graph(x, labels)
    sigma = ad.exp(ad.mul(logvar, 0.5))
    if mode == "train":
        eps = rng.standard_normal((x.shape[0], model.config.z_dim)).astype(dtype)
        z = ad.add(mu, ad.mul(sigma, Tensor(eps)))
    else:
        z = mu
    pred = model.decode_graph(z, labels)
    recon = recon_loss(pred, x.data)
    kl_term = kl_free_bits_graph(mu, logvar, model.config)
    total = ad.add(recon, ad.mul(kl_term, model.config.kl_beta))
    parts = {
        "recon": float(recon.data),
        "kl_term": float(kl_term.data),
        "total": float(total.data),
        "bce_per_pixel": float(recon.data) / (IMAGE_SIZE * IMAGE_SIZE),
    }
    return total, parts
