"""HTTP service over a frozen model bundle.

A bundle directory holds the VAE and decoder checkpoints plus corpus
metadata and named concept directions.  The server loads it once and treats
it as immutable; every request is stateless and replayable.  Responses carry
absolute-coordinate path strings in the corpus viewbox so browsers can
render them directly.
"""

from __future__ import annotations

import asyncio
import json
import os
from dataclasses import dataclass

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from .checkpoint import load_config, load_tensors, save_config, save_tensors
from .latent import (
    BadSteps,
    ConceptDirection,
    apply_concept,
    confidence,
    interpolate,
    style_z,
)
from .raster import Viewbox, render
from .svg_decoder import DecoderConfig, SvgDecoder, best_of_n
from .svgpath import Glyph, char_to_label, glyph_to_path, normalize, parse_path, to_absolute
from .vae import ConvVae, VaeConfig

DEFAULT_TIMEOUT_S = 30.0


@dataclass(frozen=True)
class ModelBundle:
    vae: ConvVae
    decoder: SvgDecoder
    viewbox: Viewbox
    rescale: float
    concepts: dict[str, np.ndarray]


def save_bundle(
    out_dir: str,
    vae: ConvVae,
    decoder: SvgDecoder,
    viewbox: Viewbox,
    rescale: float = 1.0,
    concepts: dict[str, np.ndarray] | None = None,
) -> None:
    os.makedirs(out_dir, exist_ok=True)
    save_tensors(os.path.join(out_dir, "vae.ckpt"), vae.state_dict())
    save_config(os.path.join(out_dir, "vae.cfg"), vae.config)
    save_tensors(os.path.join(out_dir, "decoder.ckpt"), decoder.state_dict())
    save_config(os.path.join(out_dir, "decoder.cfg"), decoder.config)
    meta = {
        "viewbox": [viewbox.min_x, viewbox.min_y, viewbox.size],
        "rescale": rescale,
        "concepts": {k: np.asarray(v, dtype=np.float64).tolist() for k, v in (concepts or {}).items()},
    }
    with open(os.path.join(out_dir, "bundle.json"), "w") as f:
        json.dump(meta, f, indent=2)


def load_bundle(bundle_dir: str) -> ModelBundle:
    vae = ConvVae(load_config(os.path.join(bundle_dir, "vae.cfg"), VaeConfig), np.random.default_rng(0))
    vae.load_state_dict(load_tensors(os.path.join(bundle_dir, "vae.ckpt")))
    decoder = SvgDecoder(
        load_config(os.path.join(bundle_dir, "decoder.cfg"), DecoderConfig), np.random.default_rng(0)
    )
    decoder.load_state_dict(load_tensors(os.path.join(bundle_dir, "decoder.ckpt")))
    with open(os.path.join(bundle_dir, "bundle.json")) as f:
        meta = json.load(f)
    return ModelBundle(
        vae=vae,
        decoder=decoder,
        viewbox=Viewbox(*meta["viewbox"]),
        rescale=float(meta["rescale"]),
        concepts={k: np.asarray(v, dtype=np.float64) for k, v in meta["concepts"].items()},
    )


# -- request bodies ---------------------------------------------------------------


class GlyphIn(BaseModel):
    svg: str
    label: str


class EncodeRequest(BaseModel):
    svg: str
    label: str


class PropagateRequest(BaseModel):
    z: list[float] | None = None
    glyphs: list[GlyphIn] | None = None
    targets: list[str] = []
    n: int = 10
    temperature: float = 1.0
    seed: int | None = None


class AnalogyRequest(BaseModel):
    z: list[float]
    concept: str
    alphas: list[float]
    label: str
    n: int = 10
    temperature: float = 1.0
    seed: int | None = None


class InterpolateRequest(BaseModel):
    z_a: list[float]
    z_b: list[float]
    steps: int
    label: str
    n: int = 10
    temperature: float = 1.0
    seed: int | None = None


# -- handlers ---------------------------------------------------------------------


def _bad_request(exc: Exception, status: int = 400) -> HTTPException:
    return HTTPException(status, detail={"error": type(exc).__name__, "detail": str(exc)})


def _label_of(char: str) -> int:
    try:
        return char_to_label(char)
    except KeyError as exc:
        raise HTTPException(422, detail={"error": "UnknownLabel", "detail": str(exc)})


def _parse_glyph(svg: str, char: str) -> tuple[Glyph, int]:
    label = _label_of(char)
    try:
        glyph = normalize(Glyph(label, parse_path(svg)))
    except ValueError as exc:
        raise _bad_request(exc)
    return glyph, label


def _check_z(values: list[float], z_dim: int) -> np.ndarray:
    z = np.asarray(values, dtype=np.float64)
    if z.shape != (z_dim,):
        raise HTTPException(
            400, detail={"error": "BadShape", "detail": f"z must have {z_dim} entries, got {z.shape}"}
        )
    if not np.all(np.isfinite(z)):
        raise HTTPException(400, detail={"error": "NonFinite", "detail": "z must be finite"})
    return z


def _svg_of(glyph: Glyph) -> str:
    return glyph_to_path(to_absolute(glyph))


def _decode_targets(
    bundle: ModelBundle,
    z: np.ndarray,
    labels: list[int],
    n: int,
    temperature: float,
    rng: np.random.Generator,
) -> tuple[list[str], list[float]]:
    svgs = []
    confidences = []
    for label in labels:
        glyph = best_of_n(
            bundle.decoder, bundle.vae, z, label, n=n, rng=rng,
            temperature=temperature, viewbox=bundle.viewbox,
        )
        svgs.append(_svg_of(glyph))
        raster = render(to_absolute(glyph), bundle.viewbox).pixels
        confidences.append(confidence(bundle.vae.encode(raster, label)))
    return svgs, confidences


def create_app(bundle: ModelBundle, timeout_s: float = DEFAULT_TIMEOUT_S) -> FastAPI:
    app = FastAPI(title="glyph style service")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    app.state.bundle = bundle
    app.state.timeout_s = timeout_s
    box = [bundle.viewbox.min_x, bundle.viewbox.min_y, bundle.viewbox.size]

    async def run(fn):
        loop = asyncio.get_running_loop()
        try:
            return await asyncio.wait_for(loop.run_in_executor(None, fn), timeout=app.state.timeout_s)
        except asyncio.TimeoutError:
            raise HTTPException(503, detail={"error": "Timeout", "detail": "computation timed out"})

    def rng_for(seed: int | None) -> np.random.Generator:
        return np.random.default_rng(seed) if seed is not None else np.random.default_rng()

    @app.get("/health")
    async def health():
        return {"status": "ok"}

    @app.get("/concepts")
    async def concepts():
        return {"concepts": sorted(bundle.concepts)}

    @app.post("/encode")
    async def encode(req: EncodeRequest):
        glyph, label = _parse_glyph(req.svg, req.label)

        def work():
            raster = render(to_absolute(glyph), bundle.viewbox).pixels
            latent = bundle.vae.encode(raster, label)
            return {"z": latent.mu.tolist(), "sigma2_mean": confidence(latent)}

        return await run(work)

    @app.post("/propagate")
    async def propagate_endpoint(req: PropagateRequest):
        if (req.z is None) == (req.glyphs is None):
            raise HTTPException(
                400, detail={"error": "BadRequest", "detail": "provide exactly one of z or glyphs"}
            )
        if req.n < 1:
            raise HTTPException(400, detail={"error": "BadRequest", "detail": "n must be >= 1"})
        targets = [_label_of(c) for c in req.targets]
        parsed = [_parse_glyph(g.svg, g.label) for g in req.glyphs] if req.glyphs else None

        def work():
            if parsed is not None:
                z = style_z(bundle.vae, parsed, viewbox=bundle.viewbox)
            else:
                z = _check_z(req.z, bundle.vae.config.z_dim)
            svgs, confidences = _decode_targets(
                bundle, z, targets, req.n, req.temperature, rng_for(req.seed)
            )
            return {"svgs": svgs, "confidences": confidences, "z": z.tolist(), "viewbox": box}

        return await run(work)

    @app.post("/analogy")
    async def analogy(req: AnalogyRequest):
        if req.concept not in bundle.concepts:
            raise HTTPException(
                404, detail={"error": "UnknownConcept", "detail": f"no concept {req.concept!r}"}
            )
        label = _label_of(req.label)
        z = _check_z(req.z, bundle.vae.config.z_dim)
        direction = ConceptDirection(req.concept, bundle.concepts[req.concept])

        def work():
            rng = rng_for(req.seed)
            svgs = []
            for z_alpha in apply_concept(z, direction, req.alphas):
                svgs.extend(
                    _decode_targets(bundle, z_alpha, [label], req.n, req.temperature, rng)[0]
                )
            return {"svgs": svgs, "viewbox": box}

        return await run(work)

    @app.post("/interpolate")
    async def interpolate_endpoint(req: InterpolateRequest):
        label = _label_of(req.label)
        z_a = _check_z(req.z_a, bundle.vae.config.z_dim)
        z_b = _check_z(req.z_b, bundle.vae.config.z_dim)
        try:
            points = interpolate(z_a, z_b, req.steps)
        except BadSteps as exc:
            raise _bad_request(exc)

        def work():
            rng = rng_for(req.seed)
            svgs = []
            for z_t in points:
                svgs.extend(_decode_targets(bundle, z_t, [label], req.n, req.temperature, rng)[0])
            return {"svgs": svgs, "viewbox": box}

        return await run(work)

    return app


def serve(bundle_dir: str, port: int = 8000, host: str = "127.0.0.1", timeout_s: float = DEFAULT_TIMEOUT_S) -> None:
    import uvicorn

    app = create_app(load_bundle(bundle_dir), timeout_s=timeout_s)
    uvicorn.run(app, host=host, port=port)
