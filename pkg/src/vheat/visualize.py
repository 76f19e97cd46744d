"""Heat-source conduction images (one grayscale image per conduction time)."""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .dct import build_plan
from .hco import frequency_grid, hco_array

try:
    from PIL import Image
except ImportError:  # PNG output is optional
    Image = None


@dataclass
class ConductionFrame:
    t: float
    field: np.ndarray   # raw temperature, [M, N]
    image: np.ndarray   # uint8, normalised per image
    path: Optional[str] = None


def one_hot_source(M: int, N: int, source: tuple[int, int]) -> np.ndarray:
    x, y = source
    if not (0 <= x < N and 0 <= y < M):
        raise ValueError(f"heat source ({x},{y}) outside the {N}x{M} field")
    u = np.zeros((M, N))
    u[y, x] = 1.0
    return u


def to_uint8(field: np.ndarray, rel_tol: float = 1e-9) -> np.ndarray:
    lo, hi = float(field.min()), float(field.max())
    if hi - lo <= rel_tol * max(abs(hi), abs(lo), 1e-300):
        return np.full(field.shape, 128, dtype=np.uint8)
    return np.round((field - lo) / (hi - lo) * 255.0).astype(np.uint8)


def write_pgm(path, img: np.ndarray) -> None:
    img = np.ascontiguousarray(img, dtype=np.uint8)
    H, W = img.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (W, H))
        fh.write(img.tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValueError(f"{path} is not a binary PGM")
    W, H = int(parts[1]), int(parts[2])
    return np.frombuffer(parts[4][:W * H], dtype=np.uint8).reshape(H, W)


def conduct(source_field: np.ndarray, t: float, k=1.0) -> np.ndarray:
    """Conduct a [M, N] field for time ``t``.

    ``k`` is a scalar (uniform diffusivity) or an [M, N, C] diffusivity field;
    in the latter case the field is conducted in every channel and the
    channel mean is returned.
    """
    M, N = source_field.shape
    plan = build_plan(M, N)
    omega2 = frequency_grid(M, N).omega2
    if np.ndim(k) == 0:
        coeff = np.exp(-float(k) * omega2 * t)
        return hco_array(plan, coeff, source_field)
    k = np.asarray(k, dtype=np.float64)
    coeff = np.exp(-k * omega2[:, :, None] * t).transpose(2, 0, 1)
    u = np.broadcast_to(source_field, (k.shape[2], M, N))
    return hco_array(plan, coeff, u).mean(axis=0)


def model_diffusivity(model, stage: int = 0, layer: int = 0) -> np.ndarray:
    """The [M, N, C] diffusivity a trained layer predicts from its stage FVEs."""
    st = model.stages[stage]
    lay = st.layers[layer]
    if lay.k_mode == "fixed":
        M, N = _stage_extent(model, stage)
        return np.full((M, N, lay.C), lay.fixed_k)
    emb = st.fve.embeddings.data.astype(np.float64)
    return emb @ lay.k_proj.weight.data.astype(np.float64) + lay.k_proj.bias.data


def _stage_extent(model, stage: int) -> tuple[int, int]:
    H, W = model.extent
    s = 4 * 2 ** stage
    return H // s, W // s


def visualize_conduction(source: tuple[int, int], times: Sequence[float], out_dir=None, k=1.0,
                         extent: tuple[int, int] = (64, 64), png: bool = False) -> list[ConductionFrame]:
    """Write one image per time for a one-hot heat source.

    ``k`` is a scalar or an [M, N, C] diffusivity field (which fixes the extent).
    """
    if np.ndim(k) == 3:
        extent = np.shape(k)[:2]
    M, N = extent
    src = one_hot_source(M, N, source)
    frames = []
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
    for t in times:
        field = src.copy() if t == 0 else conduct(src, t, k)
        img = to_uint8(field)
        path = None
        if out_dir is not None:
            path = os.path.join(out_dir, f"conduction_t{t:g}.pgm")
            write_pgm(path, img)
            if png and Image is not None:
                Image.fromarray(img).save(path[:-4] + ".png")
        frames.append(ConductionFrame(float(t), field, img, path))
    return frames
