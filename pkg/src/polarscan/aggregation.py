"""Compress token grids into global place descriptors.

Two heads: first/second-moment pooling over the grid, and VLAD-style
soft-assigned residual aggregation against a codebook. Descriptors are
compared by L2 after unit normalization, so for unit vectors distance
ranking equals cosine ranking.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np

from .errors import DegenerateInputError, FormatError, ShapeError, ValidationError
from .features import FeatureMap, flatten_tokens

PDSC_MAGIC = b"PDSC"
PDSC_VERSION = 1
PVLD_MAGIC = b"PVLD"


@dataclass(frozen=True)
class GlobalDescriptor:
    values: np.ndarray  # (L,) float64
    frame_id: int
    normalized: bool = False

    def __post_init__(self):
        if self.values.ndim != 1:
            raise ValidationError("descriptor must be a flat vector")
        if self.normalized:
            norm = float(np.linalg.norm(self.values))
            if norm > 0 and abs(norm - 1.0) > 1e-6:
                raise ValidationError(f"normalized descriptor has norm {norm}")

    @property
    def dim(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class VladCodebook:
    centers: np.ndarray  # (K, c) float64
    alpha: float = 10.0  # soft-assignment sharpness

    def __post_init__(self):
        if self.centers.ndim != 2:
            raise ValidationError("centers must be (K, c)")
        if not (np.isfinite(self.alpha) and self.alpha > 0):
            raise ValidationError("alpha must be finite and positive")
        k = self.centers.shape[0]
        if k > 1:
            for i in range(k):
                for j in range(i + 1, k):
                    if np.array_equal(self.centers[i], self.centers[j]):
                        raise ValidationError(f"centers {i} and {j} are identical")

    @property
    def k(self) -> int:
        return self.centers.shape[0]


def mean_std_pool(fm: FeatureMap) -> GlobalDescriptor:
    """Stack per-channel mean and population std into a 2c vector."""
    grid = fm.data.reshape(fm.c, -1).astype(np.float64)
    mu = grid.mean(axis=1)
    sigma = grid.std(axis=1)  # population: divisor h*w
    return GlobalDescriptor(np.concatenate([mu, sigma]), frame_id=fm.frame_id)


def soft_assign(tokens: np.ndarray, cb: VladCodebook) -> np.ndarray:
    """(T, K) softmax weights exp(-alpha*d^2) / sum_j exp(-alpha*d^2)."""
    diff = tokens[:, None, :] - cb.centers[None, :, :]
    d2 = np.einsum("tkc,tkc->tk", diff, diff)
    logits = -cb.alpha * d2
    logits -= logits.max(axis=1, keepdims=True)  # stable softmax
    w = np.exp(logits)
    return w / w.sum(axis=1, keepdims=True)


def vlad_aggregate(
    fm: FeatureMap, cb: VladCodebook, intra_normalize: bool = True
) -> GlobalDescriptor:
    """Sum soft-assigned residuals per cluster and concatenate to K*c."""
    if cb.centers.shape[1] != fm.c:
        raise ShapeError(
            f"codebook dim {cb.centers.shape[1]} != feature channels {fm.c}"
        )
    tokens = flatten_tokens(fm).astype(np.float64)
    weights = soft_assign(tokens, cb)  # (T, K)
    # g_k = sum_t a_k(f_t) (f_t - c_k)
    agg = weights.T @ tokens  # (K, c)
    agg -= weights.sum(axis=0)[:, None] * cb.centers
    if intra_normalize:
        norms = np.linalg.norm(agg, axis=1)
        nz = norms > 0
        agg[nz] /= norms[nz, None]  # zero blocks stay zero
    return GlobalDescriptor(agg.reshape(-1), frame_id=fm.frame_id)


def l2_normalize(g: GlobalDescriptor) -> GlobalDescriptor:
    """Unit-normalize; the zero vector passes through unnormalized."""
    scale = float(np.max(np.abs(g.values))) if g.values.size else 0.0
    if scale == 0.0:
        return replace(g, normalized=False)
    # Pre-scaling keeps the squared norm out of subnormal territory.
    scaled = g.values / scale
    return replace(g, values=scaled / np.linalg.norm(scaled), normalized=True)


def init_codebook(
    token_sample: np.ndarray, k: int, seed: int, alpha: float = 10.0
) -> VladCodebook:
    """Seeded k-means++ plus Lloyd iterations; bit-reproducible per seed."""
    sample = np.asarray(token_sample, dtype=np.float64)
    if sample.ndim != 2:
        raise ValidationError("token sample must be (N, c)")
    if sample.shape[0] < k:
        raise DegenerateInputError(
            f"need at least {k} sample tokens, got {sample.shape[0]}"
        )
    rng = np.random.default_rng(seed)
    centers = _kmeans_pp(sample, k, rng)
    for _ in range(50):
        assign = np.argmin(_sq_dists(sample, centers), axis=1)
        new_centers = centers.copy()
        for ki in range(k):
            members = sample[assign == ki]
            if members.shape[0]:  # empty clusters keep their center
                new_centers[ki] = members.mean(axis=0)
        shift = np.linalg.norm(new_centers - centers, axis=1).max()
        centers = new_centers
        if shift <= 1e-6:
            break
    return VladCodebook(centers=centers, alpha=alpha)


def _sq_dists(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """(N, K) squared distances without materializing (N, K, c)."""
    d2 = (
        (points * points).sum(axis=1)[:, None]
        - 2.0 * points @ centers.T
        + (centers * centers).sum(axis=1)[None, :]
    )
    return np.maximum(d2, 0.0)


def _kmeans_pp(sample: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = sample.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = ((sample - sample[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            raise DegenerateInputError("fewer distinct tokens than clusters")
        probs = d2 / total
        chosen.append(int(rng.choice(n, p=probs)))
        d2 = np.minimum(d2, ((sample - sample[chosen[-1]]) ** 2).sum(axis=1))
    return sample[chosen].copy()


def save_descriptors(descriptors: list[GlobalDescriptor]) -> bytes:
    """Serialize a descriptor set to the PDSC container."""
    if not descriptors:
        raise DegenerateInputError("no descriptors to save")
    dim = descriptors[0].dim
    if any(d.dim != dim for d in descriptors):
        raise ShapeError("mixed descriptor dimensions")
    normalized = all(d.normalized for d in descriptors)
    parts = [
        PDSC_MAGIC,
        struct.pack("<IIIB", PDSC_VERSION, len(descriptors), dim, int(normalized)),
        np.asarray([d.frame_id for d in descriptors], dtype="<u8").tobytes(),
        np.stack([d.values for d in descriptors]).astype("<f4").tobytes(order="C"),
    ]
    return b"".join(parts)


def load_descriptors(blob: bytes) -> list[GlobalDescriptor]:
    header_size = 4 + 4 * 3 + 1
    if len(blob) < header_size or blob[:4] != PDSC_MAGIC:
        raise FormatError("bad PDSC magic")
    version, n, dim, normalized = struct.unpack_from("<IIIB", blob, 4)
    if version != PDSC_VERSION:
        raise FormatError(f"unsupported PDSC version {version}")
    expect = n * 8 + n * dim * 4
    if len(blob) - header_size != expect:
        raise FormatError(f"expected {expect} payload bytes, got {len(blob) - header_size}")
    frame_ids = np.frombuffer(blob, dtype="<u8", count=n, offset=header_size)
    mat = np.frombuffer(blob, dtype="<f4", count=n * dim, offset=header_size + n * 8)
    mat = mat.reshape(n, dim).astype(np.float64)
    if not np.all(np.isfinite(mat)):
        raise FormatError("non-finite descriptor value")
    return [
        GlobalDescriptor(mat[i], frame_id=int(frame_ids[i]), normalized=bool(normalized))
        for i in range(n)
    ]


def save_codebook(cb: VladCodebook) -> bytes:
    k, c = cb.centers.shape
    return (
        PVLD_MAGIC
        + struct.pack("<IIf", k, c, cb.alpha)
        + cb.centers.astype("<f4").tobytes(order="C")
    )


def load_codebook(blob: bytes) -> VladCodebook:
    header_size = 4 + 4 + 4 + 4
    if len(blob) < header_size or blob[:4] != PVLD_MAGIC:
        raise FormatError("bad PVLD magic")
    k, c, alpha = struct.unpack_from("<IIf", blob, 4)
    expect = k * c * 4
    if len(blob) - header_size != expect:
        raise FormatError(f"expected {expect} payload bytes, got {len(blob) - header_size}")
    centers = np.frombuffer(blob, dtype="<f4", count=k * c, offset=header_size)
    return VladCodebook(centers=centers.reshape(k, c).astype(np.float64), alpha=float(alpha))
