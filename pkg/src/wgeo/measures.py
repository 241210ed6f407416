"""Samplers for source/target measures and the on-disk point formats.

Point clouds are plain (n, d) float64 arrays. CSV files are headerless,
comma-separated, LF-terminated, with floats printed to 17 significant digits
so a write/read round trip is value-exact. Images are binary PPM (P6,
maxval 255) so a read/write round trip is bit-exact.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Gaussian",
    "Mixture",
    "Empirical",
    "ImagePalette",
    "MeasureSpec",
    "FormatError",
    "sample",
    "make_sampler",
    "load_csv",
    "write_csv",
    "load_ppm",
    "write_ppm",
    "atomic_write_bytes",
]


class FormatError(ValueError):
    """A data file does not match its declared format."""


def _atomic_write(path, data: bytes):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".wgeo-tmp-")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_bytes(path, data: bytes):
    """Write via a temp file + rename so failures never leave partial output."""
    _atomic_write(path, data)


@dataclass
class Gaussian:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float).reshape(-1)
        self.cov = np.asarray(self.cov, dtype=float)
        d = self.mean.shape[0]
        if self.cov.shape != (d, d):
            raise ValueError(f"covariance shape {self.cov.shape} does not match dim {d}")
        scale = max(1.0, float(np.abs(self.cov).max()))
        if np.abs(self.cov - self.cov.T).max() > 1e-10 * scale:
            raise ValueError("covariance must be symmetric")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def factor(self) -> np.ndarray:
        """Cholesky factor, falling back to an eigenvalue square root on the
        positive-semidefinite boundary. Raises for indefinite covariances."""
        try:
            return np.linalg.cholesky(self.cov)
        except np.linalg.LinAlgError:
            vals, vecs = np.linalg.eigh(self.cov)
            if vals.min() < -1e-10 * max(1.0, abs(vals.max())):
                raise ValueError("covariance is not positive semidefinite") from None
            return vecs @ np.diag(np.sqrt(np.clip(vals, 0.0, None)))


@dataclass
class Mixture:
    weights: np.ndarray
    components: list[Gaussian] = field(default_factory=list)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if len(self.components) != self.weights.shape[0] or not self.components:
            raise ValueError("need one weight per mixture component")
        if self.weights.min() < 0.0:
            raise ValueError("mixture weights must be nonnegative")
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError(f"mixture weights sum to {self.weights.sum()!r}, not 1")
        dims = {c.dim for c in self.components}
        if len(dims) != 1:
            raise ValueError("mixture components must share one dimension")

    @property
    def dim(self) -> int:
        return self.components[0].dim


@dataclass
class Empirical:
    path: str

    @property
    def dim(self) -> int:
        return load_csv(self.path).shape[1]


@dataclass
class ImagePalette:
    path: str

    @property
    def dim(self) -> int:
        return 3


MeasureSpec = Gaussian | Mixture | Empirical | ImagePalette


def make_sampler(spec: MeasureSpec):
    """Build a `(n, rng) -> (n, d)` sampler; file-backed specs are loaded once."""
    if isinstance(spec, Gaussian):
        factor = spec.factor()
        mean = spec.mean

        def draw(n, rng):
            return rng.standard_normal((n, mean.shape[0])) @ factor.T + mean

        return draw
    if isinstance(spec, Mixture):
        factors = [c.factor() for c in spec.components]
        means = [c.mean for c in spec.components]
        weights = spec.weights

        def draw(n, rng):
            idx = rng.choice(len(weights), size=n, p=weights)
            out = np.empty((n, spec.dim))
            for k in range(len(weights)):
                rows = idx == k
                count = int(rows.sum())
                if count:
                    out[rows] = rng.standard_normal((count, spec.dim)) @ factors[k].T + means[k]
            return out

        return draw
    if isinstance(spec, Empirical):
        data = load_csv(spec.path)
    elif isinstance(spec, ImagePalette):
        data, _, _ = load_ppm(spec.path)
    else:
        raise TypeError(f"unknown measure spec {type(spec).__name__}")

    def draw(n, rng):
        return data[rng.integers(0, data.shape[0], size=n)]

    return draw


def sample(spec: MeasureSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    if n < 1:
        raise ValueError("need at least one sample")
    return make_sampler(spec)(n, rng)


def load_csv(path) -> np.ndarray:
    rows = []
    width = None
    with open(path, "r", encoding="ascii") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            try:
                values = [float(s) for s in parts]
            except ValueError:
                raise FormatError(f"{path}:{lineno}: non-numeric value") from None
            if not all(np.isfinite(values)):
                raise FormatError(f"{path}:{lineno}: non-finite value")
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise FormatError(
                    f"{path}:{lineno}: expected {width} columns, got {len(values)}")
            rows.append(values)
    if not rows:
        raise FormatError(f"{path}: no data rows")
    return np.array(rows, dtype=float)


def write_csv(path, cloud) -> None:
    cloud = np.asarray(cloud, dtype=float)
    if cloud.ndim != 2 or cloud.shape[0] < 1:
        raise ValueError(f"point cloud must be (n, d), got shape {cloud.shape}")
    lines = [",".join(format(v, ".17g") for v in row) for row in cloud]
    _atomic_write(path, ("\n".join(lines) + "\n").encode("ascii"))


def _ppm_tokens(data: bytes, count: int):
    """First `count` whitespace-separated header tokens, honoring # comments.

    Returns the tokens and the offset just past the single whitespace byte
    that terminates the last one.
    """
    tokens = []
    i = 0
    while len(tokens) < count:
        while i < len(data) and data[i:i + 1].isspace():
            i += 1
        if i < len(data) and data[i:i + 1] == b"#":
            while i < len(data) and data[i] != 0x0A:
                i += 1
            continue
        start = i
        while i < len(data) and not data[i:i + 1].isspace():
            i += 1
        if start == i:
            raise FormatError("truncated PPM header")
        tokens.append(data[start:i])
    if i >= len(data):
        raise FormatError("truncated PPM header")
    return tokens, i + 1  # skip the single whitespace after the last token


def load_ppm(path) -> tuple[np.ndarray, int, int]:
    """Read a binary P6 image as an (w*h, 3) cloud in [0,1], row-major pixels."""
    with open(path, "rb") as handle:
        data = handle.read()
    try:
        tokens, offset = _ppm_tokens(data, 4)
    except FormatError as exc:
        raise FormatError(f"{path}: {exc}") from None
    if tokens[0] != b"P6":
        raise FormatError(f"{path}: expected magic P6, got {tokens[0]!r}")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise FormatError(f"{path}: non-numeric header field") from None
    if maxval != 255:
        raise FormatError(f"{path}: only maxval 255 is supported, got {maxval}")
    if width < 1 or height < 1:
        raise FormatError(f"{path}: bad image size {width}x{height}")
    need = width * height * 3
    pixels = data[offset:]
    if len(pixels) != need:
        raise FormatError(f"{path}: expected {need} pixel bytes, got {len(pixels)}")
    cloud = np.frombuffer(pixels, dtype=np.uint8).astype(float).reshape(-1, 3) / 255.0
    return cloud, width, height


def write_ppm(path, cloud, width: int, height: int) -> None:
    """Write an (w*h, 3) cloud in [0,1] as P6; values are clamped then rounded."""
    cloud = np.asarray(cloud, dtype=float)
    if cloud.ndim != 2 or cloud.shape[1] != 3:
        raise ValueError(f"image cloud must be (n, 3), got shape {cloud.shape}")
    if cloud.shape[0] != width * height:
        raise ValueError(
            f"cloud has {cloud.shape[0]} rows but the image needs {width * height}")
    levels = np.floor(np.clip(cloud, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    header = f"P6\n{width} {height}\n255\n".encode("ascii")
    _atomic_write(path, header + levels.tobytes())
