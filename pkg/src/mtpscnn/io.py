"""Object directories on disk and binary model checkpoints.

Object directory layout::

    frame_000.png ...        8- or 16-bit RGB (or gray) frames, linear values
    light_directions.txt     one "x y z" (or "x y z r g b") row per frame
    light_intensities.txt    optional, 1 or 3 values per row
    mask.png                 foreground where the value exceeds half range
    normal.png               optional, normals encoded as (n + 1) / 2

Checkpoint layout (little endian)::

    b"MTPSCNN1" | u32 version | u32 n | n bytes of config JSON | u64 step | u32 count
    count x ( u32 n | n bytes of name | 5 x i64 shape | float32 values )
"""

from __future__ import annotations

import json
import logging
import os
import re
import struct
import tempfile
from pathlib import Path

import cv2
import numpy as np

from .dataset import DatasetSample
from .errors import CorruptCheckpoint, DimensionMismatch, IncompatibleCheckpoint, MissingData
from .geometry import NormalMap, decode_normal_rgb, dequantize, encode_normal_rgb, quantize
from .model import MTPSCNN, ModelConfig, parameter_shapes
from .nn.tensor import Parameter
from .render import LightSet

logger = logging.getLogger(__name__)

MAGIC = b"MTPSCNN1"
FORMAT_VERSION = 1
UNIT_TOLERANCE = 1e-9


# --- rasters -------------------------------------------------------------------


def read_image(path) -> np.ndarray:
    """Read an 8/16-bit raster as float64 ``(H, W, 3)`` RGB (gray is replicated) or ``(H, W)``."""
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise MissingData(f"cannot read image {path}")
    if raw.dtype not in (np.uint8, np.uint16):
        raise DimensionMismatch(f"{path}: unsupported pixel type {raw.dtype}")
    img = dequantize(raw)
    if img.ndim == 3:
        img = img[..., 2::-1] if img.shape[2] >= 3 else img[..., 0]
    return img


def write_image(path, values, bits: int = 16) -> None:
    """Write values in [0, 1] (``(H, W)`` or ``(H, W, 3)`` RGB) as a PNG."""
    data = quantize(values, bits)
    if data.ndim == 3:
        data = np.ascontiguousarray(data[..., ::-1])
    if not cv2.imwrite(str(path), data):
        raise OSError(f"failed to write {path}")


def _rgb(img: np.ndarray) -> np.ndarray:
    return np.repeat(img[..., None], 3, axis=2) if img.ndim == 2 else img


# --- object directories --------------------------------------------------------


def _read_rows(path: Path, widths) -> np.ndarray:
    rows = []
    for k, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        vals = [float(v) for v in line.replace(",", " ").split()]
        if len(vals) not in widths:
            raise DimensionMismatch(f"{path.name} line {k}: expected {widths} values, got {len(vals)}")
        rows.append(vals)
    if len({len(r) for r in rows}) > 1:
        raise DimensionMismatch(f"{path.name}: rows have differing lengths")
    return np.array(rows, dtype=np.float64)


def _frame_files(root: Path):
    frames = sorted(root.glob("frame_*.png"))
    if frames:
        return frames
    numbered = [p for p in root.glob("*.png") if re.fullmatch(r"\d+", p.stem)]
    return sorted(numbered, key=lambda p: int(p.stem))


def load_object_dir(path) -> DatasetSample:
    """Load one object directory into a :class:`DatasetSample`."""
    root = Path(path)
    if not root.is_dir():
        raise MissingData(f"no such directory: {root}")
    frames = _frame_files(root)
    if not frames:
        raise MissingData(f"{root}: no frame images")
    light_file = root / "light_directions.txt"
    if not light_file.is_file():
        raise MissingData(f"{root}: light_directions.txt is missing")
    mask_file = root / "mask.png"
    if not mask_file.is_file():
        raise MissingData(f"{root}: mask.png is missing")

    rows = _read_rows(light_file, (3, 6))
    dirs = rows[:, :3].copy()
    inline = rows[:, 3:] if rows.shape[1] == 6 else None
    if len(dirs) != len(frames):
        raise DimensionMismatch(f"{len(frames)} frames but {len(dirs)} light directions")
    norms = np.linalg.norm(dirs, axis=1)
    if np.any(norms <= 0):
        raise DimensionMismatch(f"{light_file.name}: zero-length light direction")
    off = np.abs(norms - 1.0) > UNIT_TOLERANCE
    if off.any():
        logger.warning("%s: renormalizing %d non-unit light rows", light_file, int(off.sum()))
        dirs[off] /= norms[off, None]

    images = np.stack([_rgb(read_image(f)) for f in frames])
    if len({im.shape for im in images}) > 1:
        raise DimensionMismatch("frames differ in size")
    intensities = None
    inten_file = root / "light_intensities.txt"
    if inten_file.is_file():
        intensities = _read_rows(inten_file, (1, 3))
        if len(intensities) != len(frames):
            raise DimensionMismatch(f"{len(frames)} frames but {len(intensities)} intensity rows")
        intensities = np.broadcast_to(intensities, (len(frames), 3))
    elif inline is not None:
        intensities = inline
    if intensities is not None:
        if np.any(intensities <= 0):
            raise DimensionMismatch("light intensities must be positive")
        images = images / intensities[:, None, None, :]

    mask_img = read_image(mask_file)
    mask = (mask_img.mean(axis=2) if mask_img.ndim == 3 else mask_img) > 0.5
    if mask.shape != images.shape[1:3]:
        raise DimensionMismatch(f"mask {mask.shape} vs frames {images.shape[1:3]}")

    normals = None
    for name in ("normal.png", "Normal_gt.png"):
        f = root / name
        if f.is_file():
            nm = decode_normal_rgb(_rgb(read_image(f)))
            if nm.normals.shape[:2] != mask.shape:
                raise DimensionMismatch(f"{name} {nm.normals.shape[:2]} vs mask {mask.shape}")
            valid = mask & nm.mask
            normals = NormalMap(np.where(valid[..., None], nm.normals, 0.0), valid)
            break
    # frames are now intensity-normalized, so the lights carry unit intensity
    return DatasetSample(images, LightSet(dirs), mask, normals, root.name)


def write_object_dir(path, sample: DatasetSample, bits: int = 16) -> Path:
    """Write ``sample`` in the layout read by :func:`load_object_dir`.

    A frame brighter than 1 is stored scaled into range, with the scale folded
    into that frame's light intensity, so nothing saturates. Non-unit
    intensities go into the light file as "x y z r g b" rows and loading
    divides them back out.
    """
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    peaks = np.max(sample.images.reshape(sample.num_frames, -1), axis=1)
    scale = np.maximum(peaks, 1.0)
    for i, frame in enumerate(sample.images):
        write_image(root / f"frame_{i:03d}.png", frame / scale[i] if scale[i] > 1 else frame, bits)
    lights = sample.lights
    intensities = lights.intensities / scale[:, None]
    cols = lights.directions if np.all(intensities == 1) else np.hstack([lights.directions, intensities])
    rows = [" ".join(f"{v:.17g}" for v in d) for d in cols]
    (root / "light_directions.txt").write_text("\n".join(rows) + "\n", encoding="utf-8")
    write_image(root / "mask.png", sample.mask.astype(np.float64), 8)
    if sample.normals is not None:
        write_image(root / "normal.png", encode_normal_rgb(sample.normals.normals, sample.normals.mask), 16)
    return root


def load_dataset_dir(path) -> list:
    """Load every object directory below ``path`` (or ``path`` itself if it is one)."""
    root = Path(path)
    if (root / "light_directions.txt").is_file():
        return [load_object_dir(root)]
    subdirs = sorted(p for p in root.iterdir() if (p / "light_directions.txt").is_file()) if root.is_dir() else []
    if not subdirs:
        raise MissingData(f"no object directories found in {root}")
    return [load_object_dir(p) for p in subdirs]


# --- checkpoints ---------------------------------------------------------------


def checkpoint_bytes(model: MTPSCNN) -> bytes:
    cfg = json.dumps(model.config.to_dict(), sort_keys=True).encode("utf-8")
    params = model.named_parameters()
    out = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(cfg)), cfg, struct.pack("<QI", model.step, len(params))]
    for name, p in params:
        raw = name.encode("utf-8")
        shape = tuple(p.data.shape)
        if len(shape) != 5:
            raise DimensionMismatch(f"{name}: parameters must be 5-D, got {shape}")
        out.append(struct.pack("<I", len(raw)) + raw + struct.pack("<5q", *shape))
        out.append(np.ascontiguousarray(p.data, dtype="<f4").tobytes())
    return b"".join(out)


def save_checkpoint(model: MTPSCNN, path) -> Path:
    """Atomically write ``model`` to ``path`` (temp file in the same directory, then rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blob = checkpoint_bytes(model)
    fd, tmp = tempfile.mkstemp(prefix=path.name + ".", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.blob):
            raise CorruptCheckpoint("checkpoint is truncated")
        chunk = self.blob[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def checkpoint_from_bytes(blob: bytes) -> MTPSCNN:
    r = _Reader(blob)
    if len(blob) < len(MAGIC) or r.take(len(MAGIC)) != MAGIC:
        raise IncompatibleCheckpoint("not a checkpoint file (bad magic)")
    version, cfg_len = r.unpack("<II")
    if version != FORMAT_VERSION:
        raise IncompatibleCheckpoint(f"unsupported checkpoint version {version}")
    try:
        config = ModelConfig.from_dict(json.loads(r.take(cfg_len).decode("utf-8")))
    except CorruptCheckpoint:
        raise
    except (ValueError, TypeError) as exc:
        raise CorruptCheckpoint(f"unreadable configuration block: {exc}") from exc
    step, count = r.unpack("<QI")
    expected = parameter_shapes(config)
    if count != len(expected):
        raise IncompatibleCheckpoint(f"{count} parameters stored, configuration needs {len(expected)}")
    params = {}
    for want_name, want_shape in expected:
        (n,) = r.unpack("<I")
        name = r.take(n).decode("utf-8", errors="replace")
        shape = r.unpack("<5q")
        if name != want_name or shape != want_shape:
            raise IncompatibleCheckpoint(f"found {name}{shape}, expected {want_name}{want_shape}")
        size = int(np.prod(shape))
        values = np.frombuffer(r.take(4 * size), dtype="<f4").astype(np.float32).reshape(shape)
        params[name] = Parameter(values, name)
    if r.pos != len(blob):
        raise CorruptCheckpoint(f"{len(blob) - r.pos} unexpected trailing bytes")
    model = MTPSCNN(config, params)
    model.step = step
    return model


def load_checkpoint(path) -> MTPSCNN:
    path = Path(path)
    if not path.is_file():
        raise MissingData(f"no checkpoint at {path}")
    return checkpoint_from_bytes(path.read_bytes())
