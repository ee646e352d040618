"""File formats: binary tensors, keypoints JSON, 8-bit images, JSON sidecars.

All formats are normative and bit-exact.  The tensor container is
little-endian with a 4-byte magic, a version byte, a dtype byte (0 = float32,
1 = float64), a dimension count, 32-bit unsigned extents, then the row-major
payload.  Images are 8-bit PNGs scaled to [0, 1] on load and rounded half-up
on save; segmentation maps are single-channel PNGs of raw label indices.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import TensorFileError, ValidationError
from .layout import DEFAULT_PALETTE, SegmentationMap
from .pose import JOINT_NAMES, Joint, KeypointSet
from .tensor import Tensor, WindowSpec, as_array
from .correspondence import CorrespondenceMatrix
from .warping import ControlGrid, TpsTransform

TENSOR_MAGIC = b"CTTN"
TENSOR_VERSION = 1
_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_CODE_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


# ---------------------------------------------------------------------------
# binary tensor container

def save_tensor(tensor, path) -> None:
    arr = np.asarray(as_array(tensor))
    code = _DTYPE_CODES.get(arr.dtype)
    if code is None:
        raise ValidationError(f"unsupported tensor dtype {arr.dtype}")
    if arr.ndim > 255:
        raise ValidationError("too many dimensions for the tensor container")
    header = TENSOR_MAGIC + struct.pack("<BBB", TENSOR_VERSION, code, arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    payload = np.ascontiguousarray(arr, dtype=_CODE_DTYPES[code]).tobytes()
    Path(path).write_bytes(header + payload)


def load_tensor(path) -> Tensor:
    blob = Path(path).read_bytes()
    if len(blob) < 7:
        raise TensorFileError(f"{path}: truncated header")
    if blob[:4] != TENSOR_MAGIC:
        raise TensorFileError(f"{path}: bad magic {blob[:4]!r}")
    version, code, ndim = struct.unpack("<BBB", blob[4:7])
    if version != TENSOR_VERSION:
        raise TensorFileError(f"{path}: unsupported version {version}")
    if code not in _CODE_DTYPES:
        raise TensorFileError(f"{path}: unknown dtype code {code}")
    offset = 7 + 4 * ndim
    if len(blob) < offset:
        raise TensorFileError(f"{path}: truncated extents")
    dims = struct.unpack(f"<{ndim}I", blob[7:offset])
    dtype = _CODE_DTYPES[code]
    expected = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
    if len(blob) - offset != expected:
        raise TensorFileError(
            f"{path}: payload is {len(blob) - offset} bytes, expected {expected}")
    data = np.frombuffer(blob, dtype=dtype, offset=offset).reshape(dims)
    return Tensor(data.astype(dtype.newbyteorder("=")),
                  precision="float32" if code == 0 else "float64")


# ---------------------------------------------------------------------------
# keypoints JSON

def load_keypoints(path) -> KeypointSet:
    """Parse {"width", "height", "joints": [ {...} | null ] * 18}."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: {exc}") from exc
    for key in ("width", "height", "joints"):
        if key not in data:
            raise ValidationError(f"{path}: missing field {key!r}")
    joints_raw = data["joints"]
    if not isinstance(joints_raw, list) or len(joints_raw) != len(JOINT_NAMES):
        raise ValidationError(
            f"{path}: joints must list exactly {len(JOINT_NAMES)} entries")
    joints = []
    for i, (name, entry) in enumerate(zip(JOINT_NAMES, joints_raw)):
        where = f"{path}: joints[{i}]"
        if entry is None:
            joints.append(None)
            continue
        if not isinstance(entry, dict):
            raise ValidationError(f"{where}: expected object or null")
        if entry.get("name") != name:
            raise ValidationError(
                f"{where}.name: expected {name!r}, got {entry.get('name')!r}")
        try:
            joints.append(Joint(float(entry["x"]), float(entry["y"]),
                                float(entry.get("c", 1.0))))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"{where}: bad coordinates ({exc})") from exc
    try:
        return KeypointSet(int(data["width"]), int(data["height"]), tuple(joints))
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from exc


def save_keypoints(keypoints: KeypointSet, path) -> None:
    joints = []
    for name, joint in zip(JOINT_NAMES, keypoints.joints):
        if joint is None:
            joints.append(None)
        else:
            joints.append({"name": name, "x": joint.x, "y": joint.y,
                           "c": joint.confidence})
    write_json({"width": keypoints.width, "height": keypoints.height,
                "joints": joints}, path)


# ---------------------------------------------------------------------------
# images, masks, segmentation maps

def load_image(path) -> Tensor:
    """8-bit PNG (or similar) to an H×W×3 tensor in [0, 1]."""
    with Image.open(path) as img:
        arr = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    return Tensor(arr)


def save_image(tensor, path) -> None:
    """Clamp to [0, 1], round half-up to 8 bits, write PNG."""
    arr = np.asarray(as_array(tensor))
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.shape[2] == 1:
        arr = np.repeat(arr, 3, axis=2)
    scaled = np.floor(np.clip(arr, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(scaled, mode="RGB").save(path, format="PNG")


def load_grayscale(path) -> Tensor:
    with Image.open(path) as img:
        arr = np.asarray(img.convert("L"), dtype=np.float64) / 255.0
    return Tensor(arr)


def save_grayscale(tensor, path) -> None:
    arr = np.asarray(as_array(tensor))
    scaled = np.floor(np.clip(arr, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(scaled, mode="L").save(path, format="PNG")


def load_segmentation(path, palette=DEFAULT_PALETTE) -> SegmentationMap:
    """Single-channel 8-bit image holding raw label indices."""
    with Image.open(path) as img:
        arr = np.asarray(img.convert("L"), dtype=np.uint8)
    return SegmentationMap(arr, palette)


def save_segmentation(seg: SegmentationMap, path) -> None:
    Image.fromarray(seg.labels, mode="L").save(path, format="PNG")


# ---------------------------------------------------------------------------
# JSON structures

def write_json(data, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: {exc}") from exc


def save_control_grid(grid: ControlGrid, path) -> None:
    write_json({"grid_size": grid.grid_size,
                "source": grid.source.tolist(),
                "target": grid.target.tolist()}, path)


def load_control_grid(path) -> ControlGrid:
    data = read_json(path)
    try:
        return ControlGrid(np.asarray(data["source"], dtype=np.float64),
                           np.asarray(data["target"], dtype=np.float64),
                           int(data["grid_size"]))
    except KeyError as exc:
        raise ValidationError(f"{path}: missing field {exc}") from exc


def save_transform(transform: TpsTransform, path) -> None:
    write_json({"grid_size": transform.control.grid_size,
                "source": transform.control.source.tolist(),
                "target": transform.control.target.tolist(),
                "affine": transform.affine.tolist(),
                "weights": transform.weights.tolist(),
                "lambda_kernel": transform.lambda_kernel}, path)


def load_transform(path) -> TpsTransform:
    data = read_json(path)
    try:
        control = ControlGrid(np.asarray(data["source"], dtype=np.float64),
                              np.asarray(data["target"], dtype=np.float64),
                              int(data["grid_size"]))
        return TpsTransform(control,
                            np.asarray(data["affine"], dtype=np.float64),
                            np.asarray(data["weights"], dtype=np.float64),
                            float(data["lambda_kernel"]))
    except KeyError as exc:
        raise ValidationError(f"{path}: missing field {exc}") from exc


def save_matrix(matrix: CorrespondenceMatrix, path) -> None:
    """Binary tensor plus a `.json` metadata sidecar."""
    path = Path(path)
    save_tensor(matrix.tensor, path)
    meta = {
        "grid_a": list(matrix.grid_a) if matrix.grid_a else None,
        "grid_b": list(matrix.grid_b) if matrix.grid_b else None,
        "window_a": matrix.window_a.to_dict() if matrix.window_a else None,
        "window_b": matrix.window_b.to_dict() if matrix.window_b else None,
        "image_shape_a": list(matrix.image_shape_a) if matrix.image_shape_a else None,
        "image_shape_b": list(matrix.image_shape_b) if matrix.image_shape_b else None,
    }
    write_json(meta, path.with_suffix(path.suffix + ".json"))


def load_matrix(path) -> CorrespondenceMatrix:
    path = Path(path)
    tensor = load_tensor(path)
    sidecar = path.with_suffix(path.suffix + ".json")
    meta = read_json(sidecar) if sidecar.exists() else {}

    def pair(v):
        return tuple(int(x) for x in v) if v else None

    def window(v):
        return WindowSpec.from_dict(v) if v else None

    return CorrespondenceMatrix(
        tensor,
        grid_a=pair(meta.get("grid_a")), grid_b=pair(meta.get("grid_b")),
        window_a=window(meta.get("window_a")), window_b=window(meta.get("window_b")),
        image_shape_a=pair(meta.get("image_shape_a")),
        image_shape_b=pair(meta.get("image_shape_b")))


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()
