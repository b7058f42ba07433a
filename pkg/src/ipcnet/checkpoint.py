"""Versioned binary model checkpoints.

Layout: magic bytes, u32 format version, a length-prefixed canonical
config block (sorted key=value lines, UTF-8), then a u32 parameter count
followed by one block per parameter: length-prefixed name, u32 rank,
u64 dims, and the raw float64 little-endian payload.  Everything about a
model lives in the file, so identical files always rebuild identical
models.
"""

import struct

import numpy as np

from .interpoint import IPCNetSegModel, InterPointConfig
from .pointnet import PointNetConfig, PointNetSegModel

MAGIC = b"IPCNCKPT"
VERSION = 1


def write_checkpoint(path, config: dict, params: dict) -> None:
    """config: flat str->str mapping; params: name -> float64 array."""
    text = "\n".join(f"{k}={config[k]}" for k in sorted(config)).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        f.write(struct.pack("<I", len(text)))
        f.write(text)
        f.write(struct.pack("<I", len(params)))
        for name, arr in params.items():
            arr = np.asarray(arr, dtype=np.float64)
            encoded = name.encode("utf-8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            f.write(arr.astype("<f8").tobytes())


def read_checkpoint(path):
    """Returns (config dict, params dict name -> float64 array)."""
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:len(MAGIC)] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint (bad magic)")
    pos = len(MAGIC)

    def unpack(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        values = struct.unpack_from(fmt, blob, pos)
        pos += size
        return values

    (version,) = unpack("<I")
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    (text_len,) = unpack("<I")
    text = blob[pos:pos + text_len].decode("utf-8")
    pos += text_len
    config = {}
    for line in text.splitlines():
        key, _, value = line.partition("=")
        config[key] = value
    (count,) = unpack("<I")
    params = {}
    for _ in range(count):
        (name_len,) = unpack("<I")
        name = blob[pos:pos + name_len].decode("utf-8")
        pos += name_len
        (ndim,) = unpack("<I")
        shape = unpack(f"<{ndim}Q")
        size = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(blob, dtype="<f8", count=size, offset=pos)
        pos += size * 8
        params[name] = arr.reshape(shape).astype(np.float64)
    return config, params


def save_model(path, model) -> None:
    if isinstance(model, IPCNetSegModel):
        config = model.to_dict()
    else:
        config = model.config.to_dict()
    config["seed"] = str(model.seed)
    params = {name: t.data for name, t in model.named_parameters().items()}
    write_checkpoint(path, config, params)


def load_model(path):
    config, params = read_checkpoint(path)
    seed = int(config.get("seed", "0"))
    kind = config.get("kind")
    if kind == "pointnet":
        model = PointNetSegModel(PointNetConfig.from_dict(config), seed)
    elif kind == "ipcnet":
        model = IPCNetSegModel(PointNetConfig.from_dict(config),
                               int(config["n_points"]), seed,
                               ipc_config=InterPointConfig.from_dict(config))
    else:
        raise ValueError(f"{path}: unknown model kind {kind!r}")
    stored = model.named_parameters()
    if set(stored) != set(params):
        missing = sorted(set(stored) ^ set(params))
        raise ValueError(f"{path}: parameter names do not match the config "
                         f"(first few: {missing[:4]})")
    for name, tensor in stored.items():
        if tensor.data.shape != params[name].shape:
            raise ValueError(f"{path}: shape mismatch for {name}")
        tensor.data = params[name]
    return model
