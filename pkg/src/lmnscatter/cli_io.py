"""On-disk containers for datasets and model checkpoints.

A container is a directory with ``manifest.json`` (UTF-8) and ``payload.bin``.
The payload is the concatenation of little-endian arrays (``f64``, or ``c128``
as interleaved ``f64`` pairs) with no gaps; the manifest lists every array's
name, dtype, shape, byte offset, byte length and CRC-32.
"""

from __future__ import annotations

import json
import zlib
from pathlib import Path

import numpy as np

from .datasets import Dataset
from .lmn import DenoiserWeights, LmnModel
from .scene import Scenario
from .train import AdamState, TrainConfig

FORMAT_NAME = "lmnscatter"
FORMAT_VERSION = 1
_DTYPES = {"f64": np.dtype("<f8"), "c128": np.dtype("<c16")}


class FormatError(ValueError):
    """Base class for container load failures."""


class ChecksumError(FormatError):
    def __init__(self, name):
        super().__init__(f"checksum mismatch in array {name!r}")
        self.array = name


class VersionError(FormatError):
    pass


class KindError(FormatError):
    pass


class TruncatedError(FormatError):
    pass


def _dtype_tag(arr):
    return "c128" if np.iscomplexobj(arr) else "f64"


def write_container(path, kind: str, arrays: dict, scenario: dict | None = None,
                    seed: int | None = None, meta: dict | None = None) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    entries, chunks, offset = [], [], 0
    for name, arr in arrays.items():
        tag = _dtype_tag(arr)
        raw = np.ascontiguousarray(arr, dtype=_DTYPES[tag]).tobytes()
        entries.append({"name": name, "dtype": tag, "shape": list(np.shape(arr)),
                        "offset": offset, "length": len(raw), "crc32": zlib.crc32(raw)})
        chunks.append(raw)
        offset += len(raw)
    manifest = {"format": FORMAT_NAME, "version": FORMAT_VERSION, "kind": kind,
                "scenario": scenario or {}, "seed": seed, "arrays": entries, "meta": meta or {}}
    (path / "payload.bin").write_bytes(b"".join(chunks))
    (path / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n",
                                        encoding="utf-8")
    return path


def read_container(path, kind: str | None = None):
    """Return ``(manifest, arrays)`` after validating version, kind, layout and checksums."""
    path = Path(path)
    mpath = path / "manifest.json"
    if not mpath.is_file():
        raise FileNotFoundError(f"no manifest.json in {path}")
    try:
        manifest = json.loads(mpath.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"unreadable manifest: {exc}") from exc
    if manifest.get("format") != FORMAT_NAME or manifest.get("version") != FORMAT_VERSION:
        raise VersionError(f"unsupported container format/version "
                           f"{manifest.get('format')!r}/{manifest.get('version')!r}")
    if kind is not None and manifest.get("kind") != kind:
        raise KindError(f"expected a {kind} container, found {manifest.get('kind')!r}")
    payload = (path / "payload.bin").read_bytes()
    arrays, expected = {}, 0
    for e in manifest["arrays"]:
        if e["offset"] != expected:
            raise FormatError(f"array {e['name']!r} does not tile the payload")
        end = e["offset"] + e["length"]
        if end > len(payload):
            raise TruncatedError(f"payload truncated inside array {e['name']!r}")
        raw = payload[e["offset"]:end]
        if zlib.crc32(raw) != e["crc32"]:
            raise ChecksumError(e["name"])
        arrays[e["name"]] = np.frombuffer(raw, dtype=_DTYPES[e["dtype"]]).reshape(e["shape"]).copy()
        expected = end
    if expected != len(payload):
        raise FormatError("payload has trailing bytes not described by the manifest")
    return manifest, arrays


# ------------------------------------------------------------------- datasets

def save_dataset(path, ds: Dataset) -> Path:
    arrays = {}
    for i in range(len(ds)):
        arrays[f"label/{i:05d}"] = ds.labels[i]
        arrays[f"data/{i:05d}"] = ds.data[i]
    meta = {"count": len(ds), "kind": ds.kind, "eps_r": [float(v) for v in ds.eps_r]}
    return write_container(path, "dataset", arrays, ds.scenario.to_dict(), ds.seed, meta)


def load_dataset(path) -> Dataset:
    manifest, arrays = read_container(path, "dataset")
    sc = Scenario.from_dict(manifest["scenario"])
    count = manifest["meta"]["count"]
    n = sc.inversion_grid.n
    if count:
        labels = np.stack([arrays[f"label/{i:05d}"] for i in range(count)])
        data = np.stack([arrays[f"data/{i:05d}"] for i in range(count)])
    else:
        labels = np.zeros((0, n, n))
        data = np.zeros((0, sc.rx_ring.count, sc.tx_ring.count), dtype=complex)
    return Dataset(sc, labels, data, np.array(manifest["meta"]["eps_r"], dtype=float),
                   manifest["seed"] or 0, manifest["meta"]["kind"])


# --------------------------------------------------------------------- models

def save_model(path, model: LmnModel, state: AdamState | None = None, cfg: TrainConfig | None = None,
               epoch: int = 0, history=None, scenario: Scenario | None = None) -> Path:
    w = model.weights
    arrays = {"scalar/rho": np.array([model.rho])}
    for name, arr in w.params().items():
        arrays[f"param/{name}"] = arr
    for name, arr in w.buffers().items():
        arrays[f"buffer/{name}"] = arr
    if state is not None:
        for name in sorted(state.m):
            arrays[f"adam_m/{name}"] = np.atleast_1d(state.m[name])
            arrays[f"adam_v/{name}"] = np.atleast_1d(state.v[name])
    meta = {"depth": w.depth, "channels": w.channels, "use_bn": w.use_bn, "unroll": model.unroll,
            "op_scale": model.op_scale, "chi0_scale": model.chi0_scale, "epoch": int(epoch),
            "adam_t": state.t if state is not None else 0,
            "train_config": cfg.to_dict() if cfg is not None else None,
            "loss_history": [float(v) for v in (history or [])]}
    return write_container(path, "model", arrays, scenario.to_dict() if scenario else None,
                           cfg.seed if cfg is not None else None, meta)


def load_model(path):
    """Return ``(model, state, meta, scenario_dict)``."""
    manifest, arrays = read_container(path, "model")
    meta = manifest["meta"]
    w = DenoiserWeights.init(meta["depth"], meta["channels"], meta["use_bn"])
    for name, arr in w.params().items():
        arr[...] = arrays[f"param/{name}"]
    for name, arr in w.buffers().items():
        arr[...] = arrays[f"buffer/{name}"]
    model = LmnModel(w, float(arrays["scalar/rho"][0]), meta["unroll"], meta["op_scale"], meta["chi0_scale"])
    state = AdamState(t=meta["adam_t"])
    for key, arr in arrays.items():
        kind, _, name = key.partition("/")
        if kind in ("adam_m", "adam_v"):
            val = arr.reshape(()) if name == "rho" else arr
            (state.m if kind == "adam_m" else state.v)[name] = val
    return model, state, meta, manifest["scenario"]
