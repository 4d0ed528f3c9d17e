"""Checkpoint directories: ``manifest.json`` plus one raw ``tensors.bin`` blob.

The manifest lists every tensor's name, shape, dtype and byte offset into
the blob (little-endian float64, C order), together with the model sizes,
both vocabularies and the training configuration.  Output is byte-stable:
keys are sorted and nothing time-dependent is recorded.
"""

from __future__ import annotations

import json
import shutil
from pathlib import Path

import numpy as np

from .corpus.tokens import TokenVocab
from .fileio import replace_dir, temp_dir_beside
from .model import DmgNetwork, DmgParams, ModelDims
from .numcore import Tensor

FORMAT = "dmg-checkpoint/1"
MANIFEST = "manifest.json"
BLOB = "tensors.bin"
DTYPE = "<f8"


def encode_network(net: DmgNetwork) -> tuple[bytes, bytes]:
    entries, chunks, offset = [], [], 0
    for name, t in net.params.items():
        raw = np.ascontiguousarray(t.data, dtype=DTYPE).tobytes()
        entries.append({"name": name, "shape": list(t.shape), "dtype": DTYPE, "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    manifest = {
        "format": FORMAT,
        "stream": net.stream,
        "dims": vars(net.dims).copy(),
        "config": net.config,
        "src_vocab": net.src_vocab.to_list(),
        "tgt_vocab": net.tgt_vocab.to_list(),
        "tensors": entries,
    }
    text = json.dumps(manifest, sort_keys=True, indent=1, ensure_ascii=False) + "\n"
    return text.encode("utf-8"), b"".join(chunks)


def save_network(net: DmgNetwork, path: str | Path) -> Path:
    path = Path(path)
    manifest, blob = encode_network(net)
    tmp = temp_dir_beside(path)
    try:
        (tmp / MANIFEST).write_bytes(manifest)
        (tmp / BLOB).write_bytes(blob)
        replace_dir(tmp, path)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return path


def load_network(path: str | Path) -> DmgNetwork:
    path = Path(path)
    manifest = json.loads((path / MANIFEST).read_text(encoding="utf-8"))
    if manifest.get("format") != FORMAT:
        raise ValueError(f"{path}: unsupported checkpoint format {manifest.get('format')!r}")
    blob = (path / BLOB).read_bytes()
    dims = ModelDims(**manifest["dims"])
    tensors = {}
    for e in manifest["tensors"]:
        end = e["offset"] + e["nbytes"]
        if end > len(blob):
            raise ValueError(f"{path}: tensor {e['name']!r} runs past the end of {BLOB}")
        arr = np.frombuffer(blob[e["offset"] : end], dtype=e["dtype"]).astype(np.float64)
        tensors[e["name"]] = Tensor(arr.reshape(e["shape"]), True, e["name"])
    src_vocab = TokenVocab.from_list(manifest["src_vocab"])
    tgt_vocab = TokenVocab.from_list(manifest["tgt_vocab"])
    if len(src_vocab) != dims.v_src or len(tgt_vocab) != dims.v_tgt:
        raise ValueError(f"{path}: vocabulary sizes do not match the stored model sizes")
    return DmgNetwork(DmgParams(dims, tensors), src_vocab, tgt_vocab, manifest["stream"], manifest["config"])
