"""Binary checkpoints.

Layout (little-endian)::

    8 bytes   magic  b"CNSNCKPT"
    4 bytes   uint32 format version
    8 bytes   uint64 header length H
    H bytes   UTF-8 JSON header
    ...       raw tensor bytes, concatenated in header order

The header holds the model config, label space, graph edges, seed, any
extra metadata, and for every tensor its name, dtype, shape and byte offset
relative to the start of the data block. Parameter tensors use their
dotted names; normalization buffers are prefixed ``buffer:``; the node
word-vector matrix is stored as ``input:Z``.
"""
from __future__ import annotations

import json
import struct
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .graph import ConsistencyGraph
from .labels import LabelSpace
from .model import ConsNet, ModelConfig

MAGIC = b"CNSNCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, model: ConsNet, metadata: dict | None = None) -> None:
    tensors = dict(model.state_dict())
    tensors["input:Z"] = model.Z.data
    entries, blobs, offset = [], [], 0
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr)
        raw = arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes()
        entries.append({"name": name, "dtype": arr.dtype.str.lstrip("<>|="), "shape": list(arr.shape),
                        "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    header = {
        "model_config": asdict(model.config),
        "seed": model.config.seed,
        "label_space": model.space.to_json(),
        "graph_edges": [[i, j, t] for i, j, t in model.graph.edges()],
        "metadata": metadata or {},
        "tensors": entries,
    }
    hdr = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<Q", len(hdr)))
        fh.write(hdr)
        for b in blobs:
            fh.write(b)


def read_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    (version,) = struct.unpack("<I", raw[8:12])
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    (hlen,) = struct.unpack("<Q", raw[12:20])
    header = json.loads(raw[20:20 + hlen].decode("utf-8"))
    base = 20 + hlen
    tensors = {}
    for e in header["tensors"]:
        start = base + e["offset"]
        buf = raw[start:start + e["nbytes"]]
        if len(buf) != e["nbytes"]:
            raise CheckpointError(f"{path}: truncated tensor {e['name']}")
        dtype = np.dtype(e["dtype"]).newbyteorder("<")
        tensors[e["name"]] = np.frombuffer(buf, dtype=dtype).reshape(e["shape"]).astype(dtype.newbyteorder("="))
    return header, tensors


def load_checkpoint(path) -> tuple[ConsNet, dict]:
    """Rebuild the model stored at ``path``; returns (model, metadata)."""
    header, tensors = read_checkpoint(path)
    space = LabelSpace.from_json(header["label_space"])
    nodes = [{"kind": n.kind, "label": space.node_label(n)} for n in space.nodes()]
    graph = ConsistencyGraph.from_json(space, {"nodes": nodes, "edges": header["graph_edges"]})
    Z = tensors.pop("input:Z")
    model = ConsNet(ModelConfig(**header["model_config"]), graph, Z)
    model.load_state_dict(tensors)
    model.eval()
    return model, header["metadata"]
