"""Single-file checkpoint: magic, JSON header, little-endian float64 tables."""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

MAGIC = b"KGETOT\x00\x01"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    tables: dict[str, np.ndarray]
    header: dict = field(default_factory=dict)

    @classmethod
    def from_space(cls, space, header) -> "Checkpoint":
        tables = {name: p.detach().to(torch.float64).numpy().copy() for name, p in space.named_parameters()}
        return cls(tables, dict(header))

    def load_into(self, space):
        names = dict(space.named_parameters())
        if set(names) != set(self.tables):
            raise CheckpointError(f"table mismatch: {sorted(set(names) ^ set(self.tables))}")
        with torch.no_grad():
            for name, p in names.items():
                arr = self.tables[name]
                if tuple(arr.shape) != tuple(p.shape):
                    raise CheckpointError(f"shape mismatch for {name}: {arr.shape} vs {tuple(p.shape)}")
                p.copy_(torch.from_numpy(arr).to(p.dtype))
        return space

    def save(self, path):
        layout, offset = [], 0
        for name in sorted(self.tables):
            arr = self.tables[name]
            layout.append({"name": name, "shape": list(arr.shape), "offset": offset})
            offset += arr.size
        header = {**self.header, "format_version": FORMAT_VERSION, "tables": layout}
        blob = json.dumps(header, sort_keys=True).encode("utf-8")
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<Q", len(blob)))
            fh.write(blob)
            for name in sorted(self.tables):
                fh.write(np.ascontiguousarray(self.tables[name], dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "Checkpoint":
        data = Path(path).read_bytes()
        if data[:8] != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file")
        (hlen,) = struct.unpack("<Q", data[8:16])
        header = json.loads(data[16:16 + hlen].decode("utf-8"))
        body = np.frombuffer(data, dtype="<f8", offset=16 + hlen)
        tables = {}
        for entry in header.pop("tables"):
            n = int(np.prod(entry["shape"], dtype=np.int64))
            tables[entry["name"]] = body[entry["offset"]:entry["offset"] + n].reshape(entry["shape"]).astype(np.float64)
        return cls(tables, header)

    def num_parameters(self) -> int:
        return int(sum(a.size for a in self.tables.values()))
