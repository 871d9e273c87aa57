"""JSON-lines chain files: one record per line, then one manifest line.

Record fields: ``iter, model, logPosterior, moveType, accepted, nEvals,
forwardSetSize, backwardSetSize``. The manifest line is
``{"schema": <int>, "manifest": {...}}``; a file without it is truncated.
"""

from __future__ import annotations

import json

from .errors import TruncatedChain
from .samplers import SCHEMA_VERSION, ChainRecord


class ChainWriter:
    """Record sink that streams records to ``path`` as they are produced."""

    def __init__(self, path):
        self.path = path
        self._fh = open(path, "w")
        self.count = 0

    def __call__(self, rec: ChainRecord):
        self._fh.write(rec.to_json())
        self._fh.write("\n")
        self.count += 1

    def finish(self, manifest: dict):
        self._fh.write(json.dumps({"schema": SCHEMA_VERSION, "manifest": manifest},
                                  separators=(",", ":"), sort_keys=True))
        self._fh.write("\n")
        self.close()

    def close(self):
        if not self._fh.closed:
            self._fh.flush()
            self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_chain(path) -> tuple[list[ChainRecord], dict]:
    """Parse a chain file; raises :class:`TruncatedChain` if the manifest is missing."""
    records, manifest = [], None
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            if manifest is not None:
                raise TruncatedChain(f"{path}: data after the manifest line")
            doc = json.loads(line)
            if "manifest" in doc:
                if doc.get("schema") != SCHEMA_VERSION:
                    raise ValueError(f"{path}: unsupported schema {doc.get('schema')}")
                manifest = doc["manifest"]
            else:
                records.append(ChainRecord.from_dict(doc))
    if manifest is None:
        raise TruncatedChain(f"{path}: missing manifest line ({len(records)} records read)")
    return records, manifest
