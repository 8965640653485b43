"""Export document embeddings from a pretrained encoder checkpoint.

The exporter bridges neural text encoders (style or semantic) into the
engine's binary embedding-store format.  Truncation is delegated to the
engine CLI (`styledetect prepare` with single-document episodes) so both
components see byte-identical documents; the exporter then batch-encodes
with masked mean pooling and L2 normalization and writes one store record
per input document, in input order.
"""

from __future__ import annotations

import json
import shutil
import struct
import subprocess
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class ExportError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code
        self.message = message

    def __str__(self) -> str:
        return f"[{self.code}] {self.message}"


@dataclass(frozen=True)
class ExportJob:
    input_path: str  # line-delimited JSON corpus (engine schema)
    encoder: str  # model id or local checkpoint directory
    output_path: str
    batch_size: int = 32
    max_tokens: int = 128

    def __post_init__(self):
        if self.batch_size < 1:
            raise ExportError("bad-config", "batch size must be >= 1")
        if self.max_tokens < 1:
            raise ExportError("bad-config", "max_tokens must be >= 1")


def _engine_command() -> list[str]:
    exe = shutil.which("styledetect")
    if exe:
        return [exe]
    return [sys.executable, "-m", "styledetect.cli"]


def _truncate_via_engine(input_path: str, max_tokens: int) -> dict[str, dict]:
    """Run the engine's prepare step (N=1) and index its manifest by doc id."""
    with tempfile.TemporaryDirectory() as tmp:
        manifest_path = str(Path(tmp) / "manifest.json")
        cmd = _engine_command() + [
            "prepare",
            "--corpus", input_path,
            "--out", manifest_path,
            "--episode-size", "1",
            "--max-tokens", str(max_tokens),
            "--seed", "0",
        ]
        proc = subprocess.run(cmd, capture_output=True, text=True)
        if proc.returncode != 0:
            raise ExportError(
                "engine-prepare-failed",
                f"styledetect prepare failed: {proc.stderr.strip() or proc.stdout.strip()}",
            )
        with open(manifest_path, encoding="utf-8") as fh:
            manifest = json.load(fh)
    docs = {}
    for episode in manifest["episodes"]:
        (doc,) = episode["documents"]
        docs[doc["id"]] = doc
    return docs


def _corpus_order(input_path: str) -> list[str]:
    ids = []
    try:
        with open(input_path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                if not raw.strip():
                    continue
                try:
                    ids.append(json.loads(raw)["id"])
                except (json.JSONDecodeError, KeyError):
                    raise ExportError("bad-corpus", f"line {lineno}: expected a JSON record with an id")
    except OSError as exc:
        raise ExportError("bad-corpus", f"cannot read corpus {input_path}: {exc}")
    return ids


class Encoder:
    """Pretrained transformer encoder with masked mean pooling."""

    def __init__(self, identifier: str):
        try:
            import torch
            from transformers import AutoModel, AutoTokenizer
        except ImportError as exc:
            raise ExportError("missing-dependency", f"torch/transformers unavailable: {exc}")
        self._torch = torch
        try:
            self.tokenizer = AutoTokenizer.from_pretrained(identifier)
            self.model = AutoModel.from_pretrained(identifier)
        except Exception as exc:
            raise ExportError("encoder-load", f"cannot load encoder {identifier!r}: {exc}")
        self.model.eval()
        limit = getattr(self.model.config, "max_position_embeddings", 512)
        self.max_length = min(512, int(limit))

    def encode(self, texts: list[str]) -> np.ndarray:
        torch = self._torch
        enc = self.tokenizer(
            texts, padding=True, truncation=True, max_length=self.max_length, return_tensors="pt"
        )
        with torch.no_grad():
            hidden = self.model(**enc).last_hidden_state
        mask = enc["attention_mask"].unsqueeze(-1).to(hidden.dtype)
        pooled = (hidden * mask).sum(dim=1) / mask.sum(dim=1).clamp(min=1)
        normalized = torch.nn.functional.normalize(pooled, dim=1)
        return normalized.cpu().numpy().astype(np.float32)


_MAGIC = b"STYL"
_VERSION = 1


def _write_str(fh, s: str) -> None:
    data = s.encode("utf-8")
    if len(data) > 0xFFFF:
        raise ExportError("string-too-long", "string field exceeds 65535 bytes")
    fh.write(struct.pack("<H", len(data)))
    fh.write(data)


def write_store(records: list[tuple[str, str, str, str, np.ndarray]], path: str) -> None:
    """Write (id, author, label, domain, vector) records in the STYL format."""
    if not records:
        raise ExportError("empty-export", "no records to write")
    dim = records[0][4].shape[0]
    if dim == 0:
        raise ExportError("zero-dim", "encoder produced zero-dimensional vectors")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IIBQ", _VERSION, dim, 1, len(records)))
        for rec_id, author, label, domain, vec in records:
            if vec.shape[0] != dim:
                raise ExportError("dim-mismatch", f"record {rec_id!r} has dim {vec.shape[0]} != {dim}")
            if not np.all(np.isfinite(vec)):
                raise ExportError("non-finite", f"record {rec_id!r} has non-finite values")
            _write_str(fh, rec_id)
            _write_str(fh, author)
            _write_str(fh, label)
            _write_str(fh, domain)
            fh.write(np.ascontiguousarray(vec, dtype="<f4").tobytes())


def export_embeddings(job: ExportJob) -> int:
    """Run the export; returns the number of records written.

    One record per input document, ids preserved in input-corpus order;
    vectors are L2-normalized float32.
    """
    order = _corpus_order(job.input_path)
    if not order:
        raise ExportError("empty-export", f"no documents in {job.input_path}")
    docs = _truncate_via_engine(job.input_path, job.max_tokens)
    missing = [doc_id for doc_id in order if doc_id not in docs]
    if missing:
        raise ExportError("missing-document", f"document {missing[0]!r} absent from engine manifest")
    encoder = Encoder(job.encoder)
    records = []
    for start in range(0, len(order), job.batch_size):
        chunk = order[start : start + job.batch_size]
        vectors = encoder.encode([docs[doc_id]["text"] for doc_id in chunk])
        if not np.all(np.isfinite(vectors)):
            raise ExportError("non-finite", "encoder produced non-finite embeddings")
        for doc_id, vec in zip(chunk, vectors):
            doc = docs[doc_id]
            records.append((doc_id, doc["author"], doc["label"], doc["domain"], vec))
    if len(records) != len(order):
        raise ExportError("count-mismatch", f"encoded {len(records)} of {len(order)} documents")
    write_store(records, job.output_path)
    return len(records)
