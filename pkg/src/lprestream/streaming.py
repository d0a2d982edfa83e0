"""Batch acquisition and state persistence.

Sources iterate batches out of CSV files, a chunked single CSV, or an
in-memory sequence, always in a deterministic documented order. Checkpoints
serialize an estimator state to JSON with round-trip-exact decimal encoding,
so a stream interrupted at any point resumes bit-identically without touching
any historical raw data.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import tempfile
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Iterator, Sequence

import numpy as np

from . import estimators, model
from .errors import (
    CheckpointError,
    DigestMismatch,
    InconsistentWidth,
    MethodMismatch,
    NonPositiveResponse,
    ParseError,
    VersionMismatch,
)

CHECKPOINT_VERSION = 1


class SourceKind(str, Enum):
    DIRECTORY = "csv-directory"
    CHUNKED = "csv-file"
    MEMORY = "memory"


@dataclass(frozen=True)
class BatchSource:
    """A replayable supply of batches.

    Directory sources yield one batch per ``*.csv`` file in lexicographic
    filename order; chunked sources cut a single CSV into ``chunk_size``-row
    batches with the remainder in the last one; in-memory sources yield a
    fixed tuple. Iterating a source twice yields identical batch sequences.
    """

    kind: SourceKind
    path: Path | None = None
    batches: tuple[model.Batch, ...] | None = None
    chunk_size: int | None = None
    response: str | None = None
    intercept: bool = True

    @classmethod
    def from_directory(
        cls, path, *, response: str | None = None, intercept: bool = True
    ) -> "BatchSource":
        return cls(
            kind=SourceKind.DIRECTORY,
            path=Path(path),
            response=response,
            intercept=intercept,
        )

    @classmethod
    def from_csv(
        cls,
        path,
        *,
        chunk_size: int | None = None,
        response: str | None = None,
        intercept: bool = True,
    ) -> "BatchSource":
        if chunk_size is not None and chunk_size < 1:
            raise ValueError(f"chunk_size must be >= 1, got {chunk_size}")
        return cls(
            kind=SourceKind.CHUNKED,
            path=Path(path),
            chunk_size=chunk_size,
            response=response,
            intercept=intercept,
        )

    @classmethod
    def in_memory(cls, batches: Sequence[model.Batch]) -> "BatchSource":
        return cls(kind=SourceKind.MEMORY, batches=tuple(batches))

    def _files(self) -> list[Path]:
        files = sorted(p for p in self.path.iterdir() if p.suffix.lower() == ".csv")
        return files

    def __iter__(self) -> Iterator[model.Batch]:
        if self.kind is SourceKind.MEMORY:
            yield from self.batches
        elif self.kind is SourceKind.DIRECTORY:
            index = 0
            for file in self._files():
                index += 1
                yield _read_csv_batch(
                    file, index, response=self.response, intercept=self.intercept
                )
        else:
            yield from _read_csv_chunks(
                self.path,
                chunk_size=self.chunk_size,
                response=self.response,
                intercept=self.intercept,
            )

    def column_names(self) -> list[str] | None:
        """Design column names (intercept included when enabled), or None."""
        if self.kind is SourceKind.MEMORY:
            return None
        if self.kind is SourceKind.DIRECTORY:
            files = self._files()
            if not files:
                return None
            target = files[0]
        else:
            target = self.path
        with open(target, newline="", encoding="utf-8") as handle:
            header = next(csv.reader(handle), None)
        if header is None:
            raise ParseError(f"{target}: empty file, a header row is required")
        _, cov_idx = _column_layout(header, self.response, str(target))
        names = [header[i] for i in cov_idx]
        return (["intercept"] + names) if self.intercept else names


def _column_layout(
    header: list[str], response: str | None, where: str
) -> tuple[int, list[int]]:
    if not header:
        raise ParseError(f"{where}: header row is empty")
    if response is None:
        y_idx = 0
    else:
        try:
            y_idx = header.index(response)
        except ValueError:
            raise ParseError(
                f"{where}: response column {response!r} not in header {header}"
            ) from None
    cov_idx = [i for i in range(len(header)) if i != y_idx]
    return y_idx, cov_idx


def _parse_cell(raw: str, where: str, row_no: int, column: str) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise ParseError(
            f"{where}: row {row_no}, column {column!r}: cannot parse {raw!r}"
        ) from None
    if not math.isfinite(value):
        raise ParseError(
            f"{where}: row {row_no}, column {column!r}: non-finite value {raw!r}"
        )
    return value


def _rows_to_batch(
    header: list[str],
    rows: list[tuple[int, list[str]]],
    where: str,
    index: int,
    response: str | None,
    intercept: bool,
) -> model.Batch:
    y_idx, cov_idx = _column_layout(header, response, where)
    if not rows:
        raise ParseError(f"{where}: no data rows")
    width = len(header)
    ys = []
    xs = []
    for row_no, row in rows:
        if len(row) != width:
            raise InconsistentWidth(
                f"{where}: row {row_no} has {len(row)} fields, header has {width}"
            )
        y = _parse_cell(row[y_idx], where, row_no, header[y_idx])
        if y <= 0.0:
            raise NonPositiveResponse(
                f"{where}: row {row_no}: response {y!r} must be > 0"
            )
        ys.append(y)
        xs.append([_parse_cell(row[i], where, row_no, header[i]) for i in cov_idx])
    x = np.asarray(xs, dtype=np.float64)
    if intercept:
        x = np.hstack([np.ones((x.shape[0], 1)), x])
    return model.Batch(x=x, y=np.asarray(ys), index=index)


def _read_csv_batch(
    path: Path, index: int, *, response: str | None, intercept: bool
) -> model.Batch:
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            raise ParseError(f"{path}: empty file, a header row is required")
        rows = [(row_no, row) for row_no, row in enumerate(reader, start=1)]
    return _rows_to_batch(header, rows, str(path), index, response, intercept)


def _read_csv_chunks(
    path: Path, *, chunk_size: int | None, response: str | None, intercept: bool
) -> Iterator[model.Batch]:
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            raise ParseError(f"{path}: empty file, a header row is required")
        pending: list[tuple[int, list[str]]] = []
        index = 0
        for row_no, row in enumerate(reader, start=1):
            pending.append((row_no, row))
            if chunk_size is not None and len(pending) == chunk_size:
                index += 1
                yield _rows_to_batch(
                    header, pending, str(path), index, response, intercept
                )
                pending = []
        if pending or index == 0:
            index += 1
            yield _rows_to_batch(header, pending, str(path), index, response, intercept)


def apply_stream(
    state: estimators.StreamingState,
    source,
    update: Callable[..., estimators.StreamingState] = estimators.update_state,
    *,
    cfg: estimators.SolverConfig = estimators.DEFAULT_SOLVER,
    save_path=None,
    save_every_batch: bool = False,
    on_batch: Callable[[int, int, estimators.StreamingState, float], None] | None = None,
) -> estimators.StreamingState:
    """Drive an estimator over every batch of a source.

    At most one batch is alive at any time: each batch is released before the
    next one is requested, so memory stays at one batch plus the O(p²) state.
    ``on_batch(index, n, state, sup_change)`` is invoked after each update;
    with ``save_path`` set, a checkpoint is written after every batch or once
    at the end.
    """
    it = iter(source)
    while True:
        try:
            batch = next(it)
        except StopIteration:
            break
        if batch.p != state.p:
            raise InconsistentWidth(
                f"batch {batch.index} has design width {batch.p}, "
                f"state expects {state.p}"
            )
        previous = state.beta
        index, n = batch.index, batch.n
        state = update(state, batch, cfg)
        del batch
        if on_batch is not None:
            change = float(np.max(np.abs(state.beta - previous)))
            on_batch(index, n, state, change)
        if save_path is not None and save_every_batch:
            save_checkpoint(state, save_path)
    if save_path is not None and not save_every_batch:
        save_checkpoint(state, save_path)
    return state


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def _encode(value: float) -> str:
    # 17 significant decimal digits identify a double uniquely (exact resume).
    return format(float(value), ".17g")


def _encode_vector(arr: np.ndarray) -> list[str]:
    return [_encode(v) for v in np.asarray(arr).ravel()]


def _decode_vector(values, p: int, name: str) -> np.ndarray:
    arr = np.array([float(v) for v in values], dtype=np.float64)
    if arr.shape != (p,):
        raise CheckpointError(f"field {name!r} has {arr.size} entries, expected {p}")
    return arr


def _decode_matrix(values, p: int, name: str) -> np.ndarray:
    arr = np.array([float(v) for v in values], dtype=np.float64)
    if arr.size != p * p:
        raise CheckpointError(
            f"field {name!r} has {arr.size} entries, expected {p * p}"
        )
    return arr.reshape(p, p)


def _cee_payload(state: estimators.CeeState) -> dict:
    return {
        "beta": _encode_vector(state.beta),
        "q_agg": _encode_vector(state.q_agg),
        "v": _encode_vector(state.v),
        "n_total": state.n_total,
        "batches_seen": state.batches_seen,
    }


def _cee_from_payload(payload: dict, p: int) -> estimators.CeeState:
    return estimators.CeeState(
        beta=_decode_vector(payload["beta"], p, "beta"),
        q_agg=_decode_matrix(payload["q_agg"], p, "q_agg"),
        v=_decode_matrix(payload["v"], p, "v"),
        n_total=int(payload["n_total"]),
        batches_seen=int(payload["batches_seen"]),
    )


def _document(state: estimators.StreamingState) -> dict:
    method = estimators.method_of_state(state)
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "method": method.value,
        "p": state.p,
        "batches_seen": state.batches_seen,
        "n_total": state.n_total,
        "beta": _encode_vector(state.beta),
        "q_agg": _encode_vector(state.q_agg),
    }
    if isinstance(state, estimators.RenewableState):
        doc["c_agg"] = _encode_vector(state.c_agg)
    elif isinstance(state, estimators.CueeState):
        doc["v"] = _encode_vector(state.v)
        doc["qb_sum"] = _encode_vector(state.qb_sum)
        doc["s_sum"] = _encode_vector(state.s_sum)
        doc["cee"] = _cee_payload(state.cee_companion)
    else:
        doc["v"] = _encode_vector(state.v)
    return doc


def _digest(doc: dict) -> str:
    canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def save_checkpoint(state: estimators.StreamingState, path) -> None:
    """Write a state to ``path`` atomically (temp file + rename).

    The document is JSON with all floating values as 17-significant-digit
    decimal strings and a SHA-256 digest over the canonical serialization,
    so resumed runs are bit-identical and tampering is detected on load.
    """
    path = Path(path)
    doc = _document(state)
    doc["digest"] = _digest(doc)
    fd, tmp_name = tempfile.mkstemp(
        prefix=path.name + ".", suffix=".tmp", dir=path.parent
    )
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            json.dump(doc, handle, indent=1, sort_keys=True)
            handle.write("\n")
        os.replace(tmp_name, path)
    except BaseException:
        try:
            os.unlink(tmp_name)
        except OSError:
            pass
        raise


def load_checkpoint(
    path, expect_method: estimators.Method | None = None
) -> estimators.StreamingState:
    """Reconstruct a state from a checkpoint file.

    Verifies the digest and format version; ``expect_method`` guards against
    resuming a checkpoint with the wrong estimator.
    """
    path = Path(path)
    with open(path, encoding="utf-8") as handle:
        try:
            doc = json.load(handle)
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"{path}: not a valid checkpoint: {exc}") from exc
    if not isinstance(doc, dict):
        raise CheckpointError(f"{path}: not a checkpoint document")
    recorded = doc.pop("digest", None)
    if recorded is None or recorded != _digest(doc):
        raise DigestMismatch(f"{path}: digest does not match checkpoint content")
    version = doc.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise VersionMismatch(
            f"{path}: format version {version!r}, supported {CHECKPOINT_VERSION}"
        )
    try:
        method = estimators.Method(doc["method"])
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"{path}: unknown method tag") from exc
    if expect_method is not None and method is not estimators.Method(expect_method):
        raise MethodMismatch(
            f"{path}: checkpoint holds {method.value!r} state, "
            f"expected {estimators.Method(expect_method).value!r}"
        )
    try:
        p = int(doc["p"])
        n_total = int(doc["n_total"])
        batches_seen = int(doc["batches_seen"])
        beta = _decode_vector(doc["beta"], p, "beta")
        q_agg = _decode_matrix(doc["q_agg"], p, "q_agg")
        if method is estimators.Method.RENEWABLE:
            return estimators.RenewableState(
                beta=beta,
                q_agg=q_agg,
                c_agg=_decode_matrix(doc["c_agg"], p, "c_agg"),
                n_total=n_total,
                batches_seen=batches_seen,
            )
        if method is estimators.Method.CUEE:
            return estimators.CueeState(
                beta=beta,
                q_agg=q_agg,
                qb_sum=_decode_vector(doc["qb_sum"], p, "qb_sum"),
                s_sum=_decode_vector(doc["s_sum"], p, "s_sum"),
                v=_decode_matrix(doc["v"], p, "v"),
                cee_companion=_cee_from_payload(doc["cee"], p),
                n_total=n_total,
                batches_seen=batches_seen,
            )
        if method is estimators.Method.CEE:
            return estimators.CeeState(
                beta=beta,
                q_agg=q_agg,
                v=_decode_matrix(doc["v"], p, "v"),
                n_total=n_total,
                batches_seen=batches_seen,
            )
    except KeyError as exc:
        raise CheckpointError(f"{path}: missing field {exc}") from exc
    raise CheckpointError(f"{path}: method {method.value!r} has no checkpoint layout")
