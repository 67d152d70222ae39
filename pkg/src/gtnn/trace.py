"""Per-epoch training trace: the file contract between trainer and diagnostics.

CSV schema: ``epoch,sample_id,loss,delta,sigma,label`` with one row per
(epoch, train sample). Floats are written with repr so a rewrite of the same
rows is byte-identical.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass


@dataclass
class TraceRow:
    epoch: int
    sample_id: str
    loss: float
    delta: float
    sigma: float
    label: str  # easy | hard


TRACE_HEADER = ["epoch", "sample_id", "loss", "delta", "sigma", "label"]


def write_trace(rows: list[TraceRow], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        for r in rows:
            writer.writerow([r.epoch, r.sample_id, repr(r.loss), repr(r.delta),
                             repr(r.sigma), r.label])


class TraceWriter:
    """Streaming sink for trainer trace rows."""

    def __init__(self, path: str):
        self._fh = open(path, "w", encoding="utf-8", newline="")
        self._writer = csv.writer(self._fh, lineterminator="\n")
        self._writer.writerow(TRACE_HEADER)

    def __call__(self, row: TraceRow) -> None:
        self._writer.writerow([row.epoch, row.sample_id, repr(row.loss),
                               repr(row.delta), repr(row.sigma), row.label])

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def read_trace(path: str) -> list[TraceRow]:
    rows: list[TraceRow] = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != TRACE_HEADER:
            raise ValueError(f"{path}:1: unexpected trace header {header!r}")
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(TRACE_HEADER):
                raise ValueError(f"{path}:{lineno}: expected {len(TRACE_HEADER)} fields, got {len(rec)}")
            epoch_s, sid, loss_s, delta_s, sigma_s, label = rec
            try:
                rows.append(TraceRow(epoch=int(epoch_s), sample_id=sid,
                                     loss=float(loss_s), delta=float(delta_s),
                                     sigma=float(sigma_s), label=label))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: malformed trace row") from None
            if label not in ("easy", "hard"):
                raise ValueError(f"{path}:{lineno}: unknown label {label!r}")
    return rows
