import csv
import numpy as np
from loguru import logger

from laep.core import ExpertTokenCounts, check_conservation
from laep.utils.exceptions import TraceFormatError, ConservationError

TRACE_HEADER = ["iter", "layer", "expert", "tokens"]


def write_trace(trace: ExpertTokenCounts, path: str):
    """Writes a trace as UTF-8 CSV, one row per (iter, layer, expert) in sorted order."""
    iters, layers, experts = trace.counts.shape
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        for it in range(iters):
            for layer in range(layers):
                row = trace.counts[it, layer]
                writer.writerows(
                    (it, layer, expert, int(row[expert])) for expert in range(experts)
                )
    logger.debug(f"Wrote {trace!r} to {path}")


def read_trace(path: str, top_k: int = 1) -> ExpertTokenCounts:
    """Reads a trace CSV written by ``write_trace``.

    The file stores slot counts only, so ``top_k`` must be supplied to recover the
    tokens-per-iteration S (every row must sum to the same multiple of ``top_k``).
    A written trace reads back equal only with its own ``top_k``; with the default
    the counts match but S is read as the per-row slot total.
    """
    keys, values = [], []
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != TRACE_HEADER:
            raise TraceFormatError(f"expected header {','.join(TRACE_HEADER)!r}, got {header!r}", line=1)

        previous = None
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 4:
                raise TraceFormatError(f"expected 4 fields, got {len(row)}", line=lineno)
            try:
                it, layer, expert, tokens = (int(x) for x in row)
            except ValueError:
                raise TraceFormatError(f"non-integer field in {row!r}", line=lineno)
            if min(it, layer, expert, tokens) < 0:
                raise TraceFormatError(f"negative value in {row!r}", line=lineno)

            key = (it, layer, expert)
            if previous is not None and key <= previous:
                raise TraceFormatError(f"row {key} is out of (iter, layer, expert) order", line=lineno)
            previous = key
            keys.append(key)
            values.append(tokens)

    if not keys:
        raise TraceFormatError("trace is empty (header only)")

    shape = tuple(int(x) + 1 for x in np.max(np.asarray(keys), axis=0))
    if len(keys) != shape[0] * shape[1] * shape[2]:
        raise TraceFormatError(
            f"trace is not dense: {len(keys)} rows for shape {shape}"
        )
    counts = np.asarray(values, dtype=np.int64).reshape(shape)

    first_row = int(counts[0, 0].sum())
    if first_row == 0:
        raise TraceFormatError("iteration 0, layer 0 routes no tokens")
    if first_row % top_k:
        raise ConservationError(0, 0, first_row, top_k * (first_row // top_k))

    trace = ExpertTokenCounts(counts=counts, tokens_per_iter=first_row // top_k, top_k=top_k)
    check_conservation(trace)
    logger.debug(f"Read {trace!r} from {path}")
    return trace
