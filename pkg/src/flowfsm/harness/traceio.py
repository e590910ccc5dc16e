"""Trace and result file formats.

The canonical trace is a CSV with a header row. Pre-parsed mode carries
integer protocol columns (decimal or 0x-hex); raw mode carries ts,
in_port and the hex-encoded frame bytes. Timestamps must be
non-decreasing; that is checked while reading so a bad file is rejected
with the offending row number.

Verdicts are written one CSV row per packet; stats are a JSON document.
A minimal classic-pcap importer converts captures to raw-mode CSV so the
engine keeps exactly one input path.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Optional, Union

from ..engine import NonMonotoneTimestampError, PacketVerdict
from ..stats import RunStats

TRACE_COLUMNS = (
    "ts",
    "in_port",
    "pkt_len",
    "eth_src",
    "eth_dst",
    "ip_src",
    "ip_dst",
    "ip_proto",
    "sport",
    "dport",
    "tcp_flags",
    "dscp",
)

RAW_COLUMNS = ("ts", "in_port", "raw")

VERDICT_COLUMNS = (
    "seq",
    "ts",
    "action",
    "pre_state",
    "post_state",
    "row_id",
    "cond_bits",
)


class TraceFormatError(Exception):
    """The trace file cannot be interpreted."""


def _parse_int(text: str, where: str) -> int:
    try:
        return int(text, 0)
    except ValueError:
        raise TraceFormatError(f"{where}: {text!r} is not an integer") from None


def read_trace(
    path: Union[str, Path], mode: str = "csv"
) -> Iterator[dict[str, object]]:
    """Stream trace rows as dicts of ints (plus frame bytes in raw mode)."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise TraceFormatError(f"{path}: empty trace")
        if "ts" not in reader.fieldnames:
            raise TraceFormatError(f"{path}: missing required column 'ts'")
        if mode == "raw" and "raw" not in reader.fieldnames:
            raise TraceFormatError(f"{path}: raw mode needs a 'raw' column")
        last_ts: Optional[int] = None
        for lineno, row in enumerate(reader, start=2):
            where = f"{path}:{lineno}"
            out: dict[str, object] = {}
            for key, value in row.items():
                if value is None or value == "" or key is None:
                    continue
                if key == "raw":
                    try:
                        out["raw"] = bytes.fromhex(value)
                    except ValueError:
                        raise TraceFormatError(
                            f"{where}: raw column is not hex"
                        ) from None
                else:
                    out[key] = _parse_int(value, f"{where} column {key!r}")
            if "ts" not in out:
                raise TraceFormatError(f"{where}: missing ts value")
            ts = out["ts"]
            assert isinstance(ts, int)
            if last_ts is not None and ts < last_ts:
                raise NonMonotoneTimestampError(
                    f"{where}: timestamp {ts} after {last_ts}"
                )
            last_ts = ts
            yield out


def write_trace(
    path: Union[str, Path],
    rows: Iterable[Mapping[str, object]],
    columns: tuple[str, ...] = TRACE_COLUMNS,
) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([row.get(col, 0) for col in columns])


def verdict_row(verdict: PacketVerdict) -> list:
    return [
        verdict.seq,
        verdict.ts,
        verdict.action_str,
        verdict.pre_state,
        verdict.post_state,
        verdict.row_id,
        f"{verdict.cond_bits:08b}",
    ]


def write_verdicts(
    path: Union[str, Path], verdicts: Iterable[PacketVerdict]
) -> int:
    """Write the verdict CSV; returns the packet count."""
    count = 0
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(VERDICT_COLUMNS)
        for verdict in verdicts:
            writer.writerow(verdict_row(verdict))
            count += 1
    return count


def write_stats(
    path: Union[str, Path], stats: RunStats, include_timing: bool = False
) -> None:
    Path(path).write_text(stats.to_json(include_timing) + "\n")


# ---------------------------------------------------------------------------
# optional capture import (classic pcap only)

# magic -> (struct endianness, fraction-field units per microsecond)
_PCAP_MAGICS = {
    0xA1B2C3D4: ("<", 1),
    0xD4C3B2A1: (">", 1),
    0xA1B23C4D: ("<", 1_000),  # nanosecond variant
    0x4D3CB2A1: (">", 1_000),
}


def read_pcap(path: Union[str, Path]) -> Iterator[tuple[int, bytes]]:
    """Yield (timestamp in microseconds, frame bytes) from a classic pcap."""
    with Path(path).open("rb") as fh:
        header = fh.read(24)
        if len(header) < 24:
            raise TraceFormatError(f"{path}: truncated pcap header")
        magic = struct.unpack("<I", header[:4])[0]
        if magic not in _PCAP_MAGICS:
            magic = struct.unpack(">I", header[:4])[0]
        if magic not in _PCAP_MAGICS:
            raise TraceFormatError(f"{path}: not a classic pcap file")
        endian, frac_per_us = _PCAP_MAGICS[magic]
        while True:
            rec = fh.read(16)
            if len(rec) < 16:
                return
            ts_sec, ts_frac, incl_len, _ = struct.unpack(endian + "IIII", rec)
            data = fh.read(incl_len)
            if len(data) < incl_len:
                raise TraceFormatError(f"{path}: truncated packet record")
            yield ts_sec * 1_000_000 + ts_frac // frac_per_us, data


def pcap_to_csv(pcap_path: Union[str, Path], out_path: Union[str, Path]) -> int:
    """Convert a capture to a raw-mode trace; returns the packet count."""
    count = 0
    with Path(out_path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RAW_COLUMNS)
        for ts_us, frame in read_pcap(pcap_path):
            writer.writerow([ts_us, 0, frame.hex()])
            count += 1
    return count
