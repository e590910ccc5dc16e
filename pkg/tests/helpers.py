"""Shared test utilities: reference models, frame builder, config helpers.

The reference models here are deliberately simple re-implementations used
as oracles; they must not call into the package's table or ALU code.
"""

from __future__ import annotations

import dataclasses
import struct

from flowfsm import programs
from flowfsm.extractor import PacketRecord


def scan_lookup(entries, key):
    """Linear-scan ternary match oracle: entries are (value, mask, prio, payload)."""
    best = None
    for value, mask, priority, payload in entries:
        if key & mask == value & mask:
            if best is None or priority > best[0]:
                best = (priority, payload)
    return best[1] if best else None


class RefContextModel:
    """Plain-dict reference for the flow context store.

    Mirrors the contract: default synthesis, wildcard fallback, write-back
    elision of default contexts, in-place updates, ACTIVE/INACTIVE
    housekeeping with eviction on the second idle scan.
    """

    def __init__(self, num_registers=4):
        self.num_registers = num_registers
        self.entries = {}  # key -> [state, regs list, active flag]
        self.fallbacks = []  # (value, mask, priority, state, regs)
        self.evictions = 0

    def add_fallback(self, value, mask, priority, state, regs=None):
        regs = list(regs or [])
        regs += [0] * (self.num_registers - len(regs))
        self.fallbacks.append((value, mask, priority, state, regs))

    def lookup(self, key):
        entry = self.entries.get(key)
        if entry is not None:
            entry[2] = True
            return entry[0], tuple(entry[1])
        best = None
        for value, mask, priority, state, regs in self.fallbacks:
            if key & mask == value & mask:
                if best is None or priority > best[0]:
                    best = (priority, state, regs)
        if best is not None:
            return best[1], tuple(best[2])
        return 0, (0,) * self.num_registers

    def write_back(self, key, state, regs):
        entry = self.entries.get(key)
        if entry is not None:
            entry[0] = state
            entry[1] = list(regs)
            entry[2] = True
            return
        if state == 0 and not any(regs):
            return
        self.entries[key] = [state, list(regs), True]

    def housekeep(self):
        evicted = [k for k, e in self.entries.items() if not e[2]]
        for k in evicted:
            del self.entries[k]
        for e in self.entries.values():
            e[2] = False
        self.evictions += len(evicted)
        return len(evicted)


def build_frame(
    *,
    eth_src=b"\x02\x00\x00\x00\x00\x01",
    eth_dst=b"\x02\x00\x00\x00\x00\x02",
    ip_src=0x0A000001,
    ip_dst=0x0A000002,
    proto=6,
    sport=1234,
    dport=80,
    tcp_flags=0x10,
    payload=b"",
):
    """Hand-assembled Ethernet + IPv4 + TCP frame (no options, no checksum)."""
    eth = eth_dst + eth_src + struct.pack("!H", 0x0800)
    total_len = 20 + 20 + len(payload)
    ip = struct.pack(
        "!BBHHHBBH4s4s",
        0x45,
        0,
        total_len,
        0,
        0,
        64,
        proto,
        0,
        ip_src.to_bytes(4, "big"),
        ip_dst.to_bytes(4, "big"),
    )
    tcp = struct.pack(
        "!HHIIBBHHH", sport, dport, 0, 0, 0x50, tcp_flags, 8192, 0, 0
    )
    return eth + ip + tcp + payload


def record(h=None, ts=0, in_port=0, length=0):
    full = [0] * 8
    for slot, value in (h or {}).items():
        full[slot] = value
    return PacketRecord(h=full, ts=ts, in_port=in_port, length=length)


def token_bucket_config(burst, q):
    """Bundled token-bucket program re-parameterized for (burst, q)."""
    cfg = programs.bundled_program("token_bucket")
    return dataclasses.replace(
        cfg,
        globals_init=(
            (burst * q) & 0xFFFFFFFF,
            q,
            ((burst - 2) * q) % (1 << 32),
            0,
        ),
    )


def window_bound_holds(times, burst, q):
    """Check every time window obeys count <= burst + floor(T / q).

    Equivalent pairwise form: for all i <= j over forwarded times t,
    j - i + 1 <= burst + floor((t_j - t_i) / q), which for integer ticks
    is t_j - t_i >= q * (j - i + 1 - burst). Substituting u_k = t_k - q*k
    turns that into u_j >= max_{i<=j} u_i + q*(1 - burst), checkable with
    one prefix-max sweep.
    """
    prefix_max = None
    for k, t in enumerate(times):
        u = t - q * k
        if prefix_max is not None and u < prefix_max + q * (1 - burst):
            return False
        prefix_max = u if prefix_max is None or u > prefix_max else prefix_max
    return True


def window_bound_brute(times, burst, q, max_pairs=40000):
    """Direct quadratic version of the window bound, for cross-checking."""
    n = len(times)
    checked = 0
    for i in range(n):
        for j in range(i, n):
            if times[j] - times[i] < q * (j - i + 1 - burst):
                return False
            checked += 1
            if checked >= max_pairs:
                return True
    return True
