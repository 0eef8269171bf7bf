"""Optional cycles-per-instruction counter via Linux perf events.

Measures unhalted cycles and retired instructions around the delivery
phase so their ratio can be reported alongside wall-clock timings.
Counter access is a privileged, platform-dependent feature; when the
perf_event interface is missing or denied the hook reports itself as
unavailable and the benchmark leaves the column empty. No estimate is
ever substituted.
"""

from __future__ import annotations

import ctypes
import os
import platform
import struct

PERF_TYPE_HARDWARE = 0
PERF_COUNT_HW_CPU_CYCLES = 0
PERF_COUNT_HW_INSTRUCTIONS = 1

_IOC_ENABLE = 0x2400
_IOC_DISABLE = 0x2401
_IOC_RESET = 0x2403

_SYSCALL_NR = {"x86_64": 298, "aarch64": 241}

_ATTR_FLAG_DISABLED = 1 << 0
_ATTR_FLAG_EXCLUDE_KERNEL = 1 << 5
_ATTR_FLAG_EXCLUDE_HV = 1 << 6


class _PerfEventAttr(ctypes.Structure):
    _fields_ = [
        ("type", ctypes.c_uint32),
        ("size", ctypes.c_uint32),
        ("config", ctypes.c_uint64),
        ("sample_period", ctypes.c_uint64),
        ("sample_type", ctypes.c_uint64),
        ("read_format", ctypes.c_uint64),
        ("flags", ctypes.c_uint64),
        ("wakeup_events", ctypes.c_uint32),
        ("bp_type", ctypes.c_uint32),
        ("bp_addr", ctypes.c_uint64),
        ("bp_len", ctypes.c_uint64),
    ]


def _open_counter(config: int, group_fd: int) -> int:
    nr = _SYSCALL_NR.get(platform.machine())
    if nr is None or platform.system() != "Linux":
        raise OSError("perf_event_open unsupported on this platform")
    attr = _PerfEventAttr()
    attr.type = PERF_TYPE_HARDWARE
    attr.size = ctypes.sizeof(_PerfEventAttr)
    attr.config = config
    attr.flags = _ATTR_FLAG_DISABLED | _ATTR_FLAG_EXCLUDE_KERNEL | _ATTR_FLAG_EXCLUDE_HV
    libc = ctypes.CDLL(None, use_errno=True)
    fd = libc.syscall(nr, ctypes.byref(attr), 0, -1, group_fd, 0)
    if fd < 0:
        errno = ctypes.get_errno()
        raise OSError(errno, os.strerror(errno) if errno else "perf_event_open failed")
    return fd


class CyclesInstructionsCounter:
    """Paired cycle/instruction counters; ``available`` gates all use."""

    def __init__(self):
        self._fd_cycles = -1
        self._fd_instructions = -1
        self.cycles = 0
        self.instructions = 0
        try:
            self._fd_cycles = _open_counter(PERF_COUNT_HW_CPU_CYCLES, -1)
            self._fd_instructions = _open_counter(
                PERF_COUNT_HW_INSTRUCTIONS, self._fd_cycles
            )
            self.available = True
        except OSError:
            self.close()
            self.available = False

    def _ioctl(self, request: int) -> None:
        import fcntl

        fcntl.ioctl(self._fd_cycles, request, 0)
        fcntl.ioctl(self._fd_instructions, request, 0)

    def start(self) -> None:
        if not self.available:
            return
        self._ioctl(_IOC_RESET)
        self._ioctl(_IOC_ENABLE)

    def stop(self) -> None:
        if not self.available:
            return
        self._ioctl(_IOC_DISABLE)
        self.cycles += struct.unpack("q", os.read(self._fd_cycles, 8))[0]
        self.instructions += struct.unpack("q", os.read(self._fd_instructions, 8))[0]

    def cpi(self) -> float | None:
        if not self.available or self.instructions == 0:
            return None
        return self.cycles / self.instructions

    def close(self) -> None:
        for fd in (self._fd_cycles, self._fd_instructions):
            if fd >= 0:
                try:
                    os.close(fd)
                except OSError:
                    pass
        self._fd_cycles = -1
        self._fd_instructions = -1

    def __del__(self):
        self.close()
