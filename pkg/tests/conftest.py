import struct

import numpy as np
import pytest

TEXT_OFFSET, TEXT_SIZE = 0x200, 512
DATA_OFFSET, DATA_SIZE = 0x400, 256


def build_minimal_pe(text: bytes | None = None, data: bytes | None = None, sections=None) -> bytes:
    """Smallest PE32 image pefile accepts: DOS stub, NT headers, section table.

    ``sections`` is a list of ``(name, raw_ptr, raw_size)``; by default a
    512-byte ``.text`` at 0x200 and a 256-byte ``.data`` at 0x400.
    """
    if sections is None:
        sections = [(b".text", TEXT_OFFSET, TEXT_SIZE), (b".data", DATA_OFFSET, DATA_SIZE)]
    dos = bytearray(0x40)
    dos[0:2] = b"MZ"
    struct.pack_into("<I", dos, 0x3C, 0x40)
    coff = struct.pack("<HHIIIHH", 0x14C, len(sections), 0, 0, 0, 224, 0x0102)
    opt = struct.pack(
        "<HBBIIIIIIIIIHHHHHHIIIIHHIIIIII",
        0x10B, 14, 0, TEXT_SIZE, DATA_SIZE, 0, 0x1000, 0x1000, 0x2000,
        0x400000, 0x1000, 0x200, 6, 0, 0, 0, 6, 0, 0,
        0x3000, 0x200, 0, 3, 0, 0x100000, 0x1000, 0x100000, 0x1000, 0, 16,
    ) + bytes(16 * 8)
    table = b""
    for i, (name, ptr, size) in enumerate(sections):
        table += struct.pack("<8sIIIIIIHHI", name, size, 0x1000 * (i + 1), size, ptr, 0, 0, 0, 0, 0x60000020)
    header = bytes(dos) + b"PE\0\0" + coff + opt + table
    end = max((ptr + size for _, ptr, size in sections), default=len(header))
    image = bytearray(max(end, len(header)))
    image[:len(header)] = header
    bodies = [text, data]
    for i, (_, ptr, size) in enumerate(sections):
        body = bodies[i] if i < len(bodies) and bodies[i] is not None else None
        if body is None:
            body = np.random.default_rng(i).integers(0, 256, size, dtype=np.uint8).tobytes()
        image[ptr:ptr + size] = body[:size].ljust(size, b"\0")
    return bytes(image)


@pytest.fixture
def minimal_pe() -> bytes:
    return build_minimal_pe()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            props = dict(getattr(rep, "user_properties", ()))
            if "criterion" in props and rep.when == "call":
                lines.append((props["criterion"], outcome, props.get("summary", "")))
    if lines:
        terminalreporter.section("acceptance criteria")
        for n, outcome, summary in sorted(lines):
            mark = "PASS" if outcome == "passed" else "FAIL"
            terminalreporter.write_line(f"[{mark}] criterion {n:>2}: {summary}")
