"""PE section tables, printable strings and per-section entropy streams.

Input that does not start with ``MZ`` is treated as a raw blob: it gets a
single pseudo-section named ``<whole-file>`` covering every byte.
"""
from __future__ import annotations

import logging
import re
import struct
from dataclasses import dataclass

from .entropy import DEFAULT_CHUNK_SIZE, EntropyStream, entropy_stream

logger = logging.getLogger(__name__)

WHOLE_FILE = "<whole-file>"
DEFAULT_MIN_STRING_LEN = 5

_DOS_HEADER_LEN = 0x40
_COFF_HEADER_LEN = 20
_SECTION_HEADER_LEN = 40
_SECTION_HEADER = struct.Struct("<8sIIII")  # name, vsize, vaddr, raw size, raw ptr


class MalformedPEError(ValueError):
    """The input claims to be a PE (``MZ`` magic) but its headers are unusable."""

    def __init__(self, detail: str = ""):
        super().__init__("malformed PE" + (f": {detail}" if detail else ""))


@dataclass(frozen=True)
class SectionInfo:
    name: str
    file_offset: int
    size: int

    @property
    def end(self) -> int:
        return self.file_offset + self.size


def parse_sections(data: bytes) -> list[SectionInfo]:
    """Return the raw-data extents of every section in a PE image.

    Raw sizes running past end of file are clipped to the file length.
    Non-PE input yields one ``<whole-file>`` pseudo-section.

    Raises
    ------
    MalformedPEError
        If the ``MZ`` magic is present but the DOS/COFF headers or the
        section table are truncated, the ``PE`` signature is missing, or
        two sections' raw data overlap.
    """
    data = bytes(data)
    n = len(data)
    if data[:2] != b"MZ":
        return [SectionInfo(WHOLE_FILE, 0, n)]
    if n < _DOS_HEADER_LEN:
        raise MalformedPEError("truncated DOS header")
    (e_lfanew,) = struct.unpack_from("<I", data, 0x3C)
    if e_lfanew + 4 + _COFF_HEADER_LEN > n:
        raise MalformedPEError("truncated NT headers")
    if data[e_lfanew:e_lfanew + 4] != b"PE\0\0":
        raise MalformedPEError("missing PE signature")
    coff = e_lfanew + 4
    n_sections, = struct.unpack_from("<H", data, coff + 2)
    opt_size, = struct.unpack_from("<H", data, coff + 16)
    table = coff + _COFF_HEADER_LEN + opt_size
    if table + n_sections * _SECTION_HEADER_LEN > n:
        raise MalformedPEError("truncated section table")

    sections = []
    for i in range(n_sections):
        raw_name, _vsize, _vaddr, raw_size, raw_ptr = _SECTION_HEADER.unpack_from(
            data, table + i * _SECTION_HEADER_LEN
        )
        name = raw_name.rstrip(b"\0").decode("latin-1")
        if raw_ptr >= n or raw_size == 0:
            sections.append(SectionInfo(name, min(raw_ptr, n), 0))
            continue
        sections.append(SectionInfo(name, raw_ptr, min(raw_size, n - raw_ptr)))

    spans = sorted((s for s in sections if s.size), key=lambda s: s.file_offset)
    for a, b in zip(spans, spans[1:]):
        if b.file_offset < a.end:
            raise MalformedPEError(f"sections {a.name!r} and {b.name!r} overlap")
    return sections


def extract_strings(data: bytes, min_len: int = DEFAULT_MIN_STRING_LEN) -> list[str]:
    """Maximal runs of printable ASCII (0x20-0x7E) at least ``min_len`` long."""
    if min_len < 1:
        raise ValueError("min_len must be >= 1")
    pattern = re.compile(rb"[\x20-\x7e]{%d,}" % min_len)
    return [m.group().decode("ascii") for m in pattern.finditer(bytes(data))]


def section_entropy_streams(
    data: bytes,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    notes: list | None = None,
) -> list[tuple[SectionInfo, EntropyStream]]:
    """One entropy stream per section; chunks never straddle sections.

    Sections smaller than one chunk are skipped.  A note is logged for each
    skip and, if ``notes`` is given, appended to it.
    """
    data = bytes(data)
    out = []
    for sec in parse_sections(data):
        if sec.size < chunk_size:
            msg = f"skipped section {sec.name!r}: {sec.size} bytes < chunk size {chunk_size}"
            logger.debug(msg)
            if notes is not None:
                notes.append(msg)
            continue
        body = data[sec.file_offset:sec.end]
        out.append((sec, entropy_stream(body, chunk_size, source_label=sec.name)))
    return out
