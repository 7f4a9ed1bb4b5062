"""Byte-reproducible zip construction.

Entries are stored uncompressed with a fixed timestamp (the zip format's
1980 epoch) and fixed permissions, in exactly the order given, so
identical inputs always produce identical archive bytes.
"""

from __future__ import annotations

import io
import zipfile

ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)


def deterministic_zip(entries: list[tuple[str, bytes]]) -> bytes:
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", compression=zipfile.ZIP_STORED) as zf:
        for name, data in entries:
            info = zipfile.ZipInfo(filename=name, date_time=ZIP_EPOCH)
            info.compress_type = zipfile.ZIP_STORED
            info.create_system = 0
            info.external_attr = (0o644 & 0xFFFF) << 16
            zf.writestr(info, data)
    return buf.getvalue()
