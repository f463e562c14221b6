"""Byte-reproducible array archives.

``np.savez`` stamps every zip member with the wall-clock time, so two
identical runs produce different files. This writer fixes the member
timestamp and order; the result still loads with ``np.load``.
"""

from __future__ import annotations

import zipfile
from pathlib import Path

import numpy as np

_EPOCH = (1980, 1, 1, 0, 0, 0)


def save_npz(path: str | Path, arrays: dict[str, np.ndarray], compress: bool = False) -> None:
    mode = zipfile.ZIP_DEFLATED if compress else zipfile.ZIP_STORED
    with zipfile.ZipFile(path, "w", compression=mode) as zf:
        for name in arrays:
            info = zipfile.ZipInfo(name + ".npy", date_time=_EPOCH)
            info.compress_type = mode
            info.external_attr = 0o644 << 16
            with zf.open(info, "w", force_zip64=True) as fh:
                np.lib.format.write_array(fh, np.asanyarray(arrays[name]), allow_pickle=False)
