import struct
from typing import Optional

import numpy as np
import pytest

from kws.corpus import LabelMap, synth_dataset


def wav_bytes(
    payload: bytes,
    *,
    audio_format: int = 1,
    channels: int = 1,
    rate: int = 8000,
    bits: int = 16,
    block_align: Optional[int] = None,
    data_size: Optional[int] = None,
    extra_chunks: bytes = b"",
) -> bytes:
    """Hand-assembled RIFF/WAVE bytes, independent of ``encode_wav``."""
    if block_align is None:
        block_align = channels * bits // 8
    fmt = struct.pack("<HHIIHH", audio_format, channels, rate, rate * block_align, block_align, bits)
    size = len(payload) if data_size is None else data_size
    body = (
        b"WAVE"
        + b"fmt " + struct.pack("<I", len(fmt)) + fmt
        + extra_chunks
        + b"data" + struct.pack("<I", size) + payload
    )
    return b"RIFF" + struct.pack("<I", len(body)) + body


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def label_map10():
    return LabelMap(tuple(f"kw{i}" for i in range(10)))


@pytest.fixture(scope="session")
def tiny_synth(tmp_path_factory):
    """3 classes x 12 clips, written once per session."""
    out = tmp_path_factory.mktemp("synth")
    records, _ = synth_dataset(out, num_classes=3, per_class=12, seed=3)
    return out, records
