import struct

import numpy as np
import pytest

from kws.audio import (
    AudioClip,
    condition,
    decode_wav,
    encode_wav,
    fix_length,
    load_clip,
    normalize_amplitude,
    read_clip,
    resample,
    write_wav,
)
from kws.errors import (
    ArgumentError,
    DecodeError,
    EmptyAudioError,
    StorageError,
    UnsupportedFormatError,
)
from tests.conftest import wav_bytes


def test_decode_16bit_scaling():
    payload = np.array([0, 16384, -32768, 32767], dtype="<i2").tobytes()
    clip = decode_wav(wav_bytes(payload))
    assert clip.sample_rate == 8000
    np.testing.assert_array_equal(clip.samples, [0.0, 0.5, -1.0, 32767 / 32768])


def test_decode_8bit_is_offset_binary():
    clip = decode_wav(wav_bytes(bytes([128, 0, 192]), bits=8))
    np.testing.assert_array_equal(clip.samples, [0.0, -1.0, 0.5])


def test_decode_24bit_sign_extension():
    payload = b"\x00\x00\x40" + b"\xff\xff\xff" + b"\x00\x00\x80"
    clip = decode_wav(wav_bytes(payload, bits=24))
    np.testing.assert_allclose(clip.samples, [0.5, -1 / 8388608, -1.0])


def test_decode_float_is_clipped():
    payload = np.array([0.25, 1.5, -2.0], dtype="<f4").tobytes()
    clip = decode_wav(wav_bytes(payload, audio_format=3, bits=32))
    np.testing.assert_array_equal(clip.samples, [0.25, 1.0, -1.0])


def test_stereo_is_averaged():
    payload = np.array([16384, 0, -16384, -16384], dtype="<i2").tobytes()
    clip = decode_wav(wav_bytes(payload, channels=2, rate=16000))
    np.testing.assert_array_equal(clip.samples, [0.25, -0.5])
    assert clip.sample_rate == 16000


def test_unknown_chunks_are_skipped_with_word_alignment():
    odd = b"LIST" + struct.pack("<I", 3) + b"abc" + b"\x00"
    payload = np.array([8192], dtype="<i2").tobytes()
    clip = decode_wav(wav_bytes(payload, extra_chunks=odd))
    assert clip.samples.tolist() == [0.25]


def test_empty_data_chunk():
    with pytest.raises(EmptyAudioError):
        decode_wav(wav_bytes(b""))


def test_truncated_data_reports_offset():
    data = wav_bytes(b"\x00\x01" * 10, data_size=100)
    with pytest.raises(DecodeError) as info:
        decode_wav(data)
    assert info.value.offset == 36
    assert "offset 36" in str(info.value)


def test_non_pcm_codec_rejected():
    with pytest.raises(UnsupportedFormatError):
        decode_wav(wav_bytes(b"\x00" * 8, audio_format=0x55))


def test_not_riff():
    with pytest.raises(DecodeError) as info:
        decode_wav(b"OggS" + b"\x00" * 40)
    assert info.value.offset == 0


@pytest.mark.parametrize("bits, step", [(8, 1 / 128), (16, 1 / 32768), (24, 1 / 8388608)])
def test_integer_encode_is_within_one_step(rng, bits, step):
    clip = AudioClip(rng.uniform(-0.99, 0.99, 257), 8000)
    back = decode_wav(encode_wav(clip, bits))
    assert len(back) == 257
    assert np.max(np.abs(back.samples - clip.samples)) <= step / 2 + 1e-12


def test_float_encode(rng):
    clip = AudioClip(rng.uniform(-1, 1, 100), 22050)
    back = decode_wav(encode_wav(clip, 32))
    np.testing.assert_allclose(back.samples, clip.samples.astype(np.float32))
    assert back.sample_rate == 22050


def test_encode_bad_depth():
    with pytest.raises(ArgumentError):
        encode_wav(AudioClip(np.zeros(4), 8000), bits=12)


def test_write_and_read(tmp_path, rng):
    clip = AudioClip(rng.uniform(-0.5, 0.5, 800), 8000)
    write_wav(tmp_path / "a" / "x.wav", clip)
    back = read_clip(tmp_path / "a" / "x.wav")
    assert back.source_id.endswith("x.wav")
    assert np.max(np.abs(back.samples - clip.samples)) < 1 / 32768


def test_read_missing_file(tmp_path):
    with pytest.raises(StorageError):
        read_clip(tmp_path / "nope.wav")


def test_non_wav_without_decoder(tmp_path):
    path = tmp_path / "clip.ogg"
    path.write_bytes(b"OggS")
    with pytest.raises(UnsupportedFormatError):
        read_clip(path)


def test_missing_decoder_executable(tmp_path):
    path = tmp_path / "clip.ogg"
    path.write_bytes(b"OggS")
    with pytest.raises(StorageError):
        read_clip(path, decoder_cmd="no-such-decoder-binary-kws")


def test_resample_same_rate_is_identity(rng):
    clip = AudioClip(rng.uniform(-1, 1, 100), 8000)
    assert resample(clip, 8000) is clip


@pytest.mark.parametrize("source, n", [(16000, 16001), (44100, 44100), (48000, 12345), (11025, 999)])
def test_resample_length(source, n):
    clip = AudioClip(np.zeros(n), source)
    out = resample(clip, 8000)
    assert len(out) == int(np.floor(n * 8000 / source + 0.5))
    assert out.sample_rate == 8000


def test_resample_keeps_tone_frequency():
    source, freq = 44100, 1000.0
    t = np.arange(source) / source
    clip = AudioClip(0.5 * np.sin(2 * np.pi * freq * t), source)
    out = resample(clip, 8000)
    spectrum = np.abs(np.fft.rfft(out.samples))
    bin_hz = 8000 / len(out)
    assert abs(np.argmax(spectrum) * bin_hz - freq) <= bin_hz


@pytest.mark.parametrize("up", [16000, 24000])
@pytest.mark.parametrize("n", [7, 100, 8001])
def test_resample_round_trip_keeps_length(rng, up, n):
    clip = AudioClip(rng.uniform(-0.5, 0.5, n), 8000)
    back = resample(resample(clip, up), 8000)
    assert len(back) == n and back.sample_rate == 8000


def test_downsampled_tone_keeps_its_magnitude():
    t = np.arange(16000) / 16000
    out = resample(AudioClip(0.5 * np.sin(2 * np.pi * 440 * t), 16000), 8000)
    assert len(out) == 8000
    magnitude = 2 * np.abs(np.fft.rfft(out.samples)) / len(out)
    assert np.argmax(magnitude) == 440
    assert magnitude[440] == pytest.approx(0.5, rel=0.01)


def test_resample_bad_rate():
    with pytest.raises(ArgumentError):
        resample(AudioClip(np.zeros(10), 8000), 0)


def test_normalize_peak():
    clip = normalize_amplitude(AudioClip(np.array([0.1, -0.25, 0.2]), 8000))
    assert np.max(np.abs(clip.samples)) == 1.0
    np.testing.assert_allclose(clip.samples, [0.4, -1.0, 0.8])


def test_normalize_silence_passes_through():
    clip = AudioClip(np.zeros(5), 8000)
    assert normalize_amplitude(clip) is clip


def test_normalize_is_idempotent(rng):
    for scale in (0.001, 0.3, 1.0):
        once = normalize_amplitude(AudioClip(scale * rng.uniform(-1, 1, 500), 8000))
        twice = normalize_amplitude(once)
        np.testing.assert_array_equal(twice.samples, once.samples)
        assert np.max(np.abs(once.samples)) == 1.0


def test_fix_length_over_every_input_length():
    n = 40
    for length in range(1, 3 * n + 1):
        x = np.arange(1, length + 1, dtype=np.float64)
        out = fix_length(AudioClip(x, 8000), n).samples
        assert len(out) == n
        if length <= n:
            left = (n - length) // 2
            np.testing.assert_array_equal(out[left : left + length], x)
            assert not out[:left].any() and not out[left + length :].any()
        else:
            start = (length - n) // 2
            np.testing.assert_array_equal(out, x[start : start + n])


def test_fix_length_pads_extra_zero_on_right():
    out = fix_length(AudioClip(np.ones(7999), 8000))
    assert len(out) == 8000
    assert out.samples[0] == 1.0 and out.samples[-1] == 0.0

    out = fix_length(AudioClip(np.ones(7997), 8000))
    assert out.samples[:1].tolist() == [0.0]
    assert out.samples[-2:].tolist() == [0.0, 0.0]


def test_fix_length_center_crops():
    out = fix_length(AudioClip(np.arange(8003) / 8003, 8000))
    assert out.samples[0] == 1 / 8003
    assert len(out) == 8000


def test_fix_length_needs_pipeline_rate():
    with pytest.raises(ArgumentError):
        fix_length(AudioClip(np.zeros(100), 16000))


def test_condition_and_load(tmp_path):
    t = np.arange(16000 // 2) / 16000
    clip = AudioClip(0.3 * np.sin(2 * np.pi * 440 * t), 16000)
    framed = condition(clip)
    assert len(framed) == 8000
    assert np.isclose(np.max(np.abs(framed.samples)), 1.0)

    write_wav(tmp_path / "u.wav", clip)
    loaded = load_clip(tmp_path / "u.wav")
    assert len(loaded) == 8000 and loaded.sample_rate == 8000


def test_clip_validation():
    with pytest.raises(EmptyAudioError):
        AudioClip(np.zeros(0), 8000)
    with pytest.raises(ArgumentError):
        AudioClip(np.zeros((2, 2)), 8000)
    with pytest.raises(DecodeError):
        AudioClip(np.array([0.0, np.nan]), 8000)
