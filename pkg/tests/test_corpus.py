from collections import Counter

import numpy as np
import pytest

from kws.audio import AudioClip, read_wav, write_wav
from kws.corpus import (
    BACKGROUND_LABEL,
    KeywordEntry,
    LabelMap,
    PlantedKeyword,
    UtteranceRecord,
    aggregate_keywords,
    build_manifest,
    default_corpus,
    default_split_mode,
    largest_remainder,
    load_corpus,
    load_manifest,
    load_planted,
    make_label_map,
    save_corpus,
    save_manifest,
    save_planted,
    split_manifest,
    synth_corpus,
    render_burst,
    synth_dataset,
    synth_frequency,
    synth_stream,
)
from kws.errors import (
    ArgumentError,
    DecodeError,
    DuplicateKeywordError,
    EmptyManifestError,
    InfeasibleSplitError,
    StorageError,
    ValidationError,
)


def row(keyword, language="luganda", category="crop", **kw):
    return {"keyword": keyword, "language": language, "category": category, **kw}


# ---------------------------------------------------------------------------
# Keyword aggregation
# ---------------------------------------------------------------------------


def test_case_folded_dedup():
    corpus = aggregate_keywords([[row("Kasooli"), row("kasooli")]])
    assert corpus.keywords == ["kasooli"]
    assert not corpus.conflicts


def test_first_source_wins_category_conflict():
    corpus = aggregate_keywords([[row("kasooli", category="crop")], [row("kasooli", category="general")]])
    assert len(corpus) == 1
    assert corpus.get("kasooli").category == "crop"
    (conflict,) = corpus.conflicts
    assert conflict.kept == "crop" and conflict.dropped == "general" and conflict.source == 1


def test_same_keyword_different_language_kept_apart():
    corpus = aggregate_keywords([[row("maize", "english"), row("maize", "luganda")]])
    assert len(corpus) == 2


def test_stem_match_merges_into_variants():
    corpus = aggregate_keywords(
        [[row("obutunda", stem="tunda"), row("butunda", stem="tunda", variants="obutunda|ebitunda")]]
    )
    assert corpus.keywords == ["obutunda"]
    assert corpus.get("obutunda").variants == ["butunda", "ebitunda"]
    assert corpus.resolve("ebitunda").keyword == "obutunda"
    assert corpus.resolve("tunda").keyword == "obutunda"
    assert corpus.resolve("unknown") is None


def test_invalid_rows_are_collected():
    corpus = aggregate_keywords([[row(""), row("kasooli"), row("x", language="french")]])
    assert corpus.keywords == ["kasooli"]
    assert [issue.row for issue in corpus.issues] == [1, 3]


def test_no_sources():
    with pytest.raises(ArgumentError):
        aggregate_keywords([])


def test_entry_normalization():
    entry = KeywordEntry(" Kasooli ", "Luganda", translation=" maize ", stem="", variants=["kasooli", "Kasoli", "kasoli"])
    assert entry.keyword == "kasooli"
    assert entry.translation == "maize"
    assert entry.stem is None
    assert entry.variants == ["kasoli"]


def test_aggregate_is_idempotent():
    sources = [
        [row("Kasooli"), row("obutunda", stem="tunda"), row("butunda", stem="tunda", variants="ebitunda")],
        [row("kasooli", category="general", translation="maize"), row("maize", "english")],
    ]
    once = aggregate_keywords(sources)
    assert once.conflicts
    twice = aggregate_keywords([[entry.to_row() for entry in once]])
    assert twice.entries == once.entries
    assert not twice.conflicts and not twice.issues


def test_corpus_csv_round_trip(tmp_path):
    corpus = default_corpus()
    save_corpus(corpus, tmp_path / "kw.csv")
    again = load_corpus([tmp_path / "kw.csv"])
    assert again.keywords == corpus.keywords
    assert again.get("obutunda").translation == "passion fruits"


def test_missing_corpus_file_names_path(tmp_path):
    with pytest.raises(StorageError, match="missing.csv"):
        load_corpus([tmp_path / "missing.csv"])


@pytest.mark.parametrize(
    "load",
    [lambda p: load_corpus([p]), load_manifest, load_planted],
    ids=["corpus", "manifest", "ground_truth"],
)
def test_csv_loaders_reject_invalid_utf8(tmp_path, load):
    path = tmp_path / "latin1.csv"
    path.write_bytes(b"\xff\xfekeyword,language\n")
    with pytest.raises(DecodeError, match="latin1.csv") as info:
        load(path)
    assert info.value.offset == 0

    path.write_bytes(b"keyword,language\nkas\xe9ooli,luganda\n")
    with pytest.raises(DecodeError) as info:
        load(path)
    assert info.value.offset == 20


def test_corpus_with_bom_loads(tmp_path):
    path = tmp_path / "kw.csv"
    path.write_bytes(b"\xef\xbb\xbfkeyword,language,category\nkasooli,luganda,crop\n")
    assert load_corpus([path]).keywords == ["kasooli"]


def test_oversized_csv_field_is_a_validation_error(tmp_path):
    path = tmp_path / "kw.csv"
    path.write_text("keyword,language\n" + "a" * 200_000 + ",luganda\n")
    with pytest.raises(ValidationError, match="kw.csv"):
        load_corpus([path])


def test_default_corpus_has_table_keywords():
    corpus = default_corpus()
    for keyword in ("kasooli", "obutunda", "akasanyi"):
        assert corpus.get(keyword).language == "luganda"
    assert len(corpus) >= 10


# ---------------------------------------------------------------------------
# Manifests
# ---------------------------------------------------------------------------


def _write_tree(root, files):
    for rel in files:
        write_wav(root / rel, AudioClip(np.full(80, 0.1), 8000))


def test_build_manifest_from_layout(tmp_path):
    corpus = aggregate_keywords([[row("kasooli"), row("obutunda")]])
    _write_tree(tmp_path, ["kasooli/spk1_0.wav", "kasooli/spk2_0.wav", "obutunda/spk1_3.wav"])
    records = build_manifest(tmp_path, corpus)
    assert [r.path for r in records] == ["kasooli/spk1_0.wav", "kasooli/spk2_0.wav", "obutunda/spk1_3.wav"]
    assert [r.speaker_id for r in records] == ["spk1", "spk2", "spk1"]
    assert all(r.split is None for r in records)


def test_unknown_keyword_is_excluded(tmp_path):
    corpus = aggregate_keywords([[row("kasooli")]])
    _write_tree(tmp_path, ["kasooli/a_0.wav", "unknownword/x.wav"])
    excluded = []
    records = build_manifest(tmp_path, corpus, excluded)
    assert len(records) == 1
    assert [e.path for e in excluded] == ["unknownword/x.wav"]


def test_only_unknown_keywords(tmp_path):
    _write_tree(tmp_path, ["unknownword/x.wav"])
    with pytest.raises(EmptyManifestError):
        build_manifest(tmp_path, aggregate_keywords([[row("kasooli")]]))


def test_missing_audio_dir(tmp_path):
    with pytest.raises(StorageError):
        build_manifest(tmp_path / "nope", default_corpus())


def test_sidecar_manifest_is_used(tmp_path):
    corpus = aggregate_keywords([[row("kasooli")]])
    save_manifest([UtteranceRecord("clips/1.wav", "kasooli", "s1", "luganda")], tmp_path / "manifest.csv")
    records = build_manifest(tmp_path, corpus)
    assert records == [UtteranceRecord("clips/1.wav", "kasooli", "s1", "luganda")]


def test_manifest_round_trip_rebases_paths(tmp_path):
    records = [UtteranceRecord("wav/a.wav", "kasooli", "s1", "luganda", "train")]
    save_manifest(records, tmp_path / "out" / "m.csv", root=tmp_path / "data")
    (loaded,) = load_manifest(tmp_path / "out" / "m.csv")
    assert loaded.path == "../data/wav/a.wav"
    assert loaded.resolve(tmp_path / "out") == tmp_path / "out" / "../data/wav/a.wav"
    assert loaded.split == "train"


def test_manifest_row_without_keyword(tmp_path):
    (tmp_path / "m.csv").write_text("path,keyword,speaker_id,language,split\na.wav,,s,luganda,\n")
    with pytest.raises(ValidationError) as info:
        load_manifest(tmp_path / "m.csv")
    assert info.value.row == 1


# ---------------------------------------------------------------------------
# Splits
# ---------------------------------------------------------------------------


def test_largest_remainder_on_full_corpus():
    assert largest_remainder(28792, [0.64, 0.16, 0.20]) == [18427, 4607, 5758]


def test_largest_remainder_sums():
    for n in range(0, 50):
        assert sum(largest_remainder(n, [0.64, 0.16, 0.20])) == n


def _records(n, keywords=10, speakers=None, rng=None):
    rng = rng or np.random.default_rng(0)
    out = []
    for i in range(n):
        speaker = f"s{rng.integers(speakers)}" if speakers else ""
        out.append(UtteranceRecord(f"{i}.wav", f"kw{i % keywords}", speaker, "luganda"))
    return out


def test_by_utterance_exact_counts():
    records = _records(1000)
    split = split_manifest(records, mode="by_utterance", seed=7)
    counts = Counter(r.split for r in split)
    assert (counts["train"], counts["val"], counts["test"]) == (640, 160, 200)


def test_by_utterance_is_stratified():
    split = split_manifest(_records(1000), mode="by_utterance", seed=3)
    for k in range(10):
        per = Counter(r.split for r in split if r.keyword == f"kw{k}")
        assert abs(per["train"] - 64) <= 1
        assert abs(per["test"] - 20) <= 1


def test_split_is_deterministic_and_keeps_order():
    records = _records(300, speakers=20)
    a = split_manifest(records, seed=5)
    b = split_manifest(records, seed=5)
    assert a == b
    assert [r.path for r in a] == [r.path for r in records]
    by_utt = split_manifest(records, mode="by_utterance", seed=5)
    assert by_utt != split_manifest(records, mode="by_utterance", seed=6)


def test_by_speaker_partitions_are_disjoint():
    rng = np.random.default_rng(11)
    for trial in range(1000):
        n = int(rng.integers(3, 60))
        records = _records(n, speakers=int(rng.integers(3, 12)), rng=rng)
        if len({r.speaker_id for r in records}) < 3:
            continue
        split = split_manifest(records, mode="by_speaker", seed=trial)
        owner = {}
        for r in split:
            assert owner.setdefault(r.speaker_id, r.split) == r.split
        assert len(split) == n
        assert {r.split for r in split} == {"train", "val", "test"}


def test_by_speaker_needs_three_speakers():
    records = [UtteranceRecord(f"{i}.wav", "kw", f"s{i % 2}", "luganda") for i in range(10)]
    with pytest.raises(InfeasibleSplitError):
        split_manifest(records, mode="by_speaker")


def test_default_mode():
    assert default_split_mode(_records(20, speakers=5)) == "by_speaker"
    assert default_split_mode(_records(20)) == "by_utterance"


@pytest.mark.parametrize("ratios", [[0.5, 0.5], [0.7, 0.2, 0.2], [1.0, 0.0, 0.0]])
def test_bad_ratios(ratios):
    with pytest.raises(ArgumentError):
        split_manifest(_records(10), ratios)


def test_empty_manifest_split():
    with pytest.raises(EmptyManifestError):
        split_manifest([])


# ---------------------------------------------------------------------------
# Label map
# ---------------------------------------------------------------------------


def test_label_map_order_and_lookup():
    lm = make_label_map(default_corpus(), ["kasooli", "obutunda", "akasanyi"])
    assert lm.index("obutunda") == 1
    assert lm.keyword(2) == "akasanyi"
    assert lm.background_index is None


def test_label_map_background():
    lm = make_label_map(default_corpus(), ["kasooli", "obutunda"], background=True)
    assert lm.labels[-1] == BACKGROUND_LABEL
    assert lm.background_index == 2


def test_label_map_duplicates():
    with pytest.raises(DuplicateKeywordError):
        LabelMap(("a", "b", "a"))


def test_label_map_needs_two():
    with pytest.raises(ArgumentError):
        LabelMap(("only",))


def test_label_map_unknown_keyword():
    with pytest.raises(ArgumentError):
        make_label_map(default_corpus(), ["kasooli", "nonexistent"])


def test_label_map_index_round_trip():
    lm = make_label_map(default_corpus(), ["kasooli", "obutunda", "akasanyi"], background=True)
    for i in range(len(lm)):
        assert lm.index(lm.keyword(i)) == i
    for keyword in lm.labels:
        assert lm.keyword(lm.index(keyword)) == keyword


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------


def test_synth_dataset_layout(tiny_synth):
    out, records = tiny_synth
    assert len(records) == 36
    assert Counter(r.keyword for r in records) == {"tone300hz": 12, "tone450hz": 12, "tone600hz": 12}
    assert load_manifest(out / "manifest.csv") == records
    assert load_corpus([out / "corpus.csv"]).keywords == synth_corpus(3).keywords
    clip = read_wav(out / records[0].path)
    assert len(clip) == 8000 and clip.sample_rate == 8000


def test_synth_dataset_is_reproducible(tmp_path):
    synth_dataset(tmp_path / "a", num_classes=2, per_class=3, seed=9)
    synth_dataset(tmp_path / "b", num_classes=2, per_class=3, seed=9)
    for name in ("tone300hz/s000_0.wav", "tone450hz/s002_0.wav"):
        assert (tmp_path / "a" / "wav" / name).read_bytes() == (tmp_path / "b" / "wav" / name).read_bytes()


def test_synth_tone_frequency(tmp_path):
    records, paths = synth_dataset(tmp_path, num_classes=4, per_class=1, snr_db=None, seed=1, pitch_jitter=0.0)
    for k, path in enumerate(sorted(paths)):
        spectrum = np.abs(np.fft.rfft(read_wav(path).samples))
        assert np.argmax(spectrum) == pytest.approx(synth_frequency(k), abs=2)


def _onset_and_peak(x, rate=8000):
    onset = int(np.argmax(np.abs(x) > 1e-6))
    return onset, float(np.argmax(np.abs(np.fft.rfft(x))) * rate / len(x))


def test_synth_utterances_vary_in_onset_pitch_and_envelope():
    bursts = [render_burst(np.random.default_rng([5, i]), 1050.0, snr_db=None) for i in range(200)]
    onsets, peaks = zip(*(_onset_and_peak(x) for x in bursts))
    # onsets cover the whole frame, not just the centre
    assert min(onsets) < 400
    assert max(onsets) > 8000 - 2400 - 400
    assert len(set(peaks)) > 10
    assert all(abs(p - 1050.0) <= 35.0 for p in peaks)
    energies = [float(np.sum(x**2)) for x in bursts]
    assert np.std(energies) > 0.05 * np.mean(energies)


def test_synth_pitch_excursion_stays_inside_class_spacing():
    for i in range(50):
        x = render_burst(np.random.default_rng(i), 3600.0, snr_db=None, pitch_jitter=0.5)
        _, peak = _onset_and_peak(x)
        assert abs(peak - 3600.0) <= 52.0


def test_synth_without_variation_is_centred():
    x = render_burst(
        np.random.default_rng(0), 600.0, snr_db=None, onset_jitter_s=0.0, pitch_jitter=0.0,
        amplitude_jitter=0.0, envelope_jitter=False,
    )
    onset, peak = _onset_and_peak(x)
    assert 2800 <= onset <= 2805
    assert peak == 600.0
    assert np.max(np.abs(x)) == pytest.approx(0.5, abs=5e-3)


def test_synth_background_class(tmp_path):
    records, _ = synth_dataset(tmp_path, num_classes=2, per_class=2, background_class=True)
    assert Counter(r.keyword for r in records)[BACKGROUND_LABEL] == 2


def test_synth_nyquist_guard(tmp_path):
    with pytest.raises(ArgumentError):
        synth_dataset(tmp_path, num_classes=30, per_class=1)


def test_synth_stream_plants(tmp_path):
    clip, truth = synth_stream([(2, 20.0), (0, 5.0)], duration_s=30.0, seed=4)
    assert len(clip) == 30 * 8000
    assert truth == [PlantedKeyword("tone300hz", 5.0), PlantedKeyword("tone600hz", 20.0)]
    burst = clip.samples[20 * 8000 + 2800 : 20 * 8000 + 5200]
    quiet = clip.samples[25 * 8000 : 26 * 8000]
    assert np.std(burst) > 3 * np.std(quiet)

    save_planted(truth, tmp_path / "truth.csv")
    assert load_planted(tmp_path / "truth.csv") == truth


def test_synth_stream_plant_outside_clip():
    with pytest.raises(ArgumentError):
        synth_stream([(0, 29.5)], duration_s=30.0)
