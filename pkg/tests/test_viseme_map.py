import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from viseme_toolkit.errors import (
    DictionaryParseError,
    GarbageMergeError,
    InventoryError,
    MapFormatError,
    OutOfVocabularyError,
    PartitionError,
    TranscriptError,
)
from viseme_toolkit.viseme_map import (
    GARBAGE,
    STANDARD_MAP_TEXT,
    PronunciationDict,
    Transcript,
    TranscriptUnit,
    apply_garbage_threshold,
    count_visemes,
    garbage_merged_map,
    load_dictionary,
    load_inventory,
    load_viseme_map,
    map_phoneme,
    save_viseme_map,
    standard_map,
    viseme_dictionary,
    words_to_visemes,
)

RARE = ("v08", "v09", "v14", "v15")


def counts_with_rare(vmap, common=200, rare=10):
    return {vid: (rare if vid in RARE else common) for vid in vmap.ids}


class TestDictionary:
    def test_parses_entry(self, standard):
        pdict = load_dictionary("RAVEN  r ey v ax n\n", standard.inventory)
        assert pdict.lookup("RAVEN") == (("r", "ey", "v", "ax", "n"),)

    def test_empty_file(self):
        assert len(load_dictionary("")) == 0

    def test_lookup_is_case_insensitive(self, raven_dict):
        assert raven_dict.first("nevermore") == ("n", "eh", "v", "er", "m", "ao", "r")

    def test_variants_kept_in_order(self, raven_dict):
        assert raven_dict.lookup("THE") == (("dh", "ax"), ("dh", "iy"))

    def test_stress_digits_stripped(self):
        pdict = load_dictionary("THE  DH AH0\n")
        assert pdict.first("THE") == ("dh", "ah")

    def test_missing_phones_reports_line(self):
        with pytest.raises(DictionaryParseError) as info:
            load_dictionary("RAVEN  r ey v ax n\nQUOTH\n")
        assert info.value.line_number == 2

    def test_unknown_phoneme(self):
        with pytest.raises(InventoryError) as info:
            load_dictionary("FOO  f qq\n")
        assert info.value.symbol == "qq"

    def test_text_round_trip(self, raven_dict):
        again = load_dictionary(raven_dict.to_text())
        assert again.to_text() == raven_dict.to_text()
        assert again.lookup("THE") == raven_dict.lookup("THE")


class TestMapPhoneme:
    def test_standard_map_examples(self, standard):
        assert map_phoneme(standard, "p") == "v01"
        assert map_phoneme(standard, "sil") == "v18"
        assert map_phoneme(standard, "oy") == "v15"

    def test_garbage_merged_map(self):
        assert map_phoneme(garbage_merged_map(), "oy") == GARBAGE

    def test_unknown_phoneme(self, standard):
        with pytest.raises(InventoryError):
            standard.map_phoneme("qq")

    def test_silence_and_short_pause_classes(self, standard):
        assert standard.silence_id == "v18"
        assert standard.short_pause_id == "sp"
        assert "v18" not in standard.trainable_ids
        assert len(standard.trainable_ids) == 17


class TestMapFiles:
    def test_canonical_round_trip(self, standard):
        text = save_viseme_map(standard)
        assert save_viseme_map(load_viseme_map(text)) == text
        assert load_viseme_map(STANDARD_MAP_TEXT) == standard

    def test_class_without_phones(self):
        with pytest.raises(MapFormatError):
            load_viseme_map("v01 p b\nv02\n")

    def test_phoneme_in_two_classes(self):
        with pytest.raises(PartitionError):
            load_viseme_map("v01 p b\nv02 b m\n")

    def test_inventory_must_be_covered(self):
        inventory = load_inventory("p b m f  # labials\n")
        with pytest.raises(PartitionError):
            load_viseme_map("v01 p b m\n", inventory)


class TestTranscripts:
    def test_raven(self, raven_dict, standard):
        transcript = words_to_visemes(raven_dict, standard, ["RAVEN"])
        assert transcript.labels == ["v07", "v11", "v02", "v13", "v04"]
        assert transcript.units[0].word == "RAVEN"
        assert transcript.words == ["RAVEN"]

    def test_empty_word_list(self, raven_dict, standard):
        assert len(words_to_visemes(raven_dict, standard, [])) == 0

    def test_identical_visemes_not_collapsed(self, standard):
        pdict = PronunciationDict({"BMP": [("b", "m", "p")]})
        assert words_to_visemes(pdict, standard, ["BMP"]).labels == ["v01", "v01", "v01"]

    def test_length_matches_phone_count(self, raven_dict, standard):
        words = ["QUOTH", "THE", "RAVEN", "NEVERMORE"]
        expected = sum(len(raven_dict.first(w)) for w in words)
        assert len(words_to_visemes(raven_dict, standard, words)) == expected

    def test_out_of_vocabulary(self, raven_dict, standard):
        with pytest.raises(OutOfVocabularyError) as info:
            words_to_visemes(raven_dict, standard, ["RAVEN", "lenore", "LENORE"])
        assert info.value.words == ["LENORE"]

    def test_viseme_dictionary_keeps_distinct_variants(self, raven_dict, standard):
        vdict = viseme_dictionary(raven_dict, standard)
        assert vdict["THE"] == [("v03", "v13"), ("v03", "v16")]

    @pytest.mark.parametrize(
        "units",
        [
            (TranscriptUnit("v01", 0, 5), TranscriptUnit("v02", 4, 8)),
            (TranscriptUnit("v01", 0, None),),
            (TranscriptUnit("v01", 6, 2),),
        ],
    )
    def test_bad_timing_rejected(self, units):
        with pytest.raises(TranscriptError):
            Transcript(units)


class TestCounts:
    def test_counts(self, standard):
        counts = count_visemes([Transcript.from_labels(["v01", "v01", "v18"])], standard)
        assert counts["v01"] == 2
        assert counts["v18"] == 1
        assert sum(counts.values()) == 3

    def test_empty_collection(self, standard):
        assert set(count_visemes([], standard).values()) == {0}

    def test_unknown_label(self, standard):
        with pytest.raises(PartitionError):
            count_visemes([Transcript.from_labels(["v99"])], standard)


class TestGarbageMerge:
    def test_reproduces_garbage_merged_map(self, standard):
        merged = apply_garbage_threshold(standard, counts_with_rare(standard), 150)
        assert merged == garbage_merged_map()
        assert merged.as_sets() == garbage_merged_map().as_sets()

    def test_threshold_zero_is_identity(self, standard):
        assert apply_garbage_threshold(standard, counts_with_rare(standard), 0) == standard

    def test_idempotent(self, standard):
        counts = counts_with_rare(standard)
        once = apply_garbage_threshold(standard, counts, 150)
        assert apply_garbage_threshold(once, counts, 150) == once

    def test_everything_below_threshold(self, standard):
        counts = {vid: 1 for vid in standard.ids}
        merged = apply_garbage_threshold(standard, counts, 150)
        assert merged.ids == ["v18", "sp", GARBAGE]
        assert merged.map_phoneme("p") == GARBAGE
        assert merged.map_phoneme("sil") == "v18"

    def test_nothing_left_to_train(self, standard):
        counts = {vid: 0 for vid in standard.ids}
        with pytest.raises(GarbageMergeError):
            apply_garbage_threshold(standard, counts, 1)

    def test_counts_must_cover_classes(self, standard):
        with pytest.raises(GarbageMergeError):
            apply_garbage_threshold(standard, {"v01": 500}, 150)

    @given(
        counts=st.lists(st.integers(min_value=0, max_value=400), min_size=17, max_size=17),
        threshold=st.integers(min_value=0, max_value=300),
    )
    @settings(max_examples=60, deadline=None)
    def test_merge_keeps_partition(self, counts, threshold):
        standard = standard_map()
        by_id = dict(zip(standard.trainable_ids, counts))
        by_id.update({"v18": 0, "sp": 0})
        try:
            merged = apply_garbage_threshold(standard, by_id, threshold)
        except GarbageMergeError:
            assert all(by_id[v] < threshold for v in standard.trainable_ids)
            assert sum(by_id[v] for v in standard.trainable_ids) == 0
            return
        owners = {}
        for vid, members in merged.classes:
            for phone in members:
                assert phone not in owners
                owners[phone] = vid
        assert set(owners) == set(standard.inventory)
        for phone in standard.inventory:
            before = standard.map_phoneme(phone)
            if by_id.get(before, threshold) < threshold and before in standard.trainable_ids:
                assert merged.map_phoneme(phone) == GARBAGE
            else:
                assert merged.map_phoneme(phone) == before
