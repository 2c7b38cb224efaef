import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from PIL import Image

from diffcap.corpus import (AnnotationRecord, Vocabulary, build_vocab,
                            dataset_stats, extract_frame_pairs, load_annotations,
                            save_annotations, split_by_video, tokenize,
                            video_id_of, PAD_ID, BOS_ID, EOS_ID, UNK_ID)
from diffcap.errors import InvalidInputError
from diffcap.imaging import whole_image_l2


class TestTokenize:
    def test_punctuation_separated(self):
        assert tokenize("The red car left.") == ["the", "red", "car", "left", "."]

    def test_empty_string(self):
        assert tokenize("") == []

    def test_interior_punctuation(self):
        assert tokenize("two,people") == ["two", ",", "people"]

    @given(st.text(alphabet="abc ,.!x", max_size=40))
    @settings(max_examples=50, deadline=None)
    def test_idempotent_on_joined_output(self, text):
        once = tokenize(text)
        assert tokenize(" ".join(once)) == once


def records_from(sentences_by_id):
    return [AnnotationRecord(img_id=i, sentences=s, video_id=video_id_of(i))
            for i, s in sentences_by_id.items()]


class TestVocabulary:
    def test_min_count_filters(self):
        recs = records_from({"v0_a": ["a a a", "a b"]})
        vocab = build_vocab(recs, min_count=2)
        assert "a" in vocab.index
        assert "b" not in vocab.index
        assert vocab.encode(["b"]) == [UNK_ID]

    def test_min_count_one_keeps_all(self):
        recs = records_from({"v0_a": ["x y z"]})
        vocab = build_vocab(recs, min_count=1)
        for t in ("x", "y", "z"):
            assert t in vocab.index

    def test_reserved_ids_fixed(self):
        recs = records_from({"v0_a": ["hello world"]})
        vocab = build_vocab(recs, min_count=1)
        assert vocab.tokens[PAD_ID] == "<pad>"
        assert vocab.tokens[BOS_ID] == "<bos>"
        assert vocab.tokens[EOS_ID] == "<eos>"
        assert vocab.tokens[UNK_ID] == "<unk>"

    def test_frequency_then_alphabetical_order(self):
        recs = records_from({"v0_a": ["b b b c c a a"]})
        vocab = build_vocab(recs, min_count=1)
        assert vocab.tokens[4:] == ["b", "a", "c"]

    def test_deterministic(self):
        recs = records_from({"v0_a": ["p q r p q p"], "v0_b": ["r r q"]})
        assert build_vocab(recs, 1).tokens == build_vocab(recs, 1).tokens

    def test_empty_train_split_rejected(self):
        with pytest.raises(InvalidInputError):
            build_vocab([], 1)

    def test_encode_decode_roundtrip(self):
        vocab = Vocabulary.from_words(["car", "red"])
        ids = vocab.encode(["red", "car", "zebra"])
        assert ids == [5, 4, UNK_ID]
        assert vocab.decode(ids) == ["red", "car", "<unk>"]


class TestSplitByVideo:
    def make_records(self, n_videos, per_video=1):
        recs = []
        for v in range(n_videos):
            for i in range(per_video):
                recs.append(AnnotationRecord(img_id=f"vid{v}_p{i}",
                                             sentences=["s ."],
                                             video_id=f"vid{v}"))
        return recs

    def test_equal_videos_meet_ratios(self):
        split = split_by_video(self.make_records(10), (0.8, 0.1, 0.1), seed=0)
        assert len(split.train) == 8
        assert len(split.val) == 1
        assert len(split.test) == 1

    def test_videos_not_divided_across_splits(self):
        rng = np.random.default_rng(0)
        recs = []
        for v in range(7):
            for i in range(int(rng.integers(1, 5))):
                recs.append(AnnotationRecord(img_id=f"vid{v}_p{i}",
                                             sentences=["s ."], video_id=f"vid{v}"))
        split = split_by_video(recs, (0.6, 0.2, 0.2), seed=3)
        seen = {}
        for name in ("train", "val", "test"):
            for rec in split.part(name):
                assert seen.setdefault(rec.video_id, name) == name
        total = len(split.train) + len(split.val) + len(split.test)
        assert total == len(recs)

    def test_same_seed_same_split(self):
        recs = self.make_records(9, 2)
        a = split_by_video(recs, seed=11)
        b = split_by_video(recs, seed=11)
        assert [r.img_id for r in a.train] == [r.img_id for r in b.train]
        assert [r.img_id for r in a.test] == [r.img_id for r in b.test]

    def test_too_few_videos_rejected(self):
        with pytest.raises(InvalidInputError):
            split_by_video(self.make_records(2), seed=0)

    def test_bad_ratios_rejected(self):
        with pytest.raises(InvalidInputError):
            split_by_video(self.make_records(5), (0.5, 0.2, 0.2), seed=0)


class TestAnnotations:
    def test_roundtrip(self, tmp_path):
        recs = records_from({"clipA_01": ["a car left .", "a person came ."],
                             "clipB_02": ["nothing changed ."]})
        path = tmp_path / "annotations.json"
        save_annotations(path, recs)
        loaded = load_annotations(path)
        assert [r.img_id for r in loaded] == [r.img_id for r in recs]
        assert loaded[0].sentences == recs[0].sentences
        assert loaded[0].video_id == "clipA"

    def test_video_delimiter_configurable(self):
        assert video_id_of("scene-003-pair7", "-") == "scene"
        assert video_id_of("plain", "_") == "plain"

    def test_record_without_sentences_rejected(self):
        with pytest.raises(InvalidInputError):
            AnnotationRecord(img_id="x", sentences=[])

    def test_malformed_file_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"not": "a list"}')
        with pytest.raises(InvalidInputError):
            load_annotations(path)


class TestExtractFramePairs:
    def write_frames(self, tmp_path, arrays):
        for i, arr in enumerate(arrays):
            Image.fromarray(arr).save(tmp_path / f"frame{i:03d}.png")

    def test_identical_frames_rejected_by_lower_threshold(self, tmp_path):
        img = np.full((8, 8, 3), 100, dtype=np.uint8)
        self.write_frames(tmp_path, [img, img.copy()])
        kept = extract_frame_pairs(tmp_path, count=10, lower=1.0, upper=1e9, seed=0)
        assert kept == []

    def test_open_thresholds_keep_all_samples(self, tmp_path):
        rng = np.random.default_rng(0)
        self.write_frames(tmp_path, [rng.integers(0, 256, (8, 8, 3), dtype=np.uint8)
                                     for _ in range(4)])
        kept = extract_frame_pairs(tmp_path, count=12, lower=0.0,
                                   upper=float("inf"), seed=1)
        assert len(kept) == 12

    def test_kept_set_matches_exhaustive_filter_oracle(self, tmp_path):
        rng = np.random.default_rng(2)
        frames = [rng.integers(0, 256, (8, 8, 3), dtype=np.uint8) for _ in range(5)]
        self.write_frames(tmp_path, frames)
        lower, upper = 500.0, 900.0
        all_sampled = extract_frame_pairs(tmp_path, count=30, lower=0.0,
                                          upper=float("inf"), seed=7)
        kept = extract_frame_pairs(tmp_path, count=30, lower=lower,
                                   upper=upper, seed=7)
        by_name = {f"frame{i:03d}.png": arr for i, arr in enumerate(frames)}
        expect = [(c.file1, c.file2) for c in all_sampled
                  if lower < whole_image_l2(by_name[c.file1], by_name[c.file2]) < upper]
        assert [(c.file1, c.file2) for c in kept] == expect
        for c in kept:
            assert lower < c.distance < upper

    def test_empty_directory_rejected(self, tmp_path):
        with pytest.raises(InvalidInputError):
            extract_frame_pairs(tmp_path, count=5, lower=0, upper=10, seed=0)

    def test_bad_thresholds_rejected(self, tmp_path):
        img = np.zeros((4, 4, 3), dtype=np.uint8)
        self.write_frames(tmp_path, [img, img])
        with pytest.raises(InvalidInputError):
            extract_frame_pairs(tmp_path, count=5, lower=10.0, upper=5.0, seed=0)


class TestDatasetStats:
    def test_toy_corpus_aggregates(self):
        recs = records_from({
            "v0_a": ["a a a b .", "a b ."],
            "v1_b": ["c c c c c c c c c c c c c c c c c c c c c ."],
        })
        stats = dataset_stats(recs, min_count=3)
        assert stats["annotations"] == 2
        assert stats["sentences_per_annotation_mean"] == pytest.approx(1.5)
        assert stats["vocabulary_size"] == 4        # a, b, c, .
        assert stats["frequent_word_types"] == 3    # a(4), c(21), .(3)
        assert stats["long_sentence_fraction"] == pytest.approx(1 / 3)
