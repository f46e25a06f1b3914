"""Dataset ingestion, round-trips, and split validation."""

import json

import pytest

from lds.core import (ClassSplit, DataError, Dataset, TextSample, load_dataset,
                      save_dataset, validate_split)


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


class TestLoadDataset:
    def test_two_lines_one_class(self, tmp_path):
        path = tmp_path / "d.jsonl"
        write_jsonl(path, [{"text": "a", "label": "X"},
                           {"text": "b", "label": "X"}])
        ds = load_dataset(path)
        assert len(ds.samples) == 2
        assert ds.class_names == ["X"]
        assert ds.index["X"] == [0, 1]

    def test_missing_label_names_line(self, tmp_path):
        path = tmp_path / "d.jsonl"
        write_jsonl(path, [{"text": "a", "label": "X"}, {"text": "b"}])
        with pytest.raises(DataError, match="line 2"):
            load_dataset(path)

    def test_index_sizes(self, tmp_path):
        path = tmp_path / "d.jsonl"
        write_jsonl(path, [{"text": f"x{i}", "label": "X"} for i in range(3)]
                    + [{"text": f"y{i}", "label": "Y"} for i in range(2)])
        ds = load_dataset(path)
        assert {c: len(ix) for c, ix in ds.index.items()} == {"X": 3, "Y": 2}

    def test_malformed_json_names_line(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text('{"text": "a", "label": "X"}\nnot json\n')
        with pytest.raises(DataError, match="line 2"):
            load_dataset(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text("")
        with pytest.raises(DataError, match="empty"):
            load_dataset(path)

    def test_unknown_fields_ignored(self, tmp_path):
        path = tmp_path / "d.jsonl"
        write_jsonl(path, [{"text": "a", "label": "X", "extra": 1}])
        assert load_dataset(path).samples[0].text == "a"

    def test_round_trip_preserves_sequence(self, tmp_path):
        path = tmp_path / "d.jsonl"
        records = [{"text": f"sample {i}", "label": f"c{i % 3}"}
                   for i in range(9)]
        write_jsonl(path, records)
        ds = load_dataset(path)
        out = tmp_path / "copy.jsonl"
        save_dataset(ds, out)
        ds2 = load_dataset(out)
        assert ds2.samples == ds.samples
        assert ds2.index == ds.index


class TestTextSample:
    def test_whitespace_text_rejected(self):
        with pytest.raises(DataError):
            TextSample("   ", "X")

    def test_empty_label_rejected(self):
        with pytest.raises(DataError):
            TextSample("a", "")


def make_dataset(sizes):
    samples = [TextSample(f"{c} sample {i}", c)
               for c, n in sizes.items() for i in range(n)]
    return Dataset(samples)


class TestValidateSplit:
    def test_overlap_reported(self):
        ds = make_dataset({"A": 5, "B": 5, "C": 5})
        split = ClassSplit(("A", "B"), (), ("B", "C"))
        violations = validate_split(ds, split, 2, 1, 1)
        assert any("split overlap" in v for v in violations)

    def test_boundary_insufficient_samples(self):
        # K + M - 1 samples is one short
        ds = make_dataset({"A": 3, "B": 4, "C": 4})
        split = ClassSplit((), (), ("A", "B", "C"))
        violations = validate_split(ds, split, 2, 2, 2)
        assert any("insufficient samples" in v and "'A'" in v
                   for v in violations)

    def test_valid_split_ok(self):
        ds = make_dataset({"A": 6, "B": 6, "C": 6, "D": 6})
        split = ClassSplit(("A", "B"), (), ("C", "D"))
        assert validate_split(ds, split, 2, 2, 2) == []

    def test_unknown_class(self):
        ds = make_dataset({"A": 6, "B": 6})
        split = ClassSplit(("A",), (), ("Z",))
        violations = validate_split(ds, split, 1, 1, 1)
        assert any("unknown class" in v for v in violations)

    def test_pool_smaller_than_n_way(self):
        ds = make_dataset({"A": 6, "B": 6, "C": 6})
        split = ClassSplit(("A", "B"), (), ("C",))
        violations = validate_split(ds, split, 2, 1, 1)
        assert any("needs 2" in v or "episode needs 2" in v
                   for v in violations)
