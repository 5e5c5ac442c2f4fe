import csv
import io

import pytest

from medpatch.crossval import SplitMix64, chunks, make_nested_splits, shuffled
from medpatch.errors import ConfigError, ValidationError

IDS = [f"sub{i:03d}" for i in range(100)]


class TestShuffle:
    def test_splitmix_reference_value(self):
        assert SplitMix64(0).next() == 0xE220A8397B1DCDAF

    def test_shuffle_is_a_permutation(self):
        out = shuffled(IDS, 9)
        assert sorted(out) == IDS
        assert out != IDS

    def test_shuffle_depends_only_on_seed(self):
        assert shuffled(IDS, 3) == shuffled(IDS, 3)
        assert shuffled(IDS, 3) != shuffled(IDS, 4)

    def test_chunks(self):
        assert [len(c) for c in chunks(list(range(11)), 3)] == [4, 4, 3]
        assert sum(chunks(list(range(11)), 3), []) == list(range(11))


class TestNestedSplits:
    def test_five_by_five(self):
        plan = make_nested_splits(IDS, 5, 5, seed=1)
        assert len(plan) == 25
        for fold in plan.folds:
            assert (len(fold.test), len(fold.validation), len(fold.train)) == (20, 16, 64)
            assert not set(fold.test) & set(fold.validation)
            assert not set(fold.test) & set(fold.train)
            assert not set(fold.train) & set(fold.validation)
            assert set(fold.train) | set(fold.validation) | set(fold.test) == set(IDS)

    def test_outer_test_sets_partition_subjects(self):
        plan = make_nested_splits(IDS, 5, 5, seed=1)
        tests = {fold.outer: fold.test for fold in plan.folds}
        assert sorted(s for test in tests.values() for s in test) == IDS

    def test_inner_validation_sets_partition_remainder(self):
        plan = make_nested_splits(IDS, 5, 5, seed=1)
        outer0 = [f for f in plan.folds if f.outer == 0]
        validation = sorted(s for f in outer0 for s in f.validation)
        assert validation == sorted(set(IDS) - set(outer0[0].test))

    def test_reproducible(self):
        a = make_nested_splits(IDS, 4, 3, seed=11)
        b = make_nested_splits(list(IDS), 4, 3, seed=11)
        assert a.to_csv_text() == b.to_csv_text()

    def test_uneven_sizes(self):
        plan = make_nested_splits(IDS[:23], 4, 3, seed=0)
        assert sorted(len(f.test) for f in plan.folds if f.inner == 0) == [5, 6, 6, 6]

    def test_single_fold(self):
        plan = make_nested_splits(IDS, 5, 5, seed=1, mode="single_fold")
        assert len(plan) == 1
        assert plan.folds[0].name == "outer_0/inner_0"

    def test_too_few_subjects(self):
        with pytest.raises(ConfigError, match="at least 6"):
            make_nested_splits(IDS[:5], 3, 2, seed=0)

    def test_duplicates(self):
        with pytest.raises(ValidationError):
            make_nested_splits(IDS[:10] + ["sub000"], 2, 2, seed=0)

    @pytest.mark.parametrize("k_outer,k_inner", [(1, 5), (5, 1)])
    def test_k_at_least_two(self, k_outer, k_inner):
        with pytest.raises(ConfigError):
            make_nested_splits(IDS, k_outer, k_inner, seed=0)

    def test_csv(self, tmp_path):
        plan = make_nested_splits(IDS[:12], 3, 2, seed=2)
        path = plan.to_csv(tmp_path / "split_plan.csv").unwrapped
        rows = list(csv.DictReader(io.StringIO(path.read_text())))
        assert list(rows[0]) == ["outer", "inner", "role", "subject_id"]
        assert len(rows) == len(plan) * 12
        roles = {r["role"] for r in rows}
        assert roles == {"train", "validation", "test"}
