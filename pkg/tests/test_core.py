from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from datingsim.core import (
    AttributeSchema,
    DegenerateMassError,
    DomainError,
    Partial,
    SchemaError,
    as_simplex,
    cell_values,
    convex_combine,
    drop_protected,
    extension_cells,
    from_code,
    is_simplex,
    rescale_to_subsimplex,
    score_attributes,
    to_code,
)
from datingsim.interventions import base_schema

SCHEMA5 = base_schema(1)
SCHEMA9 = base_schema(2)


def simplex(n: int):
    return st.lists(st.floats(0.0, 1.0), min_size=n, max_size=n).filter(lambda v: sum(v) > 1e-6).map(
        lambda v: np.array(v) / sum(v)
    )


class TestSchema:
    def test_baseline_layout(self):
        assert SCHEMA5.total_count == 5
        assert [SCHEMA5.kind(k) for k in range(5)] == [
            "matching/searchable",
            "matching/searchable",
            "matching/experiential",
            "competing/searchable",
            "competing/experiential",
        ]
        assert SCHEMA5.searchable_indices.tolist() == [0, 1, 3]
        assert SCHEMA5.experiential_indices.tolist() == [2, 4]

    def test_protected_must_be_matching_searchable(self):
        with pytest.raises(SchemaError):
            AttributeSchema(matching=(False, True), searchable=(True, True))
        with pytest.raises(SchemaError):
            AttributeSchema(matching=(True, True), searchable=(False, True))

    def test_check_rejects_wrong_length(self):
        with pytest.raises(SchemaError):
            SCHEMA5.check([1, 0, 1])

    def test_code_roundtrip(self):
        for code in range(32):
            assert to_code(from_code(code, 5)) == code


class TestScore:
    def test_matching_equal_is_plus_one(self):
        assert score_attributes([1, 1, 1, 1, 1], [1, 1, 1, 1, 1], SCHEMA5)[0] == 1

    def test_competing_cases(self):
        # index 3 is competing
        lo, hi = [0, 0, 0, 0, 0], [0, 0, 0, 1, 0]
        assert score_attributes(lo, hi, SCHEMA5)[3] == 1
        assert score_attributes(hi, hi, SCHEMA5)[3] == 0
        assert score_attributes(hi, lo, SCHEMA5)[3] == -1

    def test_all_matching_identity_gives_ones(self):
        schema = AttributeSchema(matching=(True,) * 4, searchable=(True,) * 4)
        bits = [1, 0, 1, 1]
        assert score_attributes(bits, bits, schema).tolist() == [1, 1, 1, 1]

    def test_length_mismatch(self):
        with pytest.raises(SchemaError):
            score_attributes([1, 0], [1, 0, 0, 0, 0], SCHEMA5)

    def test_exhaustive_truth_table(self):
        for a, b in itertools.product(itertools.product((0, 1), repeat=5), repeat=2):
            s = score_attributes(a, b, SCHEMA5)
            for k in range(5):
                if SCHEMA5.matching[k]:
                    assert s[k] == (1 if a[k] == b[k] else -1)
                else:
                    assert s[k] == {(0, 1): 1, (1, 0): -1}.get((a[k], b[k]), 0)

    @given(st.integers(0, 511), st.integers(0, 511))
    def test_symmetry_properties(self, a, b):
        x, y = from_code(a, 9), from_code(b, 9)
        forward = score_attributes(x, y, SCHEMA9)
        backward = score_attributes(y, x, SCHEMA9)
        match = np.array(SCHEMA9.matching)
        assert np.array_equal(forward[match], backward[match])
        assert np.array_equal(forward[~match], -backward[~match])

    @given(simplex(5), st.integers(0, 31))
    def test_cell_values_agree_with_scores(self, prefs, own):
        values = cell_values(prefs, [own], SCHEMA5)[0]
        for code in range(32):
            expected = prefs @ score_attributes(from_code(own, 5), from_code(code, 5), SCHEMA5)
            assert values[code] == pytest.approx(expected, abs=1e-12)


class TestPartial:
    def test_from_entries(self):
        p = Partial.from_entries([1, None, 0, None, 1])
        assert p.entries(5) == [1, None, 0, None, 1]
        assert p.extended_by(0b10001)
        assert not p.extended_by(0b10000)

    def test_values_outside_mask_rejected(self):
        with pytest.raises(SchemaError):
            Partial(0b01, 0b10)

    @given(st.integers(0, 31), st.integers(0, 31))
    def test_extension_count(self, code, mask):
        cells = extension_cells(mask, code & mask, 5)
        assert cells.size == 2 ** (5 - bin(mask).count("1"))
        assert all((c & mask) == (code & mask) for c in cells)


class TestSimplexOps:
    def test_convex_identity_ends(self):
        a, b = np.array([0.2, 0.8]), np.array([0.6, 0.4])
        assert np.array_equal(convex_combine(a, b, 0.0), a)
        assert np.array_equal(convex_combine(a, b, 1.0), b)

    def test_convex_interpolation(self):
        assert convex_combine([1.0, 0.0], [0.0, 1.0], 0.25).tolist() == [0.75, 0.25]

    def test_convex_rejects_theta(self):
        with pytest.raises(DomainError):
            convex_combine([1.0, 0.0], [0.0, 1.0], 1.5)

    @given(simplex(5), simplex(5), st.floats(0.0, 1.0))
    def test_convex_closure(self, a, b, theta):
        assert is_simplex(convex_combine(a, b, theta))

    def test_rescale(self):
        assert rescale_to_subsimplex([0.2, 0.3, 0.5], {0, 1}) == pytest.approx([0.4, 0.6])
        v = np.array([0.2, 0.3, 0.5])
        assert np.allclose(rescale_to_subsimplex(v, {0, 1, 2}), v)
        with pytest.raises(DegenerateMassError):
            rescale_to_subsimplex([0.0, 0.0, 1.0], {0, 1})

    def test_as_simplex_renormalises_drift_only(self):
        out = as_simplex([0.5, 0.5 + 1e-8])
        assert out.sum() == pytest.approx(1.0, abs=1e-12)
        with pytest.raises(DomainError):
            as_simplex([0.5, 0.6])
        with pytest.raises(DomainError):
            as_simplex([1.1, -0.1])

    def test_drop_protected(self):
        out = drop_protected(np.array([0.4, 0.6, 0, 0, 0]), SCHEMA5)
        assert out.tolist() == [0.0, 1.0, 0.0, 0.0, 0.0]
