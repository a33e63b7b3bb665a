import unittest
from fractions import Fraction

import numpy as np
import pytest

from combinatorics import (
    A_set,
    A_set_oracle,
    CombinatoricsError,
    Perm,
    all_perms,
    build_pairing,
    classify_P1,
    count_P1,
    is_perm,
    expected_count_P1,
    lemma55_identity,
    pairing_dominates,
    random_region_y,
    records,
    sigma_distribution,
    sigma_stat,
    verify,
)
from streams import Stream, substream


class SigmaStatTest(unittest.TestCase):
    def test_identity_has_no_non_records(self):
        self.assertEqual(sigma_stat(Perm((1, 2, 3))), 0)

    def test_reversal(self):
        p = Perm((3, 2, 1))
        self.assertEqual(records(p), [1])
        self.assertEqual(sigma_stat(p), 2)

    def test_distribution_m3(self):
        self.assertEqual(sigma_distribution(3), {0: 1, 1: 3, 2: 2})

    def test_is_perm(self):
        self.assertTrue(is_perm([2, 3, 1]))
        self.assertTrue(is_perm([]))
        self.assertFalse(is_perm([0, 1, 2]))
        self.assertFalse(is_perm([1, 1, 2]))

    def test_invalid_perm(self):
        with self.assertRaises(CombinatoricsError):
            Perm((1, 1, 2))
        with self.assertRaises(CombinatoricsError):
            Perm((1, 2))(3)


@pytest.mark.parametrize("m", range(1, 8))
@pytest.mark.parametrize("A", [Fraction(1), Fraction(2), Fraction(1, 2), Fraction(7, 3)], ids=str)
def test_lemma55_identity_exact(m, A):
    lhs, rhs, equal = lemma55_identity(m, A)
    assert isinstance(lhs, Fraction)
    assert equal
    assert lhs == rhs


def test_lemma55_examples():
    assert lemma55_identity(1, Fraction(5, 2))[:2] == (Fraction(5, 2), Fraction(5, 2))
    assert lemma55_identity(3, 2) == (Fraction(24), Fraction(24), True)
    assert lemma55_identity(5, "7/3")[2]


def test_lemma55_guards():
    with pytest.raises(CombinatoricsError):
        lemma55_identity(9, 2)
    with pytest.raises(CombinatoricsError):
        lemma55_identity(3, 0)


def test_classify_examples():
    assert all(classify_P1(p) for p in all_perms(2))
    assert classify_P1(Perm((3, 4, 1, 2)))
    assert classify_P1(Perm((4, 3, 1, 2)))
    assert not classify_P1(Perm((2, 3, 1, 4)))
    with pytest.raises(CombinatoricsError):
        classify_P1(Perm((1, 2, 3)))


@pytest.mark.parametrize("m", [2, 4, 6])
def test_count_P1(m):
    assert count_P1(m) == expected_count_P1(m)
    assert expected_count_P1(m) == {2: 2, 4: 8, 6: 48}[m]


@pytest.mark.parametrize("m", range(1, 7))
def test_A_set_matches_oracle(m):
    for p in all_perms(m):
        for i in range(1, m + 1):
            assert A_set(p, i) == A_set_oracle(p, i)


def test_A_set_random_m8():
    rng = np.random.default_rng(4)
    for _ in range(200):
        p = Perm(tuple(rng.permutation(8) + 1))
        for i in range(1, 9):
            assert A_set(p, i) == A_set_oracle(p, i)


def test_pairing_identity_m2():
    assert build_pairing(Perm((1, 2))) == Perm((1, 2))


@pytest.mark.parametrize("m", [2, 4, 6])
def test_pairing_properties(m):
    members = [p for p in all_perms(m) if classify_P1(p)]
    assert len(members) == expected_count_P1(m)
    for p in members:
        pairing = build_pairing(p)
        assert sorted(pairing) == list(range(1, m + 1))
        for j in range(1, m + 1):
            assert pairing(j) % 2 == j % 2
            assert pairing(j) in A_set(p, j)
        for i in range(2, m + 1, 2):
            evens = [k for k in A_set(p, i) if k % 2 == 0 and k <= m]
            assert evens == [pairing(i)]


def test_pairing_rejects_outside_P1():
    with pytest.raises(CombinatoricsError):
        build_pairing(Perm((2, 3, 1, 4)))


@pytest.mark.parametrize("m", [2, 4, 6])
def test_pairing_dominates_on_random_regions(m):
    rng = substream(7, Stream.COMBINATORICS, m)
    members = [p for p in all_perms(m) if classify_P1(p)]
    pairings = {p: build_pairing(p) for p in members}
    for _ in range(1000):
        y = random_region_y(m, gamma=8.0, eps=1e-2, rng=rng)
        odd = np.abs(y[0::2])
        assert np.all(odd < 1e-2)
        assert np.all(np.abs(y[1::2]) > 8.0 * 1e-2)
        ordered = np.sort(odd)
        assert np.all(ordered[1:] >= 8.0 * ordered[:-1])
        for p in members:
            assert pairing_dominates(p, pairings[p], y)


def test_verify_reports_all_checks():
    results = verify(4, rng=substream(0, Stream.COMBINATORICS, 4), trials=200)
    names = {result.name for result in results}
    assert names == {"lemma55_identity", "A_set_oracle", "count_P1", "build_pairing_parity", "pairing_domination"}
    assert all(result.passed for result in results)


def test_verify_odd_m_skips_pairing():
    results = verify(3, rng=substream(0, Stream.COMBINATORICS, 3))
    assert {result.name for result in results} == {"lemma55_identity", "A_set_oracle"}
    assert all(result.passed for result in results)
