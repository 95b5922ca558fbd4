import pytest

from utils import db_to_linear, derive_rng, derive_seed, id_to_triplet, is_power_of_two, linear_to_db, triplet_to_id


def test_derived_seeds_are_stable_and_distinct():
    assert derive_seed(7, 1, 2) == derive_seed(7, 1, 2)
    assert derive_seed(7, 1, 2) != derive_seed(7, 2, 1)
    assert derive_rng(3, 4).integers(1 << 30) == derive_rng(3, 4).integers(1 << 30)


def test_triplet_ids_cover_the_vocabulary():
    concepts, relations = 5, 3
    ids = {triplet_to_id((h, r, t), concepts, relations)
           for h in range(concepts) for r in range(relations) for t in range(concepts)}
    assert ids == set(range(concepts * concepts * relations))
    for i in ids:
        assert triplet_to_id(id_to_triplet(i, concepts, relations), concepts, relations) == i


def test_db_helpers():
    assert db_to_linear(20.0) == pytest.approx(100.0)
    assert linear_to_db(1000.0) == pytest.approx(30.0)
    assert linear_to_db(0.0) == pytest.approx(-300.0)


@pytest.mark.parametrize("value,expected", [(1, True), (2, True), (48, False), (64, True), (0, False)])
def test_power_of_two(value, expected):
    assert is_power_of_two(value) is expected
