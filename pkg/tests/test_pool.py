"""Tests for the order-preserving worker pool."""
from xp_lab.modular import genus_and_volume
from xp_lab.pool import map_ordered


def test_serial_keeps_order():
    assert map_ordered(str, [3, 1, 2]) == ["3", "1", "2"]


def test_parallel_matches_serial():
    primes = [5, 7, 11, 13, 17]
    assert map_ordered(genus_and_volume, primes, jobs=3) == map_ordered(genus_and_volume, primes, jobs=1)


def test_empty():
    assert map_ordered(str, [], jobs=4) == []
