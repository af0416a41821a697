from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from snaqsim.geometry import (
    DotArray, GeometryError, CodePatch, WaveAssignment, as_density, assign_waves, build_array,
    embed_patch, make_patch, max_distance, n_waves, ports_per_side, rotated_stabilizers,
)


def waves_oracle(d, num, den):
    # ceil((d^2-1) / (2 (num/den) (d+1))) in integers
    top = (d * d - 1) * den
    bottom = 2 * num * (d + 1)
    return -(-top // bottom)


densities = st.fractions(min_value=Fraction(1, 4), max_value=4, max_denominator=12)
odd_d = st.integers(1, 15).map(lambda k: 2 * k + 1)


@pytest.mark.parametrize("d", [3, 5, 7, 9, 11])
def test_stabilizer_counts(d):
    stabs = rotated_stabilizers(d)
    assert len(stabs) == d * d - 1
    kinds = [s.kind for s in stabs]
    assert kinds.count("X") == kinds.count("Z") == (d * d - 1) // 2
    assert sorted(s.weight for s in stabs).count(2) == 2 * (d - 1)


def test_stabilizers_commute():
    stabs = rotated_stabilizers(7)
    for a in stabs:
        for b in stabs:
            if a.kind != b.kind:
                assert len(set(a.data) & set(b.data)) % 2 == 0


@pytest.mark.parametrize("d,rho,expected", [(3, 1, 1), (5, 1, 2), (7, 1, 3), (11, 1, 5),
                                            (7, 2, 2), (11, Fraction(1, 2), 10)])
def test_known_wave_counts(d, rho, expected):
    assert n_waves(d, rho) == expected


def test_ports_floor_non_integral():
    assert ports_per_side(7, Fraction(3, 10)) == 4   # 2 * 0.3 * 8 = 4.8


@settings(max_examples=200, deadline=None)
@given(odd_d, densities)
def test_wave_count_matches_rational_oracle(d, rho):
    assert n_waves(d, rho) == waves_oracle(d, rho.numerator, rho.denominator)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 7).map(lambda k: 2 * k + 1), densities)
def test_assignment_partitions_stabilizers(d, rho):
    patch = make_patch(d)
    wa = assign_waves(patch, rho)
    assert wa.n_waves == waves_oracle(d, rho.numerator, rho.denominator)
    assert sorted(wa.wave_of_ancilla) == [s.id for s in patch.stabilizers]
    for w in range(wa.n_waves):
        members = wa.members(w)
        assert 0 < len(members) <= wa.ports_per_side
        ports = [wa.port_of_ancilla[a] for a in members]
        assert len(set(ports)) == len(ports)


@settings(max_examples=60, deadline=None)
@given(odd_d, densities, densities)
def test_wave_count_nonincreasing_in_density(d, r1, r2):
    lo, hi = sorted((r1, r2))
    assert n_waves(d, hi) <= n_waves(d, lo)


def test_density_validation():
    with pytest.raises(GeometryError):
        n_waves(5, 0)
    with pytest.raises(GeometryError):
        assign_waves(make_patch(5), -1)
    with pytest.raises(GeometryError):
        make_patch(4)


def test_float_density_is_exact():
    assert as_density(0.5) == Fraction(1, 2)
    assert n_waves(9, 1.5) == n_waves(9, Fraction(3, 2))


def test_max_distance_floor_for_two_columns():
    assert max_distance(24, 2) == 10
    assert max_distance(23, 2) == 10
    assert max_distance(13) == 11
    with pytest.raises(GeometryError):
        max_distance(8, 2)


def test_array_ports_and_round_trip():
    arr = build_array(13, 40, Fraction(1, 2))
    assert len(arr.ports_on("left")) == len(arr.ports_on("right")) == 20
    assert DotArray.from_dict(arr.to_dict()) == arr
    with pytest.raises(GeometryError):
        build_array(4, 40, 1)


def test_patch_and_waves_round_trip():
    patch = make_patch(5)
    assert CodePatch.from_dict(patch.to_dict()) == patch
    wa = assign_waves(patch, 1)
    assert WaveAssignment.from_dict(wa.to_dict()) == wa


def test_embed_rejects_occupied_slot():
    arr = build_array(13, 60, 1)
    p = embed_patch(arr, 5, 0, 0)
    assert p.distance == 5
    with pytest.raises(GeometryError):
        embed_patch(arr, 5, 0, 0, occupied={(0, 0)})
