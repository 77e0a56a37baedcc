import numpy as np
import pytest

from molpot import xyz
from molpot.errors import ExtXYZParseError
from molpot.geometry import AtomicSystem

MINIMAL = "1\nenergy=-0.5\nH 0 0 0\n"

WATER = """3
energy=-76.4 dipole="0.0 0.0 0.7295" Properties=species:S:1:pos:R:3:forces:R:3
O 0.0 0.0 0.1173 0.0 0.0 -0.2
H 0.0 0.7572 -0.4692 0.0 0.1 0.1
H 0.0 -0.7572 -0.4692 0.0 -0.1 0.1
"""


def random_system(rng, with_labels=True):
    n = int(rng.integers(1, 7))
    numbers = rng.choice([1, 6, 7, 8, 16], size=n)
    positions = rng.standard_normal((n, 3)) * 3.0
    if not with_labels:
        return AtomicSystem(atomic_numbers=numbers, positions=positions)
    sym = rng.standard_normal((3, 3))
    return AtomicSystem(
        atomic_numbers=numbers,
        positions=positions,
        energy=float(rng.standard_normal()),
        forces=rng.standard_normal((n, 3)),
        dipole=rng.standard_normal(3),
        polarizability=sym + sym.T,
    )


def test_minimal_frame():
    systems = xyz.parse_extxyz(MINIMAL)
    assert len(systems) == 1
    assert systems[0].n_atoms == 1
    assert systems[0].energy == -0.5
    assert systems[0].atomic_numbers[0] == 1
    np.testing.assert_array_equal(systems[0].positions, np.zeros((1, 3)))


def test_water_frame_with_forces_and_dipole():
    (system,) = xyz.parse_extxyz(WATER)
    assert list(system.atomic_numbers) == [8, 1, 1]
    np.testing.assert_allclose(system.dipole, [0.0, 0.0, 0.7295])
    assert system.forces.shape == (3, 3)
    assert system.forces[0, 2] == -0.2


def test_declared_count_exceeds_rows():
    text = "3\nenergy=0\nH 0 0 0\nH 1 0 0\n"
    with pytest.raises(ExtXYZParseError) as err:
        xyz.parse_extxyz(text)
    assert err.value.line == 1


def test_bad_count_token():
    with pytest.raises(ExtXYZParseError) as err:
        xyz.parse_extxyz("two\n\nH 0 0 0\n")
    assert err.value.line == 1


def test_malformed_comment_is_rejected():
    text = '1\nenergy=-0.5 ===\nH 0 0 0\n'
    with pytest.raises(ExtXYZParseError) as err:
        xyz.parse_extxyz(text)
    assert err.value.line == 2


def test_unknown_element_named_with_line():
    text = "1\nenergy=0\nXx 0 0 0\n"
    with pytest.raises(ExtXYZParseError) as err:
        xyz.parse_extxyz(text)
    assert "Xx" in str(err.value)
    assert err.value.line == 3


def test_non_numeric_coordinate():
    text = "1\nenergy=0\nH 0 zero 0\n"
    with pytest.raises(ExtXYZParseError) as err:
        xyz.parse_extxyz(text)
    assert err.value.line == 3


def test_column_count_mismatch():
    text = "1\nProperties=species:S:1:pos:R:3:forces:R:3\nH 0 0 0\n"
    with pytest.raises(ExtXYZParseError) as err:
        xyz.parse_extxyz(text)
    assert err.value.line == 3


def test_multiple_frames_and_blank_lines():
    text = MINIMAL + "\n" + WATER
    systems = xyz.parse_extxyz(text)
    assert [s.n_atoms for s in systems] == [1, 3]


def test_empty_text_gives_no_systems():
    assert xyz.parse_extxyz("") == []
    assert xyz.parse_extxyz("\n  \n") == []


def test_write_empty_list():
    assert xyz.write_extxyz([]) == ""


def test_round_trip_is_exact():
    rng = np.random.default_rng(0)
    systems = [random_system(rng) for _ in range(8)]
    systems.append(random_system(rng, with_labels=False))
    text = xyz.write_extxyz(systems)
    parsed = xyz.parse_extxyz(text)
    assert len(parsed) == len(systems)
    for a, b in zip(systems, parsed):
        np.testing.assert_array_equal(a.atomic_numbers, b.atomic_numbers)
        np.testing.assert_array_equal(a.positions, b.positions)
        if a.energy is None:
            assert b.energy is None
        else:
            assert a.energy == b.energy
        if a.forces is None:
            assert b.forces is None
        else:
            np.testing.assert_array_equal(a.forces, b.forces)
        if a.dipole is not None:
            np.testing.assert_array_equal(a.dipole, b.dipole)
        if a.polarizability is not None:
            np.testing.assert_array_equal(a.polarizability, b.polarizability)


def test_reparse_of_rewrite_matches():
    systems = xyz.parse_extxyz(WATER)
    again = xyz.parse_extxyz(xyz.write_extxyz(systems))
    np.testing.assert_array_equal(systems[0].positions, again[0].positions)
    np.testing.assert_array_equal(systems[0].forces, again[0].forces)


def test_forces_column_declared_only_when_present():
    with_forces = xyz.parse_extxyz(WATER)
    text = xyz.write_extxyz(with_forces)
    assert "forces:R:3" in text
    bare = xyz.parse_extxyz(MINIMAL)
    assert "forces" not in xyz.write_extxyz(bare)


def test_velocity_columns_round_trip():
    rng = np.random.default_rng(1)
    systems = [random_system(rng, with_labels=False) for _ in range(2)]
    velocities = [rng.standard_normal((s.n_atoms, 3)) for s in systems]
    text = xyz.write_extxyz(systems, velocities=velocities)
    assert "vel:R:3" in text
    parsed = xyz.parse_extxyz(text)  # extra columns validate and parse
    assert len(parsed) == 2


def test_file_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    systems = [random_system(rng) for _ in range(3)]
    path = tmp_path / "data.xyz"
    xyz.write_extxyz_file(path, systems)
    loaded = xyz.read_extxyz_file(path)
    assert len(loaded) == 3
    np.testing.assert_array_equal(loaded[1].positions, systems[1].positions)


def test_fuzzing_never_crashes():
    base = xyz.write_extxyz(
        [random_system(np.random.default_rng(3)) for _ in range(2)]
    )
    pool = list("0123456789.eE+- \nHCNO\"=:abcxyz_")
    rng = np.random.default_rng(4)
    n_parsed = 0
    for _ in range(100_000):
        text = list(base)
        for _ in range(int(rng.integers(1, 4))):
            op = rng.integers(0, 4)
            if op == 0 and text:
                text[int(rng.integers(len(text)))] = pool[
                    int(rng.integers(len(pool)))
                ]
            elif op == 1 and text:
                del text[int(rng.integers(len(text)))]
            elif op == 2:
                text.insert(
                    int(rng.integers(len(text) + 1)),
                    pool[int(rng.integers(len(pool)))],
                )
            else:
                text = text[: int(rng.integers(len(text) + 1))]
        try:
            xyz.parse_extxyz("".join(text))
            n_parsed += 1
        except ExtXYZParseError:
            pass
    # some mutations must still parse, otherwise the fuzz is too blunt
    assert n_parsed > 0
