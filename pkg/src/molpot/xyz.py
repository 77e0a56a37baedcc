"""Extended-XYZ reading and writing.

Frame layout: an atom count, a comment line of key=value fields (values
may be double-quoted), then one row per atom. A Properties descriptor
(name:type:count triplets) declares the per-atom columns; without one,
species and position columns are assumed. Numbers are written with 17
significant digits, which round-trips float64 exactly. All parse
failures raise ExtXYZParseError carrying the offending 1-based line
number; the parser never raises anything else on malformed text.
"""

import re

import numpy as np

from .elements import SYMBOL_TO_Z, Z_TO_SYMBOL
from .errors import ExtXYZParseError, MolpotError
from .geometry import AtomicSystem

_KEY_VALUE = re.compile(r'([A-Za-z_][A-Za-z0-9_-]*)=(?:"([^"]*)"|([^\s"]+))')

DEFAULT_PROPERTIES = "species:S:1:pos:R:3"


def _parse_comment(line, line_no):
    """key=value fields; quoted values may contain spaces."""
    fields = {}
    pos = 0
    text = line.strip()
    while pos < len(text):
        match = _KEY_VALUE.match(text, pos)
        if match is None:
            raise ExtXYZParseError(
                f"malformed comment field near {text[pos:pos + 20]!r}", line_no
            )
        key = match.group(1)
        fields[key] = match.group(2) if match.group(2) is not None else match.group(3)
        pos = match.end()
        while pos < len(text) and text[pos].isspace():
            pos += 1
    return fields


def _parse_properties(descriptor, line_no):
    """Descriptor triplets -> list of (name, type, count)."""
    parts = descriptor.split(":")
    if len(parts) % 3 != 0 or not parts:
        raise ExtXYZParseError(
            f"Properties descriptor {descriptor!r} is not name:type:count triplets",
            line_no,
        )
    columns = []
    for i in range(0, len(parts), 3):
        name, kind, count = parts[i], parts[i + 1], parts[i + 2]
        if kind not in ("S", "R", "I"):
            raise ExtXYZParseError(
                f"unsupported column type {kind!r} in Properties", line_no
            )
        try:
            width = int(count)
        except ValueError:
            raise ExtXYZParseError(
                f"bad column count {count!r} in Properties", line_no
            ) from None
        if width < 1:
            raise ExtXYZParseError(
                f"bad column count {count!r} in Properties", line_no
            )
        columns.append((name, kind, width))
    if not columns or columns[0] != ("species", "S", 1):
        raise ExtXYZParseError(
            "Properties must start with species:S:1", line_no
        )
    if len(columns) < 2 or columns[1] != ("pos", "R", 3):
        raise ExtXYZParseError(
            "Properties must declare pos:R:3 after species", line_no
        )
    return columns


def _parse_floats(value, expected, key, line_no):
    parts = value.split()
    if len(parts) != expected:
        raise ExtXYZParseError(
            f"{key} needs {expected} numbers, got {len(parts)}", line_no
        )
    try:
        return np.array([float(p) for p in parts])
    except ValueError:
        raise ExtXYZParseError(f"non-numeric value in {key}", line_no) from None


def parse_extxyz(text):
    """All frames in the text as labeled AtomicSystem objects."""
    lines = text.splitlines()
    systems = []
    i = 0
    while i < len(lines):
        if not lines[i].strip():
            i += 1
            continue
        count_line_no = i + 1
        try:
            n_atoms = int(lines[i].strip())
        except ValueError:
            raise ExtXYZParseError(
                f"expected an atom count, got {lines[i].strip()!r}", count_line_no
            ) from None
        if n_atoms < 1:
            raise ExtXYZParseError(
                f"atom count must be positive, got {n_atoms}", count_line_no
            )
        if i + 1 >= len(lines):
            raise ExtXYZParseError(
                "missing comment line after atom count", count_line_no
            )
        available = len(lines) - (i + 2)
        if available < n_atoms:
            raise ExtXYZParseError(
                f"declared {n_atoms} atoms but only {available} rows follow",
                count_line_no,
            )
        comment_no = count_line_no + 1
        fields = _parse_comment(lines[i + 1], comment_no)
        columns = _parse_properties(
            fields.get("Properties", DEFAULT_PROPERTIES), comment_no
        )

        symbols = []
        data = {name: [] for name, _, _ in columns if name != "species"}
        for row in range(n_atoms):
            row_no = comment_no + 1 + row
            tokens = lines[i + 2 + row].split()
            expected = sum(width for _, _, width in columns)
            if len(tokens) != expected:
                raise ExtXYZParseError(
                    f"expected {expected} columns, got {len(tokens)}", row_no
                )
            cursor = 0
            for name, kind, width in columns:
                chunk = tokens[cursor : cursor + width]
                cursor += width
                if kind == "S":
                    symbols.append(chunk[0])
                    continue
                try:
                    values = [float(x) for x in chunk]
                except ValueError:
                    raise ExtXYZParseError(
                        f"non-numeric {name} entry {chunk!r}", row_no
                    ) from None
                data[name].append(values)

        try:
            numbers = np.array([SYMBOL_TO_Z[s] for s in symbols])
        except KeyError as exc:
            raise ExtXYZParseError(
                f"unknown element symbol {exc.args[0]!r}", comment_no + 1
            ) from None

        energy = None
        if "energy" in fields:
            try:
                energy = float(fields["energy"])
            except ValueError:
                raise ExtXYZParseError("non-numeric energy", comment_no) from None
        dipole = None
        if "dipole" in fields:
            dipole = _parse_floats(fields["dipole"], 3, "dipole", comment_no)
        polarizability = None
        if "polarizability" in fields:
            polarizability = _parse_floats(
                fields["polarizability"], 9, "polarizability", comment_no
            ).reshape(3, 3)

        try:
            systems.append(
                AtomicSystem(
                    atomic_numbers=numbers,
                    positions=np.array(data["pos"]),
                    energy=energy,
                    forces=np.array(data["forces"]) if "forces" in data else None,
                    dipole=dipole,
                    polarizability=polarizability,
                )
            )
        except MolpotError as exc:
            raise ExtXYZParseError(str(exc), count_line_no) from None
        i += 2 + n_atoms
    return systems


def _fmt(x):
    return format(float(x), ".17g")


def write_extxyz(systems, velocities=None):
    """Frames as extended-XYZ text; inverse of parse_extxyz.

    velocities, when given, is one (N, 3) array per system appended as
    vel:R:3 columns (parse_extxyz ignores them beyond validation).
    """
    chunks = []
    for index, system in enumerate(systems):
        vel = velocities[index] if velocities is not None else None
        fields = []
        if system.energy is not None:
            fields.append(f"energy={_fmt(system.energy)}")
        if system.dipole is not None:
            fields.append(
                'dipole="' + " ".join(_fmt(x) for x in system.dipole) + '"'
            )
        if system.polarizability is not None:
            fields.append(
                'polarizability="'
                + " ".join(_fmt(x) for x in system.polarizability.ravel())
                + '"'
            )
        descriptor = DEFAULT_PROPERTIES
        if system.forces is not None:
            descriptor += ":forces:R:3"
        if vel is not None:
            descriptor += ":vel:R:3"
        fields.append(f"Properties={descriptor}")
        lines = [str(system.n_atoms), " ".join(fields)]
        for a in range(system.n_atoms):
            row = [Z_TO_SYMBOL[int(system.atomic_numbers[a])]]
            row += [_fmt(x) for x in system.positions[a]]
            if system.forces is not None:
                row += [_fmt(x) for x in system.forces[a]]
            if vel is not None:
                row += [_fmt(x) for x in vel[a]]
            lines.append(" ".join(row))
        chunks.append("\n".join(lines))
    return "\n".join(chunks) + ("\n" if chunks else "")


def read_extxyz_file(path):
    with open(path, encoding="utf-8") as handle:
        return parse_extxyz(handle.read())


def write_extxyz_file(path, systems, velocities=None):
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(write_extxyz(systems, velocities=velocities))
