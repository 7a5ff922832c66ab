#!/usr/bin/env python3
"""
Input manifests: the on-disk form of an ``ExecInput``.

A manifest is line-oriented text; ``#`` starts a comment. Each line is
either a ``key = value`` setting or a record of ``key=value`` fields:

    step_limit = 1000000
    array name=A elem=f32 length=16 data=lu.A.dat
    array name=X elem=f32 length=20 gen=uniform low=-1e6 high=1e6 seed=42
    scalar name=n type=i64 value=4

Data files hold one decimal value per line and are resolved relative to the
manifest.
"""

from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np

from bench import SplitMix64
from common_config import AmpError, parse_number, setup_logging
from interp import ExecInput
from nir import F32, I64, ArrayType, Program

logger = setup_logging("manifest")


class ManifestError(AmpError):
    pass


def _fields(tokens: List[str], where: str) -> Dict[str, str]:
    fields: Dict[str, str] = {}
    for token in tokens:
        if "=" not in token:
            raise ManifestError(f"{where}: expected key=value, got {token!r}")
        key, value = token.split("=", 1)
        fields[key] = value
    return fields


def _require(fields: Dict[str, str], key: str, where: str) -> str:
    if key not in fields:
        raise ManifestError(f"{where}: missing '{key}='")
    return fields[key]


def read_data_file(path: Path) -> np.ndarray:
    values = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                values.append(float(line))
            except ValueError:
                raise ManifestError(
                    f"{path}:{lineno}: not a number: {line!r}"
                ) from None
    return np.asarray(values, dtype=np.float64)


def _load_array(fields: Dict[str, str], base: Path, where: str):
    name = _require(fields, "name", where)
    elem = fields.get("elem", F32)
    length = int(_require(fields, "length", where))
    if "data" in fields:
        try:
            values = read_data_file(base / fields["data"])
        except OSError as e:
            raise ManifestError(f"{where}: {e}") from e
    elif fields.get("gen") == "uniform":
        rng = SplitMix64(int(fields.get("seed", "0")))
        values = rng.uniform(
            parse_number(fields.get("low", "-1e6")),
            parse_number(fields.get("high", "1e6")),
            length,
        )
    elif fields.get("gen") == "zeros":
        values = np.zeros(length)
    else:
        raise ManifestError(f"{where}: array needs data= or gen=")
    if values.size != length:
        raise ManifestError(
            f"{where}: array {name} has {values.size} values, "
            f"declared {length}"
        )
    return name, np.asarray(values, dtype=np.float64).astype(
        np.float32 if elem == F32 else np.float64
    )


def load_manifest(path: Union[str, Path]) -> ExecInput:
    """Read a manifest and its data files into an ``ExecInput``."""
    path = Path(path)
    base = path.parent
    exec_input = ExecInput()
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise ManifestError(f"cannot read manifest {path}: {e}") from e

    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{path}:{lineno}"
        head, _, rest = line.partition(" ")
        if head == "array":
            fields = _fields(rest.split(), where)
            name, values = _load_array(fields, base, where)
            exec_input.arrays[name] = values
        elif head == "scalar":
            fields = _fields(rest.split(), where)
            name = _require(fields, "name", where)
            value = _require(fields, "value", where)
            if fields.get("type", F32) == I64:
                exec_input.scalars[name] = int(value)
            else:
                exec_input.scalars[name] = parse_number(value)
        elif "=" in line:
            key, value = (s.strip() for s in line.split("=", 1))
            if key != "step_limit":
                raise ManifestError(f"{where}: unknown setting {key!r}")
            exec_input.step_limit = int(parse_number(value))
        else:
            raise ManifestError(f"{where}: cannot parse {line!r}")

    logger.debug(
        f"loaded {path}: {len(exec_input.arrays)} arrays, "
        f"{len(exec_input.scalars)} scalars"
    )
    return exec_input


def write_manifest(
    path: Union[str, Path],
    exec_input: ExecInput,
    program: Optional[Program] = None,
) -> Path:
    """Write ``exec_input`` as a manifest plus one data file per array.

    Element and scalar types come from the entry function's parameters when
    a program is given; otherwise arrays are f32 and scalars are floats.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    params = dict(program.functions[0].params) if program else {}
    lines = [f"step_limit = {exec_input.step_limit}"]

    for name in sorted(exec_input.arrays):
        ptype = params.get(name)
        elem = ptype.elem if isinstance(ptype, ArrayType) else F32
        values = np.asarray(exec_input.arrays[name])
        data_name = f"{path.stem}.{name}.dat"
        with open(path.parent / data_name, "w", encoding="utf-8") as f:
            for v in values:
                f.write(f"{float(v)!r}\n")
        lines.append(
            f"array name={name} elem={elem} length={values.size} "
            f"data={data_name}"
        )

    for name in sorted(exec_input.scalars):
        value = exec_input.scalars[name]
        stype = params.get(name, I64 if isinstance(value, int) else F32)
        text = str(int(value)) if stype == I64 else repr(float(value))
        lines.append(f"scalar name={name} type={stype} value={text}")

    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
