import json
import math
from dataclasses import dataclass

import numpy as np
import pytest

from homopolymer import config as cf
from homopolymer import report as rp


def test_to_jsonable():
    @dataclass(frozen=True)
    class R:
        a: float
        b: tuple

        @property
        def passed(self):
            return True

    out = rp.to_jsonable({"x": R(np.float64(1.5), (np.int64(2), math.inf)), "z": 1 + 2j, "arr": np.arange(3)})
    assert out == {"x": {"a": 1.5, "b": [2, "inf"], "passed": True}, "z": {"re": 1.0, "im": 2.0}, "arr": [0, 1, 2]}
    json.dumps(out)


def test_json_roundtrip(tmp_path):
    man = rp.manifest("lambda", {"d": 1, "beta": 0.75})
    assert man["schema_version"] == rp.SCHEMA_VERSION
    path = rp.write_json(tmp_path / "a" / "x.json", man, {"v": 0.25})
    m2, res = rp.load_json(path)
    assert m2 == man and res == {"v": 0.25}


def test_csv_roundtrip(tmp_path):
    man = rp.manifest("kernel", {"d": 1})
    path = rp.write_csv(tmp_path / "t.csv", man, ["y", "p"], [(0, 0.1), (1, 1 / 3)])
    m2, header, rows = rp.load_csv(path)
    assert m2 == man
    assert header == ["y", "p"]
    assert float(rows[1][1]) == 1 / 3
    assert path.read_text().startswith("# manifest ")


def test_schema_mismatch(tmp_path):
    man = dict(rp.manifest("lambda", {}), schema_version=rp.SCHEMA_VERSION + 1)
    path = rp.write_json(tmp_path / "x.json", man, {})
    with pytest.raises(rp.SchemaMismatchError):
        rp.load_json(path)
    with pytest.raises(rp.SchemaMismatchError):
        rp.compare_manifests(rp.manifest("a", {}), man)
    bad = tmp_path / "bad.csv"
    bad.write_text("y,p\n")
    with pytest.raises(rp.SchemaMismatchError):
        rp.load_csv(bad)


def test_resolve_defaults_and_precedence(tmp_path):
    cfg = cf.resolve("kernel")
    assert cfg["d"] == 1 and cfg["beta"] == -1.0 and cfg["method"] == "uniformization"
    f = tmp_path / "run.ini"
    f.write_text("[common]\nthreads = 2\n\n[kernel]\nd = 2\nbeta = -0.5\nsource = 1, 0\n")
    values = cf.read_file(f)
    cfg = cf.resolve("kernel", values, {"beta": "0.25"})
    assert cfg["d"] == 2 and cfg["beta"] == 0.25 and cfg["threads"] == 2 and cfg["source"] == (1, 0)


@pytest.mark.parametrize(
    "section, key, value, where",
    [
        ("kernel", "d", "7", "kernel.d"),
        ("kernel", "t", "-1", "kernel.t"),
        ("kernel", "beta", "abc", "kernel.beta"),
        ("kernel", "radius", "4", "kernel.radius"),
        ("kernel", "bogus", "1", "kernel.bogus"),
        ("sample-polymer", "ess_floor", "1.5", "sample-polymer.ess_floor"),
        ("scaling", "multitime", "maybe", "scaling.multitime"),
        ("accept", "only", "3,12", "accept.only"),
    ],
)
def test_config_errors_name_the_field(tmp_path, section, key, value, where):
    f = tmp_path / "c.ini"
    f.write_text(f"[{section}]\n{key} = {value}\n")
    with pytest.raises(cf.ConfigError) as err:
        cf.resolve(section, cf.read_file(f))
    assert err.value.path == where
    assert str(err.value).startswith(where)


def test_config_file_errors(tmp_path):
    f = tmp_path / "c.ini"
    f.write_text("[nonsense]\na = 1\n")
    with pytest.raises(cf.ConfigError):
        cf.read_file(f)
    f.write_text("no section header\n")
    with pytest.raises(cf.ConfigError):
        cf.read_file(f)
    with pytest.raises(cf.ConfigError):
        cf.read_file(tmp_path / "missing.ini")
    f.write_text("[common]\nbeta = 1\n")
    with pytest.raises(cf.ConfigError) as err:
        cf.resolve("kernel", cf.read_file(f))
    assert err.value.path == "common.beta"
    with pytest.raises(cf.ConfigError):
        cf.resolve("frobnicate")


def test_parsers():
    assert cf._int("3") == 3 and cf._int(4.0) == 4
    with pytest.raises(ValueError):
        cf._int("3.5")
    with pytest.raises(ValueError):
        cf._int(True)
    with pytest.raises(ValueError):
        cf._float("nan")
    assert cf._site("1, -2") == (1, -2)
    assert cf._floats("1,2.5") == (1.0, 2.5)
    assert cf._bool("Yes") is True and cf._bool("off") is False
