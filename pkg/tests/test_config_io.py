import math

import numpy as np
import pytest

from dudley import config as C
from dudley import io as dio
from dudley.errors import ConfigError, InvalidParams


def test_defaults_and_flags():
    cfg = C.build("green")
    assert cfg.d == 2 and cfg.widths == (0.5, 0.25, 0.25)
    cfg = C.build("green", flags={"paths": "50", "probes": "0,0,0.1,0,0,0;0.1,0,0.2,0,0,0"})
    assert cfg.paths == 50 and len(cfg.probes) == 2


@pytest.mark.parametrize("flags", [{"d": "1"}, {"h": "-1"}, {"paths": "x"},
                                   {"scheme": "rk4"}, {"probes": "0,0,1"}])
def test_invalid_flags_name_the_flag(flags):
    with pytest.raises(InvalidParams) as e:
        C.build("green", flags=flags)
    assert "--" in str(e.value)


def test_ladder_must_decrease():
    with pytest.raises(InvalidParams):
        C.build("theorem1", flags={"eps": "0.1,0.2"})


def test_slices_and_bools():
    cfg = C.build("capacity", flags={"slices": "2:5"})
    assert cfg.slices == (2, 5)
    assert C.parse_value("plot", "off") is False
    with pytest.raises(InvalidParams):
        C.parse_value("slices", "5:2")


def test_file_sections(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[common]\nseed = 4\nT = 0.5\n\n[green]\npaths = 9\n\n[cone]\nc = 0.2\n")
    v = C.read_file(p, "green")
    # T belongs to other commands and is skipped for green
    assert v == {"seed": 4, "paths": 9}
    p.write_text("[greeen]\npaths = 9\n")
    with pytest.raises(ConfigError, match=":1: unknown section"):
        C.read_file(p, "green")
    p.write_text("[green]\npaths = 9\n[cone]\nwidths = 1,1,1\n")
    with pytest.raises(ConfigError, match=":4: unknown key"):
        C.read_file(p, "green")
    p.write_text("[green]\npaths = -2\n")
    with pytest.raises(ConfigError, match=":2:"):
        C.read_file(p, "green")


def test_probe_file(tmp_path):
    p = tmp_path / "probes.csv"
    p.write_text("u1,u2,u0,u12,u10,u20\n0,0,0.1,0,0,0\n# comment\n0.1,0,0.2,0,0,0\n")
    P = C.load_probes(p, 2)
    assert P.shape == (2, 6)


def test_digest_stable_and_sensitive():
    a = C.build("bch-check")
    b = C.build("bch-check", flags={"format": "csv", "plot": "0"})
    assert dio.config_digest(a.digest_fields()) == dio.config_digest(b.digest_fields())
    c = C.build("bch-check", flags={"seed": "1"})
    assert dio.config_digest(a.digest_fields()) != dio.config_digest(c.digest_fields())


def test_csv_repr_round_trip(tmp_path):
    vals = [0.1, 1 / 3, math.inf, np.float64(2.5e-300), True, 7]
    path = dio.write_csv(tmp_path / "x.csv", list("abcdef"), [vals], 3, "d" * 16)
    header, rows = dio.read_csv(path)
    assert header == ["seed", "config_digest", *"abcdef"]
    assert rows[0][:2] == ["3", "d" * 16]
    assert [float(x) for x in rows[0][2:6]] == [0.1, 1 / 3, math.inf, 2.5e-300]
    assert rows[0][6:] == ["1", "7"]


def test_json_non_finite(tmp_path):
    text = dio.report_text({"x": math.nan, "y": [np.int64(2)]}, 0, "0" * 16)
    assert '"x": "nan"' in text and '"y": [\n      2\n    ]' in text
