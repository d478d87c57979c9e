import csv
import io
import json
import math

import pytest

from demonsim.cli import (EXACT_COLUMNS, MC_COLUMNS, PARAM_COLUMNS, main,
                          parse_config, parse_grid, parse_number, render,
                          run_sweep, serialize_config)
from demonsim.errors import ConfigError


def read_csv(text):
    lines = [l for l in text.splitlines() if not l.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(lines))))


def test_parse_number_pi_forms():
    assert parse_number("pi/3") == math.pi / 3
    assert parse_number("2pi/3") == pytest.approx(2 * math.pi / 3)
    assert parse_number("0.5*pi") == pytest.approx(math.pi / 2)
    assert parse_number("1.0472") == 1.0472


def test_parse_grid():
    assert parse_grid("0:1:0.25") == (0.0, 0.25, 0.5, 0.75, 1.0)
    assert len(parse_grid("0:1:0.05")) == 21
    assert parse_grid("0:1:0.05")[3] == 0.15
    assert parse_grid("0,0.2, 1") == (0.0, 0.2, 1.0)


def test_minimal_flags():
    cfg = parse_config(overrides={"protocol.name": "szilard", "sweep.theta_c": "1.0472",
                                  "sweep.epsilon": "0:1:0.05"})
    assert cfg.theta_c == (1.0472,) and len(cfg.epsilon) == 21
    assert cfg.engine == "exact" and cfg.kappa == 0.88


def test_pulse_axis():
    cfg = parse_config(overrides={"protocol.name": "szilard", "sweep.zeta": "1.94",
                                  "sweep.pulse_theta": "0:2:0.1"})
    eps = cfg.epsilons
    assert eps[0] == 0.0 and len(eps) == 21
    assert eps[5] == pytest.approx(1 - math.exp(-1.94 * 0.5))


def test_error_axis_exclusive():
    with pytest.raises(ConfigError) as info:
        parse_config(overrides={"protocol.name": "szilard", "sweep.epsilon": "0.1",
                                "sweep.pulse_theta": "0:1:0.1"})
    assert info.value.key == "error_axis"


def test_epsilon_out_of_range():
    with pytest.raises(ConfigError, match="error_axis"):
        parse_config(overrides={"protocol.name": "szilard", "sweep.epsilon": "1.5"})


@pytest.mark.parametrize("text, key", [
    ("protocol.name = szilard\nengine.turbo = 1\n", "engine.turbo"),
    ("protocol.name = szilard\nengine.n_samples = many\n", "engine.n_samples"),
    ("sweep.epsilon = 0.1\n", "protocol.name"),
    ("protocol.name = szilard\nsweep.theta_c = 3\n", "sweep.theta_c"),
])
def test_config_errors_name_key(text, key):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.key == key


def test_flags_override_file():
    text = "protocol.name = szilard\nsweep.epsilon = 0.1\nengine.seed = 4\n"
    cfg = parse_config(text, {"engine.seed": "9", "sweep.pulse_theta": "0.5"})
    assert cfg.seed == 9 and cfg.epsilon is None and cfg.pulse_theta == (0.5,)


def test_env_seed(monkeypatch):
    monkeypatch.setenv("DEMONSIM_SEED", "17")
    assert parse_config("protocol.name = flip\n").seed == 17
    assert parse_config("protocol.name = flip\nengine.seed = 3\n").seed == 3


@pytest.mark.parametrize("overrides", [
    {"protocol.name": "szilard"},
    {"protocol.name": "ion", "protocol.nbar": "0.1", "engine.kind": "both",
     "sweep.pulse_theta": "0:1:0.1", "sweep.theta_c": "pi/6,pi/3",
     "engine.resolution": "composite", "output.format": "json"},
])
def test_config_round_trip(overrides):
    cfg = parse_config(overrides=overrides)
    assert parse_config(serialize_config(cfg)) == cfg


def test_sweep_work_column():
    cfg = parse_config(overrides={"protocol.name": "szilard", "sweep.theta_c": "pi/3",
                                  "sweep.epsilon": "0,0.2,0.5,1",
                                  "output.timestamp": "false"})
    rows = read_csv(render(cfg, run_sweep(cfg)))
    assert len(rows) == 4
    assert [float(r["w_out"]) for r in rows] == pytest.approx([0.25, 0.2, 0.125, 0], abs=1e-12)
    assert list(rows[0].keys()) == list(PARAM_COLUMNS + EXACT_COLUMNS)


def test_undefined_efficacies_are_empty_cells():
    cfg = parse_config(overrides={"protocol.name": "identity", "sweep.theta_c": "pi/3",
                                  "sweep.epsilon": "0.5"})
    row = read_csv(render(cfg, run_sweep(cfg)))[0]
    assert row["eta_out"] == "" and row["eta_max"] == ""


def test_ion_both_engines():
    cfg = parse_config(overrides={"protocol.name": "ion", "sweep.theta_c": "pi/3",
                                  "sweep.epsilon": "0.2,0.6", "engine.kind": "both",
                                  "engine.n_samples": "100000", "engine.seed": "7"})
    rows = read_csv(render(cfg, run_sweep(cfg)))
    assert set(MC_COLUMNS) <= set(rows[0])
    for r in rows:
        for w in ("cond", "uncond", "info"):
            assert float(r[f"ft_{w}"]) == pytest.approx(1.0, abs=1e-10)
            se = float(r[f"ft_{w}_stderr"])
            assert se > 0
            assert abs(float(r[f"ft_{w}_mc"]) - 1.0) < 3 * se


def test_workers_do_not_change_output(tmp_path):
    base = ["sweep", "--protocol", "ion", "--theta-c", "pi/6,pi/3", "--epsilon",
            "0.1,0.5", "--engine", "both", "--n-samples", "2000", "--no-timestamp"]
    main(base + ["-o", str(tmp_path / "a.csv")])
    main(base + ["--workers", "2", "-o", str(tmp_path / "b.csv")])
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_main_exit_codes(tmp_path, capsys):
    assert main(["sweep", "--protocol", "szilard", "--epsilon", "1.5"]) == 2
    assert "error_axis" in capsys.readouterr().err
    assert main(["sweep", "--protocol", "szilard", "--epsilon", "0.1",
                 "--pulse-theta", "0:1:0.1"]) == 2
    assert main(["sweep", "--config", str(tmp_path / "missing.cfg")]) == 2
    bad = tmp_path / "no" / "such" / "dir" / "out.csv"
    assert main(["sweep", "--protocol", "szilard", "--epsilon", "0.1",
                 "-o", str(bad)]) == 3


def test_json_mirror(capsys):
    assert main(["sweep", "--protocol", "szilard", "--theta-c", "pi/3",
                 "--epsilon", "0.2,0.5", "--format", "json"]) == 0
    rows = [json.loads(l) for l in capsys.readouterr().out.splitlines()]
    assert len(rows) == 2 and rows[0]["w_out"] == pytest.approx(0.2)
    assert list(rows[0]) == list(PARAM_COLUMNS + EXACT_COLUMNS)


def test_verify_ft_command(capsys):
    assert main(["verify-ft", "--protocol", "szilard", "--theta-c", "pi/3",
                 "--epsilon", "0.2"]) == 0
    out = capsys.readouterr().out
    assert "sigma_cond: <exp(-sigma)> = 0.9125 support_deficit = 0.0875" in out


def test_single_point_commands_need_one_point(capsys):
    assert main(["report", "--protocol", "szilard", "--epsilon", "0.1,0.2"]) == 2


def test_report_command(capsys):
    assert main(["report", "--protocol", "szilard", "--theta-c", "pi/3",
                 "--epsilon", "0.2"]) == 0
    lines = dict(l.split(" = ") for l in capsys.readouterr().out.splitlines())
    assert float(lines["delta_f"]) == pytest.approx(0.351408823771, abs=1e-11)


def test_sample_command(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["sample", "--protocol", "ion", "--theta-c", "pi/3", "--epsilon", "0.2",
                 "--n-samples", "50", "--seed", "3", "-o", str(out)]) == 0
    rows = read_csv(out.read_text())
    assert len(rows) == 50 and rows[0]["nc"] != ""


def test_timestamp_line(capsys):
    main(["sweep", "--protocol", "szilard", "--theta-c", "pi/3", "--epsilon", "0.2"])
    assert "# generated:" in capsys.readouterr().out
    main(["sweep", "--protocol", "szilard", "--theta-c", "pi/3", "--epsilon", "0.2",
          "--no-timestamp"])
    assert "# generated:" not in capsys.readouterr().out
