import csv
import json

import pytest

from snaqsim.analytics import scaling_model
from snaqsim.cli import LER_FIELDS, main, read_ler_csv
from snaqsim.config import ConfigError, ExperimentConfig, parse_config, task_seed

SMALL = """\
arch = "SNAQ"
distances = [3]
rho = 1.0
shots = 1000
seed = 5

[noise]
p_g = 0.003
p_sh = 0.0001
p_id = 0.001
"""


def write(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_parse_defaults_and_digest():
    cfg = parse_config(SMALL)
    assert cfg.distances == (3,) and cfg.noise.p_g == 0.003
    assert cfg.digest() == parse_config(SMALL).digest()
    assert cfg.digest() == cfg.with_overrides(out="elsewhere", threads=3).digest()
    assert cfg.digest() != cfg.with_overrides(seed=6).digest()


@pytest.mark.parametrize("text,line", [
    (SMALL.replace("shots = 1000", "shots = 0"), 4),
    (SMALL.replace("rho = 1.0", "rhoo = 1.0"), 3),
    (SMALL.replace("p_sh = 0.0001", "p_shh = 0.0001"), 9),
    (SMALL.replace("p_id = 0.001", "p_id = 2.0"), 10),
    (SMALL.replace('arch = "SNAQ"', 'arch = SNAQ'), 1),
])
def test_config_errors_carry_line(text, line):
    with pytest.raises(ConfigError) as e:
        parse_config(text)
    assert e.value.line == line


def test_task_seeds():
    assert task_seed(1, "a", 3) == task_seed(1, "a", 3)
    assert len({task_seed(1, "a", d) for d in (3, 5, 7)} | {task_seed(2, "a", 3)}) == 4


def test_usage_errors_exit_2(capsys):
    with pytest.raises(SystemExit) as e:
        main(["sample", "--shots", "0"])
    assert e.value.code == 2
    assert "shots" in capsys.readouterr().err


def test_domain_errors_exit_1(tmp_path, capsys):
    cfg = write(tmp_path, SMALL.replace("distances = [3]", "distances = [4]"))
    assert main(["circuit", "--config", cfg, "--out", str(tmp_path / "o")]) == 1
    assert "snaqsim circuit" in capsys.readouterr().err
    bad = write(tmp_path, "shots = 0\n", "bad.toml")
    assert main(["sample", "--config", bad]) == 1
    assert "line 1" in capsys.readouterr().err


def test_sample_reruns_are_byte_identical(tmp_path):
    cfg = write(tmp_path, SMALL)
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert main(["sample", "--config", cfg, "--out", str(out)]) == 0
        outs.append((out / "ler_SNAQ.csv").read_bytes())
    assert outs[0] == outs[1]
    assert outs[0].startswith(b"# config=")
    rows = read_ler_csv(tmp_path / "run0" / "ler_SNAQ.csv")
    assert list(rows[0]) == LER_FIELDS and rows[0]["shots"] == "2000"


def test_circuit_files_parse_in_stim(tmp_path):
    stim = pytest.importorskip("stim")
    cfg = write(tmp_path, SMALL)
    assert main(["circuit", "--config", cfg, "--out", str(tmp_path)]) == 0
    for b in "XZ":
        c = stim.Circuit((tmp_path / f"circuit_SNAQ_d3_{b}.stim").read_text())
        assert c.num_observables == 1


def test_distill_table(tmp_path, capsys):
    assert main(["distill", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "distill.csv").read_text().splitlines()
    assert lines[0].startswith("# config=")
    rows = list(csv.DictReader(lines[1:]))
    assert len(rows) == 6
    assert {r["arch"] for r in rows} == {"2xN", "SpinBus", "SNAQ"}


def fake_ler(path, arch, params, rho=1.0):
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=LER_FIELDS)
        w.writeheader()
        for d in (3, 5, 7):
            p = scaling_model(d, *params, rho=rho)
            w.writerow({"arch": arch, "d": d, "rho": rho, "p_g": 1e-3, "p_sh": 1e-5,
                        "p_id": 1e-4, "shots": 10**6, "failures": round(p * 1e6), "p_L": p,
                        "ci_low": p * 0.9, "ci_high": p * 1.1})


def test_fit_then_latency_speedup(tmp_path):
    params = {"SNAQ": (0.1, 0.012, 0.0005, 0.002), "2xN": (0.1, 0.015, 0.0006, 0.0),
              "SpinBus": (0.1, 0.02, 0.0, 0.0)}
    fits = []
    for arch, p in params.items():
        src = tmp_path / f"ler_{arch}.csv"
        fake_ler(src, arch, p)
        assert main(["fit", str(src), "--out", str(tmp_path)]) == 0
        fits.append(str(tmp_path / f"fit_{arch}.json"))
        assert json.loads((tmp_path / f"fit_{arch}.json").read_text())["arch"] == arch
    assert main(["latency", "--out", str(tmp_path), "--target", "1e-6", "--fits", *fits]) == 0
    lines = (tmp_path / "speedup.csv").read_text().splitlines()
    rows = {r["arch"]: r for r in csv.DictReader(lines[1:])}
    assert float(rows["SNAQ"]["time_ns"]) < min(float(rows[a]["time_ns"])
                                                for a in ("2xN", "SpinBus"))
    assert all(float(rows[a]["speedup_of_snaq"]) > 1 for a in ("2xN", "SpinBus"))


def test_fit_rejects_zero_failures(tmp_path):
    src = tmp_path / "ler.csv"
    fake_ler(src, "SNAQ", (0.1, 0.012, 0.0005, 0.002))
    text = src.read_text().splitlines()
    parts = text[1].split(",")
    parts[LER_FIELDS.index("p_L")] = "0.0"
    text[1] = ",".join(parts)
    src.write_text("\n".join(text) + "\n")
    assert main(["fit", str(src), "--out", str(tmp_path)]) == 1


def test_default_config_is_valid():
    cfg = ExperimentConfig()
    assert cfg.decoder == "uf" and cfg.shots >= 1
