import subprocess
import sys

import pytest

from zollkit.cli import main
from zollkit.config import load_config
from zollkit.errors import ConfigError

ROUND_CLOSURE = """
command = "closure"
[profile]
family = "round"
[grid]
phi = [0.3, 1.3, 2]
psi = [0.4, 1.2, 2]
"""


def write(tmp_path, text, name="run.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def run(tmp_path, text, *extra):
    cfg = write(tmp_path, text)
    out = tmp_path / "out"
    code = main([*extra, "--config", str(cfg), "--out", str(out)])
    return code, out


def test_closure_ok(tmp_path, capsys):
    code, out = run(tmp_path, ROUND_CLOSURE)
    assert code == 0
    lines = (out / "closure.csv").read_text().splitlines()
    assert lines[0] == "phi0,psi0,period,closure_error,holonomy,conjugacy"
    assert len(lines) == 5
    assert "exit_code = 0" in (out / "report.txt").read_text()
    assert "passed = 4" in capsys.readouterr().out


def test_threshold_miss_exits_1(tmp_path):
    code, _ = run(tmp_path, ROUND_CLOSURE + "[closure]\nthreshold = 1e-30\n")
    assert code == 1


def test_numerical_error_exits_3(tmp_path):
    text = 'command = "disks"\n[disks]\nw = [[0.35, 0.0]]\nfoliation = false\n'
    code, out = run(tmp_path, text)
    assert code == 3
    assert "PreconditionError" in (out / "report.txt").read_text()


@pytest.mark.parametrize("text", [
    ROUND_CLOSURE + "[closure]\nbogus = 1\n",
    ROUND_CLOSURE + "[nonsense]\n",
    ROUND_CLOSURE.replace('"closure"', '"fly"'),
    ROUND_CLOSURE + "[closure]\ntol = -1.0\n",
    ROUND_CLOSURE.replace('"round"', '"ellipsoid"'),
    'command = "closure"\n[grid]\nphi = []\n',
    "command = [",
])
def test_config_errors_exit_2(tmp_path, text):
    code, _ = run(tmp_path, text)
    assert code == 2


def test_missing_config_file(tmp_path):
    assert main(["--config", str(tmp_path / "nope.toml")]) == 2
    assert main([]) == 2


def test_command_line_overrides(tmp_path):
    cfg = load_config(write(tmp_path, ROUND_CLOSURE), "conjugacy", 1e-9)
    assert cfg.command == "conjugacy"
    assert cfg.get("closure")["tol"] == 1e-9 and cfg.get("disks")["tol"] == 1e-9
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, ROUND_CLOSURE), None, 0.0)


def test_conjugacy_command(tmp_path):
    code, out = run(tmp_path, ROUND_CLOSURE, "conjugacy")
    assert code == 0
    rows = (out / "conjugacy.csv").read_text().splitlines()[1:]
    assert all(r.endswith(",2") for r in rows)


def test_flow_portrait_command(tmp_path):
    code, out = run(tmp_path, ROUND_CLOSURE + "[flow_portrait]\nsamples = 11\n", "flow-portrait")
    assert code == 0
    assert len((out / "flow_portrait.csv").read_text().splitlines()) == 1 + 4 * 11


def test_disks_command(tmp_path):
    text = 'command = "disks"\n[band]\nfamily = "bump"\n[disks]\nN = 16\nw = [[0, 0], [0.1, 0], [0, -0.1]]\n'
    code, out = run(tmp_path, text)
    assert code == 0
    assert (out / "disk_coefficients.csv").exists()
    assert "[case 3] foliation: PASS" in (out / "report.txt").read_text()


def test_twistor_command(tmp_path):
    text = ('command = "twistor"\n[slice]\ngamma = "bump"\namp_im = 0.05\n'
            '[twistor]\nphi = [0.9]\nthreshold = 1e-5\n')
    code, out = run(tmp_path, text)
    assert code == 0
    assert len((out / "twistor.csv").read_text().splitlines()) == 2


def test_twistor_printed_roundtrip_fails(tmp_path):
    text = 'command = "twistor"\n[twistor]\nreconstruct = false\nvariant = "printed"\n'
    code, _ = run(tmp_path, text)
    assert code == 1


@pytest.mark.parametrize("extra,expect", [("", 0), ('g = "bump"\ng_amp = 0.3\n', 0)])
def test_lagrangian_command(tmp_path, extra, expect):
    code, _ = run(tmp_path, 'command = "lagrangian"\n[slice]\n' + extra)
    assert code == expect


def test_lagrangian_detects_imaginary_bump(tmp_path):
    text = 'command = "lagrangian"\n[slice]\ngamma = "bump"\namp_im = 0.05\n'
    assert run(tmp_path, text)[0] == 1
    text += '[lagrangian]\nexpect = "non-lagrangian"\n'
    assert run(tmp_path, text)[0] == 0


def test_outputs_are_deterministic(tmp_path):
    cfg = write(tmp_path, ROUND_CLOSURE)
    outs = []
    for i, jobs in enumerate(["1", "1", "2"]):
        out = tmp_path / f"o{i}"
        assert main(["conjugacy", "--config", str(cfg), "--out", str(out), "--jobs", jobs]) == 0
        outs.append((out / "conjugacy.csv").read_bytes())
    assert outs[0] == outs[1] == outs[2]


def test_disk_outputs_deterministic_across_jobs(tmp_path):
    cfg = write(tmp_path, 'command = "disks"\n[disks]\nN = 12\nw = [[0, 0], [0.1, 0.1]]\n')
    data = []
    for jobs in ("1", "2"):
        out = tmp_path / f"d{jobs}"
        assert main(["--config", str(cfg), "--out", str(out), "--jobs", jobs]) == 0
        data.append((out / "disk_points.csv").read_bytes() + (out / "disk_coefficients.csv").read_bytes())
    assert data[0] == data[1]


def test_module_entry_point(tmp_path):
    cfg = write(tmp_path, ROUND_CLOSURE)
    r = subprocess.run([sys.executable, "-m", "zollkit", "--config", str(cfg), "--out", str(tmp_path / "m")],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "command = closure" in r.stdout
