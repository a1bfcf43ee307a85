"""Config schema and CLI contract tests.

The CLI is exercised in-process through cli.main(argv) so stdout and exit
codes can be asserted cheaply; one subprocess test covers the installed
console script.
"""

import json
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qspde import cli
from qspde.config import ConfigError, config_hash, parse_config, serialize
from qspde.hoelder import c1alpha_seminorm, centered_gradient, seminorm_dyadic
from qspde.spectral_noise import Field, read_qspd, write_qspd

BASE = {
    "d": "1",
    "s": "2.0",
    "kmax": "3",
    "n_x": "8",
    "dt": "0.0625",
    "t_end": "1.0",
    "alpha": "0.3",
    "nonlinearity": "tanh_perturbed",
    "lambda": "0.5",
    "j_mode": "zero",
    "seed": "101",
    "n_realizations": "12",
}


def config_text(**overrides):
    kv = dict(BASE)
    for k, v in overrides.items():
        if v is None:
            kv.pop(k, None)
        else:
            kv[k] = str(v)
    return "".join(f"{k} = {v}\n" for k, v in kv.items())


def write_cfg(tmp_path, name="exp.cfg", **overrides):
    p = tmp_path / name
    p.write_text(config_text(**overrides))
    return p


def run_cli(capsys, argv):
    rc = cli.main(argv)
    out = capsys.readouterr().out.strip().splitlines()[-1]
    return rc, json.loads(out)


# ---------------------------------------------------------------------------
# config schema


def test_parse_reports_every_violation_at_once():
    text = config_text(
        d="2",
        s="2.0",  # not trace class for d = 2
        kmax="0",
        n_x="3",  # not a power of two
        dt="0.3",  # 1.0/0.3 is not integral
        nonlinearity="cubic",
        **{"lambda": "1.5"},
        j_mode="maybe",
        seed="-1",
        n_realizations="0",
    ) + "bogus = 7\nnot a key value line\n"
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    v = "\n".join(exc.value.violations)
    assert len(exc.value.violations) >= 9
    for needle in (
        "trace class",
        "kmax",
        "power of two",
        "integer multiple",
        "cubic",
        "lambda",
        "j_mode",
        "seed",
        "n_realizations",
        "bogus",
        "key = value",
    ):
        assert needle in v, needle


def test_parse_trace_class_citation_alone():
    with pytest.raises(ConfigError) as exc:
        parse_config(config_text(s="1.0"))
    assert len(exc.value.violations) == 1
    assert "trace class" in exc.value.violations[0]


def test_parse_alpha_window_depends_on_s_minus_d():
    with pytest.raises(ConfigError) as exc:
        parse_config(config_text(alpha="0.6"))  # cap is (s-d)/2 = 0.5
    assert "admissible exponents" in exc.value.violations[0]
    # widening s raises the cap
    parse_config(config_text(s="2.5", alpha="0.6"))


def test_parse_duplicate_and_missing_keys():
    with pytest.raises(ConfigError) as exc:
        parse_config(config_text(seed=None) + "d = 1\n")
    v = "\n".join(exc.value.violations)
    assert "duplicate" in v and "seed: required key missing" in v


def test_parse_cfl_only_checked_for_scheduled_solves():
    # dt = 1/16 is far above the diffusion bound for n_x = 8
    parse_config(config_text())  # noise-only: accepted
    with pytest.raises(ConfigError) as exc:
        parse_config(config_text(mc_solve="true"))
    assert "stability bound" in "\n".join(exc.value.violations)


def test_parse_j_file_coupling():
    with pytest.raises(ConfigError) as exc:
        parse_config(config_text(j_mode="file"))
    assert "j_file" in exc.value.violations[0]
    with pytest.raises(ConfigError) as exc:
        parse_config(config_text(j_file="j0.qspd"))  # j_mode is still zero
    assert "j_file" in exc.value.violations[0]


def test_serialize_parse_idempotent():
    cfg = parse_config(config_text())
    text = serialize(cfg)
    again = parse_config(text)
    assert again == cfg
    assert serialize(again) == text
    assert config_hash(again) == config_hash(cfg)


def test_config_hash_tracks_content():
    a = parse_config(config_text())
    b = parse_config(config_text(seed="102"))
    assert config_hash(a) != config_hash(b)
    assert len(config_hash(a)) == 16


@settings(max_examples=30, deadline=None)
@given(
    seed=st.integers(0, 2**31),
    n_real=st.integers(1, 10**6),
    lam=st.floats(0.01, 1.0),
    alpha=st.floats(0.01, 0.49),
)
def test_config_round_trip_property(seed, n_real, lam, alpha):
    text = config_text(
        seed=seed, n_realizations=n_real, alpha=repr(alpha), **{"lambda": repr(lam)}
    )
    cfg = parse_config(text)
    assert parse_config(serialize(cfg)) == cfg


# ---------------------------------------------------------------------------
# exit codes


def test_cli_sample_noise_success(tmp_path, capsys):
    cfgp = write_cfg(tmp_path)
    out = tmp_path / "run"
    rc, summary = run_cli(capsys, ["sample-noise", "--config", str(cfgp), "--out", str(out)])
    assert rc == 0
    assert (out / "v.qspd").exists() and (out / "grad_v_0.qspd").exists()
    meta = json.loads((out / "sample_noise_meta.json").read_text())
    assert meta["command"] == "sample-noise"
    assert meta["config_hash"] == summary["config_hash"]
    assert meta["seed"] == 101
    v = read_qspd(out / "v.qspd")
    assert v.values.shape == (17, 8)


def test_cli_missing_config_is_validation_error(tmp_path, capsys):
    rc, err = run_cli(capsys, ["sample-noise", "--config", str(tmp_path / "nope.cfg")])
    assert rc == 1
    assert err["error"]["exit"] == 1
    assert err["error"]["type"] == "validation"


def test_cli_bad_config_lists_violations(tmp_path, capsys):
    cfgp = write_cfg(tmp_path, s="1.0", seed="-4")
    rc, err = run_cli(capsys, ["sample-noise", "--config", str(cfgp)])
    assert rc == 1
    msgs = "\n".join(err["error"]["messages"])
    assert "trace class" in msgs and "seed" in msgs


def test_cli_usage_error(tmp_path, capsys):
    rc, err = run_cli(capsys, ["frobnicate", "--config", "x"])
    assert rc == 1
    assert err["error"]["type"] == "usage"


def test_cli_runtime_error_is_exit_2(tmp_path, capsys):
    cfgp = write_cfg(tmp_path)
    blocker = tmp_path / "blocker"
    blocker.write_text("a file, not a directory")
    rc, err = run_cli(
        capsys, ["sample-noise", "--config", str(cfgp), "--out", str(blocker / "sub")]
    )
    assert rc == 2
    assert err["error"]["type"] == "runtime"


def test_cli_gate_failure_is_exit_3(tmp_path, capsys, monkeypatch):
    class FakeCheck:
        passed = False
        ratio = np.array([9.0])

        def to_dict(self):
            return {"passed": False, "ratio": [9.0]}

    monkeypatch.setattr(cli, "covariance_check", lambda *a, **k: FakeCheck())
    cfgp = write_cfg(tmp_path)
    out = tmp_path / "run"
    rc, err = run_cli(capsys, ["verify-covariance", "--config", str(cfgp), "--out", str(out)])
    assert rc == 3
    assert err["error"]["type"] == "gate"
    report = json.loads((out / "covariance_report.json").read_text())
    assert report["gate"] == "FAIL"


# ---------------------------------------------------------------------------
# subcommand behaviour


def test_cli_sample_noise_reruns_byte_identical(tmp_path, capsys):
    cfgp = write_cfg(tmp_path)
    out = tmp_path / "run"
    assert cli.main(["sample-noise", "--config", str(cfgp), "--out", str(out)]) == 0
    capsys.readouterr()
    names = ["v.qspd", "grad_v_0.qspd", "sample_noise_meta.json"]
    snapshot = {n: (out / n).read_bytes() for n in names}
    assert cli.main(["sample-noise", "--config", str(cfgp), "--out", str(out)]) == 0
    capsys.readouterr()
    for n in names:
        assert (out / n).read_bytes() == snapshot[n], n


def test_cli_seed_override_changes_hash_and_draws(tmp_path, capsys):
    cfgp = write_cfg(tmp_path)
    rc1, s1 = run_cli(capsys, ["sample-noise", "--config", str(cfgp), "--out", str(tmp_path / "a")])
    rc2, s2 = run_cli(
        capsys,
        ["sample-noise", "--config", str(cfgp), "--seed", "999", "--out", str(tmp_path / "b")],
    )
    assert rc1 == rc2 == 0
    assert s1["config_hash"] != s2["config_hash"]
    assert s2["seed"] == 999
    va = read_qspd(tmp_path / "a" / "v.qspd")
    vb = read_qspd(tmp_path / "b" / "v.qspd")
    assert not np.array_equal(va.values, vb.values)


SOLVE_OVERRIDES = dict(dt="0.00390625", t_end="0.25", save_every="4", j_mode="grad_v_negated")


def test_cli_solve_then_norms_thin_shell(tmp_path, capsys):
    cfgp = write_cfg(tmp_path, **SOLVE_OVERRIDES)
    out = tmp_path / "run"
    rc, summary = run_cli(capsys, ["solve", "--config", str(cfgp), "--out", str(out)])
    assert rc == 0
    assert abs(summary["mean_drift_rate"]) <= 1e-10
    for n in ("u.qspd", "w.qspd", "v.qspd", "solve_meta.json"):
        assert (out / n).exists()
    w = read_qspd(out / "w.qspd")
    v = read_qspd(out / "v.qspd")
    assert np.array_equal(read_qspd(out / "u.qspd").values, w.values + v.values)
    assert w.dt == 0.00390625 * 4

    rc, summary = run_cli(capsys, ["norms", "--config", str(cfgp), "--out", str(out)])
    assert rc == 0
    gw = centered_gradient(w)
    gv = centered_gradient(v)
    expect = {
        "grad_v[0]": seminorm_dyadic(Field(gv[:, 0], dt=w.dt), 0.3).theta,
        "grad_u[0]": seminorm_dyadic(Field(gw[:, 0] + gv[:, 0], dt=w.dt), 0.3).theta,
        "w_c1alpha": c1alpha_seminorm(w, gw, 0.3),
    }
    assert summary["values"] == expect

    lines = (out / "norms.csv").read_text().splitlines()
    assert lines[0].startswith("# config_hash=") and "seed=101" in lines[0]
    assert lines[1] == "quantity,alpha,naive,theta,t,x,t_prime,x_prime"
    assert len(lines) == 2 + 3


def test_cli_norms_without_solve_outputs(tmp_path, capsys):
    cfgp = write_cfg(tmp_path, **SOLVE_OVERRIDES)
    rc, err = run_cli(capsys, ["norms", "--config", str(cfgp), "--out", str(tmp_path / "empty")])
    assert rc == 1
    assert "run solve first" in "\n".join(err["error"]["messages"])


def test_cli_mc_deterministic_and_stable(tmp_path, capsys):
    cfgp = write_cfg(tmp_path)
    out = tmp_path / "run"
    rc, summary = run_cli(
        capsys, ["mc", "--config", str(cfgp), "--out", str(out), "--deterministic"]
    )
    assert rc == 0 and summary["n"] == 12
    lines = (out / "mc_records.csv").read_text().splitlines()
    assert lines[1] == "seed,grad_v_alpha,grad_u_alpha,w_c1alpha,wall_time"
    assert len(lines) == 2 + 12
    for row in lines[2:]:
        cells = row.split(",")
        assert cells[2] == "" and cells[3] == ""  # noise-only campaign
        assert cells[4] == "0"
    report = json.loads((out / "mc_report.json").read_text())
    for key in (
        "command", "config_hash", "seed", "config", "n", "alpha", "workers",
        "deterministic", "moments", "tail", "failures", "records_csv", "gates",
    ):
        assert key in report, key
    assert report["deterministic"] is True and report["workers"] == 1
    assert report["gates"] == {"failure_rate": "PASS"}

    snapshot = {n: (out / n).read_bytes() for n in ("mc_records.csv", "mc_report.json")}
    assert cli.main(["mc", "--config", str(cfgp), "--out", str(out), "--deterministic"]) == 0
    capsys.readouterr()
    for n, blob in snapshot.items():
        assert (out / n).read_bytes() == blob, n


def test_cli_mc_rejects_file_j_mode(tmp_path, capsys):
    jp = tmp_path / "j0.qspd"
    write_qspd(jp, Field(np.zeros((1, 8)), dt=1.0))
    cfgp = write_cfg(tmp_path, j_mode="file", j_file=str(jp))
    rc, err = run_cli(capsys, ["mc", "--config", str(cfgp), "--out", str(tmp_path / "o")])
    assert rc == 1
    assert "campaigns support" in "\n".join(err["error"]["messages"])


def test_cli_solve_j_file_round_trip(tmp_path, capsys):
    # a spatially constant j divides out: same w as the zero-j wiring
    jp = tmp_path / "j0.qspd"
    write_qspd(jp, Field(np.full((1, 8), 1.25), dt=1.0))
    cfg_file = write_cfg(
        tmp_path, name="file.cfg", j_mode="file", j_file=str(jp),
        dt="0.00390625", t_end="0.25", save_every="4",
    )
    cfg_zero = write_cfg(
        tmp_path, name="zero.cfg", j_mode="zero",
        dt="0.00390625", t_end="0.25", save_every="4",
    )
    rc, _ = run_cli(capsys, ["solve", "--config", str(cfg_file), "--out", str(tmp_path / "f")])
    assert rc == 0
    rc, _ = run_cli(capsys, ["solve", "--config", str(cfg_zero), "--out", str(tmp_path / "z")])
    assert rc == 0
    wf = read_qspd(tmp_path / "f" / "w.qspd")
    wz = read_qspd(tmp_path / "z" / "w.qspd")
    assert np.allclose(wf.values, wz.values, atol=1e-12)


def test_cli_solve_j_file_component_count(tmp_path, capsys):
    jp = tmp_path / "j0.qspd"
    write_qspd(jp, Field(np.zeros((1, 8)), dt=1.0))
    cfgp = write_cfg(
        tmp_path, j_mode="file", j_file=f"{jp},{jp}",
        dt="0.00390625", t_end="0.25", save_every="4",
    )
    rc, err = run_cli(capsys, ["solve", "--config", str(cfgp), "--out", str(tmp_path / "o")])
    assert rc == 1
    assert "expected 1 component" in "\n".join(err["error"]["messages"])


def test_cli_solve_j_file_grid_mismatch(tmp_path, capsys):
    jp = tmp_path / "j0.qspd"
    write_qspd(jp, Field(np.zeros((1, 4)), dt=1.0))  # wrong n_x
    cfgp = write_cfg(
        tmp_path, j_mode="file", j_file=str(jp),
        dt="0.00390625", t_end="0.25", save_every="4",
    )
    rc, err = run_cli(capsys, ["solve", "--config", str(cfgp), "--out", str(tmp_path / "o")])
    assert rc == 1
    assert "single-slab" in "\n".join(err["error"]["messages"])


def test_cli_verify_covariance_passes(tmp_path, capsys):
    cfgp = write_cfg(tmp_path, kmax="4", n_x="16", n_realizations="200")
    out = tmp_path / "run"
    rc, summary = run_cli(capsys, ["verify-covariance", "--config", str(cfgp), "--out", str(out)])
    assert rc == 0
    assert summary["gate"] == "PASS"
    assert summary["max_ratio"] <= 4.0
    report = json.loads((out / "covariance_report.json").read_text())
    assert report["gate"] == "PASS" and report["n"] == 200


def test_cli_verify_ellipticity_passes(tmp_path, capsys):
    cfgp = write_cfg(tmp_path, n_realizations="5000")
    out = tmp_path / "run"
    rc, summary = run_cli(capsys, ["verify-ellipticity", "--config", str(cfgp), "--out", str(out)])
    assert rc == 0 and summary["gate"] == "PASS"
    report = json.loads((out / "ellipticity_report.json").read_text())
    assert report["kind"] == "tanh_perturbed"
    assert report["min_rayleigh"] >= 0.5 - 1e-12


def test_console_script_installed(tmp_path):
    cfgp = write_cfg(tmp_path)
    out = tmp_path / "run"
    proc = subprocess.run(
        ["qspde", "sample-noise", "--config", str(cfgp), "--out", str(out)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    summary = json.loads(proc.stdout.strip().splitlines()[-1])
    assert summary["seed"] == 101
    assert (out / "v.qspd").exists()
