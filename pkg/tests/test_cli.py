import json

import numpy as np
import pytest

from teamoc import cli
from teamoc.core import DecPomdpModel, save_model

from models import tiny_switch_model


def test_export_validate_plan_oracle(tmp_path, capsys):
    model = tmp_path / "m.json"
    assert cli.main(["export-env", "--env", "switch", "--num-agents", "1", "--out", str(model)]) == 0
    assert cli.main(["validate", "--model", str(model)]) == 0
    report = tmp_path / "r.json"
    assert cli.main(["plan", "--model", str(model), "--out", str(report)]) == 0
    v0 = json.loads(report.read_text())["value_at_initial"]
    capsys.readouterr()
    assert cli.main(["oracle", "--model", str(model), "--report", str(report), "--episodes", "2000"]) == 0
    out = capsys.readouterr().out.split()
    assert float(out[1]) == pytest.approx(v0, abs=1e-9)


def test_validate_reports_bad_model(tmp_path, capsys):
    m = tiny_switch_model()
    P = np.array(m.P)
    P[0, 0] *= 0.5
    bad = DecPomdpModel.from_dense(m.agent_states, m.agent_actions, m.agent_observations, P, m.obs_matrix,
                                   0.9, m.initial, np.array(m.R), shared_states=3)
    p = tmp_path / "bad.json"
    save_model(bad, p)
    assert cli.main(["validate", "--model", str(p)]) == 1
    assert "transition row (s=0, a=0)" in capsys.readouterr().out


def test_train_requires_mandatory_flags(tmp_path):
    with pytest.raises(SystemExit):
        cli.main(["train", "--seed", "0", "--out", str(tmp_path)])
    with pytest.raises(SystemExit):
        cli.main(["train", "--broadcast-mode", "always", "--out", str(tmp_path)])


def test_train_with_config_and_overrides(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"env": "switch", "episodes": 50, "learner": {"max_steps": 8}}))
    out = tmp_path / "run"
    assert cli.main(["train", "--config", str(cfg), "--seed", "0", "1", "--out", str(out),
                     "--broadcast-mode", "never", "--episodes", "4", "--alpha-q", "0.25",
                     "--critic-baseline", "true", "--actions", "0", "1", "2", "3"]) == 0
    saved = json.loads((out / "config.json").read_text())
    assert saved["episodes"] == 4 and saved["learner"]["alpha_q"] == 0.25
    assert saved["learner"]["max_steps"] == 8 and saved["learner"]["critic_baseline"] is True
    assert saved["actions"] == [0, 1, 2, 3] and saved["broadcast_mode"] == "never"
    assert len((out / "metrics_seed1.csv").read_text().splitlines()) == 5


def test_sweep_and_bad_values(tmp_path, capsys):
    out = tmp_path / "sw"
    assert cli.main(["sweep", "--seed", "0", "--out", str(out), "--broadcast-mode", "intermittent",
                     "--axis", "num_options", "--values", "1", "2", "--episodes", "3", "--max-steps", "5"]) == 0
    assert (out / "sweep_num_options.csv").exists()
    assert cli.main(["train", "--seed", "0", "--out", str(tmp_path / "x"), "--broadcast-mode", "always",
                     "--alpha-q", "3.0"]) == 2
    assert "alpha_q" in capsys.readouterr().err


def test_validate_config(tmp_path):
    good = tmp_path / "g.json"
    good.write_text(json.dumps({"episodes": 10}))
    bad = tmp_path / "b.json"
    bad.write_text(json.dumps({"episodes": 0}))
    assert cli.main(["validate", "--config", str(good)]) == 0
    assert cli.main(["validate", "--config", str(bad)]) == 1
