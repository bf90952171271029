import pytest

from glmmnet.config import load_config, load_config_string, parse_id_list, parse_model_options
from glmmnet.errors import ConfigError

EXAMPLE = """
[run]
reps = 3
base_seed = 11
experiments = 1-2,5     ; comment
models = GLMMNet, NN_ee
n_draws = 500

[model:GLMMNet]
hidden = 8,4
weight_decay = 0.5
scale_learning_rate = 0.01

[experiment:7]
signal_to_noise = 2,1,1
family = gamma
link = log
distribution = skewed
q = 10
"""


def test_parse_id_list():
    assert parse_id_list("1-3,5") == ["1", "2", "3", "5"]
    assert parse_id_list(" 4 , 2 ") == ["4", "2"]
    with pytest.raises(ConfigError):
        parse_id_list("3-1")
    with pytest.raises(ConfigError):
        parse_id_list("a-b")


def test_load_example(tmp_path):
    path = tmp_path / "plan.ini"
    path.write_text(EXAMPLE)
    plan = load_config(path)
    assert plan.reps == 3 and plan.base_seed == 11 and plan.n_draws == 500
    assert plan.experiments == ["1", "2", "5"]
    assert plan.models == ["GLMMNet", "NN_ee"]
    assert plan.model_options["GLMMNet"] == {"hidden": (8, 4), "weight_decay": 0.5, "scale_learning_rate": 0.01}
    exp7 = plan.experiment("7")
    assert exp7.family == "gamma" and exp7.q == 10 and exp7.category_distribution == "skewed"
    assert plan.experiment("1").n_train == 5000


def test_empty_hidden_and_prior_list():
    opts = parse_model_options({"hidden": "", "prior_scale": "0.5, 2"})
    assert opts == {"hidden": (), "prior_scale": (0.5, 2.0)}


@pytest.mark.parametrize("text", [
    "[run]\nbogus = 1\n",
    "[run]\nexperiments = 9\n",
    "[model:GLMMNet]\nlearning_rat = 0.1\n",
    "[model:GLMMNet]\nbatch_size = many\n",
    "[weird]\nx = 1\n",
    "[run]\nreps = 0\n",
    "[experiment:8]\ncolour = red\n",
    "[run\n",
])
def test_invalid_configs(text):
    with pytest.raises(ConfigError):
        load_config_string(text)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.ini")
