"""Benchmark configuration files (INI syntax read by :mod:`configparser`).

Grammar::

    [run]
    reps = 20                 ; repetitions per experiment (R >= 1)
    base_seed = 2024
    experiments = 1-3,5       ; ids: ranges and comma lists
    models = GLMMNet, NN_ee   ; registered model names
    jobs = 1                  ; worker processes
    n_draws = 10000           ; posterior draws for mixture forecasts
    n_train = 5000            ; optional overrides of the built-in experiments
    n_test = 2500
    q = 100

    [model:GLMMNet_l2]        ; hyperparameter overrides for one model
    weight_decay = 0.5
    hidden = 64,32,16

    [experiment:7]            ; a custom experiment
    signal_to_noise = 4,1,1
    family = gaussian
    link = identity
    distribution = balanced

Unknown keys in ``[run]`` or in model sections are configuration errors.
"""

import configparser
from dataclasses import dataclass, field, replace

from .errors import ConfigError
from .simulation import SimulationConfig, table3_experiments

RUN_KEYS = {"reps", "base_seed", "experiments", "models", "jobs", "n_draws", "n_train", "n_test", "q", "folds"}
MODEL_KEYS = {"hidden", "learning_rate", "batch_size", "max_epochs", "patience", "validation_fraction",
              "mc_samples", "weight_decay", "prior_scale", "scale_multiplier", "scale_learning_rate",
              "embedding_dim", "folds"}
EXPERIMENT_KEYS = {"signal_to_noise", "family", "link", "distribution", "n_train", "n_test", "q"}


def parse_id_list(text):
    """``"1-3,5"`` -> ``["1", "2", "3", "5"]``."""
    out = []
    for part in str(text).replace(" ", "").split(","):
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-", 1)
            try:
                lo_i, hi_i = int(lo), int(hi)
            except ValueError:
                raise ConfigError(f"bad id range {part!r}") from None
            if hi_i < lo_i:
                raise ConfigError(f"empty id range {part!r}")
            out.extend(str(i) for i in range(lo_i, hi_i + 1))
        else:
            out.append(part)
    return out


def parse_name_list(text):
    return [s.strip() for s in str(text).split(",") if s.strip()]


def _number_list(text, kind=float):
    try:
        return tuple(kind(v) for v in parse_name_list(text))
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of numbers, got {text!r}") from None


def parse_model_options(section):
    opts = {}
    for key, value in section.items():
        if key not in MODEL_KEYS:
            raise ConfigError(f"unknown model option {key!r}")
        try:
            if key == "hidden":
                opts[key] = _number_list(value, int) if value.strip() else ()
            elif key in ("batch_size", "max_epochs", "patience", "mc_samples", "embedding_dim", "folds"):
                opts[key] = int(value)
            elif key == "prior_scale":
                vals = _number_list(value)
                opts[key] = vals[0] if len(vals) == 1 else vals
            else:
                opts[key] = float(value)
        except ValueError:
            raise ConfigError(f"bad value for {key!r}: {value!r}") from None
    return opts


@dataclass
class RunPlan:
    experiments: list
    models: list
    reps: int = 50
    base_seed: int = 0
    jobs: int = 1
    n_draws: int = 10_000
    folds: int = 5
    model_options: dict = field(default_factory=dict)
    experiment_configs: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.reps < 1:
            raise ConfigError("reps must be at least 1")
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")
        if self.n_draws < 1:
            raise ConfigError("n_draws must be at least 1")

    def experiment(self, exp_id):
        try:
            return self.experiment_configs[str(exp_id)]
        except KeyError:
            raise ConfigError(f"unknown experiment {exp_id!r}") from None


def builtin_experiments(n_train=5000, n_test=2500, q=100):
    return {c.name: c for c in table3_experiments(n_train, n_test, q)}


def load_config(path):
    """Parse a config file into a :class:`RunPlan` (model names are not yet validated)."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path!r}: {exc}") from None
    return plan_from_parser(parser)


def load_config_string(text):
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    return plan_from_parser(parser)


def plan_from_parser(parser):
    run = parser["run"] if parser.has_section("run") else {}
    for key in run:
        if key not in RUN_KEYS:
            raise ConfigError(f"unknown [run] option {key!r}")
    try:
        n_train = int(run.get("n_train", 5000))
        n_test = int(run.get("n_test", 2500))
        q = int(run.get("q", 100))
        experiments = builtin_experiments(n_train, n_test, q)
        model_options = {}
        for name in parser.sections():
            if name.startswith("model:"):
                model_options[name[6:].strip()] = parse_model_options(parser[name])
            elif name.startswith("experiment:"):
                exp_id = name[11:].strip()
                sec = parser[name]
                for key in sec:
                    if key not in EXPERIMENT_KEYS:
                        raise ConfigError(f"unknown experiment option {key!r}")
                base = experiments.get(exp_id, SimulationConfig(n_train=n_train, n_test=n_test, q=q))
                experiments[exp_id] = replace(
                    base,
                    signal_to_noise=_number_list(sec["signal_to_noise"]) if "signal_to_noise" in sec
                    else base.signal_to_noise,
                    family=sec.get("family", base.family),
                    link=sec.get("link", base.link),
                    category_distribution=sec.get("distribution", base.category_distribution),
                    n_train=int(sec.get("n_train", base.n_train)),
                    n_test=int(sec.get("n_test", base.n_test)),
                    q=int(sec.get("q", base.q)),
                    name=exp_id,
                )
            elif name != "run":
                raise ConfigError(f"unknown section [{name}]")
        plan = RunPlan(
            experiments=parse_id_list(run.get("experiments", "1")),
            models=parse_name_list(run.get("models", "GLMMNet")),
            reps=int(run.get("reps", 50)),
            base_seed=int(run.get("base_seed", 0)),
            jobs=int(run.get("jobs", 1)),
            n_draws=int(run.get("n_draws", 10_000)),
            folds=int(run.get("folds", 5)),
            model_options=model_options,
            experiment_configs=experiments,
        )
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from None
    for exp_id in plan.experiments:
        plan.experiment(exp_id)
    return plan
