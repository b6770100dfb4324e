"""Flat key-value experiment configuration files.

Grammar: one ``key = value`` per line, ``#`` starts a comment. Lists use
commas; condition sets use ``+`` within a set and ``;`` between sets;
federated client pairs separate the two clients with ``|``; domain pairs
are written ``3L->2H``. Unknown keys are errors so typos fail loudly.

Shipped presets live in the package's ``presets/`` directory:
``paper_tl``/``paper_fl`` encode the full published designs (150 runs
per transfer method, 100 federated runs), and ``desk_tl``/``desk_fl``
scale the same designs down to CPU-minutes.
"""

from __future__ import annotations

from importlib import resources

from .data import ConditionLabel, OperatingRegime
from .errors import ConfigError, ContractError
from .experiments import ExperimentSpec, Hyperparameters

PRESETS = ("paper", "desk")


def _parse_name(parser, text: str):
    try:
        return parser(text)
    except ContractError as err:
        raise ConfigError(str(err)) from None

_HYPER_INT = {"epochs", "rounds", "local_batches", "probe_epochs", "batch_size",
              "probe_batch_size", "sample_rate", "dataset_seed", "mask_size"}
_HYPER_FLOAT = {"learning_rate_tl", "learning_rate_fl", "trade_off",
                "probe_learning_rate", "eval_fraction", "data_seconds", "min_scale"}
_HYPER_STR = {"loss_variant"}
_HYPER_BOOL = {"reset_client_optimizer"}
_HYPER_KEYS = _HYPER_INT | _HYPER_FLOAT | _HYPER_STR | _HYPER_BOOL


def _parse_condition_set(text: str) -> frozenset:
    names = [part.strip() for part in text.split("+") if part.strip()]
    if not names:
        raise ConfigError(f"empty condition set in {text!r}")
    return frozenset(_parse_name(ConditionLabel.parse, name) for name in names)


def _parse_pairs(value: str):
    pairs = []
    for chunk in value.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        if "->" not in chunk:
            raise ConfigError(f"domain pair {chunk!r} must look like 3L->2H")
        source, target = (part.strip() for part in chunk.split("->", 1))
        pairs.append((_parse_name(OperatingRegime.parse, source),
                      _parse_name(OperatingRegime.parse, target)))
    return tuple(pairs)


def parse_config(text: str) -> ExperimentSpec:
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in entries:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        entries[key] = value

    def pop(key, default=None):
        return entries.pop(key, default)

    kind = pop("kind")
    if kind not in ("tl", "fl"):
        raise ConfigError(f"kind must be tl or fl, got {kind!r}")
    methods_value = pop("methods")
    if not methods_value:
        raise ConfigError("missing key: methods")
    methods = tuple(m.strip() for m in methods_value.split(",") if m.strip())
    seeds_value = pop("seeds")
    if not seeds_value:
        raise ConfigError("missing key: seeds")
    try:
        seeds = tuple(int(s) for s in seeds_value.split(","))
    except ValueError:
        raise ConfigError(f"seeds must be integers, got {seeds_value!r}") from None

    domain_pairs = ()
    tl_sets = []
    fl_sets = ()
    if kind == "tl":
        pairs_value = pop("domain_pairs")
        if not pairs_value:
            raise ConfigError("tl config needs domain_pairs")
        domain_pairs = _parse_pairs(pairs_value)
        for n in (2, 4, 6):
            value = pop(f"conditions_{n}")
            if value:
                sets = tuple(_parse_condition_set(part)
                             for part in value.split(";") if part.strip())
                tl_sets.append((n, sets))
        if not tl_sets:
            raise ConfigError("tl config needs at least one conditions_<n> key")
    else:
        value = pop("client_sets")
        if not value:
            raise ConfigError("fl config needs client_sets")
        pairs = []
        for part in value.split(";"):
            part = part.strip()
            if not part:
                continue
            if "|" not in part:
                raise ConfigError(f"client set {part!r} must have two |-separated sides")
            left, right = part.split("|", 1)
            pairs.append((_parse_condition_set(left), _parse_condition_set(right)))
        fl_sets = tuple(pairs)

    hyper_kwargs = {}
    for key in list(entries):
        if key not in _HYPER_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        value = entries.pop(key)
        try:
            if key in _HYPER_INT:
                hyper_kwargs[key] = int(value)
            elif key in _HYPER_FLOAT:
                hyper_kwargs[key] = float(value)
            elif key in _HYPER_BOOL:
                if value.lower() not in ("true", "false"):
                    raise ValueError(value)
                hyper_kwargs[key] = value.lower() == "true"
            else:
                hyper_kwargs[key] = value
        except ValueError:
            raise ConfigError(f"bad value for {key}: {value!r}") from None

    return ExperimentSpec(
        kind=kind,
        methods=methods,
        seeds=seeds,
        domain_pairs=domain_pairs,
        tl_sets=tuple(tl_sets),
        fl_sets=fl_sets,
        hyper=Hyperparameters(**hyper_kwargs),
    )


def load_config_file(path) -> ExperimentSpec:
    with open(path) as fh:
        return parse_config(fh.read())


def load_preset(name: str, kind: str) -> ExperimentSpec:
    """Shipped preset by name ("paper" or "desk") and kind ("tl"/"fl")."""
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {PRESETS}")
    if kind not in ("tl", "fl"):
        raise ConfigError(f"preset kind must be tl or fl, got {kind!r}")
    resource = resources.files("fedtwin").joinpath(f"presets/{name}_{kind}.cfg")
    return parse_config(resource.read_text())
