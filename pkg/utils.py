import contextlib
import os

import numpy as np
import yaml
from threadpoolctl import threadpool_limits
from yacs.config import CfgNode

from datasets import build_dataset
from datasets.utils import load_csv, split
from gradforge.errors import ConfigError, ParseError, ShapeError
from gradforge.loss import LossKind
from gradforge.network import NetworkSpec, init_params
from gradforge.optimize import TrainConfig

THREADS_ENV = "GRADFORGE_THREADS"

_C = CfgNode()

_C.data = CfgNode()
_C.data.train = "toy"  # registered dataset name or CSV path
_C.data.validation = ""  # CSV path, empty for none
_C.data.val_fraction = 0.0  # held out of data.train when no validation file is given
_C.data.n_features = 2
_C.data.classes = 2
_C.data.samples = 500  # size of generated datasets
_C.data.split_seed = 1

_C.network = CfgNode()
_C.network.input = [2]
_C.network.layers = ["dense 2 sigmoid", "dense 3 sigmoid", "dense 2 sigmoid"]

_C.loss = CfgNode({"kind": "quadratic", "lambda": 0.0})

_C.train = CfgNode()
_C.train.scheme = "single_with_replacement"
_C.train.batch_size = 1
_C.train.with_replacement = False
_C.train.lr_schedule = [[1, 0.05]]
_C.train.schedule_unit = "step"
_C.train.momentum = 0.0
_C.train.dropout = []
_C.train.dropout_rescale = True
_C.train.niter = 1000000
_C.train.epochs = 0
_C.train.seed = 1
_C.train.cost_log_stride = 1
_C.train.patience = 0

_C.gradcheck = CfgNode()
_C.gradcheck.h = 1e-6
_C.gradcheck.tolerance = 1e-5
_C.gradcheck.kink_tolerance = 1e-4

_C.output = CfgNode()
_C.output.dir = "output"


def get_cfg_defaults():
    return _C.clone()


def _key_of(message):
    # yacs ends both its unknown-key and type-mismatch messages with the key
    return message.rsplit(" ", 1)[-1].strip("'\"")


def _coerce_reals(loaded, defaults):
    """Ints, and strings like ``1e-6`` that YAML leaves unparsed, become floats where the default is a float."""
    for key, value in loaded.items():
        if key not in defaults:
            continue
        default = defaults[key]
        if isinstance(value, dict) and isinstance(default, CfgNode):
            _coerce_reals(value, default)
        elif isinstance(default, float) and not isinstance(value, bool):
            if isinstance(value, int):
                loaded[key] = float(value)
            elif isinstance(value, str):
                with contextlib.suppress(ValueError):
                    loaded[key] = float(value)


def get_config_file(config_file):
    """Defaults merged with a YAML experiment file. Unknown keys and type mismatches raise ConfigError."""
    cfg = get_cfg_defaults()
    if config_file is None:
        return cfg
    if not os.path.exists(config_file):
        raise ConfigError("config", f"the configuration file {config_file} was not found")

    with open(config_file, 'r') as file:
        try:
            loaded = yaml.load(file, Loader=yaml.SafeLoader)
        except yaml.YAMLError as e:
            mark = getattr(e, "problem_mark", None)
            raise ParseError(config_file, mark.line + 1 if mark else 0, str(e).splitlines()[0]) from None

    if loaded is None:
        return cfg
    if not isinstance(loaded, dict):
        raise ParseError(config_file, 1, "expected a mapping of config sections")
    _coerce_reals(loaded, cfg)
    try:
        cfg.merge_from_other_cfg(CfgNode(loaded))
    except (KeyError, ValueError) as e:
        message = e.args[0] if e.args else str(e)
        raise ConfigError(_key_of(message), message) from None
    return cfg


def apply_overrides(cfg, args):
    """Command-line flags win over file values."""
    opts = []
    if getattr(args, "seed", None) is not None:
        opts += ["train.seed", str(args.seed)]
    if getattr(args, "niter", None) is not None:
        opts += ["train.niter", str(args.niter), "train.epochs", "0"]
    if getattr(args, "eta", None) is not None:
        opts += ["train.lr_schedule", repr([[1, float(args.eta)]]), "train.schedule_unit", "step"]
    if getattr(args, "out", None) is not None:
        opts += ["output.dir", args.out]
    if getattr(args, "data", None) is not None:
        opts += ["data.train", args.data]
    try:
        cfg.merge_from_list(opts)
    except (KeyError, ValueError) as e:
        message = e.args[0] if e.args else str(e)
        raise ConfigError(_key_of(message), message) from None
    cfg.freeze()
    return cfg


def build_network(cfg, seed):
    try:
        net = NetworkSpec.from_descriptions(cfg.network.input, cfg.network.layers)
    except ShapeError as e:
        raise ConfigError("network.layers", str(e)) from None
    return init_params(net, seed)


def build_loss(cfg):
    return LossKind(cfg.loss.kind, float(cfg.loss["lambda"]))


def build_train_config(cfg, record_samples=False):
    t = cfg.train
    try:
        schedule = tuple((int(length), float(eta)) for length, eta in t.lr_schedule)
    except (TypeError, ValueError):
        raise ConfigError("train.lr_schedule", f"expected a list of [length, eta] pairs, got {t.lr_schedule}") from None
    return TrainConfig(scheme=t.scheme, batch_size=t.batch_size, with_replacement=t.with_replacement,
                       lr_schedule=schedule, schedule_unit=t.schedule_unit, momentum=float(t.momentum),
                       dropout=tuple(float(p) for p in t.dropout), dropout_rescale=t.dropout_rescale,
                       niter=t.niter, epochs=t.epochs, seed=t.seed, cost_log_stride=t.cost_log_stride,
                       patience=t.patience, record_samples=record_samples)


def build_datasets(cfg, net=None):
    """(train, validation) for the run; validation may be None."""
    d = cfg.data
    data = build_dataset(d.train, d.n_features, d.classes, d.samples, d.split_seed)
    if d.validation:
        train_data, val_data = data, load_csv(d.validation, data.inputs.shape[1], data.num_classes)
    elif d.val_fraction > 0:
        parts = split(data, d.val_fraction, d.split_seed)
        train_data, val_data = parts.train, parts.validation
    else:
        train_data, val_data = data, None
    if net is not None:
        if net.input_dim != train_data.inputs.shape[1]:
            raise ConfigError("network.input", f"network takes {net.input_dim} inputs, data has {train_data.inputs.shape[1]} features")
        if net.output_dim != train_data.num_classes:
            raise ConfigError("network.layers", f"network has {net.output_dim} outputs, data has {train_data.num_classes} classes")
    return train_data, val_data


def thread_limit():
    """Context capping BLAS/OpenMP threads to $GRADFORGE_THREADS (0 or unset: library default)."""
    raw = os.environ.get(THREADS_ENV, "0")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(THREADS_ENV, f"expected an integer, got '{raw}'") from None
    if n < 0:
        raise ConfigError(THREADS_ENV, f"must be >= 0, got {n}")
    if n == 0:
        return contextlib.nullcontext()
    return threadpool_limits(limits=n)


def _fmt(value):
    return "" if value is None else format(value, ".17g")


def write_cost_history(history, path):
    """``step,train_cost[,val_cost]``; the val column appears when any entry has one."""
    with_val = any(e.val_cost is not None for e in history)
    with open(path, "w", encoding="utf-8") as f:
        f.write("step,train_cost,val_cost\n" if with_val else "step,train_cost\n")
        for e in history:
            row = [str(e.step), _fmt(e.train_cost)]
            if with_val:
                row.append(_fmt(e.val_cost))
            f.write(",".join(row) + "\n")


def write_summary(path, fields):
    with open(path, "w", encoding="utf-8") as f:
        for key, value in fields.items():
            f.write(f"{key}: {value}\n")


def write_predictions(path, outputs):
    """``index,class,out_0,...`` for each row of network outputs."""
    outputs = np.atleast_2d(outputs)
    with open(path, "w", encoding="utf-8") as f:
        f.write(",".join(["index", "class"] + [f"out_{j}" for j in range(outputs.shape[1])]) + "\n")
        for i, out in enumerate(outputs):
            f.write(",".join([str(i), str(int(np.argmax(out)))] + [_fmt(v) for v in out]) + "\n")
