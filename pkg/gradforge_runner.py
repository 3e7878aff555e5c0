import argparse
import os
import sys
import time

import numpy as np
from tabulate import tabulate

from datasets import build_dataset
from datasets.boundary import boundary_grid, write_boundary_csv
from gradforge.backprop import backward, compare_gradients, fd_gradient, kink_margin, resolution_floor
from gradforge.errors import ConfigError, GradcheckError, GradforgeError
from gradforge.loss import dataset_cost, scaled_cost
from gradforge.metrics import evaluate, format_report, summarize, to_csv, top_k_error
from gradforge.network import forward, forward_many, load_model, param_count, save_model
from gradforge.optimize import train
from gradforge.rng import make_stream
from utils import (apply_overrides, build_datasets, build_loss, build_network, build_train_config, get_config_file,
                   thread_limit, write_cost_history, write_predictions, write_summary)

MODEL_FILE = "model.txt"
KINK_DRAWS = 100


class ArgumentParser(argparse.ArgumentParser):

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error:2:usage: {message}\n")
        sys.exit(2)


def get_arguments(argv=None):
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', dest='config', type=str, default=None, help='experiment settings in yaml format.')
    common.add_argument('--seed', dest='seed', type=int, default=None, help='overrides train.seed.')
    common.add_argument('--niter', dest='niter', type=int, default=None, help='overrides the step budget (and clears train.epochs).')
    common.add_argument('--eta', dest='eta', type=float, default=None, help='replaces the learning-rate schedule by one constant rate.')
    common.add_argument('--out', dest='out', type=str, default=None, help='output directory, overrides output.dir.')
    common.add_argument('--data', dest='data', type=str, default=None, help='dataset name (toy, toy_extended, toy_images) or CSV path.')
    common.add_argument('--model', dest='model', type=str, default=None, help='model file written by train.')
    common.add_argument('--resolution', dest='resolution', type=int, default=201, help='boundary grid nodes per side.')
    common.add_argument('--wandb-log', dest='wandb', action='store_true', help='Whether you want to log to wandb.')

    parser = ArgumentParser(prog='gradforge')
    sub = parser.add_subparsers(dest='command', required=True, parser_class=ArgumentParser)
    sub.add_parser('train', parents=[common], help='train a network from a config file.')
    gradcheck = sub.add_parser('gradcheck', parents=[common], help='compare back propagation with finite differences.')
    gradcheck.add_argument('--corrupt-gradient', dest='corrupt', action='store_true',
                           help='perturb the analytic gradient before comparing (negative control).')
    sub.add_parser('eval', parents=[common], help='confusion matrix of a saved model on a dataset.')
    predict = sub.add_parser('predict', parents=[common], help='classify dataset rows or points with a saved model.')
    predict.add_argument('--point', dest='points', action='append', default=[],
                         help='comma separated input coordinates, may be repeated.')
    sub.add_parser('boundary', parents=[common], help='export the decision boundary grid of a 2-input model.')
    return parser.parse_args(argv)


def _output_dir(cfg):
    os.makedirs(cfg.output.dir, exist_ok=True)
    return cfg.output.dir


def _require_model(args):
    if not args.model:
        raise ConfigError("model", "this command needs --model PATH")
    return load_model(args.model)


def run_train(cfg, args):
    train_cfg = build_train_config(cfg)
    net = build_network(cfg, train_cfg.seed)
    loss = build_loss(cfg)
    train_data, val_data = build_datasets(cfg, net)
    out = _output_dir(cfg)

    print(f"Training {param_count(net)} parameters on {len(train_data)} samples.")
    if val_data is not None:
        print(f"Validating on {len(val_data)} samples.")
    start = time.perf_counter()
    with open(os.path.join(out, "train_log.txt"), 'w') as log:
        report = train(net, train_data, val_data, loss, train_cfg, log=log)
    wall_time = time.perf_counter() - start

    save_model(report.final_net, os.path.join(out, MODEL_FILE))
    write_cost_history(report.cost_history, os.path.join(out, "cost_history.csv"))
    summary = {
        "steps": report.steps_taken,
        "initial_cost": format(report.cost_history[0].train_cost, ".10g"),
        "final_cost": format(dataset_cost(loss, report.final_net, train_data), ".10g"),
        "stopped_early": report.stopped_early,
    }
    if not loss.uses_labels:
        summary["scaled_cost"] = format(scaled_cost(report.final_net, train_data), ".10g")
    if val_data is not None and len(val_data):
        summary["final_val_cost"] = format(dataset_cost(loss, report.final_net, val_data), ".10g")
    summary["wall_time"] = f"{wall_time:.3f}"
    write_summary(os.path.join(out, "summary.txt"), summary)

    print(tabulate(list(summary.items()), tablefmt="plain"))
    if args.wandb:
        import wandb
        wandb.init(project="gradforge", config=cfg, reinit=True)
        for entry in report.cost_history:
            row = {"train_cost": entry.train_cost}
            if entry.val_cost is not None:
                row["val_cost"] = entry.val_cost
            wandb.log(row, step=entry.step)
        wandb.log({k: v for k, v in summary.items() if k != "wall_time"})
        wandb.finish()
    return 0


def _gradcheck_sample(net, loss, seed, kink_tolerance):
    """A random input (and target) away from every kink of the network."""
    rng = make_stream(seed, "gradcheck")
    for _ in range(KINK_DRAWS):
        x = rng.uniform(0.0, 1.0, size=net.input_dim)
        label = int(rng.integers(net.output_dim))
        target = label if loss.uses_labels else np.eye(net.output_dim)[label]
        if kink_margin(net, forward(net, x)) > kink_tolerance:
            return x, target
    raise GradcheckError(f"no sample in {KINK_DRAWS} draws stays {kink_tolerance} away from a kink")


def run_gradcheck(cfg, args):
    g = cfg.gradcheck
    net = build_network(cfg, cfg.train.seed)
    loss = build_loss(cfg)
    x, target = _gradcheck_sample(net, loss, cfg.train.seed, g.kink_tolerance)

    analytic = backward(net, forward(net, x), target, loss)
    if args.corrupt:
        first = next(i for i, layer in enumerate(net.layers) if layer.has_params)
        analytic.weight_grads[first] = analytic.weight_grads[first] + 1e-2
    numeric = fd_gradient(net, x, target, loss, h=g.h)
    report = compare_gradients(net, analytic, numeric, resolution_floor(net, x, target, loss, g.h, g.tolerance))

    rows = [[c.layer, c.description, f"{c.weight_error:.3e}", f"{c.bias_error:.3e}"] for c in report.layers]
    print(tabulate(rows, headers=["layer", "description", "max rel err (W)", "max rel err (b)"]))
    if not report.passed(g.tolerance):
        worst = "; ".join(f"layer {c.layer} {c.worst[0]}{list(c.worst[1])} {max(c.weight_error, c.bias_error):.3e}"
                          for c in report.layers if max(c.weight_error, c.bias_error) >= g.tolerance)
        raise GradcheckError(f"relative error {report.max_error:.3e} exceeds {g.tolerance:g}: {worst}")
    print(f"Gradient check passed, max relative error {report.max_error:.3e}.")
    return 0


def _eval_data(cfg, args, net):
    name = args.data or cfg.data.train
    return build_dataset(name, net.input_dim, net.output_dim, cfg.data.samples, cfg.data.split_seed)


def run_eval(cfg, args):
    net = _require_model(args)
    data = _eval_data(cfg, args, net)
    cm = evaluate(net, data)
    summary = summarize(cm)
    report = format_report(cm, data.classnames)
    out = _output_dir(cfg)
    with open(os.path.join(out, "confusion.txt"), 'w') as f:
        f.write(report + "\n")
    with open(os.path.join(out, "confusion.csv"), 'w') as f:
        f.write(to_csv(cm, data.classnames))

    print(report)
    print(f"Overall accuracy: {100.0 * summary.overall:.1f}%")
    if net.output_dim > 5:
        print(f"Top-5 error: {100.0 * top_k_error(net, data, 5):.1f}%")
    return 0


def run_predict(cfg, args):
    net = _require_model(args)
    if args.points:
        try:
            inputs = np.array([[float(v) for v in p.split(",")] for p in args.points])
        except ValueError:
            raise ConfigError("point", f"expected comma separated numbers, got {args.points}") from None
    else:
        inputs = _eval_data(cfg, args, net).inputs
    outputs = forward_many(net, inputs)
    path = os.path.join(_output_dir(cfg), "predictions.csv")
    write_predictions(path, outputs)
    print(f"Wrote {outputs.shape[0]} predictions to {path}.")
    return 0


def run_boundary(cfg, args):
    net = _require_model(args)
    grid = boundary_grid(net, args.resolution)
    path = os.path.join(_output_dir(cfg), "boundary.csv")
    write_boundary_csv(grid, path)
    print(f"Wrote {len(grid)} grid nodes to {path}.")
    return 0


COMMANDS = {
    "train": run_train,
    "gradcheck": run_gradcheck,
    "eval": run_eval,
    "predict": run_predict,
    "boundary": run_boundary,
}


def main(argv=None):
    args = get_arguments(argv)
    try:
        cfg = apply_overrides(get_config_file(args.config), args)
        if args.config:
            print("\nRunning configurations:")
            print(cfg, "\n")
        with thread_limit():
            return COMMANDS[args.command](cfg, args)
    except GradforgeError as e:
        print(f"error:{e.exit_code}:{type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"error:2:{type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
