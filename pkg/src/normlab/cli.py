"""Command-line harness: train, compare, gridsearch, and gradcheck.

Exit codes: 0 success, 1 usage error, 2 data error, 3 verification failure.
"""

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .checkpoint import load_checkpoint, save_checkpoint
from .config import (
    ExperimentConfig,
    UsageError,
    build_network_for_config,
    load_config_file,
    prepare_task,
    seed_plan,
    validate_experiment,
)
from .data import DataFormatError
from .nn import Adam, build_dense_net, network_evaluate, network_train_epoch
from .norm import (
    InferenceFlags,
    UninitializedStatsError,
    bln_backward,
    bln_forward_train,
    bn_backward,
    bn_forward_train,
    init_params,
    init_running,
    ln_backward,
    ln_forward,
)
from .search import evaluate_all, select_best
from .tensor import Rng, Tensor, randn

METRICS_HEADER = "run_id,normalizer,batch_size,seed,epoch,step,split,loss,accuracy"
GRID_HEADER = "rank,e_b,std_b,e_f,std_f,loss,accuracy"
GRADCHECK_TOLERANCE = 1e-4
GRADCHECK_STEP = 1e-5


@dataclass
class MetricsRecord:
    run_id: str
    normalizer: str
    batch_size: int
    seed: int
    epoch: int
    step: int
    split: str
    loss: float
    accuracy: float

    def to_csv_row(self):
        return (
            f"{self.run_id},{self.normalizer},{self.batch_size},{self.seed},"
            f"{self.epoch},{self.step},{self.split},{self.loss!r},{self.accuracy!r}"
        )


def run_training(config):
    """Train one network per the config; returns (metrics records, network).

    Fully deterministic: datasets, initialization, and epoch shuffles all
    derive from the config seed.
    """
    train_ds, _, test_ds = prepare_task(config)
    plan = seed_plan(config.seed)
    net = build_network_for_config(config, Rng(plan["init"]))
    optimizer = Adam(config.learning_rate)
    epoch_stream = Rng(plan["epochs"])
    flags = InferenceFlags(**config.flags)
    run_id = f"{config.task}-{config.normalizer}-b{config.batch_size}-s{config.seed}"
    records = []
    total_steps = 0
    for epoch in range(1, config.epochs + 1):
        steps = network_train_epoch(net, train_ds, config.batch_size, optimizer, epoch_stream.child())
        total_steps += len(steps)
        seen = sum(n for _, _, n in steps)
        train_loss = sum(l * n for l, _, n in steps) / seen
        train_acc = sum(a * n for _, a, n in steps) / seen
        records.append(MetricsRecord(
            run_id, config.normalizer, config.batch_size, config.seed,
            epoch, total_steps, "train", train_loss, train_acc,
        ))
        test_loss, test_acc = network_evaluate(net, test_ds, flags=flags)
        records.append(MetricsRecord(
            run_id, config.normalizer, config.batch_size, config.seed,
            epoch, total_steps, "test", test_loss, test_acc,
        ))
    return records, net


def _config_comment_lines(effective):
    text = json.dumps(effective, sort_keys=True, indent=2)
    return [f"# {line}" for line in text.splitlines()]


def write_metrics_csv(path, effective_config, records):
    lines = _config_comment_lines(effective_config)
    lines.append(METRICS_HEADER)
    lines.extend(r.to_csv_row() for r in records)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_grid_csv(path, effective_config, results):
    lines = _config_comment_lines(effective_config)
    lines.append(GRID_HEADER)
    for r in results:
        e_b, std_b, e_f, std_f = r.flags.as_tuple()
        lines.append(f"{r.rank},{e_b},{std_b},{e_f},{std_f},{r.loss!r},{r.accuracy!r}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _apply_seed_override(raw):
    env = os.environ.get("BLN_SEED")
    if env is None:
        return raw
    try:
        seed = int(env)
    except ValueError:
        raise UsageError(f"BLN_SEED must be an integer, got {env!r}") from None
    out = dict(raw)
    out["seed"] = seed
    return out


def _check_output_path(path, force):
    if path and os.path.exists(path) and not force:
        raise UsageError(f"refusing to overwrite existing file {path} (use --force)")


def cmd_train(args):
    raw = _apply_seed_override(load_config_file(args.config))
    config = validate_experiment(raw)
    _check_output_path(args.checkpoint, args.force)
    records, net = run_training(config)
    write_metrics_csv(args.out, config.to_dict(), records)
    save_checkpoint(args.checkpoint, net, meta=config.to_dict())
    print(f"wrote {args.out} and {args.checkpoint}")
    return 0


def cmd_compare(args):
    raw = _apply_seed_override(load_config_file(args.config))
    configs = validate_experiment(raw, multi=True)
    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            outcomes = list(pool.map(run_training, configs))
    else:
        outcomes = [run_training(c) for c in configs]
    records = [record for recs, _ in outcomes for record in recs]
    effective = dict(raw)
    for key, value in configs[0].to_dict().items():
        effective.setdefault(key, value)
    write_metrics_csv(args.out, effective, records)
    print(f"wrote {args.out} ({len(configs)} runs)")
    return 0


def cmd_gridsearch(args):
    raw = _apply_seed_override(load_config_file(args.config))
    config = validate_experiment(raw)
    net, _ = load_checkpoint(args.checkpoint)
    bln_layers = [n for n in net.normalizers() if n.scheme == "bln"]
    if not bln_layers:
        raise DataFormatError("no BLN layers to configure")
    if any(layer.running.count == 0 for layer in bln_layers):
        raise DataFormatError("checkpoint has unpopulated running statistics")
    _, validation, test = prepare_task(config)
    dataset = test if args.search_on_test else validation
    results = evaluate_all(net, dataset, threads=args.threads)
    write_grid_csv(args.out, config.to_dict(), results)
    best = select_best(results)
    print(f"wrote {args.out}; best configuration "
          f"(e_b={best.flags.e_b}, std_b={best.flags.std_b}, "
          f"e_f={best.flags.e_f}, std_f={best.flags.std_f}) "
          f"loss={best.loss!r} accuracy={best.accuracy!r}")
    return 0


# ---------------------------------------------------------------------------
# gradient verification
# ---------------------------------------------------------------------------

_GRADCHECK_KEYS = {"layer", "m", "d", "seed", "corrupt"}
_GRADCHECK_LAYERS = ("bn", "ln", "bln", "network")


def _validate_gradcheck(raw):
    if not isinstance(raw, dict):
        raise UsageError("config must be a JSON object")
    for key in raw:
        if key not in _GRADCHECK_KEYS:
            raise UsageError(f"unknown config key: '{key}'")
    for key in ("layer", "m", "d", "seed"):
        if key not in raw:
            raise UsageError(f"missing config key: '{key}'")
    layer = raw["layer"]
    if layer not in _GRADCHECK_LAYERS:
        raise UsageError(f"config key 'layer' must be one of {list(_GRADCHECK_LAYERS)}, got {layer!r}")
    m, d = raw["m"], raw["d"]
    for key, value in (("m", m), ("d", d)):
        if not isinstance(value, int) or isinstance(value, bool) or value < 1:
            raise UsageError(f"config key '{key}' must be an integer >= 1, got {value!r}")
    seed = raw["seed"]
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise UsageError(f"config key 'seed' must be an integer, got {seed!r}")
    corrupt = raw.get("corrupt", False)
    if not isinstance(corrupt, bool):
        raise UsageError(f"config key 'corrupt' must be a boolean, got {corrupt!r}")
    return layer, m, d, seed, corrupt


def _norm_layer_loss(kind, x, params, dy):
    if kind == "bn":
        y, _, _ = bn_forward_train(x, params, init_running(x.shape[1]))
    elif kind == "ln":
        y, _ = ln_forward(x, params)
    else:
        y, _, _ = bln_forward_train(x, params, init_running(x.shape[1]))
    return sum(u * v for u, v in zip(y.data, dy.data))


def _max_rel_error(analytic, numeric):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        err = abs(a - n) / max(abs(a), abs(n), 1e-6)
        if err > worst:
            worst = err
    return worst


def _perturbed(values, index, delta):
    out = list(values)
    out[index] += delta
    return out


def norm_gradient_errors(kind, m, d, seed, corrupt=False, step=GRADCHECK_STEP):
    """Max relative error of each analytic gradient group vs central differences."""
    rng = Rng(seed)
    x = randn([m, d], rng)
    dy = randn([m, d], rng)
    params = init_params(d)
    params.gamma = randn([d], rng) * 0.5 + 1.0
    params.beta = randn([d], rng) * 0.5

    if kind == "bn":
        _, cache, _ = bn_forward_train(x, params, init_running(d))
        dx, dgamma, dbeta = bn_backward(cache, dy)
    elif kind == "ln":
        _, cache = ln_forward(x, params)
        dx, dgamma, dbeta = ln_backward(cache, dy)
    else:
        _, cache, _ = bln_forward_train(x, params, init_running(d))
        dx, dgamma, dbeta = bln_backward(cache, dy)

    analytic_dx = list(dx.data)
    if corrupt:
        analytic_dx[0] += 1e-2

    numeric_dx = []
    for i in range(m * d):
        plus = _norm_layer_loss(kind, Tensor._wrap((m, d), _perturbed(x.data, i, step)), params, dy)
        minus = _norm_layer_loss(kind, Tensor._wrap((m, d), _perturbed(x.data, i, -step)), params, dy)
        numeric_dx.append((plus - minus) / (2.0 * step))

    def param_loss(name, values):
        trial = init_params(d, params.epsilon, params.momentum)
        trial.gamma = Tensor._wrap((d,), values) if name == "gamma" else params.gamma
        trial.beta = Tensor._wrap((d,), values) if name == "beta" else params.beta
        return _norm_layer_loss(kind, x, trial, dy)

    numeric_dgamma = []
    numeric_dbeta = []
    for k in range(d):
        plus = param_loss("gamma", _perturbed(params.gamma.data, k, step))
        minus = param_loss("gamma", _perturbed(params.gamma.data, k, -step))
        numeric_dgamma.append((plus - minus) / (2.0 * step))
        plus = param_loss("beta", _perturbed(params.beta.data, k, step))
        minus = param_loss("beta", _perturbed(params.beta.data, k, -step))
        numeric_dbeta.append((plus - minus) / (2.0 * step))

    return {
        "dx": _max_rel_error(analytic_dx, numeric_dx),
        "dgamma": _max_rel_error(dgamma.data, numeric_dgamma),
        "dbeta": _max_rel_error(dbeta.data, numeric_dbeta),
    }


def network_gradient_errors(normalizer, m, d, seed, corrupt=False, step=GRADCHECK_STEP):
    """Max relative error per parameter of a two-layer dense network's gradients."""
    rng = Rng(seed)
    net = build_dense_net(d, 5, 3, normalizer, rng)
    x = randn([m, d], rng)
    labels = [rng.randint(3) for _ in range(m)]

    _, _, caches, dlogits = net.loss(x, labels, train=True, update_stats=False)
    grads = net.backward(caches, dlogits)

    errors = {}
    for key, p in net.params().items():
        analytic = list(grads[key].data)
        if corrupt:
            analytic[0] += 1e-2
        numeric = []
        for i in range(p.size):
            net.set_param(key, Tensor._wrap(p.shape, _perturbed(p.data, i, step)))
            plus, _, _, _ = net.loss(x, labels, train=True, update_stats=False)
            net.set_param(key, Tensor._wrap(p.shape, _perturbed(p.data, i, -step)))
            minus, _, _, _ = net.loss(x, labels, train=True, update_stats=False)
            numeric.append((plus - minus) / (2.0 * step))
        net.set_param(key, p)
        errors[key] = _max_rel_error(analytic, numeric)
    return errors


def cmd_gradcheck(args):
    layer, m, d, seed, corrupt = _validate_gradcheck(load_config_file(args.config))
    if layer == "network":
        failed = False
        for scheme in ("bn", "ln", "bln"):
            errors = network_gradient_errors(scheme, m, d, seed, corrupt)
            worst = max(errors.values())
            status = "PASS" if worst < GRADCHECK_TOLERANCE else "FAIL"
            failed = failed or worst >= GRADCHECK_TOLERANCE
            print(f"network[{scheme}] m={m} d={d} max_rel_err={worst:.3e} {status}")
        return 3 if failed else 0
    errors = norm_gradient_errors(layer, m, d, seed, corrupt)
    failed = False
    for group, err in errors.items():
        status = "PASS" if err < GRADCHECK_TOLERANCE else "FAIL"
        failed = failed or err >= GRADCHECK_TOLERANCE
        print(f"{layer} m={m} d={d} {group} max_rel_err={err:.3e} {status}")
    return 3 if failed else 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    parser = _Parser(prog="normlab", description="Normalization-layer laboratory")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train one network and write metrics plus a checkpoint")
    train.add_argument("--config", required=True, help="experiment config JSON")
    train.add_argument("--out", required=True, help="metrics CSV output path")
    train.add_argument("--checkpoint", required=True, help="checkpoint output path")
    train.add_argument("--force", action="store_true", help="overwrite an existing checkpoint")
    train.set_defaults(func=cmd_train)

    compare = sub.add_parser("compare", help="train several normalizer variants with shared settings")
    compare.add_argument("--config", required=True)
    compare.add_argument("--out", required=True)
    compare.add_argument("--threads", type=int, default=1)
    compare.set_defaults(func=cmd_compare)

    grid = sub.add_parser("gridsearch", help="rank all 16 inference-statistics configurations")
    grid.add_argument("--config", required=True)
    grid.add_argument("--checkpoint", required=True, help="trained BLN checkpoint")
    grid.add_argument("--out", required=True)
    grid.add_argument("--search-on-test", action="store_true",
                      help="rank on the test split instead of the held-out validation slice")
    grid.add_argument("--threads", type=int, default=1)
    grid.set_defaults(func=cmd_gridsearch)

    check = sub.add_parser("gradcheck", help="verify analytic gradients against finite differences")
    check.add_argument("--config", required=True)
    check.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DataFormatError, UninitializedStatsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entrypoint():
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
