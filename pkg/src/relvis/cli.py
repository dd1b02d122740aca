"""Command-line entry point: ``relvis {fit,synth,eval,plot}``.

Exit codes: 0 success, 1 configuration error, 2 data error,
3 optimization aborted on a non-finite cost.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile

import numpy as np

from . import data
from .data import DataError
from .evaluation import loo_knn_accuracy
from .model import PRIMARY, USER, ModelConfig, shared_coordinates, view_specific_coordinates
from .optim import OptimConfig, OptimizationError, fit
from .plot import scatter_svg

EXIT_CONFIG, EXIT_DATA, EXIT_OPTIM = 1, 2, 3


class ConfigError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def _sigma(value):
    return value if value == "median" else float(value)


def _user_pairs(value):
    if value not in ("all", "listed"):
        raise ValueError("user_pairs must be 'all' or 'listed'")
    return value


# key -> (type, default); None default means required
FIT_KEYS = {
    "features": (str, None),
    "labels": (str, ""),
    "counts": (str, ""),
    "output": (str, None),
    "user_pairs": (_user_pairs, "all"),
    "K": (int, 6),
    "view_balance": (float, 1.0),
    "sparsity_coeff": (float, 0.0),
    "max_iters": (int, 2000),
    "step_size": (float, 0.05),
    "moment_decay_1": (float, 0.9),
    "moment_decay_2": (float, 0.999),
    "grad_tol": (float, 1e-5),
    "init_scale": (float, 1e-2),
    "seed": (int, 0),
    "sigma": (_sigma, "median"),
    "restarts": (int, 1),
}

SYNTH_KEYS = {
    "output": (str, None),
    "n_items": (int, 200),
    "n_relevant_classes": (int, 4),
    "n_irrelevant_classes": (int, 4),
    "feature_dim": (int, 10),
    "cluster_separation": (float, 6.0),
    "noise_rate": (float, 0.1),
    "seed": (int, 0),
}


def read_config(path):
    """Flat ``key = value`` file; ``#`` starts a comment."""
    values = {}
    try:
        with open(path, encoding="utf-8") as fh:
            for n, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}, line {n}: expected 'key = value'")
                key, value = (s.strip() for s in line.split("=", 1))
                values[key] = value
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    return values


def resolve(keys, file_values, flag_values, base_dir=None):
    """Merge defaults < config file < command-line flags, converting types."""
    unknown = set(file_values) - set(keys)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    out = {}
    for key, (conv, default) in keys.items():
        raw = flag_values.get(key)
        from_file = raw is None and key in file_values
        if raw is None:
            raw = file_values.get(key, default)
        if raw is None:
            raise ConfigError(f"missing required setting {key!r}")
        try:
            out[key] = conv(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key!r}: {raw!r} ({exc})") from None
        # relative paths in a config file resolve against the file's directory
        if from_file and conv is str and out[key] and base_dir and not os.path.isabs(out[key]):
            out[key] = os.path.join(base_dir, out[key])
    return out


def _add_key_flags(parser, keys, skip=()):
    for key, (conv, _) in keys.items():
        if key in skip:
            continue
        parser.add_argument(f"--{key.replace('_', '-')}", dest=key, default=None,
                            type=str, help=f"override config key {key}")


def build_parser():
    parser = _Parser(prog="relvis", description=(
        "Two-view latent factorization for visualizations driven by user feedback."))
    parser.add_argument("--seed", type=str, default=None, help="random seed")
    parser.add_argument("--threads", type=int, default=None,
                        help="cap BLAS/OpenMP threads")
    parser.add_argument("--config", default=None, help="flat key=value config file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit the model and write coordinates")
    _add_key_flags(p, FIT_KEYS, skip=("seed",))

    p = sub.add_parser("synth", help="write a synthetic two-view dataset")
    _add_key_flags(p, SYNTH_KEYS, skip=("seed",))

    p = sub.add_parser("eval", help="leave-one-out k-NN accuracy of coordinates")
    p.add_argument("coords")
    p.add_argument("labels")
    p.add_argument("--k", type=int, default=5)

    p = sub.add_parser("plot", help="SVG scatterplot of coordinates")
    p.add_argument("coords")
    p.add_argument("labels")
    p.add_argument("output")
    return parser


# -- output helpers -------------------------------------------------------

def _commit(outdir, files):
    """Write ``{name: text}`` to a temp dir, then move everything into place."""
    os.makedirs(outdir, exist_ok=True)
    tmp = tempfile.mkdtemp(prefix=".relvis-", dir=outdir)
    try:
        for name, text in files.items():
            with open(os.path.join(tmp, name), "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        for name in files:
            os.replace(os.path.join(tmp, name), os.path.join(outdir, name))
    finally:
        for name in os.listdir(tmp):
            os.remove(os.path.join(tmp, name))
        os.rmdir(tmp)


def coords_csv(ids, coords):
    lines = ["id,x,y"]
    lines += [f"{i},{float(x)!r},{float(y)!r}" for i, (x, y) in zip(ids, coords)]
    return "\n".join(lines) + "\n"


def load_coords(path):
    ids, rows = [], []
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = [h.strip() for h in next(reader, [])]
            if header != ["id", "x", "y"]:
                raise DataError(f"{path}, line 1: expected header 'id,x,y'")
            for row in reader:
                if not row:
                    continue
                if len(row) != 3:
                    raise DataError(f"{path}, line {reader.line_num}: expected 'id,x,y'")
                try:
                    rows.append((float(row[1]), float(row[2])))
                except ValueError:
                    raise DataError(f"{path}, line {reader.line_num}: "
                                    "coordinates must be numbers") from None
                ids.append(row[0].strip())
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror or exc}") from exc
    if not rows:
        raise DataError(f"{path}: no coordinates")
    if len(set(ids)) != len(ids):
        raise DataError(f"{path}: duplicate item ids")
    return ids, np.array(rows)


# -- commands -------------------------------------------------------------

def _check_paths(cfg):
    if not cfg["labels"] and not cfg["counts"]:
        raise ConfigError("user view needs 'labels' or 'counts'")
    for key in ("features", "labels", "counts"):
        if cfg[key] and not os.path.isfile(cfg[key]):
            raise ConfigError(f"{key} file not found: {cfg[key]}")
    if cfg["restarts"] < 1:
        raise ConfigError("restarts must be at least 1")


def cmd_fit(cfg):
    _check_paths(cfg)
    try:
        model_cfg = ModelConfig(cfg["K"], cfg["view_balance"], cfg["sparsity_coeff"])
        optims = [OptimConfig(cfg["max_iters"], cfg["step_size"], cfg["moment_decay_1"],
                              cfg["moment_decay_2"], cfg["grad_tol"], cfg["seed"] + r,
                              cfg["init_scale"]) for r in range(cfg["restarts"])]
        if cfg["sigma"] != "median" and not cfg["sigma"] > 0:
            raise ValueError("sigma must be positive or 'median'")
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    features = data.load_features(cfg["features"])
    sigma = data.median_sigma(features) if cfg["sigma"] == "median" else cfg["sigma"]
    d = data.gaussian_similarity(features, sigma)
    if cfg["counts"]:
        f = data.load_counts(cfg["counts"], features.ids)
        if cfg["user_pairs"] == "all":
            f = f.with_all_pairs()
    else:
        f = data.labels_to_counts(data.load_labels(cfg["labels"], features.ids, min_labels=1),
                                  features.n_items)
        if f.total == 0:
            raise DataError(f"{cfg['labels']}: no two items share a label")

    runs = [fit(d, f, model_cfg, opt) for opt in optims]
    costs = [rep.final_cost for _, rep in runs]
    best = int(np.argmin(costs))
    state, rep = runs[best]

    ids = features.ids
    files = {"coords_shared.csv": coords_csv(ids, shared_coordinates(state))}
    if state.K >= 4:
        files["coords_view_D.csv"] = coords_csv(ids, view_specific_coordinates(state, PRIMARY))
        files["coords_view_F.csv"] = coords_csv(ids, view_specific_coordinates(state, USER))
    files["weights.csv"] = "k,wD,wF\n" + "".join(
        f"{k},{float(a)!r},{float(b)!r}\n" for k, (a, b) in enumerate(zip(state.wD, state.wF)))
    summary = {
        "sigma": sigma,
        "restarts": len(runs),
        "seeds": [o.seed for o in optims],
        "final_costs": costs,
        "best_restart": best,
        "report": rep.to_dict(),
        "config": {k: v for k, v in cfg.items()},
    }
    files["fit_report.json"] = json.dumps(summary, indent=2) + "\n"
    _commit(cfg["output"], files)
    return 0


def cmd_synth(cfg):
    try:
        spec = data.SyntheticSpec(**{k: cfg[k] for k in SYNTH_KEYS if k != "output"})
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    features, user, relevant, irrelevant = data.synth_generate(spec)
    writers = {
        "features.csv": lambda fh: data.write_features(fh, features),
        "labels_relevant.csv": lambda fh: data.write_labels(fh, relevant, features.ids),
        "labels_irrelevant.csv": lambda fh: data.write_labels(fh, irrelevant, features.ids),
        "user_counts.csv": lambda fh: data.write_counts(fh, user, features.ids),
    }
    files = {}
    for name, write in writers.items():
        buf = io.StringIO()
        write(buf)
        files[name] = buf.getvalue()
    _commit(cfg["output"], files)
    return 0


def _labels_for(path, ids, allow_empty=False):
    if allow_empty and os.path.isfile(path) and os.path.getsize(path) == 0:
        return data.LabelSet({})
    return data.load_labels(path, ids, min_labels=0 if allow_empty else 1)


def cmd_eval(args):
    ids, coords = load_coords(args.coords)
    labels = _labels_for(args.labels, ids)
    try:
        report = loo_knn_accuracy(coords, labels, args.k)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    print(json.dumps(report.to_dict(), indent=2))
    return 0


def cmd_plot(args):
    ids, coords = load_coords(args.coords)
    labels = _labels_for(args.labels, ids, allow_empty=True)
    svg = scatter_svg(coords, labels)
    out = os.path.abspath(args.output)
    try:
        fd, tmp = tempfile.mkstemp(prefix=".relvis-", suffix=".svg", dir=os.path.dirname(out))
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(svg)
        os.replace(tmp, out)
    except OSError as exc:
        raise DataError(f"cannot write {args.output}: {exc.strerror or exc}") from exc
    return 0


def _run(args):
    file_values = read_config(args.config) if args.config else {}
    base = os.path.dirname(os.path.abspath(args.config)) if args.config else None
    flags = {k: v for k, v in vars(args).items() if v is not None}
    if args.command == "fit":
        return cmd_fit(resolve(FIT_KEYS, file_values, flags, base))
    if args.command == "synth":
        return cmd_synth(resolve(SYNTH_KEYS, file_values, flags, base))
    if args.command == "eval":
        return cmd_eval(args)
    return cmd_plot(args)


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.threads is not None:
            from threadpoolctl import threadpool_limits
            with threadpool_limits(limits=max(1, args.threads)):
                return _run(args)
        return _run(args)
    except ConfigError as exc:
        print(f"relvis: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"relvis: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OptimizationError as exc:
        print(f"relvis: optimization aborted: {exc}", file=sys.stderr)
        return EXIT_OPTIM
    except ValueError as exc:
        # invariant violations raised while building views from loaded files
        print(f"relvis: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
