"""Command-line pipelines: generate, train, eval, gradcheck.

Every subcommand takes long-form flags, optionally seeded from a JSON config
file (--config); explicit flags override config values, and unknown config
keys are rejected before any work happens. Exit codes: 0 success, 1 usage,
2 numeric failure, 3 I/O.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import datagen, fileio, gradcheck
from .blocks import BlockModel, MimoTransferFunction, ModelFile, Normalization, build_pwh, build_wh
from .metrics import fit_index, rmse
from .optim import TrainConfig, TrainingDivergedError, train
from .pem import PemModel, bode_magnitude_table, estimated_noise_filter
from .quantized import Quantizer, quantized_loglik_node
from .tape import Parameter, Tape


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# name -> (type, default); None default means "required unless in config"
_GENERATE_KEYS = {
    "kind": (str, None),
    "T": (int, None),
    "seed": (int, 0),
    "out": (str, None),
    "test_T": (int, 0),
    "rms_levels": (str, ""),
    "realizations": (int, 4),
    "sigma_e": (float, 0.03),
    "band": (float, 0.3),
}

_TRAIN_KEYS = {
    "data": (str, None),
    "arch": (str, "wh"),
    "loss": (str, "pem"),
    "lr": (float, 1e-3),
    "iterations": (int, 1000),
    "seed": (int, 0),
    "normalize": (int, 1),
    "out": (str, None),
    "n_b": (int, 0),
    "n_a": (int, 0),
    "n_k": (int, -1),
    "hidden": (int, 10),
    "fir_taps": (int, 20),
    "noise_n_b": (int, 2),
    "noise_n_a": (int, 2),
    "quantizer": (str, ""),
    "init_sigma": (float, 0.1),
    "test_data": (str, ""),
    "plateau_patience": (int, 0),
    "plateau_rtol": (float, 1e-5),
    "log_every": (int, 0),
    "batch_size": (int, 0),
}

_EVAL_KEYS = {
    "model": (str, None),
    "data": (str, None),
    "report": (str, ""),
    "bode": (str, ""),
    "truth": (str, ""),
}

_GRADCHECK_KEYS = {
    "seed": (int, 0),
    "corrupt": (int, 0),
}


def _add_config_args(parser, keys):
    parser.add_argument("--config", default=None, help="JSON config file")
    for name, (typ, _default) in keys.items():
        parser.add_argument(f"--{name.replace('_', '-')}", type=typ, default=None)


def _resolve_config(args, keys):
    """Merge defaults, config file and explicit flags; reject unknown keys."""
    values = {name: default for name, (_t, default) in keys.items()}
    if args.config:
        try:
            with open(args.config) as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise UsageError(f"bad config file: {exc}")
        unknown = set(doc) - set(keys)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        for name, value in doc.items():
            values[name] = keys[name][0](value)
    for name in keys:
        flag = getattr(args, name)
        if flag is not None:
            values[name] = flag
    missing = [name for name, v in values.items() if v is None]
    if missing:
        raise UsageError(f"missing required settings: {missing}")
    return values


# ---------------------------------------------------------------- generate


def cmd_generate(cfg):
    kind = cfg["kind"]
    out = fileio.ensure_dir(cfg["out"])
    if kind == "wh-colored":
        ds = datagen.generate_wh_colored(cfg["seed"], cfg["T"], cfg["test_T"] or None)
        fileio.write_dataset(os.path.join(out, "train.csv"), ds.u_train, y=ds.y_train)
        fileio.write_dataset(os.path.join(out, "test.csv"), ds.u_test, y=ds.y_test)
        ds.truth.save(os.path.join(out, "truth.json"))
        fileio.write_json(os.path.join(out, "meta.json"), ds.truth.meta)
        print(f"wrote {out}/train.csv ({ds.u_train.size} rows), test.csv "
              f"({ds.u_test.size} rows), truth.json, meta.json")
        print(f"train y std {ds.y_train.std():.4f}, clean y std "
              f"{ds.y_clean_train.std():.4f}, noise std "
              f"{(ds.y_train - ds.y_clean_train).std():.4f}")
    elif kind == "pwh-quantized":
        levels = (
            tuple(float(x) for x in cfg["rms_levels"].split(","))
            if cfg["rms_levels"]
            else datagen.PWH_RMS_LEVELS
        )
        ds = datagen.generate_pwh_quantized(
            cfg["seed"],
            cfg["T"],
            rms_levels=levels,
            realizations=cfg["realizations"],
            band=cfg["band"],
            sigma_e=cfg["sigma_e"],
        )
        fileio.write_dataset(os.path.join(out, "train.csv"), ds.u, z=ds.z)
        fileio.write_dataset(os.path.join(out, "test.csv"), ds.u_test, y=ds.y_test)
        ds.truth.save(os.path.join(out, "truth.json"))
        fileio.write_json(os.path.join(out, "meta.json"), ds.truth.meta)
        counts = np.bincount(ds.z.ravel(), minlength=ds.quantizer.n_bins)
        print(f"wrote {out}/train.csv ({ds.u.shape[0]} sequences x {ds.u.shape[1]} "
              f"samples), test.csv, truth.json, meta.json")
        print(f"bin occupancy: {counts.tolist()}")
    else:
        raise UsageError(f"unknown dataset kind: {kind}")
    return 0


# ------------------------------------------------------------------- train


def _build_model(cfg, in_channels, rng):
    arch = cfg["arch"]
    n_b, n_a, hidden = cfg["n_b"], cfg["n_a"], cfg["hidden"]
    if arch == "wh":
        return build_wh(n_b or 8, n_a or 8, hidden, rng)
    if arch == "pwh":
        return build_pwh(n_b or 12, n_a or 12, hidden, rng)
    if arch == "fir":
        taps = cfg["fir_taps"]
        n_k = cfg["n_k"] if cfg["n_k"] >= 0 else 0
        return BlockModel(
            [MimoTransferFunction(1, in_channels, taps - 1, 0, n_k, rng=rng)]
        )
    raise UsageError(f"unknown architecture: {arch}")


def cmd_train(cfg):
    u, out_col, kind = fileio.read_dataset(cfg["data"])
    loss_kind = cfg["loss"]
    if loss_kind not in ("pem", "quantized", "mse"):
        raise UsageError(f"unknown loss kind: {loss_kind}")
    if loss_kind == "quantized" and kind != "z":
        raise UsageError("quantized loss needs a dataset with a z column")
    if loss_kind != "quantized" and kind != "y":
        raise UsageError(f"{loss_kind} loss needs a dataset with a y column")

    rng = np.random.default_rng(cfg["seed"])
    u3 = u[:, :, np.newaxis]
    model = _build_model(cfg, 1, rng)

    if loss_kind == "quantized":
        norm = (
            Normalization.from_data(u3, None)
            if cfg["normalize"]
            else Normalization.identity()
        )
    else:
        y3 = out_col[:, :, np.newaxis]
        norm = (
            Normalization.from_data(u3, y3)
            if cfg["normalize"]
            else Normalization.identity()
        )
    u_n = norm.normalize_u(u3)

    params = []
    pm = None
    log_sigma = None
    qz = None
    if loss_kind == "pem":
        pm = PemModel(model, cfg["noise_n_b"], cfg["noise_n_a"])
        named = pm.parameters()
        y_n = norm.normalize_y(y3)
    elif loss_kind == "mse":
        named = model.parameters()
        y_n = norm.normalize_y(y3)
    else:
        if not cfg["quantizer"]:
            raise UsageError("quantized loss needs --quantizer (JSON with thresholds)")
        qdoc = fileio.read_json(cfg["quantizer"])
        if "thresholds" not in qdoc:
            raise UsageError("quantizer JSON must contain a thresholds array")
        qz = Quantizer(np.asarray(qdoc["thresholds"], dtype=float))
        z = out_col
        log_sigma = Parameter(np.log(cfg["init_sigma"]), "noise.log_sigma_e")
        named = model.parameters() + [("noise.log_sigma_e", log_sigma)]
    params = [p for _, p in named]

    # minibatching (off by default) samples whole sequences per iteration;
    # splitting one sequence would violate the rest-initialization convention
    batch_size = cfg["batch_size"]
    n_seq = u_n.shape[0]
    if batch_size:
        if batch_size >= n_seq:
            raise UsageError("batch_size must be smaller than the sequence count")
        batch_rng = np.random.default_rng(cfg["seed"] + 1)

    def pick_rows():
        if not batch_size:
            return slice(None)
        return np.sort(batch_rng.choice(n_seq, size=batch_size, replace=False))

    def build_loss():
        rows = pick_rows()
        u_b = u_n[rows]
        tape = Tape()
        if loss_kind == "pem":
            return tape, pm.pem_loss_node(tape, u_b, y_n[rows])
        out_node = model.apply(tape, tape.constant(u_b))
        if loss_kind == "mse":
            err = tape.sub(tape.constant(y_n[rows]), out_node)
            return tape, tape.mean(tape.square(err))
        ll = quantized_loglik_node(tape, out_node, z[rows], log_sigma, qz)
        return tape, tape.scale(ll, -1.0 / (u_b.shape[0] * u_b.shape[1]))

    tc = TrainConfig(
        iterations=cfg["iterations"],
        lr=cfg["lr"],
        plateau_patience=cfg["plateau_patience"],
        plateau_rtol=cfg["plateau_rtol"],
        log_every=cfg["log_every"],
    )
    t_start = time.perf_counter()
    result = train(params, build_loss, tc)
    wall = time.perf_counter() - t_start

    out = fileio.ensure_dir(cfg["out"])
    noise_filter = pm.h_check() if pm is not None else None
    model_file = ModelFile(
        model,
        normalization=norm,
        noise_filter=noise_filter,
        log_sigma_e=float(log_sigma.value) if log_sigma is not None else None,
        meta={
            "loss": loss_kind,
            "arch": cfg["arch"],
            "seed": cfg["seed"],
            "lr": cfg["lr"],
            "iterations_run": int(result.iterations_run),
        },
    )
    model_path = os.path.join(out, "model.json")
    model_file.save(model_path)

    fileio.write_csv(
        os.path.join(out, "trace.csv"),
        ["iteration", "loss", "wall_time_s"],
        [
            np.arange(result.loss_trace.size),
            result.loss_trace,
            result.wall_times,
        ],
    )

    report = {
        "version": 1,
        "loss": loss_kind,
        "arch": cfg["arch"],
        "seed": cfg["seed"],
        "lr": cfg["lr"],
        "lr_final": result.lr_final,
        "iterations": int(result.iterations_run),
        "stopped_on_plateau": bool(result.stopped_on_plateau),
        "final_loss": float(result.loss_trace[-1]) if result.loss_trace.size else None,
        "best_loss": result.best_loss,
        "divergence_restores": int(result.divergence_restores),
        "wall_time_s": wall,
    }
    if kind == "y":
        y_sim = model_file.simulate(u3)
        report["train_fit_percent"] = fit_index(out_col, y_sim[:, :, 0])
        report["train_rmse"] = rmse(out_col, y_sim[:, :, 0])
    if log_sigma is not None:
        report["sigma_e"] = float(np.exp(log_sigma.value))
    if cfg["test_data"]:
        u_t, y_t, kind_t = fileio.read_dataset(cfg["test_data"])
        if kind_t != "y":
            raise UsageError("test data must contain a y column")
        y_sim = model_file.simulate(u_t[:, :, np.newaxis])
        report["test_fit_percent"] = fit_index(y_t, y_sim[:, :, 0])
        report["test_rmse"] = rmse(y_t, y_sim[:, :, 0])
    fileio.write_json(os.path.join(out, "report.json"), report)

    print(f"trained {cfg['arch']} with {loss_kind} loss: "
          f"{result.iterations_run} iterations, best loss {result.best_loss:.6g}, "
          f"wall {wall:.1f}s")
    for key in ("train_fit_percent", "test_fit_percent", "sigma_e"):
        if key in report:
            print(f"{key}: {report[key]:.4g}")
    print(f"wrote {model_path}, trace.csv, report.json")
    return 0


# -------------------------------------------------------------------- eval


def cmd_eval(cfg):
    model_file = ModelFile.load(cfg["model"])
    u, y, kind = fileio.read_dataset(cfg["data"])
    if kind != "y":
        raise UsageError("eval needs a dataset with a real-valued y column")
    y_sim = model_file.simulate(u[:, :, np.newaxis])[:, :, 0]
    fit = fit_index(y, y_sim)
    err = rmse(y, y_sim)
    print(f"fit: {fit:.4f} %")
    print(f"rmse: {err:.6g}")
    report = {"version": 1, "fit_percent": fit, "rmse": err}
    if cfg["report"]:
        fileio.write_json(cfg["report"], report)
    if cfg["bode"]:
        if model_file.noise_filter is None:
            raise UsageError("model has no noise filter to export")
        pm = PemModel(
            model_file.model,
            noise_b=model_file.noise_filter.b,
            noise_a=model_file.noise_filter.a,
        )
        h_est = estimated_noise_filter(pm)
        true_h = None
        if cfg["truth"]:
            truth = ModelFile.load(cfg["truth"])
            true_h = truth.noise_filter
        freqs = np.geomspace(1e-3, 0.49, 300)
        header, table = bode_magnitude_table(h_est, freqs, true_h)
        fileio.write_csv(cfg["bode"], header, [table[:, k] for k in range(table.shape[1])])
        print(f"wrote {cfg['bode']}")
    return 0


# --------------------------------------------------------------- gradcheck


def cmd_gradcheck(cfg):
    rows = gradcheck.run_all(seed=cfg["seed"], corrupt=bool(cfg["corrupt"]))
    width = max(len(r.name) for r in rows)
    failed = 0
    for r in rows:
        status = "PASS" if r.passed else "FAIL"
        print(f"{r.name:<{width}}  max_rel_err={r.max_rel_err:.3e}  "
              f"tol={r.tol:.0e}  {status}")
        failed += 0 if r.passed else 1
    if failed:
        print(f"{failed} gradient check(s) failed")
        return 2
    print("all gradient checks passed")
    return 0


# -------------------------------------------------------------------- main


def build_parser():
    parser = _Parser(prog="difftf", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, keys in (
        ("generate", _GENERATE_KEYS),
        ("train", _TRAIN_KEYS),
        ("eval", _EVAL_KEYS),
        ("gradcheck", _GRADCHECK_KEYS),
    ):
        p = sub.add_parser(name)
        _add_config_args(p, keys)
    return parser


_DISPATCH = {
    "generate": (cmd_generate, _GENERATE_KEYS),
    "train": (cmd_train, _TRAIN_KEYS),
    "eval": (cmd_eval, _EVAL_KEYS),
    "gradcheck": (cmd_gradcheck, _GRADCHECK_KEYS),
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        handler, keys = _DISPATCH[args.command]
        cfg = _resolve_config(args, keys)
        return handler(cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except TrainingDivergedError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
