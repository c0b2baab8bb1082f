"""
Command-line driver: ``osiris {gen,train,eval,flops,bench,ru,du}``.

Settings resolve in three layers: preset defaults, then an optional
``--config`` file of ``key=value`` lines, then explicit flags. Every command
that writes output also writes the resolved settings next to it.

Exit codes: 0 success, 2 usage or configuration error, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import signal
import sys
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError, InvalidParameter, StratificationError
from .wavegen.interferers import CLASS_NAMES, InterferenceClass

log = logging.getLogger("osiris")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(ValueError):
    pass


# ------------------------------------------------------------------ settings

def _floats(text: str) -> tuple:
    try:
        return tuple(float(v) for v in str(text).split(",") if v.strip())
    except ValueError as exc:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from exc


def _classes(text: str) -> tuple:
    out = []
    for tok in str(text).split(","):
        tok = tok.strip()
        if not tok:
            continue
        if tok.isdigit():
            out.append(InterferenceClass(int(tok)))
        elif tok in CLASS_NAMES:
            out.append(InterferenceClass(CLASS_NAMES.index(tok)))
        else:
            raise UsageError(f"unknown class {tok!r}; choose from {', '.join(CLASS_NAMES)}")
    return tuple(out)


def _opt_str(text):
    return None if text in (None, "", "none", "None") else str(text)


def _opt_int(text):
    return None if text in (None, "", "none", "None") else int(text)


def _endpoint(text: str) -> tuple[str, int]:
    host, sep, port = str(text).rpartition(":")
    if not sep or not port.isdigit():
        raise UsageError(f"expected host:port, got {text!r}")
    return host or "127.0.0.1", int(port)


@dataclass(frozen=True)
class Setting:
    parse: object
    help: str


SETTINGS = {
    "preset": Setting(_opt_str, "desk or full"),
    "seed": Setting(int, "base seed"),
    "out": Setting(_opt_str, "output dataset path"),
    "per_cell": Setting(int, "records per (class, SNR, SIR) cell"),
    "snr_list": Setting(_floats, "comma-separated SNR levels in dB"),
    "sir_list": Setting(_floats, "comma-separated SIR levels in dB"),
    "classes": Setting(_classes, "comma-separated class names or codes"),
    "workers": Setting(_opt_int, "generation processes (OSIRIS_THREADS also caps this)"),
    "dataset": Setting(_opt_str, "OSDS dataset path"),
    "strategy": Setting(_opt_str, "rand or pre"),
    "instances": Setting(int, "seeded instances per stage"),
    "out_dir": Setting(_opt_str, "output directory"),
    "batch_size": Setting(int, "mini-batch size"),
    "max_epochs": Setting(int, "epoch cap for full-model training"),
    "pretrain_epochs": Setting(_opt_int, "epoch cap for single-domain pretraining"),
    "split_seed": Setting(int, "seed of the stratified split"),
    "model": Setting(_opt_str, "fused checkpoint path"),
    "report": Setting(_opt_str, "JSON report path"),
    "csv_dir": Setting(_opt_str, "directory for CSV tables"),
    "split": Setting(_opt_str, "evaluation subset: test, val, train or all"),
    "iters": Setting(int, "benchmark iterations including warm-up"),
    "warmup": Setting(int, "warm-up iterations"),
    "mode": Setting(_opt_str, "monolithic or split-loopback"),
    "samples": Setting(int, "dataset records used as inputs"),
    "listen": Setting(_opt_str, "host:port to listen on"),
    "ru": Setting(_opt_str, "RU host:port"),
    "sink": Setting(_opt_str, "JSON-lines report sink"),
    "count": Setting(int, "records to classify (0 = all)"),
    "retries": Setting(int, "RU connection attempts"),
}

_ALL_SNR = (-12.0, -8.0, -4.0, 0.0, 4.0, 8.0, 12.0, 16.0, 20.0)
_ALL_SIR = (-10.0, -5.0, 0.0, 5.0, 10.0)
_ALL_CLASSES = tuple(InterferenceClass)

BASE = {
    "preset": "desk", "seed": 0, "out": None, "workers": None, "dataset": None,
    "strategy": "pre", "out_dir": None, "split_seed": 0, "model": None, "report": None,
    "csv_dir": None, "split": "test", "iters": 1000, "warmup": 50, "mode": "monolithic",
    "samples": 64, "listen": "127.0.0.1:5400", "ru": "127.0.0.1:5400", "sink": "du_reports.jsonl",
    "count": 0, "retries": 5, "sir_list": _ALL_SIR, "classes": _ALL_CLASSES,
}

PRESETS = {
    "desk": {"per_cell": 64, "snr_list": (-4.0, 4.0, 12.0), "instances": 4, "batch_size": 32,
             "max_epochs": 25, "pretrain_epochs": 15},
    "full": {"per_cell": 1024, "snr_list": _ALL_SNR, "instances": 8, "batch_size": 256,
             "max_epochs": 64, "pretrain_epochs": None},
}

COMMAND_KEYS = {
    "gen": ("preset", "out", "per_cell", "snr_list", "sir_list", "classes", "seed", "workers"),
    "train": ("preset", "dataset", "strategy", "instances", "out_dir", "batch_size", "max_epochs",
              "pretrain_epochs", "seed", "split_seed"),
    "eval": ("dataset", "model", "report", "csv_dir", "split", "split_seed"),
    "flops": ("preset",),
    "bench": ("model", "dataset", "iters", "warmup", "mode", "samples", "report"),
    "ru": ("model", "listen"),
    "du": ("model", "ru", "sink", "dataset", "count", "retries", "listen"),
}


def read_config_file(path) -> dict:
    """Parse ``key=value`` lines; ``#`` starts a comment. Unknown keys are rejected."""
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep:
            raise UsageError(f"{path}:{n}: expected key=value")
        if key not in SETTINGS:
            raise UsageError(f"{path}:{n}: unknown key {key!r}")
        out[key] = SETTINGS[key].parse(value.strip())
    return out


def resolve(command: str, args: argparse.Namespace) -> dict:
    file_cfg = read_config_file(args.config) if args.config else {}
    flags = {k: v for k, v in vars(args).items() if k in SETTINGS and v is not None}
    preset = flags.get("preset", file_cfg.get("preset", BASE["preset"]))
    if preset not in PRESETS:
        raise UsageError(f"unknown preset {preset!r}; choose desk or full")
    merged = {**BASE, **PRESETS[preset], **file_cfg, **flags}
    return {k: merged.get(k) for k in COMMAND_KEYS[command]}


def _fmt(v) -> str:
    if isinstance(v, tuple):
        return ",".join(CLASS_NAMES[int(x)] if isinstance(x, InterferenceClass) else f"{x:g}" for x in v)
    return "none" if v is None else str(v)


def write_resolved(cfg: dict, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(f"{k}={_fmt(v)}\n" for k, v in cfg.items()))
    return path


def _require(cfg: dict, *keys):
    for k in keys:
        if cfg.get(k) in (None, ""):
            raise UsageError(f"--{k.replace('_', '-')} is required")


def _existing(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{what} not found: {p}")
    return p


def _load_model(path):
    from .nnet.checkpoint import load_checkpoint
    from .nnet.model import ModelConfig, param_shapes

    p = _existing(path, "model checkpoint")
    try:
        params = load_checkpoint(p)
    except FormatError as exc:
        raise UsageError(f"bad checkpoint {p}: {exc}") from exc
    cfg = ModelConfig()
    for name, shape in param_shapes(cfg).items():
        if name not in params or params[name].shape != tuple(shape):
            raise UsageError(f"checkpoint {p} does not match the default model ({name})")
    return params, cfg


def _load_dataset(path):
    from .wavegen.dataset import Dataset

    p = _existing(path, "dataset")
    try:
        return Dataset(p)
    except FormatError as exc:
        raise UsageError(f"bad dataset {p}: {exc}") from exc


# ------------------------------------------------------------------ commands

def cmd_gen(cfg: dict) -> int:
    from .wavegen.dataset import generate_dataset

    _require(cfg, "out")
    if cfg["per_cell"] < 1:
        raise UsageError("--per-cell must be >= 1")
    hdr = generate_dataset(cfg["classes"], cfg["snr_list"], cfg["sir_list"], cfg["per_cell"],
                           cfg["seed"], cfg["out"], workers=cfg["workers"])
    write_resolved(cfg, str(cfg["out"]) + ".config")
    print(f"wrote {cfg['out']}: {hdr.sample_count} records "
          f"({len(cfg['classes'])} classes x {len(cfg['snr_list'])} SNR x {len(cfg['sir_list'])} SIR "
          f"x {cfg['per_cell']}), base_seed={cfg['seed']}, "
          f"lengths time/freq/csi={hdr.time_len}/{hdr.freq_len}/{hdr.csi_len}")
    return EXIT_OK


def cmd_train(cfg: dict) -> int:
    from .train import DomainData, SplitSpec, TrainPlan, run_training

    _require(cfg, "dataset", "out_dir")
    ds = _load_dataset(cfg["dataset"])
    plan = TrainPlan(strategy=cfg["strategy"], instances=cfg["instances"], batch_size=cfg["batch_size"],
                     max_epochs=cfg["max_epochs"], pretrain_epochs=cfg["pretrain_epochs"], seed=cfg["seed"])
    out_dir = Path(cfg["out_dir"])
    write_resolved(cfg, out_dir / "config.txt")
    report = run_training(DomainData(ds), plan, out_dir, split=SplitSpec(split_seed=cfg["split_seed"]))
    print(f"strategy={plan.strategy} selected_seed={report['selected_seed']} "
          f"test_accuracy={report['accuracy']:.4f} stability_delta={report['stability_delta']:.4f} "
          f"minutes={report['total_minutes']:.1f}")
    return EXIT_OK


def cmd_eval(cfg: dict) -> int:
    from .train import DomainData, SplitSpec, evaluate, split_dataset, write_json, write_tables

    _require(cfg, "model", "dataset")
    params, mcfg = _load_model(cfg["model"])
    data = DomainData(_load_dataset(cfg["dataset"]))
    if cfg["split"] == "all":
        idx, train_idx = np.arange(len(data)), None
    else:
        names = ("train", "val", "test")
        if cfg["split"] not in names:
            raise UsageError("--split must be train, val, test or all")
        try:
            parts = split_dataset(data, SplitSpec(split_seed=cfg["split_seed"]))
        except StratificationError as exc:
            raise UsageError(f"{exc}; use --split all for small datasets") from exc
        idx, train_idx = parts[names.index(cfg["split"])], parts[0]
    ev = evaluate(params, mcfg, data, idx)
    report = {"split": cfg["split"], "count": int(len(idx)), "accuracy": ev.accuracy,
              "confusion": ev.confusion.tolist(), "confusion_counts": ev.counts.tolist(),
              "acc_vs_sir": {str(k): v for k, v in ev.acc_vs_sir.items()},
              "acc_vs_snr": {str(k): v for k, v in ev.acc_vs_snr.items()}}
    if train_idx is not None and cfg["split"] != "train":
        train_acc = evaluate(params, mcfg, data, train_idx).accuracy
        report["train_accuracy"] = train_acc
        if train_acc < ev.accuracy:
            log.warning("training-split accuracy %.4f is below %s accuracy %.4f",
                        train_acc, cfg["split"], ev.accuracy)
    report_path = Path(cfg["report"] or Path(cfg["model"]).with_name("eval.json"))
    csv_dir = Path(cfg["csv_dir"] or report_path.parent)
    write_json(report, report_path)
    write_tables(report, csv_dir)
    write_resolved(cfg, report_path.with_suffix(".config"))
    print(f"{cfg['split']} accuracy {ev.accuracy:.4f} over {len(idx)} records; "
          f"report {report_path}, tables in {csv_dir}")
    return EXIT_OK


def cmd_flops(cfg: dict) -> int:
    from .nnet.counters import count_macs, count_params
    from .nnet.model import ModelConfig
    from .splitrun import compute_share_report

    mcfg = ModelConfig()
    macs = count_macs(mcfg)
    shares = compute_share_report(mcfg)
    print(f"params {count_params(mcfg):,}")
    print(f"MACs   {macs['total']:,} ({macs['total'] / 1e6:.2f}M)")
    for key, share in (("time", "ru_fraction"), ("freq", "du_freq_fraction"),
                       ("csi", "du_csi_fraction"), ("head", "head_fraction")):
        print(f"  {key:<5} {macs[key]:>10,}  {100 * shares[share]:5.1f}%")
    return EXIT_OK


def cmd_bench(cfg: dict) -> int:
    from .splitrun import bench_latency
    from .train import write_json

    _require(cfg, "model", "dataset")
    params, mcfg = _load_model(cfg["model"])
    ds = _load_dataset(cfg["dataset"])
    n = min(max(cfg["samples"], 1), len(ds))
    samples = [ds.domains(i) for i in range(n)]
    try:
        res = bench_latency(params, samples, mcfg, cfg["iters"], cfg["warmup"], cfg["mode"])
    except InvalidParameter as exc:
        raise UsageError(str(exc)) from exc
    print(f"{res.mode}: median {res.median_us:.1f} us, p95 {res.p95_us:.1f} us "
          f"over {res.iterations - res.warmup} iterations")
    for s, us in res.stage_us.items():
        print(f"  {s:<5} {us:9.1f} us  {100 * res.stage_shares[s]:5.1f}%")
    if res.wire_us is not None:
        print(f"  wire  {res.wire_us:9.1f} us")
    if cfg["report"]:
        write_json(res.to_dict(), cfg["report"])
        write_resolved(cfg, Path(cfg["report"]).with_suffix(".config"))
    return EXIT_OK


def _stop_on_signals() -> threading.Event:
    stop = threading.Event()
    for sig in (signal.SIGINT, signal.SIGTERM):
        signal.signal(sig, lambda *_: stop.set())
    return stop


def cmd_ru(cfg: dict) -> int:
    from .splitrun import ru_serve

    _require(cfg, "model")
    params, mcfg = _load_model(cfg["model"])
    host, port = _endpoint(cfg["listen"])
    ru_serve(params, mcfg, host, port, stop=_stop_on_signals(),
             ready=lambda p: print(f"RU listening on {host}:{p}", flush=True))
    return EXIT_OK


def cmd_du(cfg: dict) -> int:
    from .splitrun import DuNode, du_listen, du_serve

    _require(cfg, "model")
    params, mcfg = _load_model(cfg["model"])
    ru_host, ru_port = _endpoint(cfg["ru"])
    if cfg["dataset"]:
        ds = _load_dataset(cfg["dataset"])
        count = len(ds) if cfg["count"] <= 0 else min(cfg["count"], len(ds))
        node = DuNode.connect(params, mcfg, ru_host, ru_port, retries=cfg["retries"])
        try:
            n = du_serve(node, (ds.domains(i)[0] for i in range(count)), cfg["sink"])
        finally:
            node.close()
        write_resolved(cfg, str(cfg["sink"]) + ".config")
        print(f"classified {n} records; reports appended to {cfg['sink']}")
        return EXIT_OK
    host, port = _endpoint(cfg["listen"])
    node = DuNode.connect(params, mcfg, ru_host, ru_port, retries=cfg["retries"])
    try:
        du_listen(node, host, port, stop=_stop_on_signals(),
                  ready=lambda p: print(f"DU listening on {host}:{p}", flush=True))
    finally:
        node.close()
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "eval": cmd_eval, "flops": cmd_flops,
            "bench": cmd_bench, "ru": cmd_ru, "du": cmd_du}

HELP = {
    "gen": "generate a labeled dataset file",
    "train": "train one strategy and write checkpoints plus a report",
    "eval": "evaluate a fused checkpoint on a dataset split",
    "flops": "print parameter and MAC counts with placement shares",
    "bench": "measure single-sample inference latency",
    "ru": "run the RU service",
    "du": "run the DU against an RU",
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value settings file; flags override it")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress")
    parser = argparse.ArgumentParser(prog="osiris", description="Multi-domain interference classification.",
                                     parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, keys in COMMAND_KEYS.items():
        p = sub.add_parser(name, help=HELP[name], parents=[common])
        for key in keys:
            s = SETTINGS[key]
            kwargs = {"dest": key, "default": None, "help": s.help}
            if key == "strategy":
                kwargs["choices"] = ("rand", "pre")
            elif key == "preset":
                kwargs["choices"] = tuple(PRESETS)
            elif key == "mode":
                kwargs["choices"] = ("monolithic", "split-loopback")
            else:
                kwargs["type"] = s.parse
            flag = "--" + key.replace("_", "-")
            aliases = {"iters": ["--iterations"], "model": ["--checkpoint"]}.get(key, [])
            p.add_argument(flag, *aliases, **kwargs)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        cfg = resolve(args.command, args)
        return COMMANDS[args.command](cfg)
    except (UsageError, ConfigError, InvalidParameter, StratificationError) as exc:
        print(f"osiris {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except KeyboardInterrupt:
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - top-level reporter
        log.debug("failure", exc_info=True)
        print(f"osiris {args.command}: failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
