"""Command-line entry point.

Subcommands::

    keyrate    key rate per shuffling mode for an (N, L[, C]) feature shape
    bound      Eve's rate bound through a block-permutation channel
    brute-mi   exact and idealized permutation-channel mutual information
    capacity   closed-form capacity of an awgn or bsc channel
    handshake  Diffie-Hellman codebook agreement transcript
    train      train Alice/Bob/Eve, write checkpoints, trace and one CSV row
    sweep      train (or load) and evaluate over SNRs and channels
    attack     retrain a fresh Eve against a frozen Alice and evaluate

Configuration files are YAML with a ``system`` mapping (any
``SystemConfig`` field), plus optional ``sweep`` and ``attack`` mappings.
Command-line flags override file values. The fully resolved configuration,
defaults included, is written to ``<out>/config.yaml``.

Exit codes: 0 success, 2 configuration error, 3 numerical divergence.
"""

from __future__ import annotations

import argparse
import copy
import sys
from pathlib import Path

import yaml

from . import pipeline
from .channel import ChannelModel
from .keyexchange import DhParams, build_codebook, handshake, lookup
from .mine import MineDivergence
from .secrecy import (PermChannelSpec, eve_capacity_bound, eve_rate_bound,
                      exact_perm_channel_mi, idealized_perm_channel_mi, idealized_upper_bound,
                      log2_factorial, log_keyspace_stirling)
from .shuffle import ShapeError, key_rate

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3

DEFAULT_SEED = 42

SWEEP_DEFAULTS = {"snr_db": [0.0, 3.0, 6.0, 9.0, 12.0, 15.0, 18.0], "channels": ["awgn"],
                  "n_messages": None, "workers": 1}
ATTACK_DEFAULTS = {"eve_steps": None}


class ConfigError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


# -- analytic subcommands ----------------------------------------------------

def cmd_keyrate(args) -> int:
    shape = (args.n, args.l) if args.c is None else (args.c, args.n, args.l)
    grains = (args.grain_row, args.grain_col)
    modes = [("row", "row"), ("col", "col"), ("row+col", "row+col")]
    if args.c is not None:
        modes.append(("3-order", "row+col+filter"))
    kind = "audio" if args.audio else "text_image"
    print(f"shape={'x'.join(map(str, shape))} grains={grains[0]},{grains[1]} unit={kind}")
    for label, mode in modes:
        print(f"{label:8s} {key_rate(shape, grains, kind, mode):.4f}")
    return EXIT_OK


def cmd_bound(args) -> int:
    rate = eve_rate_bound(args.n, args.g, args.alphabet, args.pe)
    cap = eve_capacity_bound(args.n, args.g, args.alphabet, args.pe)
    k = args.n // args.g
    print(f"n={args.n} g={args.g} alphabet={args.alphabet} p_e={args.pe}")
    print(f"rate_bound   {rate:.6f}")
    print(f"capacity     {cap:.6f}")
    print(f"log2_keys    {log2_factorial(k):.6f}")
    print(f"stirling     {log_keyspace_stirling(args.n, args.g):.6f}")
    return EXIT_OK


def cmd_brute_mi(args) -> int:
    dist = None if args.p1 is None else (1.0 - args.p1, args.p1)
    if dist is not None and args.alphabet != 2:
        raise ConfigError("--p1 only applies to a binary alphabet")
    spec = PermChannelSpec(args.alphabet, args.n, args.g, dist)
    print(f"alphabet={args.alphabet} n={args.n} g={args.g}")
    print(f"exact_multiset      {exact_perm_channel_mi(spec):.6f}")
    print(f"idealized_rowmodel  {idealized_perm_channel_mi(spec):.6f}")
    print(f"idealized_bound     {idealized_upper_bound(args.alphabet, args.n, args.g):.6f}")
    return EXIT_OK


def cmd_capacity(args) -> int:
    model = ChannelModel.from_flags(args.channel, args.snr, args.p)
    print(f"{model.kind} capacity {model.capacity():.6f}")
    return EXIT_OK


def cmd_handshake(args) -> int:
    params = DhParams(args.P, args.G)
    rng = pipeline.stream(args.seed, "keys")
    book = build_codebook((args.n, args.l), (1, 1), args.book_size, rng, "row+col")
    hs = handshake(params, len(book), rng, args.a, args.b, tamper_public=args.tamper)
    print(f"P={params.P} G={params.G} book={len(book)}")
    print(f"alice a={hs.a} A={hs.A}")
    print(f"bob   b={hs.b} B={hs.B}")
    print(f"alice shared={hs.shared_alice} index={hs.index_alice}")
    print(f"bob   shared={hs.shared_bob} index={hs.index_bob}")
    if hs.agreed:
        print(f"agreed key {lookup(book, hs.shared_alice).to_text()}")
    else:
        print("MISMATCH: the two sides derived different codebook indices")
    return EXIT_OK


# -- configuration -----------------------------------------------------------

def _load_yaml(path) -> dict:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    data = {} if data is None else data
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a mapping")
    unknown = set(data) - {"system", "sweep", "attack"}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    return data


def _apply_set(doc: dict, item: str) -> None:
    if "=" not in item:
        raise ConfigError(f"--set expects section.key=value, got {item!r}")
    key, raw = item.split("=", 1)
    parts = key.split(".")
    if len(parts) == 1:
        parts = ["system", parts[0]]
    if len(parts) != 2 or parts[0] not in doc or parts[1] not in doc[parts[0]]:
        raise ConfigError(f"unknown --set key {key!r}")
    doc[parts[0]][parts[1]] = yaml.safe_load(raw)


_FLAG_FIELDS = {"data": "data", "mode": "mode", "gamma": "gamma", "epochs": "epochs",
                "batches": "batches_per_epoch", "batch_size": "batch_size", "lr": "lr",
                "alpha": "alpha", "beta": "beta", "key_schedule": "key_schedule",
                "eve_schedule": "eve_schedule", "test_messages": "test_messages"}


def resolve_config(args) -> dict:
    """Merge defaults, the config file and command-line flags."""
    doc = {"system": pipeline.SystemConfig().to_dict(), "sweep": copy.deepcopy(SWEEP_DEFAULTS),
           "attack": copy.deepcopy(ATTACK_DEFAULTS)}
    if args.config is not None:
        for section, values in _load_yaml(args.config).items():
            if not isinstance(values, dict):
                raise ConfigError(f"section {section!r} must be a mapping")
            unknown = set(values) - set(doc[section])
            if unknown:
                raise ConfigError(f"unknown keys in {section}: {sorted(unknown)}")
            doc[section].update(values)
    for item in args.set or []:
        _apply_set(doc, item)
    sysd = doc["system"]
    for flag, name in _FLAG_FIELDS.items():
        v = getattr(args, flag, None)
        if v is not None:
            sysd[name] = v
    if args.channel is not None:
        if args.channel == "bsc":
            raise ConfigError("the learned pipeline runs over awgn or rayleigh, not bsc")
        sysd["channel"] = args.channel
    if args.p is not None:
        raise ConfigError("--p applies to the bsc channel only")
    if args.snr is not None:
        sysd["train_snr_db"] = float(args.snr)
    if args.snr_list is not None:
        doc["sweep"]["snr_db"] = [float(s) for s in args.snr_list.split(",") if s.strip()]
    if args.channels is not None:
        doc["sweep"]["channels"] = [c.strip() for c in args.channels.split(",") if c.strip()]
    if args.workers is not None:
        doc["sweep"]["workers"] = args.workers
    if getattr(args, "eve_steps", None) is not None:
        doc["attack"]["eve_steps"] = args.eve_steps
    sysd["seed"] = args.seed if args.seed is not None else sysd.get("seed", DEFAULT_SEED)
    for ch in doc["sweep"]["channels"]:
        if ch not in ("awgn", "rayleigh"):
            raise ConfigError(f"sweep channel must be awgn or rayleigh, got {ch!r}")
    return doc


def system_config(doc: dict) -> pipeline.SystemConfig:
    try:
        return pipeline.SystemConfig.from_dict(doc["system"])
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def write_config(doc: dict, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(yaml.safe_dump(doc, sort_keys=True))


def read_config(path) -> dict:
    """Read back a config written by ``write_config``."""
    return yaml.safe_load(Path(path).read_text())


def _write_trace(trace: pipeline.TrainTrace, path: Path) -> None:
    lines = ["step,recon,r_l,c_s,i_xy,i_xz,loss,eve_loss"]
    n_eve = len(trace.eve_loss)
    for i in range(len(trace.loss)):
        eve = f"{trace.eve_loss[i]:.10g}" if i < n_eve else ""
        vals = [trace.recon[i], trace.r_l[i], trace.c_s[i], trace.i_xy[i], trace.i_xz[i],
                trace.loss[i]]
        lines.append(",".join([str(i)] + [f"{v:.10g}" for v in vals] + [eve]))
    path.write_text("\n".join(lines) + "\n")


def _trained_system(doc: dict, args, out: Path) -> pipeline.SecureSystem:
    if getattr(args, "checkpoint", None):
        system = pipeline.load_system(args.checkpoint)
        if system.cfg.seed != doc["system"]["seed"]:
            system.cfg = pipeline.with_overrides(system.cfg, seed=doc["system"]["seed"])
        doc["system"] = system.cfg.to_dict()
        write_config(doc, out)
        return system
    cfg = system_config(doc)
    write_config(doc, out)
    system = pipeline.SecureSystem(cfg)
    system.train()
    pipeline.save_system(system, out / "checkpoint")
    _write_trace(system.trace, out / "trace.csv")
    return system


def _emit(records, path: Path) -> None:
    text = pipeline.records_to_csv(records)
    path.write_text(text)
    sys.stdout.write(text)


def cmd_train(args) -> int:
    doc = resolve_config(args)
    out = Path(args.out)
    system = _trained_system(doc, args, out)
    rec = system.evaluate(system.cfg.train_snr_db, n_messages=doc["sweep"]["n_messages"])
    _emit([rec], out / "results.csv")
    return EXIT_OK


def cmd_sweep(args) -> int:
    doc = resolve_config(args)
    out = Path(args.out)
    system = _trained_system(doc, args, out)
    sw = doc["sweep"]
    records = pipeline.run_sweep(system, sw["snr_db"], sw["channels"], sw["n_messages"],
                                 sw["workers"])
    _emit(records, out / "sweep.csv")
    return EXIT_OK


def cmd_attack(args) -> int:
    doc = resolve_config(args)
    out = Path(args.out)
    system = _trained_system(doc, args, out)
    steps = doc["attack"]["eve_steps"]
    steps = system.cfg.steps if steps is None else int(steps)
    pipeline.reset_eve(system)
    system.train_eve(steps, pipeline.stream(system.cfg.seed, "batching", 3),
                     pipeline.stream(system.cfg.seed, "keys", 3),
                     pipeline.stream(system.cfg.seed, "eve_channel", 3))
    sw = doc["sweep"]
    records = pipeline.run_sweep(system, sw["snr_db"], sw["channels"], sw["n_messages"],
                                 sw["workers"])
    _emit(records, out / "attack.csv")
    return EXIT_OK


# -- argument parsing ----------------------------------------------------------

def _run_flags(p: argparse.ArgumentParser, attack: bool = False) -> None:
    p.add_argument("--config", help="YAML config file")
    p.add_argument("--out", default="permsec-run", help="output directory")
    p.add_argument("--seed", type=int, default=None, help=f"master seed (default {DEFAULT_SEED})")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                   help="override any config value; repeatable")
    p.add_argument("--checkpoint", help="load a saved system instead of training")
    p.add_argument("--data", choices=("text", "image"))
    p.add_argument("--mode", choices=("none", "row", "col", "row+col"))
    p.add_argument("--gamma", type=int, choices=(1, 2, 3))
    p.add_argument("--epochs", type=int)
    p.add_argument("--batches", type=int, help="batches per epoch")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--key-schedule", choices=("fresh", "fixed"))
    p.add_argument("--eve-schedule", choices=("interleaved", "after"))
    p.add_argument("--test-messages", type=int)
    p.add_argument("--channel", choices=("awgn", "rayleigh", "bsc"))
    p.add_argument("--snr", type=float, help="training SNR in dB")
    p.add_argument("--p", type=float, help="bsc flip probability")
    p.add_argument("--snr-list", help="comma separated sweep SNRs in dB")
    p.add_argument("--channels", help="comma separated sweep channels")
    p.add_argument("--workers", type=int)
    if attack:
        p.add_argument("--eve-steps", type=int, help="attacker training steps (default: Bob's)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="permsec", description="Shuffled wiretap experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("keyrate", help="key rate per shuffling mode")
    p.add_argument("--n", type=int, required=True, help="rows (tokens or patches)")
    p.add_argument("--l", type=int, required=True, help="feature length")
    p.add_argument("--c", type=int, help="filters, enables the 3-order mode")
    p.add_argument("--grain-row", type=int, default=1)
    p.add_argument("--grain-col", type=int, default=1)
    p.add_argument("--audio", action="store_true", help="divide by N*L*C instead of N")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.set_defaults(func=cmd_keyrate)

    p = sub.add_parser("bound", help="Eve's rate bound")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--g", type=int, default=1)
    p.add_argument("--alphabet", type=int, default=2)
    p.add_argument("--pe", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("brute-mi", help="permutation channel mutual information by enumeration")
    p.add_argument("--alphabet", type=int, default=2)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--g", type=int, default=1)
    p.add_argument("--p1", type=float, help="i.i.d. probability of letter 1 (binary only)")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.set_defaults(func=cmd_brute_mi)

    p = sub.add_parser("capacity", help="closed-form channel capacity")
    p.add_argument("--channel", choices=("awgn", "bsc"), required=True)
    p.add_argument("--snr", type=float)
    p.add_argument("--p", type=float)
    p.set_defaults(func=cmd_capacity)

    p = sub.add_parser("handshake", help="Diffie-Hellman codebook agreement")
    p.add_argument("--P", type=int, default=23)
    p.add_argument("--G", type=int, default=5)
    p.add_argument("--a", type=int)
    p.add_argument("--b", type=int)
    p.add_argument("--book-size", type=int, default=16)
    p.add_argument("--n", type=int, default=16, help="key rows")
    p.add_argument("--l", type=int, default=16, help="key columns")
    p.add_argument("--tamper", action="store_true", help="corrupt Bob's public value in transit")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.set_defaults(func=cmd_handshake)

    for name, func, helptext in (("train", cmd_train, "train the system"),
                                 ("sweep", cmd_sweep, "evaluate over an SNR sweep"),
                                 ("attack", cmd_attack, "retrain Eve against a frozen Alice")):
        p = sub.add_parser(name, help=helptext)
        _run_flags(p, attack=name == "attack")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (pipeline.DivergenceError, MineDivergence, FloatingPointError) as exc:
        print(f"permsec: numerical divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ConfigError, ShapeError, ValueError, OverflowError) as exc:
        print(f"permsec: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
