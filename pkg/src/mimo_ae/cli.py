"""Command-line interface: train, sweep, report and selftest commands.

Configuration comes from built-in defaults, then an INI-style config file
(``--config``), then command-line overrides, in that order.  Every command
is deterministic given (config, overrides, seed).  Exit codes: 0 success,
1 failed checks, 2 usage, configuration or I/O errors.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
from dataclasses import dataclass, replace

from . import __version__
from .autoencoder import split, train
from .errors import ConfigurationError, MimoAeError
from .evaluation import (
    AeTrainingProfile,
    Scenario,
    ScenarioKind,
    emit_csv,
    emit_report,
    parse_csv,
    sweep,
    training_matrix,
)
from .fronthaul import decoder_frame, encode_frame, encoder_frame
from .plots import emit_plot_data, render_figure
from .signal_model import SystemConfig, build_coherence_block, substream

DESK_SNR_GRID = (-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0)
ALL_KINDS = tuple(k.value for k in ScenarioKind)


@dataclass
class RunConfig:
    """Flattened configuration for all commands."""

    m: int = 64
    k: int = 8
    n_sc: int = 1200
    n_cbw: int = 12
    n_slot: int = 7
    constellation: str = "QAM16"
    seed: int = 0
    scenarios: tuple = ALL_KINDS
    ndiv: tuple = (2, 4, 8)
    snr: tuple = DESK_SNR_GRID
    blocks: int = 50
    clusters: int = 4
    iterations: int = 5
    inner_iterations: int = 2
    rho: float | None = None
    epochs: int = 2000
    mixtures: int = 180
    train_mode: str = "floor"
    fixed_train_snr: float = 10.0
    train_snr_floor: float = 18.0
    l2: float = 0.0
    sparsity: float = 0.0
    sparsity_target: float = 0.05
    init: str = "subspace"
    init_gain: float = 0.05
    scale_margin: float = 16.0
    train_blocks: int = 2
    train_snr: float = 10.0
    train_ndiv: int = 8

    def validate(self):
        problems = []
        if self.blocks < 1:
            problems.append("blocks must be >= 1")
        if self.train_blocks < 1:
            problems.append("train blocks must be >= 1")
        if self.epochs < 0:
            problems.append("epochs must be >= 0")
        if not self.snr:
            problems.append("snr grid must not be empty")
        for kind in self.scenarios:
            if kind not in ALL_KINDS:
                problems.append(
                    f"unknown scenario {kind!r}; choose from {list(ALL_KINDS)}"
                )
        for n in self.ndiv:
            if n < 1 or (2 * self.m) % n != 0:
                problems.append(f"ndiv {n} does not divide 2M = {2 * self.m}")
        if self.m % self.clusters != 0:
            problems.append(f"clusters {self.clusters} does not divide M = {self.m}")
        try:
            self.system_config()
        except ConfigurationError as exc:
            problems.append(str(exc))
        if problems:
            raise ConfigurationError(
                "invalid configuration:\n  " + "\n  ".join(problems)
            )

    def system_config(self) -> SystemConfig:
        return SystemConfig(
            m=self.m,
            k=self.k,
            n_sc=self.n_sc,
            n_cbw=self.n_cbw,
            n_slot=self.n_slot,
            constellation=self.constellation,
            master_seed=self.seed,
        )

    def profile(self) -> AeTrainingProfile:
        return AeTrainingProfile(
            n_mixtures=self.mixtures,
            train_mode=self.train_mode,
            fixed_snr_db=self.fixed_train_snr,
            snr_floor_db=self.train_snr_floor,
            max_epochs=self.epochs,
            l2_coeff=self.l2,
            sparsity_coeff=self.sparsity,
            sparsity_target=self.sparsity_target,
            init=self.init,
            init_gain=self.init_gain,
            scale_margin=self.scale_margin,
        )

    def scenario_list(self) -> list:
        out = []
        for kind in self.scenarios:
            kind = ScenarioKind(kind)
            if kind in (ScenarioKind.AE_CENTRALIZED, ScenarioKind.ARRAY_REDUCED):
                for n in self.ndiv:
                    out.append(Scenario(kind=kind, n_div=n, t_iter=self.iterations))
            elif kind is ScenarioKind.DECENTRALIZED_ADMM:
                out.append(
                    Scenario(
                        kind=kind,
                        clusters=self.clusters,
                        t_iter=self.iterations,
                        rho=self.rho,
                        t_inner=self.inner_iterations,
                    )
                )
            else:
                out.append(Scenario(kind=kind, t_iter=self.iterations))
        return out


_INT_KEYS = {
    "m", "k", "n_sc", "n_cbw", "n_slot", "seed", "blocks", "clusters",
    "iterations", "inner_iterations", "epochs", "mixtures", "train_blocks",
    "train_ndiv",
}
_FLOAT_KEYS = {
    "fixed_train_snr", "train_snr_floor", "l2", "sparsity", "sparsity_target",
    "init_gain", "scale_margin", "train_snr",
}
_SECTION_KEYS = {
    "system": {"m", "k", "n_sc", "n_cbw", "n_slot", "constellation", "seed"},
    "sweep": {
        "scenarios", "ndiv", "snr", "blocks", "clusters", "iterations",
        "inner_iterations", "rho",
    },
    "autoencoder": {
        "epochs", "mixtures", "train_mode", "fixed_train_snr",
        "train_snr_floor", "l2", "sparsity", "sparsity_target", "init",
        "init_gain", "scale_margin",
    },
    "train": {"blocks", "snr", "ndiv"},
}


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    if key == "rho":
        return None if raw.lower() in ("auto", "none", "") else float(raw)
    if key == "scenarios":
        return tuple(s.strip() for s in raw.split(",") if s.strip())
    if key == "ndiv":
        return tuple(int(s) for s in raw.split(",") if s.strip())
    if key == "snr":
        return tuple(float(s) for s in raw.split(",") if s.strip())
    if key in _INT_KEYS:
        return int(raw)
    if key in _FLOAT_KEYS:
        return float(raw)
    return raw


def load_config(path: str | None) -> RunConfig:
    cfg = RunConfig()
    if path is None:
        return cfg
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    read = parser.read(path)
    if not read:
        raise ConfigurationError(f"cannot read config file {path!r}")
    problems = []
    updates = {}
    for section in parser.sections():
        if section not in _SECTION_KEYS:
            problems.append(f"unknown section [{section}]")
            continue
        for key, raw in parser.items(section):
            if key not in _SECTION_KEYS[section]:
                problems.append(f"unknown key {key!r} in [{section}]")
                continue
            field_name = f"train_{key}" if section == "train" else key
            try:
                updates[field_name] = _parse_value(field_name, raw)
            except ValueError as exc:
                problems.append(f"[{section}] {key}: {exc}")
    if problems:
        raise ConfigurationError(
            f"invalid config file {path}:\n  " + "\n  ".join(problems)
        )
    return replace(cfg, **updates)


def apply_overrides(cfg: RunConfig, args) -> RunConfig:
    updates = {}
    if args.paper_scale:
        updates.update(m=512, k=40, clusters=4, ndiv=(8,), blocks=5)
    if args.seed is not None:
        updates["seed"] = args.seed
    if getattr(args, "scenarios", None):
        updates["scenarios"] = tuple(s.strip() for s in args.scenarios.split(","))
    if getattr(args, "ndiv", None):
        updates["ndiv"] = tuple(int(s) for s in args.ndiv.split(","))
    if getattr(args, "snr", None):
        updates["snr"] = tuple(float(s) for s in args.snr.split(","))
    if getattr(args, "blocks", None) is not None:
        updates["blocks" if args.command != "train" else "train_blocks"] = args.blocks
    if getattr(args, "epochs", None) is not None:
        updates["epochs"] = args.epochs
    return replace(cfg, **updates)


def _common_options(parser):
    parser.add_argument("--config", help="INI configuration file")
    parser.add_argument("--seed", type=int, help="master seed override")
    parser.add_argument(
        "--paper-scale",
        action="store_true",
        help="use the large-array configuration (M=512, K=40, 4 clusters)",
    )
    parser.add_argument("--blocks", type=int, help="number of coherence blocks")
    parser.add_argument("--epochs", type=int, help="autoencoder training epoch cap")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mimo-ae",
        description="Massive MIMO uplink simulator with autoencoder-compressed fronthaul",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sweep = sub.add_parser("sweep", help="run the EVM-vs-SNR Monte Carlo sweep")
    _common_options(p_sweep)
    p_sweep.add_argument("--out", default="sweep.csv", help="output CSV path")
    p_sweep.add_argument("--scenarios", help="comma-separated scenario kinds")
    p_sweep.add_argument("--ndiv", help="comma-separated reduction factors")
    p_sweep.add_argument("--snr", help="comma-separated SNR grid in dB")
    p_sweep.add_argument(
        "--threads", type=int, default=None,
        help="worker processes (default: MIMO_AE_THREADS or 1)",
    )

    p_train = sub.add_parser("train", help="train per-block autoencoders to .maef files")
    _common_options(p_train)
    p_train.add_argument("--out", default="models", help="output directory")

    p_report = sub.add_parser("report", help="summarize a sweep CSV")
    p_report.add_argument("csv_path", help="CSV produced by the sweep command")
    p_report.add_argument("--out", help="figure output path (default: next to the CSV)")

    p_self = sub.add_parser("selftest", help="run the fast invariant checks")
    _common_options(p_self)
    return parser


def cmd_sweep(cfg: RunConfig, args) -> int:
    cfg.validate()
    records = sweep(
        cfg.system_config(),
        cfg.scenario_list(),
        list(cfg.snr),
        cfg.blocks,
        cfg.profile(),
        threads=args.threads,
    )
    emit_csv(records, args.out)
    base = args.out[:-4] if args.out.endswith(".csv") else args.out
    report = emit_report(records, cfg.system_config())
    with open(base + ".report.txt", "w") as fh:
        fh.write(report + "\n")
    render_figure(records, base + ".png")
    emit_plot_data(records, base + ".series.csv")
    print(report)
    print(f"\nwrote {args.out}, {base}.report.txt, {base}.png, {base}.series.csv")
    return 0


def cmd_train(cfg: RunConfig, args) -> int:
    cfg.validate()
    os.makedirs(args.out, exist_ok=True)
    sys_cfg = cfg.system_config()
    profile = cfg.profile()
    n_div = cfg.train_ndiv
    manifest = {
        "m": cfg.m,
        "k": cfg.k,
        "n_div": n_div,
        "snr_db": cfg.train_snr,
        "seed": cfg.seed,
        "blocks": [],
    }
    for block_id in range(cfg.train_blocks):
        block = build_coherence_block(sys_cfg, cfg.train_snr, block_id)
        x_train = training_matrix(
            block.rx.entries[:, : sys_cfg.n_cbw],
            profile.n_mixtures,
            substream(cfg.seed, block_id, "ae-mix"),
        )
        model = train(
            x_train,
            profile.autoencoder_config(2 * cfg.m, n_div),
            substream(cfg.seed, block_id, "ae-init", n_div),
        )
        enc, dec = split(model)
        name = f"block_{block_id:05d}.maef"
        blob = encode_frame(encoder_frame(enc, block_id, cfg.m, n_div))
        blob += encode_frame(decoder_frame(dec, block_id, cfg.m, n_div))
        with open(os.path.join(args.out, name), "wb") as fh:
            fh.write(blob)
        manifest["blocks"].append(
            {"block_id": block_id, "file": name, "frames": ["encoder", "decoder"]}
        )
    with open(os.path.join(args.out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {len(manifest['blocks'])} model files and manifest.json to {args.out}")
    return 0


def cmd_report(args) -> int:
    records = parse_csv(args.csv_path)
    report = emit_report(records)
    print(report)
    base = args.csv_path[:-4] if args.csv_path.endswith(".csv") else args.csv_path
    figure_path = args.out or (base + ".png")
    render_figure(records, figure_path)
    print(f"\nwrote {figure_path}")
    return 0


def cmd_selftest() -> int:
    from .selftest import run_selftest

    return 0 if run_selftest() else 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "report":
            return cmd_report(args)
        cfg = apply_overrides(load_config(args.config), args)
        if args.command == "sweep":
            return cmd_sweep(cfg, args)
        if args.command == "train":
            return cmd_train(cfg, args)
        if args.command == "selftest":
            return cmd_selftest()
        parser.error(f"unknown command {args.command}")
    except (MimoAeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
