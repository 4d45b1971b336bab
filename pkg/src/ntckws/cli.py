"""Command-line entry point: ``ntckws <subcommand> [options]``.

Parameters come from built-in defaults, then an optional INI file
(``--config``), then explicit flags. Failures exit nonzero and print one
JSON error record on stderr.
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .decoder import DecoderConfig, Detection, decode_utterance, read_detections, write_detections
from .emissions import PosteriorgramError, PosteriorgramFormatError, augment_wildcards, load_any
from .evaluation import DEFAULT_FARS, EvalError, evaluate, negative_hours, write_curve
from .fst import FstError
from .graph import GraphError, Lexicon, SearchSpace, Vocabulary, build_search_space, build_token_fst, \
    build_lexicon_fst, load_search_space, save_search_space
from .loss import InfiniteLossError, PenaltySchedule, ctc_loss, ntc_loss
from .simulation import (DEFAULT_KEYWORD, DEFAULT_LEVELS, FRAME_SHIFT, TRAIN_CRITERIA, SynthSettings,
                         default_vocabulary, make_dataset, read_manifest, train_proxy)

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_MISSING_FILE = 3
EXIT_CONFIG = 4
EXIT_FORMAT = 5
EXIT_INFEASIBLE = 6

LAMBDA_GRID = ((4.0, 2.0), (4.0, 4.0), (4.0, 0.0), (4.0, -math.inf),
               (2.0, 2.0), (0.0, 2.0), (-math.inf, 2.0))


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


class ConfigError(CliError):
    def __init__(self, message: str):
        super().__init__(EXIT_CONFIG, message)


# ------------------------------------------------------------------ config


@dataclass
class GraphParams:
    keyword: str = " ".join(DEFAULT_KEYWORD)
    background_path: bool = True


@dataclass
class DecodeParams:
    max_active: Optional[int] = 20
    lambda_self_loop: float = 4.0
    lambda_bypass: float = 2.0
    confidence_threshold: float = 0.0
    min_real_tokens: int = 1
    hold_frames: int = 10
    max_keyword_frames: Optional[int] = 100

    def decoder_config(self) -> DecoderConfig:
        return DecoderConfig(**asdict(self))


@dataclass
class LossParams:
    criterion: str = "ntc"
    epoch: int = 0
    self_loop_initial: float = -4.0
    self_loop_decay: float = 0.999
    bypass_initial: float = -4.0
    bypass_decay: float = 0.975

    def schedule(self) -> PenaltySchedule:
        return PenaltySchedule(self.self_loop_initial, self.self_loop_decay,
                               self.bypass_initial, self.bypass_decay)


@dataclass
class SimulateParams:
    n_pos: int = 50
    n_neg: int = 60
    neg_frames: int = 600
    levels: str = " ".join(lv.name for lv in DEFAULT_LEVELS)


@dataclass
class EvaluateParams:
    fars: str = " ".join(repr(f) for f in DEFAULT_FARS)
    collar: Optional[int] = None

    def far_list(self) -> list[float]:
        return [float(x) for x in self.fars.split()]


@dataclass
class GeneralParams:
    seed: int = 0
    jobs: int = 1


@dataclass
class RunConfig:
    general: GeneralParams = field(default_factory=GeneralParams)
    graph: GraphParams = field(default_factory=GraphParams)
    decode: DecodeParams = field(default_factory=DecodeParams)
    loss: LossParams = field(default_factory=LossParams)
    simulate: SimulateParams = field(default_factory=SimulateParams)
    evaluate: EvaluateParams = field(default_factory=EvaluateParams)

    def to_ini(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        for f in fields(self):
            section = getattr(self, f.name)
            cp[f.name] = {k: _fmt(v) for k, v in asdict(section).items()}
        lines = []
        for name in cp.sections():
            lines.append(f"[{name}]")
            lines.extend(f"{k} = {v}" for k, v in cp[name].items())
            lines.append("")
        return "\n".join(lines)

    def write(self, path) -> None:
        Path(path).write_text(self.to_ini(), encoding="utf-8")

    @classmethod
    def from_ini(cls, text: str, source: str = "<config>") -> "RunConfig":
        cp = configparser.ConfigParser(interpolation=None)
        try:
            cp.read_string(text, source=source)
        except configparser.Error as exc:
            raise ConfigError(f"{source}: {exc}") from None
        cfg = cls()
        known = {f.name: f for f in fields(cls)}
        for name in cp.sections():
            if name not in known:
                raise ConfigError(f"{source}: unknown section [{name}]")
            section = getattr(cfg, name)
            types = {f.name: f.type for f in fields(section)}
            updates = {}
            for key, raw in cp[name].items():
                if key not in types:
                    raise ConfigError(f"{source}: unknown key {key!r} in [{name}]")
                updates[key] = _parse(raw, types[key], f"{source}: [{name}] {key}")
            setattr(cfg, name, replace(section, **updates))
        return cfg

    @classmethod
    def read(cls, path) -> "RunConfig":
        p = Path(path)
        if not p.is_file():
            raise CliError(EXIT_MISSING_FILE, f"config file not found: {p}")
        return cls.from_ini(p.read_text(encoding="utf-8"), str(p))


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse(raw: str, typ: str, where: str):
    raw = raw.strip()
    optional = typ.startswith("Optional")
    if optional and raw.lower() == "none":
        return None
    base = typ.removeprefix("Optional[").removesuffix("]")
    try:
        if base == "bool":
            if raw.lower() in ("true", "yes", "1", "on"):
                return True
            if raw.lower() in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if base == "int":
            return int(raw)
        if base == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {base}") from None
    return raw


# ---------------------------------------------------------------- helpers


def _vocab() -> Vocabulary:
    return default_vocabulary()


def _spaces(params: GraphParams) -> tuple[SearchSpace, SearchSpace]:
    vocab = _vocab()
    lex = Lexicon.phone_lexicon(vocab)
    kw = params.keyword.split()
    try:
        ctc = build_search_space(kw, lex, vocab, background_path=params.background_path)
        ntc = build_search_space(kw, lex, vocab, wildcards=True, background_path=params.background_path)
    except (GraphError, FstError) as exc:
        raise ConfigError(f"cannot build graphs for keyword {params.keyword!r}: {exc}") from None
    return ctc, ntc


def _levels(params: SimulateParams):
    by_name = {lv.name: lv for lv in DEFAULT_LEVELS}
    names = params.levels.split()
    unknown = [n for n in names if n not in by_name]
    if unknown:
        raise ConfigError(f"unknown level(s) {unknown}; known: {sorted(by_name)}")
    if not names:
        raise ConfigError("no levels selected")
    return [by_name[n] for n in names]


def _need_file(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise CliError(EXIT_MISSING_FILE, f"file not found: {p}")
    return p


def _decode_one(job) -> list[Detection]:
    utt, path, space, cfg = job
    post = load_any(path)
    if space.has_wildcards:
        post = augment_wildcards(post, space.vocab)
    return decode_utterance(post, space, cfg, utt)


def decode_manifest(manifest, space: SearchSpace, cfg: DecoderConfig, jobs: int = 1) -> list[Detection]:
    """Decode every utterance of a manifest; output sorted by (utt, start)."""
    manifest = _need_file(manifest)
    root = manifest.parent
    rows = read_manifest(manifest)
    todo = [(r.utt, root / r.file, space, cfg) for r in rows]
    for _, path, _, _ in todo:
        _need_file(path)
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            parts = list(ex.map(_decode_one, todo, chunksize=16))
    else:
        parts = [_decode_one(j) for j in todo]
    dets = [d for part in parts for d in part]
    dets.sort(key=lambda d: (d.utt, d.start, d.end))
    return dets


def _evaluate_to(dets, manifest, fars, collar, out: Path) -> dict:
    manifest = _need_file(manifest)
    refs = read_manifest(manifest)
    hours = negative_hours(refs, manifest.parent, FRAME_SHIFT)
    if hours <= 0:
        raise CliError(EXIT_FORMAT, "manifest has no negative audio; FAR is undefined")
    report, curves = evaluate(dets, refs, hours, fars, collar)
    out.parent.mkdir(parents=True, exist_ok=True)
    report.write(out)
    curve_dir = out.with_suffix("")
    curve_dir.mkdir(exist_ok=True)
    for lv, curve in curves.items():
        write_curve(curve, curve_dir / f"det_{lv}.csv")
    return report.to_dict()


# ------------------------------------------------------------- subcommands


def cmd_build_graph(args, cfg: RunConfig) -> None:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ctc, ntc = _spaces(cfg.graph)
    save_search_space(ctc, out / "s_ctc")
    save_search_space(ntc, out / "s_ntc")
    print(json.dumps({"s_ctc": str(out / "s_ctc"), "s_ntc": str(out / "s_ntc"),
                      "states": {"s_ctc": ctc.fst.num_states, "s_ntc": ntc.fst.num_states}}))


def cmd_loss(args, cfg: RunConfig) -> None:
    post = load_any(_need_file(args.posteriorgram))
    vocab = _vocab()
    lp = cfg.loss
    if lp.criterion not in TRAIN_CRITERIA:
        raise ConfigError(f"loss criterion must be one of {TRAIN_CRITERIA}, got {lp.criterion!r}")
    transcript = args.transcript.split()
    lex = Lexicon.phone_lexicon(vocab)
    if lp.criterion == "ctc":
        t = build_token_fst(vocab)
        res = ctc_loss(post, transcript, t, build_lexicon_fst(lex, vocab), gradient=True)
    else:
        wv = vocab.with_wildcards()
        t = build_token_fst(wv)
        res = ntc_loss(post, transcript, t, build_lexicon_fst(lex, wv), lp.schedule(), lp.epoch, gradient=True)
    if not res.finite:
        raise CliError(EXIT_INFEASIBLE, "loss is infinite: the transcript cannot be aligned to this input")
    prefix = Path(args.out)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    np.save(prefix.with_suffix(".grad.npy"), res.gradient)
    record = {"loss": res.loss, "criterion": lp.criterion, "epoch": lp.epoch,
              "frames": post.num_frames, "gradient": str(prefix.with_suffix(".grad.npy"))}
    prefix.with_suffix(".json").write_text(json.dumps(record, indent=1) + "\n", encoding="utf-8")
    print(json.dumps(record))


def cmd_decode(args, cfg: RunConfig) -> None:
    for ext in (".fst", ".ann", ".syms", ".json"):
        _need_file(str(args.graph) + ext)
    space = load_search_space(args.graph)
    dets = decode_manifest(args.manifest, space, cfg.decode.decoder_config(), cfg.general.jobs)
    write_detections(dets, args.out)
    print(json.dumps({"detections": len(dets), "out": str(args.out)}))


def cmd_simulate(args, cfg: RunConfig) -> None:
    sp = cfg.simulate
    rows = make_dataset(sp.n_pos, sp.n_neg, sp.neg_frames, _levels(sp), args.out_dir, cfg.general.seed,
                        vocab=_vocab(), jobs=cfg.general.jobs)
    print(json.dumps({"utterances": len(rows), "manifest": str(Path(args.out_dir) / "manifest.jsonl")}))


def cmd_evaluate(args, cfg: RunConfig) -> None:
    dets = read_detections(_need_file(args.detections))
    rep = _evaluate_to(dets, args.manifest, cfg.evaluate.far_list(), cfg.evaluate.collar, Path(args.out))
    print(json.dumps(rep["recall"]["all"]))


def _lam(x: float) -> str:
    return "-inf" if x == -math.inf else f"{x:g}"


def cmd_ablate(args, cfg: RunConfig) -> None:
    out = Path(args.out_dir)
    sp, ev = cfg.simulate, cfg.evaluate
    levels = _levels(sp)
    ctc, ntc = _spaces(cfg.graph)
    graphs_dir = out / "graphs"
    graphs_dir.mkdir(parents=True, exist_ok=True)
    save_search_space(ctc, graphs_dir / "s_ctc")
    save_search_space(ntc, graphs_dir / "s_ntc")
    summary = {"matrix": {}, "lambda_grid": {}}
    manifests = {}
    for crit in TRAIN_CRITERIA:
        data = out / f"data_{crit}"
        make_dataset(sp.n_pos, sp.n_neg, sp.neg_frames, [train_proxy(lv, crit) for lv in levels],
                     data, cfg.general.seed, vocab=_vocab(), jobs=cfg.general.jobs)
        manifests[crit] = data / "manifest.jsonl"
    base = cfg.decode.decoder_config()
    (out / "cells").mkdir(exist_ok=True)
    for crit in TRAIN_CRITERIA:
        for name, space in (("ctc", ctc), ("ntc", ntc)):
            cell = f"train_{crit}__decode_{name}"
            dets = decode_manifest(manifests[crit], space, base, cfg.general.jobs)
            write_detections(dets, out / "cells" / f"{cell}.jsonl")
            rep = _evaluate_to(dets, manifests[crit], ev.far_list(), ev.collar, out / "cells" / f"{cell}.json")
            summary["matrix"][cell] = rep["recall"]
    (out / "lambda").mkdir(exist_ok=True)
    for ls, lb in LAMBDA_GRID:
        row = f"self_{_lam(ls)}__bypass_{_lam(lb)}"
        dcfg = replace(base, lambda_self_loop=ls, lambda_bypass=lb)
        dets = decode_manifest(manifests["ntc"], ntc, dcfg, cfg.general.jobs)
        write_detections(dets, out / "lambda" / f"{row}.jsonl")
        rep = _evaluate_to(dets, manifests["ntc"], ev.far_list(), ev.collar, out / "lambda" / f"{row}.json")
        summary["lambda_grid"][row] = rep["recall"]
    cfg.write(out / "run.ini")
    (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    print(json.dumps({"cells": len(summary["matrix"]), "lambda_rows": len(summary["lambda_grid"]),
                      "summary": str(out / "summary.json")}))


# ------------------------------------------------------------------ parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _report(EXIT_USAGE, "UsageError", message)
        self.print_usage(sys.stderr)
        sys.exit(EXIT_USAGE)


def _float_or_inf(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if math.isnan(v):
        raise argparse.ArgumentTypeError("nan is not allowed")
    return v


def _max_active(text: str) -> Optional[int]:
    if text.lower() in ("none", "inf", "unlimited"):
        return None
    return int(text)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file with per-subcommand sections")
    common.add_argument("--seed", type=int)
    common.add_argument("--jobs", type=int, help="worker processes (results do not depend on it)")
    common.add_argument("--dump-config", metavar="PATH", help="write the effective config and continue")

    dec = argparse.ArgumentParser(add_help=False)
    dec.add_argument("--lambda-self-loop", type=_float_or_inf, help="decode-time @ weight (-inf disables)")
    dec.add_argument("--lambda-bypass", type=_float_or_inf, help="decode-time * weight (-inf disables)")
    dec.add_argument("--max-active", type=_max_active, help="beam size, default 20 ('none' = unpruned)")
    dec.add_argument("--min-real-tokens", type=int)
    dec.add_argument("--threshold", type=float, dest="confidence_threshold")

    evp = argparse.ArgumentParser(add_help=False)
    evp.add_argument("--far", type=float, action="append", help="false alarms per hour (repeatable)")
    evp.add_argument("--collar", type=int, help="span-overlap matching with this collar in frames")

    kw = argparse.ArgumentParser(add_help=False)
    kw.add_argument("--keyword", help="space-separated phonemes")

    p = _Parser(prog="ntckws", description="Noise-aware CTC keyword spotting toolkit")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("build-graph", parents=[common, kw], help="write the CTC and NTC search spaces")
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_build_graph)

    s = sub.add_parser("loss", parents=[common], help="loss and gradient for one posteriorgram")
    s.add_argument("posteriorgram")
    s.add_argument("--transcript", required=True, help="space-separated phonemes")
    s.add_argument("--criterion", choices=TRAIN_CRITERIA)
    s.add_argument("--epoch", type=int)
    s.add_argument("--out", required=True, help="output prefix (.json and .grad.npy)")
    s.set_defaults(func=cmd_loss)

    s = sub.add_parser("decode", parents=[common, dec], help="decode a manifest into detections JSONL")
    s.add_argument("--manifest", required=True)
    s.add_argument("--graph", required=True, help="search-space prefix written by build-graph")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_decode)

    s = sub.add_parser("simulate", parents=[common], help="write a synthetic dataset")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--n-pos", type=int, help="positives per level")
    s.add_argument("--n-neg", type=int)
    s.add_argument("--neg-frames", type=int)
    s.add_argument("--levels", nargs="+")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("evaluate", parents=[common, evp], help="score detections against a manifest")
    s.add_argument("--detections", required=True)
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True, help="report JSON; DET curves go in a sibling directory")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("ablate", parents=[common, dec, evp, kw],
                       help="train-proxy x decode-graph matrix plus the lambda grid")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--n-pos", type=int)
    s.add_argument("--n-neg", type=int)
    s.add_argument("--neg-frames", type=int)
    s.add_argument("--levels", nargs="+")
    s.set_defaults(func=cmd_ablate)
    return p


def resolve_config(args) -> RunConfig:
    cfg = RunConfig.read(args.config) if getattr(args, "config", None) else RunConfig()
    a = vars(args)

    def take(section: str, names: Sequence[str]):
        sec = getattr(cfg, section)
        upd = {n: a[n] for n in names if a.get(n) is not None}
        if upd:
            setattr(cfg, section, replace(sec, **upd))

    take("general", ["seed", "jobs"])
    take("graph", ["keyword"])
    take("decode", ["lambda_self_loop", "lambda_bypass", "min_real_tokens", "confidence_threshold"])
    if "max_active" in a and a["max_active"] is not None:
        cfg.decode = replace(cfg.decode, max_active=a["max_active"])
    take("loss", ["criterion", "epoch"])
    take("simulate", ["n_pos", "n_neg", "neg_frames"])
    if a.get("levels"):
        cfg.simulate = replace(cfg.simulate, levels=" ".join(a["levels"]))
    if a.get("far"):
        cfg.evaluate = replace(cfg.evaluate, fars=" ".join(repr(f) for f in a["far"]))
    if a.get("collar") is not None:
        cfg.evaluate = replace(cfg.evaluate, collar=a["collar"])
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    if cfg.general.jobs < 1:
        raise ConfigError("jobs must be >= 1")
    try:
        cfg.decode.decoder_config()
        cfg.loss.schedule()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if cfg.loss.epoch < 0:
        raise ConfigError("epoch must be >= 0")
    sp = cfg.simulate
    if min(sp.n_pos, sp.n_neg, sp.neg_frames) < 1:
        raise ConfigError("n_pos, n_neg and neg_frames must be >= 1")
    try:
        fars = cfg.evaluate.far_list()
    except ValueError:
        raise ConfigError(f"bad FAR list {cfg.evaluate.fars!r}") from None
    if not fars or any(f < 0 for f in fars):
        raise ConfigError("FAR targets must be a non-empty list of values >= 0")
    if not cfg.graph.keyword.split():
        raise ConfigError("keyword is empty")


def _report(code: int, kind: str, message: str) -> None:
    print(json.dumps({"error": kind, "message": message, "exit_code": code}), file=sys.stderr)


def _join_negative_values(argv: Sequence[str]) -> list[str]:
    # argparse reads a bare "-inf" as an option; glue it to its flag
    out: list[str] = []
    for tok in argv:
        if out and out[-1].startswith("--") and "=" not in out[-1] and tok.lower() in ("-inf", "-infinity"):
            out[-1] = f"{out[-1]}={tok}"
        else:
            out.append(tok)
    return out


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    argv = _join_negative_values(sys.argv[1:] if argv is None else argv)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = resolve_config(args)
        if args.dump_config:
            cfg.write(args.dump_config)
        args.func(args, cfg)
    except CliError as exc:
        _report(exc.code, type(exc).__name__, str(exc))
        return exc.code
    except FileNotFoundError as exc:
        _report(EXIT_MISSING_FILE, "FileNotFoundError", str(exc))
        return EXIT_MISSING_FILE
    except (PosteriorgramFormatError, PosteriorgramError, GraphError, FstError, json.JSONDecodeError, KeyError) as exc:
        _report(EXIT_FORMAT, type(exc).__name__, str(exc))
        return EXIT_FORMAT
    except InfiniteLossError as exc:
        _report(EXIT_INFEASIBLE, type(exc).__name__, str(exc))
        return EXIT_INFEASIBLE
    except EvalError as exc:
        _report(EXIT_FORMAT, type(exc).__name__, str(exc))
        return EXIT_FORMAT
    except Exception as exc:  # last resort, still machine-readable
        _report(EXIT_INTERNAL, type(exc).__name__, str(exc))
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
