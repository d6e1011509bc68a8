"""Command line entry point: ``affectflow <subcommand>``.

Each stage reads the previous stage's artifact from the output directory
and writes its own, so stages can be rerun and inspected one at a time.
``pipeline`` runs ingest, annotate, graph, patterns and mine in order.

Exit status: 0 on success, 1 for configuration/usage errors, 2 for data errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections.abc import Sequence
from dataclasses import dataclass, field, fields
from datetime import timedelta
from fractions import Fraction
from pathlib import Path

from . import __version__
from .annotate import (
    DIMENSIONS,
    Annotation,
    LabeledEpisode,
    Lexicon,
    auto_label,
    irr_report,
    label_episode,
    load_annotations,
    merge_annotators,
    resolve_labels,
    write_annotations,
)
from .errors import AffectflowError, ConfigError, DataError
from .graph import build_dfg, export_dot, export_json, export_many, filter_graph, merge_graphs
from .ingest import (
    ChatMessage,
    SegmentationConfig,
    load_emoji_table,
    parse_log,
    pseudonymize,
    read_corpus,
    segment_episodes,
    write_corpus,
)
from .intervene import compile_triggers, load_templates, replay, rules_from_json, rules_to_json, write_suggestions
from .patterns import (
    aggregate_strategies,
    extract_instances,
    instance_highlights,
    load_rule_table,
    read_instances,
    stats_to_csv,
    stats_to_json,
    write_instances,
)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger("affectflow")

SUBCOMMANDS = ("ingest", "annotate", "irr", "graph", "patterns", "mine", "replay", "pipeline")


@dataclass
class PipelineConfig:
    corpus: Path | None = None
    annotations: list[Path] = field(default_factory=list)
    lexicon: Path | None = None
    emoji_table: Path | None = None
    rule_table: Path | None = None
    templates: Path | None = None
    rules: Path | None = None
    output_dir: Path = Path("out")
    bot_users: list[str] = field(default_factory=list)
    max_gap_minutes: float = 30.0
    antecedent_window: int = 3
    require_affective_origin: bool = True
    min_success_rate: float = 0.5
    min_freq: int = 1
    merge_episodes: bool = False
    color_instances: bool = False
    emit_map: bool = False
    lenient: bool = False

    PATH_KEYS = ("corpus", "lexicon", "emoji_table", "rule_table", "templates", "rules", "output_dir")

    @classmethod
    def from_file(cls, path: Path) -> PipelineConfig:
        try:
            data = tomllib.loads(path.read_text("utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config file {path}: {exc}") from None
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"config file {path}: unknown keys {sorted(unknown)}")
        base = path.parent
        for key in cls.PATH_KEYS:
            if key in data:
                data[key] = base / data[key]
        if "annotations" in data:
            data["annotations"] = [base / p for p in data["annotations"]]
        return cls(**data)

    def override(self, args: argparse.Namespace) -> PipelineConfig:
        for f in fields(self):
            value = getattr(args, f.name, None)
            if value is None or value is False or value == []:
                continue
            if f.name in self.PATH_KEYS:
                value = Path(value)
            elif f.name == "annotations":
                value = [Path(p) for p in value]
            setattr(self, f.name, value)
        return self

    def validate(self, *required: str) -> PipelineConfig:
        for key in required:
            if getattr(self, key) in (None, []):
                raise ConfigError(f"missing required setting {key!r}")
        for key in ("corpus", "lexicon", "emoji_table", "rule_table", "templates", "rules"):
            p = getattr(self, key)
            if p is not None and not p.is_file():
                raise ConfigError(f"{key}: file {p} does not exist")
        for p in self.annotations:
            if not p.is_file():
                raise ConfigError(f"annotations: file {p} does not exist")
        if not self.max_gap_minutes > 0:
            raise ConfigError("max_gap_minutes must be positive")
        if self.antecedent_window < 1:
            raise ConfigError("antecedent_window must be >= 1")
        if not 0 <= self.min_success_rate <= 1:
            raise ConfigError("min_success_rate must be within [0, 1]")
        if self.min_freq < 1:
            raise ConfigError("min_freq must be >= 1")
        return self

    @property
    def segmentation(self) -> SegmentationConfig:
        return SegmentationConfig(max_gap=timedelta(minutes=self.max_gap_minutes))


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    log.info("wrote %s", path)


def _read_jsonl(path: Path) -> list[dict]:
    if not path.is_file():
        raise ConfigError(f"expected artifact {path} is missing; run the earlier stage first")
    return [json.loads(line) for line in path.read_text("utf-8").splitlines() if line.strip()]


# -- stages --------------------------------------------------------------------


def load_messages(path: Path, cfg: PipelineConfig) -> list[ChatMessage]:
    """Read a normalized corpus, or ingest a raw chat log on the fly."""
    text = path.read_text("utf-8")
    first = next((line for line in text.splitlines() if line.strip()), "")
    try:
        is_normalized = "pseudonym" in json.loads(first)
    except json.JSONDecodeError:
        is_normalized = False
    if is_normalized:
        return read_corpus(text)
    lines = parse_log(text, strict=not cfg.lenient)
    messages, _ = pseudonymize(lines, load_emoji_table(cfg.emoji_table), cfg.bot_users)
    return messages


def stage_ingest(cfg: PipelineConfig) -> None:
    cfg.validate("corpus")
    errors: list = []
    lines = parse_log(cfg.corpus.read_bytes(), strict=not cfg.lenient, errors=errors)
    for exc in errors:
        log.warning("%s: %s", cfg.corpus, exc)
    messages, pmap = pseudonymize(lines, load_emoji_table(cfg.emoji_table), cfg.bot_users)
    _write(cfg.output_dir / "corpus.jsonl", write_corpus(messages))
    if cfg.emit_map:
        _write(cfg.output_dir / "pseudonyms.csv", pmap.to_csv())


def label_corpus(messages: Sequence[ChatMessage], cfg: PipelineConfig) -> tuple[list[LabeledEpisode], list[Annotation]]:
    known = {m.msg_id for m in messages}
    lexicon = Lexicon.load(cfg.lexicon)
    by_channel: dict[str, list[ChatMessage]] = {}
    for m in messages:
        by_channel.setdefault(m.channel, []).append(m)
    auto = [a for channel in sorted(by_channel) for a in auto_label(by_channel[channel], lexicon)]
    consensus = []
    if cfg.annotations:
        sets = [load_annotations(p, known) for p in cfg.annotations]
        consensus = merge_annotators(sets)
    labels = resolve_labels(auto, consensus)
    gold_ids = {c.msg_id for c in consensus}
    final = [
        Annotation(m.msg_id, "gold" if m.msg_id in gold_ids else "auto", *labels[m.msg_id])
        for m in messages
    ]
    events = {msg_id: ev for msg_id, (ev, _) in labels.items()}
    episodes = segment_episodes(messages, events, cfg.segmentation)
    return [label_episode(ep, labels) for ep in episodes], final


def stage_annotate(cfg: PipelineConfig) -> None:
    cfg.validate()
    path = cfg.output_dir / "corpus.jsonl"
    if not path.is_file():
        raise ConfigError(f"{path} is missing; run ingest first")
    messages = read_corpus(path.read_text("utf-8"))
    labeled, final = label_corpus(messages, cfg)
    _write(cfg.output_dir / "labels.csv", write_annotations(final))
    _write(cfg.output_dir / "episodes.jsonl", "".join(json.dumps(ep.to_json(), ensure_ascii=False) + "\n" for ep in labeled))


def _load_episodes(cfg: PipelineConfig) -> list[LabeledEpisode]:
    return [LabeledEpisode.from_json(r) for r in _read_jsonl(cfg.output_dir / "episodes.jsonl")]


def _instances_for(ep: LabeledEpisode, cfg: PipelineConfig, rules) -> list:
    return extract_instances(
        ep, window=cfg.antecedent_window, require_affective_origin=cfg.require_affective_origin, rules=rules
    )


def stage_graph(cfg: PipelineConfig) -> None:
    cfg.validate()
    rules = load_rule_table(cfg.rule_table)
    graphs = []
    for ep in _load_episodes(cfg):
        if not ep.events:
            log.warning("episode %s has no labeled events, skipping graph", ep.episode_id.key)
            continue
        g = filter_graph(build_dfg(ep.labels, ep.episode_id), cfg.min_freq)
        graphs.append(g)
        colors, paths = ({}, {})
        if cfg.color_instances:
            colors, paths = instance_highlights(_instances_for(ep, cfg, rules))
        key = ep.episode_id.key
        _write(cfg.output_dir / "graphs" / f"{key}.dfg.json", export_json(g))
        _write(cfg.output_dir / "graphs" / f"{key}.dot", export_dot(g, colors, paths))
    _write(cfg.output_dir / "dfg.json", export_many(graphs))
    if cfg.merge_episodes and graphs:
        merged = filter_graph(merge_graphs(graphs), cfg.min_freq)
        _write(cfg.output_dir / "merged.dfg.json", export_json(merged))
        _write(cfg.output_dir / "merged.dot", export_dot(merged))


def stage_patterns(cfg: PipelineConfig) -> None:
    cfg.validate()
    rules = load_rule_table(cfg.rule_table)
    instances = []
    for ep in _load_episodes(cfg):
        instances.extend(_instances_for(ep, cfg, rules))
    _write(cfg.output_dir / "instances.jsonl", write_instances(instances))


def stage_mine(cfg: PipelineConfig) -> None:
    cfg.validate()
    path = cfg.output_dir / "instances.jsonl"
    if not path.is_file():
        raise ConfigError(f"{path} is missing; run patterns first")
    stats = aggregate_strategies(read_instances(path.read_text("utf-8")))
    _write(cfg.output_dir / "stats.json", stats_to_json(stats))
    _write(cfg.output_dir / "stats.csv", stats_to_csv(stats))
    triggers = compile_triggers(stats, load_templates(cfg.templates), Fraction(str(cfg.min_success_rate)))
    _write(cfg.output_dir / "rules.json", rules_to_json(triggers))


def stage_replay(cfg: PipelineConfig) -> None:
    cfg.validate("corpus", "rules")
    triggers = rules_from_json(cfg.rules.read_text("utf-8"))
    messages = load_messages(cfg.corpus, cfg)
    labeled, _ = label_corpus(messages, cfg)
    _write(cfg.output_dir / "suggestions.jsonl", write_suggestions(replay(labeled, triggers)))


def run_irr(annotation_files: Sequence[Path]) -> list[Annotation]:
    """Load annotation files for an agreement report; raters may span files."""
    merged: list[Annotation] = []
    origin: dict[tuple[int, str], Path] = {}
    for path in annotation_files:
        if not path.is_file():
            raise ConfigError(f"annotations: file {path} does not exist")
        for a in load_annotations(path):
            key = (a.msg_id, a.annotator)
            if key in origin:
                raise DataError(f"rater {a.annotator!r} rates message {a.msg_id} in both {origin[key]} and {path}")
            origin[key] = path
            merged.append(a)
    return merged


PIPELINE = (("ingest", stage_ingest), ("annotate", stage_annotate), ("graph", stage_graph),
            ("patterns", stage_patterns), ("mine", stage_mine))


def stage_pipeline(cfg: PipelineConfig) -> None:
    cfg.validate("corpus")
    for name, stage in PIPELINE:
        log.info("stage %s", name)
        try:
            stage(cfg)
        except AffectflowError as exc:
            exc.args = (f"stage {name!r} failed: {exc}",)
            raise


# -- argument parsing ----------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", type=Path, help="flat TOML config; flags override it")
    p.add_argument("--out", dest="output_dir", help="output directory for artifacts")
    p.add_argument("--bot-users", nargs="+", dest="bot_users", help="raw user ids of game bots")
    p.add_argument("--lexicon", help="term,weight CSV (default: shipped lexicon)")
    p.add_argument("--emoji-table", dest="emoji_table", help="codepoint,name CSV (default: shipped table)")
    p.add_argument("--rule-table", dest="rule_table", help="strategy rule table JSON")
    p.add_argument("--templates", help="strategy -> template text JSON")
    p.add_argument("--max-gap-minutes", dest="max_gap_minutes", type=float)
    p.add_argument("--window", dest="antecedent_window", type=int, help="antecedent window k")
    p.add_argument("--min-success-rate", dest="min_success_rate", type=float)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="affectflow", description="Chat logs to emotion-regulation patterns.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="{" + ",".join(SUBCOMMANDS) + "}", parser_class=_Parser)

    p = sub.add_parser("ingest", parents=[common], help="parse, pseudonymize and normalize a chat log")
    p.add_argument("--corpus", help="raw JSONL chat log")
    p.add_argument("--emit-map", dest="emit_map", action="store_true", help="also write pseudonyms.csv")
    p.add_argument("--lenient", action="store_true", help="skip malformed lines instead of failing")

    p = sub.add_parser("annotate", parents=[common], help="label messages and segment episodes")
    p.add_argument("--annotations", nargs="+", help="gold annotation CSVs")

    p = sub.add_parser("irr", parents=[common], help="Fleiss' kappa over annotation files")
    p.add_argument("--annotations", nargs="+", required=True)
    p.add_argument("--dimension", choices=DIMENSIONS, default="combined")

    p = sub.add_parser("graph", parents=[common], help="directly-follows graphs per episode")
    p.add_argument("--min-freq", dest="min_freq", type=int)
    p.add_argument("--merge-episodes", dest="merge_episodes", action="store_true")
    p.add_argument("--color-instances", dest="color_instances", action="store_true")

    sub.add_parser("patterns", parents=[common], help="detect and classify regulation instances")
    sub.add_parser("mine", parents=[common], help="aggregate strategies and compile trigger rules")

    p = sub.add_parser("replay", parents=[common], help="replay a chat stream against trigger rules")
    p.add_argument("--rules", required=True, help="compiled rules.json")
    p.add_argument("--input", dest="corpus", required=True, help="normalized corpus or raw chat log")
    p.add_argument("--annotations", nargs="+", help="optional gold labels")
    p.add_argument("--lenient", action="store_true")

    p = sub.add_parser("pipeline", parents=[common], help="ingest -> annotate -> graph -> patterns -> mine")
    p.add_argument("--corpus")
    p.add_argument("--annotations", nargs="+")
    p.add_argument("--min-freq", dest="min_freq", type=int)
    p.add_argument("--merge-episodes", dest="merge_episodes", action="store_true")
    p.add_argument("--color-instances", dest="color_instances", action="store_true")
    p.add_argument("--emit-map", dest="emit_map", action="store_true")
    p.add_argument("--lenient", action="store_true")
    return parser


STAGES = {
    "ingest": stage_ingest,
    "annotate": stage_annotate,
    "graph": stage_graph,
    "patterns": stage_patterns,
    "mine": stage_mine,
    "replay": stage_replay,
    "pipeline": stage_pipeline,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = PipelineConfig.from_file(args.config) if args.config else PipelineConfig()
        cfg.override(args)
        if args.command == "irr":
            report = irr_report(run_irr([Path(p) for p in args.annotations]), args.dimension)
            print(json.dumps(report, indent=2))
            if args.output_dir:
                _write(cfg.output_dir / "irr.json", json.dumps(report, indent=2) + "\n")
        else:
            STAGES[args.command](cfg)
    except ConfigError as exc:
        log.error("%s", exc)
        return 1
    except DataError as exc:
        log.error("%s", exc)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
