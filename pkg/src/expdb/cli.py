"""Command-line experiment runner.

Configuration is an INI file (``key = value`` under ``[section]`` headers,
``;`` or ``#`` comments).  Recognized sections and keys are listed in
``CONFIG_KEYS``; an unknown key is a configuration error.  Every command
writes its CSVs into ``--out`` together with ``manifest.json``.

Exit codes: 0 success, 1 runtime failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import glob
import hashlib
import json
import logging
import os
import sys
import time
from typing import Optional, Sequence

from . import __version__, eedl, eerl, elc, ekb, sea
from .scenarios import census_like
from .synthdb import exact_cardinality, generate_table, write_table_csv
from .workload import featurize_many, generate_queries, random_templates, read_templates, write_templates

log = logging.getLogger("expdb")

SCENARIOS = ("eedl-cardinality", "eerl-index", "theorem-verify", "elc-bench")

CONFIG_KEYS = {
    "experiment": ("scenario", "seeds"),
    "data": ("rows", "template_count", "template_file"),
    "eedl": tuple(f.name for f in dataclasses.fields(eedl.EEDLConfig) if f.name not in ("seed", "demand_schedule")),
    "eerl": ("settings", "alpha", "beta", "w", "c1", "c2", "direction", "scale", "template_skew", "final_window")
    + tuple(f.name for f in dataclasses.fields(eerl.EERLConfig) if f.name not in ("seed", "demand_schedule")),
    "theorem": ("instances",),
    "bench": ("rows", "queries"),
}

DEFAULTS = {
    "data": {"rows": "30000", "template_count": "20"},
    "eerl": {"alpha": "0.2", "beta": "0", "w": "0", "c1": "0", "c2": "1", "direction": "decrease",
             "scale": "0.01", "template_skew": "1.0", "final_window": "500"},
    "theorem": {"instances": "10000"},
    "bench": {"rows": "100000", "queries": "10000"},
}


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"config error: {field_name}: {message}")
        self.field = field_name


class Config:
    """Validated view over the parsed INI file."""

    def __init__(self, parser: configparser.ConfigParser, base_dir: str):
        self.parser = parser
        self.base_dir = base_dir
        for section in parser.sections():
            if section not in CONFIG_KEYS:
                raise ConfigError(section, "unknown section")
            for key in parser[section]:
                if key not in CONFIG_KEYS[section]:
                    raise ConfigError(f"{section}.{key}", "unknown key")
        scenario = self.get("experiment", "scenario")
        if scenario is not None and scenario not in SCENARIOS:
            raise ConfigError("experiment.scenario", f"must be one of {', '.join(SCENARIOS)}")

    @classmethod
    def load(cls, path: Optional[str]) -> "Config":
        parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        if path is None:
            parser.read_dict({"experiment": {"seeds": "0"}})
            return cls(parser, os.getcwd())
        if not os.path.exists(path):
            raise ConfigError("--config", f"file not found: {path}")
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except configparser.Error as exc:
            raise ConfigError("--config", str(exc).splitlines()[0]) from None
        return cls(parser, os.path.dirname(os.path.abspath(path)))

    def get(self, section: str, key: str) -> Optional[str]:
        if self.parser.has_option(section, key):
            return self.parser.get(section, key).strip()
        return DEFAULTS.get(section, {}).get(key)

    def typed(self, section: str, key: str, kind):
        raw = self.get(section, key)
        if raw is None:
            return None
        try:
            return kind(raw)
        except ValueError:
            raise ConfigError(f"{section}.{key}", f"expected {kind.__name__}, got {raw!r}") from None

    def seeds(self, override: Optional[int]) -> list[int]:
        if override is not None:
            return [override]
        raw = self.get("experiment", "seeds")
        if raw is None:
            raise ConfigError("experiment.seeds", "missing")
        try:
            seeds = [int(s) for s in raw.replace(",", " ").split()]
        except ValueError:
            raise ConfigError("experiment.seeds", f"not a list of integers: {raw!r}") from None
        if not seeds or any(s < 0 for s in seeds):
            raise ConfigError("experiment.seeds", "need at least one nonnegative seed")
        return seeds

    def path(self, section: str, key: str) -> Optional[str]:
        raw = self.get(section, key)
        if raw is None:
            return None
        full = raw if os.path.isabs(raw) else os.path.join(self.base_dir, raw)
        if not os.path.exists(full):
            raise ConfigError(f"{section}.{key}", f"file not found: {raw}")
        return full

    def fill(self, section: str, cls, **fixed):
        """Dataclass instance with fields overridden from ``section``."""
        values = dict(fixed)
        for f in dataclasses.fields(cls):
            if f.name in fixed or not self.parser.has_option(section, f.name):
                continue
            kind = type(f.default) if f.default is not dataclasses.MISSING else str
            values[f.name] = self.typed(section, f.name, kind)
        obj = cls(**values)
        try:
            obj.validate()
        except ValueError as exc:
            raise ConfigError(section, str(exc)) from None
        return obj

    def canonical(self) -> str:
        lines = []
        for section in sorted(self.parser.sections()):
            for key in sorted(self.parser[section]):
                lines.append(f"{section}.{key}={self.parser.get(section, key).strip()}")
        return "\n".join(lines)


def write_manifest(out: str, command: str, config: Config, seeds: Sequence[int]) -> None:
    files = sorted(
        os.path.relpath(p, out)
        for p in glob.glob(os.path.join(out, "**", "*"), recursive=True)
        if os.path.isfile(p) and not p.endswith("manifest.json")
    )
    manifest = {
        "command": command,
        "config_sha256": hashlib.sha256(config.canonical().encode()).hexdigest(),
        "files": files,
        "seeds": list(seeds),
        "version": f"v{__version__}",
    }
    with open(os.path.join(out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# commands


def _census(config: Config, seed: int):
    rows = config.typed("data", "rows", int)
    if rows < 1:
        raise ConfigError("data.rows", "must be positive")
    table = generate_table(census_like(rows), seed)
    path = config.path("data", "template_file")
    if path is not None:
        templates = read_templates(path, table.name)
        for t in templates:
            t.check(table.spec)
    else:
        templates = random_templates(table.spec, config.typed("data", "template_count", int), seed)
    return table, templates


def cmd_gen_data(config: Config, seeds, out: str) -> int:
    for seed in seeds:
        table, templates = _census(config, seed)
        write_table_csv(table, os.path.join(out, f"census_{seed}.csv"))
        write_templates(os.path.join(out, f"census_templates_{seed}.txt"), templates)
    return 0


def cmd_label(config: Config, seeds, out: str) -> int:
    size = config.typed("eedl", "pretrain_size", int) or eedl.EEDLConfig.pretrain_size
    for seed in seeds:
        table, templates = _census(config, seed)
        rule = ekb.match_method(ekb.default_kb(), eedl.CARDINALITY_DEMAND).bind(table)
        ts = elc.collect_labels(elc.CardinalityTask(table), None, rule, templates, size, seed)
        elc.write_training_set(ts, os.path.join(out, f"training_set_{seed}.csv"))
        print(f"seed {seed}: {len(ts)} examples {ts.provenance_mix()} waiting={ts.waiting}")
    return 0


def cmd_eedl(config: Config, seeds, out: str) -> int:
    for seed in seeds:
        table, templates = _census(config, seed)
        cfg = config.fill("eedl", eedl.EEDLConfig, seed=seed)
        res = eedl.run_cardinality_experiment(table, templates, cfg)
        sub = os.path.join(out, f"seed_{seed}")
        os.makedirs(sub, exist_ok=True)
        eedl.write_records(res.records, os.path.join(sub, "online_records.csv"))
        eedl.write_history(res.history, os.path.join(sub, "retrain_history.csv"))
        first, last = res.history[0], res.history[-1]
        print(
            f"seed {seed}: median q-error {first['model_median']:.3f} -> {last['model_median']:.3f} "
            f"over {len(res.history) - 1} retrains"
        )
    return 0


def _eerl_settings(config: Config) -> list[eerl.ExplorationSchedule]:
    common = dict(
        w=config.typed("eerl", "w", float),
        c1=config.typed("eerl", "c1", int),
        c2=config.typed("eerl", "c2", int),
        direction=config.get("eerl", "direction"),
    )
    raw = config.get("eerl", "settings")
    if raw:
        pairs = []
        for item in raw.replace(",", " ").split():
            try:
                a, b = (float(v) for v in item.split(":"))
            except ValueError:
                raise ConfigError("eerl.settings", f"expected alpha:beta, got {item!r}") from None
            pairs.append((a, b))
    else:
        pairs = [(config.typed("eerl", "alpha", float), config.typed("eerl", "beta", float))]
    try:
        return [eerl.ExplorationSchedule(a, b, **common) for a, b in pairs]
    except ValueError as exc:
        raise ConfigError("eerl", str(exc)) from None


def cmd_eerl(config: Config, seeds, out: str) -> int:
    schedules = _eerl_settings(config)
    scale = config.typed("eerl", "scale", float)
    skew = config.typed("eerl", "template_skew", float)
    last = config.typed("eerl", "final_window", int)
    summary = []
    for seed in seeds:
        cfg = config.fill("eerl", eerl.EERLConfig, seed=seed)
        env = eerl.make_index_env(seed, scale, cfg.budget, template_skew=skew)
        for sched in schedules:
            hist = eerl.run_index_experiment(sched, cfg, env=env)
            eerl.write_history(hist, os.path.join(out, eerl.history_filename(sched.alpha0, sched.beta, seed)))
            final = hist.final_mean(last) if len(hist) else float("nan")
            summary.append((sched.alpha0, sched.beta, seed, final))
            print(f"alpha={sched.alpha0:g} beta={sched.beta:g} seed={seed}: final Q-cost {final:.4f}")
    with open(os.path.join(out, "eerl_summary.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["alpha", "beta", "seed", "final_q_cost"])
        for a, b, s, f in summary:
            w.writerow([repr(a), repr(b), s, repr(f)])
    return 0


def cmd_verify_theorem(config: Config, seeds, out: str) -> int:
    n = config.typed("theorem", "instances", int)
    rows = []
    for seed in seeds:
        rows.extend(sea.theorem_report([sea.tight_instance()] + sea.sample_instances(n, seed)))
    fields = list(rows[0])
    with open(os.path.join(out, "theorem_report.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for r in rows:
            w.writerow([repr(r[k]) if isinstance(r[k], float) else r[k] for k in fields])
    violations = sum(1 for r in rows if not r["ok"])
    print(f"{len(rows)} instances, {violations} violations")
    return 0 if violations == 0 else 1


def elc_bench(rows: int, queries: int, seed: int) -> dict:
    """Time rule labeling against execution labeling of the same query batch.

    Only the label computation is timed; featurizing and wrapping examples is
    the same work on both paths and happens afterwards.
    """
    table = generate_table(census_like(rows), seed)
    templates = random_templates(table.spec, 20, seed)
    batch = generate_queries(templates, table, queries, seed + 1)
    rule = ekb.match_method(ekb.default_kb(), eedl.CARDINALITY_DEMAND).bind(table)
    t0 = time.perf_counter()
    rule_labels = rule.estimate_many(batch)
    t1 = time.perf_counter()
    exec_labels = [exact_cardinality(table, q) for q in batch]
    t2 = time.perf_counter()
    feats = featurize_many(batch, table.spec)
    by_rule = [elc.LabeledExample(f, float(y), "rule", q) for f, y, q in zip(feats, rule_labels, batch)]
    by_exec = [elc.LabeledExample(f, float(y), "execution", q) for f, y, q in zip(feats, exec_labels, batch)]
    rule_s, exec_s = t1 - t0, t2 - t1
    return {
        "rows": rows,
        "queries": queries,
        "rule_seconds": rule_s,
        "execution_seconds": exec_s,
        "ratio": exec_s / max(rule_s, 1e-12),
        "labels": [(q, r.label, e.label) for q, r, e in zip(batch, by_rule, by_exec)],
    }


def cmd_elc_bench(config: Config, seeds, out: str) -> int:
    rows = config.typed("bench", "rows", int)
    queries = config.typed("bench", "queries", int)
    timings = []
    for seed in seeds:
        res = elc_bench(rows, queries, seed)
        with open(os.path.join(out, f"elc_labels_{seed}.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["query", "rule_label", "execution_label"])
            for q, r, e in res["labels"]:
                w.writerow([q.to_line(), repr(r), repr(e)])
        timing = {k: v for k, v in res.items() if k != "labels"}
        timing["seed"] = seed
        timings.append(timing)
        print(
            f"seed {seed}: rule {res['rule_seconds']:.3f}s, execution {res['execution_seconds']:.3f}s, "
            f"ratio {res['ratio']:.1f}"
        )
    # wall times vary run to run, so they stay out of the CSV outputs
    with open(os.path.join(out, "elc_bench_timing.json"), "w") as fh:
        json.dump(timings, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return 0


PLOT_STUB = '''"""Plot the CSVs in this directory (needs matplotlib)."""
import csv, glob, os
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))

for path in sorted(glob.glob(os.path.join(here, "seed_*", "retrain_history.csv"))):
    rows = list(csv.DictReader(open(path)))
    x = [int(r["window"]) for r in rows]
    for key in ("model_median", "model_mean", "model_p99"):
        plt.plot(x, [float(r[key]) for r in rows], label=f"{os.path.basename(os.path.dirname(path))} {key}")
if plt.gca().lines:
    plt.xlabel("retrain window"); plt.ylabel("q-error"); plt.yscale("log"); plt.legend()
    plt.savefig(os.path.join(here, "eedl_qerror.png")); plt.clf()

for path in sorted(glob.glob(os.path.join(here, "rl_history_*.csv"))):
    rows = list(csv.DictReader(open(path)))
    plt.plot([int(r["iter"]) for r in rows], [float(r["q_cost"]) for r in rows],
             label=os.path.basename(path)[len("rl_history_"):-4], linewidth=0.7)
if plt.gca().lines:
    plt.xlabel("iteration"); plt.ylabel("Q-cost"); plt.legend()
    plt.savefig(os.path.join(here, "eerl_qcost.png"))
'''


def cmd_report(config: Config, seeds, out: str) -> int:
    lines = []
    for path in sorted(glob.glob(os.path.join(out, "seed_*", "retrain_history.csv"))):
        with open(path) as fh:
            rows = list(csv.DictReader(fh))
        medians = " ".join(f"{float(r['model_median']):.3f}" for r in rows)
        lines.append(f"{os.path.relpath(path, out)}: model median by window {medians}")
    summary = os.path.join(out, "eerl_summary.csv")
    if os.path.exists(summary):
        with open(summary) as fh:
            for r in csv.DictReader(fh):
                lines.append(
                    f"eerl alpha={float(r['alpha']):g} beta={float(r['beta']):g} seed={r['seed']}: "
                    f"final Q-cost {float(r['final_q_cost']):.4f}"
                )
    theorem = os.path.join(out, "theorem_report.csv")
    if os.path.exists(theorem):
        with open(theorem) as fh:
            rows = list(csv.DictReader(fh))
        bad = sum(1 for r in rows if r["ok"] != "1")
        lines.append(f"theorem: {len(rows)} instances, {bad} violations")
    with open(os.path.join(out, "report.txt"), "w") as fh:
        fh.write("\n".join(lines) + ("\n" if lines else ""))
    with open(os.path.join(out, "plot_figures.py"), "w") as fh:
        fh.write(PLOT_STUB)
    print("\n".join(lines) if lines else "nothing to report")
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "label": cmd_label,
    "eedl": cmd_eedl,
    "eerl": cmd_eerl,
    "verify-theorem": cmd_verify_theorem,
    "elc-bench": cmd_elc_bench,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="expdb", description="Experience-enhanced learning experiments")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI configuration file")
        p.add_argument("--seed", type=int, help="run this seed only, overriding experiment.seeds")
        p.add_argument("--out", default="out", help="output directory (default: ./out)")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        config = Config.load(args.config)
        if args.seed is not None and args.seed < 0:
            raise ConfigError("--seed", "must be nonnegative")
        seeds = config.seeds(args.seed)
        os.makedirs(args.out, exist_ok=True)
        status = COMMANDS[args.command](config, seeds, args.out)
        write_manifest(args.out, args.command, config, seeds)
        return status
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - any runtime failure maps to exit 1
        log.debug("failure", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
