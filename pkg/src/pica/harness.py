"""Command-line experiment runner, results CSV and plot-data emission."""

import argparse
import csv
import glob
import io
import json
import os
import sys
import tempfile
from collections import OrderedDict, defaultdict
from dataclasses import dataclass

from .errors import CsvSchemaError, ParameterError, PicaError
from .metrics import summarize
from .netsim import METHODS, ChainConfig, SyntheticDataset, TrialResult, WavDataset, run_scenario
from .progressive import EXIT_REASONS, NodeReport, PicaParams

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_IO = 4
EXIT_RUN = 5

CSV_COLUMNS = (
    "method",
    "k",
    "mu0",
    "alpha0",
    "tol",
    "p_break",
    "link_delay",
    "trial_seed",
    "t_p_seconds",
    "weighted_work",
    "server_share",
    "mean_sdr",
    "sdr_per_source",
    "hops",
    "error",
)

FIGURE_FILES = ("time_vs_nodes.dat", "time_vs_mu0.dat", "sdr_vs_method.dat", "node_costs.dat")


# -- CSV schema --------------------------------------------------------------

def _pack_report(r):
    cos = "" if r.cosine_distance is None else repr(r.cosine_distance)
    return ":".join([str(r.hop), str(r.iterations), str(r.samples_used), r.exit_reason,
                     repr(r.wall_time), repr(r.final_scalar), cos])


def _unpack_report(text):
    parts = text.split(":")
    if len(parts) != 7:
        raise ValueError(f"hop entry {text!r} needs 7 ':'-separated fields")
    hop, iterations, samples, reason, wall, scalar, cos = parts
    if reason not in EXIT_REASONS:
        raise ValueError(f"unknown exit reason {reason!r}")
    return NodeReport(
        hop=int(hop), exit_reason=reason, iterations=int(iterations),
        samples_used=int(samples), wall_time=float(wall), final_scalar=float(scalar),
        cosine_distance=float(cos) if cos else None,
    )


def result_to_row(result):
    return {
        "method": result.method,
        "k": str(result.k),
        "mu0": repr(result.mu0),
        "alpha0": repr(result.alpha0),
        "tol": repr(result.tol),
        "p_break": repr(result.p_break),
        "link_delay": repr(result.link_delay),
        "trial_seed": str(result.trial_seed),
        "t_p_seconds": repr(result.total_processing_time),
        "weighted_work": str(result.weighted_work),
        "server_share": repr(result.server_share),
        "mean_sdr": repr(result.mean_sdr),
        "sdr_per_source": ";".join(repr(v) for v in result.sdr),
        "hops": ";".join(_pack_report(r) for r in result.node_reports),
        "error": result.error or "",
    }


def row_to_result(row):
    """Inverse of :func:`result_to_row`; derived columns are not read back."""
    return TrialResult(
        method=row["method"],
        trial_seed=int(row["trial_seed"]),
        k=int(row["k"]),
        mu0=float(row["mu0"]),
        alpha0=float(row["alpha0"]),
        tol=float(row["tol"]),
        p_break=float(row["p_break"]),
        link_delay=float(row["link_delay"]),
        node_reports=tuple(_unpack_report(h) for h in row["hops"].split(";") if h),
        total_processing_time=float(row["t_p_seconds"]),
        sdr=tuple(float(v) for v in row["sdr_per_source"].split(";") if v),
        mean_sdr=float(row["mean_sdr"]),
        error=row["error"] or None,
    )


def write_results_csv(results, path):
    """Write atomically: a temp file in the target directory, then rename."""
    parent = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".pica-", suffix=".csv", dir=parent)
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
            writer.writeheader()
            for result in results:
                writer.writerow(result_to_row(result))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_results_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise CsvSchemaError("empty file", line=1)
        missing = [c for c in CSV_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise CsvSchemaError(f"missing columns {missing}", line=1)
        results = []
        for row in reader:
            try:
                if None in row or any(row[c] is None for c in CSV_COLUMNS):
                    raise ValueError("wrong number of fields")
                results.append(row_to_result(row))
            except (ValueError, KeyError) as exc:
                raise CsvSchemaError(str(exc), line=reader.line_num) from exc
    if not results:
        raise CsvSchemaError("no data rows", line=2)
    return results


# -- figure data -------------------------------------------------------------

def _series_block(out, title, points):
    out.write(f"# {title}\n")
    for x, values in points:
        s = summarize(values)
        out.write(f"{x:g} {s.mean:.9g} {s.ci95_low:.9g} {s.ci95_high:.9g}\n")
    out.write("\n")


def _grouped(results, block_key, x_key, value):
    blocks = OrderedDict()
    for r in results:
        blocks.setdefault(block_key(r), defaultdict(list))[x_key(r)].append(value(r))
    return blocks


def figure_data(results):
    """Return ``{filename: text}`` for the four plot-data files.

    Each file holds gnuplot-style blocks (``# title`` then rows of
    ``x mean ci_low ci_high``) separated by blank lines.
    """
    ok = [r for r in results if r.error is None]
    if not ok:
        raise CsvSchemaError("no successful trials to plot")
    texts = {}

    specs = {
        "time_vs_nodes.dat": (lambda r: f"method={r.method} mu0={r.mu0:g}", lambda r: r.k,
                              lambda r: 1e3 * r.total_processing_time, "x=k y=t_p[ms]"),
        "time_vs_mu0.dat": (lambda r: f"method={r.method} k={r.k}", lambda r: r.mu0,
                            lambda r: 1e3 * r.total_processing_time, "x=mu0 y=t_p[ms]"),
        "sdr_vs_method.dat": (lambda r: f"method={r.method}", lambda r: r.k,
                              lambda r: r.mean_sdr, "x=k y=mean SDR[dB]"),
    }
    for name, (block_key, x_key, value, columns) in specs.items():
        out = io.StringIO()
        out.write(f"# {columns} ci95_low ci95_high\n")
        for title, series in _grouped(ok, block_key, x_key, value).items():
            _series_block(out, title, sorted(series.items()))
        texts[name] = out.getvalue()

    # Per-hop weighted work; hops that only forwarded count as zero.
    out = io.StringIO()
    out.write("# x=hop y=weighted work (iterations x samples) ci95_low ci95_high\n")
    chains = OrderedDict()
    for r in ok:
        if r.method == "pica":
            chains.setdefault((r.k, r.mu0), []).append(r)
    for (k, mu0), trials in chains.items():
        points = []
        for hop in range(1, k + 2):
            work = []
            for r in trials:
                by_hop = {rep.hop: rep.weighted_work for rep in r.node_reports}
                work.append(by_hop.get(hop, 0))
            points.append((hop, work))
        _series_block(out, f"method=pica k={k} mu0={mu0:g}", points)
    texts["node_costs.dat"] = out.getvalue()
    return texts


def emit_figures(results_csv, out_dir=None):
    """Write the plot-data files next to ``results_csv``; return their paths."""
    texts = figure_data(read_results_csv(results_csv))
    out_dir = out_dir or os.path.dirname(os.path.abspath(results_csv))
    paths = []
    for name in FIGURE_FILES:
        path = os.path.join(out_dir, name)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(texts[name])
        paths.append(path)
    return paths


# -- configuration -----------------------------------------------------------

class ConfigError(PicaError):
    """Unreadable config file or invalid experiment settings."""


@dataclass
class ExperimentConfig:
    methods: tuple = METHODS
    nodes: tuple = (0, 3, 7, 10, 15)
    mu0: tuple = (4130.0,)
    alpha0: float = 2.0
    tol: float = 1e-4
    p_break: float = 0.7
    max_iter: int = 200
    trials: int = 50
    seed: int = 0
    samples: int = 160000
    wav_dir: str = None
    link_delay: float = 0.0
    out: str = "results.csv"
    emit_figures: bool = False

    def validate(self):
        if not self.methods or not self.nodes or not self.mu0:
            raise ParameterError("method, nodes and mu0 grids must be nonempty")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ParameterError(f"unknown methods {sorted(unknown)}")
        if self.trials < 1:
            raise ParameterError("trials must be >= 1")
        if any(k < 0 for k in self.nodes):
            raise ParameterError("node counts must be >= 0")
        # PicaParams / ChainConfig validate the numeric ranges.
        for mu0 in self.mu0:
            PicaParams(tol=self.tol, grad_threshold=self.p_break,
                       max_local_iter=self.max_iter, mu0=mu0, alpha0=self.alpha0)
        ChainConfig(link_delay=self.link_delay)

    def dataset(self):
        if self.wav_dir:
            if not os.path.isdir(self.wav_dir):
                raise ParameterError(f"{self.wav_dir}: not a directory")
            return WavDataset(tuple(sorted(glob.glob(os.path.join(self.wav_dir, "*.wav")))))
        return SyntheticDataset(n=4, m=self.samples)

    def chain_configs(self):
        return [
            ChainConfig(
                k=k,
                params=PicaParams(tol=self.tol, grad_threshold=self.p_break,
                                  max_local_iter=self.max_iter, mu0=mu0, alpha0=self.alpha0),
                link_delay=self.link_delay,
                seed=self.seed,
            )
            for mu0 in self.mu0
            for k in self.nodes
        ]


def _csv_list(convert):
    def parse(text):
        if isinstance(text, (list, tuple)):
            items = list(text)
        elif isinstance(text, (int, float)):
            items = [text]
        else:
            items = [t for t in str(text).split(",") if t.strip()]
        try:
            return tuple(convert(t.strip() if isinstance(t, str) else t) for t in items)
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None

    return parse


_CONVERTERS = {
    "method": ("methods", _csv_list(str)),
    "nodes": ("nodes", _csv_list(int)),
    "mu0": ("mu0", _csv_list(float)),
    "alpha0": ("alpha0", float),
    "tol": ("tol", float),
    "p_break": ("p_break", float),
    "max_iter": ("max_iter", int),
    "trials": ("trials", int),
    "seed": ("seed", int),
    "samples": ("samples", int),
    "wav_dir": ("wav_dir", str),
    "synthetic": ("synthetic", bool),
    "link_delay": ("link_delay", float),
    "out": ("out", str),
    "emit_figures": ("emit_figures", bool),
}


def build_parser():
    p = argparse.ArgumentParser(
        prog="pica",
        description="Simulate progressive ICA on a forwarding chain and compare with FastICA.",
    )
    S = argparse.SUPPRESS
    p.add_argument("--method", type=_csv_list(str), default=S, help="comma list of pica,fastica")
    p.add_argument("--nodes", type=_csv_list(int), default=S, help="comma list of intermediate-node counts")
    p.add_argument("--mu0", type=_csv_list(float), default=S, help="comma list of initial sampling steps")
    p.add_argument("--alpha0", type=float, default=S)
    p.add_argument("--tol", type=float, default=S)
    p.add_argument("--p-break", dest="p_break", type=float, default=S)
    p.add_argument("--max-iter", dest="max_iter", type=int, default=S,
                   help="per-node Newton iteration cap (server and baseline get 10x)")
    p.add_argument("--trials", type=int, default=S)
    p.add_argument("--seed", type=int, default=S)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--synthetic", action="store_true", default=S)
    src.add_argument("--wav-dir", dest="wav_dir", default=S)
    p.add_argument("--samples", type=int, default=S, help="samples per synthetic source")
    p.add_argument("--link-delay", dest="link_delay", type=float, default=S, help="seconds per hop")
    p.add_argument("--out", default=S, help="results CSV path")
    p.add_argument("--config", default=None, help="JSON file with the same keys as the flags")
    p.add_argument("--emit-figures", dest="emit_figures", action="store_true", default=S)
    return p


def load_config_file(path):
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    values = {}
    for key, value in raw.items():
        norm = key.lstrip("-").replace("-", "_")
        if norm not in _CONVERTERS:
            raise ConfigError(f"config {path}: unknown key {key!r}")
        convert = _CONVERTERS[norm][1]
        try:
            values[norm] = convert(value)
        except (ValueError, TypeError, argparse.ArgumentTypeError) as exc:
            raise ConfigError(f"config {path}: bad value for {key!r}: {exc}") from exc
    return values


def resolve_config(args):
    """Defaults, overridden by the config file, overridden by CLI flags."""
    merged = {}
    if args.config:
        merged.update(load_config_file(args.config))
    merged.update({k: v for k, v in vars(args).items() if k != "config"})
    cfg = ExperimentConfig()
    for key, value in merged.items():
        if key == "synthetic":
            if value:
                cfg.wav_dir = None
            continue
        setattr(cfg, _CONVERTERS[key][0], value)
    try:
        cfg.validate()
    except ParameterError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def summary_table(results):
    groups = OrderedDict()
    for r in results:
        groups.setdefault((r.method, r.k, r.mu0), []).append(r)
    lines = [f"{'method':<8} {'k':>3} {'mu0':>8} {'trials':>6} {'failed':>6} "
             f"{'t_p[ms]':>9} {'SDR[dB]':>8} {'SDR ci95':>17} {'work':>10} {'server%':>7}"]
    for (method, k, mu0), group in groups.items():
        ok = [r for r in group if r.error is None]
        if ok:
            s = summarize([r.mean_sdr for r in ok])
            tp = summarize([1e3 * r.total_processing_time for r in ok]).mean
            work = summarize([r.weighted_work for r in ok]).mean
            share = 100 * summarize([r.server_share for r in ok]).mean
            cells = f"{tp:9.2f} {s.mean:8.2f} [{s.ci95_low:6.2f},{s.ci95_high:7.2f}] {work:10.0f} {share:7.1f}"
        else:
            cells = f"{'nan':>9} {'nan':>8} {'':>17} {'nan':>10} {'nan':>7}"
        lines.append(f"{method:<8} {k:>3} {mu0:>8g} {len(group):>6} {len(group) - len(ok):>6} {cells}")
    return "\n".join(lines)


def run_cli(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE

    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"pica: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    parent = os.path.dirname(os.path.abspath(cfg.out))
    if not os.path.isdir(parent) or not os.access(parent, os.W_OK):
        print(f"pica: output error: directory {parent} does not exist or is not writable",
              file=sys.stderr)
        return EXIT_IO

    try:
        dataset = cfg.dataset()
        if cfg.wav_dir:
            dataset.sources(cfg.seed)  # fail fast on unreadable input
        configs = cfg.chain_configs()
        results = []
        for method in cfg.methods:
            results.extend(run_scenario(method, dataset, configs, cfg.trials))
    except PicaError as exc:
        print(f"pica: input error: {exc}", file=sys.stderr)
        return EXIT_RUN

    try:
        write_results_csv(results, cfg.out)
    except OSError as exc:
        print(f"pica: output error: cannot write {cfg.out}: {exc.strerror}", file=sys.stderr)
        return EXIT_IO

    print(summary_table(results))
    failed = sum(r.error is not None for r in results)
    if failed:
        print(f"{failed} trial(s) failed; see the error column in {cfg.out}", file=sys.stderr)

    if cfg.emit_figures:
        try:
            for path in emit_figures(cfg.out):
                print(f"wrote {path}")
        except CsvSchemaError as exc:
            print(f"pica: figure error: {exc}", file=sys.stderr)
            return EXIT_RUN
    return EXIT_OK


def main():
    sys.exit(run_cli())
