"""Command-line entry point: ``userfair <subcommand>``.

Exit codes: 0 success, 1 runtime or I/O failure, 2 usage error.
Primary artifacts go to stdout (or ``--out``); logs go to stderr.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import shutil
import sys
from importlib import resources
from pathlib import Path

import click
import yaml

from userfair import dataio, neighbors
from userfair.common import DataError, UndefinedError, format_value
from userfair.effmetrics import format_run, load_run, run_items
from userfair.fairmetrics import FAIRNESS_MEASURES, FairnessReport, full_report
from userfair.labs import agreement_matrix, bench, extreme_case, relevance_sweep, similarity_sweep
from userfair.labs.sweeps import DEFAULT_LAMBDAS
from userfair.synth import synthetic_log, synthetic_split

log = logging.getLogger("userfair")

EXIT_HELP = """\b
Exit codes:
  0  success
  1  runtime or I/O error (bad data, missing file, undefined statistic)
  2  usage error (unknown flag, missing or conflicting options)
"""

FIXTURE = "fixture_200.tsv"


def _load_config(ctx: click.Context, _param, value):
    if value is None:
        return None
    path = Path(value)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise click.BadParameter(f"cannot read config: {exc}") from None
    try:
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise click.BadParameter(f"cannot parse config: {exc}") from None
    if not isinstance(data, dict):
        raise click.BadParameter("config must be a mapping")
    ctx.default_map = {**(ctx.default_map or {}), **_config_defaults(ctx.command, data)}
    return value


def _config_defaults(cmd: click.Command, data: dict) -> dict:
    """Translate flag spellings (``format``, ``rating-threshold``) to parameter names."""
    names = {}
    for p in cmd.params:
        names[p.name] = p.name
        for opt in p.opts:
            names[opt.lstrip("-").replace("-", "_")] = p.name
    subs = getattr(cmd, "commands", {})
    out = {}
    for key, val in data.items():
        key = str(key)
        if key in subs and isinstance(val, dict):
            out[key] = _config_defaults(subs[key], val)
            continue
        name = names.get(key.replace("-", "_"))
        if name is None:
            raise click.BadParameter(f"unknown config key {key!r} for {cmd.name}")
        out[name] = val
    return out


class _Group(click.Group):
    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except (DataError, UndefinedError, ValueError, OSError) as exc:
            raise click.ClickException(f"{type(exc).__name__}: {exc}") from None


def _emit(text: str, out: str | None) -> None:
    if out is None or out == "-":
        click.echo(text, nl=False)
        return
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    Path(out).write_text(text, encoding="utf-8")
    log.info("wrote %s", out)


def _parse_ratios(text: str) -> tuple[float, float, float]:
    try:
        parts = [float(p) for p in text.split(":")]
    except ValueError:
        raise click.BadParameter(f"expected A:B:C, got {text!r}") from None
    if len(parts) != 3 or any(p < 0 for p in parts) or sum(parts) <= 0:
        raise click.BadParameter(f"expected three non-negative numbers A:B:C, got {text!r}")
    total = sum(parts)
    return parts[0] / total, parts[1] / total, parts[2] / total


def _parse_floats(text: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(p) for p in text.split(",") if p.strip())
    except ValueError:
        raise click.BadParameter(f"expected comma-separated numbers, got {text!r}") from None
    if not vals or any(v <= 0 for v in vals):
        raise click.BadParameter("shape parameters must be positive")
    return vals


def _split_data(train: str | None, test: str | None, users: int, items: int, seed: int):
    if (train is None) != (test is None):
        raise click.UsageError("--train and --test must be given together")
    if train is None:
        log.info("no data given; using a synthetic split (%d users, %d items, seed %d)", users, items, seed)
        return synthetic_split(users, items, seed)
    return dataio.shared_datasets(dataio.load_split_file(train), dataio.load_split_file(test))


def _trace_out(trace, out_dir: str | None) -> None:
    if out_dir:
        csv_path, json_path = trace.save(out_dir)
        log.info("wrote %s and %s", csv_path, json_path)
    click.echo(trace.to_csv(), nl=False)


_common_k = click.option("--k", "k", type=click.IntRange(1), default=10, show_default=True, help="Ranking cutoff.")
_common_seed = click.option("--seed", type=int, default=0, show_default=True, help="Random seed.")
_common_eps = click.option(
    "--epsilon", type=click.FloatRange(0), default=0.05, show_default=True, help="Envy threshold for PEU."
)


@click.group(cls=_Group, epilog=EXIT_HELP, context_settings={"help_option_names": ["-h", "--help"]})
@click.option(
    "--config",
    type=click.Path(dir_okay=False),
    callback=_load_config,
    is_eager=True,
    expose_value=False,
    help="JSON or YAML file of option defaults; top-level keys for global options, one mapping per subcommand. Flags win.",
)
@click.option("--threads", type=click.IntRange(1), default=1, show_default=True, help="Worker threads; results do not depend on it.")
@click.option("--quiet", is_flag=True, help="Only warnings and errors on stderr.")
@click.version_option(package_name="artifact")
@click.pass_context
def main(ctx: click.Context, threads: int, quiet: bool) -> None:
    """Individual user fairness evaluation for top-k recommendation runs.

    Every option can also be set through an environment variable named
    USERFAIR_<SUBCOMMAND>_<OPTION>, e.g. USERFAIR_EVAL_K=5 or USERFAIR_THREADS=4.
    """
    logging.basicConfig(
        level=logging.WARNING if quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )
    ctx.obj = {"threads": threads}


@main.command()
@click.option("--input", "input_path", required=True, type=click.Path(dir_okay=False), help="Raw interaction file with a header row.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False), help="Directory for train/valid/test.tsv and stats.json.")
@click.option("--user-col", default="user", show_default=True)
@click.option("--item-col", default="item", show_default=True)
@click.option("--rating-col", default=None, help="Rating column (optional).")
@click.option("--ts-col", default=None, help="Timestamp column (optional; required for temporal splits).")
@click.option("--delimiter", type=click.Choice(["auto", "tab", "comma"]), default="auto", show_default=True)
@click.option("--rating-threshold", type=float, default=None, help="Keep ratings >= this value (e.g. 3.0); default keeps all.")
@click.option("--min-interactions", type=click.IntRange(1), default=5, show_default=True, help="k-core threshold for users and items.")
@click.option("--split", "split_mode", type=click.Choice(["temporal", "random"]), default="temporal", show_default=True)
@click.option("--ratios", default="6:2:2", show_default=True, help="train:validation:test proportions.")
@click.option("--min-train", type=click.IntRange(1), default=5, show_default=True, help="Drop users with fewer train interactions.")
@_common_seed
def prep(input_path, out_dir, user_col, item_col, rating_col, ts_col, delimiter, rating_threshold, min_interactions, split_mode, ratios, min_train, seed):
    """Dedup, threshold, k-core filter and split a raw log; prints stats JSON."""
    if split_mode == "temporal" and ts_col is None:
        raise click.UsageError("--split temporal needs --ts-col")
    delim = {"auto": None, "tab": "\t", "comma": ","}[delimiter]
    fmt = dataio.ColumnFormat(user_col, item_col, rating_col, ts_col, delim)
    raw = dataio.load_interactions(input_path, fmt)
    ds = dataio.preprocess(raw, rating_threshold, min_interactions)
    parts = dataio.split(ds, split_mode, _parse_ratios(ratios), seed, min_train)
    stats = parts.write(out_dir)
    click.echo(json.dumps(stats, indent=2, sort_keys=True))


@main.command()
@click.option("--train", "train_path", required=True, type=click.Path(dir_okay=False), help="Train split file.")
@click.option("--flavor", type=click.Choice(["user", "item"]), default="user", show_default=True, help="U-KNN or I-KNN.")
@click.option("--neighbors", "n_neighbors", type=click.IntRange(1), default=50, show_default=True, help="Neighbourhood size K.")
@click.option("--cutoff", type=click.IntRange(1), default=10, show_default=True, help="Items per list.")
@click.option("--out", default=None, help="Run file path (default stdout).")
@click.pass_obj
def recommend(obj, train_path, flavor, n_neighbors, cutoff, out):
    """Produce a KNN run file (user, item, rank, score)."""
    (train,) = dataio.shared_datasets(dataio.load_split_file(train_path))
    run = neighbors.recommend(train, neighbors.KnnConfig(flavor, n_neighbors, cutoff), obj["threads"])
    _emit(format_run(run, train.user_ids(), train.item_ids()), out)


@main.command("eval")
@click.option("--run", "run_path", required=True, type=click.Path(dir_okay=False), help="Run file.")
@click.option("--test", "test_path", required=True, type=click.Path(dir_okay=False), help="Test split file.")
@click.option("--train", "train_path", required=True, type=click.Path(dir_okay=False), help="Train split file.")
@_common_k
@_common_eps
@click.option("--no-validate", is_flag=True, help="Allow lists that contain the user's train items.")
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="json", show_default=True)
@click.option("--name", default=None, help="Run name stored in the report (default: run file stem).")
@click.option("--out", default=None, help="Output path (default stdout).")
@click.pass_obj
def eval_cmd(obj, run_path, test_path, train_path, k, epsilon, no_validate, fmt, name, out):
    """Fairness report (12 measures plus mean effectiveness) for one run."""
    train, test = dataio.shared_datasets(
        dataio.load_split_file(train_path), dataio.load_split_file(test_path), extra_items=run_items(run_path)
    )
    run = load_run(run_path, train.user_index, train.item_index)
    if k > run.k:
        raise click.UsageError(f"--k {k} exceeds the run's list length {run.k}")
    prov = {"run": name or Path(run_path).stem, "dataset": Path(test_path).stem}
    report = full_report(run, test, train, k, epsilon, obj["threads"], not no_validate, prov)
    if fmt == "json":
        _emit(report.to_json(), out)
        return
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(report.csv_header())
    w.writerow(report.csv_row())
    _emit(buf.getvalue(), out)


_data_opts = [
    click.option("--train", "train_path", type=click.Path(dir_okay=False), default=None, help="Train split file (omit for synthetic data)."),
    click.option("--test", "test_path", type=click.Path(dir_okay=False), default=None, help="Test split file (omit for synthetic data)."),
    click.option("--users", type=click.IntRange(3), default=1000, show_default=True, help="Synthetic user count."),
    click.option("--items", type=click.IntRange(20), default=2000, show_default=True, help="Synthetic item count."),
    click.option("--out-dir", default=None, type=click.Path(file_okay=False), help="Also save CSV and JSON traces here."),
]


def _data(fn):
    for opt in reversed(_data_opts):
        fn = opt(fn)
    return fn


@main.command("sweep-relevance")
@_data
@_common_k
@click.option("--step", type=click.FloatRange(0, 1, min_open=True), default=0.1, show_default=True, help="Degraded-user fraction per step.")
@_common_seed
@_common_eps
@click.pass_obj
def sweep_relevance(obj, train_path, test_path, users, items, out_dir, k, step, seed, epsilon):
    """Degrade a growing share of users to all-irrelevant lists; CSV trace on stdout."""
    train, test = _split_data(train_path, test_path, users, items, seed)
    _trace_out(relevance_sweep(train, test, k, step, seed, epsilon, obj["threads"]), out_dir)


@main.command("sweep-similarity")
@_data
@click.option("--run", "run_path", type=click.Path(dir_okay=False), default=None, help="Run file (default: U-KNN on the train split).")
@_common_k
@click.option("--lambdas", default=",".join(f"{v:g}" for v in DEFAULT_LAMBDAS), show_default=True, help="Weibull shape parameters.")
@click.option("--normal/--no-normal", default=True, show_default=True, help="Include the N(0,1) point.")
@click.option("--observed", is_flag=True, help="Add a point for the observed Jaccard similarities.")
@_common_seed
@_common_eps
@click.pass_obj
def sweep_similarity(obj, train_path, test_path, users, items, out_dir, run_path, k, lambdas, normal, observed, seed, epsilon):
    """Fixed run, synthetic similarity distributions of varying skew; CSV trace on stdout."""
    lams = _parse_floats(lambdas)
    if run_path is not None and train_path is None:
        raise click.UsageError("--run needs --train and --test")
    if run_path is None:
        train, test = _split_data(train_path, test_path, users, items, seed)
        run = neighbors.recommend(train, neighbors.KnnConfig("user", 50, k), obj["threads"])
    else:
        train, test = dataio.shared_datasets(
            dataio.load_split_file(train_path), dataio.load_split_file(test_path), extra_items=run_items(run_path)
        )
        run = load_run(run_path, train.user_index, train.item_index)
    trace = similarity_sweep(run, test, train, lams, normal, observed, seed, k, epsilon, obj["threads"])
    _trace_out(trace, out_dir)


@main.command()
@_data
@_common_k
@click.option("--step", type=click.FloatRange(0, 1, min_open=True), default=0.1, show_default=True)
@click.option("--lam", type=click.FloatRange(0, min_open=True), default=2.0, show_default=True, help="Weibull shape of the similarity multiset.")
@click.option("--mode", type=click.Choice(["most_fair", "most_unfair"]), default="most_fair", show_default=True)
@_common_seed
@click.pass_obj
def extreme(obj, train_path, test_path, users, items, out_dir, k, step, lam, mode, seed):
    """Sort similarities against effectiveness gaps (best or worst case); CSV trace on stdout."""
    train, test = _split_data(train_path, test_path, users, items, seed)
    _trace_out(extreme_case(train, test, k, step, lam, mode, seed, obj["threads"]), out_dir)


@main.command()
@click.argument("reports", nargs=-1, type=click.Path(dir_okay=False))
@click.option("--oriented", is_flag=True, help="Flip lower-is-better measures so positive tau means agreement on quality.")
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv", show_default=True)
@click.option("--out", default=None, help="Output path (default stdout).")
def agree(reports, oriented, fmt, out):
    """Kendall tau-b between measures across two or more report JSON files."""
    if len(reports) < 2:
        raise click.UsageError("agree needs at least two report files")
    scores = {}
    for path in reports:
        rep = FairnessReport.from_json(Path(path).read_text(encoding="utf-8"))
        name = rep.provenance.get("run") or Path(path).stem
        if name in scores:
            name = f"{name}#{len(scores)}"
        scores[name] = rep.all_scores()
    mat = agreement_matrix(scores)
    for ms in mat.excluded:
        log.warning("measure %s is undefined for some model; excluded", ms)
    text = mat.to_csv(oriented) if fmt == "csv" else json.dumps(mat.to_dict(), indent=2) + "\n"
    _emit(text, out)


@main.command("bench")
@click.option("--measures", default=",".join(FAIRNESS_MEASURES), show_default=True, help="Comma-separated measure names.")
@click.option("--users", type=click.IntRange(3), default=2000, show_default=True, help="Synthetic user count.")
@_common_k
@_common_seed
@click.option("--repeats", type=click.IntRange(1), default=3, show_default=True)
@click.pass_obj
def bench_cmd(obj, measures, users, k, seed, repeats):
    """Mean wall time per measure on synthetic data; CSV on stdout."""
    names = [m.strip() for m in measures.split(",") if m.strip()]
    unknown = [m for m in names if m not in FAIRNESS_MEASURES]
    if unknown:
        raise click.BadParameter(f"unknown measures {unknown}", param_hint="--measures")
    rows = bench(names, users, k, seed, repeats, threads=obj["threads"])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["measure", "seconds", "value"])
    for r in rows:
        w.writerow([r.measure, f"{r.seconds:.6f}", format_value(r.value)])
    click.echo(buf.getvalue(), nl=False)


@main.command()
@click.option("--users", type=click.IntRange(1), default=200, show_default=True)
@click.option("--items", type=click.IntRange(20), default=400, show_default=True)
@_common_seed
@click.option("--out", default=None, help="Output path (default stdout).")
def synth(users, items, seed, out):
    """Write a synthetic raw log (user, item, rating, timestamp)."""
    _emit(dataio.format_interactions(synthetic_log(users, items, seed)), out)


@main.command()
@click.argument("dest", type=click.Path(dir_okay=False))
def fixture(dest):
    """Copy the bundled 200-user raw log to DEST."""
    src = resources.files("userfair") / "data" / FIXTURE
    Path(dest).parent.mkdir(parents=True, exist_ok=True)
    with resources.as_file(src) as p:
        shutil.copyfile(p, dest)
    log.info("wrote %s", dest)


def run_cli(argv=None) -> int:
    """Run the CLI in-process and return its exit status."""
    try:
        main.main(args=argv, prog_name="userfair", auto_envvar_prefix="USERFAIR", standalone_mode=True)
    except SystemExit as exc:
        return int(exc.code or 0)
    return 0


def entry() -> None:
    main(prog_name="userfair", auto_envvar_prefix="USERFAIR")


if __name__ == "__main__":
    entry()
