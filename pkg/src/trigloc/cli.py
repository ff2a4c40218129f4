"""Command-line entry points: ``analyze``, ``evaluate`` and ``slice``."""

from __future__ import annotations

import logging
import sys
from pathlib import Path

import click

from .cexpr import VarRef
from .critical_vars import CriticalVariable
from .dependence import ProgramGraphs
from .diff_model import parse_diff
from .errors import AnalysisError, ManifestError, MissingGroundTruth
from .report import analyze, dumps, load_manifest, run_evaluate
from .slicer import Projector, SliceConfig, slice_for_variable
from .trigger_id import KeywordConfig


def _config(theta: int | None) -> SliceConfig:
    return SliceConfig(theta=theta) if theta is not None else SliceConfig.from_env()


def _keywords(path: str | None) -> KeywordConfig:
    return KeywordConfig.load(path) if path else KeywordConfig()


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8", newline="\n")
    else:
        click.echo(text, nl=False)


def _report_text(rep: dict) -> str:
    lines = [f"case {rep['case']} ({rep['cwe']})"]
    for ps in rep["patch_statements"]:
        line = ps["line_vuln"] if ps["line_vuln"] is not None else ps["line_patched"]
        lines.append(f"  patch {ps['p_type']} {ps['action']} {ps['file']}:{line} {ps['text']}")
    for cv in rep["critical_variables"]:
        lines.append(f"  cv {cv['name']} level {cv['level']} in {cv['scope']}")
    for t in rep["triggers"]:
        lines.append(f"  trigger {','.join(t['t_types'])} {t['file']}:{t['line']} {t['text']} [{t['phase']}]")
    cls = rep["classification"]
    if cls:
        extra = f" {cls['inter_type']} layers={cls['layers']}" if cls["kind"] == "inter" else ""
        lines.append(f"  verdict {cls['kind']}{extra} chain={' -> '.join(cls['chain'])}")
    lines.append(f"  baseline {rep['baseline']}")
    for e in rep["diagnostics"]["errors"]:
        lines.append(f"  error {e['stage']} {e['code']}: {e['message']}")
    return "\n".join(lines) + "\n"


def _run(fn):
    try:
        fn()
    except (ManifestError, MissingGroundTruth) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    except Exception as exc:  # internal failure
        click.echo(f"internal error: {exc}", err=True)
        sys.exit(2)


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log debug messages to stderr.")
def main(verbose: bool) -> None:
    """Locate vulnerability-triggering statements from a patch."""
    logging.basicConfig(level=logging.DEBUG if verbose else logging.WARNING)


_format = click.option("--format", "fmt", type=click.Choice(["json", "text"]), default="json", show_default=True)
_theta = click.option("--theta", type=click.IntRange(min=1), default=None, help="Layer bound (default 3 or $TRIGLOC_THETA).")
_kw = click.option("--keywords", type=click.Path(exists=True, dir_okay=False), default=None, help="Keyword list file.")
_out = click.option("--out", type=click.Path(dir_okay=False), default=None, help="Write to a file instead of stdout.")


@main.command("analyze")
@click.option("--case", "case_dir", required=True, type=click.Path(file_okay=False))
@_theta
@_kw
@_out
@_format
def analyze_cmd(case_dir, theta, keywords, out, fmt):
    """Analyze one case directory."""

    def go():
        rep = analyze(load_manifest(case_dir), _config(theta), _keywords(keywords)).to_report()
        _emit(dumps(rep) if fmt == "json" else _report_text(rep), out)

    _run(go)


@main.command("evaluate")
@click.option("--corpus", "corpus_dir", required=True, type=click.Path(file_okay=False))
@click.option("--baseline", is_flag=True, help="Also print the patch-function baseline metrics.")
@click.option("--workers", type=click.IntRange(min=1), default=4, show_default=True)
@_theta
@_kw
@_out
@_format
def evaluate_cmd(corpus_dir, baseline, workers, theta, keywords, out, fmt):
    """Evaluate a corpus of cases with ground truth."""

    def go():
        result = run_evaluate(corpus_dir, _config(theta), _keywords(keywords), workers)
        ev = result["evaluation"]
        if not baseline:
            ev = {k: v for k, v in ev.items() if k != "baseline"}
        if fmt == "json":
            _emit(dumps(ev), out)
            return
        lines = [f"{r['case']}: trigger {'ok' if r['trigger_hit'] else 'MISS'}, "
                 f"{r['predicted']} (actual {r['actual']})" for r in ev["cases"]]
        lines.append(f"trigger_accuracy {ev['trigger_accuracy']:.4f}")
        lines.append(f"avg_identified_triggers {ev['avg_identified_triggers']:.4f}")
        for name in ("classifier", "baseline"):
            if name in ev:
                m = ev[name]
                lines.append(
                    f"{name}: fpr {m['fpr']:.4f} fnr {m['fnr']:.4f} accuracy {m['accuracy']:.4f} "
                    f"precision {m['precision']:.4f} f1 {m['f1']:.4f}"
                )
        _emit("\n".join(lines) + "\n", out)

    _run(go)


@main.command("slice")
@click.option("--case", "case_dir", required=True, type=click.Path(file_okay=False))
@click.option("--var", "var", required=True, help="Critical variable name to seed with.")
@_theta
@_out
def slice_cmd(case_dir, var, theta, out):
    """Dump the slices of one variable, for debugging."""

    def go():
        m = load_manifest(case_dir)
        a = analyze(m, _config(theta))
        if a.vuln_tree is None:
            raise AnalysisError("case could not be parsed")
        vg, pg = ProgramGraphs(a.vuln_tree), ProgramGraphs(a.patched_tree)
        projector = Projector(parse_diff(m.diff_path), a.vuln_tree, a.patched_tree)
        chunks = []
        for ps in a.patch_statements:
            if not ps.function:
                continue
            cv = CriticalVariable(VarRef(var), 1, ps.id, ps.function)
            try:
                sl = slice_for_variable(cv, ps, vg, pg, _config(theta), projector)
            except AnalysisError:
                continue
            chunks.append(f"# {ps.p_type} {ps.file}:{ps.vuln_line}\n{sl.dump(a.vuln_tree)}\n")
        if not chunks:
            raise ManifestError(f"{var} does not occur in any patch statement")
        _emit("".join(chunks), out)

    _run(go)


if __name__ == "__main__":  # pragma: no cover
    main()
