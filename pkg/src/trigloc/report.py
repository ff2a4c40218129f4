"""Case manifests, the end-to-end analysis, JSON reports and evaluation."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .classifier import classify_vulnerability, patch_function_baseline
from .code_model import parse_source_tree
from .critical_vars import identify_critical_variables
from .dependence import ProgramGraphs
from .diff_model import parse_diff, preprocess_diff
from .errors import AnalysisError, ManifestError, MissingGroundTruth, NoPatchInFunction
from .metrics import Confusion, compute_metrics
from .slicer import Projector, SliceConfig, slice_for_variable
from .trigger_id import (
    CLASS1_CWES,
    SUPPORTED_CWES,
    KeywordConfig,
    RuleContext,
    SearchTrace,
    identify_triggers,
    parse_cwe,
)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class GroundTruth:
    trigger_lines: tuple  # ((file, line), ...)
    is_inter: bool
    inter_type: str | None = None
    layers: int | None = None


@dataclass(frozen=True)
class CaseManifest:
    id: str
    cwe: int
    diff_path: Path
    vuln_root: Path
    patched_root: Path
    ground_truth: GroundTruth | None = None
    extra: dict = field(default_factory=dict, compare=False)  # fixture expectations, ignored by analysis


def load_manifest(case_dir) -> CaseManifest:
    case_dir = Path(case_dir)
    path = case_dir / "manifest.json"
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise ManifestError(f"{path}: {exc}") from exc
    try:
        cwe = parse_cwe(raw["cwe"])
    except (KeyError, AnalysisError) as exc:
        raise ManifestError(f"{path}: bad or missing cwe") from exc
    if cwe not in SUPPORTED_CWES:
        raise ManifestError(f"{path}: CWE-{cwe} is not supported")
    diff = case_dir / raw.get("diff", "patch.diff")
    vuln = case_dir / raw.get("vuln", "vuln")
    patched = case_dir / raw.get("patched", "patched")
    for p in (diff, vuln, patched):
        if not p.exists():
            raise ManifestError(f"{path}: missing {p.name}")
    gt = raw.get("ground_truth")
    truth = None
    if gt is not None:
        try:
            truth = GroundTruth(
                tuple((str(f), int(n)) for f, n in gt["trigger_lines"]),
                bool(gt["is_inter"]),
                gt.get("inter_type"),
                gt.get("layers"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ManifestError(f"{path}: bad ground_truth") from exc
    known = {"id", "cwe", "diff", "vuln", "patched", "ground_truth"}
    return CaseManifest(
        id=str(raw.get("id", case_dir.name)), cwe=cwe, diff_path=diff, vuln_root=vuln,
        patched_root=patched, ground_truth=truth,
        extra={k: v for k, v in raw.items() if k not in known},
    )


def find_cases(corpus_dir) -> list[Path]:
    corpus_dir = Path(corpus_dir)
    return sorted(p.parent for p in corpus_dir.rglob("manifest.json"))


# --- analysis ------------------------------------------------------------------


@dataclass
class Analysis:
    """Everything computed for one case; ``to_report`` serializes it."""

    manifest: CaseManifest
    patch_statements: list = field(default_factory=list)
    critical_variables: list = field(default_factory=list)
    slices: list = field(default_factory=list)
    findings: list = field(default_factory=list)
    classification: object = None
    baseline: str | None = None
    errors: list = field(default_factory=list)
    opaque: dict = field(default_factory=dict)
    trace: SearchTrace = field(default_factory=SearchTrace)
    vuln_tree: object = None
    patched_tree: object = None

    def error(self, stage: str, exc: AnalysisError) -> None:
        self.errors.append({"stage": stage, "code": exc.code, "message": str(exc)})

    def to_report(self) -> dict:
        m = self.manifest
        tree = self.vuln_tree
        cls = self.classification
        return {
            "schema_version": SCHEMA_VERSION,
            "case": m.id,
            "cwe": f"CWE-{m.cwe}",
            "patch_statements": [
                {
                    "id": ps.id, "file": ps.file, "function": ps.function, "action": ps.action,
                    "p_type": ps.p_type, "line_vuln": ps.line_vuln, "line_patched": ps.line_patched,
                    "text": ps.statement.text,
                }
                for ps in self.patch_statements
            ],
            "critical_variables": [
                {"name": cv.name, "level": cv.level, "origin": cv.origin, "scope": cv.scope}
                for cv in sorted(self.critical_variables, key=lambda v: v.key)
            ],
            "slices": [
                {
                    "seed": sl.seed.name, "patch": sl.patch_id, "statements": len(sl.entries),
                    "layers": sl.max_layer, "functions": sl.functions,
                }
                for sl in self.slices
            ],
            "triggers": [
                {
                    "file": f.file, "function": f.function, "line": f.line, "t_types": list(f.t_types),
                    "phase": f.phase, "patch": f.patch_id,
                    "matched_cv": f.matched_cv.name if f.matched_cv else None,
                    "chain": [name for name, _ in f.chain],
                    "text": tree.statement(f.stmt_id).text if tree is not None else "",
                }
                for f in self.findings
            ],
            "classification": None if cls is None else {
                "kind": cls.kind, "inter_type": cls.inter_type, "layers": cls.layers,
                "chain": list(cls.chain), "inter_types": cls.inter_types,
                "instances": [c.to_dict() for c in cls.instances],
            },
            "baseline": self.baseline,
            "diagnostics": {"opaque_statements": dict(self.opaque), "errors": list(self.errors)},
        }


def analyze(manifest: CaseManifest, cfg: SliceConfig | None = None, keywords: KeywordConfig | None = None) -> Analysis:
    """Run every stage; stage failures become diagnostics."""
    cfg = cfg or SliceConfig()
    keywords = keywords or KeywordConfig()
    out = Analysis(manifest)
    try:
        vuln = parse_source_tree(manifest.vuln_root, "vulnerable")
        patched = parse_source_tree(manifest.patched_root, "patched")
        diff = parse_diff(manifest.diff_path)
    except AnalysisError as exc:
        out.error("parse", exc)
        return out
    out.vuln_tree, out.patched_tree = vuln, patched
    out.opaque = {"vulnerable": vuln.opaque_count, "patched": patched.opaque_count}
    try:
        out.patch_statements = preprocess_diff(diff, vuln, patched)
    except AnalysisError as exc:
        out.error("diff", exc)
        return out
    out.baseline = patch_function_baseline(out.patch_statements)
    in_function = [ps for ps in out.patch_statements if ps.function]
    if not in_function:
        out.error("diff", NoPatchInFunction("no patch statement lies inside a function"))
        return out
    vg, pg = ProgramGraphs(vuln), ProgramGraphs(patched)
    projector = Projector(diff, vuln, patched)
    cv_errors = []
    for ps in in_function:
        try:
            cvs = identify_critical_variables(ps, manifest.cwe)
        except AnalysisError as exc:
            cv_errors.append(exc)
            continue
        out.critical_variables.extend(cvs)
        for cv in cvs:
            try:
                out.slices.append(slice_for_variable(cv, ps, vg, pg, cfg, projector))
            except AnalysisError as exc:
                out.error("slice", exc)
    # statements like a bare ``return;`` carry no variable; only a case with
    # none at all is worth reporting, and loop/leak rules do not need any
    if not out.critical_variables and manifest.cwe not in CLASS1_CWES:
        for exc in cv_errors:
            out.error("critical_vars", exc)
    ctx = RuleContext(vuln, vg, keywords)
    try:
        out.findings = identify_triggers(manifest.cwe, in_function, out.slices, ctx, trace=out.trace)
    except AnalysisError as exc:
        out.error("triggers", exc)
        return out
    seen = {(cv.scope, cv.name, cv.level) for cv in out.critical_variables}
    for f in out.findings:
        cv = f.matched_cv
        if cv is not None and (cv.scope, cv.name, cv.level) not in seen:
            seen.add((cv.scope, cv.name, cv.level))
            out.critical_variables.append(cv)
    try:
        out.classification = classify_vulnerability(in_function, out.findings)
    except AnalysisError as exc:
        out.error("classify", exc)
    return out


def run_analyze(case_dir, cfg: SliceConfig | None = None, keywords: KeywordConfig | None = None) -> dict:
    return analyze(load_manifest(case_dir), cfg, keywords).to_report()


def dumps(obj) -> str:
    """Canonical JSON text: sorted keys, two-space indent, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


# --- evaluation ----------------------------------------------------------------


def _trigger_hit(report: dict, truth: GroundTruth) -> bool:
    wanted = set(truth.trigger_lines)
    return any((t["file"], t["line"]) in wanted for t in report["triggers"])


def _identified_in_truth_files(report: dict, truth: GroundTruth) -> int:
    files = {f for f, _ in truth.trigger_lines}
    return sum(1 for t in report["triggers"] if t["file"] in files)


def run_evaluate(
    corpus_dir,
    cfg: SliceConfig | None = None,
    keywords: KeywordConfig | None = None,
    workers: int = 4,
) -> dict:
    """Analyze every case, then score triggers and inter-procedural verdicts."""
    cases = [load_manifest(p) for p in find_cases(corpus_dir)]
    missing = [m.id for m in cases if m.ground_truth is None]
    if missing:
        raise MissingGroundTruth(missing)
    if not cases:
        raise ManifestError(f"no cases under {corpus_dir}")
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        reports = list(pool.map(lambda m: analyze(m, cfg, keywords).to_report(), cases))
    rows = []
    ours, base = Confusion(), Confusion()
    hits = identified = 0
    for m, rep in zip(cases, reports):
        truth = m.ground_truth
        hit = _trigger_hit(rep, truth)
        hits += hit
        n_ident = _identified_in_truth_files(rep, truth)
        identified += n_ident
        cls = rep["classification"]
        predicted = bool(cls and cls["kind"] == "inter")
        baseline = rep["baseline"] == "inter"
        ours = ours.add(predicted, truth.is_inter)
        base = base.add(baseline, truth.is_inter)
        rows.append({
            "case": m.id,
            "trigger_hit": hit,
            "identified": n_ident,
            "predicted": "inter" if predicted else "intra",
            "baseline": "inter" if baseline else "intra",
            "actual": "inter" if truth.is_inter else "intra",
            "inter_type": cls["inter_type"] if cls else None,
            "layers": cls["layers"] if cls else None,
            "errors": [e["code"] for e in rep["diagnostics"]["errors"]],
        })
    result = {
        "schema_version": SCHEMA_VERSION,
        "cases": rows,
        "trigger_accuracy": hits / len(cases),
        "avg_identified_triggers": identified / len(cases),
        "classifier": {**compute_metrics(ours).to_dict(), "confusion": ours.__dict__},
        "baseline": {**compute_metrics(base).to_dict(), "confusion": base.__dict__},
    }
    return {"reports": reports, "evaluation": result}
