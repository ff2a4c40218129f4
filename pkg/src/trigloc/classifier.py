"""Intra/inter-procedural verdicts, caller/callee subtype and layer counts."""

from __future__ import annotations

from dataclasses import dataclass

from .diff_model import PatchStatement
from .errors import NoEvidence
from .trigger_id import TriggerFinding


def count_layers(chain) -> int:
    """Number of distinct functions on a chain."""
    chain = list(chain)
    if not chain:
        raise ValueError("chain must not be empty")
    return len(set(chain))


@dataclass(frozen=True)
class Classification:
    kind: str  # intra | inter
    inter_type: str | None  # caller | callee
    layers: int | None
    chain: tuple  # function names from the patched function to the trigger function
    patch_id: str
    trigger_id: str
    evidence: tuple = ()  # provenance edges of the trigger's slice entry

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "inter_type": self.inter_type,
            "layers": self.layers,
            "chain": list(self.chain),
            "patch": self.patch_id,
            "trigger": self.trigger_id,
        }


@dataclass(frozen=True)
class CaseClassification:
    headline: Classification
    instances: tuple

    @property
    def kind(self) -> str:
        return self.headline.kind

    @property
    def inter_type(self) -> str | None:
        return self.headline.inter_type

    @property
    def layers(self) -> int | None:
        return self.headline.layers

    @property
    def chain(self) -> tuple:
        return self.headline.chain

    @property
    def inter_types(self) -> list[str]:
        return sorted({c.inter_type for c in self.instances if c.inter_type})


def classify_pair(finding: TriggerFinding) -> Classification:
    names = finding.functions
    if len(names) <= 1:
        return Classification("intra", None, None, tuple(names), finding.patch_id, finding.stmt_id, finding.via)
    # callee type as soon as the chain resumes in a caller
    hops = [h for _, h in finding.chain]
    inter_type = "callee" if "up" in hops else "caller"
    return Classification(
        "inter", inter_type, count_layers(names), tuple(names), finding.patch_id, finding.stmt_id, finding.via
    )


def classify_vulnerability(
    patch_stmts: list[PatchStatement], findings: list[TriggerFinding]
) -> CaseClassification:
    """Per-pair verdicts; the case is inter when any pair is, headlined by
    the pair with the most layers."""
    patch_ids = {ps.id for ps in patch_stmts}
    pairs = [classify_pair(f) for f in findings if f.patch_id in patch_ids]
    if not pairs:
        raise NoEvidence("no trigger finding is connected to a patch statement")
    pairs.sort(key=lambda c: (c.kind != "inter", -(c.layers or 0), c.chain, c.patch_id, c.trigger_id))
    return CaseClassification(pairs[0], tuple(pairs))


def patch_function_baseline(patch_stmts: list[PatchStatement]) -> str:
    """The prior heuristic: inter iff the patch touches two or more functions."""
    funcs = {ps.function for ps in patch_stmts if ps.function}
    return "inter" if len(funcs) >= 2 else "intra"
