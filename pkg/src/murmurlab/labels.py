"""Label matrix, the four-step recording selection with majority-vote
relabeling, and Krippendorff's alpha agreement statistics.

A label matrix holds one row per recording and one column per rater pass
(e.g. A1, A2, B1, B2, C1).  Selection removes rows whose assessments are
unusable or contradictory; surviving rows get a noise-reduced label from the
unique most-frequent intensity, which may overrule a single diverging
assessment.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

from .corpus import (
    AssessmentClass,
    INTENSITY_ASSESSMENTS,
    MurmurIntensity,
    load_table,
    save_table,
)


class LabelError(Exception):
    """Raised for malformed label matrices or unresolvable rows."""


@dataclass(frozen=True)
class LabelMatrix:
    """Assessments[recording][rater-pass]; cells may be missing (None)."""

    recording_ids: tuple[str, ...]
    raters: tuple[str, ...]  # rater-pass column ids, e.g. ("A1", "A2", "B1", "B2", "C1")
    cells: tuple[tuple[Optional[AssessmentClass], ...], ...]

    def __post_init__(self):
        if len(set(self.recording_ids)) != len(self.recording_ids):
            raise LabelError("duplicate recording ids in label matrix")
        if len(set(self.raters)) != len(self.raters):
            raise LabelError("duplicate rater-pass columns in label matrix")
        for rid, row in zip(self.recording_ids, self.cells):
            if len(row) != len(self.raters):
                raise LabelError(f"row {rid!r} has {len(row)} cells, expected {len(self.raters)}")

    @property
    def n_recordings(self) -> int:
        return len(self.recording_ids)

    def row(self, rec_id: str) -> tuple[Optional[AssessmentClass], ...]:
        return self.cells[self.recording_ids.index(rec_id)]

    def restrict_rows(self, keep_ids: Iterable[str]) -> "LabelMatrix":
        keep = set(keep_ids)
        pairs = [(rid, row) for rid, row in zip(self.recording_ids, self.cells) if rid in keep]
        return LabelMatrix(
            recording_ids=tuple(r for r, _ in pairs),
            raters=self.raters,
            cells=tuple(row for _, row in pairs),
        )

    def restrict_columns(self, columns: Sequence[str]) -> "LabelMatrix":
        idx = [self.raters.index(c) for c in columns]
        return LabelMatrix(
            recording_ids=self.recording_ids,
            raters=tuple(columns),
            cells=tuple(tuple(row[i] for i in idx) for row in self.cells),
        )

    def rater_passes(self) -> dict[str, list[str]]:
        """Group rater-pass columns by rater prefix ('A1','A2' -> 'A')."""
        groups: dict[str, list[str]] = {}
        for col in self.raters:
            prefix = col.rstrip("0123456789") or col
            groups.setdefault(prefix, []).append(col)
        return groups


def matrix_from_rows(rows: Mapping[str, Sequence[Optional[AssessmentClass]]],
                     raters: Sequence[str]) -> LabelMatrix:
    return LabelMatrix(
        recording_ids=tuple(rows.keys()),
        raters=tuple(raters),
        cells=tuple(tuple(row) for row in rows.values()),
    )


def load_label_matrix(path) -> LabelMatrix:
    """Read the long-form CSV (recording_id, rater, pass, label, timestamp)."""
    records = load_table(path, required=("recording_id", "rater", "pass", "label"))
    by_rec: dict[str, dict[str, AssessmentClass]] = {}
    columns: list[str] = []
    for rec in records:
        col = f"{rec['rater']}{rec['pass']}"
        if col not in columns:
            columns.append(col)
        label = rec["label"]
        if label is None:
            continue
        try:
            value = AssessmentClass(str(label))
        except ValueError:
            raise LabelError(f"unknown label {label!r} for recording {rec['recording_id']!r}")
        by_rec.setdefault(str(rec["recording_id"]), {})[col] = value
    columns = sorted(columns)
    return LabelMatrix(
        recording_ids=tuple(by_rec.keys()),
        raters=tuple(columns),
        cells=tuple(tuple(row.get(c) for c in columns) for row in by_rec.values()),
    )


def save_label_matrix(matrix: LabelMatrix, path) -> None:
    rows = []
    for rid, row in zip(matrix.recording_ids, matrix.cells):
        for col, cell in zip(matrix.raters, row):
            if cell is None:
                continue
            rater = col.rstrip("0123456789") or col
            pass_index = col[len(rater):] or "1"
            rows.append({
                "recording_id": rid,
                "rater": rater,
                "pass": int(pass_index),
                "label": cell.value,
                "timestamp": "",
            })
    save_table(rows, path, fieldnames=("recording_id", "rater", "pass", "label", "timestamp"))


# ---------------------------------------------------------------------------
# Four-step selection with majority-vote relabeling
# ---------------------------------------------------------------------------

STEP_REASONS = {
    1: "two or more bad-quality/other assessments",
    2: "two or more healthy assessments",
    3: "two intensity classes each named at least twice",
    4: "all three intensity classes named",
}


@dataclass(frozen=True)
class RemovedRow:
    recording_id: str
    step: int  # 1..4
    reason: str


@dataclass(frozen=True)
class SelectionOutcome:
    """Partition of the input rows into kept (with noise-reduced label) and removed."""

    kept: dict[str, MurmurIntensity]
    removed: dict[str, RemovedRow]

    def __post_init__(self):
        overlap = set(self.kept) & set(self.removed)
        if overlap:
            raise LabelError(f"rows both kept and removed: {sorted(overlap)}")


def _removal_step(counts: Counter) -> Optional[int]:
    """Which selection step removes a row with these assessment counts, if any."""
    if counts[AssessmentClass.BAD_QUALITY] + counts[AssessmentClass.OTHER] >= 2:
        return 1
    if counts[AssessmentClass.HEALTHY] >= 2:
        return 2
    named_twice = sum(1 for c in INTENSITY_ASSESSMENTS if counts[c] >= 2)
    if named_twice >= 2:
        return 3
    if all(counts[c] >= 1 for c in INTENSITY_ASSESSMENTS):
        return 4
    return None


def _majority_intensity(rec_id: str, counts: Counter) -> MurmurIntensity:
    intensity_counts = {c: counts[c] for c in INTENSITY_ASSESSMENTS}
    top = max(intensity_counts.values())
    modes = [c for c, n in intensity_counts.items() if n == top and n > 0]
    if len(modes) != 1:
        raise LabelError(
            f"recording {rec_id!r}: no unique murmur intensity among surviving assessments"
        )
    return MurmurIntensity(modes[0].value)


def select_recordings(matrix: LabelMatrix) -> SelectionOutcome:
    """Apply the four selection steps, then relabel kept rows by majority vote.

    Steps, in order: (1) drop rows with >= 2 bad-quality/other assessments,
    (2) drop rows with >= 2 healthy assessments, (3) drop rows where two
    intensity classes are each named >= 2 times, (4) drop rows naming all
    three intensities.  Every surviving row has a unique most-frequent
    intensity, which becomes its noise-reduced label; a single diverging
    assessment is overruled by that consensus.
    """
    kept: dict[str, MurmurIntensity] = {}
    removed: dict[str, RemovedRow] = {}
    for rid, row in zip(matrix.recording_ids, matrix.cells):
        votes = [c for c in row if c is not None]
        if len(votes) < 3:
            raise LabelError(f"recording {rid!r} has fewer than 3 assessments")
        counts = Counter(votes)
        step = _removal_step(counts)
        if step is not None:
            removed[rid] = RemovedRow(rid, step, STEP_REASONS[step])
        else:
            kept[rid] = _majority_intensity(rid, counts)
    return SelectionOutcome(kept=kept, removed=removed)


def survivors_after_step(matrix: LabelMatrix, outcome: SelectionOutcome, last_step: int) -> list[str]:
    """Ids surviving after steps 1..last_step, in matrix order (0 = all rows)."""
    out = []
    for rid in matrix.recording_ids:
        row = outcome.removed.get(rid)
        if row is None or row.step > last_step:
            out.append(rid)
    return out


def save_selection_report(matrix: LabelMatrix, outcome: SelectionOutcome, path) -> None:
    rows = []
    for rid in matrix.recording_ids:
        if rid in outcome.kept:
            rows.append({"recording_id": rid, "status": "kept", "removal_step": None,
                         "reason": None, "mv_label": outcome.kept[rid].value})
        else:
            rem = outcome.removed[rid]
            rows.append({"recording_id": rid, "status": "removed", "removal_step": rem.step,
                         "reason": rem.reason, "mv_label": None})
    save_table(rows, path,
               fieldnames=("recording_id", "status", "removal_step", "reason", "mv_label"))


# ---------------------------------------------------------------------------
# Krippendorff's alpha (nominal scale)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AgreementReport:
    """Chance-corrected agreement: 1 = perfect, 0 = chance, < 0 = systematic disagreement."""

    alpha: float
    n_units: int
    observed_disagreement: float
    expected_disagreement: float
    degenerate: bool = False  # all ratings in one class; alpha reported as 1.0


def krippendorff_alpha(matrix: LabelMatrix) -> AgreementReport:
    """Nominal-scale Krippendorff's alpha via the coincidence-matrix formulation.

    Each unit with m >= 2 ratings contributes 1/(m-1) per ordered pair of its
    ratings; alpha = 1 - D_o/D_e with D_o the per-pair disagreement rate and
    D_e its expectation under the pooled class margins.
    """
    classes = list(AssessmentClass)
    index = {c: i for i, c in enumerate(classes)}
    k = len(classes)
    coincidence = [[0.0] * k for _ in range(k)]
    n_units = 0
    for row in matrix.cells:
        votes = [index[c] for c in row if c is not None]
        m = len(votes)
        if m < 2:
            continue
        n_units += 1
        w = 1.0 / (m - 1)
        for i in range(m):
            for j in range(m):
                if i != j:
                    coincidence[votes[i]][votes[j]] += w
    if n_units == 0:
        raise LabelError("no unit has two or more ratings")

    margins = [sum(coincidence[c]) for c in range(k)]
    n = sum(margins)
    observed = sum(coincidence[c][d] for c in range(k) for d in range(k) if c != d) / n
    expected_pairs = sum(margins[c] * margins[d] for c in range(k) for d in range(k) if c != d)
    expected = expected_pairs / (n * (n - 1))
    if expected == 0.0:
        return AgreementReport(alpha=1.0, n_units=n_units, observed_disagreement=observed,
                               expected_disagreement=0.0, degenerate=True)
    return AgreementReport(alpha=1.0 - observed / expected, n_units=n_units,
                           observed_disagreement=observed, expected_disagreement=expected)


def intra_rater_alpha(matrix: LabelMatrix, rater: str) -> AgreementReport:
    """Agreement between the two passes of one rater."""
    columns = matrix.rater_passes().get(rater, [])
    if len(columns) != 2:
        raise LabelError(f"rater {rater!r} needs exactly 2 passes, found {len(columns)}")
    return krippendorff_alpha(matrix.restrict_columns(columns))


@dataclass(frozen=True)
class StepAgreement:
    steps_applied: str  # "none", "1", "1-2", "1-3", "1-4"
    n_recordings: int
    overall: AgreementReport
    per_rater: dict[str, AgreementReport]


def agreement_trace(matrix: LabelMatrix) -> list[StepAgreement]:
    """Overall and intra-rater alpha recomputed after each selection step.

    Mirrors the agreement table layout: columns for no selection and for
    steps 1, 1-2, 1-3, 1-4; intra-rater statistics cover every rater with
    exactly two passes.
    """
    outcome = select_recordings(matrix)
    two_pass = sorted(r for r, cols in matrix.rater_passes().items() if len(cols) == 2)
    trace = []
    for last_step, tag in ((0, "none"), (1, "1"), (2, "1-2"), (3, "1-3"), (4, "1-4")):
        survivors = survivors_after_step(matrix, outcome, last_step)
        sub = matrix.restrict_rows(survivors)
        trace.append(StepAgreement(
            steps_applied=tag,
            n_recordings=sub.n_recordings,
            overall=krippendorff_alpha(sub),
            per_rater={r: intra_rater_alpha(sub, r) for r in two_pass},
        ))
    return trace


def save_agreement_trace(trace: list[StepAgreement], path) -> None:
    raters = sorted(trace[0].per_rater) if trace else []
    rows = []
    for step in trace:
        row = {"steps_applied": step.steps_applied, "n_recordings": step.n_recordings,
               "alpha_all": step.overall.alpha}
        for r in raters:
            row[f"alpha_{r}"] = step.per_rater[r].alpha
        rows.append(row)
    save_table(rows, path, fieldnames=["steps_applied", "n_recordings", "alpha_all"]
               + [f"alpha_{r}" for r in raters])
