"""CSV ingestion, cleaning rules and config-file plumbing.

Student files carry one enrollment choice per row (possibly missing);
school files classify every school as government, non-participating
private, or participating private with a tuition.  Cleaning follows the
evaluation-data recipe: tuition rounding to a fixed step, deterministic
fractional-weight imputation of missing choices into the government and
non-participating groups at the observed relative rate, and weighted
share computation.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .inference import InferenceConfig, MicroData
from .model import EnrollmentShares, MoneyLike, ProgramConfig, as_money, round_to_step

SCHOOL_KINDS = ("gov", "private_nonparticipating", "private_participating")

#: reserved ids used for group-level (imputed) choices
GOVERNMENT_GROUP = "_government_"
NONPARTICIPATING_GROUP = "_nonparticipating_"


class DataError(ValueError):
    """Input-file problems, with per-row line diagnostics."""

    def __init__(self, problems: Sequence[tuple[int, str]]):
        self.problems = list(problems)
        lines = "; ".join(f"line {line}: {msg}" for line, msg in self.problems)
        super().__init__(lines)


class ImputationUndefined(ValueError):
    """An arm has missing choices but no observed government/non-participating mass."""


@dataclass(frozen=True)
class StudentRecord:
    student_id: str
    voucher: int
    school_id: str | None
    weight: float = 1.0


@dataclass(frozen=True)
class SchoolRecord:
    school_id: str
    kind: str
    tuition: Fraction | None = None

    def __post_init__(self) -> None:
        if self.kind not in SCHOOL_KINDS:
            raise ValueError(f"kind must be one of {SCHOOL_KINDS}")
        if (self.kind == "private_participating") != (self.tuition is not None):
            raise ValueError("tuition is required exactly for participating schools")
        if self.tuition is not None:
            object.__setattr__(self, "tuition", as_money(self.tuition))
            if self.tuition < 0:
                raise ValueError("tuition must be nonnegative")


def load(
    students_path: str | Path, schools_path: str | Path
) -> tuple[list[StudentRecord], list[SchoolRecord], ProgramConfig]:
    """Read and validate both files; returns records plus a config skeleton.

    The returned :class:`ProgramConfig` carries the participating schools
    and zeroes elsewhere; fill in the program parameters with
    :func:`dataclasses.replace` or :func:`program_config_from_mapping`.
    """
    problems: list[tuple[int, str]] = []
    schools: list[SchoolRecord] = []
    with open(schools_path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        _require_columns(reader.fieldnames, ("school_id", "kind", "tuition"), schools_path)
        for line, row in enumerate(reader, start=2):
            try:
                tuition = row.get("tuition", "") or None
                schools.append(
                    SchoolRecord(
                        school_id=row["school_id"].strip(),
                        kind=row["kind"].strip(),
                        tuition=tuition,
                    )
                )
            except (ValueError, KeyError) as exc:
                problems.append((line, f"{schools_path}: {exc}"))
    if len({s.school_id for s in schools}) != len(schools):
        problems.append((1, f"{schools_path}: duplicate school ids"))
    known = {s.school_id for s in schools} | {GOVERNMENT_GROUP, NONPARTICIPATING_GROUP}

    students: list[StudentRecord] = []
    with open(students_path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        _require_columns(reader.fieldnames, ("student_id", "voucher", "school_id"), students_path)
        for line, row in enumerate(reader, start=2):
            try:
                voucher = int(row["voucher"])
                if voucher not in (0, 1):
                    raise ValueError(f"voucher must be 0 or 1, got {row['voucher']!r}")
                school = row["school_id"].strip() or None
                if school is not None and school not in known:
                    raise ValueError(f"unknown school_id {school!r}")
                weight = float(row["weight"]) if row.get("weight") not in (None, "") else 1.0
                if not np.isfinite(weight) or weight < 0:
                    raise ValueError(f"weight must be finite and nonnegative, got {weight}")
                students.append(
                    StudentRecord(
                        student_id=row["student_id"],
                        voucher=voucher,
                        school_id=school,
                        weight=weight,
                    )
                )
            except (ValueError, KeyError) as exc:
                problems.append((line, f"{students_path}: {exc}"))
    if problems:
        raise DataError(problems)

    participating = sorted(
        ((s.school_id, s.tuition) for s in schools if s.kind == "private_participating"),
        key=lambda pair: (pair[1], pair[0]),
    )
    if not participating:
        raise DataError([(1, f"{schools_path}: no participating schools")])
    skeleton = ProgramConfig(voucher_schools=tuple(participating), tau_sq=0, gov_cost=0)
    return students, schools, skeleton


def _require_columns(fieldnames, required, path) -> None:
    missing = set(required) - set(fieldnames or ())
    if missing:
        raise DataError([(1, f"{path}: missing columns {sorted(missing)}")])


def round_tuition(schools: Iterable[SchoolRecord], step: MoneyLike = 500) -> list[SchoolRecord]:
    """Round participating tuitions to the nearest multiple of ``step`` (half-up)."""
    step = as_money(step)
    out = []
    for school in schools:
        if school.tuition is None or step == 0:
            out.append(school)
        else:
            out.append(replace(school, tuition=round_to_step(school.tuition, step)))
    return out


def impute_missing(
    students: Iterable[StudentRecord], schools: Iterable[SchoolRecord] = ()
) -> list[StudentRecord]:
    """Split each missing choice between the government and non-participating
    groups at the arm's observed relative rate, as fractional-weight rows.

    Rates are computed per voucher arm; pass the school records so named
    government and non-participating schools count toward them.
    """
    students = list(students)
    gov_ids = {GOVERNMENT_GROUP} | {s.school_id for s in schools if s.kind == "gov"}
    nonpart_ids = {NONPARTICIPATING_GROUP} | {
        s.school_id for s in schools if s.kind == "private_nonparticipating"
    }
    rates: dict[int, float] = {}
    for arm in (0, 1):
        gov = sum(s.weight for s in students if s.voucher == arm and s.school_id in gov_ids)
        nonpart = sum(
            s.weight for s in students if s.voucher == arm and s.school_id in nonpart_ids
        )
        missing = any(s.voucher == arm and s.school_id is None for s in students)
        if missing and gov + nonpart <= 0:
            raise ImputationUndefined(
                f"arm {arm} has missing choices but no observed government or "
                "non-participating enrollment to set the imputation rate"
            )
        rates[arm] = gov / (gov + nonpart) if gov + nonpart > 0 else 0.0

    out: list[StudentRecord] = []
    for s in students:
        if s.school_id is not None:
            out.append(s)
            continue
        rate = rates[s.voucher]
        out.append(replace(s, school_id=GOVERNMENT_GROUP, weight=s.weight * rate))
        out.append(replace(s, school_id=NONPARTICIPATING_GROUP, weight=s.weight * (1 - rate)))
    return out


def _group_resolver(schools: Iterable[SchoolRecord], config: ProgramConfig) -> dict[str, int]:
    alt_of = {GOVERNMENT_GROUP: 0, NONPARTICIPATING_GROUP: 1}
    school_position = {sid: 2 + i for i, sid in enumerate(config.school_ids)}
    for school in schools:
        if school.kind == "gov":
            alt_of[school.school_id] = 0
        elif school.kind == "private_nonparticipating":
            alt_of[school.school_id] = 1
        else:
            alt_of[school.school_id] = school_position[school.school_id]
    return alt_of


def build_microdata(
    students: Iterable[StudentRecord],
    schools: Iterable[SchoolRecord],
    config: ProgramConfig,
) -> MicroData:
    """Resolve school choices to canonical alternative indices.

    Apply :func:`impute_missing` first; rows with missing choices are
    rejected here.
    """
    alt_of = _group_resolver(schools, config)
    voucher, choice, weight = [], [], []
    problems = []
    for i, s in enumerate(students):
        if s.school_id is None:
            problems.append((i, "missing school choice (run impute_missing first)"))
            continue
        voucher.append(s.voucher)
        choice.append(alt_of[s.school_id])
        weight.append(s.weight)
    if problems:
        raise DataError(problems)
    return MicroData(
        voucher=np.array(voucher), choice=np.array(choice), weight=np.array(weight)
    )


def shares(
    students: Iterable[StudentRecord],
    schools: Iterable[SchoolRecord],
    config: ProgramConfig,
) -> EnrollmentShares:
    """Weighted enrollment shares per arm over the canonical alternatives."""
    data = build_microdata(students, schools, config)
    n_alt = len(config.alternatives)
    vector = data.moment_vector(n_alt, use_weights=True)
    return EnrollmentShares(
        labels=config.alternatives,
        share_without=vector[:n_alt],
        share_with=vector[n_alt:],
        n_without=int((data.voucher == 0).sum()),
        n_with=int((data.voucher == 1).sum()),
    )


# ---------------------------------------------------------------------------
# JSON run configuration.
# ---------------------------------------------------------------------------


def read_config_file(path: str | Path) -> dict:
    with open(path, encoding="utf-8") as handle:
        return json.load(handle)


def program_config_from_mapping(mapping: Mapping) -> ProgramConfig:
    schools = tuple((str(sid), t) for sid, t in mapping["voucher_schools"])
    return ProgramConfig(
        voucher_schools=schools,
        tau_sq=mapping["tau_sq"],
        gov_cost=mapping["gov_cost"],
        admin_cost=mapping.get("admin_cost", 0),
        extra_offset=mapping.get("extra_offset", 0),
        rounding_step=mapping.get("rounding_step", 0),
    )


def shares_from_mapping(mapping: Mapping, config: ProgramConfig) -> EnrollmentShares:
    return EnrollmentShares.from_mapping(
        config,
        without=mapping["without"],
        with_=mapping["with"],
        n_without=int(mapping.get("n_without", 0)),
        n_with=int(mapping.get("n_with", 0)),
    )


def inference_config_from_mapping(mapping: Mapping) -> InferenceConfig:
    grid = mapping.get("theta_grid")
    return InferenceConfig(
        alpha=mapping.get("alpha", 0.05),
        n_subsamples=int(mapping.get("subsamples", mapping.get("n_subsamples", 200))),
        theta_grid=tuple(grid) if grid else None,
        grid_step=mapping.get("grid_step"),
        seed=int(mapping.get("seed", 0)),
        use_weights=bool(mapping.get("use_weights", True)),
    )


def write_students_csv(path: str | Path, data: MicroData, config: ProgramConfig) -> None:
    """Emit microdata in the ingestion schema (group choices use reserved ids)."""
    labels = [GOVERNMENT_GROUP, NONPARTICIPATING_GROUP, *config.school_ids]
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["student_id", "voucher", "school_id", "weight"])
        for i in range(len(data)):
            writer.writerow(
                [f"sim{i:06d}", int(data.voucher[i]), labels[data.choice[i]],
                 format(float(data.weight[i]), "g")]
            )


def write_schools_csv(path: str | Path, config: ProgramConfig) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["school_id", "kind", "tuition"])
        writer.writerow([GOVERNMENT_GROUP, "gov", ""])
        writer.writerow([NONPARTICIPATING_GROUP, "private_nonparticipating", ""])
        for sid, tuition in config.voucher_schools:
            writer.writerow([sid, "private_participating", format(float(tuition), "g")])
