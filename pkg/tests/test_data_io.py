from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest

from voucherbounds.data_io import (
    GOVERNMENT_GROUP,
    NONPARTICIPATING_GROUP,
    DataError,
    ImputationUndefined,
    SchoolRecord,
    StudentRecord,
    build_microdata,
    impute_missing,
    load,
    program_config_from_mapping,
    round_tuition,
    shares,
    write_schools_csv,
    write_students_csv,
)
from voucherbounds.inference import MicroData
from voucherbounds.model import ProgramConfig


STUDENTS = """student_id,voucher,school_id,weight
a1,0,pub1,1
a2,0,,1
a3,1,s1,2
a4,1,np1,1
a5,1,,1
a6,0,np1,1
"""

SCHOOLS = """school_id,kind,tuition
pub1,gov,
np1,private_nonparticipating,
s1,private_participating,2000
s2,private_participating,6000
"""


@pytest.fixture
def csv_files(tmp_path):
    students = tmp_path / "students.csv"
    schools = tmp_path / "schools.csv"
    students.write_text(STUDENTS)
    schools.write_text(SCHOOLS)
    return students, schools


def test_load_valid(csv_files):
    students, schools, skeleton = load(*csv_files)
    assert len(students) == 6
    assert len(schools) == 4
    assert skeleton.school_ids == ("s1", "s2")
    assert skeleton.base_prices == (Fraction(2000), Fraction(6000))


def test_load_reports_line_numbers(tmp_path, csv_files):
    _, schools = csv_files
    bad = tmp_path / "bad.csv"
    bad.write_text("student_id,voucher,school_id,weight\nz1,2,pub1,1\nz2,0,ghost,1\n")
    with pytest.raises(DataError) as info:
        load(bad, schools)
    message = str(info.value)
    assert "line 2" in message and "line 3" in message
    assert "ghost" in message


def test_round_tuition_half_up():
    schools = [
        SchoolRecord("a", "private_participating", 5249),
        SchoolRecord("b", "private_participating", 5250),
        SchoolRecord("c", "private_participating", 5500),
        SchoolRecord("d", "gov"),
    ]
    rounded = round_tuition(schools, 500)
    assert [s.tuition for s in rounded[:3]] == [5000, 5500, 5500]
    assert round_tuition(schools, 0)[0].tuition == 5249
    twice = round_tuition(round_tuition(schools, 500), 500)
    assert [s.tuition for s in twice[:3]] == [s.tuition for s in rounded[:3]]


def test_impute_missing_rates():
    students = [
        StudentRecord("a", 0, GOVERNMENT_GROUP, 0.9),
        StudentRecord("b", 0, NONPARTICIPATING_GROUP, 0.02),
        StudentRecord("c", 0, None, 1.0),
    ]
    imputed = impute_missing(students)
    assert len(imputed) == 4
    gov_row = imputed[2]
    assert gov_row.school_id == GOVERNMENT_GROUP
    assert gov_row.weight == pytest.approx(0.9 / 0.92)
    assert imputed[3].weight == pytest.approx(0.02 / 0.92)


def test_impute_preserves_weight_and_is_identity_without_missing():
    students = [
        StudentRecord("a", 0, GOVERNMENT_GROUP, 0.5),
        StudentRecord("b", 0, NONPARTICIPATING_GROUP, 0.25),
        StudentRecord("c", 1, GOVERNMENT_GROUP, 1.0),
        StudentRecord("d", 1, NONPARTICIPATING_GROUP, 1.0),
        StudentRecord("e", 1, None, 2.0),
    ]
    imputed = impute_missing(students)
    assert sum(s.weight for s in imputed if s.voucher == 1) == pytest.approx(4.0)
    no_missing = students[:4]
    assert impute_missing(no_missing) == no_missing


def test_impute_undefined_when_no_observed_groups():
    students = [StudentRecord("a", 0, None, 1.0), StudentRecord("b", 1, GOVERNMENT_GROUP, 1.0),
                StudentRecord("c", 1, NONPARTICIPATING_GROUP, 1.0), StudentRecord("d", 0, None, 1.0)]
    with pytest.raises(ImputationUndefined):
        impute_missing(students)


def test_shares_pipeline(csv_files):
    students, schools, skeleton = load(*csv_files)
    result = shares(impute_missing(students, schools), schools, skeleton)
    assert result.labels == ("g", "n", "s1", "s2")
    assert result.share_without.sum() == pytest.approx(1.0)
    assert result.share_with.sum() == pytest.approx(1.0)
    assert result.n_without == 4  # the imputed row splits into two fractional rows
    # arm 0: pub1 w1, np1 w1, missing w1 -> g: 1 + 0.5, n: 1 + 0.5 over total 3
    assert result.share_without[0] == pytest.approx(1.5 / 3)
    assert result.share_without[1] == pytest.approx(1.5 / 3)


def test_shares_scale_invariant(csv_files):
    students, schools, skeleton = load(*csv_files)
    doubled = [StudentRecord(s.student_id, s.voucher, s.school_id, 2 * s.weight) for s in students]
    a = shares(impute_missing(students, schools), schools, skeleton)
    b = shares(impute_missing(doubled, schools), schools, skeleton)
    assert np.allclose(a.share_without, b.share_without)
    assert np.allclose(a.share_with, b.share_with)


def test_shares_requires_both_arms(csv_files):
    students, schools, skeleton = load(*csv_files)
    one_arm = [s for s in students if s.voucher == 0]
    with pytest.raises(ValueError):
        shares(impute_missing(one_arm, schools), schools, skeleton)


def test_simulated_csv_roundtrip(tmp_path):
    config = ProgramConfig(
        voucher_schools=(("s1", 2000), ("s2", 6000)), tau_sq=4000, gov_cost=5000
    )
    data = MicroData(
        voucher=np.array([0, 0, 1, 1]),
        choice=np.array([0, 2, 3, 1]),
        weight=np.array([1.0, 1.0, 2.0, 1.0]),
    )
    students_path = tmp_path / "students.csv"
    schools_path = tmp_path / "schools.csv"
    write_students_csv(students_path, data, config)
    write_schools_csv(schools_path, config)
    students, schools, skeleton = load(students_path, schools_path)
    back = build_microdata(students, schools, skeleton)
    assert np.array_equal(back.voucher, data.voucher)
    assert np.array_equal(back.choice, data.choice)
    assert np.array_equal(back.weight, data.weight)


def test_program_config_from_mapping():
    config = program_config_from_mapping(
        {
            "voucher_schools": [["s1", 2000], ["s2", 6000]],
            "tau_sq": 4000,
            "gov_cost": 5000,
            "admin_cost": 200,
        }
    )
    assert config.tau_sq == 4000
    assert config.alternatives == ("g", "n", "s1", "s2")


def test_shares_after_imputation_invariant_to_row_order(csv_files):
    students, schools, skeleton = load(*csv_files)
    reversed_students = list(reversed(students))
    a = shares(impute_missing(students, schools), schools, skeleton)
    b = shares(impute_missing(reversed_students, schools), schools, skeleton)
    assert np.allclose(a.share_without, b.share_without)
    assert np.allclose(a.share_with, b.share_with)
