import pytest

from procopt.errors import MalformedRecordError
from procopt.records import (
    OBSERVATION_HEADER,
    Observation,
    dedup_max_pce,
    observations_to_csv,
    parse_observation_csv,
    parse_raw_dataset_csv,
)
from procopt.refine import PsoConfig, WindowSpec, refine_spec_from_json, refine_spec_to_json
from procopt.space import ProcessCondition


def test_observation_header_exact():
    assert OBSERVATION_HEADER == (
        "condition_id,temperature_C,speed_cm_s,spray_ml_min,plasma_height_cm,"
        "plasma_gas_l_min,plasma_duty_pct,pce_pct,film_pass"
    )


def test_csv_round_trip(space):
    obs = [
        Observation(ProcessCondition((145.0, 12.5, 3.5, 1.0, 25.0, 50.0)),
                    17.7, True, 0, 11),
        Observation(ProcessCondition((140.0, 30.0, 2.0, 1.0, 30.0, 50.0)),
                    None, False, 0, 18),
    ]
    text = observations_to_csv(obs)
    assert text.splitlines()[0] == OBSERVATION_HEADER
    parsed = parse_observation_csv(text, space)
    assert parsed[0].condition == obs[0].condition
    assert parsed[0].pce_pct == 17.7
    assert parsed[1].pce_pct is None
    assert parsed[1].film_pass is False


def test_raw_dataset_units_resolved(space):
    text = (
        "condition_id,temperature_C,speed_mm_s,spray_ul_min,plasma_height_cm,"
        "plasma_gas_l_min,plasma_duty_pct,pce_pct,film_pass\n"
        "89,145,145,3490,1.2,19,27,18.45,true\n"
    )
    rows = parse_raw_dataset_csv(text, space)
    assert rows[0].condition.values == (145.0, 14.5, 3.49, 1.2, 19.0, 27.0)


def test_parse_errors_carry_row_numbers(space):
    with pytest.raises(MalformedRecordError):
        parse_observation_csv("", space)
    header_only = OBSERVATION_HEADER + "\n"
    with pytest.raises(MalformedRecordError):
        parse_observation_csv(header_only, space)
    bad_row = header_only + "0,145,12.5,3.5,1.0,25,50,not-a-number,true\n"
    with pytest.raises(MalformedRecordError) as err:
        parse_observation_csv(bad_row, space)
    assert err.value.row == 1
    missing_col = "condition_id,temperature_C\n0,145\n"
    with pytest.raises(MalformedRecordError):
        parse_observation_csv(missing_col, space)


def test_film_pass_spellings(space):
    base = OBSERVATION_HEADER + "\n"
    for token, expected in (("true", True), ("Yes", True), ("no", False), ("0", False)):
        text = base + f"0,145,12.5,3.5,1.0,25,50,10.0,{token}\n"
        assert parse_observation_csv(text, space)[0].film_pass is expected
    with pytest.raises(MalformedRecordError):
        parse_observation_csv(base + "0,145,12.5,3.5,1.0,25,50,10.0,maybe\n", space)


def test_humidity_metadata(space):
    text = (
        OBSERVATION_HEADER + ",relative_humidity_pct\n"
        "0,145,12.5,3.5,1.0,25,50,10.0,true,43\n"
    )
    rows = parse_observation_csv(text, space)
    assert rows[0].metadata["relative_humidity_pct"] == 43.0


def test_dedup_max_pce_rules():
    cond = ProcessCondition((145.0, 12.5, 3.5, 1.0, 25.0, 50.0))
    other = ProcessCondition((150.0, 12.5, 3.5, 1.0, 25.0, 50.0))
    rows = [
        Observation(cond, 11.18, False, 0, 56),
        Observation(cond, 10.68, False, 0, 57),
        Observation(other, None, False, 0, 58),
        Observation(other, 9.0, True, 0, 59),
    ]
    ded = dedup_max_pce(rows)
    assert len(ded) == 2
    assert ded[0].pce_pct == 11.18
    assert ded[1].pce_pct == 9.0  # measured row displaces the unmeasured one


def test_refine_spec_json_round_trip():
    window = WindowSpec({"temperature": 5.0}, {"temperature": 1.0})
    pso = PsoConfig(particles=32, iterations=100, seed=9)
    doc = refine_spec_to_json(window, pso)
    w2, p2 = refine_spec_from_json(doc)
    assert w2 == window
    assert p2 == pso
