import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from evsiting._validation import ValidationError
from evsiting.cases import case9
from evsiting.grid import load_grid_csv
from evsiting.matpower import MatpowerCase, case_to_grid, dc_opf_lmp, linear_costs, parse_case

CASE9_M = Path(__file__).parent / "data" / "case9.m"
ROOT = Path(__file__).resolve().parents[1]


def test_parse_case9():
    case = parse_case(CASE9_M.read_text())
    assert case.base_mva == 100.0
    assert case.bus.shape == (9, 13) and case.gen.shape == (3, 10) and case.branch.shape == (9, 11)
    np.testing.assert_array_equal(linear_costs(case), [5.0, 1.2, 1.0])
    grid = case_to_grid(case, {b: v for b, v in zip(range(1, 10), [0.1] * 9)})
    reference = case9()
    assert grid.branches == reference.branches and grid.generators == reference.generators
    assert [b.p_load for b in grid.buses] == [b.p_load for b in reference.buses]


def test_missing_tables():
    with pytest.raises(ValidationError):
        parse_case("mpc.bus = [1 3 0 0 0 0 1 1 0 1 1 1 1];")


def test_uncongested_prices_equal_marginal_cost():
    case = parse_case(CASE9_M.read_text())
    lmp, dispatch = dc_opf_lmp(case)
    # cheapest unit (bus 3, 1 $/MWh) runs at 270 MW; bus 2 (1.2) supplies the rest
    np.testing.assert_allclose(dispatch, [10.0, 305.0 - 270.0, 270.0], atol=1e-6)
    np.testing.assert_allclose(list(lmp.values()), [1.2] * 9, atol=1e-9)


def test_congested_line_splits_prices():
    case = MatpowerCase(
        100.0,
        bus=np.array([[1, 3, 0, 0, 0, 0, 1, 1, 0, 1, 1, 1, 1], [2, 1, 100, 0, 0, 0, 1, 1, 0, 1, 1, 1, 1]], float),
        gen=np.array([[1, 0, 0, 0, 0, 1, 100, 1, 200, 0], [2, 0, 0, 0, 0, 1, 100, 1, 200, 0]], float),
        branch=np.array([[1, 2, 0, 0.1, 0, 60, 60, 60, 0, 0, 1]], float),
    )
    lmp, dispatch = dc_opf_lmp(case, costs=[10.0, 30.0])
    np.testing.assert_allclose(dispatch, [60.0, 40.0], atol=1e-6)
    assert lmp[1] == pytest.approx(10.0) and lmp[2] == pytest.approx(30.0)


def test_converter_script(tmp_path):
    out = tmp_path / "grid"
    subprocess.run(
        [sys.executable, str(ROOT / "scripts" / "matpower_to_csv.py"), str(CASE9_M), str(out), "--dc-lmp"],
        check=True,
        capture_output=True,
    )
    grid = load_grid_csv(out)
    assert len(grid.buses) == 9
    assert all(b.lmp == pytest.approx(0.0012) for b in grid.buses)
