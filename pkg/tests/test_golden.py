"""Golden-file checks: builder output is pinned byte for byte on one tiny
instance per builder (regenerate with tests/make_golden.py after a
deliberate change)."""

import pytest

from conftest import GOLDEN_DIR
from make_golden import golden_cases


@pytest.mark.parametrize("name,prog", list(golden_cases()), ids=lambda v: v if isinstance(v, str) else "")
def test_golden_ir(name, prog):
    path = GOLDEN_DIR / f"{name}.ir"
    assert path.exists(), f"missing golden file {path}; run tests/make_golden.py"
    assert prog.to_text() == path.read_text()


def test_golden_files_reload():
    from drccp.conic import ConeProgram

    for path in sorted(GOLDEN_DIR.glob("*.ir")):
        prog = ConeProgram.from_text(path.read_text())
        assert prog.to_text() == path.read_text()
