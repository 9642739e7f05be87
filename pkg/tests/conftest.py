from collections import OrderedDict

import pytest

# criterion number -> {"limit": seconds, "parts": [(name, passed, detail, seconds)]}
ACCEPTANCE = OrderedDict()


@pytest.fixture
def record():
    def _record(number: int, part: str, passed: bool, detail: str, seconds: float, limit: float) -> bool:
        entry = ACCEPTANCE.setdefault(number, {"limit": limit, "parts": []})
        entry["parts"].append((part, bool(passed), detail, seconds))
        return bool(passed)

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        entry = ACCEPTANCE[number]
        parts = entry["parts"]
        total = sum(s for *_, s in parts)
        in_time = total <= entry["limit"]
        ok = in_time and all(p for _, p, _, _ in parts)
        detail = "; ".join(f"{name}: {d}" + ("" if p else " [FAIL]") for name, p, d, _ in parts)
        timing = f"{total:.1f}s of {entry['limit']:g}s" + ("" if in_time else " [SLOW]")
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  ({timing})  {detail}")
