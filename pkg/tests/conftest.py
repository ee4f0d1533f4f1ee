import os

from hypothesis import HealthCheck, settings

# derandomized so two runs of the suite see the same examples
settings.register_profile(
    "repro",
    derandomize=True,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "repro"))


_CRITERIA = {}


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None or call.when != "call":
        return
    n, title = mark.args
    n = (n, mark.kwargs.get("variant", ""))
    ok = call.excinfo is None
    xfail = item.get_closest_marker("xfail")
    note = ""
    if xfail is not None and not ok:
        note = " (" + xfail.kwargs.get("reason", "") + ")"
    prev = _CRITERIA.get(n, (title, True, ""))
    _CRITERIA[n] = (title, prev[1] and ok, prev[2] or note)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, ok, note = _CRITERIA[n]
        label = f"{n[0]:2d}{n[1]}".ljust(4)
        terminalreporter.write_line(f"criterion {label} {'PASS' if ok else 'FAIL'}: {title}{note}")
