from helpers import ACCEPTANCE

TITLES = {
    1: "layer-type ratio table from `bench cost`",
    2: "strategy equivalence sweep",
    3: "gradient correctness",
    4: "mask invariant of the weight gradient",
    5: "grouping degeneracy identities",
    6: "cost counters vs oracle multiply counts",
    7: "full-sweep report structure",
    8: "masked-convolution generality",
}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for c in sorted(ACCEPTANCE):
        results = ACCEPTANCE[c]
        ok = all(r for r, _ in results)
        failed = [d for r, d in results if not r]
        note = f"{sum(r for r, _ in results)}/{len(results)} checks"
        if failed:
            note += "; " + "; ".join(failed)
        tr.write_line(f"criterion {c} ({TITLES.get(c, '')}): {'PASS' if ok else 'FAIL'} [{note}]")
