VERDICTS = []


def record_verdict(code, passed, detail):
    line = f"{code} {'PASS' if passed else 'FAIL'}: {detail}"
    VERDICTS.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
