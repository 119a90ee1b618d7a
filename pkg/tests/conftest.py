def pytest_runtest_logreport(report):
    # one visible pass/fail line per acceptance criterion
    if report.when == "call" and "test_acceptance" in report.nodeid:
        status = "PASS" if report.passed else "FAIL"
        print(f"\n[ACCEPTANCE] {status}: {report.nodeid.split('::')[-1]}")
