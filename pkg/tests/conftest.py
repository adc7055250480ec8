import pytest


def pytest_addoption(parser):
    parser.addoption(
        "--extended",
        action="store_true",
        default=False,
        help="run the heaviest benchmark tests (Lorenz recovery, ~30 min)",
    )


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "slow: multi-minute benchmark run (included by default)"
    )
    config.addinivalue_line(
        "markers", "extended: heaviest benchmarks, only run with --extended"
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--extended"):
        return
    skip = pytest.mark.skip(reason="needs --extended")
    for item in items:
        if "extended" in item.keywords:
            item.add_marker(skip)
