import os

import pytest


def pytest_addoption(parser):
    parser.addoption(
        "--reproduction-replicates",
        type=int,
        default=int(os.environ.get("ZMCOUNTS_REPLICATES", "200")),
        help="replicates per reproduction experiment (default 200; the full "
        "benchmark count is 1000)",
    )
    parser.addoption(
        "--jobs",
        type=int,
        default=min(4, os.cpu_count() or 1),
        help="worker processes for replicate-level parallelism",
    )


@pytest.fixture(scope="session")
def replicates(request):
    return request.config.getoption("--reproduction-replicates")


@pytest.fixture(scope="session")
def jobs(request):
    return request.config.getoption("--jobs")
