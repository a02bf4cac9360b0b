from __future__ import annotations

import numpy as np
import pytest

from darboux.catalog import m1_metric, m2_metric
from darboux.config import MetricSpec, RunConfig
from darboux.frames import rotation_matrix
from darboux.seed import build_z0, taylor_metric

M1_SPEC = dict(
    g11="1 + (u + v^3/6)^2",
    g12="(u + v^3/6)*(u*v^2/2)",
    g22="1 + (u*v^2/2)^2",
)


@pytest.fixture(scope="session")
def m1():
    return m1_metric()


@pytest.fixture(scope="session")
def m2():
    return m2_metric()


@pytest.fixture(scope="session")
def m1_rotated(m1):
    # the pipeline frame for this fixture: hyperbolic cones vertical
    return m1.transformed(rotation_matrix(np.pi / 4))


@pytest.fixture(scope="session")
def m1_seed4(m1_rotated):
    return build_z0(taylor_metric(m1_rotated, 4), 4)


def m1_run_config(resolution=129, eps=0.05):
    spec = MetricSpec(half_width=0.5, resolution=resolution, **M1_SPEC)
    return RunConfig(metric=spec, eps=eps, m_star=4,
                     sector_resolution=resolution, label="m1")


@pytest.fixture(scope="session")
def m1_pipeline_full():
    """One full-resolution pipeline run shared by the integration tests."""
    from darboux.pipeline import run_pipeline

    report, artifacts = run_pipeline(m1_run_config(129))
    return report, artifacts
