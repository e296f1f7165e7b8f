import functools

import pytest
from hypothesis import HealthCheck, settings

from kreslingcap.config import Config
from kreslingcap.geometry import OrigamiParams, assemble
from kreslingcap.structure import MaterialParams, from_mesh

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_OUTCOMES = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.failed):
        _OUTCOMES[mark.args[0]] = (mark.args[1], "PASS" if rep.passed else "FAIL")


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_OUTCOMES):
        title, verdict = _OUTCOMES[num]
        terminalreporter.write_line(f"criterion {num} [{verdict}] {title}")


@functools.lru_cache(maxsize=None)
def default_mesh():
    return assemble(OrigamiParams())


@functools.lru_cache(maxsize=None)
def default_model():
    cfg = Config()
    return from_mesh(default_mesh(), cfg.material, cfg.geometry.wall_t, fold_coeff=cfg.model.fold_coeff,
                     facet_ratio=cfg.model.facet_ratio)


@functools.lru_cache(maxsize=None)
def coarse_model(stories=1, mirrored=True):
    cfg = Config()
    mesh = assemble(OrigamiParams(stories=stories, panel_subdiv=1), mirrored=mirrored)
    return mesh, from_mesh(mesh, MaterialParams(), cfg.geometry.wall_t, fold_coeff=cfg.model.fold_coeff,
                           facet_ratio=cfg.model.facet_ratio)


@pytest.fixture(scope="session")
def default_protocol(tmp_path_factory):
    """One default protocol run shared by the harness and acceptance suites: (bundle, seconds)."""
    import time

    from kreslingcap.harness import run_protocol

    out = tmp_path_factory.mktemp("protocol_a")
    t0 = time.perf_counter()
    bundle = run_protocol(Config(), str(out))
    return bundle, time.perf_counter() - t0
