import cv2
import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def backgrounds_dir(tmp_path_factory):
    """A handful of random-texture background images of assorted sizes."""
    d = tmp_path_factory.mktemp("backgrounds")
    rng = np.random.default_rng(123)
    for i, (h, w) in enumerate([(480, 640), (300, 300), (720, 1280), (350, 500)]):
        coarse = rng.integers(0, 256, (h // 16 + 1, w // 16 + 1, 3), dtype=np.uint8)
        img = cv2.resize(coarse, (w, h), interpolation=cv2.INTER_CUBIC)
        cv2.imwrite(str(d / f"bg_{i}.png"), img)
    return d


@pytest.fixture(scope="session")
def background_paths(backgrounds_dir):
    return sorted(str(p) for p in backgrounds_dir.iterdir())


_ACCEPTANCE = []


@pytest.fixture(scope="session")
def acceptance_report():
    """Record one PASS/FAIL line per acceptance criterion."""
    def record(criterion: int, passed: bool, detail: str) -> bool:
        line = f"{'PASS' if passed else 'FAIL'}  criterion {criterion}: {detail}"
        _ACCEPTANCE.append((criterion, line))
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE, key=lambda x: x[0]):
        terminalreporter.write_line(line)
