import numpy as np
import pytest

from shearmark.image import Image
from shearmark.marks import KeySet, default_logo, prepare_marks

KEYS = KeySet(0x1234, 0xBEEF, 0xC0FFEE)


def textured(size=128, seed=0, channels=1):
    """Smooth gradient plus mid-frequency pattern plus noise; stands in for a natural image."""
    rng = np.random.default_rng(seed)
    i, j = np.mgrid[0:size, 0:size] / size
    base = 90 + 70 * np.sin(3 * i + 2 * j) + 30 * np.cos(17 * i * j) + rng.normal(0, 12, (size, size))
    base[size // 3 : size // 2, size // 4 : size // 2] += 40 * np.sign(np.sin(40 * j[size // 3 : size // 2, size // 4 : size // 2]))
    base = np.clip(np.round(base), 0, 255)
    if channels == 3:
        return Image(np.stack([base, np.clip(base * 0.8 + 30, 0, 255).round(), np.clip(255 - base, 0, 255)], -1))
    return Image(base)


@pytest.fixture(scope="session")
def gray128():
    return textured(128, 0)


@pytest.fixture(scope="session")
def marks128():
    return prepare_marks(default_logo(8, 8), KEYS, 128, 128)


# one line per acceptance criterion, printed after the run
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
