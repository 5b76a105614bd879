import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from weaktext.config import CorpusConfig  # noqa: E402
from weaktext.synth import write_corpus  # noqa: E402


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """Four synthetic pages with ground truth and pseudo-LF sidecars."""
    out = tmp_path_factory.mktemp("corpus")
    corpus = CorpusConfig()
    write_corpus(out, corpus.synth, 4, corpus.pseudo_lfs)
    return out


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
