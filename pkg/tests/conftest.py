import pytest

from ntckws import kernels
from ntckws.graph import Lexicon, build_search_space
from ntckws.simulation import DEFAULT_KEYWORD, default_vocabulary

# criterion number -> [(passed, detail), ...]; filled by test_acceptance.py
ACCEPTANCE: dict = {}


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    before = kernels.backend()
    kernels.use_backend(request.param)
    yield request.param
    kernels.use_backend(before)


@pytest.fixture(scope="session")
def vocab():
    return default_vocabulary()


@pytest.fixture(scope="session")
def spaces(vocab):
    lex = Lexicon.phone_lexicon(vocab)
    return (build_search_space(DEFAULT_KEYWORD, lex, vocab),
            build_search_space(DEFAULT_KEYWORD, lex, vocab, wildcards=True))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        runs = ACCEPTANCE[k]
        ok = all(r[0] for r in runs)
        detail = " | ".join(r[1] for r in runs)
        terminalreporter.write_line(f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
