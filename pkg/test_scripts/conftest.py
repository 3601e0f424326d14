"""
Shared fixtures: the molecule corpus, the SIDER-format sample and isolated settings.
"""
import os
import sys

import numpy as np
import pytest

# Add the project root to Python path so tests import the working tree
project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, project_root)

from molseq.selfies import decode_selfies, semantic_alphabet  # noqa: E402
from molseq.smiles import canonical_smiles, parse_smiles  # noqa: E402
from molseq.storage import read_lines  # noqa: E402

FIXTURES = os.path.join(os.path.dirname(os.path.abspath(__file__)), "fixtures")
CORPUS_SIZE = 200


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running training checks")


def random_selfies(rng: np.random.Generator, max_length: int = 50) -> str:
    alphabet = semantic_alphabet()
    length = int(rng.integers(1, max_length + 1))
    return "".join(alphabet[k] for k in rng.integers(0, len(alphabet), size=length))


def build_corpus(size: int = CORPUS_SIZE, seed: int = 7):
    """Hand-written molecules topped up with seeded SELFIES-derived ones."""
    corpus = read_lines(os.path.join(FIXTURES, "corpus.smi"))
    seen = {canonical_smiles(parse_smiles(s)) for s in corpus}
    rng = np.random.default_rng(seed)
    while len(corpus) < size:
        mol = decode_selfies(random_selfies(rng, 30))
        if mol.n_atoms < 2:
            continue
        text = canonical_smiles(mol)
        if text not in seen:
            seen.add(text)
            corpus.append(text)
    return corpus


@pytest.fixture(scope="session")
def handwritten_smiles():
    return read_lines(os.path.join(FIXTURES, "corpus.smi"))


@pytest.fixture(scope="session")
def corpus():
    return build_corpus()


@pytest.fixture(scope="session")
def sider_path():
    return os.path.join(FIXTURES, "sider_sample.csv")


@pytest.fixture
def isolated_env(tmp_path, monkeypatch):
    """Keep logs and data out of the working tree."""
    monkeypatch.setenv("MOLSEQ_LOG_DIR", str(tmp_path / "logs"))
    monkeypatch.setenv("MOLSEQ_DATA_DIR", str(tmp_path / "data"))
    monkeypatch.setenv("MOLSEQ_WORKERS", "1")
    monkeypatch.delenv("MOLSEQ_LOG_LEVEL", raising=False)
    return tmp_path
