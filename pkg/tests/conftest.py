"""Shared fixtures: a quick mechanical model and the acceptance-grade model."""

import numpy as np
import pytest

from retouchlab import renderer, synth

# The acceptance-grade distillation configuration. Also the CLI defaults;
# pinned here so every heavyweight test trains the exact same model once.
ACCEPT_STEPS = 16000
ACCEPT_BATCH = 16
ACCEPT_DRAWS = 16
ACCEPT_LR = 3e-3
ACCEPT_CROP = 16
ACCEPT_SCALE = 0.25
ACCEPT_SEED = 0
CORPUS_N = 64
CORPUS_SIZE = 64
CORPUS_SEED = 100
EVAL_SEED = 999


@pytest.fixture(scope="session")
def train_corpus():
    return synth.synth_corpus(CORPUS_N, CORPUS_SIZE, CORPUS_SIZE, seed=CORPUS_SEED)


@pytest.fixture(scope="session")
def holdout_images():
    # different seed: never seen during distillation
    return synth.synth_corpus(12, 64, 64, seed=EVAL_SEED)


@pytest.fixture(scope="session")
def tiny_model_path(tmp_path_factory, train_corpus):
    """A mechanically valid (not converged) checkpoint for CLI plumbing tests."""
    cfg = renderer.DistillConfig(steps=60, batch=8, draws=4, seed=7)
    res = renderer.distill(cfg, train_corpus[:8])
    path = tmp_path_factory.mktemp("model") / "tiny.bin"
    renderer.save_model(str(path), res.net, res.adapter)
    return path


@pytest.fixture(scope="session")
def distilled(train_corpus):
    """The acceptance-grade renderer; trained once per session (minutes)."""
    cfg = renderer.DistillConfig(
        steps=ACCEPT_STEPS,
        batch=ACCEPT_BATCH,
        crop=ACCEPT_CROP,
        lr=ACCEPT_LR,
        seed=ACCEPT_SEED,
        scale=ACCEPT_SCALE,
        draws=ACCEPT_DRAWS,
    )
    return renderer.distill(cfg, train_corpus)
