import numpy as np
import pytest

from domainlm.model import ModelConfig, init_parameters
from domainlm.synthetic import binary_corpus
from domainlm.tokenizer import Tokenizer
from domainlm.training import TrainingConfig, pack_segments, pretrain_mlm

# A sentence of pool/glue words that all tokenize to single tokens; used by
# memorization-style tests.
MEMO_SENTENCE = "the moderator loop near reactor vessel with neutron flux"


@pytest.fixture(scope="session")
def toy_docs():
    return binary_corpus(280, seed=11)


@pytest.fixture(scope="session")
def toy_tokenizer(toy_docs):
    texts = [d.text for d in toy_docs] + [MEMO_SENTENCE] * 5
    return Tokenizer.train(texts, 512)


@pytest.fixture(scope="session")
def toy_model_config(toy_tokenizer):
    return ModelConfig(
        num_layers=2,
        num_heads=2,
        hidden_dim=32,
        ff_dim=64,
        vocab_size=toy_tokenizer.vocab_size,
        max_positions=64,
        dropout_rate=0.0,
    )


@pytest.fixture(scope="session")
def toy_base_checkpoint(toy_docs, toy_tokenizer, toy_model_config):
    """A lightly pretrained encoder shared by fine-tuning tests."""
    segments = pack_segments(
        (toy_tokenizer.encode(d.text) for d in toy_docs), toy_tokenizer.sep_id, 32
    )
    config = TrainingConfig(
        learning_rate=3e-3, batch_size=16, total_steps=200, log_every=100, seed=3
    )
    return pretrain_mlm(config, segments, toy_model_config, toy_tokenizer).checkpoint


def finite_difference_gradients(loss_fn, params, names=None, h=1e-4):
    """Central-difference gradients of loss_fn() w.r.t. selected parameters."""
    grads = {}
    for name in names if names is not None else params:
        flat = params[name].data.reshape(-1)
        g = np.zeros_like(flat)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + h
            up = loss_fn()
            flat[i] = original - h
            down = loss_fn()
            flat[i] = original
            g[i] = (up - down) / (2.0 * h)
        grads[name] = g.reshape(params[name].data.shape)
    return grads


def max_relative_error(a, b, floor=1e-3):
    """Elementwise |a-b| / max(|a|, |b|, floor), maximized.

    The floor keeps the ratio meaningful where both gradients are near zero;
    there the check still demands agreement within floor * tolerance.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom))


@pytest.fixture
def fd_gradients():
    return finite_difference_gradients


@pytest.fixture
def rel_error():
    return max_relative_error


def random_parameters(config: ModelConfig, seed: int):
    return init_parameters(config, seed)
