import numpy as np
import pytest

from kgetot.checkpoint import MAGIC, Checkpoint, CheckpointError
from kgetot.config import KEYS, PRESETS, TrainConfig, from_dict, read_config_file, resolve
from kgetot.encoder import EmbeddingSpace


def test_defaults():
    cfg = resolve(environ={})
    t = cfg.train
    assert (t.dim, t.lr, t.heads, t.temperatures) == (100, 0.001, 5, (0.5, 1.0, 1.5, 2.0, 2.5))
    assert (cfg.loss.alpha, cfg.loss.beta, cfg.loss.theta) == (2.0, 2.0, 0.7)
    assert (t.epsilon, t.sinkhorn_iters, t.sinkhorn_tol) == (0.05, 200, 1e-6)


def test_precedence(tmp_path):
    f = tmp_path / "cfg"
    f.write_text("# comment\ndim = 16\nlr = 0.01\nepochs = 3\npreset = yago43ket\n")
    env = {"KGETOT_LR": "0.02", "KGETOT_EPOCHS": "4"}
    cfg = resolve(f, {"epochs": 5}, environ=env)
    assert cfg.train.dim == 16 and cfg.train.lr == 0.02 and cfg.train.epochs == 5
    assert cfg.train.light_layers == PRESETS["yago43ket"]["light_layers"]
    assert cfg.loss.theta == 0.5
    assert cfg.sources == {"dim": "file", "lr": "env", "epochs": "flags", "light_layers": "preset",
                           "comp_layers": "preset", "theta": "preset"}


def test_file_overrides_preset(tmp_path):
    f = tmp_path / "cfg"
    f.write_text("theta = 0.9\n")
    assert resolve(f, {"preset": "fb15ket"}, environ={}).loss.theta == 0.9


def test_value_conversion():
    cfg = resolve(flags={"barycentric": "false", "temperatures": "1, 2", "views": "e2t tct", "loc": "None"},
                  environ={})
    assert cfg.train.barycentric is False
    assert cfg.train.temperatures == (1.0, 2.0)
    assert cfg.train.views == ("e2t", "tct")


@pytest.mark.parametrize("bad", [{"dim": 0}, {"views": "e2t,bogus"}, {"lr": -1}, {"preset": "nope"},
                                 {"barycentric": "maybe"}, {"unknown_key": 1}])
def test_invalid_values(bad):
    with pytest.raises(ValueError):
        resolve(flags=bad, environ={})


def test_bad_config_file(tmp_path):
    f = tmp_path / "cfg"
    f.write_text("dim 3\n")
    with pytest.raises(ValueError, match="cfg:1"):
        read_config_file(f)
    f.write_text("colour = red\n")
    with pytest.raises(ValueError):
        read_config_file(f)


def test_as_dict_round_trip():
    cfg = resolve(flags={"dim": 7, "weight_fn": "laplace"}, environ={})
    again = from_dict(cfg.as_dict())
    assert again.train == cfg.train and again.loss == cfg.loss


def test_every_key_is_a_field():
    assert "dim" in KEYS and "theta" in KEYS and len(KEYS) == len(set(KEYS))
    assert set(TrainConfig.__dataclass_fields__) <= set(KEYS)


def make_ckpt():
    space = EmbeddingSpace(4, 3, 2, 6, dim=3, comp_layers=1).reset_parameters(0)
    return space, Checkpoint.from_space(space, {"note": "x", "nested": {"a": [1, 2]}})


def test_checkpoint_round_trip(tmp_path):
    space, ckpt = make_ckpt()
    ckpt.save(tmp_path / "m.ckpt")
    raw = (tmp_path / "m.ckpt").read_bytes()
    assert raw.startswith(MAGIC)
    back = Checkpoint.load(tmp_path / "m.ckpt")
    assert back.header["nested"] == {"a": [1, 2]}
    assert set(back.tables) == set(ckpt.tables)
    for k in ckpt.tables:
        assert np.array_equal(back.tables[k], ckpt.tables[k])
    other = EmbeddingSpace(4, 3, 2, 6, dim=3, comp_layers=1).reset_parameters(1)
    back.load_into(other)
    for (n1, p1), (n2, p2) in zip(space.named_parameters(), other.named_parameters()):
        assert n1 == n2 and np.array_equal(p1.detach().numpy(), p2.detach().numpy())
    back.save(tmp_path / "again.ckpt")
    assert (tmp_path / "again.ckpt").read_bytes() == raw


def test_checkpoint_errors(tmp_path):
    (tmp_path / "junk").write_bytes(b"not a checkpoint")
    with pytest.raises(CheckpointError):
        Checkpoint.load(tmp_path / "junk")
    _, ckpt = make_ckpt()
    with pytest.raises(CheckpointError):
        ckpt.load_into(EmbeddingSpace(5, 3, 2, 6, dim=3, comp_layers=1))
    with pytest.raises(CheckpointError):
        ckpt.load_into(EmbeddingSpace(4, 3, 2, 6, dim=3, comp_layers=2))
