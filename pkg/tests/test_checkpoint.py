import numpy as np
import pytest

from backend.app.models.schemas import A2CSettings, GatSettings
from backend.app.services.agents import Agent
from backend.app.services.checkpoint import (
    MAGIC,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    parameter_hash,
    save_checkpoint,
)
from backend.app.utils.exceptions import IngestionError


@pytest.fixture
def parameters():
    return {
        "hidden.weight": np.arange(6, dtype=np.float64).reshape(2, 3),
        "hidden.bias": np.array([0.5, -0.25]),
        "scale": np.array(3.0),
    }


def test_checkpoint_file(tmp_path, parameters):
    path = save_checkpoint(tmp_path / "ckpt" / "kg_update_0.nkga", parameters, {"update_index": 0, "agent": "kg"})
    loaded, metadata = load_checkpoint(path)
    assert metadata == {"agent": "kg", "update_index": 0}
    assert loaded.keys() == parameters.keys()
    assert all(np.array_equal(loaded[k], parameters[k]) for k in parameters)
    assert loaded["scale"].shape == ()
    assert path.read_bytes().startswith(MAGIC)


def test_encoding_is_canonical(parameters):
    reordered = dict(reversed(list(parameters.items())))
    assert encode_checkpoint(parameters, {"b": 1, "a": 2}) == encode_checkpoint(reordered, {"a": 2, "b": 1})
    assert parameter_hash(parameters) == parameter_hash(reordered)


def test_corrupt_checkpoints_are_rejected(parameters):
    blob = encode_checkpoint(parameters, {})
    with pytest.raises(IngestionError, match="magic"):
        decode_checkpoint(b"XXXX" + blob[4:])
    with pytest.raises(IngestionError, match="version"):
        decode_checkpoint(blob[:4] + (99).to_bytes(2, "little") + blob[6:])
    with pytest.raises(IngestionError):
        decode_checkpoint(blob[:-5])
    with pytest.raises(IngestionError, match="trailing"):
        decode_checkpoint(blob + b"\x00")


def test_missing_file(tmp_path):
    with pytest.raises(IngestionError):
        load_checkpoint(tmp_path / "missing.nkga")


def test_agent_parameters_survive_a_checkpoint(tmp_path, mini_config):
    gat = GatSettings(heads=1, hidden=3, output=4, hops=1)
    agent = Agent(mini_config, "kg", seed=5, a2c=A2CSettings(hidden=6), gat=gat)
    path = save_checkpoint(tmp_path / "agent.nkga", agent.parameters(), {})
    restored = Agent(mini_config, "kg", seed=6, a2c=A2CSettings(hidden=6), gat=gat)
    assert parameter_hash(restored.parameters()) != parameter_hash(agent.parameters())
    restored.load_parameters(load_checkpoint(path)[0])
    assert parameter_hash(restored.parameters()) == parameter_hash(agent.parameters())
