"""
Replay Log Service

Line-delimited JSON for recorded play and run events.

Replay files start with a header record (game config and state schema) followed
by one step record per transition. Reading checks the schema against the one the
reader expects, so a replay from another board is rejected instead of silently
mis-scored. Malformed step lines are skipped with a warning.
"""

import json
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple, Union

from ..models.schemas import GameConfig
from ..utils.exceptions import IngestionError, SchemaError
from ..utils.logger import logger
from .distance_metric import StateSchema
from .game_engine import Action, EventTag, GameState, Transition

REPLAY_VERSION = 1


def _dumps(record: Dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def replay_lines(config: GameConfig, transitions: Iterable[Transition]) -> List[str]:
    header = {
        "kind": "header",
        "version": REPLAY_VERSION,
        "config": config.model_dump(mode="json"),
        "schema": StateSchema.from_config(config).to_dict(),
    }
    lines = [_dumps(header)]
    for index, t in enumerate(transitions):
        record: Dict[str, Any] = {
            "kind": "step",
            "index": index,
            "state": t.state.to_dict(),
            "action": t.action.to_dict(),
            "next_state": t.next_state.to_dict(),
            "events": [e.value for e in t.events],
        }
        # a novelty switched on mid-game: keep the rules in force
        if t.next_state.config is not None and t.next_state.config != config:
            record["next_config"] = t.next_state.config.model_dump(mode="json")
        if t.state.config is not None and t.state.config != config:
            record["config"] = t.state.config.model_dump(mode="json")
        lines.append(_dumps(record))
    return lines


def write_replay(path: Union[str, Path], config: GameConfig, transitions: Iterable[Transition]) -> Path:
    """
    Raises:
        OSError: when the destination is not writable
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = replay_lines(config, transitions)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info(f"Wrote replay with {len(lines) - 1} steps to {path}")
    return path


def read_replay(
    path: Union[str, Path],
    expected_schema: Optional[StateSchema] = None,
) -> Tuple[GameConfig, List[Transition]]:
    """
    Load a replay file.

    Args:
        path: Replay file
        expected_schema: Schema the caller scores with (default: the header's own)

    Returns:
        Tuple of the header config and the transitions in order

    Raises:
        IngestionError: missing or malformed header, or a schema mismatch
    """
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise IngestionError(f"cannot read replay {path}: {e}")
    lines = [line for line in lines if line.strip()]
    if not lines:
        raise IngestionError(f"replay {path} is empty")

    try:
        header = json.loads(lines[0])
        if header.get("kind") != "header":
            raise IngestionError(f"replay {path} does not start with a header record")
        config = GameConfig.model_validate(header["config"])
        schema = StateSchema.from_dict(header["schema"])
    except (json.JSONDecodeError, KeyError, ValueError, SchemaError) as e:
        raise IngestionError(f"replay {path} has a malformed header: {e}")

    if schema != StateSchema.from_config(config):
        raise IngestionError(f"replay {path}: header schema does not match its game config")
    if expected_schema is not None and schema != expected_schema:
        raise IngestionError(
            f"replay {path}: schema mismatch ({len(schema)} attributes, expected {len(expected_schema)})"
        )

    transitions: List[Transition] = []
    for number, line in enumerate(lines[1:], start=2):
        try:
            record = json.loads(line)
            if record.get("kind") != "step":
                continue
            before = GameConfig.model_validate(record["config"]) if "config" in record else config
            after = GameConfig.model_validate(record["next_config"]) if "next_config" in record else config
            transitions.append(Transition(
                state=GameState.from_dict(record["state"], before),
                action=Action.from_dict(record["action"]),
                next_state=GameState.from_dict(record["next_state"], after),
                events=tuple(EventTag(e) for e in record.get("events", [])),
            ))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            logger.warning(f"Skipping malformed replay line {number} in {path}: {e}")
    return config, transitions


class EventLog:
    """Ordered run events (novelty reports, injections, phase changes), written as JSON lines."""

    def __init__(self):
        self.records: List[Dict[str, Any]] = []

    def __len__(self) -> int:
        return len(self.records)

    def append(self, kind: str, **fields: Any) -> Dict[str, Any]:
        record = {"sequence": len(self.records), "kind": kind, **fields}
        self.records.append(record)
        return record

    def extend(self, records: Iterable[Dict[str, Any]]) -> None:
        for record in records:
            fields = {k: v for k, v in record.items() if k not in ("sequence", "kind")}
            self.append(record.get("kind", "event"), **fields)

    def to_jsonl(self) -> str:
        return "".join(_dumps(r) + "\n" for r in self.records)

    def write(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_jsonl(), encoding="utf-8")
        return path
