# Copyright (c) Meta Platforms, Inc. and affiliates.
# All rights reserved.
#
# This source code is licensed under the terms described in the LICENSE file in
# the root directory of this source tree.
# Yes/no verifiers: world oracle, caption self-belief and wire-protocol clients
import json
import logging
import select
import shlex
import socket
import subprocess
import time
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Optional, Set, Tuple

import requests

from structreward.core.matcher import EventMatching, ObjectMap
from structreward.errors import (
    MalformedResponse,
    UnknownSlotAnchor,
    VerifierError,
    VerifierTimeout,
    VerifierUnavailable,
)
from structreward.generators.question_gen import VerificationQuestion
from structreward.generators.world_sim import WorldState, load_world
from structreward.models.caption_ir import ANCHOR_PATTERN, EVENT_ID_PATTERN, StructuredCaption
from structreward.parsers.lexicon import Lexicon, default_lexicon
from structreward.utils.config import VerifierSettings
from structreward.utils.similarity import canonicalize

logger = logging.getLogger(__name__)

YES = "yes"
NO = "no"
# Prefix for generated ids that have no reference counterpart
UNMAPPED = "gen:"


@dataclass(frozen=True)
class Answer:
    value: str

    def __post_init__(self):
        if self.value not in (YES, NO):
            raise MalformedResponse(f"answer must be 'yes' or 'no', got {self.value!r}")

    @classmethod
    def of(cls, holds: bool) -> "Answer":
        return cls(YES if holds else NO)


class _Scene:
    """Closed-world facts a structured question is checked against"""

    def __init__(
        self,
        entities: Dict[str, Tuple[str, Set[str]]],
        relations: Set[Tuple[str, str, str]],
        events: List[Tuple[str, str, Tuple[str, ...]]],
        precedes,
    ):
        self.entities = entities
        self.relations = relations
        self.events = events
        self.event_ids = {e[0]: e for e in events}
        self.precedes = precedes

    @classmethod
    def from_world(cls, world: WorldState) -> "_Scene":
        entities = {e.id: (e.head, set(e.attributes)) for e in world.entities}
        events = [(e.id, e.predicate, e.participants) for e in world.events]
        times = {e.id: e.time_index for e in world.events}
        return cls(entities, world.all_relations(), events, lambda a, b: a != b and times[a] < times[b])

    def resolve(self, slot: Dict[str, Any]) -> List[str]:
        """Event ids matching an event slot; a pinned id must agree on predicate and binding"""
        predicate = slot.get("predicate")
        participants = tuple(slot.get("participants") or ())
        event_id = slot.get("id")
        if event_id is not None:
            found = self.event_ids.get(event_id)
            if found and found[1] == predicate and found[2] == participants:
                return [event_id]
            return []
        return [e[0] for e in self.events if e[1] == predicate and e[2] == participants]


def _check_anchor(anchor: Any) -> str:
    if not isinstance(anchor, str) or not ANCHOR_PATTERN.match(anchor):
        raise UnknownSlotAnchor(f"slot anchor {anchor!r} is not an object id")
    return anchor


def _check_event_slot(slot: Any) -> Dict[str, Any]:
    if not isinstance(slot, dict) or not slot.get("participants"):
        raise UnknownSlotAnchor(f"event slot {slot!r} has no participants")
    event_id = slot.get("id")
    if event_id is not None and (not isinstance(event_id, str) or not EVENT_ID_PATTERN.match(event_id)):
        raise UnknownSlotAnchor(f"slot event id {event_id!r} is not an event id")
    for anchor in slot["participants"]:
        _check_anchor(anchor)
    return slot


def _evaluate(scene: _Scene, question: VerificationQuestion) -> Answer:
    slots = question.slots
    if not slots:
        raise UnknownSlotAnchor(f"question '{question.text}' carries no structured slots")
    kind = question.kind
    if kind == "existence":
        _check_anchor(slots.get("object"))
        wanted = set(slots.get("attributes") or ())
        holds = any(
            head == slots.get("head") and wanted <= attrs for head, attrs in scene.entities.values()
        )
        return Answer.of(holds)
    if kind == "attribute":
        entity = scene.entities.get(_check_anchor(slots.get("object")))
        return Answer.of(entity is not None and slots.get("value") in entity[1])
    if kind == "relation":
        triple = (
            _check_anchor(slots.get("subject")),
            slots.get("predicate"),
            _check_anchor(slots.get("object")),
        )
        return Answer.of(triple in scene.relations)
    if kind == "event_occurrence":
        return Answer.of(bool(scene.resolve(_check_event_slot(slots.get("event")))))
    if kind == "temporal_order":
        firsts = scene.resolve(_check_event_slot(slots.get("first")))
        seconds = scene.resolve(_check_event_slot(slots.get("second")))
        return Answer.of(any(a != b and scene.precedes(a, b) for a in firsts for b in seconds))
    raise UnknownSlotAnchor(f"unknown question kind {kind!r}")


def oracle_answer(world: WorldState, q: VerificationQuestion) -> Answer:
    """Answer a question from its structured slots against the world"""
    return _evaluate(_Scene.from_world(world), q)


class VerifierBinding:
    """One backing for the yes/no answer function"""

    kind = "abstract"

    def answer(self, q: VerificationQuestion) -> Answer:
        raise NotImplementedError

    def close(self) -> None:
        pass

    def __enter__(self) -> "VerifierBinding":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


class WorldOracle(VerifierBinding):
    kind = "world_oracle"

    def __init__(self, world: WorldState):
        self.world = world
        self._scene = _Scene.from_world(world)

    def answer(self, q: VerificationQuestion) -> Answer:
        return _evaluate(self._scene, q)


class CaptionBeliefVerifier(VerifierBinding):
    """Answers as the captioner believes: from the generated caption's own units

    Generated anchors are carried into the reference id space through the object map and the
    event matching; anything unaligned keeps a private id no question can name. Order beliefs are
    the transitive closure of the caption's explicit orders.
    """

    kind = "self"

    def __init__(
        self,
        gen: StructuredCaption,
        object_map: ObjectMap,
        event_matching: EventMatching,
        lexicon: Optional[Lexicon] = None,
    ):
        lexicon = lexicon or default_lexicon()
        self.gen = gen

        def obj(anchor: str) -> str:
            return object_map.get(anchor) or UNMAPPED + anchor

        entities: Dict[str, Tuple[str, Set[str]]] = {o.id: (o.head, set()) for o in gen.objects}
        entities = {obj(a): v for a, v in entities.items()}
        for attr in gen.attributes:
            entities[obj(attr.object)][1].add(canonicalize(attr.value, lexicon))
        relations = {
            (obj(r.subject), canonicalize(r.predicate, lexicon), obj(r.object)) for r in gen.relations
        }

        event_ids: Dict[str, str] = {}
        events = []
        for event in gen.sorted_events():
            aligned = event_matching.pairs.get(event.id) or event_matching.conflicts.get(event.id)
            event_ids[event.id] = aligned or UNMAPPED + event.id
            events.append(
                (
                    event_ids[event.id],
                    canonicalize(event.predicate, lexicon),
                    tuple(obj(p) for p in event.participants),
                )
            )
        closure = _transitive_closure(
            (event_ids[o.before], event_ids[o.after])
            for o in gen.orders
            if o.explicit and o.before in event_ids and o.after in event_ids
        )
        self._scene = _Scene(entities, relations, events, lambda a, b: (a, b) in closure)

    def answer(self, q: VerificationQuestion) -> Answer:
        return _evaluate(self._scene, q)


def _transitive_closure(pairs: Iterable[Tuple[str, str]]) -> Set[Tuple[str, str]]:
    closure = set(pairs)
    while True:
        extra = {(a, d) for a, b in closure for c, d in closure if b == c} - closure
        if not extra:
            return closure
        closure |= extra


class _RetryingClient(VerifierBinding):
    """Shared request/response loop for external verifiers"""

    def __init__(self, timeout: float = 10.0, max_retries: int = 3, retry_delay: float = 1.0):
        self.timeout = timeout
        self.max_retries = max(1, max_retries)
        self.retry_delay = retry_delay
        self._next_id = 0

    def _exchange(self, request: Dict[str, Any]) -> Dict[str, Any]:
        raise NotImplementedError

    def _reset(self) -> None:
        pass

    def answer(self, q: VerificationQuestion) -> Answer:
        self._next_id += 1
        request = {"id": self._next_id, "text": q.text}
        for attempt in range(self.max_retries):
            try:
                response = self._exchange(request)
                break
            except (VerifierUnavailable, VerifierTimeout) as e:
                logger.warning(
                    f"{self.kind} verifier error (attempt {attempt + 1}/{self.max_retries}): {e}"
                )
                self._reset()
                if attempt == self.max_retries - 1:
                    raise
                time.sleep(self.retry_delay * (attempt + 1))
        return parse_response(response, request["id"])


def parse_response(response: Any, request_id: int) -> Answer:
    """Validate one wire response; unknown fields are ignored"""
    if not isinstance(response, dict):
        raise MalformedResponse(f"response must be a JSON object, got {response!r}")
    if response.get("id") != request_id:
        raise MalformedResponse(f"response id {response.get('id')!r} does not match request {request_id}")
    value = response.get("answer")
    if value not in (YES, NO):
        raise MalformedResponse(f"answer must be 'yes' or 'no', got {value!r}")
    return Answer(value)


def _decode_line(line: bytes) -> Dict[str, Any]:
    if not line:
        raise VerifierUnavailable("verifier closed the connection")
    try:
        return json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise MalformedResponse(f"response is not JSON: {e}") from None


def _encode_line(request: Dict[str, Any]) -> bytes:
    return (json.dumps(request, separators=(",", ":")) + "\n").encode("utf-8")


class TcpVerifier(_RetryingClient):
    """Newline-delimited JSON over a TCP stream, one request in flight"""

    kind = "tcp"

    def __init__(self, host: str, port: int, **kwargs: Any):
        super().__init__(**kwargs)
        self.host = host
        self.port = port
        self._sock: Optional[socket.socket] = None
        self._stream = None

    def _connect(self) -> None:
        try:
            self._sock = socket.create_connection((self.host, self.port), timeout=self.timeout)
        except OSError as e:
            raise VerifierUnavailable(f"cannot reach verifier at {self.host}:{self.port}: {e}") from None
        self._stream = self._sock.makefile("rwb")

    def _exchange(self, request: Dict[str, Any]) -> Dict[str, Any]:
        if self._sock is None:
            self._connect()
        try:
            self._stream.write(_encode_line(request))
            self._stream.flush()
            line = self._stream.readline()
        except socket.timeout:
            raise VerifierTimeout(f"no answer within {self.timeout}s") from None
        except OSError as e:
            raise VerifierUnavailable(f"connection to {self.host}:{self.port} failed: {e}") from None
        return _decode_line(line)

    def _reset(self) -> None:
        self.close()

    def close(self) -> None:
        if self._stream is not None:
            self._stream.close()
        if self._sock is not None:
            self._sock.close()
        self._sock = None
        self._stream = None


class StdioVerifier(_RetryingClient):
    """Newline-delimited JSON over a child process's stdin/stdout"""

    kind = "stdio"

    def __init__(self, command: str, **kwargs: Any):
        super().__init__(**kwargs)
        self.command = command
        self._proc: Optional[subprocess.Popen] = None

    def _start(self) -> None:
        try:
            self._proc = subprocess.Popen(
                shlex.split(self.command), stdin=subprocess.PIPE, stdout=subprocess.PIPE
            )
        except OSError as e:
            raise VerifierUnavailable(f"cannot start verifier '{self.command}': {e}") from None

    def _exchange(self, request: Dict[str, Any]) -> Dict[str, Any]:
        if self._proc is None or self._proc.poll() is not None:
            self._start()
        try:
            self._proc.stdin.write(_encode_line(request))
            self._proc.stdin.flush()
        except OSError as e:
            raise VerifierUnavailable(f"verifier process is gone: {e}") from None
        ready, _, _ = select.select([self._proc.stdout], [], [], self.timeout)
        if not ready:
            raise VerifierTimeout(f"no answer within {self.timeout}s")
        return _decode_line(self._proc.stdout.readline())

    def _reset(self) -> None:
        self.close()

    def close(self) -> None:
        if self._proc is not None:
            if self._proc.poll() is None:
                self._proc.kill()
            self._proc.wait()
            for stream in (self._proc.stdin, self._proc.stdout):
                if stream is not None:
                    stream.close()
        self._proc = None


class HttpVerifier(_RetryingClient):
    """POST {"id", "text"} and read {"id", "answer"} back"""

    kind = "http"

    def __init__(self, url: str, **kwargs: Any):
        super().__init__(**kwargs)
        self.url = url
        self._session = requests.Session()

    def _exchange(self, request: Dict[str, Any]) -> Dict[str, Any]:
        try:
            response = self._session.post(self.url, json=request, timeout=self.timeout)
            response.raise_for_status()
        except requests.exceptions.Timeout:
            raise VerifierTimeout(f"no answer within {self.timeout}s") from None
        except requests.exceptions.RequestException as e:
            raise VerifierUnavailable(f"verifier at {self.url} failed: {e}") from None
        try:
            return response.json()
        except ValueError as e:
            raise MalformedResponse(f"response is not JSON: {e}") from None

    def close(self) -> None:
        self._session.close()


SELF_BINDING = "self"


def open_binding(spec: str, settings: Optional[VerifierSettings] = None) -> Optional[VerifierBinding]:
    """Open a binding from its CLI form

    Args:
        spec: world:<file>, tcp:<host:port>, stdio:<command>, http(s)://... or self
        settings: Timeout and retry settings for external bindings

    Returns:
        The binding, or None for "self", which is built per caption pair
    """
    settings = settings or VerifierSettings()
    client_args = {
        "timeout": settings.timeout,
        "max_retries": settings.max_retries,
        "retry_delay": settings.retry_delay,
    }
    if spec == SELF_BINDING:
        return None
    if spec.startswith("world:"):
        return WorldOracle(load_world(spec[len("world:"):]))
    if spec.startswith("tcp:"):
        host, sep, port = spec[len("tcp:"):].rpartition(":")
        if not sep or not host or not port.isdigit():
            raise VerifierError(f"tcp binding must look like tcp:host:port, got {spec}")
        return TcpVerifier(host, int(port), **client_args)
    if spec.startswith("stdio:"):
        return StdioVerifier(spec[len("stdio:"):], **client_args)
    if spec.startswith(("http://", "https://")):
        return HttpVerifier(spec, **client_args)
    raise VerifierError(f"Unknown verifier binding: {spec}")


def answer(binding: VerifierBinding, q: VerificationQuestion) -> Answer:
    return binding.answer(q)
