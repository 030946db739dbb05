"""In-process publish/subscribe bus with hierarchical topics.

Topics are ``/``-separated segment paths. A subscription pattern matches every
topic it is a segment prefix of, so ``Data/consumer`` receives
``Data/consumer/consumer1``. Delivery happens in discrete rounds (heartbeats):
a message published during round ``r`` becomes visible in inboxes after the
``deliver_round`` call that closes round ``r + delay``. Loss and delay are drawn
per message from a seeded generator, so a run is reproducible end to end.
"""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

SEPARATOR = "/"


class TopicError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class Topic:
    segments: tuple[str, ...]

    def __post_init__(self):
        if not self.segments:
            raise TopicError("topic needs at least one segment")
        for seg in self.segments:
            if not isinstance(seg, str) or not seg:
                raise TopicError(f"empty or non-string segment in {self.segments!r}")
            if SEPARATOR in seg:
                raise TopicError(f"segment {seg!r} contains {SEPARATOR!r}")

    @classmethod
    def parse(cls, text: "str | Topic") -> "Topic":
        if isinstance(text, Topic):
            return text
        if not isinstance(text, str) or not text:
            raise TopicError(f"malformed topic {text!r}")
        return cls(tuple(text.split(SEPARATOR)))

    def child(self, *segments: str) -> "Topic":
        return Topic(self.segments + tuple(segments))

    def __str__(self) -> str:
        return SEPARATOR.join(self.segments)


def topic_matches(pattern: "Topic | str", topic: "Topic | str") -> bool:
    p = Topic.parse(pattern).segments
    t = Topic.parse(topic).segments
    return len(p) <= len(t) and t[: len(p)] == p


# Topic namespace used by the consensus agents.
CONSENSUS_ROOT = Topic(("consensus",))
NODE_TOPIC = CONSENSUS_ROOT.child("node")
CONTROL_TOPIC = CONSENSUS_ROOT.child("control")


def node_topic(node_id: str) -> Topic:
    return NODE_TOPIC.child(node_id)


@dataclass(frozen=True)
class Message:
    topic: Topic
    payload: Mapping[str, float]
    publisher: str
    publish_round: int = -1

    def __post_init__(self):
        object.__setattr__(self, "topic", Topic.parse(self.topic))
        object.__setattr__(self, "payload", dict(self.payload))


@dataclass(frozen=True)
class DeliveryPolicy:
    drop_probability: float = 0.0
    delay_rounds: int = 0
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.drop_probability <= 1.0:
            raise ValueError(f"drop_probability must lie in [0, 1], got {self.drop_probability}")
        if int(self.delay_rounds) != self.delay_rounds or self.delay_rounds < 0:
            raise ValueError(f"delay_rounds must be a nonnegative integer, got {self.delay_rounds}")


@dataclass(frozen=True)
class BusEvent:
    round: int
    event: str  # "publish" | "deliver" | "drop"
    topic: str
    publisher: str
    subscriber: str = ""


EVENT_LOG_HEADER = ("round", "event", "topic", "publisher", "subscriber")


@dataclass
class _Pending:
    due: int
    dropped: bool
    seq: int
    message: Message


@dataclass
class BusStats:
    published: int = 0
    delivered: int = 0  # messages resolved by delivery (any number of recipients)
    dropped: int = 0
    inbox_deliveries: int = 0


class MessageBus:
    """Single-owner, round-based message bus.

    Not thread-safe; run one bus per simulation.
    """

    def __init__(self, policy: DeliveryPolicy | None = None, record_events: bool = True):
        self.policy = policy or DeliveryPolicy()
        self.round = 0
        self.stats = BusStats()
        self.record_events = record_events
        self.events: list[BusEvent] = []
        self._rng = np.random.default_rng(self.policy.rng_seed)
        self._seq = itertools.count()
        self._queue: list[_Pending] = []
        self._subs: dict[tuple[str, Topic], int] = {}
        self._patterns: dict[str, list[Topic]] = {}
        self._inboxes: dict[str, list[Message]] = {}
        self._sub_ids = itertools.count(1)
        self._route_cache: dict[Topic, list[str]] = {}

    # -- subscriptions ----------------------------------------------------

    def subscribe(self, subscriber: str, pattern: "Topic | str") -> int:
        pat = Topic.parse(pattern)
        key = (subscriber, pat)
        if key in self._subs:
            return self._subs[key]
        sub_id = next(self._sub_ids)
        self._subs[key] = sub_id
        self._patterns.setdefault(subscriber, []).append(pat)
        self._route_cache.clear()
        self._inboxes.setdefault(subscriber, [])
        return sub_id

    def subscribers_for(self, topic: "Topic | str") -> list[str]:
        t = Topic.parse(topic)
        routed = self._route_cache.get(t)
        if routed is None:
            # one entry per subscriber even when several of its patterns match
            routed = sorted(
                sub for sub, pats in self._patterns.items()
                if any(topic_matches(p, t) for p in pats)
            )
            self._route_cache[t] = routed
        return routed

    # -- traffic ----------------------------------------------------------

    def publish(self, msg: Message) -> Message:
        """Stamp ``msg`` with the current round and queue it.

        The drop and delay outcome is drawn here, in publish order, which keeps
        the whole schedule a function of the seed.
        """
        if not isinstance(msg.topic, Topic):
            raise TopicError(f"malformed topic {msg.topic!r}")
        stamped = Message(msg.topic, msg.payload, msg.publisher, self.round)
        pol = self.policy
        dropped = pol.drop_probability > 0.0 and self._rng.random() < pol.drop_probability
        delay = int(self._rng.integers(0, pol.delay_rounds + 1)) if pol.delay_rounds else 0
        self._queue.append(_Pending(self.round + delay, dropped, next(self._seq), stamped))
        self.stats.published += 1
        self._log(self.round, "publish", stamped)
        return stamped

    def deliver_round(self) -> int:
        """Resolve every due message, advance the round, return inbox deliveries."""
        due = [q for q in self._queue if q.due <= self.round]
        self._queue = [q for q in self._queue if q.due > self.round]
        due.sort(key=lambda q: (q.message.publish_round, q.message.publisher,
                                str(q.message.topic), q.seq))
        self.round += 1
        count = 0
        for item in due:
            msg = item.message
            if item.dropped:
                self.stats.dropped += 1
                self._log(self.round, "drop", msg)
                continue
            self.stats.delivered += 1
            for sub in self.subscribers_for(msg.topic):
                self._inboxes[sub].append(msg)
                self._log(self.round, "deliver", msg, sub)
                count += 1
        self.stats.inbox_deliveries += count
        return count

    def drain_inbox(self, subscriber: str) -> list[Message]:
        box = self._inboxes.get(subscriber)
        if not box:
            return []
        self._inboxes[subscriber] = []
        return box

    @property
    def queued(self) -> int:
        return len(self._queue)

    # -- event log --------------------------------------------------------

    def _log(self, rnd: int, event: str, msg: Message, subscriber: str = "") -> None:
        if self.record_events:
            self.events.append(BusEvent(rnd, event, str(msg.topic), msg.publisher, subscriber))

    def event_log_csv(self) -> str:
        return format_event_log(self.events)


def format_event_log(events: Iterable[BusEvent]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(EVENT_LOG_HEADER)
    for ev in events:
        writer.writerow((ev.round, ev.event, ev.topic, ev.publisher, ev.subscriber))
    return buf.getvalue()
