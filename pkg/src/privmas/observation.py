"""Per-iteration record of every message placed on every link.

This is exactly what an eavesdropper tapping all links would capture, and
the raw material for the attacks in :mod:`privmas.adversary`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import IO, Iterable, Iterator, Union

import numpy as np

PLAINTEXT = "plaintext-real"
CIPHERTEXT = "ciphertext-bytes"

Payload = Union[float, tuple[float, ...], bytes]


@dataclass(frozen=True)
class Message:
    k: int
    sender: int
    receiver: int
    kind: str
    payload: Payload
    tag: str = ""      # protocol label visible on the wire, e.g. "request"
    key: str = ""      # hex fingerprint of the encrypting key, ciphertexts only

    def to_record(self) -> dict:
        if self.kind == CIPHERTEXT:
            payload = self.payload.hex()
        elif isinstance(self.payload, tuple):
            payload = list(self.payload)
        else:
            payload = self.payload
        rec = {"k": self.k, "edge": [self.sender, self.receiver], "kind": self.kind, "payload": payload}
        if self.tag:
            rec["tag"] = self.tag
        if self.key:
            rec["key"] = self.key
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "Message":
        payload = rec["payload"]
        if rec["kind"] == CIPHERTEXT:
            payload = bytes.fromhex(payload)
        elif isinstance(payload, list):
            payload = tuple(float(v) for v in payload)
        else:
            payload = float(payload)
        sender, receiver = rec["edge"]
        return cls(int(rec["k"]), int(sender), int(receiver), rec["kind"], payload,
                   rec.get("tag", ""), rec.get("key", ""))


class ObservationLog:
    """Append-only list of :class:`Message` with a few convenience indexes."""

    def __init__(self, messages: Iterable[Message] = ()):
        self._messages: list[Message] = list(messages)

    def append(self, msg: Message) -> None:
        self._messages.append(msg)

    def record_plain(self, k: int, sender: int, receiver: int, value) -> None:
        arr = np.asarray(value, dtype=float)
        payload = float(arr) if arr.ndim == 0 else tuple(float(v) for v in arr.ravel())
        self._messages.append(Message(k, sender, receiver, PLAINTEXT, payload))

    def __len__(self) -> int:
        return len(self._messages)

    def __iter__(self) -> Iterator[Message]:
        return iter(self._messages)

    def __getitem__(self, idx):
        return self._messages[idx]

    @property
    def iterations(self) -> list[int]:
        return sorted({m.k for m in self._messages})

    @property
    def horizon(self) -> int:
        """Number of logged rounds (``max k + 1``), 0 for an empty log."""
        return max((m.k for m in self._messages), default=-1) + 1

    def restrict(self, edges=None, receiver: int | None = None, max_k: int | None = None) -> "ObservationLog":
        """Sub-log seen by a tap on ``edges`` and/or addressed to ``receiver``."""
        keep = []
        edge_set = None if edges is None else {tuple(e) for e in edges}
        for m in self._messages:
            if edge_set is not None and (m.sender, m.receiver) not in edge_set:
                continue
            if receiver is not None and m.receiver != receiver:
                continue
            if max_k is not None and m.k > max_k:
                continue
            keep.append(m)
        return ObservationLog(keep)

    def plaintext_by_sender(self) -> dict[tuple[int, int], np.ndarray]:
        """Map ``(sender, k)`` to the (first) plaintext the sender put on any link.

        Broadcast protocols send one value per round; for per-edge messages use
        :meth:`plaintext_by_edge`.
        """
        out: dict[tuple[int, int], np.ndarray] = {}
        for m in self._messages:
            if m.kind == PLAINTEXT and (m.sender, m.k) not in out:
                out[(m.sender, m.k)] = np.atleast_1d(np.asarray(m.payload, dtype=float))
        return out

    def plaintext_by_edge(self) -> dict[tuple[int, int, int], np.ndarray]:
        """Map ``(sender, receiver, k)`` to the plaintext on that link."""
        return {
            (m.sender, m.receiver, m.k): np.atleast_1d(np.asarray(m.payload, dtype=float))
            for m in self._messages if m.kind == PLAINTEXT
        }

    def dump(self, fh: IO[str]) -> None:
        for m in self._messages:
            fh.write(json.dumps(m.to_record(), separators=(",", ":")))
            fh.write("\n")

    @classmethod
    def load(cls, fh: IO[str]) -> "ObservationLog":
        return cls(Message.from_record(json.loads(line)) for line in fh if line.strip())
