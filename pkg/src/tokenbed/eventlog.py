"""Append-only in-memory event log with a dump-to-file option.

One line per event, tab-separated:
    sim_time <TAB> service <TAB> event_code <TAB> token_digest_hex_or_dash <TAB> detail
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional


@dataclass(frozen=True)
class LogEvent:
    time: int
    service: str
    code: str
    token_digest: Optional[bytes]
    detail: str

    def line(self) -> str:
        digest = self.token_digest.hex() if self.token_digest else "-"
        return f"{self.time}\t{self.service}\t{self.code}\t{digest}\t{self.detail}"


class EventLog:
    """Shared, append-only log; every service in a world writes here."""

    def __init__(self):
        self.events: list[LogEvent] = []

    def log(self, time: int, service: str, code: str,
            token_digest: Optional[bytes] = None, detail: str = "") -> None:
        # tabs/newlines would break the line format
        detail = detail.replace("\t", " ").replace("\n", " ")
        self.events.append(LogEvent(time, service, code, token_digest, detail))

    def lines(self) -> list[str]:
        return [e.line() for e in self.events]

    def for_service(self, service: str) -> list[LogEvent]:
        return [e for e in self.events if e.service == service]

    def dump(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for line in self.lines():
                fh.write(line + "\n")
