"""Shared PASS/FAIL ledger for the acceptance suite (printed in the summary)."""

import contextlib

LINES = []


class Outcome:
    def __init__(self, n, title):
        self.n, self.title, self.notes = n, title, []

    def note(self, msg):
        self.notes.append(msg)

    def line(self, ok, extra=None):
        notes = "; ".join(self.notes + ([extra] if extra else []))
        return f"{'PASS' if ok else 'FAIL'} criterion {self.n}: {self.title}" + (f" ({notes})" if notes else "")


@contextlib.contextmanager
def criterion(n, title):
    out = Outcome(n, title)
    try:
        yield out
    except BaseException as e:
        msg = str(e).strip().splitlines()[0] if str(e).strip() else type(e).__name__
        line = out.line(False, msg[:200])
        LINES.append(line)
        print(line)
        raise
    line = out.line(True)
    LINES.append(line)
    print(line)
