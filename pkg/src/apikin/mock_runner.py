"""Scripted replay runner speaking the wire protocol over stdin/stdout.

Run as `python -m apikin.mock_runner <script.jsonl>`. Unlike the in-process
mock session, sleep behaviors really sleep and die behaviors really exit
without a response, so host-side timeout and crash handling can be exercised
over actual pipes.
"""

from __future__ import annotations

import json
import os
import sys
import time

from .runner import MockEntry, encode_hello, fingerprint_of_source, load_mock_script


def serve(script_path: str) -> int:
    script = load_mock_script(script_path)
    out = sys.stdout
    out.write(encode_hello(["time", "memory"], dialect="mock") + "\n")
    out.flush()
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        request = json.loads(line)
        case_id = request.get("case_id", "")
        fp = fingerprint_of_source(str(request.get("source", "")))
        entry = None
        if fp is not None:
            entry = script.lookup(fp[0], fp[1])
        if entry is None:
            entry = script.default or MockEntry(response={"status": "completed"})
        if entry.behavior == "die":
            os._exit(13)
        if entry.behavior == "sleep":
            time.sleep(entry.sleep_s)
        response = dict(entry.response)
        response["case_id"] = case_id
        response.setdefault("status", "completed")
        out.write(json.dumps(response, sort_keys=True) + "\n")
        out.flush()
    return 0


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 1:
        print("usage: python -m apikin.mock_runner <script.jsonl>", file=sys.stderr)
        return 2
    return serve(argv[0])


if __name__ == "__main__":
    sys.exit(main())
