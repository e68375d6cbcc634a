#!/usr/bin/env python3
"""Converts a HAR export (mitmproxy, Charles, browser devtools) into the
flow-log JSON-lines format consumed by `netwarden merge`.

Each HAR entry becomes two lines: a request record at the entry's start time
and a response record at start time + total entry time.

Usage: har2flows.py capture.har > flows.jsonl
"""

import argparse
import json
import sys
from datetime import datetime, timezone
from urllib.parse import urlsplit

BODY_CAP = 512


def parse_started(value: str) -> float:
    # HAR uses ISO 8601; normalize the trailing Z for fromisoformat
    if value.endswith("Z"):
        value = value[:-1] + "+00:00"
    dt = datetime.fromisoformat(value)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def excerpt(text) -> str:
    if not text:
        return ""
    return str(text)[:BODY_CAP]


def convert(har: dict, client: str):
    for entry in har.get("log", {}).get("entries", []):
        try:
            started = parse_started(entry["startedDateTime"])
        except (KeyError, ValueError) as exc:
            print(f"skipping entry without a usable start time: {exc}", file=sys.stderr)
            continue
        request = entry.get("request", {})
        response = entry.get("response", {})
        url = urlsplit(request.get("url", ""))
        server = entry.get("serverIPAddress") or url.hostname or ""
        port = url.port or (443 if url.scheme == "https" else 80)
        duration_ms = float(entry.get("time", 0.0))

        yield {
            "ts": started,
            "direction": "request",
            "client": client,
            "server": server,
            "server_port": port,
            "method": request.get("method", "GET"),
            "host": url.hostname or "",
            "path": (url.path or "/") + (f"?{url.query}" if url.query else ""),
            "body_excerpt": excerpt(request.get("postData", {}).get("text")),
        }
        yield {
            "ts": started + duration_ms / 1000.0,
            "direction": "response",
            "client": client,
            "server": server,
            "server_port": port,
            "status": int(response.get("status", 0) or 0),
            "duration_ms": duration_ms,
            "body_excerpt": excerpt(response.get("content", {}).get("text")),
        }


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("har", help="HAR file to convert")
    parser.add_argument("--client", default="127.0.0.1",
                        help="client address recorded in each flow (default: 127.0.0.1)")
    args = parser.parse_args()

    with open(args.har, encoding="utf-8") as f:
        har = json.load(f)
    for record in convert(har, args.client):
        print(json.dumps(record))


if __name__ == "__main__":
    main()
