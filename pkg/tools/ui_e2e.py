#!/usr/bin/env python3
"""Orchestrate the live review-loop check.

Builds a fresh pipeline run on the New Jersey fixture, serves it with
uvicorn, then drives the frontend's e2e suite against the live service.
Exit code is the vitest exit code.
"""

from __future__ import annotations

import json
import os
import socket
import subprocess
import sys
import tempfile
import time
import urllib.request
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "tests" / "fixtures"


def free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


def wait_http(url: str, timeout: float = 20.0) -> None:
    deadline = time.time() + timeout
    while time.time() < deadline:
        try:
            with urllib.request.urlopen(url, timeout=1):
                return
        except Exception:
            time.sleep(0.2)
    raise RuntimeError(f"service at {url} did not come up")


def main() -> int:
    frontend = ROOT / "frontend"
    if not (frontend / "dist" / "index.html").exists():
        subprocess.run(["npm", "run", "build"], cwd=frontend, check=True)

    with tempfile.TemporaryDirectory() as tmp:
        tmp_path = Path(tmp)
        config = {
            "level": "state",
            "metrics": ["infection", "death"],
            "sources": {"NYT": {"infection": str(FIXTURES / "nyt_states.csv"),
                                "death": str(FIXTURES / "nyt_states.csv")}},
            "offline": True,
            "out_dir": str(tmp_path / "out"),
            "decision_log": str(tmp_path / "decisions.jsonl"),
        }
        config_path = tmp_path / "config.json"
        config_path.write_text(json.dumps(config))
        subprocess.run(
            [sys.executable, "-m", "countcure.cli", "run", "--config", str(config_path)],
            cwd=ROOT, check=True, capture_output=True)

        port = free_port()
        server = subprocess.Popen(
            [sys.executable, "-m", "countcure.cli", "serve",
             "--config", str(config_path), "--port", str(port)],
            cwd=ROOT)
        try:
            base = f"http://127.0.0.1:{port}"
            wait_http(f"{base}/api/run")
            env = dict(os.environ, REVIEW_SERVICE_URL=base)
            result = subprocess.run(
                ["npx", "vitest", "run", "tests/e2e.test.ts"],
                cwd=frontend, env=env)
            return result.returncode
        finally:
            server.terminate()
            server.wait(timeout=10)


if __name__ == "__main__":
    sys.exit(main())
