from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def tiny_manifest() -> Path:
    return FIXTURES / "tinycorpus" / "manifest.json"


def write_corpus(
    root: Path,
    domains: dict[str, dict],
    language_pair: tuple[str, str] = ("en", "zh"),
) -> Path:
    """Write a corpus tree + manifest under ``root``.

    ``domains`` maps id -> {"train": [(src, tgt, align), ...],
    "test": [(src, tgt), ...]}. Returns the manifest path.
    """
    manifest = {"language_pair": list(language_pair), "domains": []}
    for domain_id, data in domains.items():
        directory = root / domain_id
        directory.mkdir(parents=True, exist_ok=True)
        train = data.get("train", [])
        test = data.get("test", [])
        (directory / "train.src").write_text(
            "".join(src + "\n" for src, _, _ in train), encoding="utf-8"
        )
        (directory / "train.tgt").write_text(
            "".join(tgt + "\n" for _, tgt, _ in train), encoding="utf-8"
        )
        (directory / "train.align").write_text(
            "".join(align + "\n" for _, _, align in train), encoding="utf-8"
        )
        (directory / "test.src").write_text(
            "".join(src + "\n" for src, _ in test), encoding="utf-8"
        )
        (directory / "test.tgt").write_text(
            "".join(tgt + "\n" for _, tgt in test), encoding="utf-8"
        )
        manifest["domains"].append(
            {
                "id": domain_id,
                "display_name": data.get("display_name", domain_id.capitalize()),
                "train_src": f"{domain_id}/train.src",
                "train_tgt": f"{domain_id}/train.tgt",
                "train_align": f"{domain_id}/train.align",
                "test_src": f"{domain_id}/test.src",
                "test_tgt": f"{domain_id}/test.tgt",
            }
        )
    manifest_path = root / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    return manifest_path


class StubChatServer:
    """Minimal OpenAI-compatible chat endpoint for client tests.

    ``responder(body) -> (status, text)`` decides each reply; request
    bodies are recorded for assertions.
    """

    def __init__(self, responder):
        self.responder = responder
        self.requests: list[dict] = []
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length).decode("utf-8"))
                stub.requests.append(body)
                status, text = stub.responder(body)
                if status == 200:
                    payload = {"choices": [{"message": {"content": text}}]}
                else:
                    payload = {"error": text}
                raw = json.dumps(payload, ensure_ascii=False).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(raw)))
                self.end_headers()
                self.wfile.write(raw)

            def log_message(self, *args):
                pass

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    @property
    def base_url(self) -> str:
        host, port = self._server.server_address
        return f"http://{host}:{port}"

    def __enter__(self):
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self._server.shutdown()
        self._server.server_close()
        return False
