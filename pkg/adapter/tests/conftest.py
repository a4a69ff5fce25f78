import socket
import subprocess
import sys
import time

import pytest
import requests
import uvicorn

from hf_adapter.config import TINY_RANDOM, AdapterConfig
from hf_adapter.server import create_app


def free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def wait_until_up(url: str, timeout: float = 30.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        try:
            if requests.post(url + "/capabilities", json={}, timeout=2).status_code == 200:
                return
        except requests.RequestException:
            pass
        time.sleep(0.1)
    raise RuntimeError(f"server at {url} did not come up")


class UvicornThread:
    def __init__(self, app, port: int):
        self.config = uvicorn.Config(app, host="127.0.0.1", port=port, log_level="error")
        self.server = uvicorn.Server(self.config)
        import threading

        self.thread = threading.Thread(target=self.server.run, daemon=True)

    def start(self):
        self.thread.start()
        while not self.server.started:
            time.sleep(0.05)

    def stop(self):
        self.server.should_exit = True
        self.thread.join(timeout=10)


@pytest.fixture(scope="session")
def adapter_url():
    port = free_port()
    app = create_app(AdapterConfig(model_name=TINY_RANDOM, max_new_tokens=16))
    server = UvicornThread(app, port)
    server.start()
    url = f"http://127.0.0.1:{port}"
    wait_until_up(url)
    yield url
    server.stop()


@pytest.fixture(scope="session")
def toy_url():
    """The simulation framework's toy backend, started through its public CLI."""
    port = free_port()
    proc = subprocess.Popen(
        [sys.executable, "-m", "algen.cli", "serve-toy", "--port", str(port)],
        stdout=subprocess.DEVNULL,
        stderr=subprocess.DEVNULL,
    )
    url = f"http://127.0.0.1:{port}"
    try:
        wait_until_up(url)
        yield url
    finally:
        proc.terminate()
        proc.wait(timeout=10)
