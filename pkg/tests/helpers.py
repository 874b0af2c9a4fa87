"""Builders and process harness shared across the test suite."""

import json
import os
import select
import socket
import subprocess
import sys
import time
import urllib.error
import urllib.request

from hyperwire.events import Domain, EventType, Kind, Mode
from hyperwire.solver import Derivation, Wiring

SOLVER_KINDS = [Kind.AXIS, Kind.ROTATION, Kind.POSITION, Kind.BUTTON]


def random_instance(rng, catalog):
    """A small random search instance drawn from the given catalog."""
    types = set()
    while len(types) < rng.randint(2, 8):
        k = rng.choice(SOLVER_KINDS)
        arity = 1 if k is Kind.BUTTON else rng.randint(1, 3)
        domain = Domain.DISCRETE if k is Kind.BUTTON else rng.choice(
            [Domain.UNIT_SIGNED, Domain.UNIT_UNSIGNED])
        mode = rng.choice([Mode.ABSOLUTE, Mode.RELATIVE])
        types.add(EventType(k, arity, domain, mode))
    types = sorted(types, key=lambda t: t.canonical())
    pool = [op for op in catalog
            if all(t in types for t in op.inputs)
            and all(t in types for t in op.outputs)]
    rng.shuffle(pool)
    ops = pool[: rng.randint(0, min(10, len(pool)))]
    caps = [(f"c{i}", rng.choice(types)) for i in range(rng.randint(1, 4))]
    return caps, ops, rng.choice(types)

AX1 = EventType(Kind.AXIS, 1, Domain.UNIT_SIGNED, Mode.ABSOLUTE)
AX2 = EventType(Kind.AXIS, 2, Domain.UNIT_SIGNED, Mode.ABSOLUTE)
ROT1 = EventType(Kind.ROTATION, 1, Domain.UNIT_SIGNED, Mode.ABSOLUTE)
ROT1R = EventType(Kind.ROTATION, 1, Domain.UNIT_SIGNED, Mode.RELATIVE)
ROT3 = EventType(Kind.ROTATION, 3, Domain.UNIT_SIGNED, Mode.ABSOLUTE)

SPLIT2 = "split:axis/2/unit_signed/absolute"
A2R = "cast:axis_to_rotation:rotation/1/unit_signed/absolute"
R2ABS = "cast:relative_to_absolute:rotation/1/unit_signed/absolute"
MERGE3 = "merge:rotation/3/unit_signed/absolute"


def dpad_stick_wiring(stick_relative=False, dpad="d1.dpad", stick="d2.stick",
                      requirement_id="rotation3d"):
    """Merge of both d-pad lanes (as rotations) with a stick lane."""
    pad = Derivation.leaf(dpad, AX2)
    x = Derivation.node(A2R, 0, ROT1, (Derivation.node(SPLIT2, 0, AX1, (pad,)),))
    y = Derivation.node(A2R, 0, ROT1, (Derivation.node(SPLIT2, 1, AX1, (pad,)),))
    if stick_relative:
        lane = Derivation.node(R2ABS, 0, ROT1, (Derivation.leaf(stick, ROT1R),))
    else:
        lane = Derivation.leaf(stick, ROT1)
    root = Derivation.node(MERGE3, 0, ROT3, (x, y, lane))
    return Wiring(requirement_id, root, 0)


def dpad_stick_caps(stick_relative=False):
    return [("d1.dpad", AX2), ("d2.stick", ROT1R if stick_relative else ROT1)]


# ---------------------------------------------------------------- processes

HW = [sys.executable, "-m", "hyperwire"]


def free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def wait_port(port, deadline=10.0):
    end = time.monotonic() + deadline
    while time.monotonic() < end:
        try:
            with socket.create_connection(("127.0.0.1", port), timeout=0.5):
                return
        except OSError:
            time.sleep(0.05)
    raise TimeoutError(f"port {port} never opened")


def get_state(http_port):
    with urllib.request.urlopen(
            f"http://127.0.0.1:{http_port}/v1/state", timeout=5) as res:
        return json.load(res)


def poll_state(http_port, pred, deadline=10.0):
    end = time.monotonic() + deadline
    while time.monotonic() < end:
        try:
            snap = get_state(http_port)
            if pred(snap):
                return snap
        except (urllib.error.URLError, ConnectionError, TimeoutError):
            pass
        time.sleep(0.05)
    raise TimeoutError("state condition never met")


def post_apply(http_port, body):
    req = urllib.request.Request(
        f"http://127.0.0.1:{http_port}/v1/wirings/apply",
        data=json.dumps(body).encode(), method="POST",
        headers={"Content-Type": "application/json"})
    with urllib.request.urlopen(req, timeout=5) as res:
        return res.status, json.load(res)


def read_lines(proc, n, deadline=15.0):
    """Read n stdout lines from a subprocess without blocking forever."""
    os.set_blocking(proc.stdout.fileno(), False)
    buf = b""
    end = time.monotonic() + deadline
    while buf.count(b"\n") < n:
        if time.monotonic() > end:
            raise TimeoutError(f"wanted {n} lines, got {buf!r}")
        ready, _, _ = select.select([proc.stdout], [], [], 0.2)
        if ready:
            chunk = proc.stdout.read()
            if chunk:
                buf += chunk
    return buf.decode().splitlines()[:n]


class Pipeline:
    """serve + scripted devices + demo app, cleaned up reliably."""

    def __init__(self, tmp_path):
        self.tmp = tmp_path
        self.port = free_port()
        self.http = free_port()
        self.procs = []

    def spawn(self, *args, stdout=subprocess.DEVNULL):
        proc = subprocess.Popen(HW + list(args), stdout=stdout,
                                stderr=subprocess.DEVNULL)
        self.procs.append(proc)
        return proc

    def start_broker(self):
        self.spawn("serve", "--listen", f"127.0.0.1:{self.port}",
                   "--http", f"127.0.0.1:{self.http}",
                   "--profiles", str(self.tmp / "profiles"))
        wait_port(self.port)
        wait_port(self.http)

    def script(self, name, steps):
        path = self.tmp / name
        path.write_text(json.dumps(steps))
        return str(path)

    def shutdown(self):
        for proc in reversed(self.procs):
            if proc.poll() is None:
                proc.terminate()
        for proc in self.procs:
            try:
                proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                proc.kill()
