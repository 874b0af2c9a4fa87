"""Broker over real TCP: handshakes, announcements, routing, liveness."""

import asyncio
import struct

import pytest

from helpers import dpad_stick_wiring
from hyperwire import protocol as p
from hyperwire.broker import Broker
from hyperwire.solver import wiring_to_json

RECV_TIMEOUT = 3.0


class Client:
    """Raw wire-protocol test peer."""

    def __init__(self, reader, writer):
        self.reader = reader
        self.writer = writer

    @classmethod
    async def connect(cls, port):
        reader, writer = await asyncio.open_connection("127.0.0.1", port)
        return cls(reader, writer)

    async def send(self, m):
        await p.write_frame(self.writer, m)

    async def send_raw(self, body: bytes):
        self.writer.write(struct.pack("!I", len(body)) + body)
        await self.writer.drain()

    async def recv(self):
        return await asyncio.wait_for(p.read_frame(self.reader), RECV_TIMEOUT)

    async def join(self, role, name=""):
        await self.send(p.hello(role, name))
        m = await self.recv()
        assert m["t"] == "WELCOME", m
        return m["assigned_id"]

    async def closed(self) -> bool:
        try:
            return await self.recv() is None
        except (p.ProtocolError, ConnectionError):
            return True

    def close(self):
        self.writer.close()


def run(scenario, **broker_kwargs):
    """Start a broker on an ephemeral port, run the scenario, tear down."""
    async def go():
        broker = Broker(**broker_kwargs)
        await broker.start("127.0.0.1", 0)
        try:
            return await scenario(broker, broker.address[1])
        finally:
            await broker.stop()
    return asyncio.run(asyncio.wait_for(go(), 30))


GAMEPAD_CAPS = [{"id": "dpad", "type": "axis/2/unit_signed/absolute"}]
STICK_CAPS = [{"id": "stick", "type": "rotation/1/unit_signed/absolute"}]
ROT3_REQ = [{"id": "rotation3d", "type": "rotation/3/unit_signed/absolute",
             "label": "camera"}]


async def wire_up(port):
    """Two devices + one app with the merge wiring applied over the wire."""
    d1 = await Client.connect(port)
    assert await d1.join("device", "pad") == "d1"
    await d1.send(p.announce_caps(GAMEPAD_CAPS))
    d2 = await Client.connect(port)
    assert await d2.join("device", "stick") == "d2"
    await d2.send(p.announce_caps(STICK_CAPS))
    app = await Client.connect(port)
    assert await app.join("app", "demo") == "a1"
    await app.send(p.announce_reqs(ROT3_REQ))
    await app.send(p.wiring_set("rotation3d",
                                wiring_to_json(dpad_stick_wiring())))
    return d1, d2, app


class TestHandshake:
    def test_hello_gets_welcome_and_registration(self):
        async def scenario(broker, port):
            c = await Client.connect(port)
            peer = await c.join("device", "pad")
            assert peer == "d1"
            assert broker.registry.devices["d1"].name == "pad"
            c.close()
        run(scenario)

    def test_roles_get_distinct_id_spaces(self):
        async def scenario(broker, port):
            ids = []
            for role in ("device", "app", "ui"):
                c = await Client.connect(port)
                ids.append(await c.join(role))
            assert ids == ["d1", "a1", "u1"]
        run(scenario)

    def test_event_before_hello_is_refused(self):
        async def scenario(broker, port):
            c = await Client.connect(port)
            await c.send(p.event_msg(capability_id="x",
                                     type="axis/1/unit_signed/absolute",
                                     ts_ns=0, payload=[0.0]))
            m = await c.recv()
            assert m["t"] == "ERROR" and m["code"] == "handshake"
            assert await c.closed()
        run(scenario)

    def test_version_mismatch_is_refused(self):
        async def scenario(broker, port):
            c = await Client.connect(port)
            await c.send_raw(b'{"t":"HELLO","v":2}')
            m = await c.recv()
            assert m["t"] == "ERROR" and m["code"] == "version"
            assert await c.closed()
        run(scenario)

    def test_garbage_first_frame_is_refused(self):
        async def scenario(broker, port):
            c = await Client.connect(port)
            await c.send_raw(b"{nope")
            m = await c.recv()
            assert m["t"] == "ERROR" and m["code"] == "json"
            assert await c.closed()
        run(scenario)

    def test_stalled_client_times_out(self):
        async def scenario(broker, port):
            c = await Client.connect(port)
            m = await c.recv()  # no HELLO sent
            assert m["t"] == "ERROR" and m["code"] == "handshake"
            assert await c.closed()
        run(scenario, handshake_timeout=0.2)


class TestAnnounce:
    def test_capabilities_become_visible(self):
        async def scenario(broker, port):
            c = await Client.connect(port)
            await c.join("device", "pad")
            await c.send(p.announce_caps(GAMEPAD_CAPS))
            await c.send(p.heartbeat())  # fence: processed in order
            await asyncio.sleep(0.05)
            assert [str(t) for _, t in broker.registry.live_capabilities()] == \
                ["axis/2/unit_signed/absolute"]
        run(scenario)

    def test_reannounce_replaces_and_degrades_missing(self):
        async def scenario(broker, port):
            d1, d2, app = await wire_up(port)
            await asyncio.sleep(0.05)
            assert len(broker.router.wirings) == 1
            await d2.send(p.announce_caps([]))  # stick withdrawn
            await asyncio.sleep(0.05)
            stats = broker.router.stats()["wirings"]
            assert [w["status"] for w in stats.values()] == ["degraded"]
        run(scenario)

    def test_caps_from_app_refused(self):
        async def scenario(broker, port):
            c = await Client.connect(port)
            await c.join("app")
            await c.send(p.announce_caps(GAMEPAD_CAPS))
            m = await c.recv()
            assert m["t"] == "ERROR" and m["code"] == "schema"
        run(scenario)


class TestEventFlow:
    def test_end_to_end_delivery(self):
        async def scenario(broker, port):
            d1, d2, app = await wire_up(port)
            await d1.send(p.event_msg(capability_id="dpad",
                                      type="axis/2/unit_signed/absolute",
                                      ts_ns=7, payload=[0.5, -0.5]))
            m = await app.recv()
            assert m == p.event_msg(requirement_id="rotation3d",
                                    type="rotation/3/unit_signed/absolute",
                                    ts_ns=7, payload=[0.5, -0.5, 0.0])
        run(scenario)

    def test_merge_remembers_other_device(self):
        async def scenario(broker, port):
            d1, d2, app = await wire_up(port)
            await d2.send(p.event_msg(capability_id="stick",
                                      type="rotation/1/unit_signed/absolute",
                                      ts_ns=1, payload=[0.25]))
            m = await app.recv()
            assert m["payload"] == [0.0, 0.0, 0.25]
            await d1.send(p.event_msg(capability_id="dpad",
                                      type="axis/2/unit_signed/absolute",
                                      ts_ns=2, payload=[0.5, -0.5]))
            m = await app.recv()
            assert m["payload"] == [0.5, -0.5, 0.25]
        run(scenario)

    def test_unannounced_capability_is_an_error(self):
        async def scenario(broker, port):
            d1, d2, app = await wire_up(port)
            await d1.send(p.event_msg(capability_id="wheel",
                                      type="axis/1/unit_signed/absolute",
                                      ts_ns=0, payload=[0.1]))
            m = await d1.recv()
            assert m["t"] == "ERROR" and m["code"] == "schema"
        run(scenario)

    def test_arity_mismatch_gets_error_and_session_survives(self):
        async def scenario(broker, port):
            d1, d2, app = await wire_up(port)
            bad = (b'{"capability_id":"dpad","payload":[0.5],"t":"EVENT",'
                   b'"ts_ns":0,"type":"axis/2/unit_signed/absolute","v":1}')
            await d1.send_raw(bad)
            m = await d1.recv()
            assert m["t"] == "ERROR" and m["code"] == "schema"
            await d1.send(p.event_msg(capability_id="dpad",
                                      type="axis/2/unit_signed/absolute",
                                      ts_ns=9, payload=[0.1, 0.2]))
            m = await app.recv()  # same connection still routes
            assert m["ts_ns"] == 9
        run(scenario)

    def test_out_of_domain_payload_is_an_error(self):
        async def scenario(broker, port):
            d1, d2, app = await wire_up(port)
            await d1.send(p.event_msg(capability_id="dpad",
                                      type="axis/2/unit_signed/absolute",
                                      ts_ns=0, payload=[3.0, 0.0]))
            m = await d1.recv()
            assert m["t"] == "ERROR" and m["code"] == "schema"
        run(scenario)

    def test_fifo_order_preserved(self):
        async def scenario(broker, port):
            d1, d2, app = await wire_up(port)
            for i in range(20):
                await d1.send(p.event_msg(capability_id="dpad",
                                          type="axis/2/unit_signed/absolute",
                                          ts_ns=i, payload=[(i % 10) / 10, 0.0]))
            got = [(await app.recv())["ts_ns"] for _ in range(20)]
            assert got == list(range(20))
        run(scenario)


class TestWiringSet:
    def test_invalid_wiring_is_refused(self):
        async def scenario(broker, port):
            app = await Client.connect(port)
            await app.join("app", "demo")
            await app.send(p.announce_reqs(ROT3_REQ))
            await app.send(p.wiring_set(
                "rotation3d", wiring_to_json(dpad_stick_wiring())))
            m = await app.recv()  # no such devices announced
            assert m["t"] == "ERROR" and m["code"] == "wiring"
            assert broker.router.wirings == {}
        run(scenario)

    def test_unknown_requirement_is_refused(self):
        async def scenario(broker, port):
            d1 = await Client.connect(port)
            await d1.join("device")
            await d1.send(p.announce_caps(GAMEPAD_CAPS))
            app = await Client.connect(port)
            await app.join("app", "demo")
            await app.send(p.announce_reqs(ROT3_REQ))
            await app.send(p.wiring_set("nope",
                                        wiring_to_json(dpad_stick_wiring())))
            m = await app.recv()
            assert m["t"] == "ERROR" and m["code"] == "wiring"
        run(scenario)

    def test_replacement_swaps_the_slot(self):
        async def scenario(broker, port):
            d1, d2, app = await wire_up(port)
            await app.send(p.wiring_set("rotation3d",
                                        wiring_to_json(dpad_stick_wiring())))
            await app.send(p.heartbeat())
            await asyncio.sleep(0.05)
            assert len(broker.router.wirings) == 1  # replaced, not stacked
            assert broker.router.version == 2
        run(scenario)


class FakeClock:
    def __init__(self):
        self.t = 0.0

    def now(self):
        return self.t


class TestLiveness:
    def test_silent_device_swept(self):
        clock = FakeClock()

        async def scenario(broker, port):
            c = await Client.connect(port)
            await c.join("device", "pad")
            clock.t = 3.1
            await asyncio.sleep(0.1)  # several sweep intervals
            assert broker.registry.devices == {}
            assert await c.closed()
        run(scenario, clock=clock.now, sweep_interval=0.02)

    def test_heartbeats_keep_peer_alive(self):
        clock = FakeClock()

        async def scenario(broker, port):
            c = await Client.connect(port)
            await c.join("device", "pad")
            for _ in range(3):
                clock.t += 2.0
                await c.send(p.heartbeat())
                await asyncio.sleep(0.05)
            assert "d1" in broker.registry.devices
        run(scenario, clock=clock.now, sweep_interval=0.02)

    def test_device_disconnect_degrades_wirings(self):
        async def scenario(broker, port):
            d1, d2, app = await wire_up(port)
            await asyncio.sleep(0.05)
            d2.close()
            await asyncio.sleep(0.1)
            stats = broker.router.stats()["wirings"]
            assert [w["status"] for w in stats.values()] == ["degraded"]
            assert "d2" not in broker.registry.devices
        run(scenario)

    def test_app_disconnect_removes_its_wirings(self):
        async def scenario(broker, port):
            d1, d2, app = await wire_up(port)
            await asyncio.sleep(0.05)
            assert len(broker.router.wirings) == 1
            app.close()
            await asyncio.sleep(0.1)
            assert broker.router.wirings == {}
            assert broker.slots == {}
        run(scenario)


class TestProfiles:
    def test_wiring_restored_on_reconnect(self, tmp_path):
        async def scenario(broker, port):
            d1, d2, app = await wire_up(port)
            await asyncio.sleep(0.05)
            assert len(broker.router.wirings) == 1
            app.close()
            await asyncio.sleep(0.1)
            assert broker.router.wirings == {}
            fresh = await Client.connect(port)
            assert await fresh.join("app", "demo") == "a2"
            await fresh.send(p.announce_reqs(ROT3_REQ))
            await fresh.send(p.heartbeat())
            await asyncio.sleep(0.1)
            assert len(broker.router.wirings) == 1  # same choice, no WIRING_SET
            assert broker.slots == {("a2", "rotation3d"): "w2"}
        run(scenario, profiles_dir=str(tmp_path))

    def test_restore_skipped_when_device_gone(self, tmp_path):
        async def scenario(broker, port):
            d1, d2, app = await wire_up(port)
            await asyncio.sleep(0.05)
            app.close()
            d2.close()
            await asyncio.sleep(0.1)
            fresh = await Client.connect(port)
            await fresh.join("app", "demo")
            await fresh.send(p.announce_reqs(ROT3_REQ))
            await fresh.send(p.heartbeat())
            await asyncio.sleep(0.1)
            assert broker.router.wirings == {}  # stored wiring cannot fit now
        run(scenario, profiles_dir=str(tmp_path))
