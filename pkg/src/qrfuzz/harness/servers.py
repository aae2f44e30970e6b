"""Attacker server, localized nameserver hierarchy and the packet fabric between them."""

from __future__ import annotations

import socket
import socketserver
import struct
import threading
import time
from typing import Callable, Optional

from ..generator import ResponseTemplate
from ..traces import NS_TO_RESOLVER, RESOLVER_TO_NS, Packet
from ..wire import DnsMessage, DnsName, WireError, decode_message, encode_message
from .zones import ATTACKER_ADDRESS, ZoneConfig, localized_ns_answer

Handler = Callable[[bytes, bool], Optional[bytes]]


def serve_response(template: ResponseTemplate, resolver_query: DnsMessage | bytes) -> bytes:
    """Fill TXID and Question from the resolver-query and emit the template body as is.

    An undecodable query still gets an answer: TXID comes from its first two
    octets and the question section is left empty.
    """
    if isinstance(resolver_query, DnsMessage):
        msg, raw = resolver_query, None
    else:
        raw = bytes(resolver_query)
        try:
            msg = decode_message(raw)
        except WireError:
            msg = None
    if msg is not None:
        qoctets = b"".join(q.to_wire() for q in msg.questions)
        return template.render(msg.txid, qoctets, len(msg.questions))
    txid = struct.unpack("!H", raw[:2])[0] if raw and len(raw) >= 2 else 0
    return template.render(txid, b"", 0)


class LocalizedHierarchy:
    """Root, TLD and SLD servers answering from one ZoneConfig under several addresses."""

    def __init__(self, zones: ZoneConfig):
        self.zones = zones

    def addresses(self) -> list[str]:
        out: list[str] = []
        for z in self.zones.zones:
            for a in self.zones.servers_for(z):
                if a not in out:
                    out.append(a)
        return out

    def handler_for(self, address: Optional[str]) -> Handler:
        def handle(octets: bytes, tcp: bool = False) -> Optional[bytes]:
            return self.answer(octets, address)
        return handle

    def answer(self, octets: bytes, address: Optional[str] = None) -> Optional[bytes]:
        try:
            q = decode_message(octets)
        except WireError:
            return None
        if q.flags.qr:
            return None
        return encode_message(localized_ns_answer(q, self.zones, address))


class AttackerServer:
    """Answers queries for the attack domain from the armed template; forwards the rest
    to the localized hierarchy."""

    def __init__(self, base_domain: DnsName, hierarchy: Optional[LocalizedHierarchy] = None):
        self.base_domain = base_domain.lower()
        self.hierarchy = hierarchy
        self.template: Optional[ResponseTemplate] = None
        self.served = 0

    def arm(self, template: ResponseTemplate) -> None:
        self.template = template

    def disarm(self) -> None:
        self.template = None

    def owns(self, octets: bytes) -> bool:
        try:
            msg = decode_message(octets)
        except WireError:
            return True
        if not msg.questions:
            return True
        return msg.questions[0].qname.is_subdomain_of(self.base_domain)

    def handle(self, octets: bytes, tcp: bool = False) -> Optional[bytes]:
        if self.owns(octets):
            if self.template is None:
                return None
            self.served += 1
            return serve_response(self.template, octets)
        return self.hierarchy.answer(octets) if self.hierarchy is not None else None


class InProcessNetwork:
    """Address-routed request/response fabric. Unknown addresses are unreachable."""

    def __init__(self):
        self.endpoints: dict[str, Handler] = {}

    def attach(self, address: str, handler: Handler) -> None:
        self.endpoints[address] = handler

    def exchange(self, address: str, octets: bytes, journal: Optional[list] = None,
                 tcp: bool = False) -> Optional[bytes]:
        if journal is not None:
            journal.append(Packet(RESOLVER_TO_NS, time.monotonic(), octets))
        handler = self.endpoints.get(address)
        if handler is None:
            return None
        resp = handler(octets, tcp)
        if resp is not None and journal is not None:
            journal.append(Packet(NS_TO_RESOLVER, time.monotonic(), resp))
        return resp


def build_fabric(zones: ZoneConfig, base_domain: DnsName,
                 attacker_address: str = ATTACKER_ADDRESS) -> tuple[InProcessNetwork, AttackerServer, LocalizedHierarchy]:
    hierarchy = LocalizedHierarchy(zones)
    attacker = AttackerServer(base_domain, hierarchy)
    net = InProcessNetwork()
    for addr in hierarchy.addresses():
        net.attach(addr, hierarchy.handler_for(addr))
    net.attach(attacker_address, attacker.handle)
    return net, attacker, hierarchy


# --- sockets for out-of-process resolvers ----------------------------------

class DnsSocketServer:
    """UDP and TCP listener on one port dispatching to a handler; journals every packet."""

    def __init__(self, handler: Handler, host: str = "127.0.0.1", port: int = 0):
        self.handler = handler
        self.journal: list[Packet] = []
        self._lock = threading.Lock()
        outer = self

        class Udp(socketserver.BaseRequestHandler):
            def handle(self):
                data, sock = self.request
                resp = outer._dispatch(data, False)
                if resp is not None:
                    sock.sendto(resp, self.client_address)

        class Tcp(socketserver.StreamRequestHandler):
            def handle(self):
                head = self.rfile.read(2)
                if len(head) < 2:
                    return
                data = self.rfile.read(struct.unpack("!H", head)[0])
                resp = outer._dispatch(data, True)
                if resp is not None:
                    self.wfile.write(struct.pack("!H", len(resp)) + resp)

        socketserver.ThreadingUDPServer.allow_reuse_address = True
        self.udp = socketserver.ThreadingUDPServer((host, port), Udp)
        self.address = self.udp.server_address
        socketserver.ThreadingTCPServer.allow_reuse_address = True
        self.tcp = socketserver.ThreadingTCPServer(self.address, Tcp)
        self._threads: list[threading.Thread] = []

    def _dispatch(self, data: bytes, tcp: bool) -> Optional[bytes]:
        with self._lock:
            self.journal.append(Packet(RESOLVER_TO_NS, time.monotonic(), data))
        resp = self.handler(data, tcp)
        if resp is not None:
            with self._lock:
                self.journal.append(Packet(NS_TO_RESOLVER, time.monotonic(), resp))
        return resp

    def drain(self) -> list[Packet]:
        with self._lock:
            out, self.journal = self.journal, []
        return out

    def start(self) -> "DnsSocketServer":
        for srv in (self.udp, self.tcp):
            t = threading.Thread(target=srv.serve_forever, daemon=True)
            t.start()
            self._threads.append(t)
        return self

    def stop(self) -> None:
        for srv in (self.udp, self.tcp):
            srv.shutdown()
            srv.server_close()


def udp_exchange(address: tuple[str, int], octets: bytes, timeout: float) -> Optional[bytes]:
    """Send one datagram and wait for the first reply; None on timeout."""
    with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as s:
        s.settimeout(timeout)
        s.sendto(octets, address)
        try:
            data, _ = s.recvfrom(65535)
        except (socket.timeout, ConnectionRefusedError, OSError):
            return None
        return data
